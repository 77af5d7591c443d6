import numpy as np
import pytest

from anharmonic_probe import dynamics as dyn
from anharmonic_probe import oracle as orc
from anharmonic_probe.dynamics import CUBIC, HARMONIC, QUARTIC, ProtocolParams
from anharmonic_probe.errors import DimensionCap, TruncationError
from anharmonic_probe.fock import FockVector, coherent_vector, fidelity


def test_harmonic_loop_is_kerr_map():
    p = ProtocolParams(lam=0.2, alpha=1.5, dim_c=20, dim_m=30)
    run = orc.run_protocol(p, HARMONIC)
    n = np.arange(20)
    target = coherent_vector(1.5, 20).amp * np.exp(1j * 0.04 * n ** 2)
    assert run.diagnostics["map_fidelity"] >= 1 - 1e-8
    assert abs(fidelity(run.reduced_field, FockVector(target)) - 1) < 1e-8
    assert abs(run.diagnostics["field_purity"] - 1) < 1e-10
    assert abs(run.visibility - 1) < 1e-10


@pytest.mark.parametrize("kind", [QUARTIC, CUBIC])
def test_oracle_state_is_valid_density(kind):
    p = ProtocolParams(lam=0.15, alpha=1.2, nbar=0.3, dim_c=15, dim_m=30).with_strength(kind, 2e-3)
    run = orc.run_protocol(p, kind)
    assert abs(run.final_joint.trace - 1) < 1e-9
    assert run.reduced_field.is_valid(tol=1e-9)
    assert run.mech_state.is_valid(tol=1e-9)
    # diagonal of the channel is trace preservation for every photon number
    np.testing.assert_allclose(np.diag(run.channel), 1.0, atol=1e-10)


def test_channel_is_phase_of_effective_map_at_small_strength():
    p = ProtocolParams(lam=0.1, gamma=1e-4, alpha=1.0, dim_c=15, dim_m=20)
    run = orc.run_protocol(p, QUARTIC)
    assert run.diagnostics["map_fidelity"] > 1 - 1e-6


def test_energy_gap_shift():
    h = orc.build_hamiltonian(QUARTIC, 1e-3, 1.0, 40)
    for n in range(4):
        shift = orc.energy_gap_check(h, n) - 1.0
        assert shift == pytest.approx(0.75e-3 * (n + 1), rel=0.02)
    with pytest.raises(TruncationError):
        orc.energy_gap_check(h, 35)


def test_hamiltonian_validation():
    with pytest.raises(ValueError):
        orc.build_hamiltonian("sextic", 1.0, 1.0, 20)
    with pytest.raises(ValueError):
        orc.build_hamiltonian(QUARTIC, 1.0, 1.0, 4)


def test_dimension_cap():
    p = ProtocolParams(lam=0.1, gamma=1e-3, alpha=1.0, dim_c=50, dim_m=50)
    with pytest.raises(DimensionCap):
        orc.run_protocol(p, QUARTIC)


def test_mistimed_loop_entangles():
    p = ProtocolParams(lam=0.3, alpha=1.0, dim_c=15, dim_m=30)
    closed = orc.run_protocol(p, HARMONIC)
    open_ = orc.run_protocol(p, HARMONIC, tau=2 * np.pi * 1.05)
    assert open_.diagnostics["field_purity"] < closed.diagnostics["field_purity"] - 1e-4
    assert open_.visibility < closed.visibility


def test_loss_sweep_rows():
    p = ProtocolParams(lam=0.1, alpha=2, nbar=0.1, gamma=5e-4, dim_c=25, dim_m=30)
    rows = orc.loss_sweep(p, [0.0, 0.01, 0.05], QUARTIC)
    base = orc.run_protocol(p, QUARTIC)
    assert rows[0].field_purity == pytest.approx(base.diagnostics["field_purity"], abs=1e-12)
    purities = [r.field_purity for r in rows]
    assert purities[0] > purities[1] > purities[2]
    for r in rows:
        assert r.harmonic_deviation < 1e-10
        assert r.expectation_deviation < 1e-8
    assert set(rows[0].as_row()) >= {"epsilon", "field_purity", "anharmonic_phase"}
