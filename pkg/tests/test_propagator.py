import numpy as np
import pytest
import scipy.linalg as la
from hypothesis import given
from hypothesis import strategies as st

from floqchain.hamiltonian import build_effective_hamiltonian, build_lab_hamiltonian
from floqchain.model import DeviceSpec, DrivePattern, build_basis, paper_device, product_state
from oracles import SINGLE_EXCITATION_FROZEN, single_excitation
from floqchain.propagator import (
    ConvergenceError,
    IntegratorConfig,
    check_step_halving,
    echo_fidelity,
    evolve,
    propagate,
    propagate_array,
    step_halving_drift,
    taylor_expm_action,
)

def test_rabi_half_swap():
    dev = DeviceSpec([10.72])
    ham = build_effective_hamiltonian(dev, DrivePattern.undriven(2), basis=build_basis(2, 2, 1))
    out = propagate(product_state(ham.basis, "01"), ham, 1e3 / (4 * 10.72))
    assert abs(out.amplitudes[ham.basis.index((1, 0))]) ** 2 == pytest.approx(1.0, abs=1e-6)


def test_zero_duration_is_identity():
    dev = paper_device().subchain(0, 3)
    ham = build_lab_hamiltonian(dev, DrivePattern.staggered(3, 100.0))
    psi = product_state(ham.basis, "010")
    traj = evolve(psi, ham, 5.0, 5.0)
    assert np.array_equal(traj.final.amplitudes, psi.amplitudes)
    assert propagate(psi, ham, 0.0) is psi


@pytest.mark.parametrize("frame", ["lab", "effective"])
def test_single_excitation_matches_dense_eigensolver(frame):
    dev = paper_device().without_nnn()
    basis = build_basis(10, 2, 1)
    drive = DrivePattern.undriven(10)
    ham = (build_lab_hamiltonian(dev, drive, basis=basis) if frame == "lab"
           else build_effective_hamiltonian(dev, drive, basis=basis))
    psi = product_state(basis, "1000000000")
    for t, frozen in SINGLE_EXCITATION_FROZEN.items():
        amps = propagate(psi, ham, t).amplitudes
        pops = np.array([abs(amps[basis.index(tuple(int(k == j) for k in range(10)))]) ** 2 for j in range(10)])
        assert np.max(np.abs(pops - single_excitation(dev.nn_couplings, t))) < 1e-6
        assert np.max(np.abs(pops - frozen)) < 1e-6


def test_echo_fidelity_cases():
    basis = build_basis(3, 2)
    a = product_state(basis, "010")
    b = product_state(basis, "100")
    assert echo_fidelity(a, a) == pytest.approx(1.0)
    assert echo_fidelity(a, b) == 0.0


def test_exact_reversal_under_effective_model():
    dev = paper_device()
    basis = build_basis(10, 2, 5)
    ham = build_effective_hamiltonian(dev, DrivePattern.staggered(10, 213.6), basis=basis)
    psi = product_state(basis, "1010101010")
    there = propagate(psi, ham, 125.0)
    back = propagate(there, ham.negated(), 125.0)
    assert echo_fidelity(psi, back) > 1 - 1e-6
    assert echo_fidelity(psi, there) < 0.9


@given(st.floats(0.0, 450.0), st.sampled_from(["commutator_free_magnus4", "piecewise_exponential_midpoint", "rk4"]))
def test_norm_preserved(eps, method):
    dev = paper_device(3).subchain(0, 3)
    ham = build_lab_hamiltonian(dev, DrivePattern.staggered(3, eps), basis=build_basis(3, 3, 2))
    dt = ham.period / 512 if method == "rk4" else None  # explicit RK4 needs a finer step to stay unitary
    traj = evolve(product_state(ham.basis, "101"), ham, 0.0, 40.0, IntegratorConfig(method=method, dt=dt))
    assert np.max(np.abs(traj.norms() - 1.0)) < 1e-8
    assert np.all(np.diff(traj.times) > 0)


@pytest.mark.parametrize("method", ["commutator_free_magnus4", "rk4"])
def test_energy_conserved_for_static_hamiltonian(method):
    dev = paper_device()
    basis = build_basis(10, 2, 3)
    ham = build_effective_hamiltonian(dev, DrivePattern.staggered(10, 300.0), True, True, basis=basis)
    h = ham.matrix
    psi = np.zeros(basis.dim, complex)
    psi[[0, 7, 40]] = [0.6, 0.64j, 0.48]
    psi /= np.linalg.norm(psi)
    cfg = IntegratorConfig(method=method, dt=0.05 if method == "rk4" else None, stride=50)
    _, stack = propagate_array(psi, ham, 0.0, 500.0, cfg, sample_times=True)
    energies = np.real(np.einsum("ti,ti->t", stack.conj(), (h @ stack.T).T))
    assert np.max(np.abs(energies - energies[0])) < 1e-6 * ham.static_norm


def test_sector_evolution_equals_projected_full_evolution():
    dev = paper_device(3).subchain(0, 4)
    drive = DrivePattern.staggered(4, 250.0)
    full = build_basis(4, 3)
    sector = build_basis(4, 3, 2)
    h_full = build_lab_hamiltonian(dev, drive, basis=full)
    h_sec = build_lab_hamiltonian(dev, drive, basis=sector)
    out_full = propagate(product_state(full, "1010"), h_full, 30.0).amplitudes
    out_sec = propagate(product_state(sector, "1010"), h_sec, 30.0).amplitudes
    idx = [full.index(sector.occupation(i)) for i in range(sector.dim)]
    assert np.max(np.abs(out_full[idx] - out_sec)) < 1e-9
    assert np.linalg.norm(np.delete(out_full, idx)) < 1e-9


@given(st.floats(0.05, 1.0), st.floats(-1.0, 1.0))
def test_taylor_action_matches_expm(norm_dt, c):
    dev = paper_device(3).subchain(0, 3)
    ham = build_lab_hamiltonian(dev, DrivePattern.staggered(3, 200.0), basis=build_basis(3, 3, 2))
    mat = ham.static.toarray() + np.diag(c * ham.drive_diagonal)
    h = norm_dt / np.abs(mat).sum(axis=0).max()
    v = np.random.default_rng(0).normal(size=ham.basis.dim) + 0j
    v /= np.linalg.norm(v)
    exact = la.expm(-1j * h * mat) @ v
    assert np.linalg.norm(taylor_expm_action(ham, v, h, c) - exact) < 1e-9


def test_integrators_agree_and_orders_differ():
    dev = paper_device().subchain(0, 4)
    ham = build_lab_hamiltonian(dev, DrivePattern.staggered(4, 213.6), basis=build_basis(4, 2, 2))
    psi = product_state(ham.basis, "1010").amplitudes

    def run(method, dt):
        return propagate_array(psi, ham, 0.0, 50.0, IntegratorConfig(method, dt))

    reference = run("rk4", ham.period / 1024)
    cf4 = run("commutator_free_magnus4", ham.period / 64)
    mid = run("piecewise_exponential_midpoint", ham.period / 64)
    assert np.linalg.norm(cf4 - reference) < 1e-5
    assert np.linalg.norm(mid - reference) > 10 * np.linalg.norm(cf4 - reference)


def test_step_halving_check():
    dev = paper_device().subchain(0, 4)
    ham = build_lab_hamiltonian(dev, DrivePattern.staggered(4, 400.0), basis=build_basis(4, 2, 1))
    psi = product_state(ham.basis, "1000").amplitudes

    def observable(cfg):
        return np.abs(propagate_array(psi, ham, 0.0, 100.0, cfg)) ** 2

    cfg = IntegratorConfig()
    assert check_step_halving(observable, cfg, ham) < 1e-4
    mid = IntegratorConfig("piecewise_exponential_midpoint", ham.period / 32)
    assert step_halving_drift(observable, mid, ham) > 1e-4
    with pytest.raises(ConvergenceError):
        check_step_halving(observable, mid, ham)


def test_config_validation():
    ham = build_lab_hamiltonian(paper_device().subchain(0, 2), DrivePattern.staggered(2, 100.0))
    with pytest.raises(ValueError):
        IntegratorConfig(method="euler")
    with pytest.raises(ValueError):
        IntegratorConfig(dt=-1.0)
    with pytest.raises(ValueError):
        IntegratorConfig(dt=ham.period / 16).resolve(ham)
    dt, stride = IntegratorConfig().resolve(ham)
    assert dt == pytest.approx(ham.period / 64) and stride == 64
