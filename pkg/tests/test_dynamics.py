import csv
import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from sitecurrent.dynamics import (
    IntegratorConfig,
    QuantumState,
    apply_rotation,
    evolve,
    fock_state,
    liouvillian,
    reduced_density,
    thermal_product_state,
)
from sitecurrent.fockspace import lattice_basis, number_op
from sitecurrent.measurement import current_operator
from sitecurrent.model import (
    BathSpec,
    LatticeSpec,
    bose_hubbard_hamiltonian,
    collapse_operators,
    lattice_hamiltonian_td,
    mhz,
)

J = mhz(5.8)


def test_thermal_product_state():
    b = lattice_basis(4)
    st_ = thermal_product_state(LatticeSpec(4, n_th=0.06), b)
    rho = st_.density()
    assert rho[0, 0].real == pytest.approx(0.94**4)
    assert rho[0, 0].real == pytest.approx(0.781, abs=1e-3)
    assert np.trace(rho).real == pytest.approx(1.0, abs=1e-15)
    pure = thermal_product_state(LatticeSpec(4), b).density()
    assert pure[0, 0] == 1 and np.count_nonzero(pure) == 1


def test_thermal_state_includes_resonators():
    b = lattice_basis(2, resonator_sites=[0])
    bath = BathSpec("drain", 0, 1.0, n_th_res=0.02)
    rho = thermal_product_state(LatticeSpec(2), b, [bath]).density()
    assert rho[b.index((0, 0, 1)), b.index((0, 0, 1))].real == pytest.approx(0.02)


def test_state_validation():
    b = lattice_basis(2)
    with pytest.raises(ValueError):
        QuantumState(np.ones(4), b)
    with pytest.raises(ValueError):
        QuantumState(np.diag([0.5, 0.5, 0.5, 0.0]), b)
    with pytest.raises(ValueError):
        QuantumState(np.diag([1.2, -0.2, 0, 0]), b)
    with pytest.raises(ValueError):
        QuantumState(np.ones(3) / math.sqrt(3), b)


def test_rotations():
    b = lattice_basis(2)
    s = apply_rotation(fock_state(b, (0, 0)), 0, "x", math.pi)
    assert abs(s.data[b.index((1, 0))]) == pytest.approx(1.0)
    s = apply_rotation(fock_state(b, (0, 0)), 0, "x", math.radians(127))
    assert s.populations()[b.index((1, 0))] == pytest.approx(math.sin(math.radians(63.5)) ** 2)
    assert s.populations()[b.index((1, 0))] == pytest.approx(0.801, abs=1e-3)
    th = thermal_product_state(LatticeSpec(2, n_th=0.06), b)
    s = apply_rotation(th, 1, "x", math.pi / 2)
    assert s.mode_occupations()[1] == pytest.approx(0.5)
    with pytest.raises(ValueError):
        apply_rotation(fock_state(lattice_basis(2, site_dim=3), (0, 0)), 0, "x", 1.0)


def test_rotation_on_thermal_state_value():
    # 127 deg on a 6% thermal qubit
    b = lattice_basis(2)
    th = thermal_product_state(LatticeSpec(2, n_th=0.06), b)
    p1 = apply_rotation(th, 0, "x", math.radians(127)).mode_occupations()[0]
    c2 = math.cos(math.radians(63.5)) ** 2
    assert p1 == pytest.approx(0.94 * (1 - c2) + 0.06 * c2)
    assert p1 == pytest.approx(0.7648, abs=1e-4)


def test_zero_hamiltonian_leaves_state():
    b = lattice_basis(3)
    psi = np.random.default_rng(0).normal(size=8) + 1j * np.random.default_rng(1).normal(size=8)
    s = QuantumState(psi / np.linalg.norm(psi), b)
    tr = evolve(s, sp.csr_matrix((8, 8)), sample_times=[0, 0.5, 1.0], store_states=True)
    for out in tr.states:
        assert np.allclose(out.data, s.data, atol=1e-14)


def test_single_site_decay():
    b = lattice_basis(2)
    spec = LatticeSpec(2, T1=[25.0, math.inf])
    H = bose_hubbard_hamiltonian(spec, b)
    tr = evolve(fock_state(b, (1, 0)), H, collapse_operators(spec, (), b), sample_times=[0, 5, 25],
                observables={"n": number_op(b, "q0")})
    assert tr["n"][-1] == pytest.approx(math.exp(-1), rel=1e-7)
    assert tr["n"][1] == pytest.approx(math.exp(-0.2), rel=1e-7)


@pytest.mark.parametrize("density", [False, True])
@pytest.mark.parametrize("method", ["rk45", "rk4"])
def test_resonant_pair_rabi(density, method):
    b = lattice_basis(2)
    H = bose_hubbard_hamiltonian(LatticeSpec(2, J=J), b)
    s = fock_state(b, (1, 0))
    if density:
        s = s.to_density()
    ts = np.linspace(0, 0.2, 11)
    cfg = IntegratorConfig(method=method, max_step=2e-4 if method == "rk4" else None)
    P01 = sp.csr_matrix(([1.0], ([b.index((0, 1))], [b.index((0, 1))])), shape=(4, 4))
    tr = evolve(s, H, sample_times=ts, cfg=cfg, observables={"p": P01})
    assert np.allclose(tr["p"], np.sin(J * ts) ** 2, atol=1e-7)
    U = expm(-1j * H.toarray() * ts[-1])
    assert tr["p"][-1] == pytest.approx(abs(U[b.index((0, 1)), b.index((1, 0))]) ** 2, abs=1e-7)


def _norm_drift(cfg):
    b = lattice_basis(4)
    H = bose_hubbard_hamiltonian(LatticeSpec(4, J=J, J_nnn=mhz(0.55)), b)
    rng = np.random.default_rng(4)
    psi = rng.normal(size=16) + 1j * rng.normal(size=16)
    tr = evolve(QuantumState(psi / np.linalg.norm(psi), b), H, sample_times=[0, 12.5, 25.0], cfg=cfg,
                store_states=True)
    return max(abs(np.linalg.norm(s.data) - 1) for s in tr.states)


def test_unitary_norm_over_25us_default_tolerances():
    # adaptive RK is not norm-conserving; at rtol=1e-8 the drift is ~6e-7
    assert _norm_drift(IntegratorConfig()) < 1e-8


def test_unitary_norm_over_25us_tight_tolerances():
    assert _norm_drift(IntegratorConfig(rtol=1e-10, atol=1e-12)) < 1e-8


def _ket_vs_density_fidelity(cfg):
    b = lattice_basis(3)
    H = bose_hubbard_hamiltonian(LatticeSpec(3, J=J, epsilon=[0, mhz(2), 0]), b)
    rng = np.random.default_rng(7)
    psi = rng.normal(size=8) + 1j * rng.normal(size=8)
    ket = QuantumState(psi / np.linalg.norm(psi), b)
    ts = [0.0, 0.3, 0.9]
    a = evolve(ket, H, sample_times=ts, cfg=cfg, store_states=True)
    d = evolve(ket.to_density(), H, sample_times=ts, cfg=cfg, store_states=True)
    return min(np.real(k.data.conj() @ r.data @ k.data) for k, r in zip(a.states, d.states))


def test_lindblad_without_collapse_matches_schroedinger():
    assert _ket_vs_density_fidelity(IntegratorConfig()) >= 1 - 1e-8


def test_lindblad_without_collapse_matches_schroedinger_tight():
    assert _ket_vs_density_fidelity(IntegratorConfig(rtol=1e-10, atol=1e-12)) >= 1 - 1e-8


def test_lindblad_trace_hermiticity_positivity():
    b = lattice_basis(2, resonator_sites=[0])
    spec = LatticeSpec(2, J=J, T1=25.0, Tphi=10.0, n_th=0.06)
    bath = BathSpec("source", 0, mhz(2.4), kappa=mhz(1.5), n_th_res=0.02)
    H = lattice_hamiltonian_td(spec, b, [bath])
    tr = evolve(thermal_product_state(spec, b, [bath]), H, collapse_operators(spec, [bath], b),
                sample_times=np.linspace(0, 3, 7), store_states=True)
    for s in tr.states:
        rho = s.data
        assert abs(np.trace(rho) - 1) < 1e-8
        assert np.max(np.abs(rho - rho.conj().T)) < 1e-10
        assert np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min() >= -1e-7


def test_continuity_equation():
    b = lattice_basis(2)
    spec = LatticeSpec(2, J=J, epsilon=[0.0, mhz(1.0)])
    s = apply_rotation(fock_state(b, (0, 0)), 0, "x", math.radians(127))
    s = apply_rotation(s, 1, "x", math.radians(90))
    h = 1e-4
    centers = np.array([0.01, 0.03, 0.05])
    ts = np.sort(np.concatenate([centers - h, centers, centers + h]))
    j = current_operator(b, 0, 1, J)
    tr = evolve(s, bose_hubbard_hamiltonian(spec, b), sample_times=ts, cfg=IntegratorConfig(rtol=1e-12, atol=1e-13),
                observables={"nr": number_op(b, "q1"), "j": j})
    for k in range(len(centers)):
        i = 3 * k + 1
        dndt = (tr["nr"][i + 1] - tr["nr"][i - 1]) / (2 * h)
        assert abs(dndt - tr["j"][i]) < 1e-4 * J


def test_liouvillian_column_stacking():
    rng = np.random.default_rng(2)
    H = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    H = H + H.conj().T
    c = rng.normal(size=(3, 3)) + 0j
    rho = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    L = liouvillian(sp.csr_matrix(H), [sp.csr_matrix(c)])
    direct = -1j * (H @ rho - rho @ H) + c @ rho @ c.conj().T - 0.5 * (c.conj().T @ c @ rho + rho @ c.conj().T @ c)
    assert np.allclose((L @ rho.reshape(-1, order="F")).reshape(3, 3, order="F"), direct)


def test_reduced_density_of_product():
    b = lattice_basis(3)
    s = apply_rotation(fock_state(b, (0, 1, 0)), 0, "x", math.pi / 3)
    red = reduced_density(s, ["q1"])
    assert np.allclose(red, np.diag([0, 1]))
    red0 = reduced_density(s.to_density(), ["q0"])
    assert red0[1, 1].real == pytest.approx(math.sin(math.pi / 6) ** 2)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.01, 0.5), st.floats(-30, 30))
def test_ket_and_density_agree(t, eps):
    b = lattice_basis(2)
    H = bose_hubbard_hamiltonian(LatticeSpec(2, J=J, epsilon=[eps, 0.0]), b)
    s = fock_state(b, (1, 0))
    n = number_op(b, "q1")
    a = evolve(s, H, sample_times=[0, t], observables={"n": n})
    d = evolve(s.to_density(), H, sample_times=[0, t], observables={"n": n})
    assert a["n"][-1] == pytest.approx(d["n"][-1], abs=1e-7)


def test_evolve_errors():
    b = lattice_basis(2)
    s = fock_state(b, (0, 0))
    with pytest.raises(ValueError):
        evolve(s, sp.identity(8, format="csr"), sample_times=[0, 1])
    with pytest.raises(ValueError):
        evolve(s, sp.identity(4, format="csr"), sample_times=[1, 0])
    with pytest.raises(ValueError):
        evolve(s, sp.identity(4, format="csr"), [sp.identity(3, format="csr")], sample_times=[0, 1])
    with pytest.raises(ValueError):
        evolve(s, sp.identity(4, format="csr"), tspan=(0, 1), sample_times=[0, 2])
    with pytest.raises(ValueError):
        IntegratorConfig(method="euler")
    with pytest.raises(ValueError):
        IntegratorConfig(rtol=0)


def test_trajectory_csv(tmp_path):
    b = lattice_basis(2)
    H = bose_hubbard_hamiltonian(LatticeSpec(2, J=J), b)
    tr = evolve(fock_state(b, (1, 0)), H, sample_times=[0, 0.01, 0.02], observables={"n1": number_op(b, "q1")})
    path = tmp_path / "traj.csv"
    tr.to_csv(path)
    rows = list(csv.reader(path.read_text(encoding="utf-8").splitlines()))
    assert rows[0] == ["t_us", "n1"]
    assert float(rows[2][1]) == tr["n1"][1]
