"""Bond current operator, beamsplitter current readout and readout-error model.

The beamsplitter protocol isolates a hard-core bond, lets it tunnel
resonantly for ``pi / (4 J)`` and converts the resulting joint populations to
current statistics::

    P(+J) <- P(|01>)    P(0) <- P(|00>)    P(-J) <- P(|10>)
    P(+2J) = P(-2J) <- P(|11>) / 2

(occupations written as ``|n_l n_r>``).
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.linalg import expm

from .dynamics import IntegratorConfig, QuantumState, evolve, reduced_density
from .fockspace import (
    BasisIndex,
    annihilation_op,
    canonical,
    creation_op,
    lattice_basis,
)
from .model import TWO_PI, LatticeSpec, bose_hubbard_hamiltonian, collapse_operators

__all__ = [
    "J_LEVELS",
    "AssignmentModel",
    "CurrentStatistics",
    "apply_readout_model",
    "beamsplitter_protocol",
    "current_operator",
    "expectation_current",
    "invert_readout",
    "manifold_current",
    "oracle_current_statistics",
    "read_current_statistics_csv",
    "spin_current_operator",
    "write_current_statistics_csv",
]

J_LEVELS = (-2, -1, 0, 1, 2)


@dataclass
class CurrentStatistics:
    """Probability of each bond-current eigenvalue ``j = m J`` keyed by ``m``."""

    bond: tuple
    J_bond: float
    probs: dict = field(default_factory=dict)

    def __post_init__(self):
        self.bond = tuple(int(s) for s in self.bond)
        self.probs = {m: float(self.probs.get(m, 0.0)) for m in J_LEVELS}
        total = sum(self.probs.values())
        if abs(total - 1) > 1e-9:
            raise ValueError(f"current probabilities sum to {total}")
        if min(self.probs.values()) < -1e-12:
            raise ValueError("negative current probability")

    def as_array(self) -> np.ndarray:
        return np.array([self.probs[m] for m in J_LEVELS])

    def mean_over_J(self) -> float:
        return float(sum(m * p for m, p in self.probs.items()))


def current_operator(basis: BasisIndex, l, r, J_bond: float) -> sp.csr_matrix:
    """``i J (a_l^+ a_r - a_r^+ a_l)``: particle current from site ``l`` to ``r``."""
    ll = basis.site_label(l) if isinstance(l, (int, np.integer)) else l
    rr = basis.site_label(r) if isinstance(r, (int, np.integer)) else r
    if basis.position(ll) == basis.position(rr):
        raise ValueError("current needs two distinct sites")
    hop = creation_op(basis, ll) @ annihilation_op(basis, rr)
    return canonical(1j * J_bond * (hop - hop.conj().T))


def spin_current_operator(basis: BasisIndex, l, r, J_bond: float) -> sp.csr_matrix:
    """Current of a hard-core bond in spin form, ``2J (s_l^x s_r^y - s_r^x s_l^y)``.

    ``s = sigma / 2`` with ``|1>`` as spin up, so that ``a^+ = s^x + i s^y``.
    """
    ops = {}
    for s in (l, r):
        lab = basis.site_label(s)
        if basis.dims[basis.position(lab)] != 2:
            raise ValueError("spin form needs two-level sites")
        a = annihilation_op(basis, lab)
        ad = creation_op(basis, lab)
        ops[s] = ((a + ad) / 2, (ad - a) / 2j)
    (xl, yl), (xr, yr) = ops[l], ops[r]
    return canonical(2 * J_bond * (xl @ yr - xr @ yl))


def _pair_populations(rho_pair: np.ndarray) -> dict:
    p = np.real(np.diag(rho_pair))
    return {"00": p[0], "01": p[1], "10": p[2], "11": p[3]}


def _stats_from_populations(pop, bond, J_bond) -> CurrentStatistics:
    half = 0.5 * pop["11"]
    probs = {1: pop["01"], 0: pop["00"], -1: pop["10"], 2: half, -2: half}
    probs = {m: max(v, 0.0) if v > -1e-12 else v for m, v in probs.items()}
    return CurrentStatistics(bond, J_bond, probs)


def _check_bond_sites(basis, bond):
    l, r = bond
    if l == r:
        raise ValueError("bond needs two distinct sites")
    for s in bond:
        d = basis.dims[basis.site_positions[s]]
        if d != 2:
            raise ValueError(f"current readout needs hard-core sites; site {s} has local dimension {d}")


def _lattice_only(state: QuantumState) -> QuantumState:
    basis = state.basis
    if not basis.resonator_positions:
        return state
    sites = basis.site_positions
    sub = BasisIndex([basis.modes[k] for k in sites])
    return QuantumState(reduced_density(state, sites), sub, check=False)


def beamsplitter_protocol(
    state: QuantumState,
    bond,
    spec: LatticeSpec,
    with_decoherence: bool = False,
    isolation: str = "ideal",
    spectator_detuning: float = TWO_PI * 150.0,
    cfg: IntegratorConfig | None = None,
) -> CurrentStatistics:
    """Current statistics of ``bond = (l, r)`` read out through resonant tunneling.

    ``isolation="ideal"`` removes all tunneling to spectator sites;
    ``"detuned"`` keeps the full lattice but shifts spectators by
    alternating ``+-spectator_detuning``. Decoherence uses the lattice's
    relaxation and dephasing rates during the beamsplitter.
    """
    l, r = int(bond[0]), int(bond[1])
    state = _lattice_only(state)
    basis = state.basis
    _check_bond_sites(basis, (l, r))
    J_bond = spec.bond_J(l, r)
    t_bs = math.pi / (4 * J_bond)
    ll, rr = basis.site_label(l), basis.site_label(r)

    if isolation == "ideal" and not with_decoherence:
        rho = reduced_density(state, [ll, rr])
        pair = lattice_basis(2)
        H = bose_hubbard_hamiltonian(LatticeSpec(2, J=J_bond), pair).toarray()
        U = expm(-1j * H * t_bs)
        out = U @ rho @ U.conj().T
        return _stats_from_populations(_pair_populations(out), (l, r), J_bond)

    if isolation == "ideal":
        J = np.zeros(spec.n_sites - 1)
        J[min(l, r)] = J_bond
        bs_spec = spec.replace(J=J, J_nnn=0.0, epsilon=0.0)
    elif isolation == "detuned":
        eps = np.zeros(spec.n_sites)
        others = [s for s in range(spec.n_sites) if s not in (l, r)]
        for n, s in enumerate(others):
            eps[s] = spectator_detuning * (1 if n % 2 == 0 else -1)
        bs_spec = spec.replace(epsilon=eps)
    else:
        raise ValueError(f"isolation must be 'ideal' or 'detuned', got {isolation!r}")
    if abs(l - r) != 1:
        raise ValueError("beamsplitter needs nearest-neighbour sites")
    H = bose_hubbard_hamiltonian(bs_spec, basis)
    c_ops = collapse_operators(bs_spec, (), basis) if with_decoherence else []
    tr = evolve(state, H, c_ops, tspan=(0.0, t_bs), sample_times=[0.0, t_bs], cfg=cfg, store_states=True)
    rho = reduced_density(tr.states[-1], [ll, rr])
    return _stats_from_populations(_pair_populations(rho), (l, r), J_bond)


def oracle_current_statistics(state: QuantumState, bond, J_bond: float = 1.0) -> CurrentStatistics:
    """Current statistics by projecting the bond's reduced state onto current eigenstates.

    Empty and doubly occupied pairs are handled by particle-number sector;
    within the single-particle sector the projectors come from diagonalising
    the current operator of an isolated hard-core pair.
    """
    l, r = int(bond[0]), int(bond[1])
    state = _lattice_only(state)
    _check_bond_sites(state.basis, (l, r))
    rho = reduced_density(state, [state.basis.site_label(l), state.basis.site_label(r)])
    pair = lattice_basis(2)
    j = current_operator(pair, 0, 1, 1.0).toarray()
    one = [pair.index((1, 0)), pair.index((0, 1))]
    vals, vecs = np.linalg.eigh(j[np.ix_(one, one)])
    rho_one = rho[np.ix_(one, one)]
    p1 = {int(round(v)): float(np.real(vecs[:, k].conj() @ rho_one @ vecs[:, k])) for k, v in enumerate(vals)}
    p11 = float(np.real(rho[pair.index((1, 1)), pair.index((1, 1))]))
    probs = {0: float(np.real(rho[0, 0])), 1: p1[1], -1: p1[-1], 2: p11 / 2, -2: p11 / 2}
    return CurrentStatistics((l, r), J_bond, probs)


def expectation_current(cs: CurrentStatistics) -> float:
    """Mean current ``sum_j j P(j)`` in rad/us."""
    return cs.J_bond * cs.mean_over_J()


def manifold_current(state, bond, spectra, J_bond: float) -> dict:
    """Contribution of each particle-number manifold to the bond current.

    ``state`` is a :class:`QuantumState` (resonators are traced out);
    ``spectra`` must cover every manifold of the lattice basis.
    """
    if not isinstance(state, QuantumState):
        raise TypeError("state must be a QuantumState")
    state = _lattice_only(state)
    basis = state.basis
    rho = state.density()
    D = basis.total_dim
    total = sum(s.states.shape[1] for s in spectra)
    if total != D:
        raise ValueError(f"spectra hold {total} states, lattice basis has {D}")
    P = sum(s.states @ s.states.conj().T for s in spectra)
    if np.max(np.abs(P - np.eye(D))) > 1e-8:
        raise ValueError("manifold projectors do not resolve the identity")
    j = current_operator(basis, bond[0], bond[1], J_bond)
    rho_j = (j.T @ rho.T).T  # rho @ j
    out = {}
    for s in spectra:
        V = s.states
        out[s.N] = float(np.real(np.einsum("ik,ij,jk->", V.conj(), rho_j, V)))
    return out


@dataclass
class AssignmentModel:
    """Row-stochastic map ``assignment[true, measured]`` over readout outcomes."""

    assignment: np.ndarray
    thermal_prep: np.ndarray | None = None

    def __post_init__(self):
        A = np.asarray(self.assignment, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError("assignment matrix must be square")
        if np.any(np.abs(A.sum(axis=1) - 1) > 1e-9):
            raise ValueError("assignment rows must sum to 1")
        self.assignment = A
        self.condition_number = float(np.linalg.cond(A))

    @classmethod
    def identity(cls, n_qubits: int) -> AssignmentModel:
        return cls(np.eye(2**n_qubits))


def apply_readout_model(true_probs, model: AssignmentModel) -> np.ndarray:
    """Assigned outcome probabilities for a true state distribution."""
    return np.asarray(true_probs, dtype=float) @ model.assignment


def invert_readout(assigned_probs, model: AssignmentModel, clamp: bool = True):
    """Undo readout errors; returns ``(corrected, clamped)``.

    Negative entries produced by the inversion are zeroed and the result
    renormalised when ``clamp`` is set; ``clamped`` reports whether that happened.
    """
    A = model.assignment
    if not np.isfinite(model.condition_number) or model.condition_number > 1e12:
        raise np.linalg.LinAlgError("assignment matrix is singular")
    corrected = np.linalg.solve(A.T, np.asarray(assigned_probs, dtype=float))
    clamped = False
    if clamp and np.any(corrected < 0):
        clamped = True
        warnings.warn("readout inversion produced negative probabilities; clamped to zero", stacklevel=2)
        corrected = np.clip(corrected, 0, None)
        corrected = corrected / corrected.sum()
    return corrected, clamped


def write_current_statistics_csv(path, stats):
    """CSV columns ``bond_l, bond_r, j_over_J, probability``."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["bond_l", "bond_r", "j_over_J", "probability"])
        for cs in stats:
            for m in J_LEVELS:
                w.writerow([cs.bond[0], cs.bond[1], m, f"{cs.probs[m]:.17g}"])


def read_current_statistics_csv(path, J_bond: float = 1.0) -> list[CurrentStatistics]:
    groups: dict = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            key = (int(row["bond_l"]), int(row["bond_r"]))
            groups.setdefault(key, {})[int(row["j_over_J"])] = float(row["probability"])
    return [CurrentStatistics(k, J_bond, p) for k, p in groups.items()]
