"""Number-resolved and drive-dressed many-body spectra.

All diagonalisations are dense (``numpy.linalg.eigh``); the lattices handled
here have at most a few hundred basis states.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import minimize_scalar

from .fockspace import BasisIndex, lattice_basis, total_number_op
from .model import LatticeSpec, bose_hubbard_hamiltonian, drive_operator, to_mhz

__all__ = [
    "DrivenSpectrum",
    "ManifoldSpectrum",
    "NonConservingError",
    "TrackingError",
    "all_manifolds",
    "driven_spectrum",
    "manifold_eigenstates",
    "many_body_gap",
    "top_gap_minimum",
    "track_branch",
    "transition_frequencies",
    "write_markers_csv",
]

DEGENERACY_TOL = 1e-9


class NonConservingError(ValueError):
    """The Hamiltonian does not commute with the total particle number."""


class TrackingError(RuntimeError):
    """Branch continuation lost the tracked state between grid points."""


@dataclass
class ManifoldSpectrum:
    N: int
    energies: np.ndarray
    states: np.ndarray  # columns are eigenvectors in the full basis

    def __len__(self):
        return self.energies.size


def _dense(H):
    return H.toarray() if sp.issparse(H) else np.asarray(H)


def manifold_eigenstates(H, basis: BasisIndex, N: int, tol: float = 1e-9) -> ManifoldSpectrum:
    """Eigenpairs of ``H`` restricted to lattice states holding ``N`` particles."""
    Hd = _dense(H)
    counts = basis.site_count()
    comm = Hd * (counts[None, :] - counts[:, None])
    if np.max(np.abs(comm), initial=0.0) > tol:
        raise NonConservingError("H does not conserve the total particle number")
    idx = np.flatnonzero(counts == N)
    if idx.size == 0:
        raise ValueError(f"no basis states with N={N}")
    block = Hd[np.ix_(idx, idx)]
    E, V = np.linalg.eigh(0.5 * (block + block.conj().T))
    states = np.zeros((basis.total_dim, idx.size), dtype=np.complex128)
    states[idx, :] = V
    return ManifoldSpectrum(N, E, states)


def all_manifolds(H, basis: BasisIndex) -> list[ManifoldSpectrum]:
    counts = basis.site_count()
    return [manifold_eigenstates(H, basis, int(N)) for N in np.unique(counts)]


@dataclass
class DrivenSpectrum:
    detunings: np.ndarray
    levels: np.ndarray  # (grid, dim), ascending per grid point
    vectors: np.ndarray = field(repr=False)  # (grid, dim, dim)
    omega: float = 0.0
    phases: np.ndarray | None = None
    adiabatic_track: np.ndarray | None = None
    ambiguous: list = field(default_factory=list)


def _driven_matrix(spec, basis, omega, phases, delta, H0=None, V=None, Nop=None):
    H0 = bose_hubbard_hamiltonian(spec, basis).toarray() if H0 is None else H0
    V = drive_operator(basis, phases).toarray() if V is None else V
    Nop = total_number_op(basis).toarray() if Nop is None else Nop
    return H0 + omega * V - delta * Nop


def driven_spectrum(spec: LatticeSpec, omega: float, phases, detuning_grid, basis: BasisIndex | None = None,
                    start_level: int = -1) -> DrivenSpectrum:
    """Dressed levels of the driven lattice on a detuning grid.

    The adiabatic track starts from ``start_level`` (default: highest) at the
    first grid point and is continued by maximum overlap.
    """
    grid = np.atleast_1d(np.asarray(detuning_grid, dtype=float))
    if grid.size == 0:
        raise ValueError("detuning grid is empty")
    basis = basis or lattice_basis(spec.n_sites, spec.site_dim)
    H0 = bose_hubbard_hamiltonian(spec, basis).toarray()
    V = drive_operator(basis, phases).toarray()
    Nop = total_number_op(basis).toarray()
    D = basis.total_dim
    levels = np.empty((grid.size, D))
    vecs = np.empty((grid.size, D, D), dtype=np.complex128)
    for g, delta in enumerate(grid):
        levels[g], vecs[g] = np.linalg.eigh(H0 + omega * V - delta * Nop)
    ds = DrivenSpectrum(grid, levels, vecs, omega=float(omega),
                        phases=np.broadcast_to(np.asarray(phases, dtype=float), (spec.n_sites,)).copy())
    try:
        ds.adiabatic_track, ds.ambiguous = track_branch(ds, start_level)
    except TrackingError:
        ds.adiabatic_track = None
    return ds


def _clusters(E, tol=DEGENERACY_TOL):
    groups, cur = [], [0]
    for j in range(1, E.size):
        if E[j] - E[j - 1] <= tol:
            cur.append(j)
        else:
            groups.append(cur)
            cur = [j]
    groups.append(cur)
    return groups


def track_branch(ds: DrivenSpectrum, start: int = -1, min_overlap: float = 0.9):
    """Follow one dressed level across the grid by maximum eigenvector overlap.

    Returns ``(indices, ambiguous_points)``. Where the followed level is
    degenerate with another, the previous state is projected into the
    degenerate subspace and the grid index is reported as ambiguous.
    Raises :class:`TrackingError` if the best overlap drops below ``min_overlap``.
    """
    G, D = ds.levels.shape
    start = start % D
    ambiguous = []
    first = next(c for c in _clusters(ds.levels[0]) if start in c)
    if len(first) > 1:
        ambiguous.append(0)
    v = ds.vectors[0][:, start]
    track = [start]
    for g in range(1, G):
        V = ds.vectors[g]
        amp = V.conj().T @ v
        best, best_ov = None, -1.0
        for c in _clusters(ds.levels[g]):
            ov = float(np.sum(np.abs(amp[c]) ** 2))
            if ov > best_ov:
                best, best_ov = c, ov
        if best_ov < min_overlap:
            raise TrackingError(
                f"overlap {best_ov:.3f} < {min_overlap} at detuning {ds.detunings[g]:.6g}; refine the grid"
            )
        if len(best) > 1:
            ambiguous.append(g)
            w = V[:, best] @ amp[best]
            v = w / np.linalg.norm(w)
            track.append(best[int(np.argmax(np.abs(amp[best])))])
        else:
            j = best[0]
            v = V[:, j] * np.exp(-1j * np.angle(amp[j]))
            track.append(j)
    return np.asarray(track), ambiguous


def many_body_gap(ds: DrivenSpectrum, branch=None) -> np.ndarray:
    """Distance from the tracked level to the nearest other level at each grid point.

    ``branch`` is a start level (int) or an explicit index path; ``None`` uses
    the spectrum's stored adiabatic track.
    """
    if branch is None:
        if ds.adiabatic_track is None:
            raise TrackingError("driven spectrum has no valid adiabatic track")
        track = ds.adiabatic_track
    elif np.ndim(branch) == 0:
        track, _ = track_branch(ds, int(branch))
    else:
        track = np.asarray(branch)
    G, D = ds.levels.shape
    if track.shape != (G,) or np.any(track < 0) or np.any(track >= D):
        raise ValueError("invalid branch")
    gaps = np.empty(G)
    for g in range(G):
        E = ds.levels[g]
        others = np.delete(E, track[g])
        gaps[g] = np.min(np.abs(others - E[track[g]]))
    return gaps


def top_gap_minimum(spec: LatticeSpec, omega: float, phases, bracket, levels=(-1, -2), basis=None,
                    xatol: float = 1e-10):
    """Locate the detuning in ``bracket`` minimising the gap between two sorted levels.

    Returns ``(detuning, gap)``; resolves symmetry-protected crossings that a
    finite grid would miss.
    """
    basis = basis or lattice_basis(spec.n_sites, spec.site_dim)
    H0 = bose_hubbard_hamiltonian(spec, basis).toarray()
    V = drive_operator(basis, phases).toarray()
    Nop = total_number_op(basis).toarray()
    i, j = levels

    def gap(delta):
        E = np.linalg.eigvalsh(H0 + omega * V - delta * Nop)
        return abs(E[i] - E[j])

    res = minimize_scalar(gap, bounds=tuple(bracket), method="bounded", options={"xatol": xatol})
    return float(res.x), float(res.fun)


def transition_frequencies(spec: LatticeSpec, basis: BasisIndex | None = None) -> dict:
    """Bath detunings that resonantly drive ``N=0 -> 1`` (``single``) and
    ``N=0 -> 2`` two-particle (``pair``, half the transition energy) processes."""
    basis = basis or lattice_basis(spec.n_sites, spec.site_dim)
    H = bose_hubbard_hamiltonian(spec, basis)
    E0 = manifold_eigenstates(H, basis, 0).energies[0]
    single = manifold_eigenstates(H, basis, 1).energies - E0
    pair = (manifold_eigenstates(H, basis, 2).energies - E0) / 2
    return {"single": single, "pair": pair}


def write_markers_csv(path, markers: dict):
    """CSV columns ``kind, N, k, frequency_MHz``."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["kind", "N", "k", "frequency_MHz"])
        for kind, N in (("single", 1), ("pair", 2)):
            for k, f in enumerate(markers[kind]):
                w.writerow([kind, N, k, f"{to_mhz(f):.17g}"])
