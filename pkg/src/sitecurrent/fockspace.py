"""Composite Fock bases and sparse ladder/number operators.

A basis is an ordered list of modes (lattice sites first, then bath
resonators). Basis states are enumerated row-major over the mode list, so
the last mode varies fastest, matching ``numpy.kron`` ordering.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import prod

import numpy as np
import scipy.sparse as sp

__all__ = [
    "BasisIndex",
    "ModeSpec",
    "annihilation_op",
    "build_basis",
    "canonical",
    "creation_op",
    "identity_op",
    "is_hermitian",
    "lattice_basis",
    "number_op",
    "to_triplets",
    "total_number_op",
]

SITE = "site"
RESONATOR = "resonator"


@dataclass(frozen=True)
class ModeSpec:
    """One bosonic mode with a truncated local Hilbert space.

    ``dim == 2`` is a hard-core site (occupations 0 and 1).
    """

    label: str
    dim: int = 2
    kind: str = SITE

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 2:
            raise ValueError(f"mode {self.label!r}: dim must be an integer >= 2, got {self.dim}")
        if self.kind not in (SITE, RESONATOR):
            raise ValueError(f"mode {self.label!r}: kind must be 'site' or 'resonator'")


class BasisIndex:
    """Row-major bijection between occupation tuples and flat indices."""

    def __init__(self, modes):
        modes = tuple(modes)
        if not modes:
            raise ValueError("a basis needs at least one mode")
        labels = [m.label for m in modes]
        if len(set(labels)) != len(labels):
            raise ValueError(f"mode labels must be unique, got {labels}")
        self.modes = modes
        self.labels = tuple(labels)
        self.dims = tuple(int(m.dim) for m in modes)
        self.total_dim = prod(self.dims)
        strides = np.ones(len(modes), dtype=np.int64)
        for k in range(len(modes) - 2, -1, -1):
            strides[k] = strides[k + 1] * self.dims[k + 1]
        self.strides = strides
        occ = np.indices(self.dims).reshape(len(modes), -1).T
        occ.flags.writeable = False
        self.occupations = occ
        self._pos = {lab: k for k, lab in enumerate(labels)}

    def __repr__(self):
        inner = ", ".join(f"{m.label}:{m.dim}" for m in self.modes)
        return f"BasisIndex([{inner}], total_dim={self.total_dim})"

    def __len__(self):
        return self.total_dim

    def __eq__(self, other):
        return isinstance(other, BasisIndex) and self.modes == other.modes

    def __hash__(self):
        return hash(self.modes)

    def position(self, mode) -> int:
        """Position of a mode given its label or integer position."""
        if isinstance(mode, (int, np.integer)):
            if not 0 <= mode < len(self.modes):
                raise KeyError(f"mode position {mode} out of range")
            return int(mode)
        try:
            return self._pos[mode]
        except KeyError:
            raise KeyError(f"unknown mode {mode!r}; basis has {list(self.labels)}") from None

    def index(self, occupation) -> int:
        occupation = np.asarray(occupation, dtype=np.int64)
        if occupation.shape != (len(self.modes),):
            raise ValueError(f"expected {len(self.modes)} occupations, got {occupation.shape}")
        if np.any(occupation < 0) or np.any(occupation >= np.asarray(self.dims)):
            raise ValueError(f"occupation {tuple(occupation)} outside truncation {self.dims}")
        return int(occupation @ self.strides)

    def occupation(self, index: int) -> tuple:
        if not 0 <= index < self.total_dim:
            raise IndexError(index)
        return tuple(int(n) for n in self.occupations[index])

    @property
    def site_positions(self) -> list[int]:
        return [k for k, m in enumerate(self.modes) if m.kind == SITE]

    @property
    def resonator_positions(self) -> list[int]:
        return [k for k, m in enumerate(self.modes) if m.kind == RESONATOR]

    def site_label(self, site: int) -> str:
        """Label of the ``site``-th lattice site (counting site modes only)."""
        return self.labels[self.site_positions[site]]

    def site_count(self) -> np.ndarray:
        """Total lattice occupation of every basis state (resonators excluded)."""
        return self.occupations[:, self.site_positions].sum(axis=1)


def build_basis(modes) -> BasisIndex:
    return BasisIndex(modes)


def lattice_basis(n_sites: int, site_dim: int = 2, resonator_sites=(), resonator_dim: int = 2) -> BasisIndex:
    """Sites ``q0..q{n-1}`` followed by one resonator ``r{i}`` per listed site."""
    modes = [ModeSpec(f"q{i}", site_dim, SITE) for i in range(n_sites)]
    modes += [ModeSpec(f"r{i}", resonator_dim, RESONATOR) for i in resonator_sites]
    return BasisIndex(modes)


def canonical(op) -> sp.csr_matrix:
    """CSR complex matrix with sorted, deduplicated indices and no stored zeros."""
    out = sp.csr_matrix(op, dtype=np.complex128)
    out.sum_duplicates()
    out.eliminate_zeros()
    out.sort_indices()
    return out


def to_triplets(op) -> list[tuple[int, int, complex]]:
    """Row-major ``(row, col, value)`` listing of the nonzero entries."""
    coo = canonical(op).tocoo()
    return [(int(r), int(c), complex(v)) for r, c, v in zip(coo.row, coo.col, coo.data)]


def is_hermitian(op, atol: float = 0.0) -> bool:
    diff = canonical(op) - canonical(op).conj().T
    if diff.nnz == 0:
        return True
    return bool(np.max(np.abs(diff.data)) <= atol)


def annihilation_op(basis: BasisIndex, mode) -> sp.csr_matrix:
    k = basis.position(mode)
    n = basis.occupations[:, k]
    cols = np.flatnonzero(n > 0)
    rows = cols - basis.strides[k]
    vals = np.sqrt(n[cols]).astype(np.complex128)
    D = basis.total_dim
    return canonical(sp.coo_matrix((vals, (rows, cols)), shape=(D, D)))


def creation_op(basis: BasisIndex, mode) -> sp.csr_matrix:
    return canonical(annihilation_op(basis, mode).conj().T)


def number_op(basis: BasisIndex, mode) -> sp.csr_matrix:
    k = basis.position(mode)
    return canonical(sp.diags(basis.occupations[:, k].astype(np.complex128)))


def total_number_op(basis: BasisIndex) -> sp.csr_matrix:
    """Total lattice particle number; resonator modes are not counted."""
    if not basis.site_positions:
        raise ValueError("basis has no site modes")
    return canonical(sp.diags(basis.site_count().astype(np.complex128)))


def identity_op(basis: BasisIndex) -> sp.csr_matrix:
    return canonical(sp.identity(basis.total_dim, dtype=np.complex128))
