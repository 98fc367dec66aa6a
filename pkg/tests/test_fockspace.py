import itertools
import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from sitecurrent.fockspace import (
    ModeSpec,
    annihilation_op,
    build_basis,
    canonical,
    creation_op,
    identity_op,
    is_hermitian,
    lattice_basis,
    number_op,
    to_triplets,
    total_number_op,
)


def test_basis_sizes():
    assert lattice_basis(4).total_dim == 16
    assert lattice_basis(4, resonator_sites=[0, 3]).total_dim == 64


def test_single_mode_enumeration():
    b = build_basis([ModeSpec("q", dim=5)])
    for n in range(5):
        assert b.index((n,)) == n
        assert b.occupation(n) == (n,)


def test_row_major_last_mode_fastest():
    b = lattice_basis(3)
    assert b.index((0, 0, 1)) == 1
    assert b.index((1, 0, 0)) == 4
    assert [b.occupation(i) for i in range(8)] == list(itertools.product((0, 1), repeat=3))


def test_sites_declared_before_resonators():
    b = lattice_basis(3, resonator_sites=[2, 0])
    assert list(b.labels) == ["q0", "q1", "q2", "r2", "r0"]
    assert b.site_positions == [0, 1, 2]
    assert b.resonator_positions == [3, 4]


def test_bad_bases():
    with pytest.raises(ValueError):
        build_basis([])
    with pytest.raises(ValueError):
        ModeSpec("a", 1)
    with pytest.raises(ValueError):
        build_basis([ModeSpec("a"), ModeSpec("a")])


def test_unknown_mode_label():
    with pytest.raises(KeyError):
        annihilation_op(lattice_basis(2), "q7")


def test_hardcore_ladder_entries():
    b = build_basis([ModeSpec("q")])
    assert to_triplets(annihilation_op(b, "q")) == [(0, 1, 1.0)]


def test_dim3_ladder_entries():
    b = build_basis([ModeSpec("q", dim=3)])
    trip = to_triplets(annihilation_op(b, "q"))
    assert [(r, c) for r, c, _ in trip] == [(0, 1), (1, 2)]
    assert np.allclose([v for *_, v in trip], [1.0, math.sqrt(2)])


@pytest.mark.parametrize("dim", [2, 3, 4])
def test_number_op_is_adag_a(dim):
    b = build_basis([ModeSpec("x", dim), ModeSpec("y", 2)])
    a = annihilation_op(b, "x")
    n = number_op(b, "x")
    assert np.allclose((a.conj().T @ a).toarray(), n.toarray(), atol=1e-14)
    assert np.array_equal(n.diagonal().real, b.occupations[:, 0])


def test_number_trace_four_sites():
    b = lattice_basis(4)
    assert number_op(b, "q2").diagonal().sum().real == 8


def test_total_number_spectrum():
    b = lattice_basis(4)
    vals = total_number_op(b).diagonal().real
    counts = [int(np.sum(vals == k)) for k in range(5)]
    assert counts == [1, 4, 6, 4, 1]
    psi = np.zeros(16)
    psi[b.index((1, 1, 1, 1))] = 1
    assert np.allclose(total_number_op(b) @ psi, 4 * psi)


def test_total_number_ignores_resonators():
    b = lattice_basis(2, resonator_sites=[1])
    N = total_number_op(b).diagonal().real
    assert np.array_equal(N, b.occupations[:, :2].sum(axis=1))


def test_total_number_needs_sites():
    b = build_basis([ModeSpec("r", 2, "resonator")])
    with pytest.raises(ValueError):
        total_number_op(b)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(2, 4), min_size=1, max_size=3))
def test_truncated_commutator(dims):
    b = build_basis([ModeSpec(f"m{i}", d) for i, d in enumerate(dims)])
    for k, d in enumerate(dims):
        a = annihilation_op(b, k)
        ad = creation_op(b, k)
        comm = (a @ ad - ad @ a).toarray()
        top = (b.occupations[:, k] == d - 1).astype(float)
        assert np.allclose(comm, np.diag(1.0 - d * top))


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(2, 3), min_size=2, max_size=3))
def test_different_modes_commute(dims):
    b = build_basis([ModeSpec(f"m{i}", d) for i, d in enumerate(dims)])
    ops = [annihilation_op(b, k) for k in range(len(dims))] + [creation_op(b, k) for k in range(len(dims))]
    n = len(dims)
    for i, x in enumerate(ops):
        for j, y in enumerate(ops):
            if i % n != j % n:
                assert abs(x @ y - y @ x).max() == 0


def test_number_ops_hermitian_real_diagonal():
    b = lattice_basis(3, site_dim=3, resonator_sites=[1])
    for lab in b.labels:
        n = number_op(b, lab)
        assert is_hermitian(n)
        assert np.all(n.diagonal().imag == 0)
        assert (n - sp.diags(n.diagonal())).count_nonzero() == 0


def test_canonical_deduplicates():
    m = sp.coo_matrix(([1.0, 2.0, 0.0], ([0, 0, 1], [1, 1, 0])), shape=(2, 2))
    assert to_triplets(canonical(m)) == [(0, 1, 3.0)]


def test_identity():
    b = lattice_basis(2, resonator_sites=[0])
    assert abs(identity_op(b) - sp.identity(8)).max() == 0
