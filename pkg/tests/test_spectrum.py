import csv
import math

import numpy as np
import pytest

from sitecurrent.fockspace import lattice_basis, total_number_op
from sitecurrent.measurement import current_operator
from sitecurrent.model import LatticeSpec, bose_hubbard_hamiltonian, drive_operator, mhz
from sitecurrent.spectrum import (
    NonConservingError,
    TrackingError,
    all_manifolds,
    driven_spectrum,
    manifold_eigenstates,
    many_body_gap,
    top_gap_minimum,
    track_branch,
    transition_frequencies,
    write_markers_csv,
)

J = mhz(5.8)
STAGGERED = [0.0, math.pi, 0.0, math.pi]


@pytest.fixture(scope="module")
def chain():
    b = lattice_basis(4)
    spec = LatticeSpec(4, J=J)
    return spec, b, bose_hubbard_hamiltonian(spec, b)


def test_single_particle_band(chain):
    _, b, H = chain
    E = manifold_eigenstates(H, b, 1).energies
    expected = sorted(2 * J * math.cos(k * math.pi / 5) for k in range(1, 5))
    assert np.allclose(E, expected, atol=1e-9 * J)
    assert np.allclose(E / J, [-1.618034, -0.618034, 0.618034, 1.618034], atol=1e-6)


def test_manifold_sizes(chain):
    _, b, H = chain
    assert len(manifold_eigenstates(H, b, 0)) == 1
    assert manifold_eigenstates(H, b, 0).energies[0] == 0
    assert len(manifold_eigenstates(H, b, 2)) == 6
    assert [m.N for m in all_manifolds(H, b)] == [0, 1, 2, 3, 4]


def test_eigenpairs_and_support(chain):
    _, b, H = chain
    Hd = H.toarray()
    counts = b.site_count()
    for m in all_manifolds(H, b):
        V = m.states
        assert np.allclose(V.conj().T @ V, np.eye(len(m)), atol=1e-10)
        resid = Hd @ V - V * m.energies
        assert np.max(np.abs(resid)) < 1e-9 * np.linalg.norm(Hd, 2)
        assert np.all(np.abs(V[counts != m.N]) == 0)


def test_non_conserving_rejected(chain):
    _, b, H = chain
    with pytest.raises(NonConservingError):
        manifold_eigenstates(H + 0.1 * drive_operator(b, 0.0), b, 1)
    with pytest.raises(ValueError):
        manifold_eigenstates(H, b, 5)


def test_eigenstates_carry_no_current():
    spec = LatticeSpec(4, J=J, J_nnn=mhz(0.55), epsilon=[0, mhz(1), -mhz(0.5), mhz(0.2)])
    b = lattice_basis(4)
    H = bose_hubbard_hamiltonian(spec, b)
    N = total_number_op(b)
    for l in range(3):
        j = current_operator(b, l, l + 1, J)
        assert abs(N @ j - j @ N).max() == 0
        for m in all_manifolds(H, b):
            for k in range(len(m)):
                psi = m.states[:, k]
                assert abs(psi.conj() @ (j @ psi)) < 1e-10 * J


def test_undriven_levels_are_linear_fans(chain):
    spec, b, H = chain
    grid = np.linspace(-2 * J, 2 * J, 9)
    ds = driven_spectrum(spec, 0.0, 0.0, grid)
    man = all_manifolds(H, b)
    for g, d in enumerate(grid):
        expected = np.sort(np.concatenate([m.energies - m.N * d for m in man]))
        assert np.allclose(ds.levels[g], expected, atol=1e-9 * J)
    assert ds.levels.shape == (9, 16)


def test_undriven_crossing_is_exact(chain):
    spec, b, H = chain
    # top N=0 and N=1 levels meet where the detuning equals the top single-particle energy
    e1 = manifold_eigenstates(H, b, 1).energies[-1]
    ds = driven_spectrum(spec, 0.0, 0.0, [e1 - 0.05 * J, e1, e1 + 0.05 * J])
    gaps = many_body_gap(ds, ds.adiabatic_track)
    assert gaps[1] < 1e-12 * J
    assert gaps[0] > 0 and gaps[2] > 0


def test_gap_far_above_resonances(chain):
    spec, b, H = chain
    # at large positive detuning vacuum is on top; its nearest neighbour is the top N=1 level
    d = 6 * J
    ds = driven_spectrum(spec, 0.0, 0.0, [d])
    e1 = manifold_eigenstates(H, b, 1).energies[-1]
    assert many_body_gap(ds, -1)[0] == pytest.approx(d - e1, rel=1e-12)


def test_uniform_drive_keeps_top_branch_gapped(chain):
    spec, *_ = chain
    ds = driven_spectrum(spec, 0.7 * J, 0.0, np.linspace(-3 * J, 3 * J, 301))
    assert ds.adiabatic_track is not None
    assert many_body_gap(ds).min() > 0.5 * J
    _, gap = top_gap_minimum(spec, 0.7 * J, 0.0, (0.5 * J, 2.5 * J))
    assert gap > 0.5 * J


def test_staggered_drive_gaps_bottom_and_closes_top(chain):
    spec, *_ = chain
    ds = driven_spectrum(spec, 0.7 * J, STAGGERED, np.linspace(-3 * J, 3 * J, 301))
    assert many_body_gap(ds, 0).min() > 0.5 * J
    _, low = top_gap_minimum(spec, 0.7 * J, STAGGERED, (-2.5 * J, -0.5 * J), levels=(0, 1))
    assert low > 0.5 * J
    _, top = top_gap_minimum(spec, 0.7 * J, STAGGERED, (0.5 * J, 2.5 * J))
    assert top < 1e-6 * J


def test_degenerate_tracking_is_reported(chain):
    spec, b, H = chain
    e1 = manifold_eigenstates(H, b, 1).energies[-1]
    ds = driven_spectrum(spec, 0.0, 0.0, [e1 + 0.05 * J, e1])
    _, amb = track_branch(ds, -1)
    assert amb == [1]


def test_coarse_grid_tracking_fails(chain):
    spec, *_ = chain
    ds = driven_spectrum(spec, 0.7 * J, STAGGERED, np.linspace(-3 * J, 3 * J, 3))
    with pytest.raises(TrackingError):
        track_branch(ds, 5, min_overlap=0.999)


def test_driven_spectrum_rejects_empty_grid(chain):
    with pytest.raises(ValueError):
        driven_spectrum(chain[0], J, 0.0, [])


def test_single_markers_are_band_energies():
    mk = transition_frequencies(LatticeSpec(4, J=J))
    assert np.allclose(np.sort(mk["single"]) / J, sorted(2 * math.cos(k * math.pi / 5) for k in range(1, 5)))
    assert len(mk["pair"]) == 6


def test_pair_markers_symmetric_without_nnn():
    pair = np.sort(transition_frequencies(LatticeSpec(4, J=J))["pair"])
    assert np.allclose(pair, -pair[::-1], atol=1e-12 * J)


def test_markers_with_nnn_match_dense_diagonalisation():
    spec = LatticeSpec(4, J=J, J_nnn=mhz(0.55))
    b = lattice_basis(4)
    Hd = bose_hubbard_hamiltonian(spec, b).toarray()
    counts = b.site_count()
    one = np.linalg.eigvalsh(Hd[np.ix_(counts == 1, counts == 1)])
    two = np.linalg.eigvalsh(Hd[np.ix_(counts == 2, counts == 2)])
    mk = transition_frequencies(spec)
    assert np.allclose(mk["single"], one, atol=1e-9 * J)
    assert np.allclose(mk["pair"], two / 2, atol=1e-9 * J)
    plain = transition_frequencies(LatticeSpec(4, J=J))
    assert not np.allclose(mk["single"], plain["single"])


def test_markers_csv(tmp_path):
    mk = transition_frequencies(LatticeSpec(4, J=J, J_nnn=mhz(0.55)))
    p = tmp_path / "markers.csv"
    write_markers_csv(p, mk)
    rows = list(csv.DictReader(p.read_text(encoding="utf-8").splitlines()))
    assert len(rows) == 10
    assert list(rows[0]) == ["kind", "N", "k", "frequency_MHz"]
    single = [float(r["frequency_MHz"]) for r in rows if r["kind"] == "single"]
    assert np.allclose(np.array(single) * 2 * math.pi, mk["single"], rtol=1e-15)
