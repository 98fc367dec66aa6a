"""Replays of the standard measurement sequences on small lattices.

Each replay returns a :class:`ResultTable`; the command-line runner writes
those tables to CSV. Defaults reproduce the reference device parameters:
J = 2 pi x 5.8 MHz, T1 = 25 us, Tphi = 10 us, 6 % thermal population.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .dynamics import (
    IntegratorConfig,
    QuantumState,
    apply_rotation,
    evolve,
    fock_state,
    thermal_product_state,
)
from .fockspace import lattice_basis, number_op, total_number_op
from .measurement import (
    beamsplitter_protocol,
    current_operator,
    manifold_current,
)
from .model import (
    BathSpec,
    DriveSchedule,
    LatticeSpec,
    PiecewiseLinear,
    bose_hubbard_hamiltonian,
    collapse_operators,
    driven_hamiltonian_td,
    lattice_hamiltonian_td,
    mhz,
)
from .spectrum import all_manifolds

__all__ = [
    "ResultTable",
    "adiabatic_fill",
    "bath_dynamics",
    "bath_transport_point",
    "bath_transport_sweep",
    "beat_period",
    "double_well_replay",
    "double_well_state",
    "fill_schedule",
    "reference_lattice",
    "transport_baths",
]


def reference_lattice(n_sites: int = 4, **changes) -> LatticeSpec:
    """Reference chain: J = 5.8 MHz, J_nnn = 0.55 MHz, T1 = 25 us, Tphi = 10 us, n_th = 0.06."""
    base = dict(J=mhz(5.8), J_nnn=mhz(0.55), T1=25.0, Tphi=10.0, n_th=0.06)
    base.update(changes)
    return LatticeSpec(n_sites, **base)


@dataclass
class ResultTable:
    """Rectangular table of floats with a named header."""

    columns: list
    rows: np.ndarray

    def __post_init__(self):
        self.columns = list(self.columns)
        self.rows = np.atleast_2d(np.asarray(self.rows, dtype=float))
        if self.rows.size and self.rows.shape[1] != len(self.columns):
            raise ValueError(f"header has {len(self.columns)} columns, rows have {self.rows.shape[1]}")

    def __len__(self):
        return self.rows.shape[0] if self.rows.size else 0

    def column(self, name) -> np.ndarray:
        return self.rows[:, self.columns.index(name)]

    def with_leading(self, names, values) -> ResultTable:
        """Prepend constant columns (e.g. sweep parameters) to every row."""
        lead = np.tile(np.asarray(values, dtype=float), (len(self), 1))
        return ResultTable(list(names) + self.columns, np.hstack([lead, self.rows]))

    @staticmethod
    def concat(tables) -> ResultTable:
        tables = list(tables)
        if not tables:
            raise ValueError("nothing to concatenate")
        cols = tables[0].columns
        if any(t.columns != cols for t in tables):
            raise ValueError("tables have different headers")
        return ResultTable(cols, np.vstack([t.rows for t in tables]))

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(self.columns)
            for row in self.rows:
                w.writerow([f"{v:.17g}" for v in row])

    @classmethod
    def from_csv(cls, path) -> ResultTable:
        with open(path, newline="", encoding="utf-8") as fh:
            header = next(csv.reader(fh))
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(header, data)


# ---------------------------------------------------------------- double well


def double_well_state(spec: LatticeSpec, angles_deg=(127.0, 90.0)) -> QuantumState:
    """Thermal two-site state followed by X rotations on the left and right site."""
    if spec.n_sites != 2:
        raise ValueError("double-well preparation needs a two-site lattice")
    basis = lattice_basis(2, spec.site_dim)
    st = thermal_product_state(spec, basis)
    for site, ang in enumerate(angles_deg):
        st = apply_rotation(st, site, "x", math.radians(ang))
    return st


def double_well_replay(spec: LatticeSpec | None = None, angles_deg=(127.0, 90.0), times_ns=None,
                       cfg: IntegratorConfig | None = None) -> ResultTable:
    """Resonant double-well evolution read out through the beamsplitter.

    Columns: ``t_ns, j_expect_over_J, imbalance, P_m2J, P_m1J, P_0, P_p1J, P_p2J``.
    ``imbalance`` is ``<n_R - n_L>``. Decoherence during the evolution and the
    beamsplitter follows ``spec`` (use :meth:`LatticeSpec.closed` for a
    coherent replay).
    """
    spec = spec or LatticeSpec(2, J=mhz(5.8), n_th=0.06)
    times_ns = np.arange(0.0, 200.0 + 1e-9, 2.0) if times_ns is None else np.asarray(times_ns, dtype=float)
    st = double_well_state(spec, angles_deg)
    basis = st.basis
    H = bose_hubbard_hamiltonian(spec, basis)
    c_ops = collapse_operators(spec, (), basis)
    imb = number_op(basis, basis.site_label(1)) - number_op(basis, basis.site_label(0))
    tr = evolve(st, H, c_ops, sample_times=times_ns * 1e-3, cfg=cfg, observables={"imbalance": imb},
                store_states=True)
    noisy = bool(np.any(np.isfinite(spec.T1)) or np.any(np.isfinite(spec.Tphi)))
    rows = []
    for t, s, m in zip(times_ns, tr.states, tr["imbalance"]):
        cs = beamsplitter_protocol(s, (0, 1), spec, with_decoherence=noisy, cfg=cfg)
        rows.append([t, cs.mean_over_J(), m, *cs.as_array()])
    return ResultTable(["t_ns", "j_expect_over_J", "imbalance", "P_m2J", "P_m1J", "P_0", "P_p1J", "P_p2J"], rows)


# ---------------------------------------------------------------- adiabatic fill


def fill_schedule(omega=mhz(4.2), delta_start=mhz(30.0), delta_end=mhz(-30.0), ramp_duration=0.75,
                  amplitude_ramp=0.3, phases=0.0) -> DriveSchedule:
    """Drive on at ``delta_start``, linear detuning sweep, drive off at ``delta_end``.

    Durations in us. The default sweep rate is 2 pi x 80 MHz/us.
    """
    if ramp_duration <= 0 or amplitude_ramp <= 0:
        raise ValueError("ramp durations must be positive")
    t1 = amplitude_ramp
    t2 = t1 + ramp_duration
    t3 = t2 + amplitude_ramp
    ts = [0.0, t1, t2, t3]
    return DriveSchedule(PiecewiseLinear(ts, [0.0, omega, omega, 0.0]),
                         PiecewiseLinear(ts, [delta_start, delta_start, delta_end, delta_end]), phi=phases)


def adiabatic_fill(spec: LatticeSpec | None = None, schedule: DriveSchedule | None = None, thermal: bool = True,
                   n_samples: int = 2, cfg: IntegratorConfig | None = None) -> ResultTable:
    """Coherent filling by an adiabatic detuning sweep of a global drive.

    Columns: ``t_us, n_mean`` (filling fraction), ``P_full`` (all sites
    occupied) and ``n_<site>`` for every site.
    """
    spec = spec or reference_lattice(4, J_nnn=0.0)
    schedule = schedule or fill_schedule()
    basis = lattice_basis(spec.n_sites, spec.site_dim)
    st = thermal_product_state(spec, basis) if thermal else fock_state(basis, (0,) * spec.n_sites)
    H = driven_hamiltonian_td(spec, schedule, basis)
    c_ops = collapse_operators(spec, (), basis)
    t0, t1 = schedule.support
    times = np.linspace(t0, t1, max(2, n_samples))
    full = basis.index((1,) * spec.n_sites)
    obs = {"n_mean": total_number_op(basis) / spec.n_sites,
           "P_full": lambda s: float(np.real(s.density()[full, full]))}
    for i in range(spec.n_sites):
        obs[f"n_{i}"] = number_op(basis, basis.site_label(i))
    tr = evolve(st, H, c_ops, sample_times=times, cfg=cfg, observables=obs)
    names = list(obs)
    return ResultTable(["t_us"] + names, np.column_stack([times] + [tr[n] for n in names]))


# ---------------------------------------------------------------- baths


def transport_baths(spec: LatticeSpec, g, delta, kappa=mhz(1.5), n_th_res=0.02, window=(0.0, 2.0),
                    source_site=0, drain_site=None) -> list[BathSpec]:
    """Source on the first site and drain on the last, sharing coupling and detuning."""
    drain_site = spec.n_sites - 1 if drain_site is None else drain_site
    return [BathSpec("source", source_site, g, delta, kappa, n_th_res, window),
            BathSpec("drain", drain_site, g, delta, kappa, n_th_res, window)]


def _bath_setup(spec, baths):
    res = sorted({b.site for b in baths})
    basis = lattice_basis(spec.n_sites, spec.site_dim, resonator_sites=res)
    H = lattice_hamiltonian_td(spec, basis, baths)
    c_ops = collapse_operators(spec, baths, basis)
    return basis, H, c_ops


def _middle_bond(spec):
    l = (spec.n_sites - 1) // 2
    return (l, l + 1)


def bath_transport_point(spec: LatticeSpec, baths, t_read: float = 2.0, bond=None,
                         cfg: IntegratorConfig | None = None) -> dict:
    """Current ``<j>/J`` on ``bond`` (default: middle) and particle number at ``t_read``."""
    bond = bond or _middle_bond(spec)
    basis, H, c_ops = _bath_setup(spec, baths)
    J_bond = spec.bond_J(*bond)
    st = thermal_product_state(spec, basis, baths)
    obs = {"j": current_operator(basis, bond[0], bond[1], J_bond), "N": total_number_op(basis)}
    tr = evolve(st, H, c_ops, sample_times=[0.0, t_read], cfg=cfg, observables=obs)
    return {"j_over_J": float(tr["j"][-1] / J_bond), "N": float(tr["N"][-1])}


def bath_transport_sweep(spec: LatticeSpec, detunings, g=mhz(1.0), t_read: float = 2.0, **bath_kw) -> ResultTable:
    """Serial detuning sweep. Columns ``delta_MHz, j_over_J, N``."""
    rows = []
    for d in detunings:
        r = bath_transport_point(spec, transport_baths(spec, g, d, **bath_kw), t_read)
        rows.append([d / (2 * math.pi), r["j_over_J"], r["N"]])
    return ResultTable(["delta_MHz", "j_over_J", "N"], rows)


def beat_period(spec: LatticeSpec, N: int = 1, resolution: float = 1e-6) -> float:
    """Longest beat period among the coherence frequencies of manifold ``N``.

    Coherences ``E_k - E_l`` oscillate in the current; the slowest beat
    between two distinct coherence frequencies sets the averaging window.
    """
    basis = lattice_basis(spec.n_sites, spec.site_dim)
    E = next(m for m in all_manifolds(bose_hubbard_hamiltonian(spec, basis), basis) if m.N == N).energies
    w = np.unique(np.round([abs(a - b) for i, a in enumerate(E) for b in E[:i]], 12))
    w = w[w > resolution]
    dw = np.diff(w)
    dw = dw[dw > resolution]
    slowest = dw.min() if dw.size else w.min()
    return 2 * math.pi / slowest


def bath_dynamics(spec: LatticeSpec, baths, t_end: float, dt: float = 0.01, bond=None,
                  cfg: IntegratorConfig | None = None) -> ResultTable:
    """Current dynamics with manifold decomposition.

    Columns: ``t_us, j_over_J, N, j_N0_over_J, ..., j_N<n>_over_J``. Each
    manifold column is the contribution of lattice eigenstates holding that
    many particles; they sum to the total current.
    """
    bond = bond or _middle_bond(spec)
    basis, H, c_ops = _bath_setup(spec, baths)
    J_bond = spec.bond_J(*bond)
    lat = lattice_basis(spec.n_sites, spec.site_dim)
    spectra = all_manifolds(bose_hubbard_hamiltonian(spec, lat), lat)
    Ns = [s.N for s in spectra]
    st = thermal_product_state(spec, basis, baths)
    times = np.round(np.arange(0.0, t_end + 0.5 * dt, dt), 12)
    obs = {"j": current_operator(basis, bond[0], bond[1], J_bond), "N": total_number_op(basis)}
    tr = evolve(st, H, c_ops, sample_times=times, cfg=cfg, observables=obs, store_states=True)
    rows = []
    for t, s, jv, nv in zip(times, tr.states, tr["j"], tr["N"]):
        parts = manifold_current(s, bond, spectra, J_bond)
        rows.append([t, jv / J_bond, nv] + [parts[N] / J_bond for N in Ns])
    return ResultTable(["t_us", "j_over_J", "N"] + [f"j_N{N}_over_J" for N in Ns], rows)
