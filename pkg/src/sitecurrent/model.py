"""Lattice, drive and bath Hamiltonians in the frame rotating at the lattice frequency.

Units: angular frequency in rad/us, time in us. Use :func:`mhz` to convert an
ordinary frequency quoted in MHz.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.special import j1

from .fockspace import (
    RESONATOR,
    BasisIndex,
    annihilation_op,
    canonical,
    creation_op,
    number_op,
    total_number_op,
)

__all__ = [
    "TWO_PI",
    "BathSpec",
    "DriveSchedule",
    "LatticeSpec",
    "PiecewiseLinear",
    "SidebandDrive",
    "TimeDependentOperator",
    "bath_hamiltonian",
    "bath_hamiltonian_td",
    "bose_hubbard_hamiltonian",
    "collapse_operators",
    "drive_operator",
    "driven_hamiltonian",
    "driven_hamiltonian_td",
    "lattice_hamiltonian_td",
    "mhz",
    "sideband_rate",
    "to_mhz",
]

TWO_PI = 2.0 * math.pi


def mhz(f):
    """Ordinary frequency in MHz -> angular frequency in rad/us."""
    return TWO_PI * np.asarray(f, dtype=float) if np.ndim(f) else TWO_PI * float(f)


def to_mhz(w):
    return np.asarray(w, dtype=float) / TWO_PI if np.ndim(w) else float(w) / TWO_PI


def _per(value, n, name):
    arr = np.broadcast_to(np.asarray(value, dtype=float), (n,)) if np.ndim(value) == 0 else np.asarray(value, dtype=float)
    if arr.shape != (n,):
        raise ValueError(f"{name}: expected {n} values, got {arr.shape[0] if arr.ndim else arr}")
    return np.array(arr, dtype=float)


@dataclass
class LatticeSpec:
    """Parameters of a 1D Bose-Hubbard chain.

    Frequencies are angular (rad/us); ``T1``/``Tphi`` in us, ``inf`` disables
    the channel. Scalars are broadcast to per-bond / per-site arrays.
    """

    n_sites: int
    J: object = 0.0
    J_nnn: object = 0.0
    U: object = 0.0
    epsilon: object = 0.0
    T1: object = math.inf
    Tphi: object = math.inf
    n_th: object = 0.0
    site_dim: int = 2

    def __post_init__(self):
        n = int(self.n_sites)
        if n < 2:
            raise ValueError("n_sites must be >= 2")
        self.n_sites = n
        self.J = _per(self.J, n - 1, "J")
        self.J_nnn = _per(self.J_nnn, max(n - 2, 0), "J_nnn")
        self.U = _per(self.U, n, "U")
        self.epsilon = _per(self.epsilon, n, "epsilon")
        self.T1 = _per(self.T1, n, "T1")
        self.Tphi = _per(self.Tphi, n, "Tphi")
        self.n_th = _per(self.n_th, n, "n_th")
        if np.any(self.T1 <= 0) or np.any(self.Tphi <= 0):
            raise ValueError("T1 and Tphi must be positive (use inf to disable)")
        if np.any(self.n_th < 0) or np.any(self.n_th >= 0.5):
            raise ValueError("n_th must lie in [0, 0.5)")
        if self.site_dim < 2:
            raise ValueError("site_dim must be >= 2")

    def replace(self, **changes) -> LatticeSpec:
        return dataclasses.replace(self, **changes)

    def closed(self) -> LatticeSpec:
        """Same lattice with relaxation and dephasing switched off."""
        return self.replace(T1=math.inf, Tphi=math.inf)

    def bond_J(self, l: int, r: int) -> float:
        if abs(l - r) == 1:
            return float(self.J[min(l, r)])
        if abs(l - r) == 2:
            return float(self.J_nnn[min(l, r)])
        raise ValueError(f"sites {l} and {r} are not coupled")

    @property
    def hard_core(self) -> bool:
        return self.site_dim == 2


class PiecewiseLinear:
    """Piecewise-linear function of time through ``(times, values)`` breakpoints.

    A single breakpoint defines a constant valid at all times.
    """

    def __init__(self, times, values):
        times = np.atleast_1d(np.asarray(times, dtype=float))
        values = np.atleast_1d(np.asarray(values, dtype=float))
        if times.shape != values.shape or times.size == 0:
            raise ValueError("times and values must be nonempty and of equal length")
        if np.any(np.diff(times) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        self.times = times
        self.values = values

    @classmethod
    def constant(cls, value):
        return cls([0.0], [value])

    @property
    def support(self) -> tuple[float, float]:
        if self.times.size == 1:
            return (-math.inf, math.inf)
        return (float(self.times[0]), float(self.times[-1]))

    def __call__(self, t):
        if self.times.size == 1:
            return float(self.values[0]) if np.ndim(t) == 0 else np.full(np.shape(t), self.values[0])
        return np.interp(t, self.times, self.values)

    def __repr__(self):
        return f"PiecewiseLinear({self.times.tolist()}, {self.values.tolist()})"


@dataclass
class DriveSchedule:
    """Global coherent drive: Rabi amplitude ``omega(t)``, detuning ``delta(t)``
    and a fixed phase per site. ``scale`` sets per-site relative amplitudes."""

    omega: PiecewiseLinear
    delta: PiecewiseLinear
    phi: object = 0.0
    scale: object = 1.0

    def __post_init__(self):
        if not isinstance(self.omega, PiecewiseLinear):
            self.omega = PiecewiseLinear(*self.omega)
        if not isinstance(self.delta, PiecewiseLinear):
            self.delta = PiecewiseLinear(*self.delta)
        if np.any(self.omega.values < 0):
            raise ValueError("drive amplitude must be >= 0")

    @property
    def support(self) -> tuple[float, float]:
        a0, a1 = self.omega.support
        b0, b1 = self.delta.support
        return (max(a0, b0), min(a1, b1))

    @property
    def breakpoints(self) -> tuple[float, ...]:
        pts = set()
        for f in (self.omega, self.delta):
            if f.times.size > 1:
                pts.update(f.times.tolist())
        return tuple(sorted(pts))

    def check_time(self, t):
        lo, hi = self.support
        if not (lo - 1e-12 <= t <= hi + 1e-12):
            raise ValueError(f"t={t} outside drive schedule support [{lo}, {hi}]")


@dataclass
class BathSpec:
    """Engineered particle bath: a lossy resonator parametrically coupled to one site.

    ``delta`` is the lattice-frame energy at which the bath exchanges particles
    (bath above the lattice frequency for ``delta > 0``).
    """

    kind: str
    site: int
    g: float
    delta: float = 0.0
    kappa: float = TWO_PI * 1.5
    n_th_res: float = 0.0
    window: tuple = (0.0, math.inf)
    resonator_dim: int = 2

    def __post_init__(self):
        if self.kind not in ("drain", "source"):
            raise ValueError(f"bath kind must be 'drain' or 'source', got {self.kind!r}")
        if self.g < 0:
            raise ValueError("bath coupling g must be >= 0")
        if self.kappa <= 0:
            raise ValueError("bath linewidth kappa must be > 0")
        if self.n_th_res < 0:
            raise ValueError("n_th_res must be >= 0")
        t_on, t_off = self.window
        if not t_on < t_off:
            raise ValueError(f"bath window must satisfy t_on < t_off, got {self.window}")
        self.window = (float(t_on), float(t_off))

    @property
    def resonator(self) -> str:
        return f"r{self.site}"

    def active(self, t) -> float:
        return 1.0 if self.window[0] <= t < self.window[1] else 0.0


@dataclass
class SidebandDrive:
    """Flux-modulation sideband between a transmon site and its resonator."""

    A_mod: float
    omega_r: float
    omega_q: float
    g_bare: float
    kind: str = "red"


class TimeDependentOperator:
    """Sum of sparse operators with optional scalar time coefficients.

    ``terms`` is a list of ``(operator, coeff)`` where ``coeff`` is ``None``
    (constant) or a callable of ``t``. Coefficients may jump or kink only at
    ``breakpoints``; integrators restart there.
    """

    def __init__(self, terms, breakpoints=()):
        self.terms = [(canonical(op), c) for op, c in terms]
        if not self.terms:
            raise ValueError("need at least one term")
        self.dim = self.terms[0][0].shape[0]
        self.breakpoints = tuple(sorted({float(b) for b in breakpoints}))

    def __call__(self, t) -> sp.csr_matrix:
        out = sp.csr_matrix((self.dim, self.dim), dtype=np.complex128)
        for op, c in self.terms:
            out = out + (op if c is None else c(t) * op)
        return canonical(out)

    def __add__(self, other):
        if not isinstance(other, TimeDependentOperator):
            other = TimeDependentOperator([(other, None)])
        return TimeDependentOperator(self.terms + other.terms, self.breakpoints + other.breakpoints)

    def norm_bound(self, times) -> float:
        """Upper bound on the spectral radius over ``times`` (1-norm of H(t))."""
        best = 0.0
        for t in times:
            total = sp.csr_matrix((self.dim, self.dim), dtype=np.complex128)
            for op, c in self.terms:
                total = total + (op if c is None else c(t) * op)
            if total.nnz:
                best = max(best, float(abs(total).sum(axis=0).max()))
        return best


def _check_sites(spec: LatticeSpec, basis: BasisIndex):
    if len(basis.site_positions) != spec.n_sites:
        raise ValueError(f"basis has {len(basis.site_positions)} sites, lattice has {spec.n_sites}")


def _hop(basis, i, j):
    a_i = basis.site_label(i)
    a_j = basis.site_label(j)
    term = creation_op(basis, a_i) @ annihilation_op(basis, a_j)
    return term + term.conj().T


def bose_hubbard_hamiltonian(spec: LatticeSpec, basis: BasisIndex) -> sp.csr_matrix:
    """``sum J (a_i^+ a_j + h.c.) + U/2 n(n-1) + eps n`` with J > 0 (uniform mode highest)."""
    _check_sites(spec, basis)
    D = basis.total_dim
    H = sp.csr_matrix((D, D), dtype=np.complex128)
    for b, J in enumerate(spec.J):
        if J != 0:
            H = H + J * _hop(basis, b, b + 1)
    for b, Jn in enumerate(spec.J_nnn):
        if Jn != 0:
            H = H + Jn * _hop(basis, b, b + 2)
    diag = np.zeros(D)
    for i in range(spec.n_sites):
        n = basis.occupations[:, basis.site_positions[i]].astype(float)
        diag += 0.5 * spec.U[i] * n * (n - 1) + spec.epsilon[i] * n
    return canonical(H + sp.diags(diag))


def drive_operator(basis: BasisIndex, phi, scale=1.0) -> sp.csr_matrix:
    """``sum_i (s_i/2)(a_i^+ e^{i phi_i} + h.c.)``; multiply by Omega(t)."""
    sites = basis.site_positions
    phi = _per(phi, len(sites), "phi")
    scale = _per(scale, len(sites), "scale")
    D = basis.total_dim
    out = sp.csr_matrix((D, D), dtype=np.complex128)
    for i in range(len(sites)):
        ad = creation_op(basis, basis.site_label(i)) * np.exp(1j * phi[i])
        out = out + 0.5 * scale[i] * (ad + ad.conj().T)
    return canonical(out)


def driven_hamiltonian(spec: LatticeSpec, drive: DriveSchedule, t: float, basis: BasisIndex) -> sp.csr_matrix:
    drive.check_time(t)
    H = bose_hubbard_hamiltonian(spec, basis)
    omega = float(drive.omega(t))
    delta = float(drive.delta(t))
    if omega != 0:
        H = H + omega * drive_operator(basis, drive.phi, drive.scale)
    if delta != 0:
        H = H - delta * total_number_op(basis)
    return canonical(H)


def driven_hamiltonian_td(spec: LatticeSpec, drive: DriveSchedule, basis: BasisIndex) -> TimeDependentOperator:
    """Same Hamiltonian as :func:`driven_hamiltonian` in integrator-friendly form."""
    return TimeDependentOperator(
        [
            (bose_hubbard_hamiltonian(spec, basis), None),
            (drive_operator(basis, drive.phi, drive.scale), drive.omega),
            (-total_number_op(basis), drive.delta),
        ],
        breakpoints=drive.breakpoints,
    )


def sideband_rate(sd: SidebandDrive) -> float:
    """Effective site-resonator coupling ``g J1(A_mod / w_mod)`` for a sideband drive."""
    if sd.kind == "red":
        denom = abs(sd.omega_r - sd.omega_q)
        if denom == 0:
            raise ValueError("red sideband undefined for omega_r == omega_q")
    elif sd.kind == "blue":
        denom = abs(sd.omega_r + sd.omega_q)
        if denom == 0:
            raise ValueError("blue sideband undefined for omega_r == -omega_q")
    else:
        raise ValueError(f"sideband kind must be 'red' or 'blue', got {sd.kind!r}")
    return float(j1(sd.A_mod / denom) * sd.g_bare)


def _bath_parts(b: BathSpec, basis: BasisIndex):
    try:
        k_res = basis.position(b.resonator)
    except KeyError:
        raise ValueError(f"{b.kind} bath on site {b.site}: basis lacks resonator mode {b.resonator!r}") from None
    if basis.modes[k_res].kind != RESONATOR:
        raise ValueError(f"mode {b.resonator!r} is not a resonator")
    a = annihilation_op(basis, basis.site_label(b.site))
    bb = annihilation_op(basis, b.resonator)
    if b.kind == "drain":
        coupling = a.conj().T @ bb
        # swap resonance: resonator frame energy equals the lattice energy delta
        detuning = b.delta * number_op(basis, b.resonator)
    else:
        coupling = a.conj().T @ bb.conj().T
        # pair creation: lattice delta plus resonator -delta sums to zero
        detuning = -b.delta * number_op(basis, b.resonator)
    coupling = b.g * (coupling + coupling.conj().T)
    return canonical(coupling), canonical(detuning)


def bath_hamiltonian(b: BathSpec, basis: BasisIndex) -> sp.csr_matrix:
    """Drain: ``g(a^+ b + b^+ a)``; source: ``g(a^+ b^+ + b a)``; plus resonator detuning."""
    coupling, detuning = _bath_parts(b, basis)
    return canonical(coupling + detuning)


def bath_hamiltonian_td(b: BathSpec, basis: BasisIndex) -> TimeDependentOperator:
    """Bath Hamiltonian with the coupling gated by the bath's on/off window."""
    coupling, detuning = _bath_parts(b, basis)
    terms = [(coupling, b.active)]
    if detuning.nnz:
        terms.append((detuning, None))
    pts = [w for w in b.window if math.isfinite(w)]
    return TimeDependentOperator(terms, breakpoints=pts)


def lattice_hamiltonian_td(spec: LatticeSpec, basis: BasisIndex, baths=(), drive: DriveSchedule | None = None):
    """Full time-dependent Hamiltonian: lattice (+ drive) + all baths."""
    if drive is None:
        H = TimeDependentOperator([(bose_hubbard_hamiltonian(spec, basis), None)])
    else:
        H = driven_hamiltonian_td(spec, drive, basis)
    for b in baths:
        H = H + bath_hamiltonian_td(b, basis)
    return H


def collapse_operators(spec: LatticeSpec, baths, basis: BasisIndex) -> list[sp.csr_matrix]:
    """Lindblad jump operators: site relaxation/heating/dephasing and resonator loss."""
    _check_sites(spec, basis)
    ops = []
    for i in range(spec.n_sites):
        label = basis.site_label(i)
        g1 = 1.0 / spec.T1[i]
        gphi = 1.0 / spec.Tphi[i]
        nth = spec.n_th[i]
        a = annihilation_op(basis, label)
        if g1 * (1 + nth) > 0:
            ops.append(math.sqrt(g1 * (1 + nth)) * a)
        if g1 * nth > 0:
            ops.append(math.sqrt(g1 * nth) * a.conj().T)
        if gphi > 0:
            # coherence decay rate gphi between neighbouring Fock levels
            ops.append(math.sqrt(2 * gphi) * number_op(basis, label))
    for b in baths:
        if b.kappa < 0 or b.n_th_res < 0:
            raise ValueError("negative bath rate")
        bb = annihilation_op(basis, b.resonator)
        ops.append(math.sqrt(b.kappa * (1 + b.n_th_res)) * bb)
        if b.n_th_res > 0:
            ops.append(math.sqrt(b.kappa * b.n_th_res) * bb.conj().T)
    return [canonical(c) for c in ops]
