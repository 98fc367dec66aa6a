"""Time evolution of kets and density matrices.

Kets follow the Schroedinger equation; density matrices the Lindblad master
equation. Both are integrated through the same ODE driver: density matrices
are column-stacked into vectors and propagated by a sparse Liouvillian.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp

from .fockspace import BasisIndex, canonical
from .model import LatticeSpec, TimeDependentOperator

__all__ = [
    "IntegrationError",
    "IntegratorConfig",
    "QuantumState",
    "Trajectory",
    "apply_rotation",
    "evolve",
    "fock_state",
    "liouvillian",
    "reduced_density",
    "thermal_product_state",
]


class IntegrationError(RuntimeError):
    """The ODE integrator could not reach the requested time."""


class QuantumState:
    """A ket (1D array) or density matrix (2D array) on a :class:`BasisIndex`."""

    def __init__(self, data, basis: BasisIndex, check: bool = True):
        data = np.array(data, dtype=np.complex128)
        D = basis.total_dim
        if data.shape == (D,):
            self.representation = "ket"
        elif data.shape == (D, D):
            self.representation = "density"
        else:
            raise ValueError(f"state shape {data.shape} does not match basis dimension {D}")
        self.data = data
        self.basis = basis
        if check:
            self.validate()

    def validate(self, ket_tol=1e-9, trace_tol=1e-8, eig_tol=1e-9):
        if self.is_ket:
            norm = np.linalg.norm(self.data)
            if abs(norm - 1) > ket_tol:
                raise ValueError(f"ket norm {norm} differs from 1")
        else:
            rho = self.data
            if np.max(np.abs(rho - rho.conj().T), initial=0.0) > 1e-10:
                raise ValueError("density matrix is not Hermitian")
            tr = np.trace(rho).real
            if abs(tr - 1) > trace_tol:
                raise ValueError(f"density matrix trace {tr} differs from 1")
            lam = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))
            if lam[0] < -eig_tol:
                raise ValueError(f"density matrix has eigenvalue {lam[0]}")
        return self

    @property
    def is_ket(self) -> bool:
        return self.representation == "ket"

    def density(self) -> np.ndarray:
        if self.is_ket:
            return np.outer(self.data, self.data.conj())
        return self.data

    def to_density(self) -> QuantumState:
        return QuantumState(self.density(), self.basis, check=False)

    def populations(self) -> np.ndarray:
        """Probability of every basis state."""
        if self.is_ket:
            return np.abs(self.data) ** 2
        return np.real(np.diag(self.data)).copy()

    def expect(self, op) -> complex:
        if self.is_ket:
            return complex(np.vdot(self.data, op @ self.data))
        if sp.issparse(op):
            return complex(op.multiply(self.data.T).sum())
        return complex(np.sum(np.asarray(op) * self.data.T))

    def mode_occupations(self) -> np.ndarray:
        """Mean occupation of every mode."""
        return self.populations() @ self.basis.occupations

    def __repr__(self):
        return f"QuantumState({self.representation}, dim={self.basis.total_dim})"


def fock_state(basis: BasisIndex, occupation) -> QuantumState:
    psi = np.zeros(basis.total_dim, dtype=np.complex128)
    psi[basis.index(occupation)] = 1.0
    return QuantumState(psi, basis)


def thermal_product_state(spec: LatticeSpec, basis: BasisIndex, baths=()) -> QuantumState:
    """Product of per-site ``diag(1-n_th, n_th)`` (and per-resonator) populations."""
    n_res = {b.resonator: b.n_th_res for b in baths}
    probs = np.ones(basis.total_dim)
    for k, mode in enumerate(basis.modes):
        if mode.kind == "site":
            p1 = float(spec.n_th[basis.site_positions.index(k)])
        else:
            p1 = float(n_res.get(mode.label, 0.0))
        local = np.zeros(mode.dim)
        local[0], local[1] = 1.0 - p1, p1
        probs = probs * local[basis.occupations[:, k]]
    return QuantumState(np.diag(probs.astype(np.complex128)), basis)


def _embed(basis: BasisIndex, k: int, local: np.ndarray) -> sp.csr_matrix:
    out = sp.identity(1, dtype=np.complex128, format="csr")
    for j, d in enumerate(basis.dims):
        factor = sp.csr_matrix(local) if j == k else sp.identity(d, dtype=np.complex128, format="csr")
        out = sp.kron(out, factor, format="csr")
    return canonical(out)


def apply_rotation(state: QuantumState, site, axis: str, angle: float) -> QuantumState:
    """Single-qubit rotation ``exp(-i angle sigma_axis / 2)`` on a two-level site."""
    basis = state.basis
    k = basis.site_positions[site] if isinstance(site, (int, np.integer)) else basis.position(site)
    if basis.dims[k] != 2:
        raise ValueError(f"rotation needs a two-level site, mode {basis.labels[k]!r} has dim {basis.dims[k]}")
    c, s = math.cos(angle / 2), math.sin(angle / 2)
    if axis == "x":
        R = np.array([[c, -1j * s], [-1j * s, c]])
    elif axis == "y":
        R = np.array([[c, -s], [s, c]], dtype=np.complex128)
    else:
        raise ValueError(f"axis must be 'x' or 'y', got {axis!r}")
    U = _embed(basis, k, R)
    if state.is_ket:
        return QuantumState(U @ state.data, basis)
    rho = U @ state.data
    rho = (U.conj() @ rho.T).T
    return QuantumState(rho, basis, check=False)


def reduced_density(state: QuantumState, keep) -> np.ndarray:
    """Reduced density matrix of the listed modes (labels or positions), in listed order."""
    basis = state.basis
    keep = [basis.position(m) for m in keep]
    nm = len(basis.dims)
    rest = [k for k in range(nm) if k not in keep]
    dk = int(np.prod([basis.dims[k] for k in keep]))
    if state.is_ket:
        psi = state.data.reshape(basis.dims).transpose(keep + rest).reshape(dk, -1)
        return psi @ psi.conj().T
    rho = state.data.reshape(basis.dims + basis.dims)
    ket_idx = list(range(nm))
    bra_idx = [nm + k if k in keep else k for k in range(nm)]
    out_idx = keep + [nm + k for k in keep]
    red = np.einsum(rho, ket_idx + bra_idx, out_idx)
    return red.reshape(dk, dk)


@dataclass
class IntegratorConfig:
    """``method``: ``"rk45"`` (adaptive Dormand-Prince) or ``"rk4"`` (fixed step).

    ``max_step`` of ``None`` means ``0.2 / ||H||``; for ``rk4`` it is the step.
    """

    method: str = "rk45"
    rtol: float = 1e-8
    atol: float = 1e-10
    max_step: float | None = None

    def __post_init__(self):
        if self.method not in ("rk45", "rk4"):
            raise ValueError(f"unknown integration method {self.method!r}")
        if self.rtol <= 0 or self.atol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_step is not None and self.max_step <= 0:
            raise ValueError("max_step must be positive")


@dataclass
class Trajectory:
    times: np.ndarray
    expect: dict = field(default_factory=dict)
    states: list | None = None

    def __getitem__(self, name):
        return self.expect[name]

    def to_csv(self, path, time_label="t_us", scale=1.0):
        names = list(self.expect)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow([time_label] + names)
            for k, t in enumerate(self.times):
                w.writerow([f"{t * scale:.17g}"] + [f"{self.expect[n][k]:.17g}" for n in names])


def _as_td(hamiltonian):
    if isinstance(hamiltonian, TimeDependentOperator):
        return hamiltonian
    if sp.issparse(hamiltonian) or isinstance(hamiltonian, np.ndarray):
        return TimeDependentOperator([(hamiltonian, None)])
    if callable(hamiltonian):
        return None
    raise TypeError("hamiltonian must be a sparse matrix, a TimeDependentOperator or a callable t -> H")


def _dissipator(c):
    D = c.shape[0]
    eye = sp.identity(D, dtype=np.complex128, format="csr")
    cdc = (c.conj().T @ c).tocsr()
    return sp.kron(c.conj(), c) - 0.5 * sp.kron(eye, cdc) - 0.5 * sp.kron(cdc.T, eye)


def _commutator_super(H):
    D = H.shape[0]
    eye = sp.identity(D, dtype=np.complex128, format="csr")
    return -1j * (sp.kron(eye, H) - sp.kron(H.T, eye))


def liouvillian(H, c_ops=()) -> sp.csr_matrix:
    """Column-stacked Lindblad generator for a static Hamiltonian."""
    H = canonical(H)
    L = _commutator_super(H)
    for c in c_ops:
        L = L + _dissipator(canonical(c))
    return sp.csr_matrix(L)


class _Generator:
    """Right-hand side ``y' = A0 y + sum_k f_k(t) A_k y`` of the vectorised ODE."""

    def __init__(self, H, c_ops, density: bool):
        self.density = density
        td = _as_td(H)
        self.callable_H = None if td is not None else H
        c_ops = [canonical(c) for c in c_ops]
        if td is None:
            self.static = None
            self.diss = None
            if density and c_ops:
                D = c_ops[0].shape[0]
                self.diss = liouvillian(sp.csr_matrix((D, D), dtype=np.complex128), c_ops)
            self.timed = []
            self.breakpoints = ()
            return
        const = [op for op, c in td.terms if c is None]
        timed = [(op, c) for op, c in td.terms if c is not None]
        H0 = sum(const[1:], start=const[0]) if const else sp.csr_matrix((td.dim, td.dim), dtype=np.complex128)
        if density:
            A0 = liouvillian(H0, c_ops)
            self.timed = [(sp.csr_matrix(_commutator_super(canonical(op))), c) for op, c in timed]
        else:
            A0 = sp.csr_matrix(-1j * H0)
            self.timed = [(sp.csr_matrix(-1j * canonical(op)), c) for op, c in timed]
        self.static = A0
        self.breakpoints = td.breakpoints
        self.td = td

    def __call__(self, t, y):
        if self.static is None:
            H = canonical(self.callable_H(t))
            if not self.density:
                return -1j * (H @ y)
            D = H.shape[0]
            rho = y.reshape(D, D, order="F")
            out = -1j * (H @ rho - (H.T @ rho.T).T)
            out = out.reshape(-1, order="F")
            if self.diss is not None:
                out = out + self.diss @ y
            return out
        out = self.static @ y
        for A, c in self.timed:
            f = c(t)
            if f != 0:
                out = out + f * (A @ y)
        return out

    def norm_bound(self, times) -> float:
        if self.static is None:
            return max(float(abs(canonical(self.callable_H(t))).sum(axis=0).max()) for t in times)
        return self.td.norm_bound(times)


def _rk4(fun, t0, t1, y, h):
    n = max(1, int(math.ceil((t1 - t0) / h - 1e-12)))
    dt = (t1 - t0) / n
    t = t0
    for _ in range(n):
        k1 = fun(t, y)
        k2 = fun(t + dt / 2, y + dt / 2 * k1)
        k3 = fun(t + dt / 2, y + dt / 2 * k2)
        k4 = fun(t + dt, y + dt * k3)
        y = y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t += dt
    return y


def evolve(
    state: QuantumState,
    hamiltonian,
    collapse_ops=(),
    tspan=None,
    sample_times=None,
    cfg: IntegratorConfig | None = None,
    observables=None,
    store_states: bool = False,
) -> Trajectory:
    """Propagate ``state`` and record observables at ``sample_times``.

    ``hamiltonian`` is a static sparse matrix, a :class:`TimeDependentOperator`
    or any callable ``t -> H``. A ket with no collapse operators follows the
    Schroedinger equation; otherwise the Lindblad equation is solved. Observables
    map a name to a Hermitian operator or to a callable of the state.
    """
    cfg = cfg or IntegratorConfig()
    collapse_ops = list(collapse_ops)
    basis = state.basis
    D = basis.total_dim
    for c in collapse_ops:
        if c.shape != (D, D):
            raise ValueError(f"collapse operator shape {c.shape} does not match dimension {D}")
    if sample_times is None:
        if tspan is None:
            raise ValueError("need tspan or sample_times")
        sample_times = np.asarray(tspan, dtype=float)
    sample_times = np.atleast_1d(np.asarray(sample_times, dtype=float))
    if np.any(np.diff(sample_times) <= 0):
        raise ValueError("sample_times must be strictly increasing")
    t0, t1 = (float(sample_times[0]), float(sample_times[-1])) if tspan is None else (float(tspan[0]), float(tspan[-1]))
    if sample_times[0] < t0 - 1e-12 or sample_times[-1] > t1 + 1e-12:
        raise ValueError("sample_times must lie inside tspan")

    density = (not state.is_ket) or bool(collapse_ops)
    gen = _Generator(hamiltonian, collapse_ops, density)
    H_probe = gen.td(t0) if gen.static is not None else canonical(hamiltonian(t0))
    if H_probe.shape != (D, D):
        raise ValueError(f"Hamiltonian shape {H_probe.shape} does not match dimension {D}")

    if density:
        y = state.density().reshape(-1, order="F").copy()
    else:
        y = state.data.copy()

    cuts = [b for b in gen.breakpoints if t0 < b < t1]
    bounds = [t0] + cuts + [t1]
    max_step = cfg.max_step
    if max_step is None:
        probe = sorted(set(bounds + [0.5 * (a + b) for a, b in zip(bounds[:-1], bounds[1:])]))
        rho_H = gen.norm_bound(probe)
        max_step = 0.2 / rho_H if rho_H > 0 else math.inf

    observables = dict(observables or {})
    names = list(observables)
    values = {n: np.empty(len(sample_times)) for n in names}
    states = [] if store_states else None

    def record(k, yk):
        if density:
            st = QuantumState(yk.reshape(D, D, order="F"), basis, check=False)
        else:
            st = QuantumState(yk, basis, check=False)
        for n in names:
            ob = observables[n]
            values[n][k] = ob(st) if callable(ob) and not sp.issparse(ob) else st.expect(ob).real
        if store_states:
            states.append(st)

    k = 0
    while k < len(sample_times) and sample_times[k] <= t0 + 1e-12:
        record(k, y)
        k += 1
    for a, b in zip(bounds[:-1], bounds[1:]):
        targets = [t for t in sample_times[k:] if t <= b + 1e-12]
        stops = targets if targets and abs(targets[-1] - b) <= 1e-12 else targets + [b]
        if cfg.method == "rk4":
            t_prev = a
            for t_stop in stops:
                y = _rk4(gen, t_prev, t_stop, y, max_step)
                t_prev = t_stop
                if k < len(sample_times) and abs(sample_times[k] - t_stop) <= 1e-12:
                    record(k, y)
                    k += 1
            continue
        sol = solve_ivp(
            gen, (a, b), y, method="RK45", t_eval=np.asarray(stops),
            rtol=cfg.rtol, atol=cfg.atol, max_step=max_step,
        )
        if sol.status != 0:
            raise IntegrationError(f"integration failed on [{a}, {b}]: {sol.message}")
        for j, t_stop in enumerate(stops):
            if k < len(sample_times) and abs(sample_times[k] - t_stop) <= 1e-12:
                record(k, sol.y[:, j])
                k += 1
        y = sol.y[:, -1]
    return Trajectory(times=sample_times.copy(), expect=values, states=states)
