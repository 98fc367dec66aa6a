"""Flux-line distortion compensation.

Measured (or modelled) step responses give each line's frequency response;
the regularised inverse of that response, brought back to the time domain,
is a causal kernel that pre-distorts target pulses. Crosstalk between lines is
handled by inverting the full transfer matrix frequency by frequency.

Times are in ns, frequencies in GHz (cycles per ns). Waveforms are sampled
uniformly; the default period of 1 ns matches a 1 GS/s generator.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import fftconvolve

__all__ = [
    "BalanceLimitError",
    "ExponentialSettle",
    "FrequencyResponse",
    "IllConditionedError",
    "KernelMatrix",
    "ResponseModel",
    "UnsettledResponseError",
    "Waveform",
    "compensation_kernel",
    "distort",
    "frequency_response",
    "kernel_matrix",
    "load_response_model",
    "net_zero",
    "precompensate",
    "ramp_step",
    "read_kernel_matrix",
    "read_waveform_csv",
    "spectral_mask",
    "square_pulse",
    "write_kernel_matrix",
    "write_waveform_csv",
]


class UnsettledResponseError(ValueError):
    """Step response has not settled by the end of the record."""


class IllConditionedError(np.linalg.LinAlgError):
    """Transfer matrix too close to singular to invert."""


class BalanceLimitError(ValueError):
    """Net-zero balancing would exceed the allowed amplitude."""


@dataclass
class Waveform:
    samples: np.ndarray
    dt: float = 1.0
    t0: float = 0.0

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.ndim != 1:
            raise ValueError("waveform samples must be one-dimensional")
        if not self.dt > 0:
            raise ValueError("sample period must be positive")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("waveform samples must be finite")

    def __len__(self):
        return self.samples.size

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.samples.size)

    @property
    def duration(self) -> float:
        return self.samples.size * self.dt

    def area(self) -> float:
        return float(np.sum(self.samples) * self.dt)

    def padded(self, n: int) -> Waveform:
        """Zero-pad (or truncate) to ``n`` samples."""
        out = np.zeros(n)
        m = min(n, self.samples.size)
        out[:m] = self.samples[:m]
        return Waveform(out, self.dt, self.t0)


@dataclass
class ExponentialSettle:
    """Step response ``gain * (1 - sum_k a_k exp(-t / tau_k))`` for ``t >= 0``."""

    gain: float = 1.0
    amplitudes: tuple = ()
    taus: tuple = ()

    def __post_init__(self):
        if len(self.amplitudes) != len(self.taus):
            raise ValueError("need one time constant per amplitude")
        if any(t <= 0 for t in self.taus):
            raise ValueError("time constants must be positive")

    def step(self, n: int, dt: float = 1.0) -> Waveform:
        t = dt * np.arange(n)
        s = np.ones(n)
        for a, tau in zip(self.amplitudes, self.taus):
            s -= a * np.exp(-t / tau)
        return Waveform(self.gain * s, dt)


def ramp_step(n: int, rise: float, dt: float = 1.0) -> Waveform:
    """Ideal step with a linear rise over ``rise`` ns."""
    t = dt * np.arange(1, n + 1)
    return Waveform(np.clip(t / rise, 0.0, 1.0), dt)


class ResponseModel:
    """Step responses ``s_ij``: flux seen by qubit ``i`` for a unit step on line ``j``.

    Entries are :class:`Waveform`, :class:`ExponentialSettle` or a number
    (instantaneous static coupling).
    """

    def __init__(self, entries):
        entries = [list(row) for row in entries]
        C = len(entries)
        if C == 0 or any(len(row) != C for row in entries):
            raise ValueError("response model must be a square table of channels")
        self.entries = entries
        self.channels = C
        for i in range(C):
            e = entries[i][i]
            if isinstance(e, (int, float)) and e == 0:
                raise ValueError(f"diagonal response {i} is zero")

    @classmethod
    def static(cls, matrix):
        matrix = np.asarray(matrix, dtype=float)
        return cls([[float(x) for x in row] for row in matrix])

    def step(self, i: int, j: int, n: int, dt: float = 1.0) -> Waveform:
        e = self.entries[i][j]
        if isinstance(e, Waveform):
            if not math.isclose(e.dt, dt):
                raise ValueError("step response sampled at a different period")
            out = np.full(n, e.samples[-1])
            m = min(n, e.samples.size)
            out[:m] = e.samples[:m]
            return Waveform(out, dt)
        if isinstance(e, ExponentialSettle):
            return e.step(n, dt)
        return Waveform(np.full(n, float(e)), dt)

    def impulse(self, i: int, j: int, n: int, dt: float = 1.0) -> np.ndarray:
        s = self.step(i, j, n, dt).samples
        return np.diff(s, prepend=0.0)


@dataclass
class FrequencyResponse:
    freqs: np.ndarray  # GHz, non-negative (real-signal half spectrum)
    H: np.ndarray  # complex; trailing axes may hold a channel matrix
    n: int
    dt: float


def _settled(s: np.ndarray, frac=0.1, rel=0.01) -> bool:
    tail = s[-max(1, int(round(frac * s.size))):]
    mean = tail.mean()
    scale = abs(mean) if abs(mean) > 1e-12 * max(1.0, np.max(np.abs(s))) else np.max(np.abs(s))
    if scale == 0:
        return True
    return bool(np.max(np.abs(tail - mean)) <= rel * scale)


def frequency_response(step: Waveform, n_fft: int | None = None, check_settled: bool = True) -> FrequencyResponse:
    """Transfer function of a line from its step response.

    The impulse response is the first difference of the sampled step; its
    spectrum is scaled so that ``H(0)`` equals the settled step value.
    """
    s = step.samples
    if check_settled and not _settled(s):
        raise UnsettledResponseError("step response has not settled: final 10% of samples vary by more than 1%")
    n = n_fft or s.size
    h = np.diff(s, prepend=0.0)
    H = np.fft.rfft(h, n)
    tail = s[-max(1, int(round(0.1 * s.size))):]
    gain = tail.mean()
    if abs(H[0]) > 0 and abs(gain) > 0:
        H = H * (gain / H[0].real)
    return FrequencyResponse(np.fft.rfftfreq(n, step.dt), H, n, step.dt)


def spectral_mask(freqs: np.ndarray, cutoff_time: float) -> np.ndarray:
    """1 below ``1/(2 cutoff)``, raised-cosine roll-off to 0 at twice that."""
    if math.isinf(cutoff_time):
        return (freqs == 0).astype(float)
    fc = 1.0 / (2.0 * cutoff_time)
    x = np.clip((freqs - fc) / fc, 0.0, 1.0)
    return 0.5 * (1.0 + np.cos(np.pi * x))


def _causal(k: np.ndarray, dc: np.ndarray) -> tuple[np.ndarray, float]:
    """Zero the negative-time half of circular kernels, then restore the DC sums."""
    n = k.shape[-1]
    neg = slice(n // 2 + 1, n)
    total = float(np.sum(k**2))
    prering = float(np.sum(k[..., neg] ** 2)) / total if total > 0 else 0.0
    k = k.copy()
    k[..., neg] = 0.0
    k[..., 0] += dc - k.sum(axis=-1)
    return k, prering


def compensation_kernel(response: FrequencyResponse, cutoff_time: float = 10.0, floor: float = 1e-3,
                        return_info: bool = False):
    """Causal pre-distortion kernel inverting ``response`` for features slower than ``cutoff_time``.

    Faster features are left uncorrected apart from the static gain, so the
    kernel tends to ``delta / H(0)`` as ``cutoff_time`` grows.
    """
    H = np.asarray(response.H)
    H0 = H[0]
    if H0 == 0:
        raise ZeroDivisionError("response has zero DC gain")
    mag = np.abs(H)
    lo = floor * mag.max()
    floored = int(np.count_nonzero(mag < lo))
    safe = np.where(mag < lo, lo * np.exp(1j * np.angle(H)), H)
    M = spectral_mask(response.freqs, cutoff_time)
    R = 1.0 / H0 + M * (1.0 / safe - 1.0 / H0)
    k = np.fft.irfft(R, response.n)
    k, prering = _causal(k, np.real(1.0 / H0))
    wf = Waveform(k, response.dt)
    if return_info:
        return wf, {"floored": floored, "prering_energy": prering}
    return wf


@dataclass
class KernelMatrix:
    """Line-by-target kernels: line ``j`` plays ``sum_k kernels[j, k] * target_k``."""

    kernels: np.ndarray  # (channels, channels, n)
    dt: float = 1.0
    cutoff_time: float = 10.0
    info: dict = field(default_factory=dict)

    @property
    def channels(self) -> int:
        return self.kernels.shape[0]


def _floored_inverse(Hf: np.ndarray, floor: float):
    U, sv, Vh = np.linalg.svd(Hf)
    lo = floor * sv.max()
    clipped = np.maximum(sv, lo)
    return (Vh.conj().T / clipped) @ U.conj().T, int(np.count_nonzero(sv < lo))


def kernel_matrix(responses: ResponseModel, n: int, dt: float = 1.0, cutoff_time: float = 10.0,
                  floor: float = 1e-3, max_condition: float = 1e6, check_settled: bool = True) -> KernelMatrix:
    """Kernels inverting the frequency-dependent crosstalk matrix of all lines."""
    C = responses.channels
    F = n // 2 + 1
    H = np.empty((F, C, C), dtype=np.complex128)
    freqs = None
    for i in range(C):
        for j in range(C):
            fr = frequency_response(responses.step(i, j, n, dt), check_settled=check_settled)
            H[:, i, j] = fr.H
            freqs = fr.freqs
    M = spectral_mask(freqs, cutoff_time)
    H0inv = np.linalg.inv(H[0])
    R = np.empty_like(H)
    floored = 0
    worst = 0.0
    for f in range(F):
        if M[f] == 0:
            R[f] = H0inv
            continue
        cond = np.linalg.cond(H[f])
        worst = max(worst, cond)
        if cond > max_condition:
            raise IllConditionedError(f"transfer matrix condition number {cond:.3g} at {freqs[f]:.4g} GHz")
        inv, nf = _floored_inverse(H[f], floor)
        floored += nf
        R[f] = H0inv + M[f] * (inv - H0inv)
    k = np.fft.irfft(R, n, axis=0).transpose(1, 2, 0)
    k, prering = _causal(k, np.real(H0inv))
    return KernelMatrix(k, dt, cutoff_time, {"floored": floored, "prering_energy": prering, "max_condition": worst})


def _conv(a: np.ndarray, b: np.ndarray, n: int) -> np.ndarray:
    if not np.any(a) or not np.any(b):
        return np.zeros(n)
    return fftconvolve(a, b)[:n]


def precompensate(target, kernels, channel: int = 0) -> list[Waveform]:
    """Line waveforms that reproduce ``target`` after the modelled distortion.

    ``target`` is one :class:`Waveform` meant for ``channel`` (all other
    channels held at zero) or a sequence with one target per channel.
    ``kernels`` is a :class:`KernelMatrix` or a single kernel :class:`Waveform`.
    """
    if isinstance(kernels, Waveform):
        wf = target if isinstance(target, Waveform) else target[0]
        return [Waveform(_conv(wf.samples, kernels.samples, len(wf)), wf.dt, wf.t0)]
    C = kernels.channels
    if isinstance(target, Waveform):
        if not 0 <= channel < C:
            raise IndexError(f"channel {channel} outside 0..{C - 1}")
        n = len(target)
        targets = [target.samples if c == channel else np.zeros(n) for c in range(C)]
        dt, t0 = target.dt, target.t0
    else:
        if len(target) != C:
            raise ValueError(f"need {C} targets, got {len(target)}")
        n = len(target[0])
        targets = [t.samples for t in target]
        dt, t0 = target[0].dt, target[0].t0
    lines = []
    for j in range(C):
        w = np.zeros(n)
        for k in range(C):
            w += _conv(kernels.kernels[j, k], targets[k], n)
        lines.append(Waveform(w, dt, t0))
    return lines


def distort(lines, responses: ResponseModel) -> list[Waveform]:
    """Forward model: flux seen by each qubit for the given line waveforms."""
    if isinstance(lines, Waveform):
        lines = [lines]
    C = responses.channels
    if len(lines) != C:
        raise ValueError(f"need {C} line waveforms, got {len(lines)}")
    n = len(lines[0])
    dt = lines[0].dt
    out = []
    for i in range(C):
        y = np.zeros(n)
        for j in range(C):
            y += _conv(responses.impulse(i, j, n, dt), lines[j].samples, n)
        out.append(Waveform(y, dt, lines[0].t0))
    return out


def net_zero(pulse: Waveform, max_balance_duration: float, amplitude_limit: float = math.inf) -> Waveform:
    """Append a constant balancing segment so the waveform integrates to zero."""
    if not max_balance_duration > 0:
        raise ValueError("balance duration must be positive")
    n_bal = int(round(max_balance_duration / pulse.dt))
    if n_bal < 1:
        raise ValueError("balance duration shorter than one sample")
    amp = -float(np.sum(pulse.samples)) / n_bal
    if abs(amp) > amplitude_limit:
        raise BalanceLimitError(f"balancing amplitude {abs(amp):.4g} exceeds limit {amplitude_limit:.4g}")
    return Waveform(np.concatenate([pulse.samples, np.full(n_bal, amp)]), pulse.dt, pulse.t0)


def square_pulse(n: int, start: int, stop: int, amplitude: float = 1.0, dt: float = 1.0) -> Waveform:
    s = np.zeros(n)
    s[start:stop] = amplitude
    return Waveform(s, dt)


def write_waveform_csv(path, wf: Waveform):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["t_ns", "value"])
        for t, v in zip(wf.times, wf.samples):
            w.writerow([f"{t:.17g}", f"{v:.17g}"])


def read_waveform_csv(path) -> Waveform:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    t, v = data[:, 0], data[:, 1]
    dt = float(t[1] - t[0]) if t.size > 1 else 1.0
    return Waveform(v, dt, float(t[0]))


def write_kernel_matrix(directory, km: KernelMatrix):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for j in range(km.channels):
        for k in range(km.channels):
            write_waveform_csv(directory / f"kernel_{j}_{k}.csv", Waveform(km.kernels[j, k], km.dt))


def read_kernel_matrix(directory, channels: int, cutoff_time: float = 10.0) -> KernelMatrix:
    directory = Path(directory)
    rows = [[read_waveform_csv(directory / f"kernel_{j}_{k}.csv") for k in range(channels)] for j in range(channels)]
    dt = rows[0][0].dt
    return KernelMatrix(np.array([[w.samples for w in row] for row in rows]), dt, cutoff_time)


def load_response_model(spec) -> ResponseModel:
    """Build a response model from a parsed JSON tree or a path to one.

    Accepted keys: ``channels``; ``static`` (matrix of couplings); ``exponentials``
    (list of ``{i, j, gain, amplitudes, taus_ns}``); ``step_csv`` (list of
    ``{i, j, path}`` step-response files). Later keys override earlier ones.
    """
    if not isinstance(spec, dict):
        spec = json.loads(Path(spec).read_text(encoding="utf-8"))
    C = int(spec.get("channels") or len(spec["static"]))
    entries = [[1.0 if i == j else 0.0 for j in range(C)] for i in range(C)]
    if "static" in spec:
        entries = [[float(x) for x in row] for row in spec["static"]]
    for e in spec.get("exponentials", []):
        entries[e["i"]][e["j"]] = ExponentialSettle(
            e.get("gain", 1.0), tuple(e.get("amplitudes", ())), tuple(e.get("taus_ns", ()))
        )
    for e in spec.get("step_csv", []):
        entries[e["i"]][e["j"]] = read_waveform_csv(e["path"])
    return ResponseModel(entries)
