"""Experiment configuration: JSON tree in MHz / us, validated and converted.

Every frequency key ends in ``_MHz`` (ordinary frequency) and is converted to
rad/us on load; times end in ``_us`` or ``_ns``. Example::

    {
      "experiment": "bath_transport",
      "lattice": {"n_sites": 4, "J_MHz": 5.8, "J_nnn_MHz": 0.55,
                  "T1_us": 25, "Tphi_us": 10, "n_th": 0.06},
      "schedule": {"g_MHz": 1.0, "delta_MHz": -4.0, "t_read_us": 2.0},
      "sweep": {"name": "schedule.delta_MHz", "values": [-15, -14.5, 0]},
      "output": "results",
      "seed": 7
    }
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from pathlib import Path

from .dynamics import IntegratorConfig
from .model import BathSpec, DriveSchedule, LatticeSpec, PiecewiseLinear, mhz

__all__ = [
    "EXPERIMENTS",
    "ConfigError",
    "baths_from",
    "config_hash",
    "drive_from",
    "get_path",
    "integrator_from",
    "lattice_from",
    "load_config",
    "set_path",
    "sweep_points",
    "validate",
]

EXPERIMENTS = ("double_well", "adiabatic_fill", "bath_transport", "bath_dynamics", "spectrum", "flux_comp", "custom")
CURRENT_EXPERIMENTS = ("double_well", "bath_transport", "bath_dynamics")

SCHEDULE_DEFAULTS = {
    "double_well": {"angles_deg": [127.0, 90.0], "t_max_ns": 200.0, "dt_ns": 2.0, "closed": True, "shots": 0},
    "adiabatic_fill": {"omega_MHz": 4.2, "delta_start_MHz": 30.0, "delta_end_MHz": -30.0, "ramp_us": 0.75,
                       "amplitude_ramp_us": 0.3, "phases_deg": 0.0, "thermal": True, "closed": False,
                       "n_samples": 2},
    "bath_transport": {"g_MHz": 1.0, "delta_MHz": -4.0, "kappa_MHz": 1.5, "n_th_res": 0.02,
                       "window_us": [0.0, 2.0], "t_read_us": 2.0},
    "bath_dynamics": {"g_MHz": 1.0, "delta_MHz": -4.0, "kappa_MHz": 1.5, "n_th_res": 0.02,
                      "window_us": [0.0, 2.0], "t_end_us": 4.0, "dt_us": 0.01},
    "spectrum": {"omega_MHz": 4.2, "phases_deg": 0.0, "detuning_start_MHz": -30.0, "detuning_stop_MHz": 30.0,
                 "detuning_points": 121},
    "flux_comp": {"n_samples": 8192, "dt_ns": 1.0, "cutoff_ns": 10.0, "channel": 0, "start_ns": 100.0,
                  "stop_ns": 3100.0, "amplitude": 1.0, "balance_ns": None, "amplitude_limit": None},
    "custom": {"t_end_us": 1.0, "dt_us": 0.01, "initial": "thermal"},
}


class ConfigError(ValueError):
    """Raised with the full list of validation problems."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


def load_config(path) -> dict:
    try:
        cfg = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError([f"config: invalid JSON ({exc})"]) from exc
    except OSError as exc:
        raise ConfigError([f"config: cannot read {path} ({exc.strerror})"]) from exc
    if not isinstance(cfg, dict):
        raise ConfigError(["config: top level must be an object"])
    return cfg


def config_hash(cfg: dict) -> str:
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"), allow_nan=True)
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def get_path(cfg: dict, dotted: str):
    node = cfg
    for key in dotted.split("."):
        if isinstance(node, list):
            node = node[int(key)]
        else:
            node = node[key]
    return node


def set_path(cfg: dict, dotted: str, value) -> dict:
    """Copy of ``cfg`` with the dotted key set; missing objects are created."""
    out = copy.deepcopy(cfg)
    keys = dotted.split(".")
    node = out
    for key in keys[:-1]:
        if isinstance(node, list):
            node = node[int(key)]
        else:
            node = node.setdefault(key, {})
    if isinstance(node, list):
        node[int(keys[-1])] = value
    else:
        node[keys[-1]] = value
    return out


def sweep_points(cfg: dict) -> list[dict]:
    """Concrete configs for every sweep value (or the config itself)."""
    sw = cfg.get("sweep")
    if not sw:
        return [cfg]
    base = {k: v for k, v in cfg.items() if k != "sweep"}
    return [set_path(base, sw["name"], v) for v in sw["values"]]


def schedule_of(cfg: dict) -> dict:
    sched = dict(SCHEDULE_DEFAULTS.get(cfg.get("experiment"), {}))
    sched.update(cfg.get("schedule") or {})
    return sched


# ---------------------------------------------------------------- builders


def _num(x, f=float):
    if isinstance(x, list):
        return [f(v) for v in x]
    return f(x)


def lattice_from(cfg: dict) -> LatticeSpec:
    lat = dict(cfg.get("lattice") or {})
    n = int(lat.get("n_sites", 2 if cfg.get("experiment") == "double_well" else 4))
    kw = {"n_sites": n, "site_dim": int(lat.get("site_dim", 2))}
    for key in ("J", "J_nnn", "U", "epsilon"):
        if f"{key}_MHz" in lat:
            kw[key] = _num(lat[f"{key}_MHz"], mhz)
    for key in ("T1", "Tphi"):
        if f"{key}_us" in lat and lat[f"{key}_us"] is not None:
            kw[key] = _num(lat[f"{key}_us"])
    if "n_th" in lat:
        kw["n_th"] = _num(lat["n_th"])
    return LatticeSpec(**kw)


def integrator_from(cfg: dict) -> IntegratorConfig:
    it = dict(cfg.get("integrator") or {})
    return IntegratorConfig(method=it.get("method", "rk45"), rtol=float(it.get("rtol", 1e-8)),
                            atol=float(it.get("atol", 1e-10)), max_step=it.get("max_step_us"))


def _bath(d: dict, defaults: dict) -> BathSpec:
    g = {**defaults, **d}
    window = g.get("window_us", [0.0, math.inf])
    window = (float(window[0]), math.inf if window[1] is None else float(window[1]))
    return BathSpec(kind=g["kind"], site=int(g["site"]), g=mhz(float(g["g_MHz"])),
                    delta=mhz(float(g.get("delta_MHz", 0.0))), kappa=mhz(float(g.get("kappa_MHz", 1.5))),
                    n_th_res=float(g.get("n_th_res", 0.0)), window=window)


def baths_from(cfg: dict, spec: LatticeSpec) -> list[BathSpec]:
    """Explicit ``baths`` list, or end-coupled source/drain built from the schedule."""
    sched = schedule_of(cfg)
    shared = {k: sched[k] for k in ("g_MHz", "delta_MHz", "kappa_MHz", "n_th_res", "window_us") if k in sched}
    if cfg.get("baths"):
        return [_bath(b, shared) for b in cfg["baths"]]
    if cfg.get("experiment") == "custom":
        return []
    return [_bath({"kind": "source", "site": 0}, shared),
            _bath({"kind": "drain", "site": spec.n_sites - 1}, shared)]


def drive_from(cfg: dict) -> DriveSchedule | None:
    d = schedule_of(cfg).get("drive")
    if not d:
        return None
    om, de = d["omega"], d["delta"]
    return DriveSchedule(PiecewiseLinear(om["times_us"], _num(om["values_MHz"], mhz)),
                         PiecewiseLinear(de["times_us"], _num(de["values_MHz"], mhz)),
                         phi=_num(d.get("phases_deg", 0.0), math.radians))


# ---------------------------------------------------------------- validation


def _finite_tree(node, path, errors):
    if isinstance(node, dict):
        for k, v in node.items():
            _finite_tree(v, f"{path}.{k}" if path else k, errors)
    elif isinstance(node, list):
        for i, v in enumerate(node):
            _finite_tree(v, f"{path}[{i}]", errors)
    elif isinstance(node, float) and math.isnan(node):
        errors.append(f"{path}: value is NaN")
    elif isinstance(node, float) and math.isinf(node) and path.split(".")[-1].endswith("_MHz"):
        errors.append(f"{path}: frequency must be finite")


def _check_lattice(cfg, out):
    lat = cfg.get("lattice") or {}
    if not isinstance(lat, dict):
        out.append("lattice: must be an object")
        return None
    errors = []
    for key in ("T1_us", "Tphi_us"):
        v = lat.get(key)
        if v is not None and not (isinstance(v, list) and all(x > 0 for x in v)) and not (
                isinstance(v, (int, float)) and v > 0):
            errors.append(f"lattice.{key}: must be positive, got {v}")
    nth = lat.get("n_th")
    if nth is not None:
        vals = nth if isinstance(nth, list) else [nth]
        if any(not 0 <= x < 0.5 for x in vals):
            errors.append(f"lattice.n_th: must lie in [0, 0.5), got {nth}")
    if "n_sites" in lat and (not isinstance(lat["n_sites"], int) or lat["n_sites"] < 2):
        errors.append(f"lattice.n_sites: must be an integer >= 2, got {lat['n_sites']}")
    if "site_dim" in lat and (not isinstance(lat["site_dim"], int) or lat["site_dim"] < 2):
        errors.append(f"lattice.site_dim: must be an integer >= 2, got {lat['site_dim']}")
    out.extend(errors)
    if errors:
        return None
    try:
        return lattice_from(cfg)
    except (ValueError, TypeError) as exc:
        out.append(f"lattice: {exc}")
        return None


def _check_schedule(cfg, spec, errors):
    exp = cfg.get("experiment")
    sched = schedule_of(cfg)
    horizon = None
    if exp == "bath_transport":
        horizon = float(sched["t_read_us"])
    elif exp in ("bath_dynamics", "custom"):
        horizon = float(sched["t_end_us"])
    if exp in ("bath_dynamics", "custom") and not sched.get("dt_us", 0) > 0:
        errors.append(f"schedule.dt_us: must be positive, got {sched.get('dt_us')}")
    if horizon is not None and not horizon > 0:
        errors.append(f"schedule: evolution horizon must be positive, got {horizon}")
    if exp == "double_well":
        if len(sched["angles_deg"]) != 2:
            errors.append("schedule.angles_deg: need one angle per site (2)")
        if not sched["dt_ns"] > 0 or not sched["t_max_ns"] > 0:
            errors.append("schedule: t_max_ns and dt_ns must be positive")
        if int(sched.get("shots") or 0) < 0:
            errors.append("schedule.shots: must be >= 0")
        if spec is not None and spec.n_sites != 2:
            errors.append(f"lattice.n_sites: double_well needs 2 sites, got {spec.n_sites}")
    if exp == "adiabatic_fill":
        for k in ("ramp_us", "amplitude_ramp_us"):
            if not sched[k] > 0:
                errors.append(f"schedule.{k}: must be positive, got {sched[k]}")
        if sched["omega_MHz"] < 0:
            errors.append("schedule.omega_MHz: drive amplitude must be >= 0")
    if exp == "spectrum" and int(sched["detuning_points"]) < 1:
        errors.append("schedule.detuning_points: must be >= 1")
    if exp == "flux_comp":
        if "response" not in sched:
            errors.append("schedule.response: flux_comp needs a response model")
        if not sched["cutoff_ns"] > 0:
            errors.append("schedule.cutoff_ns: must be positive")
        if not 0 <= sched["start_ns"] < sched["stop_ns"] <= sched["n_samples"] * sched["dt_ns"]:
            errors.append("schedule: target pulse must satisfy 0 <= start_ns < stop_ns <= record length")
        if sched.get("balance_ns") is not None and not sched["balance_ns"] > 0:
            errors.append("schedule.balance_ns: must be positive")
    if sched.get("drive"):
        for key in ("omega", "delta"):
            ts = sched["drive"].get(key, {}).get("times_us", [])
            if any(b <= a for a, b in zip(ts, ts[1:])):
                errors.append(f"schedule.drive.{key}.times_us: breakpoints must be strictly increasing")
        try:
            drive_from(cfg)
        except (ValueError, KeyError, TypeError) as exc:
            errors.append(f"schedule.drive: {exc}")
    lat = cfg.get("lattice") if isinstance(cfg.get("lattice"), dict) else {}
    n_sites = spec.n_sites if spec is not None else lat.get("n_sites", 4)
    site_dim = spec.site_dim if spec is not None else lat.get("site_dim", 2)
    if exp in ("bath_transport", "bath_dynamics", "custom"):
        raw = cfg.get("baths") or []
        for i, b in enumerate(raw):
            w = b.get("window_us")
            name = f"baths[{i}] ({b.get('kind', '?')} on site {b.get('site', '?')})"
            if w is not None and w[1] is not None and not w[0] < w[1]:
                errors.append(f"{name}: window t_on={w[0]} must precede t_off={w[1]}")
            if w is not None and horizon is not None and w[0] >= horizon:
                errors.append(f"{name}: window starts at {w[0]} us, after the {horizon} us horizon")
            if isinstance(n_sites, int) and not 0 <= int(b.get("site", -1)) < n_sites:
                errors.append(f"{name}: site outside the lattice")
        w = sched.get("window_us")
        if not raw and w is not None:
            if w[1] is not None and not w[0] < w[1]:
                errors.append(f"schedule.window_us: bath window t_on={w[0]} must precede t_off={w[1]}")
            if horizon is not None and w[0] >= horizon:
                errors.append(f"schedule.window_us: bath window starts after the {horizon} us horizon")
        if not errors and spec is not None:
            try:
                baths_from(cfg, spec)
            except (ValueError, KeyError, TypeError) as exc:
                errors.append(f"baths: {exc}")
    if exp in CURRENT_EXPERIMENTS and site_dim != 2:
        errors.append(f"lattice.site_dim: current measurement requires hard-core sites (site_dim=2), "
                      f"got {site_dim}")


def _validate_one(cfg) -> list[str]:
    errors = []
    exp = cfg.get("experiment")
    if exp not in EXPERIMENTS:
        errors.append(f"experiment: must be one of {', '.join(EXPERIMENTS)}, got {exp!r}")
        return errors
    _finite_tree(cfg, "", errors)
    if errors:
        return errors
    spec = None
    if exp != "flux_comp":
        spec = _check_lattice(cfg, errors)
    try:
        integrator_from(cfg)
    except (ValueError, TypeError) as exc:
        errors.append(f"integrator: {exc}")
    try:
        _check_schedule(cfg, spec, errors)
    except (KeyError, TypeError, IndexError) as exc:
        errors.append(f"schedule: malformed entry ({exc})")
    return errors


def validate(cfg: dict) -> list[str]:
    """All configuration problems, as ``field: message`` strings (empty when valid)."""
    if not isinstance(cfg, dict):
        return ["config: top level must be an object"]
    errors = []
    if "seed" in cfg and not isinstance(cfg["seed"], int):
        errors.append(f"seed: must be an integer, got {cfg['seed']!r}")
    sw = cfg.get("sweep")
    if sw is not None:
        if not isinstance(sw, dict) or "name" not in sw or "values" not in sw:
            errors.append("sweep: needs 'name' and 'values'")
            sw = None
        elif not isinstance(sw["values"], list) or not sw["values"]:
            errors.append("sweep.values: must be a nonempty list")
            sw = None
    base = {k: v for k, v in cfg.items() if k != "sweep"}
    errors += _validate_one(base)
    if sw is not None and not errors:
        for i, point in enumerate(sweep_points(cfg)):
            errors += [f"sweep[{i}] {sw['name']}={sw['values'][i]}: {e}" for e in _validate_one(point)]
    return errors
