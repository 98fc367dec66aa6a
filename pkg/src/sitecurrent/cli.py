"""Command-line runner: ``sim run|validate|spectrum|fluxcomp <config>``.

Exit status is 0 on success, 2 when the configuration is invalid and 3 when
a numerical step fails (failed sweep points are listed in the manifest; the
remaining points are still written).
"""

from __future__ import annotations

import argparse
import json
import math
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from . import fluxcomp as fc
from .config import (
    ConfigError,
    baths_from,
    config_hash,
    drive_from,
    integrator_from,
    lattice_from,
    load_config,
    schedule_of,
    sweep_points,
    validate,
)
from .dynamics import IntegrationError, evolve, fock_state, thermal_product_state
from .experiments import (
    ResultTable,
    adiabatic_fill,
    bath_dynamics,
    bath_transport_point,
    double_well_replay,
    fill_schedule,
)
from .fockspace import lattice_basis, number_op, total_number_op
from .measurement import current_operator
from .model import collapse_operators, lattice_hamiltonian_td, mhz, to_mhz
from .spectrum import TrackingError, driven_spectrum, many_body_gap, transition_frequencies, write_markers_csv

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3
NUMERICAL_ERRORS = (IntegrationError, TrackingError, np.linalg.LinAlgError, fc.UnsettledResponseError,
                    fc.BalanceLimitError, FloatingPointError, ZeroDivisionError)


# ---------------------------------------------------------------- per-point runners


def _double_well(cfg, rng):
    s = schedule_of(cfg)
    spec = lattice_from(cfg)
    if s["closed"]:
        spec = spec.closed()
    times = np.arange(0.0, s["t_max_ns"] + 0.5 * s["dt_ns"], s["dt_ns"])
    table = double_well_replay(spec, tuple(s["angles_deg"]), times, integrator_from(cfg))
    shots = int(s.get("shots") or 0)
    if shots:
        # replace exact probabilities by multinomial estimates
        cols = ["P_m2J", "P_m1J", "P_0", "P_p1J", "P_p2J"]
        idx = [table.columns.index(c) for c in cols]
        levels = np.array([-2, -1, 0, 1, 2], dtype=float)
        for row in table.rows:
            p = np.clip(row[idx], 0.0, None)
            est = rng.multinomial(shots, p / p.sum()) / shots
            row[idx] = est
            row[table.columns.index("j_expect_over_J")] = float(est @ levels)
    return table


def _adiabatic_fill(cfg, rng):
    s = schedule_of(cfg)
    spec = lattice_from(cfg)
    if s["closed"]:
        spec = spec.closed()
    sched = drive_from(cfg) or fill_schedule(mhz(s["omega_MHz"]), mhz(s["delta_start_MHz"]), mhz(s["delta_end_MHz"]),
                                             s["ramp_us"], s["amplitude_ramp_us"],
                                             np.radians(s["phases_deg"]))
    return adiabatic_fill(spec, sched, bool(s["thermal"]), int(s["n_samples"]), integrator_from(cfg))


def _bath_transport(cfg, rng):
    s = schedule_of(cfg)
    spec = lattice_from(cfg)
    r = bath_transport_point(spec, baths_from(cfg, spec), float(s["t_read_us"]), cfg=integrator_from(cfg))
    return ResultTable(["t_us", "j_over_J", "N"], [[float(s["t_read_us"]), r["j_over_J"], r["N"]]])


def _bath_dynamics(cfg, rng):
    s = schedule_of(cfg)
    spec = lattice_from(cfg)
    return bath_dynamics(spec, baths_from(cfg, spec), float(s["t_end_us"]), float(s["dt_us"]),
                         cfg=integrator_from(cfg))


def _custom(cfg, rng):
    s = schedule_of(cfg)
    spec = lattice_from(cfg)
    baths = baths_from(cfg, spec)
    basis = lattice_basis(spec.n_sites, spec.site_dim, resonator_sites=sorted({b.site for b in baths}))
    H = lattice_hamiltonian_td(spec, basis, baths, drive_from(cfg))
    c_ops = collapse_operators(spec, baths, basis)
    init = s["initial"]
    if init == "thermal":
        st = thermal_product_state(spec, basis, baths)
    else:
        occ = list(init) + [0] * (len(basis.dims) - len(init))
        st = fock_state(basis, occ)
    times = np.round(np.arange(0.0, float(s["t_end_us"]) + 0.5 * float(s["dt_us"]), float(s["dt_us"])), 12)
    obs = {f"n_{i}": number_op(basis, basis.site_label(i)) for i in range(spec.n_sites)}
    obs["N"] = total_number_op(basis)
    if spec.hard_core:
        for l in range(spec.n_sites - 1):
            if spec.J[l] != 0:
                obs[f"j_{l}_{l + 1}_over_J"] = current_operator(basis, l, l + 1, 1.0)
    tr = evolve(st, H, c_ops, sample_times=times, cfg=integrator_from(cfg), observables=obs)
    names = list(obs)
    return ResultTable(["t_us"] + names, np.column_stack([times] + [tr[n] for n in names]))


RUNNERS = {
    "double_well": _double_well,
    "adiabatic_fill": _adiabatic_fill,
    "bath_transport": _bath_transport,
    "bath_dynamics": _bath_dynamics,
    "custom": _custom,
}


def _run_point(args):
    """Worker entry: ``(index, config, seed) -> (index, table | None, error | None)``."""
    index, cfg, seed = args
    rng = np.random.default_rng(seed)
    try:
        with np.errstate(divide="raise", invalid="raise", over="raise"):
            table = RUNNERS[cfg["experiment"]](cfg, rng)
        if not np.all(np.isfinite(table.rows)):
            raise FloatingPointError("non-finite values in result")
        return index, table, None
    except NUMERICAL_ERRORS as exc:
        return index, None, f"{type(exc).__name__}: {exc}"


# ---------------------------------------------------------------- special experiments


def _spectrum(cfg, out: Path) -> list[str]:
    s = schedule_of(cfg)
    spec = lattice_from(cfg)
    basis = lattice_basis(spec.n_sites, spec.site_dim)
    write_markers_csv(out / "markers.csv", transition_frequencies(spec, basis))
    grid = mhz(np.linspace(s["detuning_start_MHz"], s["detuning_stop_MHz"], int(s["detuning_points"])))
    phases = np.radians(s["phases_deg"])
    ds = driven_spectrum(spec, mhz(s["omega_MHz"]), phases, grid, basis)
    cols = ["detuning_MHz"] + [f"E{k}_MHz" for k in range(basis.total_dim)]
    rows = np.column_stack([to_mhz(grid), to_mhz(ds.levels)])
    if ds.adiabatic_track is not None:
        cols += ["track_level", "track_gap_MHz"]
        rows = np.column_stack([rows, ds.adiabatic_track, to_mhz(many_body_gap(ds))])
    ResultTable(cols, rows).to_csv(out / "driven_levels.csv")
    return ["markers.csv", "driven_levels.csv"]


def _fluxcomp(cfg, out: Path, base_dir: Path) -> list[str]:
    s = schedule_of(cfg)
    resp = s["response"]
    if isinstance(resp, str):
        p = Path(resp)
        resp = base_dir / p if not p.is_absolute() else p
    try:
        model = fc.load_response_model(resp)
    except (OSError, KeyError, IndexError, ValueError) as exc:
        raise ConfigError([f"schedule.response: {exc}"]) from exc
    n, dt = int(s["n_samples"]), float(s["dt_ns"])
    km = fc.kernel_matrix(model, n, dt, float(s["cutoff_ns"]))
    start, stop = int(round(s["start_ns"] / dt)), int(round(s["stop_ns"] / dt))
    target = fc.square_pulse(n, start, stop, float(s["amplitude"]), dt)
    lines = fc.precompensate(target, km, int(s["channel"]))
    if s.get("balance_ns"):
        limit = math.inf if s.get("amplitude_limit") is None else float(s["amplitude_limit"])
        lines = [fc.net_zero(w, float(s["balance_ns"]), limit) for w in lines]
    flux = fc.distort(lines, model)
    files = []
    fc.write_kernel_matrix(out / "kernels", km)
    for j, w in enumerate(lines):
        fc.write_waveform_csv(out / f"line_{j}.csv", w)
        files.append(f"line_{j}.csv")
    for i, w in enumerate(flux):
        fc.write_waveform_csv(out / f"flux_{i}.csv", w)
        files.append(f"flux_{i}.csv")
    files.append("kernels/")
    return files


# ---------------------------------------------------------------- driver


def _manifest(cfg, seed, workers, wall, outputs, failures, extra=None):
    it = integrator_from(cfg) if cfg.get("experiment") not in ("flux_comp", "spectrum") else None
    m = {
        "config": cfg,
        "config_hash": config_hash(cfg),
        "seed": seed,
        "workers": workers,
        "versions": {"sitecurrent": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
        "tolerances": {"integrator": None if it is None else
                       {"method": it.method, "rtol": it.rtol, "atol": it.atol, "max_step_us": it.max_step}},
        "wall_time_s": wall,
        "outputs": outputs,
        "failures": failures,
    }
    if extra:
        m.update(extra)
    return m


def run_config(cfg: dict, out: Path, workers: int = 1, seed: int | None = None, base_dir: Path = Path(".")) -> int:
    """Validate and run ``cfg``, writing CSV files and ``manifest.json`` into ``out``."""
    errors = validate(cfg)
    if errors:
        raise ConfigError(errors)
    seed = int(cfg.get("seed", 0) if seed is None else seed)
    out.mkdir(parents=True, exist_ok=True)
    exp = cfg["experiment"]
    t0 = time.perf_counter()
    failures = []
    if exp in ("spectrum", "flux_comp"):
        try:
            outputs = _spectrum(cfg, out) if exp == "spectrum" else _fluxcomp(cfg, out, base_dir)
        except NUMERICAL_ERRORS as exc:
            outputs = []
            failures.append({"index": 0, "error": f"{type(exc).__name__}: {exc}"})
    else:
        points = sweep_points(cfg)
        seeds = np.random.SeedSequence(seed).spawn(len(points))
        jobs = [(i, p, s) for i, (p, s) in enumerate(zip(points, seeds))]
        if workers > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(_run_point, jobs))
        else:
            results = [_run_point(j) for j in jobs]
        results.sort(key=lambda r: r[0])
        sw = cfg.get("sweep")
        tables = []
        for i, table, err in results:
            if err is not None:
                failures.append({"index": i, "value": sw["values"][i] if sw else None, "error": err})
                continue
            if sw:
                table = table.with_leading([sw["name"]], [float(sw["values"][i])])
            tables.append(table)
        outputs = []
        if tables:
            ResultTable.concat(tables).to_csv(out / f"{exp}.csv")
            outputs.append(f"{exp}.csv")
    wall = time.perf_counter() - t0
    manifest = _manifest(cfg, seed, workers, wall, outputs, failures)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n",
                                       encoding="utf-8")
    return EXIT_NUMERICAL if failures else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sim", description="Current measurement and transport in small Bose-Hubbard lattices.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("run", "run the experiment named in the config"),
                        ("validate", "check a config and list every problem"),
                        ("spectrum", "export transition markers and driven levels"),
                        ("fluxcomp", "build compensation kernels and pre-distorted waveforms")):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("config", type=Path)
        sp.add_argument("--workers", type=int, default=1, help="parallel worker processes for sweeps")
        sp.add_argument("--out", type=Path, default=None, help="output directory (overrides config)")
        sp.add_argument("--seed", type=int, default=None, help="seed for sampling features (overrides config)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.command == "spectrum":
            cfg = {**cfg, "experiment": "spectrum"}
        elif args.command == "fluxcomp":
            cfg = {**cfg, "experiment": "flux_comp"}
        if args.command == "validate":
            errors = validate(cfg)
            for e in errors:
                print(f"error: {e}", file=sys.stderr)
            if not errors:
                print("ok")
            return EXIT_INVALID if errors else EXIT_OK
        if args.workers < 1:
            raise ConfigError(["--workers: must be >= 1"])
        out = args.out or Path(cfg.get("output", "results"))
        code = run_config(cfg, out, args.workers, args.seed, base_dir=args.config.parent)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    if code == EXIT_NUMERICAL:
        print(f"numerical failure; see {out / 'manifest.json'}", file=sys.stderr)
    else:
        print(f"wrote {out}")
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
