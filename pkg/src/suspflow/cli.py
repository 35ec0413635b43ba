"""Command-line experiment driver.

Every subcommand reads a flat config (see ``suspflow.config``), writes one or
more CSV files into ``--out`` and a ``manifest.json`` describing the run.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import platform
import sys
import time
from typing import Callable

import numpy as np

from . import __version__
from . import deviation as dev
from . import lorenz as lz
from . import maps
from . import partition as part
from . import recurrence as rec
from . import semiflow as sf
from .config import ExperimentConfig, load_config
from .errors import ConfigInvalid, SuspflowError
from .stats import CSV_FIELDS

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


# -- config helpers ----------------------------------------------------------------


def _map_from(cfg: ExperimentConfig) -> maps.MapDescriptor:
    sec = cfg.section("map")
    family = sec.pop("family", None)
    marked = sec.pop("singular_points", None)
    if family is None:
        raise ConfigInvalid({"map.family": "required"})
    if "breaks" in sec:
        sec["breaks"] = tuple(float(b) for b in sec["breaks"])
    try:
        m = maps.make_map(str(family), **sec)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigInvalid({"map": str(exc)}) from exc
    if marked is not None:
        pts = marked if isinstance(marked, tuple) else (marked,)
        m = maps.with_singular_set(m, [float(p) for p in pts])
    return m


def _roof_from(cfg: ExperimentConfig, m: maps.MapDescriptor) -> sf.RoofFunction:
    sec = cfg.section("roof")
    kind = str(sec.pop("kind", "constant"))
    params = {}
    if kind == "constant":
        params["value"] = float(sec.get("value", 1.0))
    else:
        if "r0" in sec:
            params["r0"] = float(sec["r0"])
        if "C0" in sec:
            params["growth_C"] = float(sec["C0"])
    try:
        return sf.make_roof(kind, m, **params)
    except (KeyError, ValueError) as exc:
        raise ConfigInvalid({"roof.kind": str(exc)}) from exc


def _base_observable(cfg: ExperimentConfig, m: maps.MapDescriptor):
    """(phi, bound) for the configured base observable."""
    sec = cfg.section("observable")
    kind = str(sec.get("kind", "identity"))
    lo, hi = m.domain
    if kind == "indicator_left":
        c = float(sec.get("c", 0.5 * (lo + hi)))
        return (lambda x: (np.asarray(x) < c).astype(float)), 1.0
    if kind == "identity":
        return (lambda x: np.asarray(x, dtype=float)), max(abs(lo), abs(hi))
    if kind == "constant":
        v = float(sec.get("value", 0.0))
        return (lambda x: np.full(np.shape(x), v)), abs(v)
    raise ConfigInvalid({"observable.kind": f"unknown observable {kind!r}"})


def _threshold_list(cfg: ExperimentConfig, key_default: float):
    return cfg.thresholds or (key_default,)


def _int_horizons(cfg: ExperimentConfig, key="run.horizons"):
    hs = cfg.horizons
    if not all(float(h).is_integer() and h > 0 for h in hs):
        raise ConfigInvalid({key: "entries must be positive integers here"})
    return [int(h) for h in hs]


def _fit_summary(series):
    try:
        return dev.rate_fit(series).as_dict()
    except SuspflowError as exc:
        return {"error": str(exc)}


# -- subcommands ----------------------------------------------------------------------


def cmd_recurrence_scan(cfg, workers):
    m = _map_from(cfg)
    delta = float(cfg.get("recurrence.delta", math.exp(-10)))
    rows, fits = [], {}
    for eps in _threshold_list(cfg, 0.5):
        series = []
        for n in _int_horizons(cfg):
            e = rec.slow_recurrence_volume(m, n, delta, eps, cfg.budget, cfg.seed, workers)
            rows.append(e.as_row())
            series.append((n, e.estimate))
        fits[str(eps)] = _fit_summary(series)
    return {"recurrence.csv": (CSV_FIELDS, rows)}, {"delta": delta, "fits": fits}


def cmd_hyptimes(cfg, workers):
    m = _map_from(cfg)
    params = rec.HyperbolicParams(float(cfg.get("hyptimes.sigma", 0.95)),
                                  float(cfg.get("hyptimes.delta", 0.01)),
                                  float(cfg.get("hyptimes.b", 0.1)))
    starts = int(cfg.get("hyptimes.starts", 100))
    rng = np.random.default_rng(cfg.seed)
    x0s = m.sample_uniform(rng, starts)
    rows, medians = [], {}
    for N in _int_horizons(cfg):
        freqs = []
        for i, x in enumerate(x0s):
            times = rec.detect_hyperbolic_times(m, float(x), N, params)
            freqs.append(len(times) / N)
            rows.append({"start": i, "x0": repr(float(x)), "N": N, "count": len(times),
                         "frequency": len(times) / N})
        medians[str(N)] = float(np.median(freqs))
    header = ("start", "x0", "N", "count", "frequency")
    return {"hyptimes.csv": (header, rows)}, {"median_frequency": medians}


def cmd_partition_stats(cfg, workers):
    m = _map_from(cfg)
    levels = _int_horizons(cfg)
    if levels[-1] > 14:
        raise ConfigInvalid({"run.horizons": "partition levels above 14 are not supported"})
    deltas = cfg.get("partition.delta", math.exp(-10))
    deltas = deltas if isinstance(deltas, tuple) else (deltas,)
    zs = cfg.get("partition.z", 0.5)
    zs = zs if isinstance(zs, tuple) else (zs,)
    moment_budget = int(cfg.get("partition.moment_budget", 20000))
    want = set(levels)
    rows, mrows = [], []
    lv = part.level_zero(m)
    last = None
    P0 = lv.p0
    worst_ratio = max(part.enlarged_ratio(P0, (a.k, a.p)) for a in P0.atoms if not a.core)
    for n in range(levels[-1] + 1):
        if n:
            lv = part.refine(lv, m)
        if n not in want:
            continue
        c = part.verify_containment(lv, m)
        mb = part.verify_measure_bound(lv, m, distortion_samples=200)
        rows.append({"level": n, "atoms": len(lv.atoms),
                     "coverage_error": abs(mb.total_length - m.length) / m.length,
                     "containment_checked": c.checked, "containment_violations": len(c.violations),
                     "measure_checked": mb.checked + mb.unsplit_checked,
                     "measure_violations": len(mb.violations),
                     "literal_violations": mb.literal_violations,
                     "max_log_distortion": mb.max_distortion})
        for d in deltas:
            for z in zs:
                theta = part.moment_estimate(m, n, float(d), float(z), moment_budget, cfg.seed,
                                             level=lv, workers=workers) if n else 0.0
                mrows.append({"level": n, "delta": float(d), "z": float(z), "theta": theta})
        last = lv
    outputs = {
        "partition_levels.csv": (("level", "atoms", "coverage_error", "containment_checked",
                                  "containment_violations", "measure_checked", "measure_violations",
                                  "literal_violations", "max_log_distortion"), rows),
        "partition_moments.csv": (("level", "delta", "z", "theta"), mrows),
    }
    if cfg.get("partition.export_atoms", False) and last is not None:
        outputs[f"partition_level_{last.n}.csv"] = (part.CSV_HEADER, [dict(zip(part.CSV_HEADER, r))
                                                                     for r in part.level_rows(last)])
    return outputs, {"rho0": P0.rho0, "p_max": P0.p_max, "max_enlarged_ratio": worst_ratio}


def cmd_deviation_base(cfg, workers):
    m = _map_from(cfg)
    phi, bound = _base_observable(cfg, m)
    mu = cfg.get("observable.mean")
    if mu is None:
        psi = sf.base_psi(phi, bound)
        mu = sf.nu_estimate(psi, m, sf.constant_roof(), 100, 5000, 64, cfg.seed).value
    rows, fits = [], {}
    for omega in _threshold_list(cfg, 0.1):
        series = []
        for n in _int_horizons(cfg):
            e = dev.base_deviation_volume(m, phi, float(mu), n, omega, cfg.budget, cfg.seed, workers)
            rows.append(e.as_row())
            series.append((n, e.estimate))
        fits[str(omega)] = _fit_summary(series)
    return {"deviation_base.csv": (CSV_FIELDS, rows)}, {"mu_phi": float(mu), "fits": fits}


def cmd_deviation_flow(cfg, workers):
    m = _map_from(cfg)
    roof = _roof_from(cfg, m)
    phi, bound = _base_observable(cfg, m)
    psi = sf.base_psi(phi, bound)
    nu = cfg.get("observable.mean")
    if nu is None:
        nu = sf.nu_estimate(psi, m, roof, 100, 5000, 64, cfg.seed).value
    step = float(cfg.get("run.quad_step", 0.01))
    rows, fits = [], {}
    for eps in _threshold_list(cfg, 0.1):
        series = []
        for T in cfg.horizons:
            e = dev.flow_deviation_volume(m, roof, psi, float(nu), float(T), eps, cfg.budget,
                                          step, cfg.seed, workers)
            rows.append(e.as_row())
            series.append((T, e.estimate))
        fits[str(eps)] = _fit_summary(series)
    return {"deviation_flow.csv": (CSV_FIELDS, rows)}, {"nu_psi": float(nu), "fits": fits}


def _region_from(cfg):
    boxes = [v for k, v in sorted(cfg.section("region").items()) if k.startswith("box")]
    if not boxes:
        raise ConfigInvalid({"region.box": "at least one box xlo, xhi, slo, shi is required"})
    try:
        return dev.as_region([tuple(float(c) for c in b) for b in boxes])
    except (SuspflowError, TypeError, ValueError) as exc:
        raise ConfigInvalid({"region.box": str(exc)}) from exc


def cmd_escape_rate(cfg, workers):
    m = _map_from(cfg)
    roof = _roof_from(cfg, m)
    region = _region_from(cfg)
    res = dev.escape_rate(m, roof, region, cfg.horizons, cfg.budget, cfg.seed, workers)
    rows = [e.as_row() for e in res.estimates]
    summary = {"fit": None if res.fit is None else res.fit.as_dict(), "nu_K": res.nu_K,
               "precondition_ok": res.precondition_ok}
    return {"escape.csv": (CSV_FIELDS, rows)}, summary


def cmd_lorenz_ode(cfg, workers):
    x0 = cfg.get("ode.x0", (1.0, 1.0, 20.0))
    state = lz.FlowState(*map(float, x0))
    t = float(cfg.get("ode.t", 20.0))
    step = float(cfg.get("ode.step", 1e-3))
    every = int(cfg.get("ode.every", 10))
    traj = lz.ode_trajectory(state, t, step, every)
    end = lz.FlowState(*traj[-1][1:])
    first, _ = lz.ode_section_return(end, step, orient=lz.DOWN)
    returns = lz.section_returns(first, int(cfg.get("ode.returns", 100)), step)
    trows = [dict(zip(("t", "x", "y", "z"), r)) for r in traj]
    rrows = [dict(zip(("u", "v", "return_time"), r)) for r in returns]
    summary = {"richardson_ratio": lz.richardson_ratio(end)}
    return {"trajectory.csv": (("t", "x", "y", "z"), trows),
            "section_returns.csv": (("u", "v", "return_time"), rrows)}, summary


def cmd_lorenz_model(cfg, workers):
    sec = cfg.section("model")
    params = lz.GeometricModelParams(**{k: float(v) for k, v in sec.items()
                                        if k in ("alpha", "b_coef", "lam_y", "C0", "tau0")})
    m = params.quotient()
    pts = int(cfg.get("model.points", 2001))
    u = np.linspace(-1, 1, pts)
    u = u[u != 0]
    fu = m.f(u)
    rows = [{"u": float(a), "f_u": float(b)} for a, b in zip(u, fu)]
    rng = np.random.default_rng(cfg.seed)
    us, vs = rng.uniform(-1, 1, (2, cfg.budget))
    us = np.where(us == 0, 0.5, us)
    ru, _ = lz.poincare_arrays(us, vs, params)
    semiconj = int(np.count_nonzero(ru != m.f(us)))
    uu = float(rng.uniform(-1, 1))
    rep = lz.contraction_check(lz.SectionPoint(uu, -0.9), lz.SectionPoint(uu, 0.9), params, 50)
    summary = {"semiconjugacy_mismatches": semiconj, "contraction_passed": rep.passed,
               "contraction_C": rep.C, "roof_mean": lz.roof_mean(params)}
    return {"quotient_map.csv": (("u", "f_u"), rows)}, summary


def cmd_entropy_check(cfg, workers):
    m = _map_from(cfg)
    burn = int(cfg.get("entropy.burn_in", 1000))
    ens = int(cfg.get("entropy.ensemble", 64))
    rows = []
    for n in _int_horizons(cfg):
        r = rec.entropy_formula_check(m, burn, n, ens, cfg.seed, report_only=True)
        rows.append({"n": n, "estimate": r.estimate, "reference": r.reference,
                     "abs_error": r.abs_error, "restarts": r.restarts, "ensemble": ens})
    return {"entropy.csv": (("n", "estimate", "reference", "abs_error", "restarts", "ensemble"), rows)}, {}


COMMANDS: dict[str, tuple[Callable, bool]] = {
    # name: (handler, needs horizons)
    "recurrence-scan": (cmd_recurrence_scan, True),
    "hyptimes": (cmd_hyptimes, True),
    "partition-stats": (cmd_partition_stats, True),
    "deviation-base": (cmd_deviation_base, True),
    "deviation-flow": (cmd_deviation_flow, True),
    "escape-rate": (cmd_escape_rate, True),
    "lorenz-ode": (cmd_lorenz_ode, False),
    "lorenz-model": (cmd_lorenz_model, False),
    "entropy-check": (cmd_entropy_check, True),
}


# -- output ------------------------------------------------------------------------


def _format(v):
    if isinstance(v, float):
        return repr(v)
    if v is None:
        return ""
    return str(v)


def render_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_format(r.get(h)) for h in header])
    return buf.getvalue()


def _versions() -> dict:
    out = {"suspflow": __version__, "python": platform.python_version(), "numpy": np.__version__}
    for name in ("mpmath", "gmpy2"):
        try:
            out[name] = __import__(name).__version__
        except Exception:  # pragma: no cover - optional in odd environments
            out[name] = None
    return out


def write_outputs(out_dir: str, files: dict, manifest: dict) -> list:
    """Write every file or none: on error the ones already written are removed."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    try:
        for name, (header, rows) in files.items():
            path = os.path.join(out_dir, name)
            text = render_csv(header, rows)
            written.append(path)
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        path = os.path.join(out_dir, "manifest.json")
        written.append(path)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True, default=_json_default)
            fh.write("\n")
    except BaseException:
        for p in written:
            try:
                os.remove(p)
            except OSError:
                pass
        raise
    return written


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)


def run(command: str, cfg: ExperimentConfig, out_dir: str, workers: int = 1) -> list:
    handler, _ = COMMANDS[command]
    t0 = time.perf_counter()
    files, summary = handler(cfg, workers)
    manifest = {
        "command": command,
        "config_sha256": cfg.digest(),
        "seed": cfg.seed,
        "threads": workers,
        "versions": _versions(),
        "wall_time_s": time.perf_counter() - t0,
        "outputs": sorted(files),
        "summary": summary,
    }
    return write_outputs(out_dir, files, manifest)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="suspflow", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="flat key = value config file")
    p.add_argument("--seed", type=int, default=None, help="overrides run.seed")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--threads", type=int, default=1, help="worker threads (speed only)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _, needs_h = COMMANDS[args.command]
    try:
        cfg = load_config(args.config, args.seed, require_horizons=needs_h)
        run(args.command, cfg, args.out, max(1, args.threads))
    except ConfigInvalid as exc:
        for field_name, msg in exc.errors.items():
            print(f"config error: {field_name}: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    except SuspflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
