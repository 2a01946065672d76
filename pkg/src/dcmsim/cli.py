"""Command-line entry point.

Exit codes: 0 success, 2 validation error, 3 numerical blowup,
4 statistically inconclusive result.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import __version__
from . import hilbert as hc
from .coarse import DensityPoint, fmt, series_json, write_series_csv
from .config import ExperimentConfig, load_config
from .errors import ConfigError, DCMError, InconclusiveError
from .harness import markov_diagnostics, run_point, run_sweep
from .noise import RngStream, empirical_cross_variation
from .reference import integrate_master, master_spec, positivity_monitor

EXIT_OK = 0


def _meta(cfg: ExperimentConfig, command: str, **extra) -> dict:
    out = {"command": command, "version": __version__, "config": cfg.resolved()}
    out.update(extra)
    return out


def _dump(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_to_plain)
        fh.write("\n")


def _to_plain(o):
    if isinstance(o, np.ndarray):
        return hc.format_matrix(o) if np.iscomplexobj(o) else o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if isinstance(o, complex):
        return [o.real, o.imag]
    raise TypeError(f"cannot serialise {type(o).__name__}")


def _eps_tag(eps) -> str:
    return format(float(eps), "g")


def _write_point(out, pt, meta):
    tag = _eps_tag(pt.epsilon)
    meta = dict(meta, epsilon=pt.epsilon, delta=pt.window.effective_delta, dtMicro=pt.window.dtMicro,
                windowMidpoints=pt.window.mids, error=pt.error, maxSE=pt.max_se,
                referenceVariant=pt.variant)
    write_series_csv(os.path.join(out, f"series_{tag}.csv"), pt.points, "pipeline", json.loads(json.dumps(meta, default=_to_plain)))
    data = series_json(pt.points, "pipeline", meta)
    for row, ref, err, se in zip(data["series"], pt.reference, pt.errors, pt.rho_se):
        row["rho_reference"] = hc.format_matrix(ref)
        row["error"] = float(err)
        row["rho_SE"] = float(se)
    _dump(os.path.join(out, f"series_{tag}.json"), data)


def cmd_simulate(cfg: ExperimentConfig) -> int:
    if cfg.window is None:
        raise ConfigError("simulate needs window.epsilon and window.tauGrid")
    pt = run_point(cfg.system, cfg.window, cfg.ensembleSize, cfg.variant, cfg.initial, cfg.seed,
                   cfg.mode, cfg.backend, cfg.workers)
    _write_point(cfg.output, pt, _meta(cfg, "simulate"))
    print(f"epsilon={pt.epsilon:g} error={pt.error:.6e} maxSE={pt.max_se:.3e}")
    return EXIT_OK


def cmd_reference(cfg: ExperimentConfig) -> int:
    dA, dB = cfg.system.dims.dimA, cfg.system.dims.dimB
    taus = cfg.window.tauGrid if cfg.window else (cfg.sweep.tauGrid if cfg.sweep else None)
    if taus is None:
        raise ConfigError("reference needs window.tauGrid")
    spec = master_spec(cfg.system, cfg.variant)
    grid = np.asarray(taus)
    if grid[0] > 0:
        grid = np.concatenate([[0.0], grid])
    res = integrate_master(cfg.initial.rho0(dA, dB), spec, grid)
    pairs = list(res)[len(grid) - len(taus):]
    points = [DensityPoint(float(t), r, r, float(np.trace(r).real), hc.min_eigenvalue(r), 0.0,
                           hc.hermitian_residual(r)) for t, r in pairs]
    mon = positivity_monitor(pairs, cfg.variant)
    meta = _meta(cfg, "reference", variant=cfg.variant, rk4Step=res.step, symmetrizations=res.symmetrizations)
    write_series_csv(os.path.join(cfg.output, "reference.csv"), points, "reference", json.loads(json.dumps(meta)))
    data = series_json(points, "reference", meta)
    data["positivity"] = mon
    _dump(os.path.join(cfg.output, "reference.json"), data)
    if mon["flagged"]:
        print(f"warning: {cfg.variant} reference has min eigenvalue {mon['min_eigenvalue']:.3e}", file=sys.stderr)
    print(f"reference {cfg.variant}: {len(points)} points, max |Tr rho - 1| = {mon['max_trace_deviation']:.3e}")
    return EXIT_OK


def _write_plot(path, rows):
    with open(path, "w") as fh:
        fh.write("# epsilon error maxSE\n")
        for r in rows:
            fh.write(f"{fmt(r['epsilon'])} {fmt(r['error'])} {fmt(r['maxSE'])}\n")


def cmd_sweep(cfg: ExperimentConfig) -> int:
    if cfg.sweep is None:
        raise ConfigError("sweep needs a sweep block and window.tauGrid")
    meta = _meta(cfg, "sweep")
    try:
        rep = run_sweep(cfg.sweep, cfg.system, cfg.initial, cfg.seed, cfg.mode, cfg.backend, cfg.workers)
    except InconclusiveError as exc:
        for pt in getattr(exc, "points", []):
            _write_point(cfg.output, pt, meta)
        rows = getattr(exc, "rows", [])
        _write_plot(os.path.join(cfg.output, "plot.dat"), rows)
        _dump(os.path.join(cfg.output, "scaling_report.json"),
              dict(meta, status="inconclusive", perEpsilon=rows, fittedSlope=None, slopeCI=None, message=str(exc)))
        raise
    for pt in rep.points:
        _write_point(cfg.output, pt, meta)
    _write_plot(os.path.join(cfg.output, "plot.dat"), rep.perEpsilon)
    _dump(os.path.join(cfg.output, "scaling_report.json"), dict(meta, status="ok", **rep.to_dict()))
    lo, hi = rep.slopeCI
    print(f"slope={rep.fittedSlope:.4f} CI=[{lo:.4f}, {hi:.4f}] K={rep.prefactor:.4e}")
    return EXIT_OK


def cmd_noise_check(cfg: ExperimentConfig) -> int:
    model = cfg.system.noise
    nc = cfg.noiseCheck
    rows = markov_diagnostics(model, nc["dt"], nc["lags"], nc["nSamples"], RngStream(cfg.seed, 0))
    cross, cross_se = empirical_cross_variation(model, nc["dt"], nc["nSamples"], RngStream(cfg.seed, 1), return_se=True)
    table = []
    outside = 0
    for r in rows:
        for (i, j), m in np.ndenumerate(r["mean"]):
            se = r["se"][i, j]
            e = r["expected"][i, j]
            ok = bool(abs(m - e) <= 3 * se) if se > 0 else bool(abs(m - e) == 0)
            outside += not ok
            table.append({"lag": r["lag"], "i": i, "j": j, "mean": complex(m), "se": float(se),
                          "expected": complex(e), "within3SE": ok})
    with open(os.path.join(cfg.output, "noise_check.csv"), "w", newline="") as fh:
        fh.write("# " + json.dumps(_meta(cfg, "noise-check"), sort_keys=True, default=_to_plain) + "\n")
        w = csv.writer(fh)
        w.writerow(["lag", "i", "j", "mean_re", "mean_im", "SE", "expected_re", "expected_im", "within_3SE"])
        for t in table:
            w.writerow([t["lag"], t["i"], t["j"], fmt(t["mean"].real), fmt(t["mean"].imag), fmt(t["se"]),
                        fmt(t["expected"].real), fmt(t["expected"].imag), int(t["within3SE"])])
    _dump(os.path.join(cfg.output, "noise_check.json"),
          dict(_meta(cfg, "noise-check"), table=table, crossVariation=cross, crossVariationSE=cross_se,
               sigmaAB=model.sigmaAB))
    print(f"noise check: {len(table)} entries, {outside} outside 3 SE")
    return EXIT_OK


def cmd_validate(cfg: ExperimentConfig) -> int:
    s = cfg.system
    print(f"config ok: {cfg.name}, dims {s.dims.dimA}x{s.dims.dimB}, "
          f"{s.noise.nA}+{s.noise.nB} noise channels, {len(s.interaction)} interaction pairs, "
          f"dt guard {s.max_stable_dt():.3e}")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "reference": cmd_reference,
    "sweep": cmd_sweep,
    "noise-check": cmd_noise_check,
    "validate": cmd_validate,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dcmsim", description="Windowed double-covariance Monte-Carlo experiments.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="YAML experiment file")
        sp.add_argument("--out", help="output directory (overrides config)")
        sp.add_argument("--seed", type=int, help="unsigned 64-bit seed (overrides config)")
        sp.add_argument("--workers", type=int, help="worker processes (overrides config)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, seed=args.seed, workers=args.workers, output=args.out)
        if args.command != "validate":
            os.makedirs(cfg.output, exist_ok=True)
        return COMMANDS[args.command](cfg)
    except DCMError as exc:
        print(f"dcmsim {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
