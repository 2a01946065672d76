"""Experiment configuration: YAML in, fully validated objects out.

Every check that can fail is run by :func:`load_config` before any compute,
so a bad file costs milliseconds rather than a half-finished sweep. The
schema is documented in ``configs/SCHEMA.md``.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np
import yaml

from . import hilbert as hc
from .coarse import WindowConfig
from .ensemble import InitialCondition, default_workers
from .errors import ConfigError, DCMError, ValidationError
from .harness import MIN_ENSEMBLE, SweepConfig
from .micro import SystemSpec, build_system
from .noise import build_noise_model, zero_noise
from .reference import VARIANTS

DEFAULTS = {
    "seed": 0,
    "workers": None,
    "output": "out",
    "micro": {"mode": "auto", "backend": "auto", "ensembleSize": 1000, "initial": {"kind": "fixed"}},
    "window": {"cDelta": 0.5, "cDeltaT": 0.05},
    "reference": {"variant": "generic_gksl"},
    "noiseCheck": {"dt": 1e-3, "nSamples": 100000, "lags": 3},
}


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in (over or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def parse_operator(node, dim: int, name: str) -> np.ndarray:
    """Operator literal, preset, ``{preset, scale}``, or a list of those summed."""
    if isinstance(node, list) and node and all(isinstance(t, (dict, str)) for t in node):
        m = sum(hc.parse_matrix(t, dim) for t in node)
    else:
        m = hc.parse_matrix(node, dim)
    if m.shape != (dim, dim):
        raise ConfigError(f"{name} has shape {m.shape}, expected ({dim}, {dim})")
    return m


def _block(node, shape, name):
    if node is None or 0 in shape:
        return np.zeros(shape, np.complex128)
    m = hc.parse_matrix(node)
    if m.shape != shape:
        raise ConfigError(f"noise.{name} has shape {m.shape}, expected {shape}")
    return m


def _tau_grid(node):
    if isinstance(node, dict):
        taus = np.linspace(float(node["start"]), float(node["stop"]), int(node["num"]))
    else:
        taus = np.asarray(node, dtype=float)
    return tuple(float(t) for t in taus)


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    raw: dict
    system: SystemSpec
    initial: InitialCondition
    window: WindowConfig | None
    sweep: SweepConfig | None
    variant: str
    ensembleSize: int
    mode: str | None
    backend: str | None
    seed: int
    workers: int
    output: str
    noiseCheck: dict

    @property
    def name(self) -> str:
        return str(self.raw.get("name", "experiment"))

    def resolved(self) -> dict:
        """Plain-data view of the config with defaults filled in."""
        r = copy.deepcopy(self.raw)
        r["seed"] = self.seed
        r["workers"] = self.workers
        r["output"] = self.output
        return r


def build_config(raw: dict, seed=None, workers=None, output=None) -> ExperimentConfig:
    """Validate a parsed mapping; command-line overrides win over file values."""
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    raw = _merge(DEFAULTS, raw)
    if seed is not None:
        raw["seed"] = seed
    if workers is not None:
        raw["workers"] = workers
    if output is not None:
        raw["output"] = output
    try:
        return _build(raw)
    except DCMError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed config: {exc!r}") from exc


def _build(raw) -> ExperimentConfig:
    dims = raw.get("dims") or {}
    dA, dB = int(dims.get("A", 2)), int(dims.get("B", 2))
    hc.HilbertDims(dA, dB)
    ops = raw.get("operators") or {}
    hA = parse_operator(ops.get("hA", "zero"), dA, "hA")
    hB = parse_operator(ops.get("hB", "zero"), dB, "hB")
    L = [parse_operator(o, dA, f"L[{j}]") for j, o in enumerate(ops.get("L") or [])]
    M = [parse_operator(o, dB, f"M[{k}]") for k, o in enumerate(ops.get("M") or [])]
    pairs = []
    for m, pair in enumerate(ops.get("interaction") or []):
        if not isinstance(pair, list) or len(pair) != 2:
            raise ConfigError(f"interaction[{m}] must be a pair [A, B]")
        pairs.append((parse_operator(pair[0], dA, f"interaction[{m}].A"),
                      parse_operator(pair[1], dB, f"interaction[{m}].B")))

    nz = raw.get("noise") or {}
    kind = nz.get("kind", "real")
    nA, nB = len(L), len(M)
    if nA + nB and any(k in nz for k in ("sigmaAA", "sigmaBB", "sigmaAB")):
        noise = build_noise_model(_block(nz.get("sigmaAA"), (nA, nA), "sigmaAA"),
                                  _block(nz.get("sigmaBB"), (nB, nB), "sigmaBB"),
                                  _block(nz.get("sigmaAB"), (nA, nB), "sigmaAB"), kind)
    else:
        noise = zero_noise(nA, nB, kind)
    system = build_system(hA, hB, L, M, pairs, noise)

    micro = raw["micro"]
    mode = micro.get("mode", "auto")
    if mode not in ("auto", "free", "interacting"):
        raise ConfigError(f"micro.mode must be auto, free or interacting, got {mode!r}")
    backend = micro.get("backend", "auto")
    if backend not in ("auto", "cython", "python"):
        raise ConfigError(f"micro.backend must be auto, cython or python, got {backend!r}")
    n_traj = int(micro["ensembleSize"])
    if n_traj < MIN_ENSEMBLE:
        raise ConfigError(f"micro.ensembleSize must be >= {MIN_ENSEMBLE}")
    ini = micro.get("initial") or {}
    if ini.get("kind", "fixed") == "fixed":
        if "x" not in ini or "y" not in ini:
            raise ConfigError("micro.initial needs x and y for kind 'fixed'")
        initial = InitialCondition("fixed", hc.parse_vector(ini["x"]), hc.parse_vector(ini["y"]))
        if initial.x.shape[0] != dA or initial.y.shape[0] != dB:
            raise ConfigError("initial state dimensions do not match dims")
    else:
        initial = InitialCondition(ini["kind"])

    variant = raw["reference"].get("variant", "generic_gksl")
    if variant not in VARIANTS:
        raise ConfigError(f"reference.variant must be one of {VARIANTS}, got {variant!r}")

    win = raw["window"]
    window = sweep = None
    if "tauGrid" in win:
        taus = _tau_grid(win["tauGrid"])
        cD, cT = float(win["cDelta"]), float(win["cDeltaT"])
        if "epsilon" in win:
            dt = micro.get("dt", win.get("dtMicro"))
            window = WindowConfig.from_epsilon(float(win["epsilon"]), cD, cT, taus,
                                               None if dt is None else float(dt))
        sw = raw.get("sweep")
        if sw:
            sweep = SweepConfig(tuple(float(e) for e in sw["epsilons"]), cD, cT,
                                int(sw.get("ensembleSize", n_traj)), taus, variant)
            if sweep.ensembleSize < MIN_ENSEMBLE:
                raise ConfigError(f"sweep.ensembleSize must be >= {MIN_ENSEMBLE}")

    # dt stability guard, for every micro step this config can request
    dt_max = system.max_stable_dt()
    dts = ([window.dtMicro] if window else []) + ([sweep.window(e).dtMicro for e in sweep.epsilons] if sweep else [])
    for dt in dts:
        if dt > dt_max:
            raise ValidationError(f"micro step {dt:g} exceeds the stability guard {dt_max:g}")

    nc = raw["noiseCheck"]
    noise_check = {"dt": float(nc["dt"]), "nSamples": int(nc["nSamples"]), "lags": int(nc["lags"])}
    if noise_check["dt"] <= 0 or noise_check["nSamples"] < 2 or noise_check["lags"] < 0:
        raise ConfigError("noiseCheck needs dt > 0, nSamples >= 2, lags >= 0")

    seed = int(raw["seed"])
    if not 0 <= seed < 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    workers = raw.get("workers")
    workers = default_workers() if workers is None else int(workers)
    if workers < 1:
        raise ConfigError("workers must be >= 1")
    return ExperimentConfig(raw, system, initial, window, sweep, variant, n_traj,
                            None if mode == "auto" else mode, None if backend == "auto" else backend,
                            seed, workers, str(raw["output"]), noise_check)


def load_config(path, seed=None, workers=None, output=None) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    return build_config(raw, seed, workers, output)
