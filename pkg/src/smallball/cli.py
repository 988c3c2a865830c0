"""Command-line entry point: ``smallball <experiment> --config FILE``.

Every run writes ``manifest.json`` (config echo, version, constants, CSV
columns) and ``results.csv`` to ``--out``.  Numbers in the CSV are printed
with 17 significant digits, so a fixed config and seed reproduce the file
byte for byte.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np
import yaml

from . import __version__
from .errors import ConfigurationError, ValidationError
from .experiments import (scheme_for, single_interval_probability, support_theorem_run,
                          total_smallball_probability, verify_scaling_reduction)
from .gaussian import (build_covariance_model, choose_theta, conditional_floor,
                       estimate_tail_constants, grid_event_probability, GridScheme, beta_solve,
                       per_point_bound)
from .girsanov import check_second_moment, simulate_weighted
from .heat_kernel import KernelPoint, heat_kernel, kernel_constant, kernel_fourier_sum, kernel_image_sum
from .solver import DriftSpec, SigmaSpec, TargetPath, check_sigma
from .white_noise import Grid

CSV_SCHEMA_VERSION = 1

EXPERIMENTS = ("kernel-check", "single-interval", "total-smallball", "scaling-check",
               "support-run", "gaussian-analysis", "tail-fit", "girsanov-check")

COLUMNS = {
    "kernel-check": ["quantity", "t", "x", "J", "value", "reference", "abs_error", "stderr"],
    "single-interval": ["eps", "p_hat", "stderr", "n_effective", "log_p", "method"],
    "total-smallball": ["eps", "T", "p_hat", "stderr", "n_effective", "log_p", "method"],
    "scaling-check": ["route", "J", "eps", "T", "p_hat", "stderr", "n_effective"],
    "support-run": ["route", "eps", "T", "p_hat", "stderr", "n_effective"],
    "gaussian-analysis": ["eps", "theta", "n_points", "beta_l1_max", "C11", "eta", "eta_power",
                          "p_grid", "stderr"],
    "tail-fit": ["alpha", "decay", "decay_sqrt_alpha", "intercept", "r2", "K1", "K2", "stderr"],
    "girsanov-check": ["tilt", "M", "mean_weight", "stderr", "mean_square", "mean_square_stderr",
                       "upper"],
}

# fields every experiment accepts, with their expected python types
_TYPES: dict[str, tuple] = {
    "experiment": (str,), "J": (int, float), "T": (int, float, list), "d": (int,),
    "eps": (int, float, list), "sigma": (dict,), "drift": (dict,), "target": (dict,),
    "u0": (dict,), "n_paths": (int,), "seed": (int,), "workers": (int,), "grid": (dict,),
    "c0": (int, float), "tilted": (bool,), "alpha": (int, float, list), "intervals": (int, list),
    "out": (str,), "samples": (int,),
}

_REQUIRED = {
    "kernel-check": (),
    "single-interval": ("eps",),
    "total-smallball": ("eps",),
    "scaling-check": ("eps", "T", "J"),
    "support-run": ("eps", "T", "target"),
    "gaussian-analysis": ("eps",),
    "tail-fit": ("eps", "alpha"),
    "girsanov-check": ("T",),
}


class ConfigError(ConfigurationError):
    """Config validation failure carrying the source line when known."""

    def __init__(self, message: str, source: str = "<config>", line: int | None = None):
        self.line = line
        where = f"{source}:{line}" if line is not None else source
        super().__init__(f"{where}: {message}")


@dataclass
class ExperimentConfig:
    """Validated experiment settings; ``raw`` is the mapping echoed into the manifest."""

    experiment: str
    raw: dict
    lines: dict = field(default_factory=dict, repr=False)
    source: str = "<config>"

    def get(self, key: str, default=None):
        return self.raw.get(key, default)

    def list_of(self, key: str) -> list:
        v = self.raw.get(key)
        return list(v) if isinstance(v, list) else [v]

    def error(self, key: str, message: str) -> ConfigError:
        return ConfigError(f"field '{key}': {message}", self.source, self.lines.get(key))

    @property
    def seed(self) -> int:
        return int(self.raw.get("seed", 0))

    @property
    def workers(self) -> int:
        return int(self.raw.get("workers", 1))

    @property
    def n_paths(self) -> int:
        return int(self.raw.get("n_paths", 10000))


def _key_lines(text: str) -> dict:
    """1-based line of every top-level key (nested keys as ``outer.inner``)."""
    try:
        node = yaml.compose(text)
    except yaml.YAMLError:
        return {}
    out = {}

    def walk(n, prefix):
        if isinstance(n, yaml.MappingNode):
            for k, v in n.value:
                name = f"{prefix}{k.value}"
                out[name] = k.start_mark.line + 1
                walk(v, name + ".")

    walk(node, "")
    return out


def load_config(text: str, experiment: str | None = None, source: str = "<config>") -> ExperimentConfig:
    """Parse YAML text and validate it against ``experiment`` (or its ``experiment`` field)."""
    try:
        raw = yaml.safe_load(text) if text.strip() else {}
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"invalid YAML: {getattr(exc, 'problem', exc)}", source,
                          None if mark is None else mark.line + 1) from None
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("top level must be a mapping", source, 1)
    lines = _key_lines(text)
    name = experiment or raw.get("experiment")
    if experiment is not None and raw.get("experiment", experiment) != experiment:
        raise ConfigError(f"config is for experiment {raw['experiment']!r}, not {experiment!r}", source,
                          lines.get("experiment"))
    if name is None:
        raise ConfigError("missing required field 'experiment'", source)
    if name not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {name!r}; expected one of {', '.join(EXPERIMENTS)}",
                          source, lines.get("experiment"))
    raw = dict(raw)
    raw["experiment"] = name
    cfg = ExperimentConfig(name, raw, lines, source)
    _validate(cfg)
    return cfg


def _positive_numbers(cfg: ExperimentConfig, key: str) -> None:
    for v in cfg.list_of(key):
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not v > 0:
            raise cfg.error(key, f"expected positive numbers, got {v!r}")


def _validate(cfg: ExperimentConfig) -> None:
    raw = cfg.raw
    for key, value in raw.items():
        if key not in _TYPES:
            raise cfg.error(key, "unknown field")
        if isinstance(value, bool) and bool not in _TYPES[key]:
            raise cfg.error(key, f"expected {_type_names(_TYPES[key])}, got a boolean")
        if not isinstance(value, _TYPES[key]):
            raise cfg.error(key, f"expected {_type_names(_TYPES[key])}, got {type(value).__name__}")
    for key in _REQUIRED[cfg.experiment]:
        if key not in raw:
            raise ConfigError(f"missing required field '{key}'", cfg.source)
    for key in ("eps", "T", "J", "alpha", "c0"):
        if key in raw:
            _positive_numbers(cfg, key)
    for key in ("n_paths", "workers", "d", "samples"):
        if key in raw and raw[key] < 1:
            raise cfg.error(key, f"must be at least 1, got {raw[key]}")
    if "intervals" in raw:
        for v in cfg.list_of("intervals"):
            if not isinstance(v, int) or v < 1:
                raise cfg.error("intervals", f"expected positive integers, got {v!r}")
    # the model hypotheses are checked when the objects are built
    sigma = build_sigma(cfg)
    try:
        check_sigma(sigma, n_samples=64, seed=cfg.seed)
    except (ValidationError, ValueError) as exc:
        raise cfg.error("sigma", str(exc)) from None
    build_drift(cfg)
    if cfg.experiment == "support-run":
        T = float(cfg.list_of("T")[0])
        h = build_target(cfg, "target")
        grid = _plain_grid(cfg, T, float(raw.get("J", 1.0)))
        u0 = build_target(cfg, "u0") if "u0" in raw else None
        gap = 0.0 if u0 is None else float(np.abs(u0(0.0, grid.x) - h(0.0, grid.x)).max())
        for eps in cfg.list_of("eps"):
            if not gap < eps / 2:
                raise cfg.error("u0", f"sup |u0 - h(0)| = {gap:.4g} is not below eps/2 = {eps / 2:.4g}")
        try:
            h.validate(grid)
        except ValidationError as exc:
            raise cfg.error("target", str(exc)) from None


def _type_names(types: tuple) -> str:
    names = {int: "integer", float: "number", str: "string", list: "list", dict: "mapping", bool: "boolean"}
    return " or ".join(names[t] for t in types)


def _sub(cfg: ExperimentConfig, key: str, spec: dict, name: str, cast=float, default=None):
    if name not in spec:
        if default is not None:
            return default
        raise ConfigError(f"missing required field '{key}.{name}'", cfg.source, cfg.lines.get(key))
    v = spec[name]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"field '{key}.{name}': expected a number, got {v!r}", cfg.source,
                          cfg.lines.get(f"{key}.{name}"))
    return cast(v)


def build_sigma(cfg: ExperimentConfig) -> SigmaSpec:
    """``sigma`` presets: identity, diagonal (``c``), state-dependent (``C1``, ``C2``, ``D``)."""
    spec = cfg.get("sigma", {"preset": "identity"})
    d = int(cfg.get("d", 1))
    preset = spec.get("preset", "identity")
    try:
        if preset == "identity":
            return SigmaSpec.identity(d)
        if preset == "diagonal":
            return SigmaSpec.diagonal(_sub(cfg, "sigma", spec, "c"), d)
        if preset == "state-dependent":
            return SigmaSpec.state_dependent(_sub(cfg, "sigma", spec, "C1"), _sub(cfg, "sigma", spec, "C2"),
                                             _sub(cfg, "sigma", spec, "D"), d)
    except (ValidationError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise cfg.error("sigma", str(exc)) from None
    raise ConfigError(f"field 'sigma.preset': unknown preset {preset!r}", cfg.source,
                      cfg.lines.get("sigma.preset", cfg.lines.get("sigma")))


def build_drift(cfg: ExperimentConfig) -> DriftSpec:
    """``drift`` presets: zero, constant (``value``), sine (``amplitude``: ``a sin(2 pi x / J)``)."""
    spec = cfg.get("drift", {"preset": "zero"})
    d = int(cfg.get("d", 1))
    preset = spec.get("preset", "zero")
    if preset == "zero":
        return DriftSpec.zero(d)
    if preset == "constant":
        return DriftSpec.constant(np.full(d, _sub(cfg, "drift", spec, "value")))
    if preset == "sine":
        a = _sub(cfg, "drift", spec, "amplitude")
        J = float(cfg.get("J", 1.0))
        return DriftSpec.from_function(
            lambda t, x, u: np.repeat(a * np.sin(2 * np.pi * np.asarray(x) / J)[:, None], d, axis=1),
            abs(a), d, name="sine")
    raise ConfigError(f"field 'drift.preset': unknown preset {preset!r}", cfg.source,
                      cfg.lines.get("drift.preset", cfg.lines.get("drift")))


def build_target(cfg: ExperimentConfig, key: str = "target") -> TargetPath:
    """``zero`` or ``sinusoid`` (``amplitude``, ``mode``, optional ``speed``) profiles."""
    spec = cfg.get(key, {"preset": "zero"})
    d = int(cfg.get("d", 1))
    J = float(cfg.get("J", 1.0))
    preset = spec.get("preset", "zero")
    if preset == "zero":
        return TargetPath.zero(d)
    if preset == "sinusoid":
        a = _sub(cfg, key, spec, "amplitude")
        k = _sub(cfg, key, spec, "mode", int, 1)
        c = _sub(cfg, key, spec, "speed", float, 0.0) if "speed" in spec else 0.0
        w = 2 * np.pi * k / J
        H = abs(a) * max(1.0, abs(c) * w, w * w)

        def h(t, x):
            return np.repeat((a * np.sin(w * (np.asarray(x) - c * t)))[:, None], d, axis=1)

        return TargetPath(h, H, d, name=f"sinusoid(k={k})")
    raise ConfigError(f"field '{key}.preset': unknown preset {preset!r}", cfg.source,
                      cfg.lines.get(f"{key}.preset", cfg.lines.get(key)))


def _grid_opt(cfg: ExperimentConfig, name: str, default: int) -> int:
    g = cfg.get("grid", {})
    v = g.get(name, default)
    if not isinstance(v, int) or isinstance(v, bool) or v < 1:
        raise ConfigError(f"field 'grid.{name}': expected a positive integer, got {v!r}", cfg.source,
                          cfg.lines.get(f"grid.{name}", cfg.lines.get("grid")))
    return v


def _plain_grid(cfg: ExperimentConfig, T: float, J: float) -> Grid:
    return Grid(J, T, _grid_opt(cfg, "n_x", 64), _grid_opt(cfg, "n_t", 64))


# --- experiment runners: each returns (rows, constants) ------------------------------------------


def run_kernel_check(cfg: ExperimentConfig):
    rows = []
    for t in (1e-4, 1e-3, 1e-2, 0.1, 1.0, 10.0):
        for x in (0.0, 0.25, 0.5):
            p = KernelPoint(t, x)
            a, b = kernel_image_sum(p), kernel_fourier_sum(p)
            rows.append(["image_vs_fourier", t, x, 1.0, a, b, abs(a - b), 0.0])
    for J in (2.0, 3.0):
        for t, x in ((0.1, 0.3), (0.5, 1.1)):
            a = float(heat_kernel(t / J**2, x / J, 1.0))
            b = J * float(heat_kernel(t, x, J))
            rows.append(["scaling", t, x, J, a, b, abs(a - b), 0.0])
    return rows, {"C_G": kernel_constant()}


def run_single_interval(cfg: ExperimentConfig):
    sigma = build_sigma(cfg)
    c0 = float(cfg.get("c0", 0.1))
    cps = _grid_opt(cfg, "cells_per_spacing", 2)
    spi = _grid_opt(cfg, "steps_per_interval", 32)
    tilted = bool(cfg.get("tilted", True))
    rows = []
    for i, eps in enumerate(cfg.list_of("eps")):
        est = single_interval_probability(eps, scheme_for(eps, c0), sigma, cfg.n_paths, tilted,
                                          master_seed=cfg.seed + i, steps_per_interval=spi,
                                          cells_per_spacing=cps, workers=cfg.workers)
        rows.append([eps, est.p_hat, est.stderr, est.n_effective, est.log_p, est.method])
    return rows, {}


def run_total_smallball(cfg: ExperimentConfig):
    sigma = build_sigma(cfg)
    c0 = float(cfg.get("c0", 0.1))
    cps = _grid_opt(cfg, "cells_per_spacing", 4)
    spi = _grid_opt(cfg, "steps_per_interval", 16)
    tilted = bool(cfg.get("tilted", True))
    rows = []
    i = 0
    for eps in cfg.list_of("eps"):
        t1 = c0 * eps**4
        horizons = ([k * t1 for k in cfg.list_of("intervals")] if "intervals" in cfg.raw
                    else [float(T) for T in cfg.list_of("T")] if "T" in cfg.raw else [t1])
        for T in horizons:
            est = total_smallball_probability(eps, T, scheme_for(eps, c0, T=T), sigma, cfg.n_paths,
                                              tilted=tilted, master_seed=cfg.seed + i,
                                              steps_per_interval=spi, cells_per_spacing=cps,
                                              workers=cfg.workers)
            rows.append([eps, T, est.p_hat, est.stderr, est.n_effective, est.log_p, est.method])
            i += 1
    return rows, {}


def run_scaling_check(cfg: ExperimentConfig):
    sigma = build_sigma(cfg)
    J = float(cfg.get("J"))
    T = float(cfg.list_of("T")[0])
    rows = []
    for i, eps in enumerate(cfg.list_of("eps")):
        rep = verify_scaling_reduction(J, eps, T, sigma, cfg.n_paths, n_x=_grid_opt(cfg, "n_x", 64),
                                       n_t=_grid_opt(cfg, "n_t", 64), master_seed=cfg.seed + 10 * i,
                                       workers=cfg.workers)
        for route, est, jj, e, tt in (("direct", rep.direct, J, eps, T),
                                      ("rescaled", rep.rescaled, 1.0, eps / math.sqrt(J), T / J**2)):
            rows.append([route, jj, e, tt, est.p_hat, est.stderr, est.n_effective])
    return rows, {}


def run_support(cfg: ExperimentConfig):
    sigma = build_sigma(cfg)
    drift = build_drift(cfg)
    h = build_target(cfg, "target")
    T = float(cfg.list_of("T")[0])
    grid = _plain_grid(cfg, T, float(cfg.get("J", 1.0)))
    u0 = build_target(cfg, "u0")(0.0, grid.x) if "u0" in cfg.raw else np.zeros((grid.n_x, sigma.d))
    rows = []
    for i, eps in enumerate(cfg.list_of("eps")):
        rep = support_theorem_run(u0, h, eps, T, sigma, drift, cfg.n_paths, grid=grid,
                                  master_seed=cfg.seed + 10 * i, workers=cfg.workers)
        for route, est in (("direct", rep.direct), ("reduced", rep.reduced)):
            rows.append([route, eps, T, est.p_hat, est.stderr, est.n_effective])
    return rows, {}


def run_gaussian(cfg: ExperimentConfig):
    c0 = float(cfg.get("c0", 0.1))
    eps_values = [float(e) for e in cfg.list_of("eps")]
    samples = int(cfg.get("samples", 20000))
    choice = choose_theta(c0, eps_values)
    rows, floors = [], []
    for i, eps in enumerate(eps_values):
        scheme = GridScheme.snapped(eps, c0, choice.theta)
        model = build_covariance_model(scheme)
        beta_max = max(float(np.abs(beta_solve(model, j)).sum()) for j in range(1, model.size))
        c11 = conditional_floor(model)
        eta = per_point_bound(c11)
        p, se = grid_event_probability(model, samples, cfg.seed + i)
        floors.append(c11)
        rows.append([eps, scheme.theta, model.size, beta_max, c11, eta, eta ** (scheme.n2 - 1), p, se])
    consts = {"theta": choice.theta, "C8": choice.constants.C8, "C9": choice.constants.C9,
              "C10": choice.constants.C10, "C11": min(floors), "C_G": kernel_constant()}
    return rows, consts


def run_tail_fit(cfg: ExperimentConfig):
    eps_list = [float(e) for e in cfg.list_of("eps")]
    sigma = build_sigma(cfg)
    if sigma.scalar is None:
        raise cfg.error("sigma", "tail fits need a constant scalar noise level")
    rows, fits = [], []
    for i, alpha in enumerate(cfg.list_of("alpha")):
        try:
            fit = estimate_tail_constants(float(alpha), eps_list, cfg.n_paths, sigma_level=sigma.scalar,
                                          master_seed=cfg.seed + 100 * i)
        except ConfigurationError as exc:
            raise cfg.error("eps", str(exc)) from None
        fits.append(fit)
        # standard error of the decay slope from the fit residuals
        x = fit.lambdas**2
        resid = fit.log_freq - (fit.intercept - fit.decay * x)
        se = math.sqrt(np.sum(resid**2) / max(x.size - 2, 1) / np.sum((x - x.mean()) ** 2))
        rows.append([alpha, fit.decay, fit.decay * math.sqrt(alpha), fit.intercept, fit.r2,
                     fit.K1, fit.K2, se])
    consts = {"K1": max(f.K1 for f in fits), "K2": min(f.K2 for f in fits)}
    return rows, consts


def _tilt_presets(grid: Grid, d: int) -> list[tuple[str, Any]]:
    x = grid.x
    sine = np.sin(2 * np.pi * x / grid.J)[:, None]
    return [
        ("constant", DriftSpec.constant(np.full(d, 1.5))),
        ("sine", DriftSpec.from_function(lambda t, xx, u: np.repeat(2.0 * sine, d, axis=1), 2.0, d, name="sine")),
        ("feedback", DriftSpec.from_function(lambda t, xx, u: -3.0 * np.clip(u, -1.0, 1.0), 3.0, d,
                                             name="feedback")),
    ]


class _NullMonitor:
    def __init__(self, grid, u_start):
        self.n = u_start.shape[0]

    def update(self, n, t, u):
        pass

    def result(self):
        return np.zeros(self.n)


def run_girsanov(cfg: ExperimentConfig):
    sigma = build_sigma(cfg)
    T = float(cfg.list_of("T")[0])
    grid = _plain_grid(cfg, T, float(cfg.get("J", 1.0)))
    rows = []
    for i, (name, tilt) in enumerate(_tilt_presets(grid, sigma.d)):
        _, lw = simulate_weighted(_NullMonitor, cfg.n_paths, cfg.seed + i, u0=np.zeros((grid.n_x, sigma.d)),
                                  grid=grid, sigma=sigma, tilt=tilt, workers=cfg.workers)
        # dP/dQ along the tilted paths has mean one
        w = np.exp(lw)
        M = tilt.bound
        rep = check_second_moment(M, T, grid.J, w)
        rows.append([name, M, float(w.mean()), float(w.std(ddof=1) / math.sqrt(w.size)),
                     rep.mean_square, rep.stderr, rep.upper])
    return rows, {}


RUNNERS: dict[str, Callable] = {
    "kernel-check": run_kernel_check,
    "single-interval": run_single_interval,
    "total-smallball": run_total_smallball,
    "scaling-check": run_scaling_check,
    "support-run": run_support,
    "gaussian-analysis": run_gaussian,
    "tail-fit": run_tail_fit,
    "girsanov-check": run_girsanov,
}


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _json_value(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def run(cfg: ExperimentConfig, out: Path) -> Path:
    """Run the configured experiment and write ``manifest.json`` and ``results.csv`` under ``out``."""
    rows, consts = RUNNERS[cfg.experiment](cfg)
    out.mkdir(parents=True, exist_ok=True)
    columns = COLUMNS[cfg.experiment]
    with open(out / "results.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for r in rows:
            writer.writerow([_fmt(v) for v in r])
    constants = {k: None for k in ("K1", "K2", "C8", "C9", "C10", "C_G", "C11")}
    constants.update({k: _json_value(float(v)) for k, v in consts.items()})
    manifest = {
        "experiment": cfg.experiment,
        "version": __version__,
        "config": cfg.raw,
        "seed": cfg.seed,
        "workers": cfg.workers,
        "constants": constants,
        "csv": {"file": "results.csv", "schema_version": CSV_SCHEMA_VERSION, "columns": columns},
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="smallball",
                                     description="Small-ball and support experiments for the stochastic heat equation.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="experiment", required=True, metavar="EXPERIMENT")
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", type=Path, help="YAML config file")
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        p.add_argument("--workers", type=int, help="worker threads (overrides the config)")
        p.add_argument("--out", type=Path, default=None, help="output directory (default: results/<experiment>)")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.config is not None:
            try:
                text = args.config.read_text(encoding="utf-8")
            except OSError as exc:
                raise ConfigError(f"cannot read config: {exc.strerror}", str(args.config)) from None
            source = str(args.config)
        else:
            text, source = "", "<no config>"
        cfg = load_config(text, args.experiment, source)
        if args.seed is not None:
            cfg.raw["seed"] = args.seed
        if args.workers is not None:
            if args.workers < 1:
                raise ConfigError("--workers must be at least 1", source)
            cfg.raw["workers"] = args.workers
        out = args.out or Path(cfg.get("out", f"results/{args.experiment}"))
        run(cfg, out)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValidationError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {out / 'manifest.json'} and {out / 'results.csv'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
