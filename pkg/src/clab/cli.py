"""Command-line entry point for the reaction-diffusion observation laboratory.

Exit codes:
  0  experiment ran and all configured assertions passed
  2  an assertion suite failed (results written, at least one check red)
  3  configuration error (missing/unreadable/invalid config or override)
  4  input/output error while writing artifacts
  5  any other domain error from the library modules
  1  unexpected internal error
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:                      # Python < 3.11
    import tomli as tomllib

from . import __version__
from .errors import ClabError, ConfigParse, Io
from .geometry import build_polar_grid, construct_psi0_radial
from .io import (write_field_csv, write_observation_csv, write_samples_csv,
                 write_scan_csv)
from .observe import ObservationSpec, apply_observation, extract_trace_and_conormal
from .pde import SourceField, solve_forward_linear
from .positivity import run_positivity_check
from .presets import get_preset
from .stability import SourceClassSpec, estimate_constant, sample_source_Gk
from .carleman import scan_parameters
from .manufactured import spatial_convergence_study, temporal_convergence_study
from . import plots

_EXIT_OK = 0
_EXIT_ASSERT = 2
_EXIT_CONFIG = 3
_EXIT_IO = 4
_EXIT_DOMAIN = 5


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

_DEFAULTS = {
    "geometry": {"r0": 1.0, "r1": 2.0, "n_r": 33, "n_theta": 16,
                 "T": 1.0, "n_t": 17},
    "coefficients": {"preset": "heat"},
    "observation": {"gamma": 1.0, "delta": 0.0, "epsilon": 0.5},
    "weights": {"lambda_grid": [0.5, 1.0, 1.5, 2.0],
                "s_grid": [1.0, 2.0, 3.0, 4.0], "mu": 1.0, "margin": 0.0},
    "experiment": {"n_samples": 20, "k": 1.0, "seed": 0, "workers": 1,
                   "scheme": "backward_euler"},
    "output": {"directory": "out"},
}


def _deep_update(base: dict, extra: dict) -> dict:
    for key, val in extra.items():
        if isinstance(val, dict) and isinstance(base.get(key), dict):
            _deep_update(base[key], val)
        else:
            base[key] = val
    return base


def _parse_override(text: str):
    if "=" not in text:
        raise ConfigParse(f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def load_config(path: str | None, overrides) -> dict:
    config = json.loads(json.dumps(_DEFAULTS))
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigParse(f"config file not found: {path}")
        try:
            with open(p, "rb") as fh:
                file_cfg = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigParse(f"cannot parse {path}: {exc}") from exc
        _deep_update(config, file_cfg)
    applied = []
    for text in overrides or []:
        key, value = _parse_override(text)
        node = config
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigParse(f"override {key!r} crosses a scalar")
        node[parts[-1]] = value
        applied.append([key, value])
    config["_overrides"] = applied
    return config


def _digest(payload) -> str:
    return hashlib.sha256(
        json.dumps(payload, sort_keys=True, default=str).encode()).hexdigest()


def _grid_from(config: dict):
    g = config["geometry"]
    return build_polar_grid(g["r0"], g["r1"], int(g["n_r"]),
                            int(g["n_theta"]), g["T"], int(g["n_t"]))


# ---------------------------------------------------------------------------
# Artifact bookkeeping
# ---------------------------------------------------------------------------

class _OutputDir:
    def __init__(self, directory: str):
        self.dir = Path(directory)
        try:
            self.dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise Io(f"cannot create output directory {directory}: {exc}") from exc
        self.artifacts: dict[str, str] = {}

    def path(self, name: str) -> Path:
        return self.dir / name

    def register(self, name: str):
        p = self.path(name)
        if not p.is_file():
            raise Io(f"artifact {p} was not written")
        self.artifacts[name] = hashlib.sha256(p.read_bytes()).hexdigest()

    def write_json(self, name: str, text: str):
        try:
            self.path(name).write_text(text)
        except OSError as exc:
            raise Io(f"cannot write {name}: {exc}") from exc
        self.register(name)

    def finish(self, config: dict, seed: int):
        import scipy
        manifest = {
            "schema_version": 1,
            "config_digest": _digest({k: v for k, v in config.items()
                                      if k != "_overrides"}),
            "overrides": config.get("_overrides", []),
            "seed": seed,
            "versions": {"clab": __version__, "numpy": np.__version__,
                         "scipy": scipy.__version__,
                         "python": sys.version.split()[0]},
            "artifacts": self.artifacts,
        }
        self.path("manifest.json").write_text(
            json.dumps(manifest, sort_keys=True, indent=2))


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------

def _observation_spec(config, n):
    o = config["observation"]
    n_theta = int(config["geometry"]["n_theta"])
    return ObservationSpec(
        gamma=np.full((n, n_theta), float(o["gamma"])),
        delta=np.full((n, n_theta), float(o["delta"])),
        epsilon=float(o["epsilon"]))


def run_forward(config: dict, out: _OutputDir, seed: int) -> int:
    grid = _grid_from(config)
    coeffs = get_preset(config["coefficients"]["preset"], grid)
    spec = SourceClassSpec(k=float(config["experiment"]["k"]), seed=seed)
    g = sample_source_Gk(spec, grid, coeffs.n)
    y0 = np.zeros((coeffs.n,) + grid.shape)
    y = solve_forward_linear(coeffs, g, y0, grid,
                             scheme=config["experiment"]["scheme"])
    obs = _observation_spec(config, coeffs.n)
    zeta = apply_observation(obs, extract_trace_and_conormal(y, coeffs, grid))
    write_field_csv(out.path("state.csv"), y)
    out.register("state.csv")
    write_field_csv(out.path("source.csv"), g)
    out.register("source.csv")
    write_observation_csv(out.path("observation.csv"), zeta)
    out.register("observation.csv")
    plots.plot_observation_series(zeta, out.path("observation.svg"))
    out.register("observation.svg")
    out.write_json("forward.json", json.dumps({
        "schema_version": 1, "max_abs": y.max_abs(),
        "g_l2": g.l2_Q, "finite": bool(np.isfinite(y.values).all()),
    }, sort_keys=True))
    return _EXIT_OK


def run_carleman(config: dict, out: _OutputDir, seed: int) -> int:
    grid = _grid_from(config)
    coeffs = get_preset("heat", grid)
    psi0 = construct_psi0_radial(grid)
    obs = _observation_spec(config, 1)
    spec = SourceClassSpec(k=float(config["experiment"]["k"]), seed=seed)
    rng = np.random.default_rng(seed)
    n_samples = int(config["experiment"]["n_samples"])
    corpus = []
    y0 = np.zeros((1,) + grid.shape)
    for _ in range(n_samples):
        g = sample_source_Gk(spec, grid, 1, rng)
        y = solve_forward_linear(coeffs, g, y0, grid)
        zeta = apply_observation(obs, extract_trace_and_conormal(y, coeffs, grid))
        corpus.append((y, g, zeta))
    w = config["weights"]
    scan = scan_parameters(corpus, w["s_grid"], w["lambda_grid"], psi0, grid,
                           mu=float(w["mu"]), margin=float(w["margin"]))
    write_scan_csv(out.path("scan.csv"), scan)
    out.register("scan.csv")
    plots.plot_scan_heatmap(scan, out.path("scan.svg"))
    out.register("scan.svg")
    out.write_json("carleman.json", json.dumps({
        "schema_version": 1, "stabilized": bool(scan.stabilized),
        "C_hat": scan.C_hat, "s_star": scan.s_star,
        "lambda_star": scan.lambda_star, "n_corpus": scan.n_corpus,
    }, sort_keys=True))
    return _EXIT_OK if scan.stabilized and math.isfinite(scan.C_hat) \
        else _EXIT_ASSERT


def run_stability(config: dict, out: _OutputDir, seed: int) -> int:
    grid = _grid_from(config)
    coeffs = get_preset(config["coefficients"]["preset"], grid)
    obs = _observation_spec(config, coeffs.n)
    spec = SourceClassSpec(k=float(config["experiment"]["k"]), seed=seed)
    report = estimate_constant(
        spec, grid, coeffs, obs, int(config["experiment"]["n_samples"]),
        workers=int(config["experiment"]["workers"]))
    out.write_json("stability.json", report.to_json())
    write_samples_csv(out.path("samples.csv"), report)
    out.register("samples.csv")
    plots.plot_ratio_histogram([r[3] for r in report.samples],
                               out.path("ratios.svg"))
    out.register("ratios.svg")
    ok = (report.zero_observations == 0
          and math.isfinite(report.C_hat))
    return _EXIT_OK if ok else _EXIT_ASSERT


def run_positivity(config: dict, out: _OutputDir, seed: int) -> int:
    grid = _grid_from(config)
    coeffs = get_preset(config["coefficients"]["preset"], grid)
    spec = SourceClassSpec(k=float(config["experiment"]["k"]), seed=seed)
    rng = np.random.default_rng(seed)
    n_samples = int(config["experiment"]["n_samples"])
    results = []
    all_pass = True
    for i in range(n_samples):
        g = sample_source_Gk(spec, grid, coeffs.n, rng)
        y0 = rng.uniform(0.0, 1.0, (coeffs.n,) + grid.shape)
        y = solve_forward_linear(coeffs, g, y0, grid)
        rep = run_positivity_check(y, coeffs=coeffs)
        results.append(json.loads(rep.to_json()))
        all_pass = all_pass and rep.passed
    out.write_json("positivity.json", json.dumps({
        "schema_version": 1, "all_passed": all_pass, "instances": results,
    }, sort_keys=True))
    return _EXIT_OK if all_pass else _EXIT_ASSERT


_SLOPE_BANDS = {
    ("space", "backward_euler"): (1.7, 2.3),
    ("space", "crank_nicolson"): (1.7, 2.3),
    ("time", "backward_euler"): (0.8, 1.2),
    ("time", "crank_nicolson"): (1.7, 2.3),
}


def run_convergence(config: dict, out: _OutputDir, seed: int) -> int:
    rows = []
    ok = True
    for scheme in ("backward_euler", "crank_nicolson"):
        hs, errs, slope = spatial_convergence_study(scheme=scheme)
        lo, hi = _SLOPE_BANDS[("space", scheme)]
        rows.append({"axis": "space", "scheme": scheme, "hs": hs,
                     "errors": errs, "slope": slope, "band": [lo, hi],
                     "pass": lo <= slope <= hi})
        plots.plot_convergence(hs, errs, slope,
                               out.path(f"space_{scheme}.svg"))
        out.register(f"space_{scheme}.svg")
        dts, terrs, tslope = temporal_convergence_study(scheme=scheme)
        lo, hi = _SLOPE_BANDS[("time", scheme)]
        rows.append({"axis": "time", "scheme": scheme, "hs": dts,
                     "errors": terrs, "slope": tslope, "band": [lo, hi],
                     "pass": lo <= tslope <= hi})
    ok = all(r["pass"] for r in rows)
    out.write_json("convergence.json", json.dumps(
        {"schema_version": 1, "rows": rows, "all_passed": ok}, sort_keys=True))
    with open(out.path("orders.csv"), "w") as fh:
        fh.write("axis,scheme,slope,band_lo,band_hi,pass\n")
        for r in rows:
            fh.write(f"{r['axis']},{r['scheme']},{r['slope']!r},"
                     f"{r['band'][0]},{r['band'][1]},{r['pass']}\n")
    out.register("orders.csv")
    return _EXIT_OK if ok else _EXIT_ASSERT


_RUNNERS = {
    "forward": run_forward,
    "carleman": run_carleman,
    "stability": run_stability,
    "positivity": run_positivity,
    "convergence": run_convergence,
}


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="clab",
        description="Forward solves, weighted-inequality scans, and "
                    "source-stability experiments on annular domains.",
        epilog="Exit codes:" + __doc__.split("Exit codes:")[1],
        formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _RUNNERS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None,
                       help="TOML experiment configuration")
        p.add_argument("--out", default=None,
                       help="output directory (default: config value, "
                            "or $CLAB_OUT)")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--workers", type=int, default=None)
        p.add_argument("--override", action="append", default=[],
                       metavar="KEY=VALUE",
                       help="override a config entry (repeatable)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config, args.override)
        if args.seed is not None:
            config["experiment"]["seed"] = args.seed
            config["_overrides"].append(["experiment.seed", args.seed])
        if args.workers is not None:
            config["experiment"]["workers"] = args.workers
            config["_overrides"].append(["experiment.workers", args.workers])
        out_dir = (args.out or os.environ.get("CLAB_OUT")
                   or config["output"]["directory"])
        out = _OutputDir(out_dir)
        seed = int(config["experiment"]["seed"])
        code = _RUNNERS[args.command](config, out, seed)
        out.finish(config, seed)
        return code
    except ConfigParse as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return _EXIT_CONFIG
    except Io as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return _EXIT_IO
    except ClabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _EXIT_DOMAIN
    except Exception as exc:                      # noqa: BLE001
        print(f"internal error: {exc!r}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
