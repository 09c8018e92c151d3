"""Command-line front end: every run writes data files plus a ``manifest.json``.

Each subcommand reads an optional JSON config, applies flag overrides, and
records the resolved config in the manifest. ``ltcache rerun manifest.json``
replays a run; the data files come out byte-identical.

Exit codes: 0 success, 2 config error, 3 truncated curve or runaway trial.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from ._backend import BACKEND
from ._rng import ALGORITHM, MASK64
from .analysis import (
    DEFAULT_EPSILON_TAIL,
    average_overhead,
    failure_curve,
    monte_carlo_overhead,
    overhead_tail_bias,
)
from .errors import BudgetError, InvalidParameterError, LTCacheError, RunawayTrialError, TruncatedCurveError
from .fountain import DegreeDistribution, ideal_soliton, point_mass, robust_soliton
from .montecarlo import estimate_rate
from .netmodel import (
    REFERENCE_CONNECTIVITY,
    CacheSystem,
    GridGeometry,
    Placement,
    backhaul_report,
    derive_connectivity,
    zipf_popularity,
)
from .placement import PlacementProblem, optimize_integer, optimize_relaxed

log = logging.getLogger("ltcache")

EXIT_OK, EXIT_CONFIG, EXIT_TRUNCATED = 0, 2, 3

COMMANDS = ("pfail", "overhead", "connectivity", "optimize", "rate-vs-m", "rate-vs-alpha", "simulate")

DEFAULTS = {
    "seed": 0,
    "threads": 1,
    "k": 100,
    "n": 10,
    "M": 1,
    "alpha": 0.0,
    "gamma": list(REFERENCE_CONNECTIVITY),
    "distribution": {"type": "robust_soliton", "c": 0.05, "delta": 0.5},
    "epsilon_tail": DEFAULT_EPSILON_TAIL,
    "delta_cap": None,
    "method": "auto",
    "trials": 100000,
    "samples": 10_000_000,
    "radius": 60.0,
    "spacing": 45.0,
    "placement": "optimized",
    "records": False,
    "gnuplot": False,
    "mc_trials": 0,
}


class ConfigError(Exception):
    def __init__(self, path: str, msg: str):
        super().__init__(f"config key '{path}': {msg}")
        self.path = path


def fmt(x) -> str:
    return f"{float(x):.17g}"


# ---------------------------------------------------------------- config


def _get(cfg, path, kind, check=None, what=""):
    cur = cfg
    for part in path.split("."):
        if not isinstance(cur, dict) or part not in cur:
            raise ConfigError(path, "missing")
        cur = cur[part]
    try:
        if kind is int and isinstance(cur, float) and not cur.is_integer():
            raise ValueError
        if isinstance(cur, bool) and kind is not bool:
            raise ValueError
        val = kind(cur)
    except (TypeError, ValueError):
        raise ConfigError(path, f"expected {kind.__name__}, got {cur!r}") from None
    if check is not None and not check(val):
        raise ConfigError(path, f"{what} (got {cur!r})")
    return val


def _num_list(cfg, path):
    vals = cfg.get(path)
    if not isinstance(vals, list) or not vals:
        raise ConfigError(path, "expected a non-empty list of numbers")
    out = []
    for i, v in enumerate(vals):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"{path}[{i}]", f"expected a number, got {v!r}")
        out.append(float(v))
    return out


def _set_path(cfg, dotted, value):
    parts = dotted.split(".")
    cur = cfg
    for p in parts[:-1]:
        if not isinstance(cur.get(p), dict):
            cur[p] = {}
        cur = cur[p]
    cur[parts[-1]] = value


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _positive(x):
    return x > 0


def distribution_from(cfg, base_dir: Path) -> DegreeDistribution:
    spec = cfg.get("distribution")
    if not isinstance(spec, dict):
        raise ConfigError("distribution", "expected an object with a 'type' key")
    kind = spec.get("type")
    k = _get(cfg, "k", int, _positive, "must be >= 1")
    try:
        if kind == "robust_soliton":
            return robust_soliton(
                k,
                _get(cfg, "distribution.c", float, _positive, "must be > 0"),
                _get(cfg, "distribution.delta", float, _positive, "must be > 0"),
                strict=bool(spec.get("strict", True)),
            )
        if kind == "ideal_soliton":
            return ideal_soliton(k)
        if kind == "point_mass":
            return point_mass(_get(cfg, "distribution.degree", int, _positive, "must be >= 1"))
        if kind == "file":
            path = Path(_get(cfg, "distribution.path", str))
            if not path.is_absolute():
                path = base_dir / path
            if not path.is_file():
                raise ConfigError("distribution.path", f"no such file {str(path)!r}")
            return DegreeDistribution.from_file(path)
        if kind == "explicit":
            probs = spec.get("probs")
            if not isinstance(probs, list) or not probs:
                raise ConfigError("distribution.probs", "expected a non-empty list")
            return DegreeDistribution(np.asarray(probs, dtype=np.float64), name="explicit")
    except LTCacheError as exc:
        raise ConfigError("distribution", str(exc)) from None
    raise ConfigError("distribution.type", f"unknown type {kind!r}")


def gamma_from(cfg, seed: int) -> tuple[np.ndarray, dict]:
    g = cfg.get("gamma")
    if isinstance(g, list):
        return np.asarray(_num_list(cfg, "gamma")), {}
    if g == "reference":
        return np.asarray(REFERENCE_CONNECTIVITY), {}
    if isinstance(g, dict):
        sub = {"gamma": g}
        geom = GridGeometry(
            _get(sub, "gamma.radius", float, _positive, "must be > 0"),
            _get(sub, "gamma.spacing", float, _positive, "must be > 0"),
        )
        samples = _get(sub, "gamma.samples", int, _positive, "must be >= 1")
        est = derive_connectivity(geom, samples, seed)
        return est.gamma, {"connectivity_zero_coverage_fraction": est.zero_coverage_fraction}
    raise ConfigError("gamma", "expected a list, 'reference', or {radius, spacing, samples}")


def system_from(cfg, M, alpha, gamma) -> CacheSystem:
    n = _get(cfg, "n", int, _positive, "must be >= 1")
    k = _get(cfg, "k", int, _positive, "must be >= 1")
    if "theta" in cfg and cfg["theta"] is not None:
        theta = np.asarray(_num_list(cfg, "theta"))
    else:
        if alpha < 0:
            raise ConfigError("alpha", "must be >= 0")
        theta = zipf_popularity(n, alpha)
    try:
        return CacheSystem(n, k, M, theta, gamma)
    except LTCacheError as exc:
        raise ConfigError("M" if "M" in str(exc) else "theta/gamma", str(exc)) from None


# ---------------------------------------------------------------- runs


@dataclass
class RunContext:
    command: str
    config: dict
    out: Path
    base_dir: Path
    outputs: list = field(default_factory=list)
    results: dict = field(default_factory=dict)

    @property
    def seed(self) -> int:
        return _get(self.config, "seed", int, lambda s: 0 <= s <= MASK64, "must be a u64")

    @property
    def threads(self) -> int:
        return _get(self.config, "threads", int, _positive, "must be >= 1")

    def path(self, name: str) -> Path:
        self.outputs.append(name)
        return self.out / name

    def write_json(self, name: str, obj) -> None:
        self.path(name).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _curve(ctx: RunContext, dist):
    cfg = ctx.config
    k = _get(cfg, "k", int, _positive, "must be >= 1")
    eps = _get(cfg, "epsilon_tail", float, lambda e: 0 < e < 1, "must lie in (0, 1)")
    cap = cfg.get("delta_cap")
    if cap is not None:
        cap = _get(cfg, "delta_cap", int, lambda c: c >= 0, "must be >= 0")
    method = cfg.get("method", "auto")
    if method not in ("auto", "backward", "forward"):
        raise ConfigError("method", "expected auto, backward or forward")
    try:
        dist.check_block(k)
    except LTCacheError as exc:
        raise ConfigError("distribution", str(exc)) from None
    return failure_curve(k, dist, epsilon_tail=eps, delta_cap=cap, method=method)


def cmd_pfail(ctx: RunContext) -> int:
    dist = distribution_from(ctx.config, ctx.base_dir)
    curve = _curve(ctx, dist)
    curve.write(ctx.path("pfail.csv"), ctx.path("pfail.json"))
    ctx.results.update(delta_max=curve.delta_max, truncated=curve.truncated)
    if ctx.config.get("gnuplot"):
        ctx.path("pfail.gp").write_text(
            "set datafile separator ','\nset logscale y\nset xlabel 'overhead'\nset ylabel 'P_F'\n"
            "plot 'pfail.csv' every ::1 using 1:2 with lines title 'P_F'\n"
        )
    if curve.truncated:
        print(
            f"error: curve truncated at delta_cap={curve.delta_max}: pf={curve.pf[-1]:.3g} "
            f">= epsilon_tail={curve.epsilon_tail:g}",
            file=sys.stderr,
        )
        return EXIT_TRUNCATED
    return EXIT_OK


def cmd_overhead(ctx: RunContext) -> int:
    dist = distribution_from(ctx.config, ctx.base_dir)
    curve = _curve(ctx, dist)
    curve.write(ctx.path("pfail.csv"), ctx.path("pfail.json"))
    e_delta = average_overhead(curve)
    res = {
        "k": curve.k,
        "distribution": dist.name,
        "distribution_digest": dist.digest(),
        "e_delta": e_delta,
        "e_delta_normalized": e_delta / curve.k,
        "delta_max": curve.delta_max,
        "tail_bias_estimate": overhead_tail_bias(curve),
    }
    trials = _get(ctx.config, "mc_trials", int, lambda t: t >= 0, "must be >= 0")
    if trials:
        mean, se, _ = monte_carlo_overhead(curve.k, dist, trials, master_seed=ctx.seed)
        res.update(mc_mean=mean, mc_stderr=se, mc_trials=trials)
    ctx.write_json("overhead.json", res)
    ctx.results.update(e_delta=e_delta)
    print(f"E[delta] = {e_delta:.10g}")
    return EXIT_OK


def cmd_connectivity(ctx: RunContext) -> int:
    cfg = ctx.config
    geom = GridGeometry(
        _get(cfg, "radius", float, _positive, "must be > 0"),
        _get(cfg, "spacing", float, _positive, "must be > 0"),
    )
    est = derive_connectivity(geom, _get(cfg, "samples", int, _positive, "must be >= 1"), ctx.seed)
    with ctx.path("connectivity.csv").open("w") as fh:
        fh.write("h,gamma,stderr\n")
        for h, (g, s) in enumerate(zip(est.gamma, est.stderr()), start=1):
            fh.write(f"{h},{fmt(g)},{fmt(s)}\n")
    ctx.path("connectivity.json").write_text(est.to_json() + "\n")
    ctx.results.update(gamma=[float(g) for g in est.gamma])
    print("gamma =", " ".join(f"{g:.4f}" for g in est.gamma))
    return EXIT_OK


def _scenario(ctx: RunContext, M=None, alpha=None):
    cfg = ctx.config
    M = _get(cfg, "M", float, lambda m: m >= 0, "must be >= 0") if M is None else M
    alpha = _get(cfg, "alpha", float) if alpha is None else alpha
    gamma, _ = gamma_from(cfg, ctx.seed)
    return system_from(cfg, M, alpha, gamma)


def _write_placement(path, w):
    with path.open("w") as fh:
        fh.write("file_index,w\n")
        for j, v in enumerate(w, start=1):
            fh.write(f"{j},{fmt(v)}\n")


def cmd_optimize(ctx: RunContext) -> int:
    dist = distribution_from(ctx.config, ctx.base_dir)
    curve = _curve(ctx, dist)
    e_delta = average_overhead(curve)
    sys_ = _scenario(ctx)
    prob = PlacementProblem(sys_, e_delta)
    res = optimize_integer(prob)
    rel = optimize_relaxed(prob)
    res.placement.write_csv(ctx.path("placement.csv"))
    _write_placement(ctx.path("placement_relaxed.csv"), rel.w)
    report = backhaul_report(sys_, res.placement, curve)
    summary = {
        "integer": res.summary(),
        "relaxed": rel.summary(),
        "achieved": report,
        "scenario_digest": sys_.digest(),
    }
    ctx.write_json("optimize.json", summary)
    ctx.results.update(objective=res.objective, expected_backhaul=report["expected_backhaul"])
    print(f"T_UP = {res.objective:.10g}  E[T] = {report['expected_backhaul']:.10g}")
    return EXIT_OK


def _rate_point(sys_, curve, e_delta):
    lt = optimize_integer(PlacementProblem(sys_, e_delta))
    mds = optimize_integer(PlacementProblem(sys_, 0.0))
    rep = backhaul_report(sys_, lt.placement, curve)
    mds_rate = backhaul_report(sys_, mds.placement, curve)["mds_rate_normalized"]
    return [
        ("LT", rep["rate_normalized"]),
        ("LT_upper_bound", rep["upper_bound_normalized"]),
        ("MDS", mds_rate),
    ]


def _sweep(ctx: RunContext, points, name: str, xcol: str) -> int:
    dist = distribution_from(ctx.config, ctx.base_dir)
    curve = _curve(ctx, dist)
    e_delta = average_overhead(curve)
    systems = [_scenario(ctx, M=M, alpha=a) for M, a in points]

    def job(s):
        return _rate_point(s, curve, e_delta)

    if ctx.threads > 1:
        with ThreadPoolExecutor(max_workers=ctx.threads) as pool:
            rows = list(pool.map(job, systems))
    else:
        rows = [job(s) for s in systems]
    with ctx.path(f"{name}.csv").open("w") as fh:
        fh.write("M,alpha,scheme,rate_normalized\n")
        for (M, a), row in zip(points, rows):
            for scheme, rate in row:
                fh.write(f"{fmt(M)},{fmt(a)},{scheme},{fmt(rate)}\n")
    if ctx.config.get("gnuplot"):
        col = 1 if xcol == "M" else 2
        plots = ", ".join(
            f"'{name}.csv' using {col}:(strcol(3) eq '{s}' ? $4 : 1/0) with linespoints title '{s}'"
            for s in ("LT", "LT_upper_bound", "MDS")
        )
        ctx.path(f"{name}.gp").write_text(
            f"set datafile separator ','\nset key autotitle columnhead\nset xlabel '{xcol}'\n"
            f"set ylabel 'normalized backhaul rate'\nplot {plots}\n"
        )
    ctx.results.update(points=len(points), e_delta=e_delta)
    return EXIT_OK


def cmd_rate_vs_m(ctx: RunContext) -> int:
    cfg = ctx.config
    n = _get(cfg, "n", int, _positive, "must be >= 1")
    Ms = _num_list(cfg, "M_values") if "M_values" in cfg else [float(m) for m in range(n + 1)]
    alpha = _get(cfg, "alpha", float)
    return _sweep(ctx, [(M, alpha) for M in Ms], "rate_vs_m", "M")


def cmd_rate_vs_alpha(ctx: RunContext) -> int:
    cfg = ctx.config
    alphas = (
        _num_list(cfg, "alpha_values")
        if "alpha_values" in cfg
        else [round(0.1 * i, 10) for i in range(13)]
    )
    M = _get(cfg, "M", float, lambda m: m >= 0, "must be >= 0")
    return _sweep(ctx, [(M, a) for a in alphas], "rate_vs_alpha", "alpha")


def cmd_simulate(ctx: RunContext) -> int:
    cfg = ctx.config
    dist = distribution_from(cfg, ctx.base_dir)
    sys_ = _scenario(ctx)
    mode = cfg.get("placement", "optimized")
    curve = None
    if mode == "uniform":
        try:
            place = Placement.uniform(sys_)
        except LTCacheError as exc:
            raise ConfigError("placement", str(exc)) from None
    elif mode == "optimized":
        curve = _curve(ctx, dist)
        place = optimize_integer(PlacementProblem(sys_, average_overhead(curve))).placement
    elif isinstance(mode, str):
        path = Path(mode) if Path(mode).is_absolute() else ctx.base_dir / mode
        if not path.is_file():
            raise ConfigError("placement", f"expected 'uniform', 'optimized' or a CSV path, got {mode!r}")
        place = Placement.read_csv(path)
    else:
        raise ConfigError("placement", f"expected a string, got {mode!r}")
    try:
        place.check(sys_)
    except LTCacheError as exc:
        raise ConfigError("placement", str(exc)) from None
    trials = _get(cfg, "trials", int, _positive, "must be >= 1")
    est = estimate_rate(sys_, place, dist, trials, master_seed=ctx.seed, threads=ctx.threads)
    summary = est.summary(sys_)
    if cfg.get("compare", True):
        if curve is None:
            curve = _curve(ctx, dist)
        rep = backhaul_report(sys_, place, curve)
        summary["expected_backhaul"] = rep["expected_backhaul"]
        summary["z_score"] = (
            (est.mean - rep["expected_backhaul"]) / est.stderr if est.stderr > 0 else 0.0
        )
    place.write_csv(ctx.path("placement.csv"))
    with ctx.path("histogram.csv").open("w") as fh:
        fh.write("t,count\n")
        for t, c in enumerate(est.histogram):
            if c:
                fh.write(f"{t},{int(c)}\n")
    if cfg.get("records"):
        est.write_records(ctx.path("trials.csv"))
    ctx.write_json("simulate.json", summary)
    ctx.results.update(mean=est.mean, stderr=est.stderr)
    print(f"mean t = {est.mean:.6g} +/- {est.stderr:.3g} over {trials} trials")
    return EXIT_OK


HANDLERS = {
    "pfail": cmd_pfail,
    "overhead": cmd_overhead,
    "connectivity": cmd_connectivity,
    "optimize": cmd_optimize,
    "rate-vs-m": cmd_rate_vs_m,
    "rate-vs-alpha": cmd_rate_vs_alpha,
    "simulate": cmd_simulate,
}


# ---------------------------------------------------------------- manifest


def code_digest() -> str:
    h = hashlib.sha256()
    for p in sorted(Path(__file__).parent.glob("*.py")):
        h.update(p.name.encode())
        h.update(p.read_bytes())
    return h.hexdigest()[:16]


def _file_digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(ctx: RunContext, status: int) -> None:
    manifest = {
        "command": ctx.command,
        "config": ctx.config,
        "seeds": {"master_seed": ctx.seed, "rng": ALGORITHM},
        "code_digest": code_digest(),
        "version": __version__,
        "backend": BACKEND,
        "exit_status": status,
        "outputs": [{"path": name, "sha256": _file_digest(ctx.out / name)} for name in ctx.outputs],
        "results": ctx.results,
    }
    (ctx.out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=float) + "\n")


def execute(command: str, config: dict, out: Path, base_dir: Path) -> int:
    out.mkdir(parents=True, exist_ok=True)
    ctx = RunContext(command, config, out, base_dir)
    try:
        status = HANDLERS[command](ctx)
    except TruncatedCurveError as exc:
        print(f"error: {exc}", file=sys.stderr)
        status = EXIT_TRUNCATED
    except RunawayTrialError as exc:
        print(f"error: {exc}", file=sys.stderr)
        status = EXIT_TRUNCATED
    except (InvalidParameterError, BudgetError) as exc:
        raise ConfigError(command, str(exc)) from None
    write_manifest(ctx, status)
    return status


# ---------------------------------------------------------------- argparse


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON config file")
    p.add_argument("--seed", type=int, help="master seed (u64)")
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    p.add_argument("--threads", type=int, help="worker threads for sweeps and simulation")
    p.add_argument("--k", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--M", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--trials", type=int)
    p.add_argument("--epsilon-tail", dest="epsilon_tail", type=float)
    p.add_argument("--delta-cap", dest="delta_cap", type=int)
    p.add_argument("--gnuplot", action="store_true", default=None, help="also write a gnuplot script")
    p.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override any config key (dotted path, JSON value), e.g. distribution.c=0.1",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ltcache", description="LT-coded edge caching analysis")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        _add_common(sub.add_parser(name, help=HANDLERS[name].__name__.replace("cmd_", "")))
    rerun = sub.add_parser("rerun", help="replay a run from its manifest")
    rerun.add_argument("manifest", type=Path)
    rerun.add_argument("--out", type=Path, required=True)
    return parser


def resolve_config(args) -> tuple[dict, Path]:
    cfg = copy.deepcopy(DEFAULTS)
    base_dir = Path.cwd()
    if args.config is not None:
        try:
            loaded = json.loads(args.config.read_text())
        except OSError as exc:
            raise ConfigError("--config", str(exc)) from None
        except json.JSONDecodeError as exc:
            raise ConfigError("--config", f"invalid JSON: {exc}") from None
        if not isinstance(loaded, dict):
            raise ConfigError("--config", "top level must be an object")
        cfg.update(loaded)
        base_dir = args.config.resolve().parent
    for key in ("seed", "threads", "k", "n", "M", "alpha", "trials", "epsilon_tail", "delta_cap", "gnuplot"):
        val = getattr(args, key)
        if val is not None:
            cfg[key] = val
    for item in args.overrides:
        if "=" not in item:
            raise ConfigError(item, "--set expects KEY=VALUE")
        key, val = item.split("=", 1)
        _set_path(cfg, key.strip(), _parse_value(val))
    # make relative paths absolute so the manifest replays from anywhere
    dist = cfg.get("distribution")
    if isinstance(dist, dict) and dist.get("type") == "file" and isinstance(dist.get("path"), str):
        dist["path"] = str((base_dir / dist["path"]).resolve())
    if isinstance(cfg.get("placement"), str) and cfg["placement"] not in ("uniform", "optimized"):
        cfg["placement"] = str((base_dir / cfg["placement"]).resolve())
    return cfg, base_dir


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        if args.command == "rerun":
            try:
                manifest = json.loads(args.manifest.read_text())
                command, config = manifest["command"], manifest["config"]
            except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ConfigError("manifest", f"unreadable manifest: {exc}") from None
            if command not in HANDLERS:
                raise ConfigError("manifest.command", f"unknown command {command!r}")
            return execute(command, config, args.out, args.manifest.resolve().parent)
        config, base_dir = resolve_config(args)
        return execute(args.command, config, args.out, base_dir)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
