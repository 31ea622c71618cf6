"""Command line front end.

Exit codes: 0 success, 1 usage or configuration error, 2 a checked assertion
failed.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import SCHEMA_VERSION, conditional_mass, indicator_gate_error, run_convergence
from .constructor import Schedule
from .density import make_target
from .errors import MoEApproxError
from .gating import (
    EqualCovGaussianGating,
    SoftmaxGating,
    equalcov_gaussian_to_softmax,
    sharp_gates,
    softmax_to_gaussian,
)
from .kernels import BACKEND

EXIT_OK, EXIT_CONFIG, EXIT_ASSERT = 0, 1, 2
RNG_NAME = "numpy.PCG64/1"


class ConfigError(Exception):
    pass


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass
class ExperimentConfig:
    name: str
    target: str
    target_params: dict
    kernel: str
    p: float
    ladder: list
    x_points: int | None
    y_points: int | None
    check_doubling: bool
    eps: list
    kappa: float | None
    out_dir: Path
    csv_name: str
    json_name: str
    seed: int
    workers: int
    assertions: dict = field(default_factory=dict)


def _need(cond, where, msg):
    if not cond:
        raise ConfigError(f"{where}: {msg}")


def _num(doc, key, where, default=None, lo=None, integer=False, allow_none=False):
    v = doc.get(key, default)
    if v is None and allow_none:
        return None
    _need(isinstance(v, (int, float)) and not isinstance(v, bool), f"{where}.{key}", "expected a number")
    _need(math.isfinite(v), f"{where}.{key}", "must be finite")
    if integer:
        _need(float(v).is_integer(), f"{where}.{key}", "expected an integer")
        v = int(v)
    if lo is not None:
        _need(v >= lo, f"{where}.{key}", f"must be >= {lo}")
    return v


def resolve_config_path(name: str) -> tuple[str, str]:
    """Return (text, source name). Bare names refer to the bundled configs."""
    path = Path(name)
    if path.exists():
        return path.read_text(), str(path)
    bundled = resources.files("moeapprox") / "configs" / f"{name}.json"
    if bundled.is_file():
        return bundled.read_text(), f"bundled:{name}"
    raise ConfigError(f"config {name!r} not found (neither a file nor a bundled config)")


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    _need(isinstance(doc, dict), source, "top level must be an object")
    tgt = doc.get("target")
    _need(isinstance(tgt, dict) and isinstance(tgt.get("name"), str), "target", "needs a string 'name'")
    params = tgt.get("params", {})
    _need(isinstance(params, dict), "target.params", "must be an object")
    for k, v in params.items():
        if isinstance(v, (int, float)) and not isinstance(v, bool):
            _need(math.isfinite(v), f"target.params.{k}", "must be finite")
            if k in ("scale", "sigma"):
                _need(v > 0, f"target.params.{k}", "must be positive")
    kernel = doc.get("kernel", "gaussian")
    _need(kernel in ("gaussian", "laplace", "bump"), "kernel", f"unknown kernel {kernel!r}")
    p = doc.get("p", 2)
    if p in ("inf", "sup"):
        p = math.inf
    else:
        p = _num(doc, "p", "", 2, lo=1)
    ladder_doc = doc.get("ladder")
    _need(isinstance(ladder_doc, list) and ladder_doc, "ladder", "must be a non-empty list")
    ladder = []
    for i, rung in enumerate(ladder_doc):
        where = f"ladder[{i}]"
        _need(isinstance(rung, dict), where, "must be an object")
        n = _num(rung, "n", where, lo=1, integer=True)
        l = _num(rung, "l", where, None, lo=0, allow_none=True)
        m = _num(rung, "m", where, None, lo=2, integer=True, allow_none=True)
        rho = _num(rung, "rho", where, 3.0)
        _need(rho > 0, f"{where}.rho", "must be positive")
        ladder.append(Schedule(n, l, m, float(rho), kernel))
    for i, (a, b) in enumerate(zip(ladder, ladder[1:]), start=1):
        a, b = a.resolved(), b.resolved()
        _need(b.n >= a.n and (b.n, b.l, b.m) != (a.n, a.l, a.m), f"ladder[{i}]", "schedules must strictly refine")
    grid = doc.get("grid", {})
    _need(isinstance(grid, dict), "grid", "must be an object")
    x_points = _num(grid, "x_points", "grid", None, lo=1, integer=True, allow_none=True)
    y_points = _num(grid, "y_points", "grid", None, lo=1, integer=True, allow_none=True)
    check_doubling = bool(grid.get("check_doubling", True))
    eps = doc.get("eps", [0.05])
    _need(isinstance(eps, list) and all(isinstance(e, (int, float)) and e > 0 for e in eps), "eps",
          "must be a list of positive numbers")
    kappa = _num(doc, "kappa", "", None, allow_none=True)
    _need(kappa is None or kappa > 0, "kappa", "must be positive")
    out = doc.get("output", {})
    _need(isinstance(out, dict), "output", "must be an object")
    name = str(doc.get("name", tgt["name"]))
    seed = _num(doc, "seed", "", 0, lo=0, integer=True)
    workers = _num(doc, "workers", "", 1, lo=1, integer=True)
    assertions = doc.get("assertions", {})
    _need(isinstance(assertions, dict), "assertions", "must be an object")
    try:
        make_target(tgt["name"], params)
    except MoEApproxError as exc:
        raise ConfigError(f"target: {exc}") from None
    return ExperimentConfig(
        name=name,
        target=tgt["name"],
        target_params=params,
        kernel=kernel,
        p=p,
        ladder=ladder,
        x_points=x_points,
        y_points=y_points,
        check_doubling=check_doubling,
        eps=[float(e) for e in eps],
        kappa=kappa,
        out_dir=Path(out.get("dir", ".")),
        csv_name=out.get("csv", f"{name}.csv"),
        json_name=out.get("json", f"{name}.json"),
        seed=seed,
        workers=workers,
        assertions=assertions,
    )


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------


def _check_assertions(cfg, report, norm_devs) -> list[str]:
    a = cfg.assertions
    fails = []
    rows = report.entries
    if a.get("monotone_total"):
        for i in range(1, len(rows)):
            if not rows[i].total < rows[i - 1].total:
                fails.append(f"rung {i} (n={rows[i].n}): total {rows[i].total!r} not below {rows[i - 1].total!r}")
    for e in a.get("monotone_exceedance", []):
        e = float(e)
        if e not in rows[0].exceedance:
            fails.append(f"exceedance at {e!r} was not computed")
            continue
        for i in range(1, len(rows)):
            if not rows[i].exceedance[e] < rows[i - 1].exceedance[e]:
                fails.append(f"rung {i} (n={rows[i].n}): exceedance@{e!r} not decreasing")
    if a.get("triangle", True):
        for i, r in enumerate(rows):
            if not r.triangle_holds():
                fails.append(f"rung {i} (n={r.n}): total exceeds s1+s2+s3+2*tol")
    if a.get("s1_zero"):
        for i, r in enumerate(rows):
            if r.s1 != 0.0:
                fails.append(f"rung {i} (n={r.n}): s1={r.s1!r} is not zero")
    if a.get("bound_holds"):
        for i, r in enumerate(rows):
            if r.bound_holds is not True:
                fails.append(f"rung {i} (n={r.n}): KL bound does not hold")
    tol = a.get("normalization_tol")
    if tol is not None:
        for i, dev in enumerate(norm_devs):
            if dev > tol:
                fails.append(f"rung {i} (n={rows[i].n}): normalization deviation {dev!r} > {tol!r}")
    return fails


def cmd_run(config, out=None, seed=None, workers=None) -> int:
    try:
        text, source = resolve_config_path(config)
        cfg = parse_config(text, source)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if seed is not None:
        cfg.seed = seed
    if workers is not None:
        cfg.workers = workers
    out_dir = Path(out) if out is not None else cfg.out_dir
    rng = make_rng(cfg.seed)
    probes = int(cfg.assertions.get("normalization_probes", 10))
    target = make_target(cfg.target, cfg.target_params)
    norm_devs = []

    def on_rung(c, r):
        xs = rng.random((probes, target.d))
        mass = conditional_mass(c.flat, xs, workers=cfg.workers)
        norm_devs.append(float(np.max(np.abs(mass - 1.0))))
        print(f"rung n={r.n} l={r.l!r} m={r.m} K={r.K_n}: total={r.total:.6g} "
              f"s1={r.s1:.4g} s2={r.s2:.4g} s3={r.s3:.4g}", file=sys.stderr)

    try:
        report = run_convergence(target, cfg.ladder, cfg.p, cfg.x_points, cfg.y_points, cfg.eps, cfg.kappa,
                                 cfg.check_doubling, cfg.workers, on_rung)
    except MoEApproxError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / cfg.csv_name).write_text(report.to_csv())
    doc = report.to_dict()
    doc.update({"name": cfg.name, "seed": cfg.seed, "rng": RNG_NAME, "normalization_deviation": norm_devs,
                "backend": BACKEND, "version": __version__})
    (out_dir / cfg.json_name).write_text(json.dumps(doc, indent=2) + "\n")
    fails = _check_assertions(cfg, report, norm_devs)
    for msg in fails:
        print(f"assertion failed: {msg}", file=sys.stderr)
    return EXIT_ASSERT if fails else EXIT_OK


# ---------------------------------------------------------------------------
# check-gates
# ---------------------------------------------------------------------------


def _random_softmax(rng, K, d):
    return SoftmaxGating(rng.normal(0.0, 2.0, K), rng.normal(0.0, 2.0, (K, d)))


def _random_equalcov(rng, K, d):
    A = rng.normal(size=(d, d))
    Sigma = A @ A.T + 0.5 * np.eye(d)
    pi = rng.dirichlet(np.ones(K))
    pi = np.maximum(pi, 1e-12)
    return EqualCovGaussianGating(pi=pi / pi.sum(), nu=rng.normal(0.0, 1.5, (K, d)), Sigma=Sigma)


def gate_conversion_deviation(K_max=8, d_max=3, trials=100, seed=0, probes=1000, corrupt=False):
    """Largest pointwise gap between converted and original gates in both directions."""
    rng = make_rng(seed)
    dev_sg = dev_es = 0.0
    for _ in range(trials):
        K = int(rng.integers(1, K_max + 1))
        d = int(rng.integers(1, d_max + 1))
        xs = rng.uniform(-3.0, 3.0, (probes, d))
        g = _random_softmax(rng, K, d)
        gg = softmax_to_gaussian(g)
        if corrupt:
            gg = softmax_to_gaussian(SoftmaxGating(g.a + np.linspace(0.0, 1e-3, K), g.b))
        dev_sg = max(dev_sg, float(np.max(np.abs(g(xs) - gg(xs)))))
        e = _random_equalcov(rng, K, d)
        es = equalcov_gaussian_to_softmax(e)
        dev_es = max(dev_es, float(np.max(np.abs(e(xs) - es(xs)))))
    return dev_sg, dev_es


def cmd_check_gates(K=8, d=3, trials=100, seed=0, probes=1000, out=None, corrupt=False) -> int:
    dev_sg, dev_es = gate_conversion_deviation(K, d, trials, seed, probes, corrupt)
    print(f"softmax -> gaussian: max deviation {dev_sg:.3e}")
    print(f"equal-cov gaussian -> softmax: max deviation {dev_es:.3e}")
    ok = dev_sg <= 1e-10 and dev_es <= 1e-10
    if out is not None:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(json.dumps({"schema_version": SCHEMA_VERSION, "rng": RNG_NAME, "seed": seed,
                                         "trials": trials, "softmax_to_gaussian": dev_sg,
                                         "equalcov_to_softmax": dev_es, "passed": ok}, indent=2) + "\n")
    return EXIT_OK if ok else EXIT_ASSERT


# ---------------------------------------------------------------------------
# check-indicators
# ---------------------------------------------------------------------------


def _decreasing(vals):
    # equal zeros count as converged
    return all(b < a or (a == 0.0 and b == 0.0) for a, b in zip(vals, vals[1:]))


def cmd_check_indicators(n=4, ls=(10.0, 100.0, 1000.0), p=1, points=2**13, eps=0.05, out=None) -> int:
    ls = [float(v) for v in ls]
    if len(ls) < 2:
        print("warning: a single-element ladder is trivially monotone", file=sys.stderr)
    errs, exc = [], []
    xs = (np.arange(points) + 0.5) / points
    for l in ls:
        _, worst = indicator_gate_error(n, l, p, points)
        G = sharp_gates(n, l)(xs.reshape(-1, 1)).reshape(points, n)
        cells = np.minimum(np.floor(n * xs).astype(int), n - 1)
        gap = np.max(np.abs(np.eye(n)[cells] - G), axis=1)
        errs.append(worst)
        exc.append(float(np.count_nonzero(gap > eps)) / points)
        print(f"l={l!r}: sup_k L{p} error {worst:.6e}, measure(max_k |1-Gate| > {eps}) {exc[-1]:.6e}")
    ok = _decreasing(errs)
    if out is not None:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(json.dumps({"schema_version": SCHEMA_VERSION, "n": n, "p": p, "l": ls,
                                         "errors": errs, "exceedance": exc, "passed": ok}, indent=2) + "\n")
    return EXIT_OK if ok else EXIT_ASSERT


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def _load_options(path):
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return doc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="moeapprox", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__} ({SCHEMA_VERSION})")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a convergence ladder from a JSON config")
    run.add_argument("--config", required=True, help="config file, or the name of a bundled config")
    run.add_argument("--out", help="output directory (overrides the config)")
    run.add_argument("--seed", type=int)
    run.add_argument("--workers", type=int)

    gates = sub.add_parser("check-gates", help="verify the gate-class conversion maps on random gatings")
    gates.add_argument("--config", help="JSON with any of K, d, trials, probes")
    gates.add_argument("--out", help="write a JSON summary here")
    gates.add_argument("--seed", type=int, default=None)
    gates.add_argument("--K", type=int, default=None)
    gates.add_argument("--d", type=int, default=None)
    gates.add_argument("--trials", type=int, default=None)
    gates.add_argument("--corrupt", action="store_true", help=argparse.SUPPRESS)

    ind = sub.add_parser("check-indicators", help="measure sharp-gate indicator errors along an l ladder")
    ind.add_argument("--config", help="JSON with any of n, l, p, points, eps")
    ind.add_argument("--out", help="write a JSON summary here")
    ind.add_argument("--seed", type=int, default=None, help="accepted for uniformity; unused")
    ind.add_argument("--n", type=int, default=None)
    ind.add_argument("--l", type=float, nargs="+", default=None)
    ind.add_argument("--p", type=float, default=None)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        if args.command == "run":
            return cmd_run(args.config, args.out, args.seed, args.workers)
        if args.command == "check-gates":
            opts = _load_options(args.config)
            K = args.K if args.K is not None else int(opts.get("K", 8))
            d = args.d if args.d is not None else int(opts.get("d", 3))
            trials = args.trials if args.trials is not None else int(opts.get("trials", 100))
            seed = args.seed if args.seed is not None else int(opts.get("seed", 0))
            if K < 1 or d < 1 or trials < 1:
                raise ConfigError("K, d and trials must be positive")
            return cmd_check_gates(K, d, trials, seed, int(opts.get("probes", 1000)), args.out, args.corrupt)
        opts = _load_options(args.config)
        n = args.n if args.n is not None else int(opts.get("n", 4))
        ls = args.l if args.l is not None else opts.get("l", [10.0, 100.0, 1000.0])
        p = args.p if args.p is not None else opts.get("p", 1)
        if n < 1 or p < 1 or any(v < 0 for v in ls):
            raise ConfigError("n must be positive, p >= 1 and every l nonnegative")
        return cmd_check_indicators(n, ls, p, int(opts.get("points", 2**13)), float(opts.get("eps", 0.05)),
                                    args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
