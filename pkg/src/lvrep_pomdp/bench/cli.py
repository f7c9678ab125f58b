"""``lvrep-bench``: run experiments, verify fixtures, emit learning-curve data."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import yaml

from ..errors import BudgetExceeded, ConfigError, LvRepError
from ..linear_value import verify_linear_representability, write_residual_csv
from ..pomdp import WindowPolicy, WindowSpace, decodability_gaps, load_pomdp, make_fixture
from ..pomdp.fixtures import BUILTINS
from ..pomdp.io import pomdp_to_dict
from ..pomdp.oracle import exact_value_iteration
from .config import load_config
from .runner import learning_curves, read_metrics, run_experiment, write_artifacts, write_curves

OUT_ENV = "LVREP_OUT"
DEFAULT_OUT = "lvrep_out"
EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

log = logging.getLogger("lvrep_pomdp.bench")


def _out_dir(arg: str | None, configured: str | None = None) -> Path:
    return Path(arg or configured or os.environ.get(OUT_ENV) or DEFAULT_OUT)


def _parse_value(text: str):
    return yaml.safe_load(text)


def _parse_params(pairs: list[str]) -> dict:
    params = {}
    for p in pairs:
        if "=" not in p:
            raise ConfigError(f"--param expects key=value, got {p!r}")
        k, v = p.split("=", 1)
        params[k] = _parse_value(v)
    return params


def make_policy(spec: str, space: WindowSpace, horizon: int) -> WindowPolicy:
    """``uniform``, ``constant:A``, ``random:SEED`` or ``stochastic:SEED``."""
    kind, _, arg = spec.partition(":")
    if kind == "uniform" and not arg:
        return WindowPolicy.uniform(space, horizon)
    try:
        n = int(arg)
    except ValueError:
        raise ConfigError(f"bad policy spec {spec!r}") from None
    if kind == "constant" and 0 <= n < space.n_actions:
        return WindowPolicy.constant(space, horizon, n)
    if kind == "random":
        return WindowPolicy.random_deterministic(space, horizon, n)
    if kind == "stochastic":
        return WindowPolicy.random_stochastic(space, horizon, n)
    raise ConfigError(f"bad policy spec {spec!r}")


def cmd_run(args) -> int:
    cfg, pomdp = load_config(args.config)
    if args.seed_override is not None:
        cfg.seeds = [args.seed_override]
        cfg.raw = {**cfg.raw, "seeds": [args.seed_override]}
    out = _out_dir(args.out, cfg.output_dir)
    outputs = run_experiment(cfg, pomdp)
    paths = write_artifacts(cfg, outputs, out)
    print(paths["summary"].read_text(), end="")
    print(f"wrote {paths['metrics']}")
    return EXIT_OK


def cmd_verify(args) -> int:
    if args.fixture_file:
        pomdp = load_pomdp(args.fixture_file)
    else:
        try:
            pomdp = make_fixture(args.fixture, **_parse_params(args.param))
        except KeyError as exc:
            raise ConfigError(f"fixture: {exc.args[0]}") from exc
    H, L = pomdp.horizon, args.L
    space = WindowSpace(pomdp.n_obs, pomdp.n_actions, L)
    policy = make_policy(args.policy, space, H)
    gaps = decodability_gaps(pomdp, L, H - 1, args.budget)
    exact = exact_value_iteration(pomdp, policy, args.budget)
    reports = [verify_linear_representability(pomdp, policy, L, h, args.budget,
                                              gap_tol=float("inf"), exact=exact)
               for h in range(H)]
    print(f"fixture {pomdp.name} L={L} policy={args.policy}")
    print("step  gap          maxResidual  meanResidual  nPoints")
    for h, (g, r) in enumerate(zip(gaps, reports)):
        print(f"{h:<5d} {g:<12.4e} {r.max_residual:<12.4e} {r.mean_residual:<13.4e} {r.n_points}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_residual_csv(reports, out / "residuals.csv")
    ok_res = all(r.max_residual <= args.threshold for r in reports)
    ok_gap = all(g <= args.gap_tol for g in gaps)
    if not ok_gap:
        print(f"decodability gap {max(gaps):.4e} exceeds {args.gap_tol:g}")
    if not ok_res:
        print(f"residual above threshold {args.threshold:g}")
    if not ok_res or (args.strict and not ok_gap):
        return EXIT_FAIL
    print("ok")
    return EXIT_OK


def cmd_plot_data(args) -> int:
    curves = learning_curves(read_metrics(args.metrics))
    out = _out_dir(args.out) if args.out or os.environ.get(OUT_ENV) else Path(args.metrics).parent
    for p in write_curves(curves, out):
        print(p)
    return EXIT_OK


def cmd_fixtures(args) -> int:
    for name in sorted(BUILTINS):
        p = make_fixture(name)
        print(f"{name:<10s} states={p.n_states} actions={p.n_actions} obs={p.n_obs} "
              f"horizon={p.horizon}")
        if args.out:
            out = Path(args.out)
            out.mkdir(parents=True, exist_ok=True)
            (out / f"{name}.yaml").write_text(yaml.safe_dump(pomdp_to_dict(p), sort_keys=False))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lvrep-bench", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute an experiment config")
    run.add_argument("--config", required=True)
    run.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or ./{DEFAULT_OUT})")
    run.add_argument("--seed-override", type=int, help="replace the config's seed list with one seed")
    run.set_defaults(func=cmd_run)

    ver = sub.add_parser("verify", help="decodability gaps and linear-representability residuals")
    src = ver.add_mutually_exclusive_group(required=True)
    src.add_argument("--fixture", help=f"built-in fixture: {', '.join(sorted(BUILTINS))}")
    src.add_argument("--fixture-file", help="POMDP YAML file")
    ver.add_argument("--param", action="append", default=[], metavar="KEY=VALUE")
    ver.add_argument("--L", type=int, default=1)
    ver.add_argument("--policy", default="uniform",
                     help="uniform | constant:A | random:SEED | stochastic:SEED")
    ver.add_argument("--threshold", type=float, default=1e-8)
    ver.add_argument("--gap-tol", type=float, default=1e-9)
    ver.add_argument("--strict", action="store_true", help="also fail on a positive decodability gap")
    ver.add_argument("--budget", type=int, default=10**7)
    ver.add_argument("--out", help="directory for residuals.csv")
    ver.set_defaults(func=cmd_verify)

    plot = sub.add_parser("plot-data", help="per-variant learning curves from a metrics CSV")
    plot.add_argument("metrics")
    plot.add_argument("--out", help="output directory (default: next to the metrics file)")
    plot.set_defaults(func=cmd_plot_data)

    fx = sub.add_parser("fixtures", help="list built-in fixtures")
    fx.add_argument("--out", help="also write each fixture's YAML here")
    fx.set_defaults(func=cmd_fixtures)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, BudgetExceeded) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except LvRepError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
