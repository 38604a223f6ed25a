"""Command-line front end.

Subcommands: bounds, build, verify, lp, simulate, sweep.  Everything is
seeded and deterministic; figure-style outputs are raw CSV for external
plotting.  Exit codes: 0 ok, 1 audit/assertion failure, 2 configuration
error, 3 capacity guard.
"""

from __future__ import annotations

import argparse
import io
import json
import sys

import numpy as np

from . import bounds as _bounds
from . import lp as _lp
from .model import (CapacityError, MarkovModel, PrivacyPattern, order_stats,
                    step_law)
from .scheme import (InternalConsistencyError, QueryDistribution,
                     build_query_distribution)
from .sim import POLICIES, empirical_privacy_audit, simulate
from .verify import audit_distribution

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_CAPACITY = 0, 1, 2, 3


def _write(text: str, out: str | None):
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w") as fh:
            fh.write(text)


def _load_pattern(spec: str, horizon: int | None, seed: int) -> PrivacyPattern:
    """A '1'/'0' string, or 'bernoulli:p:T' for a random pattern with the
    step-0 flag forced ON."""
    if spec.startswith("bernoulli:"):
        _, p, t = spec.split(":")
        rng = np.random.default_rng([seed, 2])
        flags = (True,) + tuple(bool(b) for b in rng.random(int(t)) < float(p))
        return PrivacyPattern(flags)
    pattern = PrivacyPattern.from_string(spec)
    if horizon is not None and horizon >= len(pattern):
        raise ValueError(f"pattern {spec!r} shorter than horizon {horizon}")
    return pattern


def _cmd_bounds(args) -> int:
    model = MarkovModel.load(args.model)
    pattern = _load_pattern(args.pattern, args.horizon, args.seed)
    horizon = args.horizon if args.horizon is not None else len(pattern) - 1
    rows = _bounds.bounds_over_horizon(model, pattern, horizon,
                                       policy=args.policy, with_lp=args.with_lp,
                                       max_branches=args.max_branches)
    if args.format == "csv":
        _write(_bounds.horizon_csv(rows), args.out)
    else:
        payload = [{"t": r.t, "F": int(r.f_on), "outer2": r.outer2,
                    "outer1": r.outer1, "inner": r.inner,
                    "exact_n2": r.exact_n2, "lp_opt": r.lp_opt} for r in rows]
        _write(json.dumps(payload, indent=2) + "\n", args.out)
    return EXIT_OK


def _cmd_sweep(args) -> int:
    if args.kind == "fig5":
        sums = [float(s) for s in args.sums.split(",")]
        rows = _bounds.two_source_rate_grid(sums, args.max_gap)
        _write(_bounds.grid_csv(rows, ["sum_alpha_beta", "gap", "rate"]), args.out)
    else:
        alphas = np.linspace(0.0, 1.0, args.points)
        rows = _bounds.symmetric_bound_grid(args.n, alphas)
        _write(_bounds.grid_csv(rows, ["alpha", "inner_rate", "outer_rate"]), args.out)
    return EXIT_OK


def _cmd_build(args) -> int:
    model = MarkovModel.load(args.model)
    law = step_law(model, args.gap)
    stats = order_stats(law)
    dist = build_query_distribution(law, stats)
    obj = json.loads(dist.to_json())
    obj["expected_multiset_cardinality"] = dist.expected_multiset_cardinality()
    obj["expected_set_cardinality"] = dist.expected_set_cardinality()
    _write(json.dumps(obj) + "\n", args.out)
    return EXIT_OK


def _cmd_verify(args) -> int:
    model = MarkovModel.load(args.model)
    with open(args.dist) as fh:
        dist = QueryDistribution.from_json(fh.read())
    law = step_law(model, args.gap)
    stats = order_stats(law)
    report = audit_distribution(dist, law, stats)
    _write(report.to_json() + "\n", args.out)
    if not report.passed:
        sys.stderr.write(f"audit failed; worst offenders: {report.worst_offenders}\n")
        return EXIT_FAIL
    return EXIT_OK


def _cmd_lp(args) -> int:
    model = MarkovModel.load(args.model)
    law = step_law(model, args.gap)
    problem = _lp.build_lp(law, cardinality_cap=args.cap)
    if args.dump:
        _write(problem.dump_text() + "\n", args.out)
        return EXIT_OK
    solution = _lp.solve(problem)
    if solution.status != "optimal":
        sys.stderr.write(f"LP status: {solution.status}\n")
        return EXIT_FAIL
    _write(f"{solution.optimum:.12g}\n", args.out)
    if args.expect is not None and abs(solution.optimum - args.expect) > 1e-6:
        sys.stderr.write(f"optimum {solution.optimum!r} differs from "
                         f"expected {args.expect!r} beyond 1e-6\n")
        return EXIT_FAIL
    return EXIT_OK


def _trace_csv(result) -> str:
    out = io.StringIO()
    out.write("episode,t,F,x,q,len_bits,decode_ok\n")
    horizon = result.q_masks.shape[1] - 1
    sizes = result.cardinalities()
    for ep in range(result.episodes):
        for t in range(horizon + 1):
            out.write(f"{ep},{t},{int(result.pattern.flags[t])},"
                      f"{result.xs[ep, t]},{result.q_masks[ep, t]},"
                      f"{sizes[ep, t] * result.msg_bits},"
                      f"{int(result.oks[ep, t])}\n")
    return out.getvalue()


def _cmd_simulate(args) -> int:
    if args.config is not None:
        with open(args.config) as fh:
            cfg = json.load(fh)
        model = (MarkovModel.from_json(cfg["model"]) if isinstance(cfg["model"], dict)
                 else MarkovModel.load(cfg["model"]))
        pattern = _load_pattern(cfg["pattern"], None, int(cfg.get("seed", 0)))
        episodes = int(cfg.get("episodes", args.episodes))
        seed = int(cfg.get("seed", args.seed))
        msg_bits = int(cfg.get("L", args.msg_bits))
        policy = cfg.get("policy", args.policy)
    else:
        model = MarkovModel.load(args.model)
        pattern = _load_pattern(args.pattern, None, args.seed)
        episodes, seed = args.episodes, args.seed
        msg_bits, policy = args.msg_bits, args.policy
    result = simulate(model, pattern, episodes, seed=seed, msg_bits=msg_bits,
                      policy=policy)
    if args.out is not None:
        _write(_trace_csv(result), args.out)
    summary = result.summary()
    audits = {}
    for t in range(1, len(pattern)):
        audit = empirical_privacy_audit(result, t)
        audits[str(t)] = json.loads(audit.to_json())
    summary["privacy_audit"] = audits
    sys.stdout.write(json.dumps(summary, indent=2) + "\n")
    return EXIT_FAIL if result.decode_failures else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="onoffpir",
        description="Query schemes, rate bounds, LP oracle, audits and "
                    "simulation for private retrieval with toggleable privacy.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, model=True):
        if model:
            p.add_argument("--model", required=True, help="model JSON path")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--out", default=None, help="output path (default stdout)")

    p = sub.add_parser("bounds", help="per-step rate bounds along a pattern")
    common(p)
    p.add_argument("--pattern", required=True)
    p.add_argument("--horizon", type=int, default=None)
    p.add_argument("--policy", choices=POLICIES, default="algorithm1")
    p.add_argument("--with-lp", action="store_true")
    p.add_argument("--max-branches", type=int, default=10 ** 7)
    p.set_defaults(func=_cmd_bounds)

    p = sub.add_parser("sweep", help="figure-style rate grids as CSV")
    common(p, model=False)
    p.add_argument("--kind", choices=("fig5", "fig3b"), required=True)
    p.add_argument("--sums", default="0.2,0.4,0.7,1.0",
                   help="comma-separated alpha+beta values (fig5)")
    p.add_argument("--max-gap", type=int, default=20)
    p.add_argument("--n", type=int, default=3, help="sources (fig3b)")
    p.add_argument("--points", type=int, default=100, help="alpha grid (fig3b)")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("build", help="construct a one-step query distribution")
    common(p)
    p.add_argument("--gap", type=int, default=1, help="steps since privacy was ON")
    p.set_defaults(func=_cmd_build)

    p = sub.add_parser("verify", help="audit a stored query distribution")
    common(p)
    p.add_argument("--dist", required=True, help="distribution JSON path")
    p.add_argument("--gap", type=int, default=1)
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("lp", help="solve the exact query-design LP")
    common(p)
    p.add_argument("--gap", type=int, default=1)
    p.add_argument("--cap", type=int, default=None, help="cardinality cap")
    p.add_argument("--expect", type=float, default=None)
    p.add_argument("--dump", action="store_true", help="print the LP, don't solve")
    p.set_defaults(func=_cmd_lp)

    p = sub.add_parser("simulate", help="seeded protocol episodes")
    common(p, model=False)
    p.add_argument("--model", default=None)
    p.add_argument("--config", default=None, help="episode config JSON")
    p.add_argument("--pattern", default=None)
    p.add_argument("--episodes", type=int, default=10000)
    p.add_argument("--msg-bits", type=int, default=64)
    p.add_argument("--policy", choices=POLICIES, default="algorithm1")
    p.set_defaults(func=_cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "simulate" and args.config is None and (
            args.model is None or args.pattern is None):
        sys.stderr.write("simulate needs --config or both --model and --pattern\n")
        return EXIT_CONFIG
    try:
        return args.func(args)
    except CapacityError as exc:
        sys.stderr.write(f"capacity guard: {exc}\n")
        return EXIT_CAPACITY
    except InternalConsistencyError as exc:
        sys.stderr.write(f"internal consistency: {exc}\n")
        return EXIT_FAIL
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        sys.stderr.write(f"configuration error: {exc}\n")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
