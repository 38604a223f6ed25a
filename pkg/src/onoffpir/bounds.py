"""Rate bounds: closed forms and scheme-conditional horizon evaluation.

All bounds are reported as *inverse* rates, i.e. expected downloaded message
lengths per step (1 = just the desired message, N = everything).  The
history-averaged pair (outer1, inner) is evaluated under the history law the
built scheme itself induces, which makes the outer value a checkable
certificate for the scheme rather than an abstract optimum.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from . import lp as _lp
from .model import (ConditionalLaw, MarkovModel, OrderStats, PrivacyPattern,
                    order_stats, step_law, tau_of)
from .sim import enumerate_steps


@dataclass(frozen=True)
class RateBound:
    """Expected download per message length (in [1, N]) with its provenance."""

    inverse_rate: float
    kind: str

    @property
    def rate(self) -> float:
        return 1.0 / self.inverse_rate


def outer_bound_2(law: ConditionalLaw) -> RateBound:
    """History-free converse: summed column maxima of the gap law."""
    return RateBound(float(law.table.max(axis=0).sum()), "outer2")


def inner_bound_first_off_step(law: ConditionalLaw) -> RateBound:
    """Achievable cost of the built scheme on the first OFF step, where the
    query history is the single deterministic full-set class."""
    stats = order_stats(law)
    levels = np.arange(1, law.n + 1, dtype=float)
    return RateBound(float(levels @ stats.thetas), "inner")


def exact_rate_n2(alpha: float, beta: float, gap: int) -> RateBound:
    """Optimal inverse rate for two sources at a given gap since the pivot:
    1 + |1 - alpha - beta|**gap (gap 0 forces both messages)."""
    if gap < 0:
        raise ValueError(f"gap must be >= 0, got {gap}")
    return RateBound(1.0 + abs(1.0 - alpha - beta) ** gap, "exact_n2")


def restricted_lp_singleton_optimum(stats: OrderStats) -> RateBound:
    """Closed-form optimum when the query is either the single desired source
    or everything: theta_1 + N (1 - theta_1)."""
    th1 = float(stats.thetas[0])
    return RateBound(th1 + stats.n * (1.0 - th1), "lp_c1")


@dataclass(frozen=True)
class HorizonRow:
    """Per-step bound evaluations along a privacy pattern."""

    t: int
    f_on: bool
    outer2: float
    outer1: float
    inner: float
    exact_n2: float | None = None
    lp_opt: float | None = None


def bounds_over_horizon(model: MarkovModel, pattern: PrivacyPattern,
                        horizon: int, policy: str = "algorithm1",
                        with_lp: bool = False,
                        max_branches: int = 10 ** 7) -> list:
    """Evaluate the history-averaged outer and inner bounds per step.

    Exact enumeration of realized query-history classes under the chosen
    policy; each class contributes its probability times the per-class bound.
    ON steps pin both bounds at N.  ``with_lp`` additionally solves the exact
    query-design LP per class and averages the optima.
    """
    n = model.n
    levels = np.arange(1, n + 1, dtype=float)
    alpha = beta = None
    if n == 2:
        alpha, beta = float(model.p[0, 1]), float(model.p[1, 0])
    rows = []
    for view in enumerate_steps(model, pattern, horizon, policy=policy,
                                max_branches=max_branches):
        t = view.t
        gap = t - tau_of(pattern, t)
        outer2 = float(n) if gap == 0 else outer_bound_2(step_law(model, gap)).inverse_rate
        exact = None
        if n == 2:
            exact = exact_rate_n2(alpha, beta, gap).inverse_rate
        if view.f_on:
            rows.append(HorizonRow(t, True, outer2, float(n), float(n), exact,
                                   float(n) if with_lp else None))
            continue
        outer1 = inner = lp_opt = 0.0
        for br in view.branches:
            law = br.law
            outer1 += br.prob * float(law.table.max(axis=0).sum())
            inner += br.prob * float(levels @ order_stats(law).thetas)
            if with_lp:
                sol = _lp.solve(_lp.build_lp(law))
                if sol.status != "optimal":
                    raise AssertionError(f"per-class LP came back {sol.status}")
                lp_opt += br.prob * sol.optimum
        rows.append(HorizonRow(t, False, outer2, float(outer1), float(inner),
                               exact, float(lp_opt) if with_lp else None))
    return rows


def horizon_csv(rows) -> str:
    """CSV columns: t, F_t, outer2, outer1, inner, exact_n2?, lp_opt?."""
    with_exact = any(r.exact_n2 is not None for r in rows)
    with_lp = any(r.lp_opt is not None for r in rows)
    out = io.StringIO()
    header = ["t", "F", "outer2", "outer1", "inner"]
    if with_exact:
        header.append("exact_n2")
    if with_lp:
        header.append("lp_opt")
    out.write(",".join(header) + "\n")
    for r in rows:
        cells = [str(r.t), "1" if r.f_on else "0", f"{r.outer2:.12g}",
                 f"{r.outer1:.12g}", f"{r.inner:.12g}"]
        if with_exact:
            cells.append("" if r.exact_n2 is None else f"{r.exact_n2:.12g}")
        if with_lp:
            cells.append("" if r.lp_opt is None else f"{r.lp_opt:.12g}")
        out.write(",".join(cells) + "\n")
    return out.getvalue()


def two_source_rate_grid(sums, max_gap: int = 20) -> list:
    """Optimal two-source rate versus gap for each switching-probability sum.

    Returns (sum, gap, rate) triples; the rate depends on (alpha, beta) only
    through |1 - alpha - beta|, so the sum alone indexes a curve.
    """
    rows = []
    for s in sums:
        alpha = beta = s / 2.0
        for gap in range(max_gap + 1):
            rows.append((float(s), gap, exact_rate_n2(alpha, beta, gap).rate))
    return rows


def symmetric_bound_grid(n: int, alphas) -> list:
    """Inner/outer first-OFF-step rates for the symmetric n-source chain.

    Returns (alpha, inner_rate, outer_rate) triples; the two curves meet for
    alpha >= 1/n where the likelihood ordering flips.
    """
    rows = []
    for a in alphas:
        law = step_law(MarkovModel.symmetric(n, float(a)), 1)
        inner = inner_bound_first_off_step(law)
        outer = outer_bound_2(law)
        rows.append((float(a), inner.rate, outer.rate))
    return rows


def grid_csv(rows, header) -> str:
    out = io.StringIO()
    out.write(",".join(header) + "\n")
    for row in rows:
        out.write(",".join(f"{v:.15g}" if isinstance(v, float) else str(v)
                           for v in row) + "\n")
    return out.getvalue()
