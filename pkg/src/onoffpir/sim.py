"""Time-stepped user/server simulation with real bit payloads.

The user tracks a joint belief over (pivot request, latest request) given the
realized query history; that belief is a sufficient statistic for the
conditional law each per-step scheme is built from, so schemes are
constructed lazily per history class instead of precomputed over all
histories.  The same recursion drives both the Monte Carlo episodes here and
the exact history enumeration consumed by the bound evaluators.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as _scipy_stats

from .model import (EPS, ZERO_TOL, CapacityError, ConditionalLaw, MarkovModel,
                    PrivacyPattern, tau_of)
from .scheme import (QuerySet, build_query_distribution, policy_n2,
                     project_to_sets)

POLICIES = ("algorithm1", "n2_closed_form", "naive", "full_download")


@dataclass(frozen=True)
class BeliefState:
    """Joint law p(pivot request, latest request | query history)."""

    joint: np.ndarray

    def __post_init__(self):
        joint = np.asarray(self.joint, dtype=float)
        if joint.ndim != 2 or joint.shape[0] != joint.shape[1]:
            raise ValueError("belief joint must be a square matrix")
        if np.any(joint < -ZERO_TOL) or abs(joint.sum() - 1.0) > EPS:
            raise ValueError("belief joint must be a probability table")
        joint = np.clip(joint, 0.0, None)
        joint.setflags(write=False)
        object.__setattr__(self, "joint", joint)

    @staticmethod
    def initial(model: MarkovModel) -> "BeliefState":
        """Step-0 belief: privacy is ON, so the pivot equals the request."""
        return BeliefState(np.diag(model.pi0))

    @property
    def pivot_marginal(self) -> np.ndarray:
        return self.joint.sum(axis=1)

    def key(self) -> bytes:
        return np.round(self.joint, 12).tobytes()


def _law_from_joint(pre_joint: np.ndarray) -> ConditionalLaw:
    """Row-normalize p(pivot, current) into p(current | pivot).

    Pivot values carrying no mass get the unconditional current-request
    marginal: any row works there (the pivot never takes that value), and the
    marginal keeps the law well formed without distorting the scheme.
    """
    n = pre_joint.shape[0]
    row_mass = pre_joint.sum(axis=1)
    marginal = pre_joint.sum(axis=0)
    marginal = marginal / marginal.sum()
    table = np.empty_like(pre_joint)
    for u in range(n):
        if row_mass[u] > ZERO_TOL:
            table[u] = pre_joint[u] / row_mass[u]
        else:
            table[u] = marginal
    table = np.clip(table, 0.0, None)
    table /= table.sum(axis=1, keepdims=True)
    return ConditionalLaw(n, table)


def belief_update(belief: BeliefState, p_step: np.ndarray,
                  kernel: np.ndarray) -> BeliefState:
    """Exact Bayes step: extend the joint one chain step, weight by the
    realized query's conditional probabilities w(q | pivot, current), and
    renormalize."""
    pre = belief.joint @ np.asarray(p_step, dtype=float)
    post = pre * np.asarray(kernel, dtype=float)
    total = post.sum()
    if total < 1e-12:
        raise FloatingPointError("belief lost all mass; kernel inconsistent with history")
    return BeliefState(post / total)


@dataclass(frozen=True)
class StepScheme:
    """One step's query rule in sampling-ready form.

    ``w[k, u, x]`` is the probability of sending the k-th candidate set given
    pivot u and current request x; ``cum`` holds its cumulative sums along k.
    """

    n: int
    y_masks: tuple
    set_sizes: np.ndarray
    w: np.ndarray
    cum: np.ndarray

    @staticmethod
    def from_tables(n: int, tables: dict) -> "StepScheme":
        masks = tuple(sorted(tables))
        w = np.stack([tables[m] for m in masks])
        cum = np.ascontiguousarray(np.cumsum(w, axis=0).transpose(1, 2, 0))
        sizes = np.array([bin(m).count("1") for m in masks], dtype=np.int64)
        return StepScheme(n, masks, sizes, w, cum)

    def sample(self, u: int, x: int, r: float) -> int:
        """Index of the set drawn for true (pivot, request) at uniform r."""
        k = int(np.searchsorted(self.cum[u, x], r, side="left"))
        return min(k, len(self.y_masks) - 1)

    def query_marginal(self, pre_joint: np.ndarray) -> np.ndarray:
        """p(y_k | history) for a branch with the given extended joint."""
        return np.einsum("ux,kux->k", pre_joint, self.w)


def _scheme_algorithm1(law: ConditionalLaw) -> StepScheme:
    dist = project_to_sets(build_query_distribution(law))
    n = law.n
    tables: dict = {}
    masks = [q.to_set().bitmask for q in dist.queries]
    for qid, x, u, p in zip(dist.qidx, dist.xs, dist.us, dist.probs):
        m = masks[int(qid)]
        tbl = tables.get(m)
        if tbl is None:
            tbl = tables[m] = np.zeros((n, n))
        tbl[int(u), int(x)] += p
    for tbl in tables.values():
        with np.errstate(invalid="ignore", divide="ignore"):
            tbl /= law.table
        tbl[~np.isfinite(tbl)] = 0.0
        np.clip(tbl, 0.0, 1.0, out=tbl)
    return StepScheme.from_tables(n, tables)


def _scheme_n2(model: MarkovModel, prev_card: int, parity: str) -> StepScheme:
    alpha, beta = float(model.p[0, 1]), float(model.p[1, 0])
    tables = {m: np.zeros((2, 2)) for m in (0b01, 0b10, 0b11)}
    for u in (0, 1):
        for x in (0, 1):
            for q, prob in policy_n2(alpha, beta, u, x, prev_card, parity).items():
                tables[q.bitmask][u, x] = prob
    return StepScheme.from_tables(2, tables)


def _scheme_naive(n: int) -> StepScheme:
    tables = {}
    for x in range(n):
        tbl = np.zeros((n, n))
        tbl[:, x] = 1.0
        tables[1 << x] = tbl
    return StepScheme.from_tables(n, tables)


def _scheme_full(n: int) -> StepScheme:
    return StepScheme.from_tables(n, {(1 << n) - 1: np.ones((n, n))})


class _SchemeCache:
    """Lazily builds and memoizes per-step schemes for a (model, policy)."""

    def __init__(self, model: MarkovModel, policy: str):
        if policy not in POLICIES:
            raise ValueError(f"unknown policy {policy!r}; choose from {POLICIES}")
        if policy == "n2_closed_form" and model.n != 2:
            raise ValueError("the closed-form policy requires exactly two sources")
        self.model = model
        self.policy = policy
        self._by_key: dict = {}

    def for_step(self, law: ConditionalLaw, prev_mask: int, gap: int) -> StepScheme:
        if self.policy == "algorithm1":
            key = law.key()
        elif self.policy == "n2_closed_form":
            key = (bin(prev_mask).count("1"), gap % 2)
        else:
            key = self.policy
        scheme = self._by_key.get(key)
        if scheme is None:
            if self.policy == "algorithm1":
                scheme = _scheme_algorithm1(law)
            elif self.policy == "n2_closed_form":
                prev_card = bin(prev_mask).count("1")
                parity = "even" if gap % 2 == 0 else "odd"
                scheme = _scheme_n2(self.model, prev_card, parity)
            elif self.policy == "naive":
                scheme = _scheme_naive(self.model.n)
            else:
                scheme = _scheme_full(self.model.n)
            self._by_key[key] = scheme
        return scheme


@dataclass
class BranchView:
    """One realized-history class at one time step of the exact enumeration."""

    prob: float
    pre_joint: np.ndarray          # p(pivot, current | history) before this query
    law: ConditionalLaw | None     # None on ON steps (query carries no choice)
    scheme: StepScheme | None      # None on ON steps
    prev_mask: int


@dataclass
class StepView:
    t: int
    f_on: bool
    branches: list


def enumerate_steps(model: MarkovModel, pattern: PrivacyPattern, horizon: int,
                    policy: str = "algorithm1", max_branches: int = 10 ** 7,
                    prune: float = 1e-12):
    """Exact enumeration of realized query histories under a policy.

    Yields one :class:`StepView` per t in 0..horizon; the branch list carries
    the probability and extended belief of every surviving history class.
    Raises :class:`CapacityError` when the branch count would exceed
    ``max_branches`` (Monte Carlo simulation is the fallback at that size).
    """
    if horizon >= len(pattern):
        raise ValueError(f"pattern of length {len(pattern)} too short for horizon {horizon}")
    n = model.n
    cache = _SchemeCache(model, policy)
    full_mask = (1 << n) - 1
    # branch state: (prob, posterior joint after previous step, prev query mask)
    branches = [(1.0, np.diag(model.pi0), full_mask)]
    for t in range(horizon + 1):
        f_on = pattern.flags[t]
        views = []
        for prob, joint, prev_mask in branches:
            pre = joint if t == 0 else joint @ model.p
            if f_on:
                views.append(BranchView(prob, pre, None, None, prev_mask))
            else:
                law = _law_from_joint(pre)
                gap = t - tau_of(pattern, t)
                scheme = cache.for_step(law, prev_mask, gap)
                views.append(BranchView(prob, pre, law, scheme, prev_mask))
        yield StepView(t, f_on, views)

        children = []
        for view in views:
            pre = view.pre_joint
            if f_on:
                marg = pre.sum(axis=0)
                children.append((view.prob, np.diag(marg / marg.sum()), full_mask))
            else:
                weights = view.scheme.query_marginal(pre)
                for k, mass in enumerate(weights):
                    if mass <= prune:
                        continue
                    post = pre * view.scheme.w[k]
                    children.append((view.prob * mass, post / post.sum(),
                                     view.scheme.y_masks[k]))
        if len(children) > max_branches:
            raise CapacityError(
                f"{len(children)} history branches at t={t}; raise max_branches "
                "or use Monte Carlo simulation")
        branches = children


class ServerState:
    """One episode's server: every source regenerates a fresh uniform
    message of ``msg_bits`` bits at each step, and answers are the
    concatenation of the requested messages in increasing source order."""

    def __init__(self, n: int, msg_bits: int, rng):
        self.n = n
        self.msg_bits = msg_bits
        self._rng = rng
        self._nbytes = (msg_bits + 7) // 8
        self._mask = (1 << msg_bits) - 1
        self.messages = None

    def advance(self):
        """Generate the current step's messages (fresh randomness)."""
        raw = self._rng.bytes(self.n * self._nbytes)
        k = self._nbytes
        self.messages = [int.from_bytes(raw[i * k:(i + 1) * k], "big") & self._mask
                         for i in range(self.n)]

    def answer(self, members: tuple):
        """Concatenated payload for a set query and its length in bits."""
        payload = 0
        for pos, i in enumerate(members):
            payload |= self.messages[i] << (pos * self.msg_bits)
        return payload, len(members) * self.msg_bits


@dataclass(frozen=True)
class TraceRecord:
    """One simulated step: flag, hidden request, sent query, answer size and
    the bit-exact decode check."""

    t: int
    f_on: bool
    x: int
    query: QuerySet
    answer_bits: int
    decode_ok: bool


@dataclass
class SimulationResult:
    """Aggregated episodes; compact arrays indexed [episode, t]."""

    model: MarkovModel
    pattern: PrivacyPattern
    episodes: int
    seed: int
    msg_bits: int
    policy: str
    q_masks: np.ndarray
    xs: np.ndarray
    x_taus: np.ndarray
    oks: np.ndarray
    decode_failures: int
    traces: list | None = field(default=None, repr=False)

    def cardinalities(self, t: int | None = None) -> np.ndarray:
        masks = self.q_masks if t is None else self.q_masks[:, t]
        return np.bitwise_count(masks.astype(np.uint64)).astype(np.int64)

    def mean_cardinality(self, t: int) -> float:
        return float(self.cardinalities(t).mean())

    def p_cardinality(self, t: int, c: int) -> float:
        return float((self.cardinalities(t) == c).mean())

    def empirical_inverse_rate(self, t: int) -> float:
        return self.mean_cardinality(t)

    def summary(self) -> dict:
        horizon = self.q_masks.shape[1] - 1
        return {
            "episodes": self.episodes,
            "seed": self.seed,
            "msg_bits": self.msg_bits,
            "policy": self.policy,
            "pattern": str(self.pattern),
            "decode_failures": self.decode_failures,
            "mean_query_size": [self.mean_cardinality(t) for t in range(horizon + 1)],
            "empirical_rate": [1.0 / self.mean_cardinality(t) for t in range(horizon + 1)],
        }


def _sample_index(cum: np.ndarray, r: float) -> int:
    return int(np.searchsorted(cum, r, side="left"))


def simulate(model: MarkovModel, pattern: PrivacyPattern, episodes: int,
             seed: int = 0, msg_bits: int = 64, policy: str = "algorithm1",
             keep_traces: bool = False) -> SimulationResult:
    """Run seeded episodes of the query/answer protocol.

    Request sampling and message payloads use independent child streams of
    the seed, so decode checks cannot perturb trajectory statistics.  Belief
    propagation per history is memoized, making large episode counts cheap.
    """
    if policy not in POLICIES:
        raise ValueError(f"unknown policy {policy!r}; choose from {POLICIES}")
    n = model.n
    horizon = len(pattern) - 1
    rng_req = np.random.default_rng([seed, 0])
    rng_msg = np.random.default_rng([seed, 1])
    cache = _SchemeCache(model, policy)
    full_mask = (1 << n) - 1

    pi0_cum = np.cumsum(model.pi0)
    p_cum = np.cumsum(model.p, axis=1)

    # belief nodes keyed by rounded joint bytes; transitions memoized
    root = np.diag(model.pi0)
    nodes = {_joint_key(root): root}
    steps: dict = {}   # (node_key, t) -> (pre_joint, scheme or None)
    trans: dict = {}   # (node_key, t, y_mask) -> child node key

    q_masks = np.zeros((episodes, horizon + 1), dtype=np.int64)
    xs = np.zeros((episodes, horizon + 1), dtype=np.int64)
    x_taus = np.zeros((episodes, horizon + 1), dtype=np.int64)
    oks = np.ones((episodes, horizon + 1), dtype=bool)
    decode_failures = 0
    traces = [] if keep_traces else None

    req_u = rng_req.random((episodes, horizon + 1))
    sch_u = rng_req.random((episodes, horizon + 1))

    for ep in range(episodes):
        key = _joint_key(root)
        x = x_tau = -1
        prev_mask = full_mask
        server = ServerState(n, msg_bits, rng_msg)
        trace = [] if keep_traces else None
        for t in range(horizon + 1):
            f_on = pattern.flags[t]
            x = _sample_index(pi0_cum if t == 0 else p_cum[x], req_u[ep, t])
            if f_on:
                x_tau = x
            step = steps.get((key, t, prev_mask))
            if step is None:
                joint = nodes[key]
                pre = joint if t == 0 else joint @ model.p
                if f_on:
                    step = (pre, None)
                else:
                    law = _law_from_joint(pre)
                    gap = t - tau_of(pattern, t)
                    step = (pre, cache.for_step(law, prev_mask, gap))
                steps[(key, t, prev_mask)] = step
            pre, scheme = step
            if f_on:
                mask = full_mask
                sel = tuple(range(n))
            else:
                k = scheme.sample(x_tau, x, sch_u[ep, t])
                mask = scheme.y_masks[k]
                sel = tuple(i for i in range(n) if mask >> i & 1)

            child = trans.get((key, t, prev_mask, mask))
            if child is None:
                if f_on:
                    marg = pre.sum(axis=0)
                    nxt = np.diag(marg / marg.sum())
                else:
                    k = scheme.y_masks.index(mask)
                    post = pre * scheme.w[k]
                    nxt = post / post.sum()
                child = _joint_key(nxt)
                nodes.setdefault(child, nxt)
                trans[(key, t, prev_mask, mask)] = child
            key = child

            # fresh messages, concatenated answer, bit-exact decode
            server.advance()
            answer, _bits = server.answer(sel)
            slot = sel.index(x)
            mask_bits = (1 << msg_bits) - 1
            ok = (answer >> (slot * msg_bits)) & mask_bits == server.messages[x]
            if not ok:
                decode_failures += 1
                oks[ep, t] = False

            q_masks[ep, t] = mask
            xs[ep, t] = x
            x_taus[ep, t] = x_tau
            prev_mask = mask
            if keep_traces:
                trace.append(TraceRecord(t, f_on, x, QuerySet(sel),
                                         len(sel) * msg_bits, ok))
        if keep_traces:
            traces.append(trace)

    return SimulationResult(model, pattern, episodes, seed, msg_bits, policy,
                            q_masks, xs, x_taus, oks, decode_failures, traces)


def _joint_key(joint: np.ndarray) -> bytes:
    return np.round(joint, 12).tobytes()


def run_episode(model: MarkovModel, pattern: PrivacyPattern,
                msg_bits: int = 64, seed: int = 0,
                policy: str = "algorithm1") -> list:
    """One seeded episode as a list of :class:`TraceRecord`."""
    return simulate(model, pattern, 1, seed=seed, msg_bits=msg_bits,
                    policy=policy, keep_traces=True).traces[0]


@dataclass(frozen=True)
class ChiSquareAudit:
    """Pooled independence test of (pivot, query) within history classes."""

    statistic: float
    dof: int
    p_value: float
    samples: int
    strata: int
    unreliable: bool

    def to_json(self) -> str:
        return json.dumps({
            "statistic": self.statistic, "dof": self.dof,
            "p_value": self.p_value, "samples": self.samples,
            "strata": self.strata, "unreliable": self.unreliable,
        })


def empirical_privacy_audit(traces, t: int) -> ChiSquareAudit:
    """Chi-square test for independence of pivot and query at step t.

    Episodes are stratified by their realized query history before t; the
    pooled statistic sums per-stratum Pearson contributions.  Accepts either
    a :class:`SimulationResult` or a list of TraceRecord episodes.  Expected
    cells thinner than 5 flag the result unreliable instead of failing.
    """
    if isinstance(traces, SimulationResult):
        masks, taus = traces.q_masks, traces.x_taus
    else:
        masks = np.array([[r.query.bitmask for r in ep] for ep in traces])
        taus = np.empty_like(masks)
        for e, ep in enumerate(traces):
            tau = 0
            for r in ep:
                if r.f_on:
                    tau = r.t
                taus[e, r.t] = ep[tau].x
    if t >= masks.shape[1]:
        raise IndexError(f"step {t} beyond simulated horizon")

    hist = masks[:, :t]
    qt = masks[:, t]
    xt = taus[:, t]
    strata, inverse = (np.unique(hist, axis=0, return_inverse=True)
                       if t > 0 else (np.zeros((1, 0)), np.zeros(len(qt), dtype=int)))
    stat, dof, min_expected = 0.0, 0, np.inf
    for s in range(len(strata)):
        m = inverse == s
        rows, ri = np.unique(xt[m], return_inverse=True)
        cols, ci = np.unique(qt[m], return_inverse=True)
        if len(rows) < 2 or len(cols) < 2:
            continue
        table = np.zeros((len(rows), len(cols)))
        np.add.at(table, (ri, ci), 1.0)
        expected = np.outer(table.sum(axis=1), table.sum(axis=0)) / table.sum()
        min_expected = min(min_expected, float(expected.min()))
        stat += float(((table - expected) ** 2 / expected).sum())
        dof += (len(rows) - 1) * (len(cols) - 1)
    p_value = float(_scipy_stats.chi2.sf(stat, dof)) if dof > 0 else 1.0
    unreliable = dof > 0 and min_expected < 5.0
    return ChiSquareAudit(stat, dof, p_value, len(qt), int(len(strata)), unreliable)
