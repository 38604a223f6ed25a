"""Per-step query distributions.

Two constructions live here: the general sparse builder that turns any
conditional law into a feasible query distribution meeting the inner bound,
and the closed-form two-source policy.  Both output objects whose transmitted
query is a *set* of sources; the builder works internally with multisets
(whose cardinality law is exactly the theta increments) and exposes the set
projection for the wire.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .model import EPS, ZERO_TOL, ConditionalLaw, OrderStats, order_stats


class InternalConsistencyError(AssertionError):
    """The builder produced a distribution violating its own guarantees.

    The construction is feasible for every valid law, so this signals an
    implementation bug, never bad input.
    """


@dataclass(frozen=True)
class MultisetQuery:
    """A multiset of sources, stored as a per-source count vector."""

    counts: tuple

    def __post_init__(self):
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))
        if any(c < 0 for c in self.counts):
            raise ValueError("multiplicities must be nonnegative")
        if self.cardinality > len(self.counts):
            raise ValueError("multiset cardinality cannot exceed the number of sources")

    @staticmethod
    def from_elements(elements, n: int) -> "MultisetQuery":
        counts = [0] * n
        for e in elements:
            counts[e] += 1
        return MultisetQuery(tuple(counts))

    @property
    def cardinality(self) -> int:
        return sum(self.counts)

    @property
    def support(self) -> tuple:
        return tuple(i for i, c in enumerate(self.counts) if c > 0)

    def __contains__(self, x: int) -> bool:
        return 0 <= x < len(self.counts) and self.counts[x] > 0

    def to_set(self) -> "QuerySet":
        return QuerySet(self.support)


@dataclass(frozen=True)
class QuerySet:
    """A plain subset of sources, the object actually sent to the server."""

    members: tuple

    def __post_init__(self):
        members = tuple(sorted(set(int(m) for m in self.members)))
        if not members:
            raise ValueError("a transmitted query is never empty")
        if members[0] < 0:
            raise ValueError("source indices are nonnegative")
        object.__setattr__(self, "members", members)

    @staticmethod
    def full(n: int) -> "QuerySet":
        return QuerySet(tuple(range(n)))

    @staticmethod
    def from_bitmask(mask: int) -> "QuerySet":
        return QuerySet(tuple(i for i in range(mask.bit_length()) if mask >> i & 1))

    @property
    def bitmask(self) -> int:
        return sum(1 << i for i in self.members)

    def __contains__(self, x: int) -> bool:
        return x in self.members

    def __len__(self) -> int:
        return len(self.members)


def on_step_query(n: int) -> QuerySet:
    """The query sent whenever privacy is ON: everything."""
    return QuerySet.full(n)


@dataclass(frozen=True)
class QueryDistribution:
    """Sparse conditional law p(z, x | u) over multiset queries.

    Stored as parallel arrays over the nonzero support: entry ``e`` carries
    probability ``probs[e]`` on ``(queries[qidx[e]], xs[e], us[e])``.
    Entries are canonically ordered by (cardinality, count vector, x, u),
    so equal inputs produce bit-identical objects.

    Invariants (checked by the builder and audited independently):
      * all stored probabilities are strictly positive,
      * for each u the probabilities sum to one,
      * summing out z recovers the conditional law p(x | u),
      * x is always an element of z (decodability),
      * p(z | u) does not depend on u (privacy),
      * the cardinality law P(|Z| = i) equals the theta increments.
    """

    n: int
    queries: tuple
    qidx: np.ndarray
    xs: np.ndarray
    us: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        for name in ("qidx", "xs", "us"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.int64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        probs = np.ascontiguousarray(self.probs, dtype=float)
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "queries", tuple(self.queries))

    def __len__(self) -> int:
        return len(self.probs)

    @cached_property
    def cardinalities(self) -> np.ndarray:
        """Per-entry multiset cardinality |z|."""
        card = np.array([q.cardinality for q in self.queries], dtype=np.int64)
        return card[self.qidx]

    def query_law(self, prior=None) -> np.ndarray:
        """p(z) per distinct query under a prior over u (uniform by default)."""
        prior = np.full(self.n, 1.0 / self.n) if prior is None else np.asarray(prior, float)
        return np.bincount(self.qidx, weights=self.probs * prior[self.us],
                           minlength=len(self.queries))

    def expected_multiset_cardinality(self, prior=None) -> float:
        card = np.array([q.cardinality for q in self.queries], dtype=float)
        return float(self.query_law(prior) @ card)

    def expected_set_cardinality(self, prior=None) -> float:
        card = np.array([len(set(q.support)) for q in self.queries], dtype=float)
        return float(self.query_law(prior) @ card)

    @property
    def is_set_view(self) -> bool:
        return all(all(c <= 1 for c in q.counts) for q in self.queries)

    def law_marginal(self) -> np.ndarray:
        """table[u, x] = sum_z p(z, x | u); equals the input law when valid."""
        flat = np.bincount(self.us * self.n + self.xs, weights=self.probs,
                           minlength=self.n * self.n)
        return flat.reshape(self.n, self.n)

    def query_conditionals(self) -> np.ndarray:
        """table[qid, u] = p(z | u); rows are constant for a private scheme."""
        flat = np.bincount(self.qidx * self.n + self.us, weights=self.probs,
                           minlength=len(self.queries) * self.n)
        return flat.reshape(len(self.queries), self.n)

    def entry_tuples(self):
        """Entries as plain (counts, x, u, p) tuples in canonical order."""
        return [(self.queries[int(q)].counts, int(x), int(u), float(p))
                for q, x, u, p in zip(self.qidx, self.xs, self.us, self.probs)]

    def to_json(self) -> str:
        entries = [{"z": list(z), "x": x, "u": u, "p": p}
                   for z, x, u, p in self.entry_tuples()]
        return json.dumps({"n": self.n, "entries": entries})

    @staticmethod
    def from_json(obj) -> "QueryDistribution":
        if isinstance(obj, (str, bytes)):
            obj = json.loads(obj)
        n = int(obj["n"])
        items = [(tuple(int(c) for c in e["z"]), int(e["x"]), int(e["u"]), float(e["p"]))
                 for e in obj["entries"]]
        return QueryDistribution.from_items(n, items)

    @staticmethod
    def from_items(n: int, items) -> "QueryDistribution":
        """Build from (counts, x, u, prob) tuples, merging duplicates and
        dropping sub-threshold mass, in canonical order."""
        zmap: dict = {}
        zcounts: list = []
        zids, xs, us, ps = [], [], [], []
        for counts, x, u, p in items:
            z = tuple(counts)
            zid = zmap.get(z)
            if zid is None:
                zid = zmap[z] = len(zcounts)
                zcounts.append(z)
            zids.append(zid)
            xs.append(int(x))
            us.append(int(u))
            ps.append(float(p))
        return _assemble(n, zcounts, zids, xs, us, ps)


def _assemble(n: int, zcounts: list, zids, xs, us, ps) -> QueryDistribution:
    """Merge duplicate (z, x, u) triples, drop dust, and order canonically.

    ``zcounts`` interns the distinct count vectors; the parallel sequences
    reference them by position.
    """
    zids = np.asarray(zids, dtype=np.int64)
    xs = np.asarray(xs, dtype=np.int64)
    us = np.asarray(us, dtype=np.int64)
    ps = np.asarray(ps, dtype=float)
    key = (zids * n + xs) * n + us
    uniq, inverse = np.unique(key, return_inverse=True)
    sums = np.bincount(inverse, weights=ps, minlength=len(uniq))
    keep = sums > ZERO_TOL
    uniq, sums = uniq[keep], sums[keep]
    u_arr = uniq % n
    x_arr = (uniq // n) % n
    z_arr = uniq // (n * n)

    rank = np.empty(len(zcounts), dtype=np.int64)
    by_rank = sorted(range(len(zcounts)), key=lambda i: (sum(zcounts[i]), zcounts[i]))
    for r, i in enumerate(by_rank):
        rank[i] = r
    order = np.lexsort((u_arr, x_arr, rank[z_arr]))
    z_arr, x_arr, u_arr, sums = z_arr[order], x_arr[order], u_arr[order], sums[order]

    present = np.unique(z_arr)
    present = present[np.argsort(rank[present], kind="stable")]
    remap = np.full(len(zcounts), -1, dtype=np.int64)
    remap[present] = np.arange(len(present))
    queries = tuple(MultisetQuery(zcounts[int(zid)]) for zid in present)
    return QueryDistribution(n, queries, remap[z_arr], x_arr, u_arr, sums)


def project_to_sets(dist: QueryDistribution) -> QueryDistribution:
    """Merge multisets with equal support; the wire-level view of a scheme."""
    smap: dict = {}
    scounts: list = []
    sid_of = np.empty(len(dist.queries), dtype=np.int64)
    for qi, q in enumerate(dist.queries):
        supp = tuple(1 if c > 0 else 0 for c in q.counts)
        sid = smap.get(supp)
        if sid is None:
            sid = smap[supp] = len(scounts)
            scounts.append(supp)
        sid_of[qi] = sid
    return _assemble(dist.n, scounts, sid_of[dist.qidx], dist.xs, dist.us,
                     dist.probs)


def _lane_take(q_mat: np.ndarray, row_ptr: np.ndarray, u: int, amount: float):
    """Consume `amount` of mass from row u of the auxiliary matrix, scanning
    left to right, taking full cells until the last one is truncated.

    Returns a list of (column, value) pairs summing to `amount`.
    """
    n = q_mat.shape[0]
    out = []
    need = amount
    k = row_ptr[u]
    while need > ZERO_TOL:
        while k < n and q_mat[u, k] <= ZERO_TOL:
            k += 1
        if k == n:
            if need <= EPS:
                break  # float dust only
            raise InternalConsistencyError(
                f"auxiliary row {u} exhausted with {need!r} still to assign")
        avail = q_mat[u, k]
        if avail < need - ZERO_TOL:
            out.append((k, avail))
            q_mat[u, k] = 0.0
            need -= avail
            k += 1
        else:
            out.append((k, need))
            q_mat[u, k] = avail - need
            need = 0.0
    row_ptr[u] = k
    return out


def _merge_lanes(lanes):
    """Align the per-pivot (column, value) lanes into joint rounds.

    All lanes carry the same total mass.  Each round takes the minimum of the
    current lane fronts as its weight, records the tuple of front columns,
    subtracts the weight everywhere, and advances the (lowest-index) lane
    whose front was the minimum.  Zero-weight rounds advance exhausted ties
    without producing output.
    """
    m = len(lanes)
    idx = [0] * m
    cur = [lane[0][1] for lane in lanes]
    rounds = []
    while True:
        nu = min(cur)
        pick = cur.index(nu)
        if nu > ZERO_TOL:
            rounds.append((tuple(lanes[i][idx[i]][0] for i in range(m)), nu))
        for i in range(m):
            cur[i] -= nu
        idx[pick] += 1
        if idx[pick] == len(lanes[pick]):
            return rounds
        cur[pick] = lanes[pick][idx[pick]][1]


def build_query_distribution(law: ConditionalLaw,
                             stats: OrderStats | None = None) -> QueryDistribution:
    """Construct a feasible query distribution for one step.

    Deterministic throughout: likelihood orderings break ties toward the
    smaller pivot index, lanes scan the auxiliary matrix left to right, and
    merge rounds break ties toward the lowest lane.  The output satisfies
    decodability, pivot-independence, marginal consistency, and its multiset
    cardinality law equals the theta increments, so the expected multiset
    cardinality meets the inner bound with equality.
    """
    if stats is None:
        stats = order_stats(law)
    n = law.n
    table = law.table
    orderings = stats.orderings
    deltas = stats.deltas
    # sorted_likes[x, i] = p(x | u^(x, i+1))
    sorted_likes = np.take_along_axis(table.T, orderings, axis=1)

    q_mat = np.maximum(table - deltas[None, :], 0.0)
    row_ptr = np.zeros(n, dtype=np.int64)

    zmap: dict = {}
    zcounts: list = []
    zids: list = []
    out_x: list = []
    out_u: list = []
    out_p: list = []
    all_us = list(range(n))
    for card in range(1, min(stats.sigma + 1, n) + 1):
        for x in range(n):
            prev = sorted_likes[x, card - 2] if card >= 2 else 0.0
            target = min(deltas[x], sorted_likes[x, card - 1]) - prev
            if target <= ZERO_TOL:
                continue
            lane_us = [int(orderings[x, i]) for i in range(card - 1)]
            if card == 1:
                rounds = [((), target)]
            else:
                lanes = [_lane_take(q_mat, row_ptr, u, target) for u in lane_us]
                if any(not lane for lane in lanes):
                    continue  # target vanished to float dust inside the lanes
                rounds = _merge_lanes(lanes)
            lane_set = set(lane_us)
            others = [u for u in all_us if u not in lane_set]
            for zeta, nu in rounds:
                counts = [0] * n
                counts[x] += 1
                for c in zeta:
                    counts[c] += 1
                z = tuple(counts)
                zid = zmap.get(z)
                if zid is None:
                    zid = zmap[z] = len(zcounts)
                    zcounts.append(z)
                m = len(lane_us) + len(others)
                zids.extend([zid] * m)
                out_x.extend(zeta)
                out_x.extend([x] * len(others))
                out_u.extend(lane_us)
                out_u.extend(others)
                out_p.extend([nu] * m)

    dist = _assemble(n, zcounts, zids, out_x, out_u, out_p)
    _check_built(dist, law, stats)
    return dist


def _check_built(dist: QueryDistribution, law: ConditionalLaw, stats: OrderStats):
    """Cheap structural self-check; failures are builder bugs by construction."""
    n = dist.n
    if np.any(dist.probs <= 0):
        raise InternalConsistencyError("nonpositive probability stored")
    totals = np.bincount(dist.us, weights=dist.probs, minlength=n)
    if np.max(np.abs(totals - 1.0)) > EPS:
        raise InternalConsistencyError(f"per-pivot totals off: {totals}")
    marg = dist.law_marginal()
    if np.max(np.abs(marg - law.table)) > EPS:
        raise InternalConsistencyError("summing out z does not recover the law")
    contains = np.array([[x in q for x in range(n)] for q in dist.queries])
    if not np.all(contains[dist.qidx, dist.xs]):
        raise InternalConsistencyError("stored entry with x outside z")
    cond = dist.query_conditionals()
    if np.max(cond.max(axis=1) - cond.min(axis=1)) > EPS:
        raise InternalConsistencyError("query law depends on the pivot")
    card_law = np.bincount(dist.cardinalities, weights=dist.probs / n,
                           minlength=n + 1)[1:]
    if np.max(np.abs(card_law - stats.thetas)) > EPS:
        raise InternalConsistencyError("cardinality law differs from thetas")


_EVEN, _ODD = "even", "odd"


def policy_n2(alpha: float, beta: float, x_tau: int, x_t: int,
              prev_card: int, parity: str = _EVEN) -> dict:
    """Closed-form two-source policy for one OFF step.

    Returns the distribution of the next query over { {0}, {1}, {0,1} } given
    the pivot request ``x_tau``, the current request ``x_t``, the cardinality
    of the previous query, and the parity of the gap since the pivot.  Once a
    singleton has been sent the state is absorbing: the current request is
    asked for directly with probability one.
    """
    if not (0.0 <= alpha <= 1.0 and 0.0 <= beta <= 1.0):
        raise ValueError("transition probabilities must lie in [0, 1]")
    if prev_card not in (1, 2):
        raise ValueError(f"previous query cardinality must be 1 or 2, got {prev_card}")
    if parity not in (_EVEN, _ODD):
        raise ValueError(f"parity must be 'even' or 'odd', got {parity!r}")
    single = QuerySet((x_t,))
    other = QuerySet((1 - x_t,))
    both = QuerySet((0, 1))
    if prev_card == 1:
        return {single: 1.0, other: 0.0, both: 0.0}
    s = alpha + beta
    if s == 1.0:
        return {single: 1.0, other: 0.0, both: 0.0}
    p = np.array([[1 - alpha, alpha], [beta, 1 - beta]])
    if s < 1.0:
        eff_prev = x_tau
    else:
        # With a length-2 query the pivot pins the previous request exactly;
        # above the independence line it alternates, so the effective previous
        # request flips when the gap is even.
        eff_prev = 1 - x_tau if parity == _EVEN else x_tau
    pi_min = p.min(axis=0)
    denom = p[eff_prev, x_t]
    if denom <= ZERO_TOL:
        # Request pattern impossible under the (degenerate) chain; the safe
        # query is everything.
        return {single: 0.0, other: 0.0, both: 1.0}
    w1 = min(1.0, pi_min[x_t] / denom)
    return {single: w1, other: 0.0, both: 1.0 - w1}


def policy_n2_table(alpha: float, beta: float, parity: str = _EVEN) -> np.ndarray:
    """The length-2-history policy as a 4x3 table.

    Rows iterate (x_tau, x_t) in order (0,0), (0,1), (1,0), (1,1); columns are
    the queries {0}, {1}, {0,1}.
    """
    rows = []
    for x_tau in (0, 1):
        for x_t in (0, 1):
            dist = policy_n2(alpha, beta, x_tau, x_t, 2, parity)
            rows.append([dist[QuerySet((0,))], dist[QuerySet((1,))],
                         dist[QuerySet((0, 1))]])
    return np.array(rows)
