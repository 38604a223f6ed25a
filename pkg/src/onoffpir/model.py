"""Markov request model, privacy patterns, and order-statistics pre-calculation.

Sources are 0-indexed throughout the package: a model with ``n`` sources uses
indices ``0 .. n-1``.  All probability objects are immutable after
construction and safe to share across threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

# Audit tolerance for probability identities (sums to one, independence, ...).
EPS = 1e-9
# Mass below this threshold is dropped when pruning sparse supports.  Kept two
# orders below EPS so that pruned mass cannot push an EPS-level identity out
# of tolerance.
ZERO_TOL = 1e-12


class CapacityError(RuntimeError):
    """Raised when an exact computation would exceed its size guard."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class MarkovModel:
    """An ``n``-state request chain: transition matrix ``p`` and initial
    distribution ``pi0``.

    Row ``i`` of ``p`` is the distribution of the next request given the
    current request is ``i``.
    """

    n: int
    p: np.ndarray
    pi0: np.ndarray

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"need at least two sources, got n={self.n}")
        p = _readonly(self.p)
        pi0 = _readonly(self.pi0)
        if p.shape != (self.n, self.n):
            raise ValueError(f"transition matrix must be {self.n}x{self.n}, got {p.shape}")
        if pi0.shape != (self.n,):
            raise ValueError(f"initial distribution must have length {self.n}")
        if np.any(p < 0) or np.any(p > 1) or np.any(pi0 < 0) or np.any(pi0 > 1):
            raise ValueError("probabilities must lie in [0, 1]")
        if np.max(np.abs(p.sum(axis=1) - 1.0)) > 1e-12:
            raise ValueError("each transition-matrix row must sum to 1")
        if abs(pi0.sum() - 1.0) > 1e-12:
            raise ValueError("initial distribution must sum to 1")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "pi0", pi0)

    @staticmethod
    def two_state(alpha: float, beta: float, pi0=None) -> "MarkovModel":
        """Two-source chain with switch probabilities alpha (0->1) and beta (1->0)."""
        p = np.array([[1 - alpha, alpha], [beta, 1 - beta]], dtype=float)
        if pi0 is None:
            pi0 = np.array([0.5, 0.5])
        return MarkovModel(2, p, np.asarray(pi0, dtype=float))

    @staticmethod
    def symmetric(n: int, alpha: float) -> "MarkovModel":
        """n-source chain that stays put with probability alpha and moves to
        each other source with probability (1-alpha)/(n-1)."""
        off = (1.0 - alpha) / (n - 1)
        p = np.full((n, n), off)
        np.fill_diagonal(p, alpha)
        return MarkovModel(n, p, np.full(n, 1.0 / n))

    @staticmethod
    def from_json(obj) -> "MarkovModel":
        """Parse ``{"n": int, "p": [[...]], "pi0": [...]}`` (dict or JSON text)."""
        if isinstance(obj, (str, bytes)):
            obj = json.loads(obj)
        return MarkovModel(int(obj["n"]), np.asarray(obj["p"], dtype=float),
                           np.asarray(obj["pi0"], dtype=float))

    def to_json(self) -> str:
        return json.dumps({"n": self.n, "p": self.p.tolist(), "pi0": self.pi0.tolist()})

    @staticmethod
    def load(path) -> "MarkovModel":
        with open(path) as fh:
            return MarkovModel.from_json(fh.read())


ON = True
OFF = False


@dataclass(frozen=True)
class PrivacyPattern:
    """Privacy status flags per time step; index 0 is always ON."""

    flags: tuple

    def __post_init__(self):
        flags = tuple(bool(f) for f in self.flags)
        if not flags:
            raise ValueError("pattern must contain at least the step-0 flag")
        if not flags[0]:
            raise ValueError("privacy must be ON at step 0")
        object.__setattr__(self, "flags", flags)

    @staticmethod
    def from_string(s: str) -> "PrivacyPattern":
        """Parse a '1'/'0' string, index 0 first, e.g. "1000"."""
        if not s or set(s) - {"0", "1"}:
            raise ValueError(f"pattern must be a nonempty string of 0/1, got {s!r}")
        return PrivacyPattern(tuple(c == "1" for c in s))

    def __len__(self) -> int:
        return len(self.flags)

    def __str__(self) -> str:
        return "".join("1" if f else "0" for f in self.flags)


def tau_of(pattern: PrivacyPattern, t: int) -> int:
    """Most recent time <= t at which privacy was ON (defined since flag 0 is ON)."""
    if t < 0 or t >= len(pattern):
        raise IndexError(f"t={t} outside pattern of length {len(pattern)}")
    for i in range(t, -1, -1):
        if pattern.flags[i]:
            return i
    raise AssertionError("unreachable: flag 0 is ON")


@dataclass(frozen=True)
class ConditionalLaw:
    """A two-argument probability law: ``table[u, x] = p(X = x | U = u)``.

    In this package ``U`` is the pivot request (last time privacy was ON) and
    ``X`` the current request, so the one-step instance is the transition
    matrix itself and the gap-k instance is its k-th power, possibly
    reconditioned on an observed query history.
    """

    n: int
    table: np.ndarray

    def __post_init__(self):
        table = _readonly(self.table)
        if table.shape != (self.n, self.n):
            raise ValueError(f"law table must be {self.n}x{self.n}, got {table.shape}")
        if np.any(table < -1e-12):
            raise ValueError("law entries must be nonnegative")
        if np.max(np.abs(table.sum(axis=1) - 1.0)) > 1e-12:
            raise ValueError("each law row must sum to 1")
        object.__setattr__(self, "table", table)

    def key(self) -> bytes:
        """Stable hash key, insensitive to sub-tolerance float noise."""
        return np.round(self.table, 12).tobytes()


def step_law(model: MarkovModel, k: int) -> ConditionalLaw:
    """The k-step law P^k as a ConditionalLaw (matrix power, k >= 1)."""
    if k < 1:
        raise ValueError(f"step count must be >= 1, got {k}")
    # np.linalg.matrix_power squares repeatedly, so large k stays cheap.
    pk = np.linalg.matrix_power(model.p, k)
    pk = np.clip(pk, 0.0, None)
    pk /= pk.sum(axis=1, keepdims=True)
    return ConditionalLaw(model.n, pk)


@dataclass(frozen=True)
class OrderStats:
    """Per-column likelihood orderings and the derived budget quantities.

    ``orderings[x, i]`` is the pivot value with the (i+1)-th smallest
    likelihood of producing ``x`` (ties broken toward the smaller pivot
    index).  ``lambdas[i]`` sums those i-th smallest likelihoods over ``x``;
    ``thetas`` are the increments of ``min(1, lambdas)``; ``sigma`` is the
    last level whose sum is still <= 1; ``deltas`` is the per-source budget
    vector chosen greedily between the sigma-th and (sigma+1)-th levels.
    """

    n: int
    orderings: np.ndarray
    lambdas: np.ndarray
    thetas: np.ndarray
    sigma: int
    deltas: np.ndarray

    def __post_init__(self):
        orderings = np.asarray(self.orderings, dtype=np.int64)
        orderings.setflags(write=False)
        object.__setattr__(self, "orderings", orderings)
        object.__setattr__(self, "lambdas", _readonly(self.lambdas))
        object.__setattr__(self, "thetas", _readonly(self.thetas))
        object.__setattr__(self, "deltas", _readonly(self.deltas))


def order_stats(law: ConditionalLaw) -> OrderStats:
    """Sort each column of the law and derive the level sums, their clipped
    increments, the threshold level, and the greedy budget vector."""
    n = law.n
    t = law.table
    # argsort per column; stable sort keeps the smaller pivot index first on ties
    orderings = np.argsort(t, axis=0, kind="stable").T  # orderings[x, i] = u
    sorted_cols = np.take_along_axis(t.T, orderings, axis=1)  # [x, i] = p(x | u^(x,i+1))
    lambdas = sorted_cols.sum(axis=0)
    clipped = np.minimum(1.0, lambdas)
    thetas = np.diff(clipped, prepend=0.0)
    thetas = np.clip(thetas, 0.0, None)
    # lambdas is nondecreasing with lambda_1 <= 1, so the threshold exists;
    # the small slack absorbs float noise on laws given as short decimals.
    sigma = int(np.max(np.nonzero(lambdas <= 1.0 + 1e-12)[0])) + 1

    if sigma == n:
        # Only possible when every column is constant (all level sums equal 1):
        # the budget is forced to the top level and already sums to 1.
        deltas = sorted_cols[:, n - 1].copy()
    else:
        a = sorted_cols[:, sigma - 1]  # p(j | u^(j, sigma))
        b = sorted_cols[:, sigma]      # p(j | u^(j, sigma+1))
        room = 1.0 - a.sum()
        deltas = a.copy()
        acc = 0.0
        for j in range(n):
            acc += b[j] - a[j]
            if acc <= room:
                deltas[j] = b[j]
            else:
                deltas[j] = 1.0 - b[:j].sum() - a[j + 1:].sum()
                break
    return OrderStats(n, orderings, lambdas, thetas, sigma, deltas)
