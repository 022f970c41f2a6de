"""Time-dependent adaptation: likelihood tracking, change detection, history deletion.

Each model hypothesis (a single Gibbs chain, or one particle) owns a
DriftTracker that accumulates per-interval predictive log likelihoods of the
records it processed. When the change rate between consecutive intervals
falls below a threshold, a cut interval is sampled and everything up to it is
forgotten: stale links are flipped to observed absences with fresh random
groups, and nodes left without any present link are treated as never seen.
"""

from __future__ import annotations

import math
from typing import Optional

from .model import RESET_INTERVAL, ModelState

TAU_STRATEGIES = ("inverse_rate", "deficit")

_DEFICIT_EPS = 1e-6


class DriftTracker:
    """Per-interval likelihood summaries and the change-rate test state."""

    __slots__ = ("lambda_threshold", "strategy", "first_interval",
                 "_sums", "_counts", "_current", "_min_rate_interval")

    def __init__(self, lambda_threshold: float, strategy: str = "inverse_rate",
                 first_interval: int = 1):
        if lambda_threshold < 0:
            raise ValueError("lambda threshold must be >= 0")
        if strategy not in TAU_STRATEGIES:
            raise ValueError(f"strategy must be one of {TAU_STRATEGIES}")
        self.lambda_threshold = float(lambda_threshold)
        self.strategy = strategy
        self.first_interval = first_interval
        self._sums = {}
        self._counts = {}
        self._current = None
        self._min_rate_interval = first_interval + 1

    def copy(self) -> "DriftTracker":
        out = DriftTracker.__new__(DriftTracker)
        out.lambda_threshold = self.lambda_threshold
        out.strategy = self.strategy
        out.first_interval = self.first_interval
        out._sums = dict(self._sums)
        out._counts = dict(self._counts)
        out._current = self._current
        out._min_rate_interval = self._min_rate_interval
        return out

    @property
    def current_interval(self) -> Optional[int]:
        return self._current

    def interval_summary(self, interval: int):
        """(sum of log predictive probabilities, record count) for one interval."""
        return (self._sums.get(interval, 0.0), self._counts.get(interval, 0))

    def record_loglik(self, interval: int, log_prob: float) -> None:
        """Accumulate one record's predictive log probability into its interval."""
        if interval < self.first_interval:
            raise ValueError(f"interval {interval} precedes retained history "
                             f"(first is {self.first_interval})")
        if self._current is None:
            start = self.first_interval
        elif interval < self._current:
            raise ValueError(f"out-of-order interval {interval} after {self._current}")
        else:
            start = self._current
        for t in range(start, interval + 1):
            self._sums.setdefault(t, 0.0)
            self._counts.setdefault(t, 0)
        self._current = interval if self._current is None else max(self._current, interval)
        self._sums[interval] += log_prob
        self._counts[interval] += 1

    def _mean_loglik(self, interval: int) -> Optional[float]:
        c = self._counts.get(interval, 0)
        if c == 0:
            return None
        return self._sums[interval] / c

    def _raw_rate(self, t: int) -> Optional[float]:
        if t - 1 < self.first_interval:
            return None
        a = self._mean_loglik(t)
        b = self._mean_loglik(t - 1)
        if a is None or b is None:
            return None
        return math.exp(a - b)

    def change_rate(self, t: int) -> Optional[float]:
        """Ratio of per-record geometric-mean likelihoods of t and t-1.

        None means no decision can be made (an empty interval, or too soon
        after a history deletion).
        """
        if t < self._min_rate_interval:
            return None
        return self._raw_rate(t)

    def should_discard(self, t: int) -> bool:
        rate = self.change_rate(t)
        return rate is not None and rate < self.lambda_threshold

    def cut_distribution(self, t: int):
        """Candidate cut intervals and their selection probabilities.

        Candidates are tau = j - 1 for every interval j in (first, t] whose
        change rate is defined; weights favor the sharpest likelihood drops.
        """
        taus, lams = [], []
        for j in range(self.first_interval + 1, t + 1):
            lam = self._raw_rate(j)
            if lam is not None:
                taus.append(j - 1)
                lams.append(lam)
        if not taus:
            return [], []
        if self.strategy == "inverse_rate":
            weights = [1.0 / lam for lam in lams]
        else:
            weights = [max(self.lambda_threshold - lam, 0.0) + _DEFICIT_EPS
                       for lam in lams]
        total = sum(weights)
        return taus, [w / total for w in weights]

    def sample_cut(self, t: int, rng) -> Optional[int]:
        """Sample the last interval to forget, or None when no candidate exists."""
        taus, probs = self.cut_distribution(t)
        if not taus:
            return None
        u = rng.random()
        acc = 0.0
        for tau, p in zip(taus, probs):
            acc += p
            if u < acc:
                return tau
        return taus[-1]

    def _apply_cut(self, tau: int) -> None:
        for t in [t for t in self._sums if t <= tau]:
            del self._sums[t]
            del self._counts[t]
        self.first_interval = tau + 1
        # No change decision until two fresh intervals close after the cut.
        self._min_rate_interval = (self._current or tau) + 2


def discard_history(state: ModelState, tracker: DriftTracker, tau: int, rng) -> None:
    """Forget everything up to and including interval tau.

    Present links recorded at intervals <= tau become observed absences with
    uniformly random group pairs and a reset interval tag. Nodes incident to
    a flipped link that are left without any present link lose all their
    dyads and leave the registry.
    """
    upper = (tracker._current if tracker._current is not None
             else tracker.first_interval)
    if not tracker.first_interval <= tau <= upper - 1:
        raise ValueError(f"cut interval {tau} outside "
                         f"[{tracker.first_interval}, {upper - 1}]")
    k = state.hyper.K
    ids = state._ids
    touched = set()
    flips = [key for key, (g, h, v, t) in state._assign.items()
             if v == 1 and t <= tau]
    for key in flips:
        g, h, _, _ = state._assign[key]
        state._dec(key[0], key[1], g, h, 1)
        g2 = int(rng.integers(k))
        h2 = int(rng.integers(k))
        state._inc(key[0], key[1], g2, h2, 0)
        state._assign[key] = (g2, h2, 0, RESET_INTERVAL)
        touched.add(key[0])
        touched.add(key[1])
    if touched:
        alive = set()
        for (p, q), (_, _, v, _) in state._assign.items():
            if v == 1:
                alive.add(p)
                alive.add(q)
        doomed = [ids[idx] for idx in touched if idx not in alive]
        state.drop_nodes(doomed)
    tracker._apply_cut(tau)
