"""Held-out evaluation: per-interval test log-likelihood, the improvement
metric against the no-rejuvenation incremental baseline, the exhaustive
enumeration oracle used for sampler correctness checks, and report I/O.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, List, Sequence

import numpy as np
from scipy.special import betaln, gammaln

from .model import Dyad, DyadRecord, Hyperparams

REPORT_SCHEMA_VERSION = 1

PROB_FLOOR = 1e-12

ENUMERATION_BUDGET = 10 ** 7


class ClampCounter:
    """Counts predictive probabilities clamped away from 0/1 during scoring."""

    __slots__ = ("count",)

    def __init__(self):
        self.count = 0


def testset_loglik(model_predictive: Callable[[Dyad], float],
                   records: Iterable[DyadRecord],
                   clamp_counter: ClampCounter = None) -> float:
    """Sum of log P(observed value) over the given records.

    Probabilities outside (0, 1) are clamped to [1e-12, 1 - 1e-12]; each
    clamp bumps the diagnostic counter when one is supplied.
    """
    total = 0.0
    for rec in records:
        p = model_predictive(rec.dyad)
        if not PROB_FLOOR <= p <= 1.0 - PROB_FLOOR:
            p = min(max(p, PROB_FLOOR), 1.0 - PROB_FLOOR)
            if clamp_counter is not None:
                clamp_counter.count += 1
        total += math.log(p) if rec.value == 1 else math.log1p(-p)
    return total


testset_loglik.__test__ = False  # name looks like a test to pytest collectors


def improvement_metric(x_series: Sequence[float],
                       baseline_series: Sequence[float]) -> float:
    """Mean rate of increase of test log-likelihood over the baseline:
    average of (X(t) - I0(t)) / |I0(t)|."""
    if len(x_series) != len(baseline_series):
        raise ValueError(f"series lengths differ: {len(x_series)} vs {len(baseline_series)}")
    if not x_series:
        raise ValueError("empty series")
    total = 0.0
    for x, b in zip(x_series, baseline_series):
        if b == 0:
            raise ValueError("baseline log-likelihood of 0 leaves the rate undefined")
        total += (x - b) / abs(b)
    return total / len(x_series)


# -- exhaustive enumeration oracle -------------------------------------------


def enumerate_predictive(records: Sequence[DyadRecord], k: int, alpha,
                         psi_one: float, psi_zero: float, query: Dyad) -> float:
    """Exact link probability for the query dyad by summing over every joint
    group assignment of the given records.

    Works for any k >= 1. The per-configuration weight is the collapsed
    marginal (Dirichlet-multinomial per node, Beta-Bernoulli per block), and
    the query is marginalized through posterior-mean memberships and block
    rates, the same way the samplers' predictive does.
    """
    records = list(records)
    n_records = len(records)
    if any(r.dyad == query for r in records):
        raise ValueError("query dyad must not be among the conditioning records")
    n_configs = k ** (2 * n_records)
    if n_configs > ENUMERATION_BUDGET:
        raise ValueError(f"{n_configs} configurations exceed the enumeration "
                         f"budget of {ENUMERATION_BUDGET}")
    if np.isscalar(alpha):
        alpha = np.full(k, float(alpha))
    else:
        alpha = np.asarray(alpha, dtype=float)
    if alpha.shape != (k,):
        raise ValueError(f"alpha must have length {k}")
    alpha_sum = alpha.sum()
    psi_sum = psi_one + psi_zero

    node_idx = {}
    endpoints = []
    for rec in records:
        pair = []
        for node in (rec.dyad.initiator, rec.dyad.receiver):
            pair.append(node_idx.setdefault(node, len(node_idx)))
        endpoints.append((pair[0], pair[1], rec.value))
    n_nodes = len(node_idx)
    qp = node_idx.get(query.initiator)
    qq = node_idx.get(query.receiver)

    log_ws = np.empty(n_configs)
    preds = np.empty(n_configs)
    for ci, z in enumerate(itertools.product(range(k), repeat=2 * n_records)):
        n = np.zeros((n_nodes, k))
        m1 = np.zeros((k, k))
        m0 = np.zeros((k, k))
        for j, (p, q, v) in enumerate(endpoints):
            g, h = z[2 * j], z[2 * j + 1]
            n[p, g] += 1
            n[q, h] += 1
            (m1 if v else m0)[g, h] += 1
        log_w = gammaln(alpha + n).sum() + betaln(psi_one + m1, psi_zero + m0).sum()
        s_p = (alpha if qp is None else alpha + n[qp])
        s_q = (alpha if qq is None else alpha + n[qq])
        s_p = s_p / s_p.sum()
        s_q = s_q / s_q.sum()
        b_hat = (m1 + psi_one) / (m1 + m0 + psi_sum)
        log_ws[ci] = log_w
        preds[ci] = s_p @ b_hat @ s_q
    log_ws -= log_ws.max()
    w = np.exp(log_ws)
    return float((w * preds).sum() / w.sum())


def exact_posterior_oracle(records: Sequence[DyadRecord], hyper: Hyperparams,
                           query: Dyad) -> float:
    """Exact posterior predictive for the query under the given prior."""
    return enumerate_predictive(records, hyper.K, hyper.alpha,
                                hyper.psi_one, hyper.psi_zero, query)


# -- reports ------------------------------------------------------------------


@dataclass
class EvalReport:
    """Per-interval test log-likelihoods of a run and of its baseline, the
    improvement metric, and run metadata (resolved config, seed, counters)."""

    per_interval: list
    baseline_per_interval: list
    improvement: float
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.per_interval = [(int(t), float(x)) for t, x in self.per_interval]
        self.baseline_per_interval = [(int(t), float(x))
                                      for t, x in self.baseline_per_interval]
        if [t for t, _ in self.per_interval] != [t for t, _ in self.baseline_per_interval]:
            raise ValueError("run and baseline cover different intervals")

    def intervals(self) -> List[int]:
        return [t for t, _ in self.per_interval]

    def rates(self) -> List[tuple]:
        """Per-interval (t, (X(t) - I0(t)) / |I0(t)|); the rate is None where
        the baseline is 0, which only happens for empty test intervals."""
        out = []
        for (t, x), (_, b) in zip(self.per_interval, self.baseline_per_interval):
            out.append((t, (x - b) / abs(b) if b != 0 else None))
        return out

    def to_dict(self) -> dict:
        return {
            "version": REPORT_SCHEMA_VERSION,
            "per_interval": [[t, x] for t, x in self.per_interval],
            "baseline_per_interval": [[t, x] for t, x in self.baseline_per_interval],
            "improvement": self.improvement,
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "EvalReport":
        if payload.get("version") != REPORT_SCHEMA_VERSION:
            raise ValueError(f"unsupported report version {payload.get('version')!r}")
        return cls(per_interval=[tuple(x) for x in payload["per_interval"]],
                   baseline_per_interval=[tuple(x) for x in payload["baseline_per_interval"]],
                   improvement=payload["improvement"],
                   metadata=payload["metadata"])


def emit_report(report: EvalReport, base_path, formats=("csv", "json")) -> list:
    """Write `<base>.csv` (per-interval rows) and `<base>.json` (full report).

    CSV schema: interval,test_loglik,baseline_loglik,rate_of_increase.
    """
    base = str(base_path)
    written = []
    if "csv" in formats:
        path = base + ".csv"
        try:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["interval", "test_loglik", "baseline_loglik",
                                 "rate_of_increase"])
                rates = dict(report.rates()) if report.per_interval else {}
                for (t, x), (_, b) in zip(report.per_interval,
                                          report.baseline_per_interval):
                    rate = rates[t]
                    writer.writerow([t, repr(x), repr(b),
                                     "" if rate is None else repr(rate)])
        except OSError as exc:
            raise OSError(f"cannot write report CSV {path}: {exc}") from exc
        written.append(path)
    if "json" in formats:
        path = base + ".json"
        try:
            with open(path, "w", encoding="utf-8") as fh:
                json.dump(report.to_dict(), fh, indent=2)
                fh.write("\n")
        except OSError as exc:
            raise OSError(f"cannot write report JSON {path}: {exc}") from exc
        written.append(path)
    return written


def load_report(json_path) -> EvalReport:
    with open(json_path, "r", encoding="utf-8") as fh:
        return EvalReport.from_dict(json.load(fh))
