"""Experiment driver: warm start, online streaming of train records through a
configured algorithm, snapshot evaluation per interval, baseline pairing, and
validation grid search.

Evaluation protocol: the test records of interval t are scored against the
model as it stood after the last train record of interval t-1 (including any
history deletion triggered at that boundary), so scoring starts at t = 2, the
first interval with a trained model behind it.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional, Sequence

from .drift import TAU_STRATEGIES, DriftTracker, discard_history
from .evaluation import ClampCounter, EvalReport, improvement_metric, testset_loglik
from .gibbs import (PAIR_MODES, GibbsConfig, RejuvenationPolicy,
                    incremental_observe, run_batch)
from .model import Hyperparams
from .smc import (STREAM_BATCH, STREAM_DRIFT, STREAM_PARTICLE, STREAM_WARM,
                  derive_rng, pf_init, pf_predictive, pf_step)
from .streams import ObservationStream, Role, SplitMask


class Algorithm(str, Enum):
    BATCH_GIBBS = "batch_gibbs"
    INCREMENTAL_GIBBS = "incremental_gibbs"
    PARTICLE_FILTER = "particle_filter"
    TD_INCREMENTAL_GIBBS = "td_incremental_gibbs"
    TD_PARTICLE_FILTER = "td_particle_filter"


_TD_ALGORITHMS = (Algorithm.TD_INCREMENTAL_GIBBS, Algorithm.TD_PARTICLE_FILTER)
_PF_ALGORITHMS = (Algorithm.PARTICLE_FILTER, Algorithm.TD_PARTICLE_FILTER)


@dataclass(frozen=True)
class RunConfig:
    """Everything one run needs besides the stream and the fold mask."""

    algorithm: Algorithm
    hyper: Hyperparams
    sweeps: int = 100              # warm start; also per-interval refit size for batch
    rejuvenation: int = 0
    particles: int = 24
    ess_threshold: float = 8.0
    lambda0: Optional[float] = None
    tau_strategy: str = "inverse_rate"
    implicit_absence: bool = True
    pair_mode: str = "alternating"
    decorrelate: bool = False
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "algorithm", Algorithm(self.algorithm))
        if self.sweeps < 1:
            raise ValueError("sweeps must be >= 1")
        if self.rejuvenation < 0:
            raise ValueError("rejuvenation size must be >= 0")
        if self.particles < 1:
            raise ValueError("particle count must be >= 1")
        if self.ess_threshold <= 0:
            raise ValueError("ESS threshold must be positive")
        if self.tau_strategy not in TAU_STRATEGIES:
            raise ValueError(f"tau_strategy must be one of {TAU_STRATEGIES}")
        if self.pair_mode not in PAIR_MODES:
            raise ValueError(f"pair_mode must be one of {PAIR_MODES}")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ValueError("seed must be a non-negative integer")
        if self.algorithm in _TD_ALGORITHMS:
            if self.lambda0 is None or self.lambda0 < 0:
                raise ValueError(f"{self.algorithm.value} requires lambda0 >= 0")
        elif self.lambda0 is not None:
            raise ValueError(f"lambda0 is only meaningful for time-dependent "
                             f"algorithms, not {self.algorithm.value}")


def baseline_config(config: RunConfig) -> RunConfig:
    """The paired baseline: incremental Gibbs with no rejuvenation, same seed,
    hyperparameters, and warm start."""
    return replace(config, algorithm=Algorithm.INCREMENTAL_GIBBS,
                   rejuvenation=0, lambda0=None)


@dataclass
class RunResult:
    """Raw per-interval series of one run, before baseline pairing."""

    x_series: list                  # (interval, test log-likelihood)
    validation_series: list         # (interval, validation log-likelihood)
    clamp_events: int
    n_validation_records: int
    empty_test_intervals: list
    config: RunConfig


def _records_with_role(records, mask, role):
    if mask is None:
        return list(records) if role is Role.TRAIN else []
    return [r for r in records if mask.role_of(r.dyad) is role]


def run_stream(stream: ObservationStream, mask: Optional[SplitMask],
               config: RunConfig) -> RunResult:
    """Warm start on interval 1, stream intervals 2..T, score each snapshot."""
    if stream.horizon < 2:
        raise ValueError("stream must span at least two intervals")
    by_t = stream.by_interval()
    algo = config.algorithm
    td = algo in _TD_ALGORITHMS
    is_pf = algo in _PF_ALGORITHMS
    policy = RejuvenationPolicy(size=config.rejuvenation)
    eligible = None if mask is None else mask.is_train

    state = None
    pset = None
    tracker = None
    if algo is not Algorithm.BATCH_GIBBS:
        warm_records = _records_with_role(by_t.get(1, []), mask, Role.TRAIN)
        warm = run_batch(warm_records,
                         GibbsConfig(sweeps=config.sweeps, hyper=config.hyper,
                                     seed=(config.seed, STREAM_WARM),
                                     pair_mode=config.pair_mode))
        if is_pf:
            pset = pf_init(warm, config.particles, config.ess_threshold, policy,
                           config.seed, decorrelate=config.decorrelate,
                           pair_mode=config.pair_mode,
                           implicit_absence=config.implicit_absence)
            if td:
                for particle in pset.particles:
                    particle.drift = DriftTracker(config.lambda0,
                                                  config.tau_strategy,
                                                  first_interval=2)
        else:
            state = warm
            if td:
                tracker = DriftTracker(config.lambda0, config.tau_strategy,
                                       first_interval=2)

    clamp = ClampCounter()
    x_series = []
    validation_series = []
    empty_tests = []
    n_validation = 0
    step = 0
    for t in range(2, stream.horizon + 1):
        if algo is Algorithm.BATCH_GIBBS:
            past = [r for u in range(1, t)
                    for r in _records_with_role(by_t.get(u, []), mask, Role.TRAIN)]
            state = run_batch(past,
                              GibbsConfig(sweeps=config.sweeps, hyper=config.hyper,
                                          seed=(config.seed, STREAM_BATCH, t),
                                          pair_mode=config.pair_mode))
        predictive = (lambda d: pf_predictive(pset, d)) if is_pf else state.predictive
        test_records = _records_with_role(by_t.get(t, []), mask, Role.TEST)
        if not test_records:
            empty_tests.append(t)
        x_series.append((t, testset_loglik(predictive, test_records, clamp)))
        val_records = _records_with_role(by_t.get(t, []), mask, Role.VALIDATION)
        n_validation += len(val_records)
        validation_series.append((t, testset_loglik(predictive, val_records, clamp)))

        if algo is Algorithm.BATCH_GIBBS:
            continue
        for rec in _records_with_role(by_t.get(t, []), mask, Role.TRAIN):
            if is_pf:
                pf_step(pset, rec, eligible)
            else:
                rng = derive_rng(config.seed, STREAM_PARTICLE, step, 0)
                if tracker is not None:
                    tracker.record_loglik(rec.interval, state.log_predictive(rec))
                incremental_observe(state, rec, policy, rng, eligible=eligible,
                                    implicit_absence=config.implicit_absence,
                                    pair_mode=config.pair_mode)
                step += 1
        if td:
            chains = (enumerate(p.drift for p in pset.particles) if is_pf
                      else [(0, tracker)])
            for slot, trk in chains:
                if trk.should_discard(t):
                    rng = derive_rng(config.seed, STREAM_DRIFT, t, slot)
                    tau = trk.sample_cut(t, rng)
                    if tau is not None:
                        target = pset.particles[slot].state if is_pf else state
                        discard_history(target, trk, tau, rng)
    return RunResult(x_series=x_series, validation_series=validation_series,
                     clamp_events=clamp.count, n_validation_records=n_validation,
                     empty_test_intervals=empty_tests, config=config)


def config_to_dict(config: RunConfig) -> dict:
    return {
        "algorithm": config.algorithm.value,
        "k": config.hyper.K,
        "alpha": list(config.hyper.alpha),
        "psi": [config.hyper.psi_one, config.hyper.psi_zero],
        "sweeps": config.sweeps,
        "rejuvenation": config.rejuvenation,
        "particles": config.particles,
        "ess_threshold": config.ess_threshold,
        "lambda0": config.lambda0,
        "tau_strategy": config.tau_strategy,
        "implicit_absence": config.implicit_absence,
        "pair_mode": config.pair_mode,
        "decorrelate": config.decorrelate,
        "seed": config.seed,
    }


def build_report(result: RunResult, baseline: RunResult) -> EvalReport:
    # Intervals without test records carry no evidence and are flagged in the
    # metadata; the improvement metric aggregates over the scored ones only.
    scored = [(x, b) for (_, x), (_, b) in zip(result.x_series, baseline.x_series)
              if b != 0]
    if not scored:
        raise ValueError("no interval has test records; nothing to score")
    x, b = zip(*scored)
    return EvalReport(
        per_interval=result.x_series,
        baseline_per_interval=baseline.x_series,
        improvement=improvement_metric(x, b),
        metadata={
            "algorithm": result.config.algorithm.value,
            "config": config_to_dict(result.config),
            "baseline_config": config_to_dict(baseline.config),
            "seed": result.config.seed,
            "clamp_events": result.clamp_events,
            "baseline_clamp_events": baseline.clamp_events,
            "validation_per_interval": [[t, v] for t, v in result.validation_series],
            "empty_test_intervals": result.empty_test_intervals,
        })


def run_experiment(stream: ObservationStream, mask: Optional[SplitMask],
                   config: RunConfig) -> EvalReport:
    """Run the configured algorithm and its paired baseline; report both."""
    result = run_stream(stream, mask, config)
    base_cfg = baseline_config(config)
    baseline = result if base_cfg == config else run_stream(stream, mask, base_cfg)
    return build_report(result, baseline)


@dataclass
class GridResult:
    """Validation scores for every grid cell and the winner's full report."""

    cells: list                     # (config, mean validation log-likelihood)
    winner_index: int
    winner_report: EvalReport


def run_grid(stream: ObservationStream, mask: SplitMask, base_config: RunConfig,
             grid_spec: dict) -> GridResult:
    """Enumerate the grid, score each cell on the validation dyads, and
    report test results for the best cell only (ties: lowest cell index)."""
    if not grid_spec or any(len(v) == 0 for v in grid_spec.values()):
        raise ValueError("grid specification is empty")
    names = list(grid_spec)
    combos = list(itertools.product(*(list(grid_spec[n]) for n in names)))
    cells = []
    results = []
    for combo in combos:
        cfg = replace(base_config, **dict(zip(names, combo)))
        result = run_stream(stream, mask, cfg)
        if result.n_validation_records == 0:
            raise ValueError("mask holds out no validation records; "
                             "grid selection is impossible")
        scores = [v for _, v in result.validation_series]
        cells.append((cfg, sum(scores) / len(scores)))
        results.append(result)
    winner = max(range(len(cells)), key=lambda i: (cells[i][1], -i))
    win_cfg = cells[winner][0]
    base_cfg = baseline_config(win_cfg)
    baseline = (results[winner] if base_cfg == win_cfg
                else run_stream(stream, mask, base_cfg))
    return GridResult(cells=cells, winner_index=winner,
                      winner_report=build_report(results[winner], baseline))
