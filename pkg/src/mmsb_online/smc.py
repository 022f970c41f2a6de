"""Particle filtering over model states: weight updates, ESS-gated multinomial
resampling, per-particle rejuvenation, and the weighted predictive mixture.

Randomness discipline: every particle draws from its own stream keyed by
(seed, stream tag, step, slot), so runs replay deterministically and the
per-particle loop bodies are independent between the normalization and
resampling barriers.
"""

from __future__ import annotations

import math
from typing import Callable, Optional, Sequence

import numpy as np

from .drift import DriftTracker
from .gibbs import RejuvenationPolicy, observe_record, rejuvenation_pass
from .model import Dyad, DyadRecord, ModelState

# Stream tags partitioning the derived random streams of one run.
STREAM_WARM = 0
STREAM_PARTICLE = 1
STREAM_RESAMPLE = 2
STREAM_DRIFT = 3
STREAM_DECORRELATE = 4
STREAM_BATCH = 5


def derive_rng(seed, *path: int) -> np.random.Generator:
    """Independent generator for one (seed, purpose, step, slot) coordinate."""
    material = list(seed) if isinstance(seed, (tuple, list)) else [seed]
    return np.random.default_rng(material + list(path))


class Particle:
    """One model hypothesis: a state, a normalized log weight, and an
    optional drift tracker for time-dependent runs."""

    __slots__ = ("state", "log_weight", "drift")

    def __init__(self, state: ModelState, log_weight: float,
                 drift: Optional[DriftTracker] = None):
        self.state = state
        self.log_weight = log_weight
        self.drift = drift

    @property
    def weight(self) -> float:
        return math.exp(self.log_weight)

    def clone(self) -> "Particle":
        return Particle(self.state.copy(), self.log_weight,
                        self.drift.copy() if self.drift is not None else None)


class ParticleSet:
    """A fixed-size population of particles sharing one observation stream."""

    def __init__(self, particles, ess_threshold: float,
                 policy: RejuvenationPolicy, seed, *,
                 pair_mode: str = "alternating", implicit_absence: bool = True):
        if not particles:
            raise ValueError("need at least one particle")
        if ess_threshold <= 0:
            raise ValueError("ESS threshold must be positive")
        self.particles = list(particles)
        self.ess_threshold = float(ess_threshold)
        self.policy = policy
        self.seed = seed
        self.pair_mode = pair_mode
        self.implicit_absence = implicit_absence
        self.step = 0
        self.resample_count = 0

    def __len__(self) -> int:
        return len(self.particles)

    def weights(self) -> np.ndarray:
        return np.array([math.exp(p.log_weight) for p in self.particles])

    def _normalize(self) -> None:
        logs = [p.log_weight for p in self.particles]
        m = max(logs)
        total = sum(math.exp(lw - m) for lw in logs)
        log_norm = m + math.log(total)
        for p in self.particles:
            p.log_weight -= log_norm


def pf_init(warm_state: ModelState, count: int, ess_threshold: float,
            policy: RejuvenationPolicy, seed, *, decorrelate: bool = False,
            pair_mode: str = "alternating",
            implicit_absence: bool = True) -> ParticleSet:
    """Population of `count` copies of the warm-started state, weights 1/count.

    With decorrelate on, each copy gets one rejuvenation pass over all of its
    dyads with a distinct stream, so the copies start in different corners of
    the posterior.
    """
    if count < 1:
        raise ValueError("particle count must be >= 1")
    lw = -math.log(count)
    particles = [Particle(warm_state.copy(), lw) for _ in range(count)]
    pset = ParticleSet(particles, ess_threshold, policy, seed,
                       pair_mode=pair_mode, implicit_absence=implicit_absence)
    if decorrelate:
        for k, particle in enumerate(particles):
            rng = derive_rng(seed, STREAM_DECORRELATE, k)
            rejuvenation_pass(particle.state, particle.state.num_dyads, rng,
                              pair_mode)
    return pset


def ess(weights) -> float:
    """Effective sample size 1 / sum(w^2) of normalized weights."""
    w = np.asarray(weights, dtype=float)
    if w.size == 0 or np.any(w < 0):
        raise ValueError("weights must be a non-empty, non-negative vector")
    denom = float(np.sum(w * w))
    if denom <= 0:
        raise ValueError("all-zero weight vector has no effective sample size")
    return 1.0 / denom


def resample(pset: ParticleSet, rng) -> None:
    """Multinomial resampling: P draws with replacement, weights reset to 1/P.

    Slots that duplicate a source particle receive deep, independent copies.
    """
    count = len(pset.particles)
    indices = rng.choice(count, size=count, p=pset.weights())
    used = set()
    new_particles = []
    for i in indices:
        i = int(i)
        src = pset.particles[i]
        if i in used:
            new_particles.append(src.clone())
        else:
            used.add(i)
            new_particles.append(src)
    lw = -math.log(count)
    for p in new_particles:
        p.log_weight = lw
    pset.particles = new_particles
    pset.resample_count += 1


def pf_step(pset: ParticleSet, record: DyadRecord,
            eligible: Optional[Callable[[Dyad], bool]] = None) -> None:
    """Advance every particle by one observation.

    Per particle: multiply the weight by the predictive probability of the
    observed value (before any assignment), absorb the record; then normalize
    weights, resample when the ESS falls to the threshold, and finally run
    each particle's own rejuvenation pass.
    """
    step = pset.step
    rngs = []
    for k, particle in enumerate(pset.particles):
        rng = derive_rng(pset.seed, STREAM_PARTICLE, step, k)
        rngs.append(rng)
        lp = particle.state.log_predictive(record)
        particle.log_weight += lp
        if particle.drift is not None:
            particle.drift.record_loglik(record.interval, lp)
        observe_record(particle.state, record, rng, eligible=eligible,
                       implicit_absence=pset.implicit_absence,
                       pair_mode=pset.pair_mode)
    pset._normalize()
    if ess(pset.weights()) <= pset.ess_threshold:
        resample(pset, derive_rng(pset.seed, STREAM_RESAMPLE, step))
    if pset.policy.size > 0:
        for k, particle in enumerate(pset.particles):
            rejuvenation_pass(particle.state, pset.policy.size, rngs[k],
                              pset.pair_mode)
    pset.step += 1


def pf_predictive(pset: ParticleSet, dyad: Dyad) -> float:
    """Weighted mixture of the per-particle predictive probabilities."""
    return float(sum(math.exp(p.log_weight) * p.state.predictive(dyad)
                     for p in pset.particles))
