"""Batch and incremental collapsed Gibbs samplers over a ModelState.

The batch sampler instantiates a full dyad set and sweeps it; the incremental
sampler absorbs one observation at a time, instantiating implicit absences on
node arrival and optionally refreshing a random subset of old assignments
(rejuvenation) after each step.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .model import (Assignment, Dyad, DyadRecord, Hyperparams, ModelState,
                    sample_index)

PAIR_MODES = ("alternating", "joint")


@dataclass(frozen=True)
class RejuvenationPolicy:
    """How many previously observed dyads to re-sample after each new one."""

    size: int = 0
    selection: str = "uniform_without_replacement"

    def __post_init__(self):
        if self.size < 0:
            raise ValueError("rejuvenation size must be non-negative")
        if self.selection != "uniform_without_replacement":
            raise ValueError(f"unsupported selection scheme {self.selection!r}")


@dataclass(frozen=True)
class GibbsConfig:
    """Batch sampler settings; seed may be an int or a tuple of ints."""

    sweeps: int
    hyper: Hyperparams
    seed: object = 0
    pair_mode: str = "alternating"

    def __post_init__(self):
        if self.sweeps < 1:
            raise ValueError("sweeps must be >= 1")
        if self.pair_mode not in PAIR_MODES:
            raise ValueError(f"pair_mode must be one of {PAIR_MODES}")


def _redraw(state: ModelState, key, rng, pair_mode: str) -> None:
    """Re-sample one instantiated dyad's group pair from its exclusion conditional."""
    p, q = key
    g, h, v, t = state._assign[key]
    state._dec(p, q, g, h, v)
    if pair_mode == "joint":
        idx = sample_index(state._pair_weights(p, q, v), rng)
        g2, h2 = divmod(idx, state.hyper.K)
    else:
        g2 = sample_index(state._send_weights(p, v, h), rng)
        h2 = sample_index(state._recv_weights(q, v, g2), rng)
    state._inc(p, q, g2, h2, v)
    state._assign[key] = (g2, h2, v, t)


def run_batch(records: Sequence[DyadRecord], config: GibbsConfig) -> ModelState:
    """Instantiate all records with random groups and run full Gibbs sweeps.

    Records are processed in the order given; identical order, records, and
    seed give identical output.
    """
    state = ModelState(config.hyper)
    rng = np.random.default_rng(config.seed)
    k = config.hyper.K
    seen = set()
    for rec in records:
        if rec.dyad in seen:
            raise ValueError(f"duplicate dyad {rec.dyad} in batch records")
        seen.add(rec.dyad)
        g = int(rng.integers(k))
        h = int(rng.integers(k))
        state.instantiate(rec, Assignment(g, h))
    for _ in range(config.sweeps):
        for key in state._assign:
            _redraw(state, key, rng, config.pair_mode)
    return state


def observe_record(state: ModelState, record: DyadRecord, rng, *,
                   eligible: Optional[Callable[[Dyad], bool]] = None,
                   implicit_absence: bool = True,
                   pair_mode: str = "alternating") -> None:
    """Absorb one streamed observation into the state (no rejuvenation).

    A dyad already instantiated (an implicit absence, or an earlier
    observation) is reassigned with the new value and interval; observed
    links never flip back to absence. When the record introduces a new node,
    absence dyads pairing it in both directions with every previously
    registered node are instantiated, skipping dyads the eligibility
    predicate holds out.
    """
    dyad = record.dyad
    if state.is_instantiated(dyad):
        _, old_value, _ = state.assignment_of(dyad)
        if old_value == 1 and record.value == 0:
            raise ValueError(f"dyad {dyad} was observed present; absence records "
                             "for it are not supported")
        w = state.conditional_pair(dyad, record.value, exclude_self=True)
        g, h = divmod(sample_index(w.ravel(), rng), state.hyper.K)
        state.reassign(record, Assignment(g, h))
        return

    new_nodes = [x for x in (dyad.initiator, dyad.receiver)
                 if not state.is_registered(x)]
    existing = [n for n in state._index
                if n != dyad.initiator and n != dyad.receiver]

    w = state.conditional_pair(dyad, record.value)
    g, h = divmod(sample_index(w.ravel(), rng), state.hyper.K)
    state.instantiate(record, Assignment(g, h))

    if implicit_absence and new_nodes and existing:
        for x in new_nodes:
            for u in existing:
                for cand in (Dyad(x, u), Dyad(u, x)):
                    if eligible is not None and not eligible(cand):
                        continue
                    w = state.conditional_pair(cand, 0)
                    g, h = divmod(sample_index(w.ravel(), rng), state.hyper.K)
                    state.instantiate(DyadRecord(cand, 0, record.interval),
                                      Assignment(g, h))


def rejuvenation_pass(state: ModelState, size: int, rng,
                      pair_mode: str = "alternating") -> int:
    """Re-sample `size` instantiated dyads chosen uniformly without replacement.

    Clamped to the number of instantiated dyads; returns how many were drawn.
    """
    size = min(size, state.num_dyads)
    if size <= 0:
        return 0
    keys = list(state._assign)
    for i in rng.choice(len(keys), size=size, replace=False):
        _redraw(state, keys[i], rng, pair_mode)
    return size


def incremental_observe(state: ModelState, record: DyadRecord,
                        policy: RejuvenationPolicy, rng, *,
                        eligible: Optional[Callable[[Dyad], bool]] = None,
                        implicit_absence: bool = True,
                        pair_mode: str = "alternating") -> None:
    """One full incremental Gibbs step: absorb the record, then rejuvenate."""
    observe_record(state, record, rng, eligible=eligible,
                   implicit_absence=implicit_absence, pair_mode=pair_mode)
    rejuvenation_pass(state, policy.size, rng, pair_mode)


def rejuvenate(state: ModelState, dyads: Iterable[Dyad], rng,
               pair_mode: str = "alternating") -> None:
    """Re-sample the group pairs of the given instantiated dyads, in order."""
    keys = []
    for d in dyads:
        p = state._index.get(d.initiator)
        q = state._index.get(d.receiver)
        if p is None or q is None or (p, q) not in state._assign:
            raise ValueError(f"dyad {d} is not instantiated")
        keys.append((p, q))
    for key in keys:
        _redraw(state, key, rng, pair_mode)
