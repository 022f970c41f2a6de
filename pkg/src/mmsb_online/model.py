"""Collapsed representation of a mixed membership stochastic blockmodel.

Group membership vectors and the block matrix are integrated out; the state
keeps per-dyad group assignments plus the count tables (node role counts,
block link/non-link counts) that every conditional and predictive law needs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Hashable, Iterable, Iterator, NamedTuple, Optional

import numpy as np

NodeId = Hashable

# Interval tag given to links flipped to absence by history deletion.
RESET_INTERVAL = 0


@dataclass(frozen=True)
class Hyperparams:
    """Prior configuration: K latent groups, Dirichlet alpha, Beta (psi_one, psi_zero)."""

    K: int
    alpha: tuple
    psi_one: float = 1.0
    psi_zero: float = 1.0

    def __post_init__(self):
        if not isinstance(self.K, int) or self.K < 2:
            raise ValueError(f"K must be an integer >= 2, got {self.K!r}")
        alpha = self.alpha
        if np.isscalar(alpha):
            alpha = (float(alpha),) * self.K
        else:
            alpha = tuple(float(a) for a in alpha)
        object.__setattr__(self, "alpha", alpha)
        if len(alpha) != self.K:
            raise ValueError(f"alpha has length {len(alpha)}, expected K={self.K}")
        if any(a <= 0 for a in alpha):
            raise ValueError("all alpha components must be strictly positive")
        if self.psi_one <= 0 or self.psi_zero <= 0:
            raise ValueError("psi_one and psi_zero must be strictly positive")

    @classmethod
    def symmetric(cls, K: int, alpha: float = 0.1,
                  psi_one: float = 1.0, psi_zero: float = 1.0) -> "Hyperparams":
        return cls(K=K, alpha=(float(alpha),) * K, psi_one=psi_one, psi_zero=psi_zero)


@dataclass(frozen=True)
class Dyad:
    """Ordered node pair; self-links are outside the model."""

    initiator: NodeId
    receiver: NodeId

    def __post_init__(self):
        if self.initiator == self.receiver:
            raise ValueError(f"self-loop dyad {self.initiator!r} -> {self.receiver!r}")

    def reversed(self) -> "Dyad":
        return Dyad(self.receiver, self.initiator)


@dataclass(frozen=True)
class DyadRecord:
    """One observation: a dyad, its binary link value, and its time interval."""

    dyad: Dyad
    value: int
    interval: int

    def __post_init__(self):
        if self.value not in (0, 1):
            raise ValueError(f"link value must be 0 or 1, got {self.value!r}")
        if not isinstance(self.interval, int) or self.interval < 0:
            raise ValueError(f"interval must be a non-negative integer, got {self.interval!r}")


class Assignment(NamedTuple):
    """Latent group pair for a dyad: initiator-side and receiver-side group."""

    send_group: int
    recv_group: int


@dataclass
class PosteriorEstimate:
    """Point estimates recovered from the counts: per-node group distributions
    and the K x K matrix of block link probabilities."""

    pi: dict
    b: np.ndarray


class ModelState:
    """Assignments plus sufficient statistics for one model hypothesis.

    Count tables are plain nested lists because the sampler inner loops touch
    single cells millions of times; numpy arrays only appear at the API edges.
    Single-writer: never mutate one state from two threads.
    """

    __slots__ = ("hyper", "_k", "_alpha", "_alpha_sum", "_psi1", "_psi0", "_psi_sum",
                 "_index", "_ids", "_free", "_n", "_m1", "_m0", "_mt", "_assign")

    def __init__(self, hyper: Hyperparams):
        self.hyper = hyper
        k = hyper.K
        self._k = k
        self._alpha = list(hyper.alpha)
        self._alpha_sum = float(sum(hyper.alpha))
        self._psi1 = float(hyper.psi_one)
        self._psi0 = float(hyper.psi_zero)
        self._psi_sum = self._psi1 + self._psi0
        self._index = {}            # node id -> dense index
        self._ids = []              # dense index -> node id (None when free)
        self._free = []             # reusable dense indices
        self._n = []                # role counts per dense index, length-K lists
        self._m1 = [[0] * k for _ in range(k)]
        self._m0 = [[0] * k for _ in range(k)]
        self._mt = [[0] * k for _ in range(k)]   # m1 + m0, maintained incrementally
        self._assign = {}           # (p_idx, q_idx) -> (g, h, value, interval)

    # -- copying ---------------------------------------------------------

    def copy(self) -> "ModelState":
        out = ModelState.__new__(ModelState)
        out.hyper = self.hyper
        out._k = self._k
        out._alpha = self._alpha
        out._alpha_sum = self._alpha_sum
        out._psi1 = self._psi1
        out._psi0 = self._psi0
        out._psi_sum = self._psi_sum
        out._index = dict(self._index)
        out._ids = list(self._ids)
        out._free = list(self._free)
        out._n = [row[:] for row in self._n]
        out._m1 = [row[:] for row in self._m1]
        out._m0 = [row[:] for row in self._m0]
        out._mt = [row[:] for row in self._mt]
        out._assign = dict(self._assign)
        return out

    # -- registry and inspection ------------------------------------------

    @property
    def num_dyads(self) -> int:
        return len(self._assign)

    @property
    def num_nodes(self) -> int:
        return len(self._index)

    @property
    def node_registry(self) -> set:
        return set(self._index)

    def is_registered(self, node: NodeId) -> bool:
        return node in self._index

    def is_instantiated(self, dyad: Dyad) -> bool:
        p = self._index.get(dyad.initiator)
        q = self._index.get(dyad.receiver)
        return p is not None and q is not None and (p, q) in self._assign

    def assignment_of(self, dyad: Dyad):
        """Return (Assignment, value, interval) for an instantiated dyad."""
        p = self._index.get(dyad.initiator)
        q = self._index.get(dyad.receiver)
        if p is None or q is None or (p, q) not in self._assign:
            raise KeyError(f"dyad {dyad} is not instantiated")
        g, h, v, t = self._assign[(p, q)]
        return Assignment(g, h), v, t

    def assignments(self) -> Iterator[tuple]:
        """Yield (dyad, assignment, value, interval) for every instantiated dyad."""
        ids = self._ids
        for (p, q), (g, h, v, t) in self._assign.items():
            yield Dyad(ids[p], ids[q]), Assignment(g, h), v, t

    def role_counts(self, node: NodeId) -> np.ndarray:
        idx = self._index.get(node)
        if idx is None:
            return np.zeros(self._k, dtype=np.int64)
        return np.asarray(self._n[idx], dtype=np.int64)

    @property
    def block_link_counts(self) -> np.ndarray:
        return np.asarray(self._m1, dtype=np.int64)

    @property
    def block_nonlink_counts(self) -> np.ndarray:
        return np.asarray(self._m0, dtype=np.int64)

    # -- low-level bookkeeping --------------------------------------------

    def _register(self, node: NodeId) -> int:
        idx = self._index.get(node)
        if idx is not None:
            return idx
        if self._free:
            idx = self._free.pop()
            self._ids[idx] = node
            row = self._n[idx]
            for g in range(self._k):
                row[g] = 0
        else:
            idx = len(self._ids)
            self._ids.append(node)
            self._n.append([0] * self._k)
        self._index[node] = idx
        return idx

    def _unregister(self, idx: int) -> None:
        node = self._ids[idx]
        del self._index[node]
        self._ids[idx] = None
        self._free.append(idx)

    def _inc(self, p: int, q: int, g: int, h: int, v: int) -> None:
        self._n[p][g] += 1
        self._n[q][h] += 1
        (self._m1 if v else self._m0)[g][h] += 1
        self._mt[g][h] += 1

    def _dec(self, p: int, q: int, g: int, h: int, v: int) -> None:
        self._n[p][g] -= 1
        self._n[q][h] -= 1
        m = (self._m1 if v else self._m0)[g]
        if m[h] <= 0 or self._n[p][g] < 0 or self._n[q][h] < 0:
            raise RuntimeError("count table would go negative; state is corrupt")
        m[h] -= 1
        self._mt[g][h] -= 1

    # -- mutation ----------------------------------------------------------

    def instantiate(self, record: DyadRecord, assignment: Assignment) -> None:
        """Add one observed dyad with its group pair, registering nodes on demand."""
        g, h = assignment
        if not (0 <= g < self._k and 0 <= h < self._k):
            raise ValueError(f"assignment {assignment} outside [0, {self._k})")
        if self.is_instantiated(record.dyad):
            raise ValueError(f"dyad {record.dyad} already instantiated; use reassign")
        p = self._register(record.dyad.initiator)
        q = self._register(record.dyad.receiver)
        self._assign[(p, q)] = (g, h, record.value, record.interval)
        self._inc(p, q, g, h, record.value)

    def remove(self, dyad: Dyad) -> None:
        """Exact inverse of instantiate; endpoints left with no dyads are unregistered."""
        p = self._index.get(dyad.initiator)
        q = self._index.get(dyad.receiver)
        if p is None or q is None or (p, q) not in self._assign:
            raise ValueError(f"dyad {dyad} is not instantiated")
        g, h, v, _ = self._assign.pop((p, q))
        self._dec(p, q, g, h, v)
        for idx in (p, q):
            if not any(self._n[idx]):
                self._unregister(idx)

    def reassign(self, record: DyadRecord, assignment: Assignment) -> None:
        """Replace the value, interval, and groups of an already instantiated dyad."""
        g2, h2 = assignment
        if not (0 <= g2 < self._k and 0 <= h2 < self._k):
            raise ValueError(f"assignment {assignment} outside [0, {self._k})")
        p = self._index.get(record.dyad.initiator)
        q = self._index.get(record.dyad.receiver)
        if p is None or q is None or (p, q) not in self._assign:
            raise ValueError(f"dyad {record.dyad} is not instantiated")
        g, h, v, _ = self._assign[(p, q)]
        self._dec(p, q, g, h, v)
        self._assign[(p, q)] = (g2, h2, record.value, record.interval)
        self._inc(p, q, g2, h2, record.value)

    def drop_nodes(self, nodes: Iterable[NodeId]) -> None:
        """Remove every dyad touching the given nodes and unregister them.

        Partners left without any dyad of their own are unregistered too,
        so the registry stays exactly the set of assignment endpoints.
        """
        doomed = {self._index[n] for n in nodes if n in self._index}
        if not doomed:
            return
        partners = set()
        for key in [k for k in self._assign if k[0] in doomed or k[1] in doomed]:
            g, h, v, _ = self._assign.pop(key)
            self._dec(key[0], key[1], g, h, v)
            partners.update(key)
        for idx in doomed:
            self._unregister(idx)
        for idx in partners - doomed:
            if not any(self._n[idx]):
                self._unregister(idx)

    # -- conditional distributions -----------------------------------------

    def _excl(self, dyad: Dyad, exclude_self: bool):
        """Contribution (p, q, g, h, v) to subtract, or None."""
        if not exclude_self:
            return None
        p = self._index.get(dyad.initiator)
        q = self._index.get(dyad.receiver)
        if p is None or q is None:
            return None
        got = self._assign.get((p, q))
        if got is None:
            return None
        g, h, v, _ = got
        return (p, q, g, h, v)

    def _node_row(self, node: NodeId, excl_idx: Optional[int], excl_group: int):
        """Role-count row for a node id, with one unit optionally excluded."""
        idx = self._index.get(node)
        if idx is None:
            return [0] * self._k
        row = self._n[idx]
        if excl_idx is not None and idx == excl_idx:
            row = row[:]
            row[excl_group] -= 1
            if row[excl_group] < 0:
                raise ValueError("excluded count below zero")
        return row

    def conditional_send(self, dyad: Dyad, value: int, recv_group: int,
                         exclude_self: bool = False) -> np.ndarray:
        """Collapsed conditional over the initiator-side group, receiver side fixed."""
        if not 0 <= recv_group < self._k:
            raise ValueError(f"recv_group {recv_group} outside [0, {self._k})")
        excl = self._excl(dyad, exclude_self)
        ep, eg, eh, ev = (excl[0], excl[2], excl[3], excl[4]) if excl else (None, 0, 0, 0)
        n_p = self._node_row(dyad.initiator, ep, eg)
        w = self._block_column(value, recv_group, excl)
        a = self._alpha
        for g in range(self._k):
            w[g] *= n_p[g] + a[g]
        return _normalized(w)

    def conditional_recv(self, dyad: Dyad, value: int, send_group: int,
                         exclude_self: bool = False) -> np.ndarray:
        """Collapsed conditional over the receiver-side group, initiator side fixed."""
        if not 0 <= send_group < self._k:
            raise ValueError(f"send_group {send_group} outside [0, {self._k})")
        excl = self._excl(dyad, exclude_self)
        eq, eg, eh, ev = (excl[1], excl[2], excl[3], excl[4]) if excl else (None, 0, 0, 0)
        n_q = self._node_row(dyad.receiver, eq, eh)
        w = self._block_row(value, send_group, excl)
        a = self._alpha
        for h in range(self._k):
            w[h] *= n_q[h] + a[h]
        return _normalized(w)

    def conditional_pair(self, dyad: Dyad, value: int,
                         exclude_self: bool = False) -> np.ndarray:
        """Joint collapsed conditional over the (send, recv) group pair, K x K."""
        excl = self._excl(dyad, exclude_self)
        ep, eq, eg, eh, ev = excl if excl else (None, None, 0, 0, 0)
        n_p = self._node_row(dyad.initiator, ep, eg)
        n_q = self._node_row(dyad.receiver, eq, eh)
        a = self._alpha
        k = self._k
        m = self._m1 if value else self._m0
        w = np.empty((k, k))
        for g in range(k):
            fg = n_p[g] + a[g]
            mg, mtg = m[g], self._mt[g]
            for h in range(k):
                mv, mt = mg[h], mtg[h]
                if excl is not None and g == eg and h == eh:
                    mt -= 1
                    if ev == value:
                        mv -= 1
                w[g, h] = fg * (n_q[h] + a[h]) * (mv + (self._psi1 if value else self._psi0)) \
                    / (mt + self._psi_sum)
        total = w.sum()
        if total <= 0:
            raise ValueError("conditional has zero mass; counts are corrupt")
        return w / total

    def _block_column(self, value, h, excl):
        psi_v = self._psi1 if value else self._psi0
        out = [0.0] * self._k
        eg, eh, ev = (excl[2], excl[3], excl[4]) if excl else (-1, -1, -1)
        m = self._m1 if value else self._m0
        for g in range(self._k):
            mv, mt = m[g][h], self._mt[g][h]
            if g == eg and h == eh:
                mt -= 1
                if ev == value:
                    mv -= 1
            out[g] = (mv + psi_v) / (mt + self._psi_sum)
        return out

    def _block_row(self, value, g, excl):
        psi_v = self._psi1 if value else self._psi0
        out = [0.0] * self._k
        eg, eh, ev = (excl[2], excl[3], excl[4]) if excl else (-1, -1, -1)
        m = self._m1 if value else self._m0
        for h in range(self._k):
            mv, mt = m[g][h], self._mt[g][h]
            if g == eg and h == eh:
                mt -= 1
                if ev == value:
                    mv -= 1
            out[h] = (mv + psi_v) / (mt + self._psi_sum)
        return out

    # -- fast index-level weights for sampler inner loops -------------------
    # Callers must already have subtracted the dyad's own contribution.

    def _pair_weights(self, p: int, q: int, value: int) -> list:
        k = self._k
        a = self._alpha
        n_p, n_q = self._n[p], self._n[q]
        m = self._m1 if value else self._m0
        mt = self._mt
        psi_v = self._psi1 if value else self._psi0
        psum = self._psi_sum
        w = [0.0] * (k * k)
        i = 0
        for g in range(k):
            fg = n_p[g] + a[g]
            mg, mtg = m[g], mt[g]
            for h in range(k):
                w[i] = fg * (n_q[h] + a[h]) * (mg[h] + psi_v) / (mtg[h] + psum)
                i += 1
        return w

    def _send_weights(self, p: int, value: int, h: int) -> list:
        k = self._k
        a = self._alpha
        n_p = self._n[p]
        m = self._m1 if value else self._m0
        mt = self._mt
        psi_v = self._psi1 if value else self._psi0
        psum = self._psi_sum
        return [(n_p[g] + a[g]) * (m[g][h] + psi_v) / (mt[g][h] + psum) for g in range(k)]

    def _recv_weights(self, q: int, value: int, g: int) -> list:
        k = self._k
        a = self._alpha
        n_q = self._n[q]
        mg = (self._m1 if value else self._m0)[g]
        mtg = self._mt[g]
        psi_v = self._psi1 if value else self._psi0
        psum = self._psi_sum
        return [(n_q[h] + a[h]) * (mg[h] + psi_v) / (mtg[h] + psum) for h in range(k)]

    # -- predictive and posterior summaries ---------------------------------

    def predictive(self, dyad: Dyad) -> float:
        """Probability that the dyad carries a link, marginalizing its group pair.

        Uses posterior-mean memberships and block rates from the current counts.
        An instantiated dyad's own contribution is excluded; unseen nodes fall
        back to the prior membership.
        """
        excl = None
        p = self._index.get(dyad.initiator)
        q = self._index.get(dyad.receiver)
        if p is not None and q is not None:
            got = self._assign.get((p, q))
            if got is not None:
                excl = got[:3]  # (g, h, v)
        k = self._k
        a = self._alpha
        n_p = self._n[p] if p is not None else None
        n_q = self._n[q] if q is not None else None
        eg, eh, ev = excl if excl else (-1, -1, -1)
        denom_p = (sum(n_p) if n_p else 0) - (1 if excl else 0) + self._alpha_sum
        denom_q = (sum(n_q) if n_q else 0) - (1 if excl else 0) + self._alpha_sum
        m1, mt = self._m1, self._mt
        psi1, psum = self._psi1, self._psi_sum
        total = 0.0
        for g in range(k):
            npg = (n_p[g] if n_p else 0) - (1 if g == eg else 0)
            spg = (npg + a[g]) / denom_p
            m1g, mtg = m1[g], mt[g]
            for h in range(k):
                nqh = (n_q[h] if n_q else 0) - (1 if h == eh else 0)
                mv, mtot = m1g[h], mtg[h]
                if g == eg and h == eh:
                    mtot -= 1
                    if ev == 1:
                        mv -= 1
                total += spg * (nqh + a[h]) / denom_q * (mv + psi1) / (mtot + psum)
        return total

    def log_predictive(self, record: DyadRecord) -> float:
        """Log probability of the record's observed value under predictive()."""
        p1 = self.predictive(record.dyad)
        pv = p1 if record.value == 1 else 1.0 - p1
        return math.log(pv if pv > 1e-12 else 1e-12)

    def posterior_estimates(self) -> PosteriorEstimate:
        """Posterior-mean membership vectors and block link probabilities."""
        a = np.asarray(self._alpha)
        pi = {}
        for node, idx in self._index.items():
            row = np.asarray(self._n[idx], dtype=float) + a
            pi[node] = row / row.sum()
        m1 = self.block_link_counts.astype(float)
        mt = np.asarray(self._mt, dtype=float)
        b = (m1 + self._psi1) / (mt + self._psi_sum)
        return PosteriorEstimate(pi=pi, b=b)

    # -- equality (semantic, independent of internal index layout) ----------

    def _canonical(self):
        ids = self._ids
        assign = {(ids[p], ids[q]): val for (p, q), val in self._assign.items()}
        n = {node: tuple(self._n[idx]) for node, idx in self._index.items()}
        return (self.hyper, assign, n,
                tuple(tuple(r) for r in self._m1), tuple(tuple(r) for r in self._m0))

    def __eq__(self, other):
        if not isinstance(other, ModelState):
            return NotImplemented
        return self._canonical() == other._canonical()

    def __repr__(self):
        return (f"ModelState(K={self._k}, nodes={self.num_nodes}, "
                f"dyads={self.num_dyads})")


def _normalized(w) -> np.ndarray:
    arr = np.asarray(w, dtype=float)
    total = arr.sum()
    if total <= 0:
        raise ValueError("conditional has zero mass; counts are corrupt")
    return arr / total


def init_state(hyper: Hyperparams) -> ModelState:
    """Fresh empty state for the given prior configuration."""
    return ModelState(hyper)


def sample_index(weights, rng) -> int:
    """Draw an index proportional to a list of non-negative weights."""
    total = 0.0
    for w in weights:
        total += w
    u = rng.random() * total
    acc = 0.0
    for i, w in enumerate(weights):
        acc += w
        if u < acc:
            return i
    return len(weights) - 1
