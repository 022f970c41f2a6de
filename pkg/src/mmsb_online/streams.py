"""Observation ingestion, synthetic dynamic-network generation, and the
five-fold train/validation/test split over dyads.

Edge-list format: UTF-8 text, one record per line,
``interval node_from node_to value`` separated by whitespace, ``#`` comments
allowed. Intervals are positive integers, value is 0 or 1.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, List, Optional, Sequence

import numpy as np

from .model import Dyad, DyadRecord, NodeId


class Role(str, Enum):
    TRAIN = "train"
    VALIDATION = "validation"
    TEST = "test"


class StreamFormatError(ValueError):
    """Malformed edge-list or mask input."""


@dataclass
class ObservationStream:
    """Time-ordered dyad records plus the node registry with first appearances."""

    records: List[DyadRecord]
    horizon: int
    nodes: dict

    @classmethod
    def from_records(cls, records: Iterable[DyadRecord],
                     horizon: Optional[int] = None) -> "ObservationStream":
        """Sort (stable), collapse duplicate same-value records within an
        interval, and reject conflicting ones."""
        ordered = sorted(records, key=lambda r: r.interval)
        seen = {}
        kept = []
        nodes = {}
        for rec in ordered:
            if rec.interval < 1:
                raise StreamFormatError(f"stream interval must be >= 1, got {rec.interval}")
            key = (rec.interval, rec.dyad)
            if key in seen:
                if seen[key] != rec.value:
                    raise StreamFormatError(
                        f"conflicting values for {rec.dyad} in interval {rec.interval}")
                continue
            seen[key] = rec.value
            kept.append(rec)
            for node in (rec.dyad.initiator, rec.dyad.receiver):
                nodes.setdefault(node, rec.interval)
        max_t = max((r.interval for r in kept), default=0)
        if horizon is None:
            horizon = max_t
        elif horizon < max_t:
            raise StreamFormatError(f"horizon {horizon} below last interval {max_t}")
        return cls(records=kept, horizon=horizon, nodes=nodes)

    def by_interval(self) -> dict:
        out = {}
        for rec in self.records:
            out.setdefault(rec.interval, []).append(rec)
        return out

    def dyad_universe(self) -> List[Dyad]:
        """Distinct observed dyads in first-appearance order."""
        seen = {}
        for rec in self.records:
            seen.setdefault(rec.dyad, None)
        return list(seen)

    def __len__(self) -> int:
        return len(self.records)


def load_edge_list(path) -> ObservationStream:
    """Parse an edge-list file; errors carry the offending line number."""
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            parts = text.split()
            if len(parts) != 4:
                raise StreamFormatError(
                    f"{path}:{lineno}: expected 'interval from to value', got {len(parts)} fields")
            t_str, src, dst, v_str = parts
            try:
                interval = int(t_str)
            except ValueError:
                raise StreamFormatError(f"{path}:{lineno}: interval {t_str!r} is not an integer")
            if interval < 1:
                raise StreamFormatError(f"{path}:{lineno}: interval must be >= 1")
            if v_str not in ("0", "1"):
                raise StreamFormatError(f"{path}:{lineno}: value must be 0 or 1, got {v_str!r}")
            if src == dst:
                raise StreamFormatError(f"{path}:{lineno}: self-loop {src!r} -> {dst!r}")
            records.append(DyadRecord(Dyad(src, dst), int(v_str), interval))
    try:
        return ObservationStream.from_records(records)
    except StreamFormatError as exc:
        raise StreamFormatError(f"{path}: {exc}") from exc


def save_edge_list(stream: ObservationStream, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# interval node_from node_to value\n")
        for rec in stream.records:
            fh.write(f"{rec.interval} {rec.dyad.initiator} {rec.dyad.receiver} {rec.value}\n")


# -- synthetic generation ---------------------------------------------------


@dataclass(frozen=True)
class SyntheticConfig:
    """Planted-structure generator settings.

    The block-matrix schedule is a sequence of (start_interval, K x K matrix)
    pairs, first start at 1, starts strictly increasing. Every dyad is
    emitted at most once across the whole horizon, so streams never revisit
    an observed pair with a contradictory value.
    """

    nodes: int
    groups: int
    intervals: int
    records_per_interval: int
    alpha_gen: float = 0.1
    schedule: tuple = ()
    seed: int = 0

    def __post_init__(self):
        if self.nodes < 2 or self.groups < 1 or self.intervals < 1:
            raise ValueError("need nodes >= 2, groups >= 1, intervals >= 1")
        if self.records_per_interval < 1:
            raise ValueError("records_per_interval must be >= 1")
        total = self.nodes * (self.nodes - 1)
        if self.records_per_interval * self.intervals > total:
            raise ValueError(
                f"{self.records_per_interval} records x {self.intervals} intervals "
                f"exceeds the {total} available dyads")
        if not self.schedule:
            raise ValueError("schedule must contain at least one block matrix")
        starts = [s for s, _ in self.schedule]
        if starts[0] != 1 or any(b <= a for a, b in zip(starts, starts[1:])):
            raise ValueError("schedule starts must begin at 1 and strictly increase")
        for _, mat in self.schedule:
            m = np.asarray(mat, dtype=float)
            if m.shape != (self.groups, self.groups):
                raise ValueError(f"block matrix shape {m.shape} != "
                                 f"({self.groups}, {self.groups})")
            if np.any(m <= 0) or np.any(m >= 1):
                raise ValueError("block matrix entries must lie strictly in (0, 1)")


@dataclass
class GroundTruth:
    """Generator-side latent structure, kept for evaluation."""

    memberships: dict
    schedule: tuple
    alpha_gen: float


def node_name(i: int) -> str:
    return f"n{i}"


def generate_synthetic(config: SyntheticConfig, rng=None):
    """Draw memberships once, then stream interval by interval.

    Each interval samples fresh dyads (without replacement across the whole
    horizon), draws a group pair per dyad from the endpoint memberships, and
    emits a Bernoulli link from the scheduled block matrix.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    n, k, t_max = config.nodes, config.groups, config.intervals
    alpha = np.full(k, float(config.alpha_gen))
    names = [node_name(i) for i in range(n)]
    pis = rng.dirichlet(alpha, size=n)
    order = rng.permutation(n * (n - 1))
    matrices = [(start, np.asarray(mat, dtype=float)) for start, mat in config.schedule]
    records = []
    pos = 0
    for t in range(1, t_max + 1):
        block = matrices[0][1]
        for start, mat in matrices:
            if start <= t:
                block = mat
        for flat in order[pos:pos + config.records_per_interval]:
            p, r = divmod(int(flat), n - 1)
            q = r if r < p else r + 1
            g = int(rng.choice(k, p=pis[p]))
            h = int(rng.choice(k, p=pis[q]))
            y = int(rng.random() < block[g, h])
            records.append(DyadRecord(Dyad(names[p], names[q]), y, t))
        pos += config.records_per_interval
    stream = ObservationStream.from_records(records, horizon=t_max)
    truth = GroundTruth(
        memberships={names[i]: pis[i].copy() for i in range(n)},
        schedule=tuple((start, mat.copy()) for start, mat in matrices),
        alpha_gen=float(config.alpha_gen))
    return stream, truth


def save_ground_truth(truth: GroundTruth, path) -> None:
    payload = {
        "version": 1,
        "alpha_gen": truth.alpha_gen,
        "memberships": {str(node): [float(x) for x in pi]
                        for node, pi in truth.memberships.items()},
        "schedule": [{"start": int(start), "matrix": np.asarray(mat).tolist()}
                     for start, mat in truth.schedule],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def load_ground_truth(path) -> GroundTruth:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    return GroundTruth(
        memberships={node: np.asarray(pi) for node, pi in payload["memberships"].items()},
        schedule=tuple((entry["start"], np.asarray(entry["matrix"]))
                       for entry in payload["schedule"]),
        alpha_gen=payload["alpha_gen"])


def assortative_matrix(groups: int, diag: float = 0.8,
                       offdiag: float = 0.05) -> np.ndarray:
    """Block matrix with strong within-group linking."""
    m = np.full((groups, groups), float(offdiag))
    np.fill_diagonal(m, float(diag))
    return m


def permute_rows(matrix, shift: int = 1) -> np.ndarray:
    """Cyclic row shift; turns an assortative pattern into a shifted one,
    which changes every block's linking behaviour at a regime switch."""
    m = np.asarray(matrix)
    return np.roll(m, shift, axis=0)


# -- cross-validation splits --------------------------------------------------


@dataclass
class SplitMask:
    """Role of every dyad in the universe for one fold.

    Dyads outside the recorded universe count as training-eligible: only
    explicitly held-out pairs are ever masked.
    """

    roles: dict
    fold_index: int

    def role_of(self, dyad: Dyad) -> Role:
        return self.roles.get(dyad, Role.TRAIN)

    def is_train(self, dyad: Dyad) -> bool:
        return self.role_of(dyad) is Role.TRAIN

    def dyads_with_role(self, role: Role) -> List[Dyad]:
        return [d for d, r in self.roles.items() if r is role]


def cv_split(dyad_universe: Sequence[Dyad], folds: int = 5,
             validation_fraction: float = 0.5, rng=None) -> List[SplitMask]:
    """Shuffle the universe into equal folds; each fold becomes validation
    plus test for its mask while the remaining folds train."""
    universe = list(dyad_universe)
    if not universe:
        raise ValueError("dyad universe is empty")
    if folds < 2 or folds > len(universe):
        raise ValueError(f"folds must be in [2, {len(universe)}]")
    if not 0.0 <= validation_fraction <= 1.0:
        raise ValueError("validation_fraction must lie in [0, 1]")
    if rng is None:
        rng = np.random.default_rng(0)
    perm = rng.permutation(len(universe))
    shuffled = [universe[i] for i in perm]
    fold_slices = np.array_split(np.arange(len(universe)), folds)
    masks = []
    for f, indices in enumerate(fold_slices):
        held = [shuffled[i] for i in indices]
        n_val = int(round(validation_fraction * len(held)))
        roles = {d: Role.TRAIN for d in shuffled}
        for d in held[:n_val]:
            roles[d] = Role.VALIDATION
        for d in held[n_val:]:
            roles[d] = Role.TEST
        masks.append(SplitMask(roles=roles, fold_index=f))
    return masks


def save_mask(mask: SplitMask, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# node_from node_to role\n")
        fh.write(f"fold {mask.fold_index}\n")
        for dyad, role in mask.roles.items():
            fh.write(f"{dyad.initiator} {dyad.receiver} {role.value}\n")


def load_mask(path) -> SplitMask:
    roles = {}
    fold_index = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            parts = text.split()
            if parts[0] == "fold" and len(parts) == 2:
                fold_index = int(parts[1])
                continue
            if len(parts) != 3:
                raise StreamFormatError(
                    f"{path}:{lineno}: expected 'from to role', got {text!r}")
            src, dst, role = parts
            try:
                roles[Dyad(src, dst)] = Role(role)
            except ValueError as exc:
                raise StreamFormatError(f"{path}:{lineno}: {exc}") from exc
    if fold_index is None:
        raise StreamFormatError(f"{path}: missing 'fold <index>' line")
    return SplitMask(roles=roles, fold_index=fold_index)
