"""Quadruple datasets, per-timestamp snapshots, jump tensors and time maps.

Events are integer quadruples ``(subject, relation, object, timestamp)``.
A :class:`QuadrupleStore` keeps them sorted by time together with the
train/valid/test boundaries, which are timestamp indices: training covers
``t < train_end``, validation ``train_end <= t < valid_end`` and test the rest.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, replace
from functools import reduce

import numpy as np
import scipy.sparse as sp

from .autodiff import mean_operator
from .exceptions import ConfigError, ContractError, ParseError

__all__ = [
    "QuadrupleStore",
    "Snapshot",
    "JumpTensor",
    "TimeMap",
    "parse_quadruples",
    "read_quadruple_lines",
    "load_dataset",
    "write_quadruples",
    "augment_reciprocal",
    "strip_reciprocal",
    "build_snapshots",
    "build_jump_tensor",
    "build_jump_tensors",
    "make_time_map",
    "inductive_subset",
    "generate_synthetic_tkg",
    "split_by_time",
    "PATTERNS",
]

PATTERNS = ("periodic", "jump_consequence", "random")


@dataclass(frozen=True, eq=False)
class QuadrupleStore:
    """All events of a temporal knowledge graph.

    ``num_relations`` is always the pre-augmentation count N_r; after
    :func:`augment_reciprocal` the relation space is ``2 * num_relations``
    and ``augmented`` is set.
    """

    events: np.ndarray
    num_entities: int
    num_relations: int
    num_timestamps: int
    train_end: int
    valid_end: int
    augmented: bool = False
    granularity: str = "unit"
    entity_names: tuple[str, ...] | None = None
    relation_names: tuple[str, ...] | None = None

    def __post_init__(self):
        ev = np.asarray(self.events, dtype=np.int64).reshape(-1, 4)
        order = np.argsort(ev[:, 3], kind="stable")
        ev = ev[order]
        ev.setflags(write=False)
        object.__setattr__(self, "events", ev)
        n_rel = self.relation_space
        if ev.size:
            if ev[:, [0, 2]].min() < 0 or ev[:, [0, 2]].max() >= self.num_entities:
                raise ContractError("entity id outside [0, num_entities)")
            if ev[:, 1].min() < 0 or ev[:, 1].max() >= n_rel:
                raise ContractError("relation id outside the relation space")
            if ev[:, 3].min() < 0 or ev[:, 3].max() >= self.num_timestamps:
                raise ContractError("timestamp index outside [0, num_timestamps)")
        if not 0 <= self.train_end <= self.valid_end <= self.num_timestamps:
            raise ContractError("split boundaries must satisfy 0 <= train <= valid <= T")

    @property
    def relation_space(self) -> int:
        return 2 * self.num_relations if self.augmented else self.num_relations

    def __len__(self):
        return len(self.events)

    def split(self, name: str) -> np.ndarray:
        t = self.events[:, 3]
        if name == "train":
            mask = t < self.train_end
        elif name == "valid":
            mask = (t >= self.train_end) & (t < self.valid_end)
        elif name == "test":
            mask = t >= self.valid_end
        elif name == "all":
            return self.events
        else:
            raise ValueError(f"unknown split {name!r}")
        return self.events[mask]

    def at(self, t: int) -> np.ndarray:
        """Events with timestamp index ``t``."""
        lo, hi = np.searchsorted(self.events[:, 3], [t, t + 1])
        return self.events[lo:hi]


@dataclass(frozen=True, eq=False)
class Snapshot:
    """Edges active at one timestamp, reciprocal edges included."""

    t: int
    edges: np.ndarray
    num_entities: int
    relation_space: int
    _operator: sp.csr_matrix | None = field(default=None, repr=False)

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 3)
        edges.setflags(write=False)
        object.__setattr__(self, "edges", edges)

    def __len__(self):
        return len(self.edges)

    @property
    def in_neighbors(self) -> dict[int, list[tuple[int, int]]]:
        """``o -> [(s, r), ...]`` with multiplicity."""
        out: dict[int, list[tuple[int, int]]] = {}
        for s, r, o in self.edges.tolist():
            out.setdefault(o, []).append((s, r))
        return out

    def triplets(self) -> set[tuple[int, int, int]]:
        return set(map(tuple, self.edges.tolist()))

    def mean_operator(self) -> sp.csr_matrix:
        """Averaging operator over each object's in-neighbourhood."""
        if self._operator is None:
            op = mean_operator(self.edges[:, 2], self.num_entities)
            object.__setattr__(self, "_operator", op)
        return self._operator

    def poisoned(self, extra_edges) -> Snapshot:
        """Copy with additional edges appended (used by leakage tests)."""
        edges = np.concatenate([self.edges, np.asarray(extra_edges).reshape(-1, 3)])
        return Snapshot(self.t, edges, self.num_entities, self.relation_space)


@dataclass(frozen=True, eq=False)
class JumpTensor:
    """Sparse ``(s, r, o) -> +1/-1`` record of triplets appearing or vanishing."""

    t: int
    edges: np.ndarray
    signs: np.ndarray
    num_entities: int
    relation_space: int
    _operator: sp.csr_matrix | None = field(default=None, repr=False)

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 3)
        signs = np.asarray(self.signs, dtype=np.float64).reshape(-1)
        edges.setflags(write=False)
        signs.setflags(write=False)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "signs", signs)

    def __len__(self):
        return len(self.edges)

    @property
    def deltas(self) -> dict[tuple[int, int, int], int]:
        return {tuple(e): int(s) for e, s in zip(self.edges.tolist(), self.signs)}

    def mean_operator(self) -> sp.csr_matrix:
        """Signed averaging operator over each object's jump neighbourhood."""
        if self._operator is None:
            op = mean_operator(self.edges[:, 2], self.num_entities, self.signs)
            object.__setattr__(self, "_operator", op)
        return self._operator

    @classmethod
    def empty(cls, t, num_entities, relation_space):
        return cls(t, np.zeros((0, 3), np.int64), np.zeros(0), num_entities, relation_space)


@dataclass(frozen=True)
class TimeMap:
    """Affine map from timestamp index to normalized integration time."""

    t_min: int
    t_max: int
    span: float = 0.01

    def __post_init__(self):
        if self.t_max <= self.t_min:
            raise ContractError("time map needs at least two distinct timestamps")
        if not self.span > 0:
            raise ConfigError("time span must be positive")

    @property
    def unit(self) -> float:
        """Normalized length of one timestamp step."""
        return self.span / (self.t_max - self.t_min)

    def __call__(self, t):
        if np.isscalar(t):
            if t == self.t_max:
                return self.span
            return self.span * (float(t) - self.t_min) / (self.t_max - self.t_min)
        return self.span * (np.asarray(t, dtype=np.float64) - self.t_min) / (
            self.t_max - self.t_min
        )


# --- parsing -------------------------------------------------------------


def read_quadruple_lines(path) -> np.ndarray:
    """Raw integer quadruples from a tab-separated file, ids untouched."""
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            fields = stripped.split("\t")
            if len(fields) < 4:
                raise ParseError(f"expected 4 tab-separated fields, got {len(fields)}", lineno)
            try:
                quad = [int(f) for f in fields[:4]]
            except ValueError:
                raise ParseError(f"non-integer field in {stripped!r}", lineno) from None
            if min(quad) < 0:
                raise ParseError("negative id", lineno)
            rows.append(quad)
    return np.array(rows, dtype=np.int64).reshape(-1, 4)


def _remap_time(raw_t: np.ndarray) -> tuple[np.ndarray, int]:
    uniq = np.unique(raw_t)
    base = uniq[0]
    step = reduce(math.gcd, (int(x - base) for x in uniq[1:]), 0) or 1
    idx = (raw_t - base) // step
    return idx, int(idx.max()) + 1


def _dense_ids(values: np.ndarray) -> tuple[np.ndarray, int]:
    uniq, inv = np.unique(values, return_inverse=True)
    return inv.reshape(values.shape), len(uniq)


def _store_from_raw(parts, granularity="unit") -> QuadrupleStore:
    raw = np.concatenate(parts) if parts else np.zeros((0, 4), np.int64)
    if len(raw) == 0:
        raise ParseError("no events")
    ents, n_ent = _dense_ids(raw[:, [0, 2]])
    rels, n_rel = _dense_ids(raw[:, 1])
    times, n_t = _remap_time(raw[:, 3])
    events = np.column_stack([ents[:, 0], rels, ents[:, 1], times])
    if len(parts) == 1:
        train_end = valid_end = n_t
    else:
        bounds = np.cumsum([0] + [len(p) for p in parts])
        split_t = [events[lo:hi, 3] for lo, hi in zip(bounds[:-1], bounds[1:])]
        train_t, valid_t, test_t = (split_t + [np.zeros(0, np.int64)])[:3]
        valid_end = int(test_t.min()) if len(test_t) else n_t
        train_end = int(valid_t.min()) if len(valid_t) else valid_end
        if len(train_t) and train_t.max() >= train_end:
            raise ParseError("training timestamps overlap later splits")
        if len(valid_t) and valid_t.max() >= valid_end:
            raise ParseError("validation timestamps overlap the test split")
    return QuadrupleStore(events, n_ent, n_rel, n_t, train_end, valid_end,
                          granularity=granularity)


def parse_quadruples(path, format: str = "tsv") -> QuadrupleStore:
    """Read one tab-separated quadruple file into a store.

    Columns beyond the fourth are ignored.  Entity, relation and timestamp
    ids are remapped to dense 0-based ranges preserving order; timestamps
    are divided by their common spacing so gaps become empty snapshots.
    All events land in the training split.
    """
    if format != "tsv":
        raise ConfigError(f"unsupported format {format!r}")
    return _store_from_raw([read_quadruple_lines(path)])


def load_dataset(directory) -> QuadrupleStore:
    """Load ``train.txt``, ``valid.txt`` (optional) and ``test.txt`` jointly."""
    parts = []
    for name in ("train.txt", "valid.txt", "test.txt"):
        path = os.path.join(directory, name)
        if name == "valid.txt" and not os.path.exists(path):
            parts.append(np.zeros((0, 4), np.int64))
            continue
        if not os.path.exists(path):
            raise FileNotFoundError(path)
        parts.append(read_quadruple_lines(path))
    store = _store_from_raw(parts)
    ent_names = _read_names(os.path.join(directory, "entity2id.txt"))
    rel_names = _read_names(os.path.join(directory, "relation2id.txt"))
    if ent_names or rel_names:
        store = replace(store, entity_names=ent_names, relation_names=rel_names)
    return store


def _read_names(path):
    if not os.path.exists(path):
        return None
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            parts = line.rstrip("\n").split("\t")
            if len(parts) >= 2 and parts[1].strip().lstrip("-").isdigit():
                pairs.append((int(parts[1]), parts[0]))
    pairs.sort()
    return tuple(name for _, name in pairs)


def write_quadruples(path, events) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for s, r, o, t in np.asarray(events, dtype=np.int64).reshape(-1, 4).tolist():
            fh.write(f"{s}\t{r}\t{o}\t{t}\n")


# --- transforms ----------------------------------------------------------


def augment_reciprocal(store: QuadrupleStore) -> QuadrupleStore:
    """Add ``(o, r + N_r, s, t)`` for every event ``(s, r, o, t)``."""
    if store.augmented:
        raise ContractError("store is already augmented")
    ev = store.events
    recip = np.column_stack([ev[:, 2], ev[:, 1] + store.num_relations, ev[:, 0], ev[:, 3]])
    both = np.empty((2 * len(ev), 4), dtype=np.int64)
    both[0::2] = ev
    both[1::2] = recip
    return replace(store, events=both, augmented=True)


def strip_reciprocal(store: QuadrupleStore) -> QuadrupleStore:
    if not store.augmented:
        raise ContractError("store is not augmented")
    keep = store.events[store.events[:, 1] < store.num_relations]
    return replace(store, events=keep, augmented=False)


def build_snapshots(store: QuadrupleStore) -> list[Snapshot]:
    """One snapshot per timestamp index, empty ones included."""
    if not store.augmented:
        raise ContractError("build snapshots from an augmented store")
    snaps = []
    for t in range(store.num_timestamps):
        snaps.append(Snapshot(t, store.at(t)[:, :3], store.num_entities, store.relation_space))
    return snaps


def build_jump_tensor(g_t: Snapshot, g_t1: Snapshot) -> JumpTensor:
    """Signed difference between the triplet sets of consecutive snapshots."""
    if (g_t.num_entities, g_t.relation_space) != (g_t1.num_entities, g_t1.relation_space):
        raise ContractError("snapshots span different entity/relation spaces")
    before = g_t.triplets()
    after = g_t1.triplets()
    appeared = sorted(after - before)
    vanished = sorted(before - after)
    edges = np.array(appeared + vanished, dtype=np.int64).reshape(-1, 3)
    signs = np.r_[np.ones(len(appeared)), -np.ones(len(vanished))]
    return JumpTensor(g_t.t, edges, signs, g_t.num_entities, g_t.relation_space)


def build_jump_tensors(snapshots: list[Snapshot]) -> list[JumpTensor]:
    """``out[t]`` is the jump tensor from ``t`` to ``t + 1``."""
    return [build_jump_tensor(a, b) for a, b in zip(snapshots, snapshots[1:])]


def make_time_map(store: QuadrupleStore, span: float = 0.01) -> TimeMap:
    if store.num_timestamps < 2:
        raise ContractError("time normalization needs at least two timestamps")
    return TimeMap(0, store.num_timestamps - 1, span)


def inductive_subset(store: QuadrupleStore) -> np.ndarray:
    """Test quadruples whose subject or object never occurs in training."""
    base = strip_reciprocal(store) if store.augmented else store
    train = base.split("train")
    seen = np.zeros(base.num_entities, dtype=bool)
    seen[train[:, 0]] = True
    seen[train[:, 2]] = True
    test = base.split("test")
    mask = ~seen[test[:, 0]] | ~seen[test[:, 2]]
    return test[mask]


# --- synthetic data -------------------------------------------------------


def split_by_time(num_timestamps: int, fractions=(0.8, 0.1)) -> tuple[int, int]:
    """Timestamp boundaries of an 80/10/10 style split."""
    train_end = int(math.floor(fractions[0] * num_timestamps + 1e-9))
    valid_end = int(math.floor((fractions[0] + fractions[1]) * num_timestamps + 1e-9))
    return train_end, valid_end


def generate_synthetic_tkg(
    num_entities: int,
    num_relations: int,
    T: int,
    pattern_spec="periodic",
    seed: int = 0,
) -> QuadrupleStore:
    """Small temporal graph with a known generating rule.

    ``pattern_spec`` is a pattern name or a dict with a ``"pattern"`` key
    plus options:

    periodic
        ``n_facts`` triplets (default ``num_entities``), each with a distinct
        ``(s, r)`` pair when possible, recurring every ``period`` (default 2)
        steps from a random phase (``random_phase=False`` pins phase 0).
    jump_consequence
        Relations are split into trigger/consequence pairs.  At each step
        ``n_triggers`` (default ``num_entities // 4``) fresh trigger triplets
        ``(x, r_a, y)`` appear; each is followed by ``(x, r_b, y)`` one step
        later.
    random
        ``n_per_step`` (default ``num_entities``) uniformly random triplets per step.
    """
    if min(num_entities, num_relations, T) < 1:
        raise ConfigError("entity, relation and timestamp counts must be >= 1")
    spec = {"pattern": pattern_spec} if isinstance(pattern_spec, str) else dict(pattern_spec)
    name = spec.pop("pattern", None)
    if name not in PATTERNS:
        raise ConfigError(f"unknown pattern {name!r}; expected one of {PATTERNS}")
    rng = np.random.default_rng(seed)
    if name == "periodic":
        events = _periodic(rng, num_entities, num_relations, T, **spec)
    elif name == "jump_consequence":
        events = _jump_consequence(rng, num_entities, num_relations, T, **spec)
    else:
        events = _random(rng, num_entities, num_relations, T, **spec)
    train_end, valid_end = split_by_time(T)
    return QuadrupleStore(events, num_entities, num_relations, T, train_end, valid_end)


def _periodic(rng, n_ent, n_rel, T, period=2, n_facts=None, random_phase=True):
    if period < 1:
        raise ConfigError("period must be >= 1")
    n_facts = n_ent if n_facts is None else n_facts
    pairs = np.array([(s, r) for s in range(n_ent) for r in range(n_rel)])
    pick = rng.permutation(len(pairs))
    if n_facts > len(pairs):
        pick = np.r_[pick, rng.integers(0, len(pairs), n_facts - len(pairs))]
    facts = []
    for i in pick[:n_facts]:
        s, r = pairs[i]
        o = rng.integers(0, n_ent - 1) if n_ent > 1 else 0
        if n_ent > 1 and o >= s:
            o += 1
        phase = int(rng.integers(0, period)) if random_phase else 0
        facts.append((int(s), int(r), int(o), phase))
    events = [(s, r, o, t) for s, r, o, ph in facts for t in range(ph, T, period)]
    return np.array(events, dtype=np.int64).reshape(-1, 4)


def _jump_consequence(rng, n_ent, n_rel, T, n_triggers=None):
    if n_rel < 2 or n_ent < 2:
        raise ConfigError("jump_consequence needs >= 2 entities and >= 2 relations")
    n_triggers = max(1, n_ent // 4) if n_triggers is None else n_triggers
    n_pairs = n_rel // 2
    events = []
    for t in range(T - 1):
        for _ in range(n_triggers):
            x, y = rng.choice(n_ent, size=2, replace=False)
            k = int(rng.integers(0, n_pairs))
            events.append((int(x), 2 * k, int(y), t))
            events.append((int(x), 2 * k + 1, int(y), t + 1))
    return np.array(sorted(set(events)), dtype=np.int64).reshape(-1, 4)


def _random(rng, n_ent, n_rel, T, n_per_step=None):
    n_per_step = n_ent if n_per_step is None else n_per_step
    s = rng.integers(0, n_ent, (T, n_per_step))
    r = rng.integers(0, n_rel, (T, n_per_step))
    o = rng.integers(0, n_ent, (T, n_per_step))
    t = np.repeat(np.arange(T), n_per_step).reshape(T, n_per_step)
    ev = np.stack([s, r, o, t], axis=-1).reshape(-1, 4)
    return np.unique(ev, axis=0)
