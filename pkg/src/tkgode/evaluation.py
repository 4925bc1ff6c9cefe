"""Ranking metrics under raw, time-unaware and time-aware filtering."""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from enum import Enum
from fractions import Fraction

import numpy as np

from .autodiff import Tape
from .data import inductive_subset
from .decoder import score_queries
from .encoder import EncoderConfig, GraphHistory, infer_long_horizon
from .exceptions import ConfigError, ContractError
from .model import ModelParams

__all__ = [
    "FilterSetting",
    "RankRecord",
    "MetricsReport",
    "FilterIndex",
    "rank_query",
    "build_filter_mask",
    "summarize",
    "evaluate",
    "evaluation_queries",
    "constant_scorer_report",
    "horizon_reports",
    "ablation_run",
    "write_metrics_csv",
    "write_ranks_jsonl",
    "METRIC_COLUMNS",
]

METRIC_COLUMNS = ("setting", "subset", "MRR", "hits1", "hits3", "hits10", "n_queries")


class FilterSetting(str, Enum):
    RAW = "raw"
    TIME_UNAWARE = "time_unaware"
    TIME_AWARE = "time_aware"

    @classmethod
    def parse(cls, value) -> FilterSetting:
        aliases = {"tu": cls.TIME_UNAWARE, "ta": cls.TIME_AWARE}
        if isinstance(value, cls):
            return value
        if value in aliases:
            return aliases[value]
        try:
            return cls(value)
        except ValueError:
            raise ConfigError(f"unknown filter setting {value!r}") from None


@dataclass(frozen=True)
class RankRecord:
    s: int
    r: int
    o: int
    t: int
    rank: Fraction
    setting: str

    def to_json(self) -> str:
        d = asdict(self)
        d["rank"] = float(self.rank)
        return json.dumps(d, sort_keys=True)


@dataclass(frozen=True)
class MetricsReport:
    mrr: float
    hits1: float
    hits3: float
    hits10: float
    n_queries: int
    setting: str
    subset: str = "full"

    def row(self) -> dict:
        return {"setting": self.setting, "subset": self.subset, "MRR": repr(self.mrr),
                "hits1": repr(self.hits1), "hits3": repr(self.hits3),
                "hits10": repr(self.hits10), "n_queries": self.n_queries}


def rank_query(scores, true_o: int, filter_mask=()) -> Fraction:
    """Rank of ``true_o`` among unmasked candidates, ties shared evenly.

    ``1 + #{higher} + #{tied} / 2`` over candidates other than ``true_o``
    that are not in ``filter_mask``.
    """
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    if true_o in filter_mask:
        raise ContractError("the true object must not be filtered")
    keep = np.ones(scores.size, dtype=bool)
    if len(filter_mask):
        keep[np.fromiter(filter_mask, dtype=np.int64)] = False
    keep[true_o] = False
    target = scores[true_o]
    cand = scores[keep]
    higher = int(np.count_nonzero(cand > target))
    tied = int(np.count_nonzero(cand == target))
    return Fraction(2 + 2 * higher + tied, 2)


class FilterIndex:
    """Lookup of true objects for ``(s, r)`` overall and per timestamp."""

    def __init__(self, events: np.ndarray):
        self.any_time: dict[tuple[int, int], set[int]] = {}
        self.same_time: dict[tuple[int, int, int], set[int]] = {}
        for s, r, o, t in np.asarray(events).tolist():
            self.any_time.setdefault((s, r), set()).add(o)
            self.same_time.setdefault((s, r, t), set()).add(o)

    def mask(self, s, r, o, t, setting) -> set[int]:
        setting = FilterSetting.parse(setting)
        if setting is FilterSetting.RAW:
            return set()
        if setting is FilterSetting.TIME_UNAWARE:
            known = self.any_time.get((s, r), set())
        else:
            known = self.same_time.get((s, r, t), set())
        return known - {o}


def build_filter_mask(query, store, setting) -> set[int]:
    """Entities to drop from the candidate list of ``query = (s, r, o, t)``.

    Time-unaware filtering removes every other object seen with ``(s, r)`` in
    any split; time-aware filtering only those true at the query's timestamp.
    """
    s, r, o, t = (int(x) for x in query)
    return FilterIndex(store.events).mask(s, r, o, t, setting)


def summarize(ranks, setting, subset: str = "full") -> MetricsReport:
    """MRR and Hits@1/3/10 from exact ranks."""
    setting = FilterSetting.parse(setting).value
    ranks = list(ranks)
    n = len(ranks)
    if n == 0:
        return MetricsReport(0.0, 0.0, 0.0, 0.0, 0, setting, subset)
    mrr = sum((1 / Fraction(r) for r in ranks), Fraction(0)) / n
    hits = [Fraction(sum(1 for r in ranks if r <= k), n) for k in (1, 3, 10)]
    return MetricsReport(float(mrr), *(float(h) for h in hits), n, setting, subset)


def evaluation_queries(history: GraphHistory, subset: str = "full") -> np.ndarray:
    """Augmented test quadruples ``(s, r, o, t)``, both directions per event."""
    store = history.store
    if subset == "inductive":
        raw = inductive_subset(store)
        n_rel = store.num_relations
        recip = np.column_stack([raw[:, 2], raw[:, 1] + n_rel, raw[:, 0], raw[:, 3]])
        both = np.empty((2 * len(raw), 4), dtype=np.int64)
        both[0::2] = raw
        both[1::2] = recip
        return both
    if subset == "full":
        return store.split("test")
    raise ConfigError(f"unknown subset {subset!r}")


def _parse_subset(subset):
    if isinstance(subset, tuple):
        kind, dt = subset
        return kind, int(dt)
    if isinstance(subset, str) and subset.startswith("horizon"):
        return "horizon", int(subset.split("_")[1])
    return subset, 1


def evaluate(history: GraphHistory, params: ModelParams, cfg: EncoderConfig,
             setting="time_aware", subset="full", scorer=None):
    """Rank every test query; returns ``(MetricsReport, [RankRecord])``.

    ``subset`` is ``"full"``, ``"inductive"`` or ``("horizon", dt)`` /
    ``"horizon_<dt>"``; horizon queries see snapshots up to ``t - dt`` only.
    ``scorer(H, s_batch, r_batch) -> scores`` overrides the decoder (used
    for baselines and oracles).
    """
    setting = FilterSetting.parse(setting)
    kind, delta_t = _parse_subset(subset)
    label = f"horizon_{delta_t}" if kind == "horizon" else kind
    queries = evaluation_queries(history, "full" if kind == "horizon" else kind)
    index = FilterIndex(history.store.events)
    records = []
    for t in np.unique(queries[:, 3]).tolist():
        batch = queries[queries[:, 3] == t]
        H = infer_long_horizon(history, params, cfg, t, delta_t)
        scores = _score(H, batch, params, history.num_entities, scorer)
        for (s, r, o, _), row in zip(batch.tolist(), scores):
            mask = index.mask(s, r, o, t, setting)
            records.append(RankRecord(s, r, o, t, rank_query(row, o, mask), setting.value))
    return summarize([rec.rank for rec in records], setting, label), records


def _score(H, batch, params, num_entities, scorer):
    if scorer is not None:
        return np.asarray(scorer(H, batch[:, 0], batch[:, 1]))
    tape = Tape()
    core = tape.leaf(params.arrays["decoder.core"]) if params.decoder == "tucker" else None
    return score_queries(tape.leaf(H), batch[:, 0], batch[:, 1], num_entities,
                         params.decoder, core).value


def constant_scorer_report(history: GraphHistory, setting="time_aware",
                           subset: str = "full") -> MetricsReport:
    """Metrics of a scorer that ties every candidate."""
    setting = FilterSetting.parse(setting)
    queries = evaluation_queries(history, subset)
    index = FilterIndex(history.store.events)
    flat = np.zeros(history.num_entities)
    ranks = [rank_query(flat, o, index.mask(s, r, o, t, setting))
             for s, r, o, t in queries.tolist()]
    return summarize(ranks, setting, subset)


def horizon_reports(history: GraphHistory, params: ModelParams, cfg: EncoderConfig,
                    setting="time_aware", horizons=range(1, 8)) -> list[MetricsReport]:
    return [evaluate(history, params, cfg, setting, ("horizon", dt))[0] for dt in horizons]


def ablation_run(history: GraphHistory, cfg, setting="time_aware"):
    """Train twice from the same seed, with ``cfg.jump_coef`` and with 0.

    Returns ``(report_with_jump, report_without)``.
    """
    from .training import train

    if not cfg.jump_coef > 0:
        raise ConfigError("ablation needs a positive jump coefficient")
    reports = []
    for arm in (cfg, cfg.replace(jump_coef=0.0)):
        params, _ = train(history, arm)
        reports.append(evaluate(history, params, arm.encoder(), setting)[0])
    return tuple(reports)


def write_metrics_csv(path, reports) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=METRIC_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for rep in reports:
            writer.writerow(rep.row())


def write_ranks_jsonl(path, records) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(rec.to_json() + "\n")
