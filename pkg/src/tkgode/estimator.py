"""scikit-learn style wrapper around training and ranking."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .autodiff import Tape
from .data import QuadrupleStore
from .decoder import score_queries
from .encoder import GraphHistory, infer_representation
from .evaluation import FilterIndex, rank_query, summarize
from .training import TrainConfig, train
from .validation import check_quadruples, check_queries

__all__ = ["TKGForecaster"]


class TKGForecaster(BaseEstimator):
    """Forecast missing objects ``(s, r, ?, t)`` from the graph history.

    ``fit`` takes a :class:`QuadrupleStore` or an ``(n, 4)`` integer array
    of ``(s, r, o, t)`` events (all treated as training data).  Queries
    at time ``t`` are answered from snapshots before ``t`` of the fitted
    history, so ``t`` may be at most one past its last timestamp.
    Relation ids ``>= num_relations`` address reciprocal relations,
    i.e. subject prediction.
    """

    def __init__(self, dim=32, history_length=4, n_layers=2, decoder="distmult",
                 jump_coef=0.1, learning_rate=1e-3, epochs=30, batch_size=256,
                 steps_per_interval=1, chebyshev_nodes=3,
                 backward_mode="interpolated_adjoint", time_span=0.01,
                 activation="tanh", seed=0):
        self.dim = dim
        self.history_length = history_length
        self.n_layers = n_layers
        self.decoder = decoder
        self.jump_coef = jump_coef
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.steps_per_interval = steps_per_interval
        self.chebyshev_nodes = chebyshev_nodes
        self.backward_mode = backward_mode
        self.time_span = time_span
        self.activation = activation
        self.seed = seed

    def _config(self) -> TrainConfig:
        return TrainConfig(**self.get_params())

    def fit(self, X, y=None):
        if isinstance(X, QuadrupleStore):
            store = X
        else:
            events = check_quadruples(X)
            T = int(events[:, 3].max()) + 1
            store = QuadrupleStore(events, int(events[:, [0, 2]].max()) + 1,
                                   int(events[:, 1].max()) + 1, T, T, T)
        cfg = self._config()
        self.history_ = GraphHistory(store, cfg.time_span)
        self.params_, self.loss_curve_ = train(self.history_, cfg)
        self.n_entities_ = self.history_.num_entities
        return self

    def decision_function(self, X) -> np.ndarray:
        """Scores of every candidate object, shape ``(n_queries, n_entities)``."""
        check_is_fitted(self, "params_")
        h = self.history_
        queries = check_queries(X, h.num_entities, h.relation_space, h.store.num_timestamps + 1)
        enc = self._config().encoder()
        out = np.empty((len(queries), h.num_entities))
        for t in np.unique(queries[:, 2]).tolist():
            rows = np.flatnonzero(queries[:, 2] == t)
            H = infer_representation(h, self.params_, enc, t)
            tape = Tape()
            core = self.params_.arrays.get("decoder.core")
            core = tape.leaf(core) if core is not None else None
            out[rows] = score_queries(tape.leaf(H), queries[rows, 0], queries[rows, 1],
                                      h.num_entities, self.params_.decoder, core).value
        return out

    def predict(self, X) -> np.ndarray:
        """Highest scoring object per query."""
        return np.argmax(self.decision_function(X), axis=1)

    def score(self, X, y=None) -> float:
        """Time-aware filtered MRR on ``(s, r, o, t)`` rows."""
        events = check_quadruples(X)
        scores = self.decision_function(events)
        index = FilterIndex(np.vstack([self.history_.store.events, events]))
        ranks = [rank_query(row, o, index.mask(s, r, o, t, "time_aware"))
                 for (s, r, o, t), row in zip(events.tolist(), scores)]
        return summarize(ranks, "time_aware").mrr
