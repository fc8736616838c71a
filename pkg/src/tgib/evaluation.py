"""Link-prediction AP and explanation quality (top-k match rate over a sparsity sweep)."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .numcore import NoiseSource
from .trainer import negative_node

SWEEP_MAX = 0.3
SWEEP_STEP = 0.002


@dataclass(frozen=True)
class RankedPrediction:
    score: float
    label: int


@dataclass
class ExplanationResult:
    target_event_id: int
    ranked_candidates: list          # [(event_id, p)], p descending, event_id tie-break
    sparsity_used: float
    k: int
    prediction_match: bool
    full_logit: float = 0.0
    explanation_logit: float = 0.0

    @property
    def explanation_ids(self):
        return [eid for eid, _ in self.ranked_candidates[:self.k]]


@dataclass
class SweepResult:
    levels: np.ndarray
    match_rate: np.ndarray
    auc: float                       # area / sweep span, in [0, 1]
    raw_area: float
    per_target: np.ndarray = field(repr=False, default=None)


def average_precision(scores, labels=None):
    """Mean of precision@rank over the ranks of positive items.

    Accepts parallel ``scores``/``labels`` sequences or a list of
    :class:`RankedPrediction`. Ties keep input order.
    """
    if labels is None:
        labels = [p.label for p in scores]
        scores = [p.score for p in scores]
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    if labels.sum() == 0:
        raise ValueError("average precision needs at least one positive label")
    order = np.argsort(-scores, kind="stable")
    hits = labels[order]
    ranks = np.flatnonzero(hits) + 1
    return float(np.mean(np.cumsum(hits)[ranks - 1] / ranks))


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x)))


def reference_alpha(p, mode="expected"):
    """Mask the model's own prediction is read under: ``expected`` (alpha = p),
    ``hard`` (p > 0.5) or ``full`` (every candidate kept)."""
    if mode == "expected":
        return p
    if mode == "hard":
        return (p > 0.5).astype(np.float64)
    if mode == "full":
        return np.ones_like(p)
    raise ValueError(f"unknown reference mode {mode!r}")


@dataclass
class EventView:
    X: np.ndarray           # (E,)
    X_neg: list
    Z: np.ndarray           # (C, E)
    p: np.ndarray           # importance of each candidate for the positive
    candidate_ids: np.ndarray
    target_event_id: int


def event_view(model, g, pos, neg_nodes=()):
    """Deterministic (eval-mode) representations and importance scores for one event."""
    batch = model.event_batch(g, pos, neg_nodes, training=False)
    X = batch.X.data[0]
    Z = batch.Z.data
    p = _sigmoid(model.mlp_numpy("g", X, Z)) if len(Z) else np.zeros(0)
    return EventView(X, [x.data[0] for x in batch.X_neg], Z, p,
                     g.event_ids[batch.cg.positions], int(g.event_ids[pos]))


def logit_under(model, X, Z, alpha):
    """q logits for one representation ``X`` under each row of ``alpha`` (M, C)."""
    H = model.readout_numpy(Z, alpha)
    return model.mlp_numpy("q", X, H)


def event_logit_eval(model, X, Z, p_of_X, reference="expected"):
    return float(logit_under(model, X, Z, reference_alpha(p_of_X, reference)[None, :])[0])


def link_scores(model, g, positions, noise, reference="expected", negatives_per_event=1):
    """Scores and labels for each positive event and its sampled negatives."""
    scores, labels = [], []
    for pos in positions:
        negs = [negative_node(g, pos, noise) for _ in range(negatives_per_event)]
        view = event_view(model, g, pos, negs)
        scores.append(event_logit_eval(model, view.X, view.Z, view.p, reference))
        labels.append(1)
        for Xn in view.X_neg:
            p_neg = _sigmoid(model.mlp_numpy("g", Xn, view.Z)) if len(view.Z) else np.zeros(0)
            scores.append(event_logit_eval(model, Xn, view.Z, p_neg, reference))
            labels.append(0)
    return np.array(scores), np.array(labels)


def link_eval(model, g, split, mode="transductive", seeds=(0, 1, 2, 3, 4), reference="expected"):
    """AP over test events, one negative per positive, repeated per seed.

    Returns ``(mean, std, per_seed)``. The positive side is computed once; each
    seed changes which negatives are drawn and how tied scores are ordered.
    """
    test = np.asarray(split.test)
    if len(test) == 0:
        raise ValueError("empty test split")
    if mode == "inductive":
        if not split.inductive:
            raise ValueError("inductive evaluation needs an inductive split")
        masked = np.array(sorted(split.masked_nodes))
        touches = np.isin(g.src[test], masked) | np.isin(g.dst[test], masked)
        if not np.all(touches):
            raise AssertionError("inductive test set contains events without a held-out node")
    elif mode != "transductive":
        raise ValueError(f"unknown mode {mode!r}")

    streams = [NoiseSource(s) for s in seeds]
    pos_scores = np.zeros(len(test))
    neg_scores = np.zeros((len(seeds), len(test)))
    for i, pos in enumerate(test):
        negs = [negative_node(g, pos, s) for s in streams]
        view = event_view(model, g, pos, negs)
        pos_scores[i] = event_logit_eval(model, view.X, view.Z, view.p, reference)
        for j, Xn in enumerate(view.X_neg):
            p_neg = _sigmoid(model.mlp_numpy("g", Xn, view.Z)) if len(view.Z) else np.zeros(0)
            neg_scores[j, i] = event_logit_eval(model, Xn, view.Z, p_neg, reference)
    labels = np.concatenate([np.ones(len(test)), np.zeros(len(test))])
    aps = np.empty(len(seeds))
    for j, seed in enumerate(seeds):
        # a seeded shuffle of the pooled list makes score ties fall in random order
        order = np.random.default_rng(seed).permutation(len(labels))
        aps[j] = average_precision(np.concatenate([pos_scores, neg_scores[j]])[order], labels[order])
    return float(aps.mean()), float(aps.std()), aps


def top_k_count(sparsity, total):
    """ceil(sparsity * total), robust to float noise such as 0.1 * 50."""
    if not 0.0 <= sparsity <= 1.0:
        raise ValueError("sparsity must lie in [0, 1]")
    return int(math.ceil(round(sparsity * total, 9)))


def rank_candidates(p, candidate_ids):
    """Candidate order: p descending, ties by ascending event id."""
    return np.lexsort((candidate_ids, -p))


def explanation_logits(model, view, order, ks):
    """Logits under the hard mask keeping the top-``k`` candidates of ``order``, one per ``k``."""
    ks = np.asarray(ks, dtype=np.int64)
    count = len(view.p)
    ranks = np.empty(count, dtype=np.int64)
    ranks[order] = np.arange(count)
    alphas = (ranks[None, :] < ks[:, None]).astype(np.float64)
    return logit_under(model, view.X, view.Z, alphas)


def extract_explanation(model, g, pos, sparsity, reference="expected", view=None):
    """Top-ceil(sparsity * |G^k|) candidates by importance, and whether the
    prediction from those alone agrees in sign with the reference prediction."""
    view = view or event_view(model, g, pos)
    k = top_k_count(sparsity, len(view.p))
    order = rank_candidates(view.p, view.candidate_ids)
    full_logit = event_logit_eval(model, view.X, view.Z, view.p, reference)
    expl_logit = explanation_logits(model, view, order, [k])[0]
    ranked = [(int(view.candidate_ids[i]), float(view.p[i])) for i in order]
    return ExplanationResult(view.target_event_id, ranked, sparsity, k,
                             bool((full_logit > 0) == (expl_logit > 0)),
                             float(full_logit), float(expl_logit))


def sweep_levels(max_sparsity=SWEEP_MAX, step=SWEEP_STEP):
    count = int(round(max_sparsity / step)) + 1
    return np.round(np.arange(count) * step, 10)


def sparsity_sweep(model, g, positions, levels=None, ranker=None, reference="expected", seed=0):
    """Match rate at each sparsity level, averaged over target events.

    ``ranker`` picks the candidate order: ``None`` uses the model's importance
    scores, ``"random"`` a seeded uniform permutation per target, or a callable
    ``(view) -> order``. AUC is the trapezoidal area divided by the level span.
    """
    levels = sweep_levels() if levels is None else np.asarray(levels, dtype=np.float64)
    rng = np.random.default_rng(seed)
    per_target = np.zeros((len(positions), len(levels)))
    for row, pos in enumerate(positions):
        view = event_view(model, g, pos)
        count = len(view.p)
        if ranker is None:
            order = rank_candidates(view.p, view.candidate_ids)
        elif ranker == "random":
            order = rng.permutation(count)
        else:
            order = np.asarray(ranker(view))
        ks = [top_k_count(s, count) for s in levels]
        full = event_logit_eval(model, view.X, view.Z, view.p, reference)
        logits = explanation_logits(model, view, order, ks)
        per_target[row] = (logits > 0) == (full > 0)
    rate = per_target.mean(axis=0) if len(positions) else np.zeros(len(levels))
    span = levels[-1] - levels[0] if len(levels) > 1 else 1.0
    area = float(np.trapezoid(rate, levels)) if len(levels) > 1 else float(rate[0])
    return SweepResult(levels, rate, area / span, area, per_target)


def explanation_records(result):
    """Dump rows for one :class:`ExplanationResult`."""
    return [{"target_event_id": result.target_event_id, "candidate_event_id": eid,
             "p": p, "rank": rank + 1} for rank, (eid, p) in enumerate(result.ranked_candidates)]


def write_curve_csv(path, sweep):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sparsity", "match_rate"])
        for s, m in zip(sweep.levels, sweep.match_rate):
            w.writerow([f"{s:.3f}", repr(float(m))])


def write_metrics(path, rows):
    """Line-delimited {metric, mean, std, seeds} records."""
    with open(path, "w") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")
