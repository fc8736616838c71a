"""Negative sampling, the link-prediction objective and the per-event training loop."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from .bottleneck import importance_scores, kl_loss, masked_readout, pair_mlp, sample_mask
from .model import TGIBModel
from .numcore import AdamState, NoiseSource, Tensor, adam_step, log_sigmoid, reshape
from .tempgraph import Event

log = logging.getLogger(__name__)


class DivergenceError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 10
    learning_rate: float = 1e-3
    beta: float = 0.1
    num_negatives: int = 1
    seed: int = 0
    tau_anneal: float = 1.0          # multiply tau by this after each epoch (0.98 to anneal)
    literal_negative_term: bool = False
    val_max_events: int | None = 500
    log_every: int = 0               # extra step-level log records; 0 = epoch records only

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.num_negatives < 1:
            raise ValueError("num_negatives must be >= 1")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")

    @classmethod
    def from_dict(cls, data):
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in names})


PRESETS = {
    "desk": {"learning_rate": 1e-3, "epochs": 5, "val_max_events": 150},
    "paper": {"learning_rate": 1e-5, "epochs": 10},
}


def negative_node(g, pos, noise):
    """A node drawn uniformly from every node other than the event's two endpoints."""
    u, v = int(g.src[pos]), int(g.dst[pos])
    eligible = g.num_nodes - 2
    if eligible < 1:
        raise ValueError(f"no eligible negative node for event {int(g.event_ids[pos])}")
    k = int(noise.integers(0, eligible))
    lo, hi = sorted((u, v))
    if k >= lo:
        k += 1
    if k >= hi:
        k += 1
    return k


def negative_event(g, pos, noise):
    """(u_k, n_k, t_k, att_k) with n_k outside {u_k, v_k}."""
    e = g.event(pos)
    return Event(e.event_id, e.u, negative_node(g, pos, noise), e.t, e.att)


def event_logit(params, X, H):
    """q([X || H]) as a scalar Tensor."""
    H = H if H.ndim == 2 else reshape(H, (1, H.shape[0]))
    return reshape(pair_mlp(params, "q", X, H), ())


def classification_loss(pos_logit, neg_logits, literal=False):
    """-log sigmoid(pos) - sum_neg log sigmoid(-neg).

    ``literal=True`` drops the negation on the negative logits, which rewards
    scoring negatives high; kept only for comparison runs.
    """
    pos_logit = pos_logit if isinstance(pos_logit, Tensor) else Tensor(float(pos_logit))
    loss = log_sigmoid(pos_logit) * -1.0
    sign = 1.0 if literal else -1.0
    for nl in neg_logits:
        nl = nl if isinstance(nl, Tensor) else Tensor(float(nl))
        loss = loss - log_sigmoid(nl * sign)
    return loss


def total_loss(model, g, pos, cfg, noise, neg_nodes=None, cg=None, training=True):
    """L_cls + beta * L_MI for the event at ``pos``.

    Returns ``(loss, parts)``; ``parts`` carries the two terms, the logits and
    the positive/negative importance scores. Draw order from ``noise``:
    negatives, encoder dropout, positive mask, negative masks.
    """
    mcfg = model.cfg
    if neg_nodes is None:
        neg_nodes = [negative_node(g, pos, noise) for _ in range(cfg.num_negatives)]
    batch = model.event_batch(g, pos, neg_nodes, cg=cg, training=training, noise=noise)
    p = model.params

    def branch(X):
        scores = importance_scores(p, X, batch.Z, mcfg.r, mcfg.tau)
        if len(scores):
            alpha = sample_mask(scores, "relaxed", noise).alpha
        else:
            alpha = Tensor(np.zeros(0))
        H = masked_readout(batch.Z, alpha, mcfg.readout)
        return event_logit(p, X, H), scores

    pos_logit, pos_scores = branch(batch.X)
    negs = [branch(Xn) for Xn in batch.X_neg]
    loss_cls = classification_loss(pos_logit, [nl for nl, _ in negs], cfg.literal_negative_term)
    loss_mi = kl_loss(pos_scores, mcfg.r)
    for _, s in negs:
        loss_mi = loss_mi + kl_loss(s, mcfg.r)
    total = loss_cls + loss_mi * cfg.beta
    parts = {
        "loss_cls": loss_cls, "loss_mi": loss_mi,
        "pos_logit": pos_logit, "neg_logits": [nl for nl, _ in negs],
        "pos_scores": pos_scores, "neg_scores": [s for _, s in negs],
        "neg_nodes": list(neg_nodes), "cg": batch.cg,
    }
    return total, parts


def history_graph(g, split):
    """Events visible while validating: everything before the validation cut-off."""
    return g.restrict(np.flatnonzero(g.t < split.val_end))


def train(g, split, model_cfg, cfg, log_path=None, checkpoint_path=None, validate=True,
          progress=None):
    """Algorithm-1 loop: one Adam step per chronological training event.

    Returns ``(model, records)``. The returned model holds the parameters of
    the epoch with the best validation AP (the last epoch when not validating).
    """
    from .evaluation import link_scores, average_precision

    if len(split.train) == 0:
        raise ValueError("empty training split")
    train_g = g.restrict(split.train)
    model = TGIBModel(model_cfg, seed=cfg.seed)
    state = AdamState(learning_rate=cfg.learning_rate)
    noise = NoiseSource(cfg.seed)
    for prm in model.params.values():
        prm.zero_grad()

    val_g = history_graph(g, split) if validate and len(split.val) else None
    val_pos = None
    if val_g is not None:
        val_ids = g.event_ids[split.val]
        val_pos = np.searchsorted(val_g.event_ids, val_ids)
        if cfg.val_max_events and len(val_pos) > cfg.val_max_events:
            pick = np.random.default_rng(cfg.seed).choice(len(val_pos), cfg.val_max_events, replace=False)
            val_pos = val_pos[np.sort(pick)]

    records, best_ap, best_params = [], -math.inf, None
    log_fh = open(log_path, "w") if log_path else None
    step = 0
    try:
        for epoch in range(1, cfg.epochs + 1):
            sum_cls = sum_mi = 0.0
            for pos in range(len(train_g)):
                loss, parts = total_loss(model, train_g, pos, cfg, noise)
                value = loss.item()
                if not np.isfinite(value):
                    raise DivergenceError(f"loss became {value} at epoch {epoch}, step {step}")
                loss.backward()
                adam_step(model.params, state)
                step += 1
                sum_cls += parts["loss_cls"].item()
                sum_mi += parts["loss_mi"].item()
                if cfg.log_every and step % cfg.log_every == 0:
                    rec = {"epoch": epoch, "step": step, "loss_cls": parts["loss_cls"].item(),
                           "loss_mi": parts["loss_mi"].item(), "val_ap": None}
                    records.append(rec)
                    if log_fh:
                        log_fh.write(json.dumps(rec) + "\n")
                if progress:
                    progress(epoch, step)

            val_ap = None
            if val_pos is not None and len(val_pos):
                scores, labels = link_scores(model, val_g, val_pos, NoiseSource(cfg.seed + 1))
                val_ap = average_precision(scores, labels)
            n = max(1, len(train_g))
            rec = {"epoch": epoch, "step": step, "loss_cls": sum_cls / n, "loss_mi": sum_mi / n,
                   "val_ap": val_ap}
            records.append(rec)
            if log_fh:
                log_fh.write(json.dumps(rec) + "\n")
                log_fh.flush()
            log.info("epoch %d: loss_cls=%.4f loss_mi=%.4f val_ap=%s", epoch, rec["loss_cls"],
                     rec["loss_mi"], val_ap)

            score = val_ap if val_ap is not None else epoch
            if score > best_ap:
                best_ap = score
                best_params = {k: p.data.copy() for k, p in model.params.items()}
                if checkpoint_path:
                    model.save(checkpoint_path, {"train": asdict(cfg), "epoch": epoch})
            model.cfg.tau *= cfg.tau_anneal
    finally:
        if log_fh:
            log_fh.close()

    for k, arr in best_params.items():
        model.params[k].data = arr
    return model, records
