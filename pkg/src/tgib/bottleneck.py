"""Event representations, importance scores, relaxed Bernoulli masks, readout, KL.

The importance of candidate ``e_j`` for target ``e_k`` is ``sigmoid(g([X_k || Z_j]))``.
Masks are drawn with the logistic (binary Concrete) relaxation

    alpha_j = sigmoid((logit p_j + log u - log(1 - u)) / tau),   u ~ U(0, 1)

so that P(alpha_j > 1/2) = p_j at every temperature and the samples harden to
Bernoulli(p_j) draws as tau -> 0. The mean of alpha_j equals p_j only at
p_j = 1/2 or in that limit (at tau = 1, p = 0.7 gives E[alpha] ~= 0.638). The
compression term is the KL divergence of the per-candidate Bernoulli(p_j) from
a Bernoulli(r) prior.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .encoder import glorot
from .numcore import (
    ConstantNoise,
    Tensor,
    broadcast_to,
    clip,
    concat,
    log_sigmoid,
    matmul,
    mul,
    relu,
    reshape,
    sigmoid,
    straight_through,
    tsum,
)

P_CLAMP = 1e-6
LOGIT_CLAMP = float(np.log((1 - P_CLAMP) / P_CLAMP))


@dataclass
class ImportanceScores:
    logits: Tensor          # g output, shape (C,)
    r: float = 0.5
    tau: float = 1.0

    @property
    def p(self):
        return sigmoid(self.logits)

    def __len__(self):
        return self.logits.shape[0]


@dataclass
class MaskSample:
    alpha: Tensor
    hard: bool = False
    frozen_noise: np.ndarray | None = None


def target_rep(h_u, h_v, phi_zero, att):
    """[h_u || h_v || Phi(0) || att] for the target (or a negative) event; 1-D pieces."""
    return concat([h_u, h_v, phi_zero, Tensor(np.asarray(att, dtype=np.float64))], axis=-1)


def candidate_rep(h_u, h_v, phi_dt, att, dt):
    """Candidate rows [h_u(t_j) || h_v(t_j) || Phi(t_k - t_j) || att_j]; leading axis is candidates."""
    dt = np.asarray(dt, dtype=np.float64)
    if np.any(dt <= 0):
        raise ValueError("candidate events must strictly precede the target (dt > 0)")
    return concat([h_u, h_v, phi_dt, Tensor(np.asarray(att, dtype=np.float64))], axis=-1)


def init_scorer_params(rep_dim, hidden, rng, prefix="g", zero_last=False):
    """Two-layer ReLU MLP mapping a ``2 * rep_dim`` concatenation to one logit."""
    w2 = np.zeros((hidden, 1)) if zero_last else glorot(rng, hidden, 1)
    params = {
        f"{prefix}.W1": Tensor(glorot(rng, 2 * rep_dim, hidden), requires_grad=True),
        f"{prefix}.b1": Tensor(np.zeros(hidden), requires_grad=True),
        f"{prefix}.W2": Tensor(w2, requires_grad=True),
        f"{prefix}.b2": Tensor(np.zeros(1), requires_grad=True),
    }
    for name, p in params.items():
        p.name = name
    return params


def pair_mlp(params, prefix, left, right):
    """Logits of the two-layer MLP on [left || right] rows; ``left`` (1, E) broadcasts."""
    rows = right.shape[0]
    if left.shape[0] != rows:
        left = broadcast_to(left, (rows, left.shape[1]))
    x = concat([left, right], axis=-1)
    hidden = relu(matmul(x, params[f"{prefix}.W1"]) + params[f"{prefix}.b1"])
    out = matmul(hidden, params[f"{prefix}.W2"]) + params[f"{prefix}.b2"]
    return reshape(out, (rows,))


def importance_scores(params, X, Z, r=0.5, tau=1.0, prefix="g"):
    """p_j = sigmoid(g([X || Z_j])) for every candidate row of ``Z``."""
    X = X if X.ndim == 2 else reshape(X, (1, X.shape[0]))
    if Z.shape[0] == 0:
        return ImportanceScores(Tensor(np.zeros(0)), r, tau)
    return ImportanceScores(pair_mlp(params, prefix, X, Z), r, tau)


def sample_mask(scores, mode="relaxed", noise=None, tau=None):
    """Draw candidate weights alpha.

    ``relaxed`` returns the Concrete sample; ``hard`` thresholds it at 0.5 and
    passes the relaxed gradient straight through. ``noise`` is anything with a
    ``uniform(shape)`` method (a live, frozen or constant noise source); without
    one, u = 0.5 is used, which gives the deterministic mask ``p > 0.5`` in
    hard mode.
    """
    tau = scores.tau if tau is None else tau
    if tau <= 0:
        raise ValueError("temperature must be positive")
    if mode not in ("relaxed", "hard"):
        raise ValueError(f"unknown mask mode {mode!r}")
    count = len(scores)
    noise = noise or ConstantNoise(0.5)
    u = np.clip(noise.uniform((count,)), 1e-12, 1 - 1e-12)
    logit_u = np.log(u) - np.log1p(-u)
    logit_p = clip(scores.logits, -LOGIT_CLAMP, LOGIT_CLAMP)
    soft = sigmoid((logit_p + logit_u) * (1.0 / tau))
    if mode == "relaxed":
        return MaskSample(soft, hard=False, frozen_noise=u)
    return MaskSample(straight_through(soft.data > 0.5, soft), hard=True, frozen_noise=u)


def masked_readout(Z, alpha, how="mean"):
    """Pool alpha-weighted candidate rows into one vector; empty input gives zeros."""
    alpha = alpha if isinstance(alpha, Tensor) else Tensor(np.asarray(alpha, dtype=np.float64))
    width = Z.shape[1]
    count = Z.shape[0]
    if count == 0:
        return Tensor(np.zeros(width))
    if alpha.shape != (count,):
        raise ValueError(f"alpha has shape {alpha.shape}, expected ({count},)")
    weighted = mul(Z, reshape(alpha, (count, 1)))
    pooled = tsum(weighted, axis=0)
    if how == "sum":
        return pooled
    if how == "mean":
        return pooled * (1.0 / count)
    raise ValueError(f"unknown readout {how!r}")


def kl_loss(scores, r=None):
    """Sum over candidates of KL(Bernoulli(p_j) || Bernoulli(r))."""
    r = scores.r if r is None else r
    if not 0.0 < r < 1.0:
        raise ValueError(f"prior r must lie in (0, 1), got {r}")
    if len(scores) == 0:
        return Tensor(0.0)
    s = scores.logits
    p = sigmoid(s)
    log_p, log_q = log_sigmoid(s), log_sigmoid(s * -1.0)
    terms = p * (log_p - np.log(r)) + (1.0 - p) * (log_q - np.log(1.0 - r))
    return tsum(terms)


def kl_from_probs(p, r):
    """Scalar KL sum from raw probabilities; the logit-space path is :func:`kl_loss`."""
    p = np.clip(np.asarray(p, dtype=np.float64), P_CLAMP, 1 - P_CLAMP)
    s = np.log(p) - np.log1p(-p)
    return kl_loss(ImportanceScores(Tensor(s), r=r)).item()


def write_explanation_dump(path, records):
    """Line-delimited {target_event_id, candidate_event_id, p, rank} records."""
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


def read_explanation_dump(path):
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]
