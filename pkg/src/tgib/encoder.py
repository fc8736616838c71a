"""Functional time encoding and stacked temporal self-attention.

A node query is a triple ``(node, time, att_pos)``: ``att_pos`` indexes the
event whose attribute fills the query slot (``-1`` for a zero attribute).
Embeddings are computed for whole batches of queries at once; each layer
gathers neighbors for its batch, deduplicates the ``(node, time, att_pos)``
queries one layer down, and recurses until layer 0 returns raw node features.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numcore import (
    Tensor,
    concat,
    cos,
    dropout,
    matmul,
    relu,
    reshape,
    softmax,
    take_rows,
)


@dataclass
class EncoderConfig:
    d: int = 32             # node embedding size
    d_time: int = 32        # time-encoding size
    f_edge: int = 1
    layers: int = 2
    neighbors: int = 20
    dropout: float = 0.1

    @property
    def attn_dim(self):
        return self.d + self.f_edge + self.d_time


def glorot(rng, fan_in, fan_out):
    lim = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, size=(fan_in, fan_out))


def init_encoder_params(cfg, rng):
    """Name -> Tensor mapping for the time encoder and every attention layer."""
    D, d = cfg.attn_dim, cfg.d
    i = np.arange(cfg.d_time)
    params = {
        "time.omega": Tensor(1.0 / 10 ** (i * 9.0 / cfg.d_time), requires_grad=True),
        "time.phase": Tensor(np.zeros(cfg.d_time), requires_grad=True),
    }
    for layer in range(1, cfg.layers + 1):
        pre = f"attn{layer}."
        params[pre + "Wq"] = Tensor(glorot(rng, D, D), requires_grad=True)
        params[pre + "Wk"] = Tensor(glorot(rng, D, D), requires_grad=True)
        params[pre + "Wv"] = Tensor(glorot(rng, D, D), requires_grad=True)
        params[pre + "W0"] = Tensor(glorot(rng, D + d, d), requires_grad=True)
        params[pre + "b0"] = Tensor(np.zeros(d), requires_grad=True)
        params[pre + "W1"] = Tensor(glorot(rng, d, d), requires_grad=True)
        params[pre + "b1"] = Tensor(np.zeros(d), requires_grad=True)
    for name, p in params.items():
        p.name = name
    return params


def time_encode(omega, phase, dt):
    """cos(omega * dt + phase) on the trailing axis; ``dt`` is a plain array of spans."""
    dt = np.asarray(dt, dtype=np.float64)
    if np.any(dt < 0):
        raise ValueError("time spans must be non-negative")
    return cos(Tensor(dt[..., None]) * omega + phase)


def attention_weights(Q, K, mask=None):
    """softmax(Q K^T / sqrt(D)) for ``Q`` of shape (B, D) and ``K`` of shape (B, n, D)."""
    B, D = Q.shape
    logits = reshape(matmul(K, reshape(Q, (B, D, 1))), (B, K.shape[1])) * (1.0 / np.sqrt(D))
    return softmax(logits, axis=-1, mask=mask)


class TemporalEncoder:
    def __init__(self, cfg, params):
        self.cfg = cfg
        self.params = params

    def time_encode(self, dt):
        return time_encode(self.params["time.omega"], self.params["time.phase"], dt)

    def node_embedding(self, g, z, t, layer=None, att_pos=-1, training=False, noise=None):
        """h_z^(layer)(t) for a single node, shape (d,)."""
        layer = self.cfg.layers if layer is None else layer
        h = self.embed(g, [z], [t], [att_pos], layer, training, noise)
        return reshape(h, (h.shape[-1],))

    def build_qkv(self, g, nodes, times, att_pos, layer, training=False, noise=None):
        """Pre-projection query rows (B, D), key/value rows (B, n, D) and the neighbor mask."""
        cfg = self.cfg
        nodes = np.asarray(nodes, dtype=np.int64)
        times = np.asarray(times, dtype=np.float64)
        att_pos = np.asarray(att_pos, dtype=np.int64)
        B = len(nodes)
        nbr_node, nbr_pos, nbr_time, mask = g.neighbor_batch(nodes, times, cfg.neighbors)

        # one level down: the query nodes themselves plus every real neighbor
        low_nodes = np.concatenate([nodes, nbr_node[mask]])
        low_times = np.concatenate([times, nbr_time[mask]])
        low_att = np.concatenate([att_pos, nbr_pos[mask]])
        keys = np.stack([low_nodes, low_att, low_times.view(np.int64)], axis=1)
        uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        h_low = self.embed(g, uniq[:, 0], np.ascontiguousarray(uniq[:, 2]).view(np.float64), uniq[:, 1],
                           layer - 1, training, noise)

        self_idx = inverse[:B]
        nbr_idx = np.repeat(self_idx[:, None], cfg.neighbors, axis=1)
        nbr_idx[mask] = inverse[B:]

        att_table = np.vstack([g.att, np.zeros((1, g.f_edge))])
        q_in = concat([take_rows(h_low, self_idx), Tensor(att_table[att_pos]),
                       self.time_encode(np.zeros(B))], axis=-1)
        kv_in = concat([take_rows(h_low, nbr_idx), Tensor(att_table[nbr_pos]),
                        self.time_encode(times[:, None] - nbr_time)], axis=-1)
        return q_in, kv_in, mask

    def embed(self, g, nodes, times, att_pos, layer, training=False, noise=None):
        """Embeddings (B, d) of a batch of queries at ``layer``."""
        nodes = np.asarray(nodes, dtype=np.int64)
        if layer == 0:
            return Tensor(g.node_feature_matrix(self.cfg.d)[nodes])
        p = self.params
        pre = f"attn{layer}."
        q_in, kv_in, mask = self.build_qkv(g, nodes, times, att_pos, layer, training, noise)
        B, n = mask.shape
        Q = matmul(q_in, p[pre + "Wq"])
        K = matmul(kv_in, p[pre + "Wk"])
        V = matmul(kv_in, p[pre + "Wv"])
        alpha = attention_weights(Q, K, mask)
        alpha = dropout(alpha, self.cfg.dropout, noise, training)
        h_tilde = reshape(matmul(reshape(alpha, (B, 1, n)), V), (B, self.cfg.attn_dim))
        x = Tensor(g.node_feature_matrix(self.cfg.d)[nodes])
        hidden = relu(matmul(concat([h_tilde, x], axis=-1), p[pre + "W0"]) + p[pre + "b0"])
        return matmul(hidden, p[pre + "W1"]) + p[pre + "b1"]
