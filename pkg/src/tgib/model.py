"""The self-explaining link predictor: encoder, importance scorer g and predictor q."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

from .bottleneck import candidate_rep, init_scorer_params
from .encoder import EncoderConfig, TemporalEncoder, init_encoder_params
from .numcore import Tensor, concat, load_checkpoint, save_checkpoint, take_rows
from .tempgraph import extract_computation_graph


@dataclass
class ModelConfig(EncoderConfig):
    hidden: int | None = None     # width of g and q; defaults to d
    r: float = 0.5                # Bernoulli prior on keeping a candidate
    tau: float = 1.0              # relaxation temperature
    readout: str = "mean"
    zero_init_heads: bool = False

    def __post_init__(self):
        if self.hidden is None:
            self.hidden = self.d
        if not 0.0 < self.r < 1.0:
            raise ValueError(f"prior r must lie in (0, 1), got {self.r}")
        if self.tau <= 0:
            raise ValueError("tau must be positive")

    @property
    def rep_dim(self):
        return 2 * self.d + self.d_time + self.f_edge

    @classmethod
    def from_dict(cls, data):
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in names})


@dataclass
class EventBatch:
    X: Tensor              # (1, E) target representation
    X_neg: list            # list of (1, E) negative representations
    Z: Tensor              # (C, E) candidate representations
    cg: object             # the ComputationGraph used


class TGIBModel:
    def __init__(self, cfg, seed=0, params=None):
        self.cfg = cfg
        if params is None:
            rng = np.random.default_rng(seed)
            params = init_encoder_params(cfg, rng)
            params.update(init_scorer_params(cfg.rep_dim, cfg.hidden, rng, "g", cfg.zero_init_heads))
            params.update(init_scorer_params(cfg.rep_dim, cfg.hidden, rng, "q", cfg.zero_init_heads))
        self.params = params
        self.encoder = TemporalEncoder(cfg, params)

    # -- representations -----------------------------------------------------
    def computation_graph(self, g, pos):
        return extract_computation_graph(g, pos, self.cfg.layers, self.cfg.neighbors)

    def event_batch(self, g, pos, neg_nodes=(), cg=None, training=False, noise=None):
        """Target, negative and candidate representations for the event at ``pos``."""
        cfg = self.cfg
        cg = self.computation_graph(g, pos) if cg is None else cg
        t_k = float(g.t[pos])
        heads = [int(g.src[pos]), int(g.dst[pos])] + [int(n) for n in neg_nodes]
        cand = cg.positions
        nodes = np.concatenate([heads, g.src[cand], g.dst[cand]]).astype(np.int64)
        times = np.concatenate([np.full(len(heads), t_k), g.t[cand], g.t[cand]])
        att_pos = np.concatenate([np.full(len(heads), pos), cand, cand]).astype(np.int64)
        h = self.encoder.embed(g, nodes, times, att_pos, cfg.layers, training, noise)

        phi0 = self.encoder.time_encode(np.zeros((1,)))
        att_k = Tensor(g.att[pos][None, :])
        h_u = take_rows(h, [0])

        def head_rep(i):
            return concat([h_u, take_rows(h, [i]), phi0, att_k], axis=-1)

        X = head_rep(1)
        X_neg = [head_rep(2 + i) for i in range(len(neg_nodes))]
        c, base = len(cand), len(heads)
        if c:
            Z = candidate_rep(take_rows(h, np.arange(base, base + c)),
                              take_rows(h, np.arange(base + c, base + 2 * c)),
                              self.encoder.time_encode(cg.dt), g.att[cand], cg.dt)
        else:
            Z = Tensor(np.zeros((0, cfg.rep_dim)))
        return EventBatch(X, X_neg, Z, cg)

    def target_rep(self, g, pos):
        """X for the event at ``pos`` alone (no candidates), shape (1, E)."""
        t_k = float(g.t[pos])
        nodes = np.array([g.src[pos], g.dst[pos]], dtype=np.int64)
        h = self.encoder.embed(g, nodes, np.full(2, t_k), np.full(2, pos), self.cfg.layers)
        return concat([take_rows(h, [0]), take_rows(h, [1]),
                       self.encoder.time_encode(np.zeros((1,))), Tensor(g.att[pos][None, :])], axis=-1)

    # -- numpy fast paths for evaluation -----------------------------------------
    def mlp_numpy(self, prefix, left, right):
        """Plain-numpy copy of the pair MLP: ``left`` (E,) against rows of ``right`` (M, E)."""
        p = self.params
        right = np.atleast_2d(right)
        x = np.concatenate([np.broadcast_to(left, (len(right), len(left))), right], axis=1)
        hidden = np.maximum(x @ p[f"{prefix}.W1"].data + p[f"{prefix}.b1"].data, 0.0)
        return (hidden @ p[f"{prefix}.W2"].data + p[f"{prefix}.b2"].data)[:, 0]

    def readout_numpy(self, Z, alpha):
        """Readout of many masks at once: ``alpha`` (M, C) -> (M, E)."""
        alpha = np.atleast_2d(alpha)
        if Z.shape[0] == 0:
            return np.zeros((alpha.shape[0], Z.shape[1]))
        pooled = alpha @ Z
        return pooled / Z.shape[0] if self.cfg.readout == "mean" else pooled

    # -- persistence -------------------------------------------------------------
    def save(self, path, extra=None):
        hyper = {"model": asdict(self.cfg)}
        if extra:
            hyper.update(extra)
        save_checkpoint(path, self.params, hyper)

    @classmethod
    def load(cls, path):
        arrays, hyper = load_checkpoint(path)
        cfg = ModelConfig.from_dict(hyper["model"])
        params = {}
        for name, arr in arrays.items():
            params[name] = Tensor(arr.copy(), requires_grad=True, name=name)
        return cls(cfg, params=params), hyper
