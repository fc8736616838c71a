"""Temporal event graphs: loading, splitting, neighbor lookup, computation graphs.

Events are stored column-wise (``src``, ``dst``, ``t``, ``att``) in
chronological order; ties in ``t`` keep file order. Positions into these arrays
are 0-based; ``event_ids`` carries the 1-based chronological ordinal of each
event in the graph it was loaded from, and survives :meth:`TemporalGraph.restrict`.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np


class ParseError(ValueError):
    pass


class SplitError(ValueError):
    pass


@dataclass(frozen=True)
class Event:
    event_id: int
    u: int
    v: int
    t: float
    att: np.ndarray


class TemporalGraph:
    def __init__(self, src, dst, t, att=None, num_nodes=None, node_features=None,
                 event_ids=None, meta=None):
        src = np.asarray(src, dtype=np.int64)
        dst = np.asarray(dst, dtype=np.int64)
        t = np.asarray(t, dtype=np.float64)
        if not (len(src) == len(dst) == len(t)):
            raise ValueError("src, dst and t must have equal length")
        if att is None:
            att = np.ones((len(t), 1))
        att = np.asarray(att, dtype=np.float64)
        att = att.reshape(len(t), att.shape[-1] if att.ndim > 1 else -1)
        if event_ids is None:
            event_ids = np.arange(1, len(t) + 1)
        event_ids = np.asarray(event_ids, dtype=np.int64)
        if np.any(src == dst):
            bad = int(event_ids[np.argmax(src == dst)])
            raise ValueError(f"event {bad} is a self-loop")
        if np.any(t < 0):
            raise ValueError("timestamps must be non-negative")
        order = np.lexsort((event_ids, t))
        if np.any(order != np.arange(len(t))):
            raise ValueError("events must be sorted by (t, event_id)")
        if num_nodes is None:
            num_nodes = int(max(src.max(initial=-1), dst.max(initial=-1)) + 1)
        if len(t) and max(src.max(), dst.max()) >= num_nodes:
            raise ValueError("node id out of range")

        self.src, self.dst, self.t, self.att = src, dst, t, att
        self.event_ids = event_ids
        self.num_nodes = int(num_nodes)
        self.node_features = None if node_features is None else np.asarray(node_features, dtype=np.float64)
        self.meta = dict(meta or {})
        self._access = None
        self._build_index()

    # -- construction helpers ------------------------------------------------
    def _build_index(self):
        n_ev = len(self.t)
        pos = np.arange(n_ev)
        node = np.concatenate([self.src, self.dst])
        other = np.concatenate([self.dst, self.src])
        pos2 = np.concatenate([pos, pos])
        order = np.lexsort((pos2, np.concatenate([self.t, self.t]), node))
        self._adj_pos = pos2[order]
        self._adj_other = other[order]
        self._adj_t = self.t[self._adj_pos]
        counts = np.bincount(node, minlength=self.num_nodes)
        self._indptr = np.concatenate([[0], np.cumsum(counts)])

    @property
    def f_edge(self):
        return self.att.shape[1]

    @property
    def f_node(self):
        return 0 if self.node_features is None else self.node_features.shape[1]

    @property
    def horizon(self):
        return float(self.t[-1]) if len(self.t) else 0.0

    def __len__(self):
        return len(self.t)

    def event(self, pos):
        self._touch(pos)
        return Event(int(self.event_ids[pos]), int(self.src[pos]), int(self.dst[pos]),
                     float(self.t[pos]), self.att[pos])

    @property
    def events(self):
        return [self.event(i) for i in range(len(self))]

    def position_of(self, event_id):
        pos = np.searchsorted(self.event_ids, event_id)
        if pos >= len(self.event_ids) or self.event_ids[pos] != event_id:
            raise KeyError(f"event {event_id} not in graph")
        return int(pos)

    def restrict(self, positions):
        """New graph holding only ``positions`` (original event ids kept)."""
        positions = np.sort(np.asarray(positions, dtype=np.int64))
        sub = TemporalGraph(self.src[positions], self.dst[positions], self.t[positions],
                            self.att[positions], self.num_nodes, self.node_features,
                            self.event_ids[positions], self.meta)
        sub._access = self._access
        return sub

    def shifted(self, offset):
        """Same graph with every timestamp moved by ``offset``."""
        return TemporalGraph(self.src, self.dst, self.t + offset, self.att, self.num_nodes,
                             self.node_features, self.event_ids, self.meta)

    # -- access tracking (tests use this to prove the trainer never peeks) ---
    def track_access(self):
        self._access = set()
        return self._access

    def _touch(self, positions):
        if self._access is not None:
            self._access.update(int(e) for e in np.atleast_1d(self.event_ids[positions]))

    # -- neighbor queries ----------------------------------------------------
    def _history(self, z, t):
        lo, hi = self._indptr[z], self._indptr[z + 1]
        end = lo + np.searchsorted(self._adj_t[lo:hi], t, side="left")
        return lo, end

    def temporal_neighbors(self, z, t, n):
        """The ``n`` most recent interactions of ``z`` strictly before ``t``,
        most recent first, as ``(neighbor, time, att, position)`` tuples."""
        lo, end = self._history(z, t)
        start = max(lo, end - n)
        idx = np.arange(end - 1, start - 1, -1)
        self._touch(self._adj_pos[idx])
        return [(int(self._adj_other[i]), float(self._adj_t[i]), self.att[self._adj_pos[i]],
                 int(self._adj_pos[i])) for i in idx]

    def neighbor_batch(self, nodes, times, n):
        """Padded arrays for many queries at once.

        Returns ``(nbr_node, nbr_pos, nbr_time, mask)``, each ``(B, n)``; row
        ``b`` lists the most recent interactions of ``nodes[b]`` before
        ``times[b]``, most recent first. Padding has ``mask`` False,
        ``nbr_pos`` -1 and ``nbr_time`` equal to the query time.
        """
        nodes = np.asarray(nodes, dtype=np.int64)
        times = np.asarray(times, dtype=np.float64)
        b = len(nodes)
        nbr_node = np.zeros((b, n), dtype=np.int64)
        nbr_pos = np.full((b, n), -1, dtype=np.int64)
        nbr_time = np.repeat(times[:, None], n, axis=1) if b else np.zeros((0, n))
        mask = np.zeros((b, n), dtype=bool)
        if n == 0:
            return nbr_node, nbr_pos, nbr_time, mask
        for row in range(b):
            lo, end = self._history(nodes[row], times[row])
            start = max(lo, end - n)
            k = end - start
            if k <= 0:
                continue
            idx = np.arange(end - 1, start - 1, -1)
            nbr_node[row, :k] = self._adj_other[idx]
            nbr_pos[row, :k] = self._adj_pos[idx]
            nbr_time[row, :k] = self._adj_t[idx]
            mask[row, :k] = True
        if self._access is not None:
            self._touch(nbr_pos[mask])
        return nbr_node, nbr_pos, nbr_time, mask

    def node_feature_matrix(self, dim):
        if self.node_features is None:
            return np.zeros((self.num_nodes, dim))
        if self.node_features.shape[1] != dim:
            raise ValueError(f"node features have dim {self.node_features.shape[1]}, model expects {dim}")
        return self.node_features


# -- computation graphs --------------------------------------------------------
@dataclass
class ComputationGraph:
    target: int                   # position of e_k
    positions: np.ndarray         # candidate positions, ascending
    dt: np.ndarray                # t_k - t_j per candidate, all > 0
    hops: np.ndarray              # minimum hop distance per candidate

    def __len__(self):
        return len(self.positions)


def extract_computation_graph(g, target, L=2, n=20):
    """L-hop temporal computation graph of the event at position ``target``.

    Hop 1 is the ``n`` most recent interactions of each endpoint before
    ``t_k``. Each hop-h event ``(z, w, t_j)`` reached from ``z`` expands to
    the ``n`` most recent interactions of ``w`` before ``t_j``.
    """
    if L < 1:
        raise ValueError("L must be >= 1")
    t_k = float(g.t[target])
    hop_of = {}
    frontier = [(int(g.src[target]), t_k), (int(g.dst[target]), t_k)]
    for hop in range(1, L + 1):
        nxt = []
        seen_queries = set()
        for z, t in frontier:
            if (z, t) in seen_queries:
                continue
            seen_queries.add((z, t))
            for other, t_j, _, pos in g.temporal_neighbors(z, t, n):
                if pos not in hop_of:
                    hop_of[pos] = hop
                nxt.append((other, t_j))
        frontier = nxt
    positions = np.array(sorted(hop_of), dtype=np.int64)
    hops = np.array([hop_of[p] for p in positions], dtype=np.int64)
    dt = t_k - g.t[positions] if len(positions) else np.zeros(0)
    return ComputationGraph(target, positions, dt, hops)


# -- splits ------------------------------------------------------------------
@dataclass
class SplitSpec:
    train_end: float
    val_end: float
    horizon: float
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    inductive: bool = False
    masked_nodes: frozenset = field(default_factory=frozenset)

    def partition_of(self, num_events):
        labels = np.full(num_events, "excluded", dtype=object)
        labels[self.train] = "train"
        labels[self.val] = "val"
        labels[self.test] = "test"
        return labels


TRAIN_FRACTION = 0.7
VAL_FRACTION = 0.85


def chronological_split(g):
    """Positions of train (t < 0.7T), val (0.7T <= t < 0.85T) and test (t >= 0.85T)."""
    if len(g) == 0:
        raise SplitError("cannot split an empty graph")
    horizon = g.horizon
    if g.t[0] == g.t[-1] or horizon <= 0:
        raise SplitError(f"degenerate horizon: all timestamps equal {g.t[0]}")
    train_end, val_end = TRAIN_FRACTION * horizon, VAL_FRACTION * horizon
    pos = np.arange(len(g))
    train = pos[g.t < train_end]
    val = pos[(g.t >= train_end) & (g.t < val_end)]
    test = pos[g.t >= val_end]
    return train, val, test


def make_split(g, inductive=False, seed=0):
    train, val, test = chronological_split(g)
    if inductive:
        return inductive_mask(g, (train, val, test), seed)
    horizon = g.horizon
    return SplitSpec(TRAIN_FRACTION * horizon, VAL_FRACTION * horizon, horizon, train, val, test)


def inductive_mask(g, splits, seed=0, fraction=0.1):
    """Hold out ``fraction`` of the training nodes.

    Training loses every event touching a held-out node; validation and test
    keep only events touching at least one.
    """
    train, val, test = splits
    if len(train) == 0:
        raise SplitError("inductive masking needs a non-empty training set")
    train_nodes = np.unique(np.concatenate([g.src[train], g.dst[train]]))
    count = max(1, int(math.floor(fraction * len(train_nodes))))
    rng = np.random.default_rng(seed)
    masked = np.sort(rng.choice(train_nodes, size=count, replace=False))

    def touches(pos):
        return np.isin(g.src[pos], masked) | np.isin(g.dst[pos], masked)

    horizon = g.horizon
    return SplitSpec(
        TRAIN_FRACTION * horizon, VAL_FRACTION * horizon, horizon,
        train=train[~touches(train)], val=val[touches(val)], test=test[touches(test)],
        inductive=True, masked_nodes=frozenset(int(m) for m in masked),
    )


def write_split_manifest(path, g, split):
    labels = split.partition_of(len(g))
    with open(path, "w") as fh:
        for eid, part in zip(g.event_ids, labels):
            fh.write(json.dumps({"event_id": int(eid), "partition": part}) + "\n")


# -- Jodie CSV -----------------------------------------------------------------
def _is_number(s):
    try:
        float(s)
        return True
    except ValueError:
        return False


def load_jodie_csv(path, has_edge_features=True, bipartite=True):
    """Read ``user,item,timestamp,state_label,feat_1..feat_f`` rows.

    With ``bipartite`` users map to ``0..U-1`` and items to ``U..U+I-1`` (each
    side in ascending raw-id order); otherwise raw integer ids are kept.
    Graphs without edge features get a constant 1.0 attribute. Rows out of
    time order are stably re-sorted and counted in ``meta["resorted"]``.
    """
    users, items, ts, labels, feats = [], [], [], [], []
    width = None
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if lineno == 1 and not all(_is_number(c) for c in row[:3]):
                continue
            if len(row) < 4:
                raise ParseError(f"{path}:{lineno}: expected at least 4 columns, got {len(row)}")
            try:
                u, v, t, lab = int(float(row[0])), int(float(row[1])), float(row[2]), float(row[3])
                f = [float(c) for c in row[4:]]
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
            if width is None:
                width = len(f)
            elif len(f) != width:
                raise ParseError(f"{path}:{lineno}: {len(f)} features, expected {width} (ragged row)")
            users.append(u)
            items.append(v)
            ts.append(t)
            labels.append(lab)
            feats.append(f)

    n = len(ts)
    if n == 0:
        return TemporalGraph([], [], [], np.zeros((0, 1)), num_nodes=0, meta={"resorted": 0})

    users = np.array(users, dtype=np.int64)
    items = np.array(items, dtype=np.int64)
    ts = np.array(ts)
    if bipartite:
        uu, src = np.unique(users, return_inverse=True)
        ii, dst = np.unique(items, return_inverse=True)
        dst = dst + len(uu)
        num_nodes = len(uu) + len(ii)
    else:
        src, dst = users, items
        num_nodes = int(max(src.max(), dst.max()) + 1)
    if has_edge_features and width:
        att = np.array(feats, dtype=np.float64)
    else:
        att = np.ones((n, 1))

    order = np.argsort(ts, kind="stable")
    resorted = int(np.sum(order != np.arange(n)))
    meta = {"resorted": resorted, "state_label": np.array(labels)[order]}
    if bipartite:
        meta["user_ids"], meta["item_ids"] = uu, ii
    return TemporalGraph(src[order], dst[order], ts[order], att[order], num_nodes=num_nodes, meta=meta)


def write_jodie_csv(path, g, labels=None):
    labels = np.zeros(len(g)) if labels is None else labels
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["user_id", "item_id", "timestamp", "state_label"]
                   + [f"f{i}" for i in range(g.f_edge)])
        for i in range(len(g)):
            w.writerow([int(g.src[i]), int(g.dst[i]), repr(float(g.t[i])), int(labels[i])]
                       + [repr(float(x)) for x in g.att[i]])
