"""Temporal graphs with a planted co-hub rule and known explanations.

A designated set of hub nodes only ever appears in *trigger* events. An
episode picks a free hub ``h`` and two ordinary nodes ``u``, ``v``; it emits
``m`` trigger events alternating ``(u, h)``, ``(v, h)``, ... and then the target
``(u, v)``, all inside one window of length ``W``. The triggers are the ground
truth explanation of the target and sit one hop from it. A hub hosts at most
one open episode at a time, so the triggers are the only hub interactions in
the target's window. Background events join random ordinary nodes.

Timestamps are integer ticks plus ``event_id * 2**-20``: strictly increasing
and exactly representable, so shifting a graph by an integer keeps every time
span bit-identical.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .tempgraph import TemporalGraph, extract_computation_graph, write_jodie_csv

JITTER = 2.0 ** -20


@dataclass
class PlantedRuleConfig:
    num_nodes: int = 300
    num_hubs: int = 20
    num_targets: int = 700
    num_background_events: int = 100
    horizon: int = 1_000_000          # ticks
    window: float | None = None       # defaults to 2% of the horizon
    trigger_count: int = 2
    noise_rate: float = 0.0
    mark_hub_events: bool = True
    seed: int = 0
    max_attempts: int = 10_000

    def __post_init__(self):
        if self.window is None:
            self.window = 0.02 * self.horizon
        if self.window <= 0:
            raise ValueError("window must be positive")
        if self.trigger_count < 2:
            raise ValueError("the co-hub rule needs at least one trigger at each endpoint (m >= 2)")
        if not 0.0 <= self.noise_rate < 0.5:
            raise ValueError("noise_rate must lie in [0, 0.5)")
        if self.num_nodes - self.num_hubs < 2 or self.num_hubs < 1:
            raise ValueError("need at least one hub and two ordinary nodes")


@dataclass
class GroundTruth:
    causal: dict = field(default_factory=dict)        # target event_id -> sorted causal event_ids
    violations: list = field(default_factory=list)    # noisy targets emitted without triggers

    def __contains__(self, event_id):
        return event_id in self.causal

    def __getitem__(self, event_id):
        return self.causal[event_id]

    def __len__(self):
        return len(self.causal)


class InfeasibleConfig(ValueError):
    pass


def generate(cfg):
    """Build ``(TemporalGraph, GroundTruth)`` from a :class:`PlantedRuleConfig`."""
    rng = np.random.default_rng(cfg.seed)
    hubs = np.arange(cfg.num_hubs)
    ordinary = np.arange(cfg.num_hubs, cfg.num_nodes)
    W = float(cfg.window)
    span = int(np.floor(W)) - 1
    if span < cfg.trigger_count + 1:
        raise InfeasibleConfig(f"window {W} is too short for {cfg.trigger_count} triggers and a target")

    # raw events: (tick, u, v, kind, episode); kind 0 background, 1 trigger, 2 target
    raw = []
    hub_free_at = np.full(cfg.num_hubs, -np.inf)
    starts = np.sort(rng.integers(0, cfg.horizon - span, size=cfg.num_targets))
    noisy = rng.random(cfg.num_targets) < cfg.noise_rate
    attempts = 0
    for ep, start in enumerate(starts):
        u, v = rng.choice(ordinary, size=2, replace=False)
        if noisy[ep]:
            raw.append((int(start + span), int(u), int(v), 2, ep))
            continue
        free = hubs[hub_free_at <= start]
        while len(free) == 0:
            attempts += 1
            if attempts > cfg.max_attempts:
                raise InfeasibleConfig("no free hub within the attempt budget; "
                                       "lower num_targets or the window, or add hubs")
            start = start + span + 1
            free = hubs[hub_free_at <= start]
        h = int(rng.choice(free))
        ticks = np.sort(rng.choice(np.arange(1, span), size=cfg.trigger_count, replace=False))
        for i, off in enumerate(ticks):
            end = u if i % 2 == 0 else v
            raw.append((int(start + off), int(end), h, 1, ep))
        raw.append((int(start + span), int(u), int(v), 2, ep))
        hub_free_at[h] = start + span + 1

    for _ in range(cfg.num_background_events):
        a, b = rng.choice(ordinary, size=2, replace=False)
        raw.append((int(rng.integers(0, cfg.horizon)), int(a), int(b), 0, -1))

    raw.sort(key=lambda r: (r[0], r[3]))     # within a tick: background, trigger, target
    if len(raw) >= 2 ** 20:
        raise InfeasibleConfig("too many events for exact tie-break jitter")
    ticks = np.array([r[0] for r in raw], dtype=np.float64)
    ids = np.arange(1, len(raw) + 1)
    t = ticks + ids * JITTER
    src = np.array([r[1] for r in raw])
    dst = np.array([r[2] for r in raw])
    kind = np.array([r[3] for r in raw])
    att = np.zeros((len(raw), 2))
    att[:, 0] = 1.0
    if cfg.mark_hub_events:
        att[kind == 1] = [0.0, 1.0]

    g = TemporalGraph(src, dst, t, att, num_nodes=cfg.num_nodes,
                      meta={"kind": kind, "num_hubs": cfg.num_hubs, "window": W})

    truth = GroundTruth()
    by_episode = {}
    for eid, r in zip(ids, raw):
        by_episode.setdefault(r[4], {"triggers": [], "target": None})
        if r[3] == 1:
            by_episode[r[4]]["triggers"].append(int(eid))
        elif r[3] == 2:
            by_episode[r[4]]["target"] = int(eid)
    for ep, rec in by_episode.items():
        if ep < 0:
            continue
        if noisy[ep]:
            truth.violations.append(rec["target"])
        else:
            truth.causal[rec["target"]] = sorted(rec["triggers"])
    return g, truth


def validate_ground_truth(g, truth, L=2, n=20):
    """Targets whose causal events are not all inside their L-hop computation graph."""
    bad = []
    for target_id, causal in truth.causal.items():
        pos = g.position_of(target_id)
        cg = extract_computation_graph(g, pos, L, n)
        inside = set(int(e) for e in g.event_ids[cg.positions])
        if not set(causal) <= inside:
            bad.append(target_id)
    return bad


def rule_holds(g, pos, window, num_hubs):
    """Whether both endpoints of the event at ``pos`` met a common hub in (t - W, t)."""
    t = g.t[pos]
    met = []
    for z in (int(g.src[pos]), int(g.dst[pos])):
        hubs = set()
        for other, t_j, _, _ in g.temporal_neighbors(z, t, len(g)):
            if t_j <= t - window:
                break
            if other < num_hubs:
                hubs.add(other)
        met.append(hubs)
    return bool(met[0] & met[1])


def explanation_recall(result, truth):
    """|top-k ∩ truth| / |truth| with k = |truth|."""
    target = result.target_event_id
    if target not in truth:
        raise KeyError(f"no ground truth for event {target}")
    causal = set(truth[target])
    top = [eid for eid, _ in result.ranked_candidates[:len(causal)]]
    return len(causal.intersection(top)) / len(causal)


def write_dataset(directory, g, truth, stem="synth"):
    """Write ``<stem>.csv`` (Jodie format) and ``<stem>_truth.jsonl``."""
    import os

    os.makedirs(directory, exist_ok=True)
    csv_path = os.path.join(directory, f"{stem}.csv")
    truth_path = os.path.join(directory, f"{stem}_truth.jsonl")
    write_jodie_csv(csv_path, g, labels=g.meta.get("kind"))
    with open(truth_path, "w") as fh:
        for target, causal in sorted(truth.causal.items()):
            fh.write(json.dumps({"target_event_id": target, "causal_event_ids": causal}) + "\n")
    return csv_path, truth_path


def read_truth(path):
    truth = GroundTruth()
    with open(path) as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                truth.causal[int(rec["target_event_id"])] = [int(e) for e in rec["causal_event_ids"]]
    return truth
