import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tgib.bottleneck import read_explanation_dump, write_explanation_dump
from tgib.evaluation import (
    RankedPrediction,
    average_precision,
    event_view,
    explanation_records,
    extract_explanation,
    link_eval,
    rank_candidates,
    sparsity_sweep,
    sweep_levels,
    top_k_count,
    write_curve_csv,
)
from tgib.model import ModelConfig, TGIBModel
from tgib.synth import PlantedRuleConfig, generate
from tgib.tempgraph import TemporalGraph, make_split


def brute_ap(labels):
    """Precision at every positive rank, written out long-hand."""
    precisions = []
    for i, label in enumerate(labels):
        if label:
            precisions.append(sum(labels[:i + 1]) / (i + 1))
    return sum(precisions) / len(precisions)


def test_ap_hand_values():
    assert average_precision([3.0, 2.0, 1.0], [1, 0, 1]) == pytest.approx(0.8333, abs=1e-4)
    assert average_precision([3.0, 2.0, 1.0], [1, 0, 1]) == pytest.approx(brute_ap([1, 0, 1]))
    assert average_precision([0.2, 0.9, 0.5], [1, 1, 1]) == 1.0
    ranked = [RankedPrediction(0.9, 0), RankedPrediction(0.8, 1)]
    assert average_precision(ranked) == 0.5


def test_ap_needs_a_positive():
    with pytest.raises(ValueError):
        average_precision([0.1, 0.2], [0, 0])
    with pytest.raises(ValueError):
        average_precision([np.nan, 0.2], [1, 0])


@settings(max_examples=50, deadline=None)
@given(labels=st.lists(st.integers(0, 1), min_size=1, max_size=9).filter(any))
def test_ap_matches_brute_force(labels):
    scores = np.arange(len(labels), 0, -1, dtype=float)
    assert average_precision(scores, labels) == pytest.approx(brute_ap(labels), rel=1e-12)


def test_ap_ties_keep_input_order():
    assert average_precision([1.0, 1.0, 1.0], [0, 0, 1]) == pytest.approx(1 / 3)
    assert average_precision([1.0, 1.0, 1.0], [1, 0, 0]) == 1.0


def test_ap_of_random_scores_is_half():
    rng = np.random.default_rng(0)
    labels = np.repeat([1, 0], 5000)
    assert abs(average_precision(rng.random(10_000), labels) - 0.5) < 0.02


def test_ap_ignores_monotone_transforms():
    rng = np.random.default_rng(1)
    scores, labels = rng.normal(size=200), rng.integers(0, 2, 200)
    labels[0] = 1
    base = average_precision(scores, labels)
    for f in (np.exp, lambda x: 3 * x - 7, np.arctan):
        assert average_precision(f(scores), labels) == pytest.approx(base, rel=1e-12)


def test_top_k_count():
    assert top_k_count(0.1, 50) == 5
    assert top_k_count(0.002, 50) == 1
    assert top_k_count(0.0, 50) == 0
    assert top_k_count(1.0, 7) == 7
    assert top_k_count(0.3, 0) == 0
    for c in range(1, 60):
        for s in sweep_levels():
            assert top_k_count(s, c) == next(k for k in range(c + 1) if k >= s * c - 1e-9)
    with pytest.raises(ValueError):
        top_k_count(1.5, 10)


def test_sweep_has_151_levels():
    levels = sweep_levels()
    assert len(levels) == 151 and levels[0] == 0.0 and levels[-1] == pytest.approx(0.3)
    np.testing.assert_allclose(np.diff(levels), 0.002)


def test_rank_candidates_tie_break():
    order = rank_candidates(np.array([0.5, 0.9, 0.5, 0.1]), np.array([40, 30, 20, 10]))
    np.testing.assert_array_equal(order, [1, 2, 0, 3])


@pytest.fixture(scope="module")
def planted_setup():
    g, truth = generate(PlantedRuleConfig(num_nodes=40, num_hubs=6, num_targets=40,
                                          num_background_events=20, window=20_000, seed=3))
    model = TGIBModel(ModelConfig(d=4, d_time=4, f_edge=2, neighbors=5), seed=0)
    targets = [g.position_of(e) for e in sorted(truth.causal)][-15:]
    return g, truth, model, targets


def test_ranking_matches_sorted_dump(planted_setup, tmp_path):
    g, _, model, targets = planted_setup
    for pos in targets[:5]:
        result = extract_explanation(model, g, pos, 0.1)
        path = tmp_path / "dump.jsonl"
        write_explanation_dump(path, explanation_records(result))
        rows = read_explanation_dump(path)
        resorted = sorted(rows, key=lambda r: (-r["p"], r["candidate_event_id"]))
        assert [r["candidate_event_id"] for r in resorted] == [eid for eid, _ in result.ranked_candidates]
        assert result.k == top_k_count(0.1, len(rows))


def test_full_sparsity_under_full_reference_always_matches(planted_setup):
    g, _, model, targets = planted_setup
    for pos in targets:
        result = extract_explanation(model, g, pos, 1.0, reference="full")
        assert result.prediction_match
        assert result.explanation_logit == pytest.approx(result.full_logit, rel=1e-12)


def test_event_without_candidates_matches_trivially():
    g = TemporalGraph([0, 2], [1, 3], [1.0, 2.0], np.ones((2, 2)), num_nodes=5)
    model = TGIBModel(ModelConfig(d=3, d_time=2, f_edge=2), seed=0)
    result = extract_explanation(model, g, 1, 0.1)
    assert result.k == 0 and result.ranked_candidates == [] and result.prediction_match


def marked_hub_oracle(model):
    """q fires only when the readout carries a hub-event mark; zero otherwise."""
    E = model.cfg.rep_dim
    for name in ("q.W1", "q.b1", "q.W2"):
        model.params[name].data[:] = 0.0
    model.params["q.W1"].data[2 * E - 1, 0] = 1000.0
    model.params["q.W2"].data[0, 0] = 1.0
    model.params["q.b2"].data[:] = -1e-9
    return model


def test_oracle_ranker_reaches_full_match(planted_setup):
    g, truth, model, targets = planted_setup
    model = marked_hub_oracle(TGIBModel(model.cfg, seed=1))

    def causal_first(view):
        causal = set(truth[view.target_event_id])
        return np.lexsort((view.candidate_ids, [e not in causal for e in view.candidate_ids]))

    sweep = sparsity_sweep(model, g, targets, ranker=causal_first, reference="full")
    assert sweep.match_rate[0] == 0.0            # nothing kept: no mark reaches q
    np.testing.assert_array_equal(sweep.match_rate[1:], 1.0)
    fraction = max(len(truth[g.event_ids[p]]) / len(event_view(model, g, p).p) for p in targets)
    assert np.all(sweep.match_rate[sweep.levels >= fraction] == 1.0)


def test_random_ranker_matches_independent_subsets(planted_setup):
    g, _, model, targets = planted_setup
    levels = sweep_levels()
    swept = sparsity_sweep(model, g, targets, ranker="random", seed=4)
    rng = np.random.default_rng(99)
    rates = np.zeros(len(levels))
    for pos in targets:
        view = event_view(model, g, pos)
        full = extract_explanation(model, g, pos, 0.0, view=view).full_logit
        for _ in range(20):
            subset_order = rng.permutation(len(view.p))
            for i, s in enumerate(levels):
                k = top_k_count(s, len(view.p))
                alpha = np.zeros(len(view.p))
                alpha[subset_order[:k]] = 1.0
                logit = model.mlp_numpy("q", view.X, model.readout_numpy(view.Z, alpha[None, :]))[0]
                rates[i] += (logit > 0) == (full > 0)
    rates /= 20 * len(targets)
    auc = np.trapezoid(rates, levels) / 0.3
    assert abs(swept.auc - auc) < 0.05


def test_sweep_auc_normalisation():
    g = TemporalGraph([0, 2], [1, 3], [1.0, 2.0], np.ones((2, 2)), num_nodes=5)
    model = TGIBModel(ModelConfig(d=3, d_time=2, f_edge=2), seed=0)
    sweep = sparsity_sweep(model, g, [1])
    assert sweep.auc == pytest.approx(1.0) and sweep.raw_area == pytest.approx(0.3)


def test_curve_csv(tmp_path, planted_setup):
    g, _, model, targets = planted_setup
    sweep = sparsity_sweep(model, g, targets[:3])
    write_curve_csv(tmp_path / "c.csv", sweep)
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0] == "sparsity,match_rate" and len(lines) == 152
    assert lines[-1].startswith("0.300,")


def test_zero_logit_model_scores_coin_flip():
    g, _ = generate(PlantedRuleConfig(num_nodes=60, num_hubs=6, num_targets=150,
                                      num_background_events=50, window=20_000, seed=1))
    model = TGIBModel(ModelConfig(d=4, d_time=4, f_edge=2, neighbors=5, zero_init_heads=True), seed=0)
    mean, std, per_seed = link_eval(model, g, make_split(g))
    assert len(per_seed) == 5 and abs(mean - 0.5) < 0.05


def test_link_eval_modes():
    g, _ = generate(PlantedRuleConfig(num_nodes=60, num_hubs=6, num_targets=60,
                                      num_background_events=40, window=20_000, seed=2))
    model = TGIBModel(ModelConfig(d=4, d_time=4, f_edge=2, neighbors=5), seed=0)
    with pytest.raises(ValueError, match="inductive"):
        link_eval(model, g, make_split(g), mode="inductive")
    split = make_split(g, inductive=True, seed=0)
    a = link_eval(model, g, split, mode="inductive", seeds=(0, 1))
    b = link_eval(model, g, split, mode="inductive", seeds=(0, 1))
    assert a[0] == b[0]
    split.test = split.test[:0]
    with pytest.raises(ValueError, match="empty"):
        link_eval(model, g, split)


@pytest.mark.parametrize("labels", list(itertools.product([0, 1], repeat=4))[1:])
def test_ap_all_small_orderings(labels):
    assert average_precision(np.arange(4, 0, -1.0), labels) == pytest.approx(brute_ap(labels))
