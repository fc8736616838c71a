import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tgib.bottleneck import (
    ImportanceScores,
    candidate_rep,
    importance_scores,
    init_scorer_params,
    kl_from_probs,
    kl_loss,
    masked_readout,
    read_explanation_dump,
    sample_mask,
    target_rep,
    write_explanation_dump,
)
from tgib.model import ModelConfig, TGIBModel
from tgib.numcore import NoiseSource, Tensor, gradcheck, tsum
from tgib.tempgraph import TemporalGraph


def scores_from_p(p, r=0.5, tau=1.0):
    p = np.asarray(p, dtype=np.float64)
    return ImportanceScores(Tensor(np.log(p) - np.log1p(-p), requires_grad=True), r, tau)


def test_kl_scalar_value():
    assert kl_from_probs([0.9], 0.5) == pytest.approx(0.9 * np.log(1.8) + 0.1 * np.log(0.2), abs=1e-12)
    assert kl_from_probs([0.9], 0.5) == pytest.approx(0.3681, abs=1e-4)


def test_kl_zero_at_prior_and_additive():
    assert kl_from_probs([0.3, 0.3, 0.3], 0.3) == pytest.approx(0.0, abs=1e-15)
    assert kl_from_probs([0.5, 0.5], 0.5) == pytest.approx(0.0, abs=1e-15)
    assert kl_from_probs([0.5, 0.5, 0.5], 0.5) == pytest.approx(0.0, abs=1e-15)
    assert kl_from_probs([0.9, 0.2], 0.4) == pytest.approx(kl_from_probs([0.9], 0.4) + kl_from_probs([0.2], 0.4))


def test_kl_nonnegative_with_equality_only_at_prior():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        r = rng.uniform(0.05, 0.95)
        p = rng.uniform(0.001, 0.999, size=rng.integers(1, 10))
        kl = kl_from_probs(p, r)
        assert kl >= 0.0
        if not np.all(p == r):
            assert kl > 0.0
        assert kl_from_probs(np.full(len(p), r), r) == pytest.approx(0.0, abs=1e-12)


def test_kl_gradient_vanishes_at_prior():
    s = scores_from_p([0.3, 0.3], r=0.3)
    kl_loss(s).backward()
    np.testing.assert_allclose(s.logits.grad, 0.0, atol=1e-15)


def test_kl_gradient_matches_finite_differences():
    s = scores_from_p([0.1, 0.45, 0.93], r=0.3)
    assert gradcheck(lambda: kl_loss(s), {"s": s.logits}).max_error < 1e-6


def test_kl_rejects_degenerate_prior():
    with pytest.raises(ValueError):
        kl_loss(scores_from_p([0.5]), r=0.0)
    with pytest.raises(ValueError):
        ModelConfig(r=1.0)


@pytest.mark.parametrize("tau", [0.1, 1.0, 3.0])
def test_relaxed_mask_median_is_p(tau):
    scores = scores_from_p(np.full(10_000, 0.7), tau=tau)
    alpha = sample_mask(scores, "relaxed", NoiseSource(0)).alpha.data
    assert abs((alpha > 0.5).mean() - 0.7) < 3 * np.sqrt(0.21 / 10_000)


def test_relaxed_mask_mean_matches_quadrature():
    # E[sigmoid(logit p + L)], L standard logistic, by midpoint quadrature over u
    u = (np.arange(200_000) + 0.5) / 200_000
    expected = np.mean(1 / (1 + np.exp(-(np.log(0.7 / 0.3) + np.log(u / (1 - u))))))
    assert expected == pytest.approx(0.6379, abs=1e-4)
    alpha = sample_mask(scores_from_p(np.full(10_000, 0.7)), "relaxed", NoiseSource(0)).alpha.data
    assert abs(alpha.mean() - expected) < 3 * alpha.std() / 100


def test_relaxed_mask_mean_approaches_p_as_tau_shrinks():
    gaps = []
    for tau in (1.0, 0.3, 0.05):
        alpha = sample_mask(scores_from_p(np.full(20_000, 0.7), tau=tau), "relaxed", NoiseSource(5)).alpha.data
        gaps.append(abs(alpha.mean() - 0.7))
    assert gaps[0] > gaps[1] > gaps[2] and gaps[2] < 0.01


def test_low_temperature_concentration():
    alpha = sample_mask(scores_from_p(np.full(10_000, 0.7), tau=0.01), "relaxed", NoiseSource(1)).alpha.data
    near = (alpha < 1e-3) | (alpha > 1 - 1e-3)
    # exact share: 1 - P(|logit p + L| < 0.01 * log(999)), about 0.971 at p = 0.7
    assert abs(near.mean() - 0.971) < 0.005
    alpha = sample_mask(scores_from_p(np.full(10_000, 0.7), tau=0.001), "relaxed", NoiseSource(1)).alpha.data
    assert ((alpha < 1e-3) | (alpha > 1 - 1e-3)).mean() >= 0.99


def test_saturated_probability_keeps_candidate():
    scores = ImportanceScores(Tensor([60.0, 60.0, 60.0]))
    alpha = sample_mask(scores, "relaxed", NoiseSource(2)).alpha.data
    assert np.all(alpha > 0.99)


def test_hard_mask_is_binary_with_soft_gradient():
    scores = scores_from_p([0.2, 0.8, 0.6])
    sample = sample_mask(scores, "hard")
    np.testing.assert_array_equal(sample.alpha.data, [0.0, 1.0, 1.0])
    tsum(sample.alpha).backward()
    assert np.all(scores.logits.grad > 0)


def test_mask_gradient_through_frozen_noise():
    scores = scores_from_p([0.2, 0.55, 0.9])
    frozen = NoiseSource(3).frozen()
    weights = Tensor([1.0, -2.0, 0.5])

    def loss():
        if frozen.tape:
            frozen.rewind()
        return tsum(sample_mask(scores, "relaxed", frozen, tau=0.7).alpha * weights)

    loss()
    assert gradcheck(loss, {"s": scores.logits}).max_error < 1e-6


def test_mask_errors():
    with pytest.raises(ValueError):
        sample_mask(scores_from_p([0.5]), tau=0.0)
    with pytest.raises(ValueError):
        sample_mask(scores_from_p([0.5]), mode="soft")


def test_readout_cases():
    Z = Tensor(np.arange(12.0).reshape(3, 4))
    np.testing.assert_array_equal(masked_readout(Z, np.zeros(3)).data, np.zeros(4))
    np.testing.assert_allclose(masked_readout(Z, np.ones(3)).data, Z.data.mean(axis=0))
    np.testing.assert_allclose(masked_readout(Z, [0.0, 1.0, 0.0]).data, Z.data[1] / 3)
    np.testing.assert_array_equal(masked_readout(Tensor(np.zeros((0, 4))), np.zeros(0)).data, np.zeros(4))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), count=st.integers(1, 8))
def test_readout_is_linear_in_alpha(seed, count):
    rng = np.random.default_rng(seed)
    Z = Tensor(rng.normal(size=(count, 5)))
    a1, a2 = rng.random(count), rng.random(count)
    for how in ("sum", "mean"):
        both = masked_readout(Z, a1 + a2, how).data
        np.testing.assert_allclose(both, masked_readout(Z, a1, how).data + masked_readout(Z, a2, how).data)
    np.testing.assert_allclose(masked_readout(Z, a1, "mean").data * count, masked_readout(Z, a1, "sum").data)


def test_zero_initialized_scorer_gives_half():
    params = init_scorer_params(6, 4, np.random.default_rng(0), "g", zero_last=True)
    rng = np.random.default_rng(1)
    s = importance_scores(params, Tensor(rng.normal(size=6)), Tensor(rng.normal(size=(5, 6))))
    np.testing.assert_array_equal(s.p.data, np.full(5, 0.5))


def test_scores_follow_candidate_permutation():
    params = init_scorer_params(6, 4, np.random.default_rng(0), "g")
    rng = np.random.default_rng(2)
    X, Z = Tensor(rng.normal(size=6)), rng.normal(size=(5, 6))
    perm = rng.permutation(5)
    a = importance_scores(params, X, Tensor(Z)).p.data
    b = importance_scores(params, X, Tensor(Z[perm])).p.data
    np.testing.assert_array_equal(a[perm], b)


def test_scores_match_hand_evaluated_mlp():
    params = init_scorer_params(3, 2, np.random.default_rng(4), "g")
    X, Z = np.array([0.5, -1.0, 2.0]), np.array([[1.0, 0.0, -1.0], [0.2, 0.3, 0.4]])
    W1, b1, W2, b2 = (params[f"g.{k}"].data for k in ("W1", "b1", "W2", "b2"))
    for j in range(2):
        x = np.concatenate([X, Z[j]])
        logit = float(np.maximum(x @ W1 + b1, 0) @ W2[:, 0] + b2[0])
        got = importance_scores(params, Tensor(X), Tensor(Z)).p.data[j]
        assert got == pytest.approx(1 / (1 + np.exp(-logit)), rel=1e-13)


def test_empty_candidates_give_empty_scores():
    params = init_scorer_params(3, 2, np.random.default_rng(0), "g")
    assert len(importance_scores(params, Tensor(np.ones(3)), Tensor(np.zeros((0, 3))))) == 0


def test_representation_layouts():
    hu, hv, phi = Tensor([1.0, 2.0]), Tensor([3.0, 4.0]), Tensor([1.0, 1.0, 1.0])
    np.testing.assert_array_equal(target_rep(hu, hv, phi, [9.0]).data, [1, 2, 3, 4, 1, 1, 1, 9])
    rows = candidate_rep(Tensor(np.ones((2, 2))), Tensor(np.ones((2, 2))),
                         Tensor([[0.1, 0.2, 0.3], [0.4, 0.5, 0.6]]), [[7.0], [7.0]], [1.0, 2.0])
    diff = rows.data[0] != rows.data[1]
    assert rows.shape == (2, 8)
    np.testing.assert_array_equal(np.flatnonzero(diff), [4, 5, 6])
    with pytest.raises(ValueError):
        candidate_rep(hu, hv, phi, [1.0], [0.0])


def test_model_batch_layout():
    cfg = ModelConfig(d=4, d_time=3, f_edge=2, neighbors=3, dropout=0.0)
    model = TGIBModel(cfg, seed=0)
    rng = np.random.default_rng(0)
    g = TemporalGraph([0, 1, 2, 0], [1, 2, 0, 2], [1.0, 2.0, 3.0, 4.0], rng.normal(size=(4, 2)), num_nodes=4)
    batch = model.event_batch(g, 3, [3])
    X = batch.X.data[0]
    assert X.shape == (cfg.rep_dim,) == (2 * 4 + 3 + 2,)
    np.testing.assert_allclose(X[:4], model.encoder.node_embedding(g, 0, 4.0, att_pos=3).data, rtol=1e-12)
    np.testing.assert_allclose(X[4:8], model.encoder.node_embedding(g, 2, 4.0, att_pos=3).data, rtol=1e-12)
    np.testing.assert_array_equal(X[8:11], np.ones(3))
    np.testing.assert_array_equal(X[11:], g.att[3])
    np.testing.assert_allclose(batch.X_neg[0].data[0, 4:8], model.encoder.node_embedding(g, 3, 4.0, att_pos=3).data,
                               rtol=1e-12)
    for row, pos in enumerate(batch.cg.positions):
        Zj = batch.Z.data[row]
        t_j = g.t[pos]
        np.testing.assert_allclose(Zj[:4], model.encoder.node_embedding(g, g.src[pos], t_j, att_pos=pos).data, rtol=1e-12)
        np.testing.assert_allclose(Zj[8:11], model.encoder.time_encode(np.array([4.0 - t_j])).data[0])
        np.testing.assert_array_equal(Zj[11:], g.att[pos])


def test_explanation_dump_roundtrip(tmp_path):
    rows = [{"target_event_id": 9, "candidate_event_id": 3, "p": 0.75, "rank": 1}]
    write_explanation_dump(tmp_path / "d.jsonl", rows)
    assert read_explanation_dump(tmp_path / "d.jsonl") == rows
