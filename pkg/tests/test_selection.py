"""Hub/authority recursion, rank-correlation baselines, dispatch, files."""

import numpy as np
import pytest

from glad.errors import DegenerateInputError, MethodError
from glad.selection import (METHODS, SelectionResult, hits, hits_ens,
                            hits_select, mc_select, normalize_rows, select,
                            spearman, udr_select, write_selection)
from glad.trainer import CandidatePool, ModelConfig


def make_pool(scores, seeds=None, lrs=None):
    scores = np.asarray(scores, dtype=float)
    m = scores.shape[0]
    seeds = seeds or list(range(m))
    lrs = lrs or [1e-3] * m
    configs = [ModelConfig(pooling="mean", seed=s, lr=lr)
               for s, lr in zip(seeds, lrs)]
    return CandidatePool(model_ids=[f"m{i:03d}" for i in range(m)],
                         configs=configs, scores=scores,
                         graph_ids=list(range(scores.shape[1])))


def power_iteration_hub(w, iters=500):
    """Independent route: hub = dominant eigenvector of W W^T."""
    m = w @ w.T
    v = np.ones(m.shape[0])
    for _ in range(iters):
        v = m @ v
        v /= np.linalg.norm(v)
    return v


class TestNormalizeRows:
    def test_hand_values(self):
        out = normalize_rows([[2.0, 6.0, 4.0], [1.0, 1.0, 1.0]])
        np.testing.assert_allclose(out[0], [0.0, 1.0, 0.5])
        np.testing.assert_allclose(out[1], [0.5, 0.5, 0.5])

    def test_range(self):
        rng = np.random.default_rng(0)
        out = normalize_rows(rng.normal(size=(6, 9)))
        assert out.min() == 0.0 and out.max() == 1.0


class TestHits:
    def test_matches_power_iteration(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            w = rng.uniform(0.0, 1.0, size=(rng.integers(2, 8),
                                            rng.integers(2, 8)))
            h, a, iters, residual = hits(w)
            oracle = power_iteration_hub(w)
            assert float(np.max(np.abs(h - oracle))) <= 1e-6
            assert residual <= 1e-9 and iters <= 1000

    def test_duality(self):
        rng = np.random.default_rng(4)
        w = rng.uniform(size=(5, 7))
        h, a, _, _ = hits(w)
        ref = w.T @ h
        ref /= np.linalg.norm(ref)
        assert float(np.max(np.abs(a - ref))) <= 1e-9
        ref_h = w @ a
        ref_h /= np.linalg.norm(ref_h)
        assert float(np.max(np.abs(h - ref_h))) <= 1e-9

    def test_rank_one_converges_in_one_sweep(self):
        # W = u v^T: a single update already lands on the fixed point
        u = np.array([1.0, 2.0])
        v = np.array([3.0, 0.0, 4.0])
        h, a, iters, _ = hits(np.outer(u, v))
        np.testing.assert_allclose(h, u / np.linalg.norm(u))
        np.testing.assert_allclose(a, v / np.linalg.norm(v))
        assert iters <= 2

    def test_errors(self):
        with pytest.raises(ValueError):
            hits(np.ones(3))
        with pytest.raises(DegenerateInputError):
            hits(np.zeros((2, 2)))


class TestHitsSelect:
    def test_prefers_agreeing_models(self):
        # two identical rankings vs one reversed: consensus follows the pair
        pool = make_pool([[0.1, 0.2, 0.9],
                          [0.1, 0.2, 0.9],
                          [0.9, 0.2, 0.1]])
        res = hits_select(pool)
        assert res.selected_model == "m000"
        assert res.reliability[0] == res.reliability[1] > res.reliability[2]
        np.testing.assert_array_equal(res.final_scores, pool.scores[0])
        assert res.selected_index == 0 and res.method == "hits"

    def test_ensemble_authority_ranking(self):
        pool = make_pool([[0.1, 0.9, 0.3],
                          [0.2, 0.8, 0.1],
                          [0.0, 1.0, 0.5]])
        res = hits_ens(pool)
        assert res.selected_model is None
        assert int(np.argmax(res.final_scores)) == 1
        np.testing.assert_array_equal(res.final_scores, res.authority)
        assert res.final_scores.shape == (3,)


class TestSpearman:
    def test_perfect_and_reversed(self):
        assert spearman([1, 2, 3], [10, 20, 30]) == pytest.approx(1.0)
        assert spearman([1, 2, 3], [5, 4, 3]) == pytest.approx(-1.0)

    def test_tied_hand_value(self):
        # ranks [1, 2.5, 2.5, 4] vs [1, 2, 3, 4]:
        # cov 1.125, stds sqrt(1.125), sqrt(1.25) -> sqrt(0.9)
        got = spearman([1.0, 2.0, 2.0, 3.0], [1.0, 2.0, 3.0, 4.0])
        assert got == pytest.approx(np.sqrt(0.9), abs=1e-12)

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(8)
        x = rng.normal(size=20)
        y = rng.normal(size=20)
        assert spearman(np.exp(x), y) == pytest.approx(spearman(x, y))

    def test_errors(self):
        with pytest.raises(DegenerateInputError):
            spearman([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])
        with pytest.raises(ValueError):
            spearman([1.0, 2.0], [1.0, 2.0, 3.0])


class TestMcSelect:
    def test_hand_crafted_reliabilities(self):
        pool = make_pool([[1.0, 2.0, 3.0, 4.0],
                          [1.0, 2.0, 4.0, 3.0],
                          [4.0, 3.0, 2.0, 1.0]])
        res = mc_select(pool)
        # pairwise rank correlations: (0,1)=0.8, (0,2)=-1, (1,2)=-0.8
        np.testing.assert_allclose(res.reliability, [-0.1, 0.0, -0.9],
                                   atol=1e-12)
        assert res.selected_model == "m001"
        np.testing.assert_array_equal(res.final_scores, pool.scores[1])

    def test_constant_rows_ignored(self):
        pool = make_pool([[1.0, 2.0, 3.0],
                          [1.0, 3.0, 2.0],
                          [5.0, 5.0, 5.0]])
        res = mc_select(pool)
        assert res.selected_model in ("m000", "m001")
        assert res.reliability[2] == -np.inf

    def test_errors(self):
        with pytest.raises(MethodError):
            mc_select(make_pool([[1.0, 2.0, 3.0]]))
        with pytest.raises(MethodError):
            mc_select(make_pool([[1.0, 1.0], [2.0, 2.0]]))


class TestUdrSelect:
    def test_siblings_share_hyperparameters(self):
        # rows 0/1: same setting, different seed; row 2: singleton
        scores = [[1.0, 2.0, 3.0, 4.0],
                  [1.0, 2.0, 4.0, 3.0],
                  [1.0, 2.0, 3.0, 4.0]]
        pool = make_pool(scores, seeds=[0, 1, 0], lrs=[1e-3, 1e-3, 0.1])
        res = udr_select(pool)
        assert res.selected_model == "m000"  # tie at 0.8, lowest index
        np.testing.assert_allclose(res.reliability[:2], [0.8, 0.8])
        assert res.reliability[2] == -np.inf

    def test_median_over_several_siblings(self):
        scores = [[1.0, 2.0, 3.0, 4.0],
                  [1.0, 2.0, 4.0, 3.0],
                  [4.0, 3.0, 2.0, 1.0]]
        pool = make_pool(scores, seeds=[0, 1, 2])
        res = udr_select(pool)
        # medians of {0.8, -1}, {0.8, -0.8}, {-1, -0.8}
        np.testing.assert_allclose(res.reliability, [-0.1, 0.0, -0.9],
                                   atol=1e-12)
        assert res.selected_model == "m001"

    def test_no_seed_variation_raises(self):
        pool = make_pool([[1.0, 2.0], [2.0, 1.0]],
                         seeds=[0, 0], lrs=[1e-3, 0.1])
        with pytest.raises(MethodError, match="seed"):
            udr_select(pool)


class TestDispatch:
    def test_select_routes_by_name(self):
        pool = make_pool([[1.0, 2.0, 3.0], [1.0, 3.0, 2.0]],
                         seeds=[0, 1])
        for method in METHODS:
            res = select(pool, method)
            assert res.method == method
        with pytest.raises(ValueError, match="unknown method"):
            select(pool, "oracle")


class TestWriteSelection:
    def test_files(self, tmp_path):
        res = SelectionResult(method="hits",
                              final_scores=np.array([0.123456789123, 2.0]),
                              graph_ids=[7, 9],
                              reliability=np.array([1.0]),
                              selected_model="m003", selected_index=3,
                              iterations=12, residual=3.456e-10)
        out = tmp_path / "scores.csv"
        write_selection(res, out, tmp_path / "meta.txt")
        assert out.read_text() == ("graph_id,score\n"
                                   "7,0.123456789\n"
                                   "9,2\n")
        meta = (tmp_path / "meta.txt").read_text().splitlines()
        assert meta == ["method = hits", "selected_model = m003",
                        "iterations = 12", "residual = 3.456e-10"]

    def test_ensemble_meta_uses_dash(self, tmp_path):
        res = SelectionResult(method="hits-ens",
                              final_scores=np.array([1.0]),
                              graph_ids=[0], reliability=np.array([1.0]),
                              iterations=5, residual=1e-10)
        write_selection(res, tmp_path / "s.csv")
        meta = (tmp_path / "selection_meta.txt").read_text()
        assert "selected_model = -" in meta


class TestInvariances:
    def test_rescaling_one_row_changes_nothing(self):
        rng = np.random.default_rng(11)
        scores = rng.random((5, 12))
        pool_a = make_pool(scores)
        scaled = scores.copy()
        scaled[2] *= 37.5
        pool_b = make_pool(scaled)
        np.testing.assert_allclose(normalize_rows(scores),
                                   normalize_rows(scaled), atol=1e-15)
        ra, rb = hits_select(pool_a), hits_select(pool_b)
        assert ra.selected_index == rb.selected_index
        np.testing.assert_allclose(ra.reliability, rb.reliability)
        np.testing.assert_allclose(hits_ens(pool_a).final_scores,
                                   hits_ens(pool_b).final_scores)

    def test_rank_methods_ignore_increasing_transforms(self):
        rng = np.random.default_rng(12)
        scores = rng.random((4, 10))
        warped = scores.copy()
        warped[1] = np.exp(4.0 * warped[1])
        for fn in (mc_select, udr_select):
            a = fn(make_pool(scores, seeds=[0, 1, 0, 1]))
            b = fn(make_pool(warped, seeds=[0, 1, 0, 1]))
            assert a.selected_index == b.selected_index
            np.testing.assert_allclose(a.reliability, b.reliability,
                                       atol=1e-12)

    def test_planted_consensus_recovery(self):
        # 8 noisy copies of one ranking + 2 unrelated rows: consensus
        # methods should reproduce the planted ranking
        rng = np.random.default_rng(13)
        agreements = {"hits": [], "hits-ens": [], "mc": []}
        for _ in range(20):
            consensus = rng.random(50)
            rows = [consensus + rng.normal(0.0, 0.05, size=50)
                    for _ in range(8)]
            rows += [rng.random(50) for _ in range(2)]
            pool = make_pool(np.stack(rows))
            for method in agreements:
                res = select(pool, method)
                agreements[method].append(spearman(res.final_scores,
                                                   consensus))
        for method, vals in agreements.items():
            assert np.mean(vals) >= 0.9, method
