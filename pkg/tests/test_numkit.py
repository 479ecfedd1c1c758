"""Parameter containers, SGD, finite differences, checkpoints."""

import numpy as np
import pytest

from glad.errors import FormatError
from glad.numkit import (CHECKPOINT_MAGIC, GradSet, ParamSet, finite_diff_grad,
                         init_params, load_params, save_params, sgd_step)


class TestInitParams:
    def test_shapes_and_epsilons(self):
        p = init_params(d_in=3, d_hidden=5, n_layers=2, seed=0)
        assert p.layers[0][0].shape == (3, 5)
        assert p.layers[0][1].shape == (5, 5)
        assert p.layers[1][0].shape == (5, 5)
        assert p.n_layers == 2
        assert p.epsilons == [0.0, 0.0]
        assert p.n_params == 15 + 25 + 25 + 25

    def test_glorot_bounds(self):
        p = init_params(d_in=4, d_hidden=6, n_layers=1, seed=1)
        w1, w2 = p.layers[0]
        assert np.max(np.abs(w1)) <= np.sqrt(6.0 / (4 + 6))
        assert np.max(np.abs(w2)) <= np.sqrt(6.0 / 12)

    def test_deterministic(self):
        a = init_params(3, 4, 2, seed=7)
        b = init_params(3, 4, 2, seed=7)
        for (x1, x2), (y1, y2) in zip(a.layers, b.layers):
            np.testing.assert_array_equal(x1, y1)
            np.testing.assert_array_equal(x2, y2)

    def test_validation(self):
        with pytest.raises(ValueError):
            init_params(0, 4, 1, seed=0)
        with pytest.raises(ValueError):
            ParamSet(layers=[(np.zeros((2, 3)), np.zeros((3, 3)))],
                     epsilons=[0.0, 0.0], d_in=2, d_hidden=3)
        with pytest.raises(ValueError, match="w1 shape"):
            ParamSet(layers=[(np.zeros((9, 3)), np.zeros((3, 3)))],
                     epsilons=[0.0], d_in=2, d_hidden=3)


class TestSgdStep:
    def test_coupled_decay_formula(self):
        p = init_params(2, 3, 1, seed=0)
        g = GradSet.zeros_like(p)
        g.layers[0][0][:] = 0.5
        g.layers[0][1][:] = -1.0
        lr, wd = 0.1, 0.01
        q = sgd_step(p, g, lr, wd)
        for (w1, w2), (n1, n2) in zip(p.layers, q.layers):
            np.testing.assert_allclose(n1, w1 - lr * (0.5 + wd * w1))
            np.testing.assert_allclose(n2, w2 - lr * (-1.0 + wd * w2))

    def test_zero_lr_identity(self):
        p = init_params(2, 3, 1, seed=0)
        g = GradSet.zeros_like(p)
        q = sgd_step(p, g, 0.0, 0.5)
        np.testing.assert_array_equal(q.layers[0][0], p.layers[0][0])

    def test_shape_mismatch(self):
        p = init_params(2, 3, 2, seed=0)
        g = GradSet.zeros_like(init_params(2, 3, 1, seed=0))
        with pytest.raises(ValueError, match="layer count"):
            sgd_step(p, g, 0.1, 0.0)


class TestFiniteDiff:
    def test_linear_loss_exact(self):
        p = init_params(2, 3, 1, seed=3)
        coef = [np.arange(6).reshape(2, 3) + 1.0,
                np.arange(9).reshape(3, 3) - 4.0]

        def loss(q):
            return float(np.sum(coef[0] * q.layers[0][0])
                         + np.sum(coef[1] * q.layers[0][1]))

        fd = finite_diff_grad(loss, p, h=1e-5)
        np.testing.assert_allclose(fd.layers[0][0], coef[0], rtol=1e-7)
        np.testing.assert_allclose(fd.layers[0][1], coef[1], rtol=1e-7)

    def test_quadratic_subset_indices(self):
        p = init_params(2, 2, 1, seed=4)

        def loss(q):
            return float(np.sum(q.layers[0][0] ** 2))

        idx = [0, 3]
        fd = finite_diff_grad(loss, p, indices=idx)
        flat = fd.flatten()
        expect = 2.0 * p.flatten()
        for i in idx:
            assert abs(flat[i] - expect[i]) < 1e-8
        untouched = [i for i in range(p.n_params) if i not in idx]
        assert np.all(flat[untouched] == 0.0)

    def test_does_not_mutate(self):
        p = init_params(2, 2, 1, seed=5)
        before = p.flatten()
        finite_diff_grad(lambda q: float(q.layers[0][0].sum()), p)
        np.testing.assert_array_equal(p.flatten(), before)


class TestCheckpoints:
    def test_round_trip_exact(self, tmp_path):
        p = init_params(3, 4, 2, seed=9)
        path = tmp_path / "w.txt"
        save_params(p, path)
        q = load_params(path)
        assert q.d_in == 3 and q.d_hidden == 4 and q.n_layers == 2
        assert q.epsilons == p.epsilons
        for (x1, x2), (y1, y2) in zip(p.layers, q.layers):
            np.testing.assert_array_equal(x1, y1)
            np.testing.assert_array_equal(x2, y2)

    def test_magic_first_line(self, tmp_path):
        path = tmp_path / "w.txt"
        save_params(init_params(2, 2, 1, seed=0), path)
        assert path.read_text().splitlines()[0] == CHECKPOINT_MAGIC
        assert CHECKPOINT_MAGIC == "GLAMPARAMS1"

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "w.txt"
        path.write_text("NOPE\n1 1 1\n0.0\n")
        with pytest.raises(FormatError, match="magic"):
            load_params(path)

    def test_truncated(self, tmp_path):
        path = tmp_path / "w.txt"
        save_params(init_params(2, 2, 1, seed=0), path)
        lines = path.read_text().splitlines()
        path.write_text("\n".join(lines[:-1]) + "\n")
        with pytest.raises(FormatError, match="truncated"):
            load_params(path)

    def test_wrong_entry_count(self, tmp_path):
        path = tmp_path / "w.txt"
        save_params(init_params(2, 2, 1, seed=0), path)
        lines = path.read_text().splitlines()
        lines[3] = "1.0 2.0"
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(FormatError, match="entries"):
            load_params(path)


class TestDescent:
    def test_sgd_descends_convex_quadratic(self):
        # f(params) = 0.5 * sum(w^2): gradient equals the weights
        params = init_params(3, 4, 2, seed=7)

        def f(p):
            return 0.5 * p.sq_norm()

        grads = GradSet.zeros_like(params)
        for (g1, g2), (w1, w2) in zip(grads.layers, params.layers):
            g1 += w1
            g2 += w2
        stepped = sgd_step(params, grads, lr=0.1, weight_decay=0.0)
        assert f(stepped) < f(params)
