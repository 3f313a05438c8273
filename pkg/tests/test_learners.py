from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from coarse2fine.data import Dataset, PartialLabelMatrix, WarmupSet
from coarse2fine.errors import ConfigError, InputError, ShapeError
from coarse2fine.learners import (
    PseudoLabelMatrix,
    TrainConfig,
    assign_pseudo_labels,
    pseudo_label_derivative,
    train,
    train_fully_supervised,
    train_leml,
    train_occ,
    train_pseudo,
)
from coarse2fine.model import (
    Architecture,
    ModelParameters,
    batch_loss,
    init_params,
    logit_tangent,
    loss_and_grad,
    predict_proba,
    sgd_step,
)

from conftest import random_arch, random_params, random_problem
from oracles import LD, central_difference, lookahead_val_loss


def full_batch(n, **kw):
    return TrainConfig(batch_size=n, loss_scaling="sum", **kw)


class TestConfig:
    def test_defaults(self):
        cfg = TrainConfig()
        assert (cfg.alpha, cfg.batch_size, cfg.epochs, cfg.w_obs, cfg.w_unobs) == (0.05, 32, 20, 1.0, 0.05)

    @pytest.mark.parametrize("kw", [{"alpha": 0}, {"batch_size": 0}, {"loss_scaling": "max"},
                                    {"w_unobs": -1.0}, {"w_obs": 0.1, "w_unobs": 0.2}, {"optimizer": "lbfgs"}])
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            TrainConfig(**kw)

    def test_weight_override(self):
        assert TrainConfig(w_obs=0.1, w_unobs=0.2, allow_weight_override=True).w_unobs == 0.2

    def test_steps(self):
        assert TrainConfig(epochs=3, batch_size=10).n_steps(25) == 9
        assert TrainConfig(steps=4).n_steps(1000) == 4


class TestFullySupervised:
    def test_converges_single_example(self):
        warm = WarmupSet(np.array([[1.0, -1.0]]), np.array([[1.0, 0.0]]))
        arch = Architecture(2, (), 2)
        theta = train_fully_supervised(warm, arch, TrainConfig(alpha=1.0, steps=500))
        assert batch_loss(theta, warm.features, warm.fine) < 0.01

    def test_zero_steps(self):
        warm = WarmupSet(np.ones((2, 3)), np.zeros((2, 2)))
        arch = Architecture(3, (4,), 2)
        assert train_fully_supervised(warm, arch, TrainConfig(steps=0, seed=5)) == init_params(arch, 5)

    def test_deterministic(self, rng):
        arch = Architecture(3, (4,), 2)
        warm = WarmupSet(rng.standard_normal((9, 3)), (rng.random((9, 2)) < 0.5).astype(float))
        cfg = TrainConfig(batch_size=4, epochs=3, seed=2)
        assert train_fully_supervised(warm, arch, cfg) == train_fully_supervised(warm, arch, cfg)

    def test_empty(self):
        with pytest.raises(InputError):
            train_fully_supervised(WarmupSet(np.zeros((0, 2)), np.zeros((0, 1))), Architecture(2, (), 1), TrainConfig())


class TestLEML:
    def test_unobserved_values_ignored(self, rng):
        arch = Architecture(3, (4,), 2)
        data, partial, warm = random_problem(rng, arch, n=8)
        other = partial.copy()
        other.values[~other.mask] = 1.0
        cfg = TrainConfig(batch_size=3, epochs=2)
        assert train_leml(data, partial, warm, arch, cfg) == train_leml(data, other, warm, arch, cfg)

    def test_full_omega_no_warmup_is_supervised(self, rng):
        arch = Architecture(3, (4,), 2)
        data, _, _ = random_problem(rng, arch, n=10)
        cfg = TrainConfig(batch_size=4, epochs=3, seed=1)
        leml = train_leml(data, PartialLabelMatrix.full(data.fine), None, arch, cfg)
        fs = train_fully_supervised(WarmupSet(data.features, data.fine), arch, cfg)
        assert np.max(np.abs(leml.flat - fs.flat)) <= 1e-12

    def test_empty_omega_matches_supervised(self, rng):
        arch = Architecture(3, (2,), 2)
        data, _, warm = random_problem(rng, arch, n=5)
        partial = PartialLabelMatrix.empty(5, 2)
        cfg = full_batch(9, steps=15, seed=4)
        a = train_leml(data, partial, warm, arch, cfg)
        b = train_fully_supervised(warm, arch, cfg)
        assert np.max(np.abs(a.flat - b.flat)) <= 1e-10

    def test_one_step_by_hand(self):
        arch = Architecture(1, (), 1)
        theta0 = ModelParameters(arch, [0.3, 0.0])
        data = Dataset(np.array([[2.0]]), np.ones((1, 1)))
        partial = PartialLabelMatrix(np.array([[1.0]]), np.array([[True]]))
        theta = train_leml(data, partial, None, arch, full_batch(1, steps=1, alpha=0.1), theta0)
        p = 1 / (1 + np.exp(-0.6))
        np.testing.assert_allclose(theta.flat, [0.3 - 0.1 * (p - 1) * 2.0, -0.1 * (p - 1)], atol=1e-15)

    def test_shape_mismatch(self, rng):
        arch = Architecture(3, (), 2)
        data, _, warm = random_problem(rng, arch, n=4)
        with pytest.raises(ShapeError):
            train_leml(data, PartialLabelMatrix.empty(4, 3), warm, arch, TrainConfig())


class TestOCC:
    def test_zero_unobserved_weight_is_scaled_leml(self, rng):
        arch = Architecture(3, (4,), 2, "tanh")
        data, partial, warm = random_problem(rng, arch, n=10)
        c = 2.5
        occ = train_occ(data, partial, warm, arch, TrainConfig(alpha=0.04, w_obs=c, w_unobs=0.0, batch_size=4, epochs=3))
        leml = train_leml(data, partial, warm, arch, TrainConfig(alpha=0.04 * c, batch_size=4, epochs=3))
        assert np.max(np.abs(occ.flat - leml.flat)) <= 1e-10

    def test_pushes_towards_one(self, rng):
        arch = Architecture(3, (), 2)
        data, _, _ = random_problem(rng, arch, n=20)
        cfg = TrainConfig(alpha=0.5, w_obs=1.0, w_unobs=0.5, epochs=200, batch_size=20)
        theta = train_occ(data, PartialLabelMatrix.empty(20, 2), None, arch, cfg)
        assert predict_proba(theta, data.features).mean() > 0.9

    def test_toy_objective(self):
        # 2x2 matrix: one observed 0, one observed 1, two unobserved imputed as 1
        arch = Architecture(1, (), 2)
        theta = ModelParameters(arch, [0.5, -1.0, 0.2, 0.1])
        X = np.array([[1.0], [-2.0]])
        mask = np.array([[True, False], [False, True]])
        values = np.array([[0.0, 0.0], [0.0, 1.0]])
        w_obs, w_unobs = 1.0, 0.3
        T = np.where(mask, values, 1.0)
        W = np.where(mask, w_obs, w_unobs)
        z = X @ np.array([[0.5, -1.0]]) + np.array([0.2, 0.1])
        p = 1 / (1 + np.exp(-z))
        hand = sum(W[i, j] * -(T[i, j] * np.log(p[i, j]) + (1 - T[i, j]) * np.log(1 - p[i, j]))
                   for i in range(2) for j in range(2))
        assert batch_loss(theta, X, T, W) == pytest.approx(hand, abs=1e-14)

    def test_negative_weight(self):
        with pytest.raises(ConfigError):
            TrainConfig(w_obs=1.0, w_unobs=-0.1)


class TestAssign:
    def test_zero_validation_gradient_gives_ones(self):
        # saturated model on all-relevant validation labels: g_val == 0
        arch = Architecture(2, (), 2)
        theta = ModelParameters(arch, [0.0, 0.0, 0.0, 0.0, 50.0, 50.0])
        data = Dataset(np.ones((3, 2)), np.ones((3, 1)))
        pseudo = PseudoLabelMatrix(PartialLabelMatrix.empty(3, 2))
        warm = WarmupSet(np.ones((2, 2)), np.ones((2, 2)))
        out = assign_pseudo_labels(theta, data, np.arange(3), pseudo, warm, TrainConfig())
        assert np.all(out.derivative == 0)
        assert np.all(pseudo.values == 1)

    @pytest.mark.parametrize("label, expected", [(1.0, 1.0), (0.0, 0.0)])
    def test_scalar_logistic(self, label, expected):
        arch = Architecture(1, (), 1)
        theta = ModelParameters(arch, [0.4, 0.0])
        data = Dataset(np.array([[1.0]]), np.ones((1, 1)))
        warm = WarmupSet(np.array([[1.0]]), np.array([[label]]))
        cfg = TrainConfig(alpha=0.1, loss_scaling="sum")
        pseudo = PseudoLabelMatrix(PartialLabelMatrix.empty(1, 1))
        out = assign_pseudo_labels(theta, data, [0], pseudo, warm, cfg)
        z_next = out.theta_lookahead.flat.sum()
        sig = 1 / (1 + np.exp(-z_next))
        # bias and weight both see input 1, hence the factor 2
        assert out.derivative[0, 0] == pytest.approx(2 * 0.1 * (sig - label), rel=1e-12)
        fd = central_difference(
            lambda p: lookahead_val_loss(theta.flat, arch, data.features, p.reshape(1, 1), warm.features,
                                         warm.fine, 0.1, 1.0),
            np.array([0.5]), LD("1e-5"))
        assert np.sign(float(fd[0])) == np.sign(out.derivative[0, 0])
        assert pseudo.values[0, 0] == expected

    def test_prefactor_does_not_change_signs(self, rng):
        # alpha * s multiplies the derivative; with the look-ahead point held
        # fixed the assignment cannot change
        for _ in range(20):
            arch = random_arch(rng)
            theta = random_params(rng, arch)
            data, partial, warm = random_problem(rng, arch)
            cfg = TrainConfig(loss_scaling="sum")
            deriv, theta_next = pseudo_label_derivative(theta, data.features, np.full(partial.shape, 0.5), warm, cfg)
            _, g_val = loss_and_grad(theta_next, warm.features, warm.fine)
            base = logit_tangent(theta, data.features, g_val) <= 0
            for c in (1e-3, 0.5, 2.0, 1e3):
                assert np.array_equal((c * cfg.alpha * deriv) <= 0, base)
            assert np.array_equal(deriv <= 0, base)

    def test_observed_untouched_and_binary(self, rng):
        arch = Architecture(4, (5,), 3)
        theta = random_params(rng, arch)
        data, partial, warm = random_problem(rng, arch, n=8, observed=0.5)
        pseudo = PseudoLabelMatrix(partial)
        assign_pseudo_labels(theta, data, np.array([1, 3, 4]), pseudo, warm, TrainConfig())
        np.testing.assert_array_equal(pseudo.values[partial.mask], partial.values[partial.mask])
        touched = pseudo.values[[1, 3, 4]]
        assert np.all((touched == 0) | (touched == 1))
        untouched = pseudo.values[[0, 2]][~partial.mask[[0, 2]]]
        assert np.all(untouched == 0.5)

    def test_empty_validation(self, rng):
        arch = Architecture(2, (), 1)
        data, partial, _ = random_problem(rng, arch)
        with pytest.raises(InputError):
            assign_pseudo_labels(init_params(arch, 0), data, [0], PseudoLabelMatrix(partial),
                                 WarmupSet(np.zeros((0, 2)), np.zeros((0, 1))), TrainConfig())

    @given(st.integers(0, 2**20))
    def test_sign_matches_finite_difference(self, seed):
        rng = np.random.default_rng(seed)
        arch = random_arch(rng, max_d=5, max_hidden=5, max_k=3)
        theta = random_params(rng, arch)
        data, partial, warm = random_problem(rng, arch, n=3, m=3)
        cfg = TrainConfig(alpha=0.3, loss_scaling="mean")
        P = np.where(partial.mask, partial.values, 0.5)
        deriv, _ = pseudo_label_derivative(theta, data.features, P, warm, cfg)
        s = cfg.scale(3)
        for i in range(3):
            for j in range(arch.n_labels):
                def f(v, i=i, j=j):
                    Q = P.astype(LD)
                    Q[i, j] = v[0]
                    return lookahead_val_loss(theta.flat, arch, data.features, Q, warm.features, warm.fine, cfg.alpha, s)
                fd = float(central_difference(f, np.array([P[i, j]]), LD("1e-5"))[0])
                if abs(fd) > 1e-8:
                    assert np.sign(fd) == np.sign(deriv[i, j])


class TestPseudo:
    def test_zero_steps(self, rng):
        arch = Architecture(3, (), 2)
        data, partial, warm = random_problem(rng, arch)
        theta, pseudo = train_pseudo(data, partial, warm, arch, TrainConfig(steps=0, seed=3))
        assert theta == init_params(arch, 3)
        np.testing.assert_array_equal(pseudo.values, np.where(partial.mask, partial.values, 0.5))

    def test_full_omega_matches_leml(self, rng):
        arch = Architecture(3, (4,), 2)
        data, _, warm = random_problem(rng, arch, n=9)
        full = PartialLabelMatrix.full(data.fine)
        cfg = TrainConfig(batch_size=4, epochs=3, seed=8)
        theta, pseudo = train_pseudo(data, full, warm, arch, cfg)
        np.testing.assert_array_equal(pseudo.values, data.fine)
        assert np.max(np.abs(theta.flat - train_leml(data, full, warm, arch, cfg).flat)) <= 1e-10

    def test_observed_immutable_and_binary(self, rng):
        arch = Architecture(3, (4,), 2)
        data, partial, warm = random_problem(rng, arch, n=12, observed=0.4)
        _, pseudo = train_pseudo(data, partial, warm, arch, TrainConfig(batch_size=5, epochs=2))
        np.testing.assert_array_equal(pseudo.values[partial.mask], partial.values[partial.mask])
        assert pseudo.is_binary()

    def test_deterministic(self, rng):
        arch = Architecture(3, (4,), 2)
        data, partial, warm = random_problem(rng, arch, n=12)
        cfg = TrainConfig(batch_size=5, epochs=2, seed=3)
        a, pa = train_pseudo(data, partial, warm, arch, cfg)
        b, pb = train_pseudo(data, partial, warm, arch, cfg)
        assert a == b and np.array_equal(pa.values, pb.values)

    def test_validation_subsample(self, rng):
        arch = Architecture(3, (), 2)
        data, partial, warm = random_problem(rng, arch, n=10, m=6)
        theta, pseudo = train_pseudo(data, partial, warm, arch, TrainConfig(val_batch_size=2, epochs=2))
        assert pseudo.is_binary()

    def test_without_warmup_rows_in_update(self, rng):
        arch = Architecture(3, (), 2)
        data, partial, warm = random_problem(rng, arch, n=10)
        cfg = TrainConfig(warmup_in_update=False, epochs=2, batch_size=4)
        a, _ = train_pseudo(data, partial, warm, arch, cfg)
        b, _ = train_pseudo(data, partial, warm, arch, replace(cfg, warmup_in_update=True))
        assert a != b

    def test_needs_warmup(self, rng):
        arch = Architecture(3, (), 2)
        data, partial, _ = random_problem(rng, arch)
        with pytest.raises(InputError):
            train_pseudo(data, partial, None, arch, TrainConfig())


def test_dispatch(rng):
    arch = Architecture(3, (), 2)
    data, partial, warm = random_problem(rng, arch)
    cfg = TrainConfig(steps=2)
    for name in ("fs", "leml", "occ"):
        theta, pseudo = train(name, data, partial, warm, arch, cfg)
        assert pseudo is None and theta.arch == arch
    assert train("pseudo", data, partial, warm, arch, cfg)[1] is not None
    with pytest.raises(ConfigError):
        train("svm", data, partial, warm, arch, cfg)


def test_sgd_one_step_matches_hand_gradient():
    arch = Architecture(1, (), 1)
    theta = ModelParameters(arch, [0.0, 0.0])
    _, g = loss_and_grad(theta, np.array([[1.0]]), np.array([[1.0]]))
    assert sgd_step(theta, g, 1.0) == ModelParameters(arch, [0.5, 0.5])
