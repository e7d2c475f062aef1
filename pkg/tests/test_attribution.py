"""Attribution method tests: closed forms for linear models, the IG
completeness axiom, exact Shapley recovery, and null-player behavior."""

import numpy as np
import pytest

from cardioxmap import attribution as attr
from cardioxmap import model as md
from cardioxmap.errors import BudgetTooSmall, EmptyBaselineSet, ShapeMismatch

from oracles import shapley_values_exact


class LinearModel:
    """f_1(x) = sum(w * x) + c; class 0 is the complement (gradient -w)."""

    def __init__(self, w, c=0.0):
        self.w = np.asarray(w, dtype=np.float64)
        self.c = c

    def class_probability(self, x, k):
        v = float(np.sum(self.w * x)) + self.c
        return v if k == 1 else 1.0 - v

    def class_gradient(self, x, k):
        return self.w.copy() if k == 1 else -self.w.copy()


class ConstantModel:
    def class_probability(self, x, k):
        return 0.7

    def class_gradient(self, x, k):
        return np.zeros_like(np.asarray(x, dtype=np.float64))


class TestIntegratedGradients:
    def test_zero_path_gives_zeros(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(2, 6))
        model = LinearModel(rng.normal(size=(2, 6)))
        out = attr.integrated_gradients(model, x, baseline=x.copy(),
                                        noise_samples=1)
        np.testing.assert_array_equal(out, np.zeros_like(x))

    def test_linear_closed_form(self):
        rng = np.random.default_rng(1)
        w = rng.normal(size=(3, 8))
        x = rng.normal(size=(3, 8))
        out = attr.integrated_gradients(LinearModel(w), x, steps=50,
                                        noise_samples=1)
        np.testing.assert_allclose(out, w * x, atol=1e-6)

    def test_completeness_on_trained_style_model(self):
        config = md.ModelConfig(in_channels=12, stem=(8, 5, 2),
                                blocks=((8, 3, 2),), dropout_rate=0.0)
        model = md.build_model(config, seed=3)
        rng = np.random.default_rng(4)
        for _ in range(5):
            x = rng.normal(size=(12, 40))
            baseline = np.zeros_like(x)
            out = attr.integrated_gradients(model, x, baseline=baseline,
                                            steps=200, noise_samples=1,
                                            target_class=1)
            delta = (model.class_probability(x, 1)
                     - model.class_probability(baseline, 1))
            assert abs(out.sum() - delta) <= 1e-3 * max(1.0, abs(delta))

    def test_noise_averaging_deterministic(self):
        rng = np.random.default_rng(5)
        w = rng.normal(size=(2, 5))
        x = rng.normal(size=(2, 5))
        a = attr.integrated_gradients(LinearModel(w), x, steps=10,
                                      noise_samples=8, noise_sigma=0.2, seed=9)
        b = attr.integrated_gradients(LinearModel(w), x, steps=10,
                                      noise_samples=8, noise_sigma=0.2, seed=9)
        np.testing.assert_array_equal(a, b)

    def test_baseline_shape_mismatch(self):
        model = LinearModel(np.ones((2, 4)))
        with pytest.raises(ShapeMismatch):
            attr.integrated_gradients(model, np.ones((2, 4)),
                                      baseline=np.ones((2, 5)))


class TestGradientShap:
    def test_linear_expectation_within_monte_carlo_error(self):
        rng = np.random.default_rng(6)
        w = rng.normal(size=(2, 6))
        x = rng.normal(size=(2, 6))
        records = [rng.normal(size=(2, 6)) for _ in range(30)]
        baselines = attr.BaselineSet(records=records)
        n = 500
        out = attr.gradient_shap(LinearModel(w), x, baselines, n_samples=n,
                                 target_class=1, seed=7)
        expected = w * (x - baselines.mean())
        # per-cell MC standard error of w * (x - b) over the baseline pool
        spread = np.std(np.stack([w * (x - b) for b in records]), axis=0)
        se = spread / np.sqrt(n)
        assert np.all(np.abs(out - expected) <= 3.0 * se + 1e-12)

    def test_singleton_baseline_equal_to_input(self):
        x = np.ones((2, 4))
        baselines = attr.BaselineSet(records=[x.copy()])
        out = attr.gradient_shap(LinearModel(np.ones((2, 4))), x, baselines,
                                 n_samples=20, seed=0)
        np.testing.assert_array_equal(out, np.zeros_like(x))

    def test_deterministic_per_seed(self):
        rng = np.random.default_rng(8)
        w = rng.normal(size=(2, 4))
        x = rng.normal(size=(2, 4))
        baselines = attr.BaselineSet(records=[rng.normal(size=(2, 4))
                                              for _ in range(5)])
        a = attr.gradient_shap(LinearModel(w), x, baselines, n_samples=50,
                               noise_sigma=0.1, seed=3)
        b = attr.gradient_shap(LinearModel(w), x, baselines, n_samples=50,
                               noise_sigma=0.1, seed=3)
        np.testing.assert_array_equal(a, b)

    def test_empty_baselines_rejected(self):
        with pytest.raises(EmptyBaselineSet):
            attr.BaselineSet(records=[])


class TestKernelShap:
    def test_constant_model_gives_zeros(self):
        x = np.random.default_rng(9).normal(size=(2, 8))
        out = attr.kernel_shap(ConstantModel(), x, budget=40, segment_len=4)
        assert np.max(np.abs(out)) < 1e-8

    def test_two_group_additive_exact(self):
        class TwoGroupAdditive:
            def class_probability(self, x, k):
                return float(np.tanh(x[0, :2].sum()) + 0.5 * np.tanh(x[0, 2:].sum()))

        x = np.array([[0.4, -0.3, 0.8, 0.1]])
        background = np.zeros_like(x)
        g1 = np.zeros((1, 4), dtype=bool)
        g1[0, :2] = True
        g2 = ~g1
        model = TwoGroupAdditive()
        out = attr.kernel_shap(model, x, budget=10, background=background,
                               groups=[g1, g2])
        expect_1 = np.tanh(x[0, :2].sum()) - np.tanh(0.0)
        expect_2 = 0.5 * (np.tanh(x[0, 2:].sum()) - np.tanh(0.0))
        assert out[g1].sum() == pytest.approx(expect_1, abs=1e-6)
        assert out[g2].sum() == pytest.approx(expect_2, abs=1e-6)

    def test_full_enumeration_recovers_exact_shapley(self):
        rng = np.random.default_rng(10)
        n_groups = 6
        x = rng.normal(size=(2, 6))
        background = rng.normal(scale=0.3, size=(2, 6))
        a_mat = rng.normal(scale=0.4, size=(12, 12))
        b_vec = rng.normal(size=12)

        class Quadratic:
            def class_probability(self, model_x, k):
                v = np.asarray(model_x).ravel()
                return float(v @ a_mat @ v + b_vec @ v)

        groups = attr.contiguous_segment_groups(2, 6, 2)
        assert len(groups) == n_groups
        model = Quadratic()
        out = attr.kernel_shap(model, x, budget=2 ** n_groups + 2,
                               background=background, groups=groups)
        group_values = np.array([out[g].sum() for g in groups])

        flat_groups = np.stack([g.ravel() for g in groups])

        def game(mask):
            mask = np.asarray(mask, dtype=bool)
            cells = (flat_groups[mask].any(axis=0) if mask.any()
                     else np.zeros(x.size, dtype=bool))
            xz = np.where(cells.reshape(x.shape), x, background)
            return (model.class_probability(xz, 1)
                    - model.class_probability(background, 1))

        exact = shapley_values_exact(game, n_groups)
        np.testing.assert_allclose(group_values, exact, atol=1e-6)
        # efficiency: values sum to the output delta
        delta = (model.class_probability(x, 1)
                 - model.class_probability(background, 1))
        assert group_values.sum() == pytest.approx(delta, abs=1e-9)

    def test_budget_too_small(self):
        x = np.zeros((2, 8))
        with pytest.raises(BudgetTooSmall):
            attr.kernel_shap(ConstantModel(), x, budget=4, segment_len=2)

    def test_sampled_path_deterministic(self):
        rng = np.random.default_rng(11)
        w = rng.normal(size=(1, 16))
        x = rng.normal(size=(1, 16))
        model = LinearModel(w)
        a = attr.kernel_shap(model, x, budget=18, segment_len=1, seed=5)
        b = attr.kernel_shap(model, x, budget=18, segment_len=1, seed=5)
        np.testing.assert_array_equal(a, b)


class TestLime:
    def test_constant_model_gives_zeros(self):
        x = np.random.default_rng(12).normal(size=(2, 6))
        out = attr.lime_explain(ConstantModel(), x, n_perturb=50, seed=0)
        assert np.max(np.abs(out)) < 1e-8

    def test_single_feature_model_dominates(self):
        t0 = 4
        x = np.random.default_rng(13).normal(size=(1, 10)) + 1.0

        class SingleFeature:
            def class_probability(self, model_x, k):
                return float(model_x[0, t0])

        for seed in range(5):
            out = attr.lime_explain(SingleFeature(), x, n_perturb=500, seed=seed)
            coef = np.abs(out[0])
            others = np.delete(coef, t0)
            assert coef[t0] >= 10.0 * others.max()

    def test_deterministic_per_seed(self):
        rng = np.random.default_rng(14)
        w = rng.normal(size=(2, 8))
        x = rng.normal(size=(2, 8))
        a = attr.lime_explain(LinearModel(w), x, n_perturb=60, seed=2)
        b = attr.lime_explain(LinearModel(w), x, n_perturb=60, seed=2)
        np.testing.assert_array_equal(a, b)

    def test_budget_below_feature_count(self):
        with pytest.raises(BudgetTooSmall):
            attr.lime_explain(ConstantModel(), np.zeros((1, 30)), n_perturb=20)


class TestAttributeBothClasses:
    def test_stacks_both_slices(self):
        rng = np.random.default_rng(15)
        w = rng.normal(size=(12, 10))
        x = rng.normal(size=(12, 10))
        out = attr.attribute_both_classes(LinearModel(w), x, "ig",
                                          case_id="case-1", seed=0,
                                          steps=20, noise_samples=1)
        assert out.values.shape == (12, 10, 2)
        assert out.method == "ig"
        # linear complement model: class slices are negatives of each other
        np.testing.assert_allclose(out.class_slice(0), -out.class_slice(1),
                                   atol=1e-12)

    def test_all_methods_zero_for_constant_model(self):
        x = np.random.default_rng(16).normal(size=(3, 8))
        baselines = attr.BaselineSet(records=[np.zeros((3, 8))])
        kwargs = {
            "ig": {"noise_samples": 1, "steps": 10},
            "gradshap": {"baselines": baselines, "n_samples": 20},
            "kernelshap": {"budget": 30, "segment_len": 2},
            "lime": {"n_perturb": 30},
        }
        for method, extra in kwargs.items():
            out = attr.attribute_both_classes(ConstantModel(), x, method,
                                              seed=0, **extra)
            assert np.max(np.abs(out.values)) < 1e-8, method
