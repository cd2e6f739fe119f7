import numpy as np
import pytest

from depthloc.numerics import RngStream
from depthloc.targets import (Dataset, DimensionMismatch, GFunction,
                              TargetSpec, estimate_g_mean, global_eval,
                              local_eval, make_dataset, monomial)


def spec_local(k=2, d=8, **kw):
    return TargetSpec(monomial(k), "local", d, tuple(range(1, k + 1)), **kw)


def spec_global(k=2, d=8, **kw):
    return TargetSpec(monomial(k), "global", d, tuple(range(1, k + 1)), **kw)


class TestLocalEval:
    def test_monomial_product(self):
        x = np.array([2.0, 3.0, 7.0, -1.0])
        assert local_eval(spec_local(2, 4), x) == 6.0

    def test_zero_factor(self):
        s = spec_local(3, 5)
        x = np.array([0.0, 1.5, 2.5, 9.0, 4.0])
        assert local_eval(s, x) == 0.0

    def test_sin_linear_at_origin(self):
        s = TargetSpec(GFunction("sin_linear", 2), "local", 4, (1, 2))
        assert local_eval(s, np.zeros(4)) == 0.0

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            local_eval(spec_local(2, 4), np.ones(5))

    def test_locality_invariance(self):
        # perturbing any coordinate outside the index set never changes f
        s = TargetSpec(monomial(2), "local", 10, (3, 7))
        rng = RngStream(5, 0)
        x = rng.normal(10)
        base = local_eval(s, x)
        for j in range(10):
            if j in (2, 6):
                continue
            y = x.copy()
            y[j] += rng.normal()
            assert local_eval(s, y) == base


class TestGlobalEval:
    def test_symmetric_ones(self):
        s = TargetSpec(monomial(1), "global", 3, (1,))
        assert np.isclose(global_eval(s, np.ones(3)), np.sqrt(3), rtol=1e-14)

    def test_hand_expanded_sum(self):
        s = TargetSpec(monomial(2), "global", 3, (1, 2))
        val = global_eval(s, np.array([1.0, 2.0, 3.0]))
        assert np.isclose(val, 11 / np.sqrt(3), rtol=1e-12)

    def test_shift_invariance(self):
        s = spec_global(2, 7)
        rng = RngStream(6, 0)
        x = rng.normal(7)
        base = global_eval(s, x)
        for m in range(1, 7):
            assert abs(global_eval(s, np.roll(x, m)) - base) <= 1e-12

    def test_scale_law(self):
        for spec, ev in ((spec_local(3, 6), local_eval),
                         (spec_global(3, 6), global_eval)):
            x = RngStream(7, 0).normal(6)
            a = 1.7
            assert np.isclose(ev(spec, a * x), a ** 3 * ev(spec, x), rtol=1e-10)


class TestGFunction:
    def test_monomial_zero_mean(self):
        mean, stderr = estimate_g_mean(monomial(2), 100_000, RngStream(8, 0))
        assert abs(mean) < 4 * stderr

    def test_tanh_sin_zero_mean(self):
        g = GFunction("tanh_sin", 2)
        mean, stderr = estimate_g_mean(g, 100_000, RngStream(9, 0))
        assert abs(mean) < 4 * stderr

    def test_sin_linear_zero_mean(self):
        g = GFunction("sin_linear", 2)
        mean, stderr = estimate_g_mean(g, 100_000, RngStream(10, 0))
        assert abs(mean) < 4 * stderr

    def test_custom_mean_violation_detected(self):
        g = GFunction("custom", 1, fn=lambda u: u[..., 0] ** 2 + 1.0)
        mean, stderr = estimate_g_mean(g, 100_000, RngStream(11, 0))
        assert abs(mean - 2.0) < 4 * stderr + 0.05
        spec = TargetSpec(g, "local", 4, (1,))
        with pytest.raises(ValueError, match="zero-mean"):
            make_dataset(spec, 10, RngStream(11, 1))

    def test_custom_zero_mean_accepted(self):
        g = GFunction("custom", 1, fn=lambda u: u[..., 0] ** 3)
        spec = TargetSpec(g, "local", 4, (1,))
        ds = make_dataset(spec, 10, RngStream(11, 2))
        assert ds.n == 10

    def test_small_sample_rejected(self):
        with pytest.raises(ValueError):
            estimate_g_mean(monomial(1), 50, RngStream(0, 0))


class TestSpecValidation:
    def test_indices_must_increase(self):
        with pytest.raises(ValueError):
            TargetSpec(monomial(2), "local", 5, (3, 2))

    def test_indices_in_range(self):
        with pytest.raises(ValueError):
            TargetSpec(monomial(2), "local", 5, (1, 6))

    def test_k_exceeds_d(self):
        with pytest.raises(ValueError):
            TargetSpec(monomial(3), "local", 2, (1, 2, 3))

    def test_classification_noiseless(self):
        with pytest.raises(ValueError):
            spec_local(task="classification", noise_eps=0.1)


class TestMakeDataset:
    def test_noise_additivity_shared_streams(self):
        clean = make_dataset(spec_local(noise_eps=0.0), 200, RngStream(20, 3))
        noisy = make_dataset(spec_local(noise_eps=0.5), 200, RngStream(20, 3))
        assert np.array_equal(clean.inputs, noisy.inputs)
        xi = (noisy.labels - clean.labels) / 0.5
        assert abs(xi.mean()) < 0.3 and abs(xi.var() - 1) < 0.3

    def test_classification_labels(self):
        ds = make_dataset(spec_local(task="classification"), 500, RngStream(21, 0))
        assert set(np.unique(ds.labels)) <= {-1.0, 1.0}

    def test_label_variance_local(self):
        # E[(x1 x2)^2] = 1 for standard normals
        ds = make_dataset(spec_local(), 100_000, RngStream(22, 0))
        assert abs(ds.labels.var() - 1.0) < 0.05

    def test_label_variance_global_odd_d(self):
        ds = make_dataset(spec_global(2, 9), 100_000, RngStream(23, 0))
        assert abs(ds.labels.var() - 1.0) < 0.05

    def test_reproducible(self):
        a = make_dataset(spec_local(noise_eps=0.2), 50, RngStream(24, 9))
        b = make_dataset(spec_local(noise_eps=0.2), 50, RngStream(24, 9))
        assert np.array_equal(a.inputs, b.inputs)
        assert np.array_equal(a.labels, b.labels)

    def test_provenance_recorded(self):
        ds = make_dataset(spec_local(), 5, RngStream(25, 42))
        assert (ds.seed, ds.stream_id) == (25, 42)
