import logging

import numpy as np
import pytest
from scipy import integrate

from rdsmc.core import RngStream
from rdsmc.targets import (
    FunnelTarget,
    GaussianTarget,
    GmmTarget,
    LogRegTarget,
    RingsTarget,
    gmm_generate,
    load_dataset,
    target_logpdf_and_grad,
)


def _fd_check(target, x, h=1e-5, rtol=1e-5, atol=1e-6):
    _, g = target.log_prob_and_grad(x)
    fd = np.empty_like(x)
    for j in range(x.shape[-1]):
        e = np.zeros(x.shape[-1])
        e[j] = h
        fd[..., j] = (target.log_prob(x + e) - target.log_prob(x - e)) / (2 * h)
    err = np.abs(fd - g)
    assert np.all(err <= atol + rtol * np.abs(g)), err.max()


def _logreg(rng, m=30, p=4):
    X = rng.normal(size=(m, p))
    y = (rng.random(m) < 0.5).astype(float)
    return LogRegTarget(X, y)


class TestGradients:
    def test_gmm(self):
        t = gmm_generate(3, seed=2, box_width=6.0)
        x = np.random.default_rng(0).normal(size=(100, 3)) * 3
        _fd_check(t, x)

    def test_rings(self):
        rng = np.random.default_rng(1)
        theta = rng.uniform(0, 2 * np.pi, 100)
        r = rng.uniform(0.5, 4.5, 100)
        _fd_check(RingsTarget(), np.stack([r * np.cos(theta), r * np.sin(theta)], 1), h=1e-6)

    def test_funnel(self):
        x = np.random.default_rng(2).normal(size=(100, 10))
        _fd_check(FunnelTarget(), x)

    def test_logreg(self):
        rng = np.random.default_rng(3)
        _fd_check(_logreg(rng), rng.normal(size=(100, 5)))

    def test_gaussian(self):
        t = GaussianTarget(np.array([1.0, -2.0]), std=1.5, scale=3.0)
        _fd_check(t, np.random.default_rng(4).normal(size=(100, 2)))


class TestValues:
    def test_gmm_at_dominant_mean(self):
        t = GmmTarget(np.array([[-40.0, 0.0], [40.0, 0.0]]))
        # log 0.9 - log(2 pi * 2 log 2); the cross term is below e^-1000
        assert t.log_prob(np.array([40.0, 0.0])) == pytest.approx(-2.26987, abs=1e-5)

    def test_funnel_at_origin(self):
        # -0.5 log(18 pi) - 4.5 log(2 pi)
        assert FunnelTarget().log_prob(np.zeros(10)) == pytest.approx(-10.28800, abs=1e-5)

    def test_logreg_empty_data_is_prior(self):
        t = LogRegTarget(np.zeros((0, 3)), np.zeros(0))
        expected = -1.5 * np.log(2 * np.pi) - 0.5 * np.log(2 * np.pi * 6.25)
        assert t.log_prob(np.zeros(4)) == pytest.approx(expected)

    def test_logreg_stable_at_extreme_logits(self):
        t = LogRegTarget(np.array([[1.0]]), np.array([1.0]))
        lp, g = t.log_prob_and_grad(np.array([1000.0, 0.0]))
        assert np.isfinite(lp) and np.all(np.isfinite(g))

    def test_rings_origin(self):
        lp, g = RingsTarget().log_prob_and_grad(np.zeros(2))
        assert lp == -np.inf
        assert np.all(np.isnan(g))

    def test_dimension_check(self):
        with pytest.raises(ValueError):
            target_logpdf_and_grad(FunnelTarget(), np.zeros(3))


class TestNormalization:
    @staticmethod
    def _quad(f, lim):
        xs = np.linspace(-lim, lim, 1601)
        X, Y = np.meshgrid(xs, xs, indexing="ij")
        vals = np.exp(f(np.stack([X, Y], -1)))
        return integrate.trapezoid(integrate.trapezoid(vals, xs, axis=1), xs)

    def test_gmm(self):
        t = GmmTarget(np.array([[-3.0, 1.0], [2.0, -1.0]]))
        assert self._quad(t.log_prob, 12.0) == pytest.approx(1.0, abs=1e-3)

    def test_rings(self):
        assert self._quad(RingsTarget().log_prob, 5.5) == pytest.approx(1.0, abs=1e-3)

    def test_funnel_two_dim(self):
        t = FunnelTarget(dim=2)
        x1 = np.linspace(-30, 30, 2401)
        z = np.linspace(-12, 12, 2401)
        # the x2 grid follows the conditional scale exp(x1 / 2) so every slice is resolved
        X2 = np.exp(0.5 * x1)[:, None] * z[None, :]
        X1 = np.broadcast_to(x1[:, None], X2.shape)
        dens = np.exp(t.log_prob(np.stack([X1, X2], -1)))
        inner = integrate.trapezoid(dens, X2, axis=1)
        assert integrate.trapezoid(inner, x1) == pytest.approx(1.0, abs=1e-3)


class TestSamplers:
    def test_funnel_sampler_moments(self):
        x = FunnelTarget().sample(RngStream(0, ("metric",)), 100_000)
        assert abs(x[:, 0].mean()) < 3 * 3 / np.sqrt(1e5)
        assert x[:, 0].var() == pytest.approx(9.0, rel=0.05)

    def test_rings_radius_positive(self):
        r = RingsTarget().sample_radius(RngStream(1), 10_000)
        assert np.all(r > 0)

    def test_gmm_sampler_weights(self):
        t = gmm_generate(2, seed=0)
        x = t.sample(RngStream(2), 50_000)
        share = np.mean(np.argmax(t.component_log_probs(x), axis=1) == 0)
        assert share == pytest.approx(0.1, abs=0.01)


class TestGmmGenerate:
    def test_deterministic(self):
        np.testing.assert_array_equal(gmm_generate(4, seed=3).means, gmm_generate(4, seed=3).means)

    def test_support_and_mean(self):
        means = np.concatenate([gmm_generate(50, seed=s).means for s in range(100)])
        assert np.all(np.abs(means) <= 40)
        assert abs(means.mean()) < 1.2

    def test_bad_dimension(self):
        with pytest.raises(ValueError):
            gmm_generate(0)

    def test_log_z_zero(self):
        assert gmm_generate(2).log_Z == 0.0

    def test_noised_marginal_matches_quadrature(self):
        t = GmmTarget(np.array([[-1.0], [2.0]]), variance=0.5)
        a, s, x = 0.6, 0.8, np.array([0.3])
        u = np.linspace(-15, 15, 20001)[:, None]
        integrand = np.exp(t.log_prob(u) - 0.5 * ((x - a * u[:, 0]) ** 2) / s**2) / np.sqrt(2 * np.pi * s**2)
        assert np.exp(t.noised_log_marginal(x, a, s)) == pytest.approx(integrate.trapezoid(integrand, u[:, 0]), rel=1e-8)


class TestLoadDataset:
    def test_toy_split(self, tmp_path):
        rng = np.random.default_rng(0)
        data = np.column_stack([rng.normal(size=(10, 3)), rng.integers(0, 2, 10)])
        p = tmp_path / "toy.csv"
        np.savetxt(p, data, delimiter=",", header="a,b,c,label", comments="")
        tr, va, te = load_dataset(p, split_seed=5)
        assert (len(tr), len(va), len(te)) == (6, 2, 2)
        np.testing.assert_allclose(tr.X.mean(0), 0.0, atol=1e-10)
        np.testing.assert_allclose(tr.X.std(0), 1.0, atol=1e-10)
        tr2, _, te2 = load_dataset(p, split_seed=5)
        np.testing.assert_array_equal(tr.X, tr2.X)
        np.testing.assert_array_equal(te.y, te2.y)

    def test_constant_column_warns(self, tmp_path, caplog):
        data = np.column_stack([np.ones(10), np.arange(10.0), np.arange(10) % 2])
        p = tmp_path / "c.tsv"
        np.savetxt(p, data, delimiter="\t")
        with caplog.at_level(logging.WARNING):
            tr, _, _ = load_dataset(p)
        assert "constant" in caplog.text
        assert np.all(np.isfinite(tr.X))

    def test_non_numeric_cell(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("1,2,0\n3,x,1\n4,5,0\n")
        with pytest.raises(ValueError):
            load_dataset(p)

    def test_labels_must_be_binary(self, tmp_path):
        p = tmp_path / "lab.csv"
        p.write_text("1,2,0\n3,4,2\n4,5,0\n")
        with pytest.raises(ValueError):
            load_dataset(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_dataset(tmp_path / "nope.csv")
