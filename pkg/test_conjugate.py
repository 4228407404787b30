import math

import numpy as np
import pytest
from scipy import integrate, stats

from shdp.errors import ArgumentError, DomainError
from shdp.models.params import GaussianParams, NormalInverseGammaParams
from shdp.services.conjugate import (
    nig_marginal_loglik,
    nig_predictive_logpdf,
    nig_sample,
    nig_update,
    normal_location_marginal_loglik,
    normal_location_posterior,
)

PRIOR = NormalInverseGammaParams(0.0, 1.0, 2.0, 4.0)


def test_batch_update_equals_sequential():
    obs = [0.3, -1.2, 2.4, 0.9]
    batch = nig_update(PRIOR, obs)
    step = PRIOR
    for x in obs:
        step = nig_update(step, [x])
    assert batch.mu0 == pytest.approx(step.mu0)
    assert batch.tau == pytest.approx(step.tau)
    assert batch.a == pytest.approx(step.a)
    assert batch.b == pytest.approx(step.b)
    assert nig_update(PRIOR, []) == PRIOR


def test_marginal_chain_rule():
    obs = [0.5, -0.7, 1.8]
    total = 0.0
    params = PRIOR
    for x in obs:
        total += nig_predictive_logpdf(params, x)
        params = nig_update(params, [x])
    assert nig_marginal_loglik(PRIOR, obs) == pytest.approx(total, abs=1e-12)
    assert nig_marginal_loglik(PRIOR, []) == 0.0
    assert nig_predictive_logpdf(PRIOR, 0.7) == pytest.approx(nig_marginal_loglik(PRIOR, [0.7]))


def test_marginal_matches_quadrature():
    x = 0.7
    prior = NormalInverseGammaParams(0.2, 1.5, 3.0, 2.0)

    def integrand(xi, sigma2):
        return (stats.norm.pdf(x, xi, math.sqrt(sigma2))
                * stats.norm.pdf(xi, prior.mu0, math.sqrt(sigma2 / prior.tau))
                * stats.invgamma.pdf(sigma2, prior.a, scale=prior.b))

    post = nig_update(prior, [x])
    value, _ = integrate.dblquad(integrand, 0.0, np.inf,
                                 lambda s2: post.mu0 - 15 * math.sqrt(s2 / post.tau),
                                 lambda s2: post.mu0 + 15 * math.sqrt(s2 / post.tau),
                                 epsabs=1e-12, epsrel=1e-10)
    assert math.exp(nig_marginal_loglik(prior, [x])) == pytest.approx(value, abs=1e-6)


def test_predictive_is_a_density():
    value, _ = integrate.quad(lambda x: math.exp(nig_predictive_logpdf(PRIOR, x)), -np.inf, np.inf)
    assert value == pytest.approx(1.0, abs=1e-8)
    grid = np.linspace(-3, 3, 7)
    assert nig_predictive_logpdf(PRIOR, grid).shape == (7,)


def test_nig_sample_moments():
    rng = np.random.default_rng(3)
    params = NormalInverseGammaParams(1.5, 2.0, 5.0, 4.0)
    draws = np.array([nig_sample(params, rng) for _ in range(20000)])
    # sigma2 ~ InvGamma(5, 4) has mean 1 and variance 1/3
    assert draws[:, 1].mean() == pytest.approx(1.0, abs=4 * math.sqrt(1 / 3 / 20000))
    assert draws[:, 0].mean() == pytest.approx(1.5, abs=0.02)


def test_location_posterior():
    prior = GaussianParams(0.0, 4.0)
    assert normal_location_posterior(prior, [], []) == prior
    post = normal_location_posterior(prior, [1.0, 2.0], [1.0, 1.0])
    assert post.variance == pytest.approx(1 / (0.25 + 2))
    assert post.mean == pytest.approx(3.0 * post.variance)
    with pytest.raises(ArgumentError):
        normal_location_posterior(prior, [1.0], [1.0, 2.0])


def test_location_marginal_matches_quadrature():
    prior = GaussianParams(0.5, 2.0)
    z, s2 = np.array([0.2, 1.1]), np.array([0.5, 1.5])

    def integrand(theta):
        return stats.norm.pdf(theta, prior.mean, prior.sd) * np.prod(stats.norm.pdf(z, theta, np.sqrt(s2)))

    value, _ = integrate.quad(integrand, -np.inf, np.inf, epsabs=1e-13)
    assert math.exp(normal_location_marginal_loglik(prior, z, s2)) == pytest.approx(value, abs=1e-8)


def test_parameter_domains():
    with pytest.raises(DomainError):
        NormalInverseGammaParams(0.0, 0.0, 2.0, 4.0)
    with pytest.raises(DomainError):
        GaussianParams(0.0, -1.0)
