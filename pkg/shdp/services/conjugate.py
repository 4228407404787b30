"""Gaussian kernels and conjugate updates for the dish and location base measures.

Convention: xi | sigma2 ~ N(mu0, sigma2 / tau), sigma2 ~ InvGamma(a, b), so ``tau``
multiplies the precision of xi given sigma2.
"""

from typing import Sequence, Tuple, Union
import math

import numpy as np
from scipy.special import gammaln

from shdp.errors import ArgumentError
from shdp.models.params import GaussianParams, NormalInverseGammaParams

LOG_2PI = math.log(2.0 * math.pi)

ArrayLike = Union[float, Sequence[float], np.ndarray]


def normal_logpdf(x: ArrayLike, p: GaussianParams) -> Union[float, np.ndarray]:
    """log N(x; mean, variance)."""
    return gaussian_logpdf(x, p.mean, p.variance)


def gaussian_logpdf(x: ArrayLike, mean: ArrayLike, variance: ArrayLike) -> Union[float, np.ndarray]:
    x = np.asarray(x, dtype=float)
    mean = np.asarray(mean, dtype=float)
    variance = np.asarray(variance, dtype=float)
    out = -0.5 * (LOG_2PI + np.log(variance) + (x - mean) ** 2 / variance)
    return float(out) if out.ndim == 0 else out


def nig_update(prior: NormalInverseGammaParams, obs: ArrayLike) -> NormalInverseGammaParams:
    """Posterior NIG parameters after observing ``obs`` ~ N(xi, sigma2)."""
    x = np.atleast_1d(np.asarray(obs, dtype=float))
    n = x.size
    if n == 0:
        return NormalInverseGammaParams(prior.mu0, prior.tau, prior.a, prior.b)
    xbar = float(np.mean(x))
    tau_n = prior.tau + n
    mu_n = (prior.tau * prior.mu0 + n * xbar) / tau_n
    a_n = prior.a + 0.5 * n
    b_n = (prior.b + 0.5 * float(np.sum((x - xbar) ** 2))
           + prior.tau * n * (xbar - prior.mu0) ** 2 / (2.0 * tau_n))
    return NormalInverseGammaParams(mu_n, tau_n, a_n, b_n)


def nig_marginal_loglik(prior: NormalInverseGammaParams, obs: ArrayLike) -> float:
    """log of the joint marginal density of ``obs`` with (xi, sigma2) integrated out."""
    x = np.atleast_1d(np.asarray(obs, dtype=float))
    n = x.size
    if n == 0:
        return 0.0
    post = nig_update(prior, x)
    return float(gammaln(post.a) - gammaln(prior.a)
                 + prior.a * math.log(prior.b) - post.a * math.log(post.b)
                 + 0.5 * (math.log(prior.tau) - math.log(post.tau))
                 - 0.5 * n * LOG_2PI)


def nig_predictive_logpdf(prior: NormalInverseGammaParams, x: ArrayLike) -> Union[float, np.ndarray]:
    """Elementwise one-point marginal log-density (a Student-t); vectorized over ``x``."""
    x = np.asarray(x, dtype=float)
    tau_n = prior.tau + 1.0
    a_n = prior.a + 0.5
    b_n = prior.b + prior.tau * (x - prior.mu0) ** 2 / (2.0 * tau_n)
    out = (gammaln(a_n) - gammaln(prior.a) + prior.a * math.log(prior.b) - a_n * np.log(b_n)
           + 0.5 * (math.log(prior.tau) - math.log(tau_n)) - 0.5 * LOG_2PI)
    return float(out) if np.ndim(out) == 0 else out


def nig_sample(params: NormalInverseGammaParams, rng: np.random.Generator) -> Tuple[float, float]:
    """Draw (xi, sigma2) from NIG(params)."""
    sigma2 = params.b / rng.gamma(params.a, 1.0)
    xi = rng.normal(params.mu0, math.sqrt(sigma2 / params.tau))
    return float(xi), float(sigma2)


def _location_inputs(z: ArrayLike, sigmas2: ArrayLike) -> Tuple[np.ndarray, np.ndarray]:
    z = np.atleast_1d(np.asarray(z, dtype=float))
    sigmas2 = np.atleast_1d(np.asarray(sigmas2, dtype=float))
    if z.shape != sigmas2.shape:
        raise ArgumentError(f"z has {z.size} entries but sigmas2 has {sigmas2.size}")
    return z, sigmas2


def normal_location_posterior(prior: GaussianParams, z: ArrayLike, sigmas2: ArrayLike) -> GaussianParams:
    """Posterior of theta given z_i ~ N(theta, sigma_i^2) and theta ~ prior."""
    z, sigmas2 = _location_inputs(z, sigmas2)
    if z.size == 0:
        return GaussianParams(prior.mean, prior.variance)
    precision = 1.0 / prior.variance + float(np.sum(1.0 / sigmas2))
    mean = (prior.mean / prior.variance + float(np.sum(z / sigmas2))) / precision
    return GaussianParams(mean, 1.0 / precision)


def normal_location_marginal_loglik(prior: GaussianParams, z: ArrayLike, sigmas2: ArrayLike) -> float:
    """log of the marginal density of z with theta integrated against the prior."""
    z, sigmas2 = _location_inputs(z, sigmas2)
    n = z.size
    if n == 0:
        return 0.0
    post = normal_location_posterior(prior, z, sigmas2)
    quad = float(np.sum((z - post.mean) ** 2 / sigmas2)) + (prior.mean - post.mean) ** 2 / prior.variance
    return float(-0.5 * n * LOG_2PI - 0.5 * np.sum(np.log(sigmas2)) - 0.5 * math.log(prior.variance)
                 + 0.5 * math.log(post.variance) - 0.5 * quad)
