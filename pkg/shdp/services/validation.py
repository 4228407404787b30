"""Self-check suite run by the ``validate`` command.

Each check computes a statistic, compares it with a threshold and reports PASS, FAIL
or SKIP. Monte-Carlo checks use standard-error based thresholds so that seeded runs
are stable; quadrature oracles use scipy.integrate.
"""

from collections import Counter
from functools import lru_cache
from typing import Callable, Dict, Any, Hashable, List, Mapping, NamedTuple, Optional, Tuple
import logging
import math
import os
import time

import numpy as np
from scipy import integrate, stats
from scipy.special import gammaln

from shdp.errors import ArgumentError
from shdp.models.chain import MCMCOptions, ModelConfig
from shdp.models.params import GammaPrior, GaussianParams, NormalInverseGammaParams
from shdp.models.partition import SetPartition
from shdp.services import partitions as parts
from shdp.services.data import DEFAULT_SIZES, dgp_moments, load_csv, simulate
from shdp.services.conjugate import nig_marginal_loglik, nig_update, normal_location_marginal_loglik, \
    normal_location_posterior
from shdp.services.sampler import (
    auxiliary_concentration_update,
    run_chain,
    sample_omega_escobar_west,
    sample_theta_labels,
    sir_log_weights,
    working_data,
)
from shdp.services.summaries import coclustering_matrix, summarize_response, tabulate_ordered_partitions, \
    tabulate_partitions
from shdp.services.symmetric_hdp import crf_generate, hdp_peppf_log, shdp_peppf_log, signed_outcome, \
    signed_outcome_probabilities

logger = logging.getLogger(__name__)

MC_SE_LIMIT = 3.0
MIN_EXPECTED = 5.0
PEPPF_LAYOUTS = ([1], [2], [3], [4], [1, 1], [1, 2], [2, 1], [1, 3], [3, 1], [2, 2])
KS_LIMIT = 0.02
REAL_DATA_ENV = 'SHDP_REAL_DATA'
REAL_SEVERITY_ORDER = ['C', 'G', 'M', 'S']
REFERENCE_MAP = {
    'CI': '{C,G,M}{S}',
    'CWI': '{C}{G,M,S}',
    'LVMI': '{C,G,M}{S}',
    'IVST': '{C}{G,M}{S}',
    'LVPW': '{C}{G,M}{S}',
    'EF': '{C,G,M,S}',
    'FS': '{C,G,M,S}',
    'EW': '{C,G,M}{S}',
    'AW': '{C}{G}{M}{S}',
    'E/A': '{C}{G}{M}{S}',
}
REFERENCE_CI_ORDERED = ('{S}<{C,G,M}', 0.463, 0.15)


class CheckResult:

    STATUS_PASS = 'PASS'
    STATUS_FAIL = 'FAIL'
    STATUS_SKIP = 'SKIP'

    def __init__(self, name: str, statistic: Optional[float], threshold: Optional[float],
                 status: str, detail: str = '', seconds: float = 0.0):
        self.name = name
        self.statistic = statistic
        self.threshold = threshold
        self.status = status
        self.detail = detail
        self.seconds = seconds

    @classmethod
    def at_most(cls, name: str, statistic: float, threshold: float, detail: str = '') -> 'CheckResult':
        passed = bool(np.isfinite(statistic)) and statistic <= threshold
        return cls(name, float(statistic), threshold, cls.STATUS_PASS if passed else cls.STATUS_FAIL, detail)

    @classmethod
    def at_least(cls, name: str, statistic: float, threshold: float, detail: str = '') -> 'CheckResult':
        passed = bool(np.isfinite(statistic)) and statistic >= threshold
        return cls(name, float(statistic), threshold, cls.STATUS_PASS if passed else cls.STATUS_FAIL, detail)

    @property
    def passed(self) -> bool:
        return self.status != self.STATUS_FAIL

    def to_dict(self) -> Dict[str, Any]:
        statistic = self.statistic
        if statistic is not None and not math.isfinite(statistic):
            statistic = str(statistic)
        return {
            'name': self.name,
            'status': self.status,
            'statistic': statistic,
            'threshold': self.threshold,
            'detail': self.detail,
            'seconds': round(self.seconds, 3),
        }


# Analytic identities

def check_restricted_normalizer(rng: np.random.Generator, scale: float) -> CheckResult:
    omegas = rng.gamma(3.0, 1.0, size=20) + 1e-3
    worst = max(abs(parts.restricted_normalizer(w, 4) / ((w + 2) * (w * w + w + 3)) - 1.0) for w in omegas)
    return CheckResult.at_most('restricted_normalizer', worst, 1e-10, 'relative error at 20 random omega, J=4')


def check_tie_weights(rng: np.random.Generator, scale: float) -> CheckResult:
    worst = 0.0
    for omega in (0.3, 1.0, 2.5):
        prior = parts.restricted_prior(omega, 4)
        for p in parts.enumerate_contiguous_partitions(4):
            mass = 1.0
            for j in range(2, 5):
                a = parts.theta_tie_weight(omega, j, p.prefix(j - 1))
                mass *= a if p.labels[j - 1] == p.labels[j - 2] else 1.0 - a
            worst = max(worst, abs(mass - prior.probability(p)))
    return CheckResult.at_most('tie_weights', worst, 1e-12, 'product of tie weights vs restricted prior mass')


def check_eppf_normalization(rng: np.random.Generator, scale: float) -> CheckResult:
    worst = 0.0
    for J in range(1, 7):
        for omega in (0.5, 1.0, 4.0):
            total = sum(math.exp(parts.dp_eppf_log(omega, p)) for p in parts.enumerate_set_partitions(J))
            worst = max(worst, abs(total - 1.0))
    return CheckResult.at_most('eppf_normalization', worst, 1e-12, 'J <= 6')


def check_sir_weight(rng: np.random.Generator, scale: float) -> CheckResult:
    value = math.exp(float(sir_log_weights(np.array([1.0]), [1], 4)[0]))
    return CheckResult.at_most('sir_weight', abs(value - 1.0 / 15.0), 1e-12, 'omega=1, M=1, T=1 gives 1/15')


def check_peppf_identity(rng: np.random.Generator, scale: float) -> CheckResult:
    worst = 0.0
    for counts in ([[2, 1], [0, 1]], [[1, 1], [1, 0]], [[3], [1]], [[1, 2, 1]]):
        plus = rng.integers(0, 2, size=np.shape(counts)) * np.asarray(counts)
        minus = np.asarray(counts) - plus
        n = int(np.sum(counts))
        diff = shdp_peppf_log(plus, minus, 1.3, 0.7) - (hdp_peppf_log(counts, 1.3, 0.7) - n * math.log(2.0))
        worst = max(worst, abs(diff))
    return CheckResult.at_most('peppf_identity', worst, 1e-12, 'signed vs unsigned log pEPPF')


# Monte-Carlo agreement

def standardized_chisquare(counts: Mapping[Hashable, int], probabilities: Mapping[Hashable, float]) -> float:
    """Pearson goodness of fit expressed in standard errors, (X^2 - df) / sqrt(2 df).

    Outcomes expected fewer than MIN_EXPECTED times are pooled into one cell. An
    observed outcome outside the support gives inf.
    """
    n = sum(counts.values())
    if n == 0:
        raise ArgumentError("Goodness of fit needs at least one observation")
    if any(hits > 0 and probabilities.get(key, 0.0) <= 0.0 for key, hits in counts.items()):
        return math.inf
    support = [(key, p) for key, p in probabilities.items() if p > 0.0]
    kept_obs, kept_exp = [], []
    pooled_obs, pooled_exp = 0.0, 0.0
    for key, p in support:
        if n * p < MIN_EXPECTED:
            pooled_obs += counts.get(key, 0)
            pooled_exp += n * p
        else:
            kept_obs.append(counts.get(key, 0))
            kept_exp.append(n * p)
    if pooled_exp > 0.0:
        if pooled_exp < MIN_EXPECTED and kept_exp:
            smallest = int(np.argmin(kept_exp))
            kept_obs[smallest] += pooled_obs
            kept_exp[smallest] += pooled_exp
        else:
            kept_obs.append(pooled_obs)
            kept_exp.append(pooled_exp)
    df = len(kept_exp) - 1
    if df < 1:
        return 0.0
    observed = np.asarray(kept_obs, dtype=float)
    expected = np.asarray(kept_exp, dtype=float)
    expected *= observed.sum() / expected.sum()
    x2 = stats.chisquare(observed, expected).statistic
    return float((x2 - df) / math.sqrt(2.0 * df))


def check_peppf_monte_carlo(rng: np.random.Generator, scale: float) -> CheckResult:
    gamma, alpha = 1.0, 1.5
    replicates = max(2000, int(200000 * scale))
    worst, worst_sizes = 0.0, None
    for sizes in PEPPF_LAYOUTS:
        counter: Counter = Counter(signed_outcome(crf_generate(gamma, alpha, sizes, rng))
                                   for _ in range(replicates))
        statistic = standardized_chisquare(counter, signed_outcome_probabilities(sizes, gamma, alpha))
        if worst_sizes is None or statistic > worst:
            worst, worst_sizes = statistic, sizes
    return CheckResult.at_most('peppf_monte_carlo', worst, MC_SE_LIMIT,
                               f"worst layout {worst_sizes} of {len(PEPPF_LAYOUTS)}, "
                               f"{replicates} franchise draws each")


# Quadrature oracles

def check_nig_quadrature(rng: np.random.Generator, scale: float) -> CheckResult:
    prior = NormalInverseGammaParams(0.0, 1.0, 2.0, 4.0)
    worst = 0.0
    for _ in range(max(5, int(50 * scale))):
        obs = rng.normal(0.0, 1.5, size=int(rng.integers(1, 4)))
        post = nig_update(prior, obs)

        def integrand(xi: float, s2: float) -> float:
            return math.exp(float(np.sum(stats.norm.logpdf(obs, xi, math.sqrt(s2))))
                            + stats.norm.logpdf(xi, prior.mu0, math.sqrt(s2 / prior.tau))
                            + stats.invgamma.logpdf(s2, prior.a, scale=prior.b))

        width = lambda s2: 15.0 * math.sqrt(s2 / post.tau)
        value, _ = integrate.dblquad(integrand, 0.0, np.inf,
                                     lambda s2: post.mu0 - width(s2), lambda s2: post.mu0 + width(s2),
                                     epsabs=0.0, epsrel=1e-10)
        worst = max(worst, abs(math.exp(nig_marginal_loglik(prior, obs)) / value - 1.0))
    return CheckResult.at_most('nig_marginal_quadrature', worst, 1e-6, 'relative error vs 2-D quadrature')


def check_location_quadrature(rng: np.random.Generator, scale: float) -> CheckResult:
    prior = GaussianParams(0.0, 1.0)
    worst = 0.0
    for _ in range(max(5, int(50 * scale))):
        n = int(rng.integers(1, 4))
        z = rng.normal(0.5, 1.0, size=n)
        s2 = rng.gamma(2.0, 0.5, size=n)
        post = normal_location_posterior(prior, z, s2)

        def integrand(theta: float) -> float:
            return math.exp(float(np.sum(stats.norm.logpdf(z, theta, np.sqrt(s2))))
                            + stats.norm.logpdf(theta, prior.mean, prior.sd))

        value, _ = integrate.quad(integrand, post.mean - 15 * post.sd, post.mean + 15 * post.sd,
                                  epsabs=0.0, epsrel=1e-12, limit=200)
        worst = max(worst, abs(math.exp(normal_location_marginal_loglik(prior, z, s2)) / value - 1.0))
    return CheckResult.at_most('location_marginal_quadrature', worst, 1e-8, 'relative error vs 1-D quadrature')


# Prior-only Gibbs

def prior_only_frequencies(mode: str, omega: float, J: int, sweeps: int, rng: np.random.Generator,
                           scans_per_draw: int = 1) -> Counter:
    """Partition frequencies of the location sampler with a flat likelihood."""
    z = [np.zeros(1) for _ in range(J)]
    s2 = [np.ones(1) for _ in range(J)]
    G = GaussianParams(0.0, 1.0)
    labels = np.arange(J)
    theta = rng.normal(size=J)
    counts: Counter = Counter()
    for _ in range(sweeps):
        for _ in range(scans_per_draw):
            labels, theta = sample_theta_labels(labels, theta, z, s2, omega, G, mode, rng, flat_likelihood=True)
        counts[SetPartition(labels.tolist())] += 1
    return counts


def check_prior_only_gibbs(rng: np.random.Generator, scale: float) -> CheckResult:
    J, omega = 4, 1.0
    sweeps = max(2000, int(100000 * scale))
    worst, worst_mode = 0.0, None
    for mode, scans in ((ModelConfig.MODE_RESTRICTED, 1), (ModelConfig.MODE_UNIFORM, 1), (ModelConfig.MODE_DP, 10)):
        target = dict(parts.location_prior(mode, omega, J))
        counts = prior_only_frequencies(mode, omega, J, sweeps, rng, scans)
        statistic = standardized_chisquare(counts, target)
        if worst_mode is None or statistic > worst:
            worst, worst_mode = statistic, mode
    return CheckResult.at_most('prior_only_gibbs', worst, MC_SE_LIMIT,
                               f"worst mode {worst_mode}, {sweeps} draws per mode")


# Concentration samplers

def omega_posterior_cdf(n_blocks: List[int], J: int, prior: GammaPrior) -> Callable[[np.ndarray], np.ndarray]:
    """Grid CDF of p(omega | T) for M DP partitions of J items."""
    grid = np.linspace(1e-6, 40.0, 40001)
    log_density = stats.gamma.logpdf(grid, prior.shape, scale=1.0 / prior.rate)
    for T in n_blocks:
        log_density += T * np.log(grid) + gammaln(grid) - gammaln(grid + J)
    density = np.exp(log_density - log_density.max())
    cdf = integrate.cumulative_trapezoid(density, grid, initial=0.0)
    cdf /= cdf[-1]
    return lambda x: np.interp(x, grid, cdf)


def check_escobar_west(rng: np.random.Generator, scale: float) -> CheckResult:
    n_blocks, J, prior = [2, 3], 4, GammaPrior(3.0, 3.0)
    draws = max(5000, int(100000 * scale))
    omega = prior.mean
    out = np.empty(draws)
    for t in range(draws + 200):
        omega = sample_omega_escobar_west(n_blocks, J, omega, prior, rng)
        if t >= 200:
            out[t - 200] = omega
    ks = stats.kstest(out, omega_posterior_cdf(n_blocks, J, prior)).statistic
    limit = KS_LIMIT * math.sqrt(max(1.0, 100000.0 / draws))
    return CheckResult.at_most('escobar_west_ks', ks, limit, f"{draws} chained draws, T={n_blocks}, J={J}")


def check_concentration_update(rng: np.random.Generator, scale: float) -> CheckResult:
    prior = GammaPrior(3.0, 3.0)
    draws = max(5000, int(100000 * scale))
    value = prior.mean
    out = np.empty(draws)
    for t in range(draws):
        value = auxiliary_concentration_update(value, [1], [1], prior, rng)
        out[t] = value
    ks = stats.kstest(out, stats.gamma(prior.shape, scale=1.0 / prior.rate).cdf).statistic
    limit = KS_LIMIT * math.sqrt(max(1.0, 100000.0 / draws))
    return CheckResult.at_most('concentration_update_ks', ks, limit, 'one customer at one table keeps the prior')


# Simulation studies

STUDY_REPLICATES = 10
STUDY_ITERATIONS = 10000
STUDY_KEPT_DRAWS = 1000
DGP1_MAP = (0, 1, 1, 2)
DGP1_MAP_PROBABILITY = (0.771, 0.20)
OUTLIER_COCLUSTER_LIMIT = 0.3


class ReplicateOutcome(NamedTuple):
    """What one simulated replicate contributes to the study checks."""

    map_partition: Tuple[int, ...]
    map_probability: float
    finest_probability: float
    outlier_max_coclust: float
    count_mode: int
    binder_blocks: int
    means_covered: bool


def study_options(scale: float) -> MCMCOptions:
    iterations = max(200, int(STUDY_ITERATIONS * scale))
    burn_in = iterations // 2
    return MCMCOptions(iterations=iterations, burn_in=burn_in,
                       thin=max(1, (iterations - burn_in) // STUDY_KEPT_DRAWS))


def run_replicate(dgp: str, seed: int, replicate: int, options: MCMCOptions,
                  sizes: Tuple[int, ...] = DEFAULT_SIZES) -> ReplicateOutcome:
    """Simulate one dataset, run one chain and reduce its summary to a ReplicateOutcome."""
    data_seed = int(np.random.SeedSequence([seed, replicate]).generate_state(1)[0])
    data = simulate(dgp, sizes, seed=data_seed)
    config = ModelConfig()
    work = working_data(data, config)
    rng = np.random.default_rng([seed, replicate, 1])
    records = [record for batch in run_chain(work, config, options, rng, chain=replicate) for record in batch]

    summary = summarize_response([records], 0, data.response_labels[0], config.P0_for(0),
                                 standardization=work.standardization, signed=True)
    partition, probability = summary.partition_probs.map_partition()
    finest = SetPartition(list(range(len(sizes))))

    outlier = sizes[0] - 1
    unsigned = coclustering_matrix(records, signed=False)
    others = np.delete(unsigned[outlier], outlier)

    pmf = summary.cluster_count_pmf
    true_means = dgp_moments(dgp, sizes)[0]
    covered = all(lo <= mu <= hi for mu, (_, lo, hi) in zip(true_means, summary.theta_ci))
    outcome = ReplicateOutcome(
        map_partition=tuple(partition.labels),
        map_probability=float(probability),
        finest_probability=float(summary.partition_probs.probability(finest)),
        outlier_max_coclust=float(others.max()),
        count_mode=max(pmf, key=pmf.get),
        binder_blocks=int(summary.binder.max()) + 1,
        means_covered=bool(covered),
    )
    logger.debug(f"Replicate {replicate} of {dgp}: {outcome}")
    return outcome


@lru_cache(maxsize=8)
def replicate_study(dgp: str, seed: int, replicates: int, iterations: int, burn_in: int,
                    thin: int) -> Tuple[ReplicateOutcome, ...]:
    """Seeded replicates of one design; cached so several checks share the same runs."""
    options = MCMCOptions(iterations=iterations, burn_in=burn_in, thin=thin)
    logger.info(f"Replicate study {dgp}: {replicates} replicates of {iterations} iterations")
    return tuple(run_replicate(dgp, seed, r, options) for r in range(replicates))


def _study(dgp: str, seed: int, scale: float) -> Tuple[ReplicateOutcome, ...]:
    options = study_options(scale)
    return replicate_study(dgp, seed, STUDY_REPLICATES, options.iterations, options.burn_in, options.thin)


def check_table1_replicates(rng: np.random.Generator, scale: float, seed: int = 0) -> CheckResult:
    outcomes = _study('main', seed, scale)
    finest = tuple(range(len(DEFAULT_SIZES)))
    hits = sum(o.map_partition == finest for o in outcomes)
    mean_probability = float(np.mean([o.finest_probability for o in outcomes]))
    detail = (f"finest partition is MAP in {hits}/{len(outcomes)}, "
              f"mean posterior probability {mean_probability:.3f}")
    if mean_probability < 0.75:
        return CheckResult('table1_replicates', float(hits), 8.0, CheckResult.STATUS_FAIL, detail)
    return CheckResult.at_least('table1_replicates', float(hits), 8.0, detail)


def check_dgp1_outlier(rng: np.random.Generator, scale: float, seed: int = 0) -> CheckResult:
    outcomes = _study('dgp1', seed, scale)
    target, tolerance = DGP1_MAP_PROBABILITY
    hits = sum(o.map_partition == DGP1_MAP and abs(o.map_probability - target) <= tolerance for o in outcomes)
    isolated = sum(o.outlier_max_coclust <= OUTLIER_COCLUSTER_LIMIT for o in outcomes)
    detail = (f"MAP {{1}}{{2,3}}{{4}} within {target} +/- {tolerance} in {hits}/{len(outcomes)}; "
              f"outlier isolated in {isolated}/{len(outcomes)}")
    return CheckResult.at_least('dgp1_outlier', float(min(hits, isolated)), 7.0, detail)


def check_cluster_recovery(rng: np.random.Generator, scale: float, seed: int = 0) -> CheckResult:
    outcomes = _study('main', seed, scale)
    mode_hits = sum(o.count_mode == 2 for o in outcomes)
    binder_hits = sum(o.binder_blocks == 2 for o in outcomes)
    covered = sum(o.means_covered for o in outcomes)
    detail = (f"signed cluster-count mode 2 in {mode_hits}, Binder 2 blocks in {binder_hits}, "
              f"true means covered in {covered} of {len(outcomes)}")
    if covered < 8:
        return CheckResult('cluster_recovery', float(min(mode_hits, binder_hits)), 7.0,
                           CheckResult.STATUS_FAIL, detail)
    return CheckResult.at_least('cluster_recovery', float(min(mode_hits, binder_hits)), 7.0, detail)


# Real data

def check_real_dataset(rng: np.random.Generator, scale: float, path: Optional[str] = None,
                       options: Optional[MCMCOptions] = None) -> CheckResult:
    path = path or os.getenv(REAL_DATA_ENV)
    if not path or not os.path.exists(path):
        return CheckResult('real_dataset', None, 8.0, CheckResult.STATUS_SKIP,
                           f"dataset not found (set {REAL_DATA_ENV})")

    data = load_csv(path, severity_order=REAL_SEVERITY_ORDER)
    config = ModelConfig()
    options = options or MCMCOptions()
    work = working_data(data, config)
    records: List[Dict[str, Any]] = []
    for batch in run_chain(work, config, options, rng):
        records.extend(batch)

    matches = 0
    for m, label in enumerate(data.response_labels):
        expected = REFERENCE_MAP.get(label)
        own = [r for r in records if r['m'] == m]
        found, _ = tabulate_partitions(own).map_partition()
        if expected is not None and found.to_string(data.population_labels) == expected:
            matches += 1
    detail = f"{matches} of {len(REFERENCE_MAP)} MAP partitions reproduced"
    if 'CI' in data.response_labels:
        key, target, tolerance = REFERENCE_CI_ORDERED
        own = [r for r in records if r['m'] == data.response_labels.index('CI')]
        ordered = tabulate_ordered_partitions(own, data.population_labels).get(key, 0.0)
        detail += f"; CI {key} = {ordered:.3f}"
        if abs(ordered - target) > tolerance:
            return CheckResult('real_dataset', float(matches), 8.0, CheckResult.STATUS_FAIL, detail)
    return CheckResult.at_least('real_dataset', float(matches), 8.0, detail)


CHECKS = [
    ('restricted_normalizer', check_restricted_normalizer),
    ('tie_weights', check_tie_weights),
    ('eppf_normalization', check_eppf_normalization),
    ('sir_weight', check_sir_weight),
    ('peppf_identity', check_peppf_identity),
    ('peppf_monte_carlo', check_peppf_monte_carlo),
    ('nig_marginal_quadrature', check_nig_quadrature),
    ('location_marginal_quadrature', check_location_quadrature),
    ('prior_only_gibbs', check_prior_only_gibbs),
    ('escobar_west_ks', check_escobar_west),
    ('concentration_update_ks', check_concentration_update),
    ('table1_replicates', check_table1_replicates),
    ('dgp1_outlier', check_dgp1_outlier),
    ('cluster_recovery', check_cluster_recovery),
    ('real_dataset', check_real_dataset),
]
STUDY_CHECKS = (check_table1_replicates, check_dgp1_outlier, check_cluster_recovery)


def run_validation(seed: int = 0, quick: bool = False, inject_fault: Optional[str] = None,
                   only: Optional[List[str]] = None, real_data_path: Optional[str] = None,
                   real_data_options: Optional[MCMCOptions] = None) -> List[CheckResult]:
    """Run the suite; ``inject_fault`` names a check whose statistic is corrupted."""
    names = [name for name, _ in CHECKS]
    if inject_fault is not None and inject_fault not in names:
        raise ArgumentError(f"Unknown check for fault injection: {inject_fault}. Must be one of {names}")
    scale = 0.05 if quick else 1.0
    results = []
    for name, check in CHECKS:
        if only and name not in only:
            continue
        rng = np.random.default_rng([seed, names.index(name)])
        started = time.perf_counter()
        if check is check_real_dataset:
            result = check(rng, scale, real_data_path, real_data_options)
        elif check in STUDY_CHECKS:
            result = check(rng, scale, seed)
        else:
            result = check(rng, scale)
        result.seconds = time.perf_counter() - started
        if name == inject_fault:
            result.statistic = math.inf
            result.status = CheckResult.STATUS_FAIL
            result.detail = f"fault injected; {result.detail}"
        logger.info(f"Check {name}: {result.status} (statistic={result.statistic}, threshold={result.threshold})")
        results.append(result)
    return results
