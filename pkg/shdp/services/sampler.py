"""Marginal Gibbs sampler over locations, franchises and concentrations.

One sweep updates, for every response: the franchise (tables, signs, dishes,
atoms) given the location residuals, then the location labels and values given
the dish residuals. After all responses it updates omega and finally the
restaurant and franchise concentrations.
"""

from typing import Any, Callable, Dict, Iterator, List, Optional, Sequence, Tuple
import logging
import math

import numpy as np
from scipy.special import gammaln

from shdp.errors import DataValidationError, NumericalError
from shdp.models.chain import ChainState, MCMCOptions, ModelConfig
from shdp.models.dataset import Dataset
from shdp.models.franchise import DishAtom, FranchiseState
from shdp.models.params import GammaPrior, GaussianParams, NormalInverseGammaParams
from shdp.models.partition import SetPartition
from shdp.services.conjugate import (
    gaussian_logpdf,
    nig_sample,
    nig_update,
    normal_location_marginal_loglik,
    normal_location_posterior,
)
from shdp.services.data import standardize
from shdp.services.partitions import is_order_consistent, restricted_normalizer_log_array, tie_weight
from shdp.services.symmetric_hdp import (
    dish_full_conditional,
    resample_atoms,
    sample_new_table,
    sign_full_conditional,
    signed_residuals_by_dish,
    table_full_conditional,
)
from shdp.utils.helpers import sample_log_categorical, systematic_resample

logger = logging.getLogger(__name__)


def init_state(data: Dataset, config: ModelConfig, rng: np.random.Generator, chain: int = 0) -> ChainState:
    """Finest location partition at the population means; one shared dish per response."""
    if any(n < 1 for n in data.sizes):
        raise DataValidationError(f"Every population needs at least one patient, got sizes {data.sizes}")
    config.check_responses(data.M)
    J, M = data.J, data.M
    theta = np.array([[float(np.mean(block[:, m])) for block in data.values] for m in range(M)])
    labels = np.vstack([_adjacent_tie_labels(theta[m]) for m in range(M)])

    gamma0 = config.gamma_prior.mean
    alpha0 = config.alpha_prior.mean
    franchises = []
    for m in range(M):
        franchise = FranchiseState(data.sizes, gamma0, alpha0)
        residuals = np.concatenate([block[:, m] - theta[m, j] for j, block in enumerate(data.values)])
        atom = DishAtom(*nig_sample(nig_update(config.P0_for(m), residuals), rng))
        dish = franchise.open_dish(atom)
        for j in range(J):
            table = franchise.open_table(j, dish)
            for i in range(data.sizes[j]):
                franchise.add_customer(j, i, table, 1)
        franchises.append(franchise)
    logger.debug(f"Initialized chain {chain}: J={J}, M={M}, omega={config.omega_prior.mean}")
    return ChainState(theta, labels, franchises, config.omega_prior.mean, iteration=0, chain=chain)


def _adjacent_tie_labels(values: np.ndarray) -> np.ndarray:
    labels = [0]
    for j in range(1, len(values)):
        labels.append(labels[-1] if values[j] == values[j - 1] else labels[-1] + 1)
    return np.array(labels, dtype=np.int64)


# Franchise phase

def update_franchise(franchise: FranchiseState, residuals: Sequence[np.ndarray],
                     prior: NormalInverseGammaParams, rng: np.random.Generator) -> None:
    """Tables and signs customer by customer, then table dishes, then all atoms."""
    for j in range(franchise.J):
        eps_j = residuals[j]
        for i in range(franchise.sizes[j]):
            eps = float(eps_j[i])
            franchise.remove_customer(j, i)
            conditional = table_full_conditional(franchise, eps, j, prior)
            pick = sample_log_categorical(conditional.log_weights, rng)
            if pick < len(conditional.tables):
                table = conditional.tables[pick]
                atom = franchise.menu[franchise.dish_of_table[j][table]]
                sign = 1 if rng.random() < sign_full_conditional(atom, eps) else -1
            else:
                table, sign = sample_new_table(conditional, franchise, j, eps, prior, rng)
            franchise.add_customer(j, i, table, sign)

    for j in range(franchise.J):
        for table in sorted(franchise.occupancy[j]):
            seated = franchise.customers_at(j, table)
            signed = franchise.sign[j][seated] * residuals[j][seated]
            franchise.detach_dish(j, table)
            conditional = dish_full_conditional(franchise, signed, prior)
            pick = sample_log_categorical(conditional.log_weights, rng)
            if pick < len(conditional.dish_ids):
                dish = conditional.dish_ids[pick]
            else:
                dish = franchise.open_dish(DishAtom(*nig_sample(nig_update(prior, signed), rng)))
            franchise.assign_dish(j, table, dish)

    resample_atoms(franchise, signed_residuals_by_dish(franchise, residuals), prior, rng)


# Location phase

def sample_theta_labels(labels: np.ndarray, theta: np.ndarray, z: Sequence[np.ndarray],
                        sigmas2: Sequence[np.ndarray], omega: float, G: GaussianParams, mode: str,
                        rng: np.random.Generator, flat_likelihood: bool = False) -> Tuple[np.ndarray, np.ndarray]:
    """Update the location labels and values of one response.

    ``z[j]`` are the residuals X - s*xi of population j and ``sigmas2[j]`` their dish
    variances. Ordered modes move left to right, letting population j either share
    population j-1's location or open a new one; the dp mode is a Chinese restaurant
    Gibbs scan. Every location is then redrawn from its pooled conjugate posterior.
    """
    J = len(z)
    if mode in ('restricted', 'uniform'):
        new_labels, values = _sample_ordered_labels(theta, z, sigmas2, omega, G, mode, rng, flat_likelihood)
    else:
        new_labels, values = _sample_crp_labels(labels, theta, z, sigmas2, omega, G, rng, flat_likelihood)

    new_labels = np.asarray(SetPartition(new_labels).labels, dtype=np.int64)
    new_theta = np.empty(J)
    for block in range(int(new_labels.max()) + 1):
        members = np.flatnonzero(new_labels == block)
        if flat_likelihood:
            post = G
        else:
            post = normal_location_posterior(G, np.concatenate([z[j] for j in members]),
                                             np.concatenate([sigmas2[j] for j in members]))
        new_theta[members] = rng.normal(post.mean, post.sd)
    return new_labels, new_theta


def _tie_loglik(z: np.ndarray, sigmas2: np.ndarray, value: float, flat: bool) -> float:
    return 0.0 if flat else float(np.sum(gaussian_logpdf(z, value, sigmas2)))


def _new_loglik(G: GaussianParams, z: np.ndarray, sigmas2: np.ndarray, flat: bool) -> float:
    return 0.0 if flat else normal_location_marginal_loglik(G, z, sigmas2)


def _draw_location(G: GaussianParams, z: np.ndarray, sigmas2: np.ndarray, flat: bool,
                   rng: np.random.Generator) -> float:
    post = G if flat else normal_location_posterior(G, z, sigmas2)
    return float(rng.normal(post.mean, post.sd))


def _sample_ordered_labels(theta, z, sigmas2, omega, G, mode, rng, flat):
    J = len(z)
    labels = [0]
    values = [float(theta[0])]
    for j in range(1, J):
        a = tie_weight(mode, omega, j + 1, SetPartition(labels), J)
        log_tie = math.log(a) + _tie_loglik(z[j], sigmas2[j], values[-1], flat)
        log_new = math.log1p(-a) + _new_loglik(G, z[j], sigmas2[j], flat)
        if sample_log_categorical(np.array([log_tie, log_new]), rng) == 0:
            labels.append(labels[-1])
            values.append(values[-1])
        else:
            labels.append(labels[-1] + 1)
            values.append(_draw_location(G, z[j], sigmas2[j], flat, rng))
    return np.array(labels, dtype=np.int64), np.array(values)


def _sample_crp_labels(labels, theta, z, sigmas2, omega, G, rng, flat):
    J = len(z)
    labels = np.array(labels, dtype=np.int64).copy()
    table_value = {int(labels[j]): float(theta[j]) for j in range(J)}
    for j in range(J):
        others = np.delete(labels, j)
        tables, counts = np.unique(others, return_counts=True)
        logs = np.empty(len(tables) + 1)
        for k, (t, n) in enumerate(zip(tables, counts)):
            logs[k] = math.log(n) + _tie_loglik(z[j], sigmas2[j], table_value[int(t)], flat)
        logs[-1] = math.log(omega) + _new_loglik(G, z[j], sigmas2[j], flat)
        pick = sample_log_categorical(logs, rng)
        if pick < len(tables):
            labels[j] = tables[pick]
        else:
            fresh = max(table_value) + 1
            labels[j] = fresh
            table_value[fresh] = _draw_location(G, z[j], sigmas2[j], flat, rng)
        table_value = {int(t): table_value[int(t)] for t in np.unique(labels)}
    values = np.array([table_value[int(t)] for t in labels])
    return labels, values


# Concentration of the location prior

def sir_log_weights(candidates: np.ndarray, n_blocks: Sequence[int], J: int) -> np.ndarray:
    """log of omega^(sum T_m - M) / Z(omega)^M for every candidate omega."""
    candidates = np.asarray(candidates, dtype=float)
    T = np.asarray(n_blocks, dtype=float)
    M = len(T)
    return (T.sum() - M) * np.log(candidates) - M * restricted_normalizer_log_array(candidates, J)


def sample_omega_sir(partitions: Sequence[Any], omega_prior: GammaPrior, pool_size: int,
                     rng: np.random.Generator, omega: Optional[float] = None) -> float:
    """Importance resampling of omega with the prior as proposal.

    The weighted pool is systematically resampled and one member of the
    resampled pool is kept.
    """
    parts = [p if isinstance(p, SetPartition) else SetPartition(p) for p in partitions]
    J = parts[0].J
    candidates = rng.gamma(omega_prior.shape, 1.0 / omega_prior.rate, size=pool_size)
    log_w = sir_log_weights(candidates, [p.n_blocks for p in parts], J)
    if not np.any(np.isfinite(log_w)):
        logger.warning("All omega importance weights vanished; keeping the current value")
        return float(omega) if omega is not None else float(omega_prior.mean)
    log_w = np.where(np.isfinite(log_w), log_w, -np.inf)
    resampled = candidates[systematic_resample(log_w, pool_size, rng)]
    return float(resampled[rng.integers(pool_size)])


class EscobarWestDraw:
    """Auxiliary variables and result of one omega update in the dp mode."""

    def __init__(self, u: np.ndarray, v: int, rate: float, omega: float):
        self.u = u
        self.v = v
        self.rate = rate
        self.omega = omega


def escobar_west_step(n_blocks: Sequence[int], J: int, omega: float, prior: GammaPrior,
                      rng: np.random.Generator) -> EscobarWestDraw:
    T = np.asarray(n_blocks, dtype=float)
    M = len(T)
    u = rng.beta(omega + 1.0, J, size=M)
    rate = prior.rate - float(np.sum(np.log(u)))
    v = np.arange(M + 1)
    shape = prior.shape + T.sum() - v
    log_w = (gammaln(M + 1) - gammaln(v + 1) - gammaln(M - v + 1)
             + v * math.log(J) + gammaln(shape) + v * math.log(rate))
    pick = sample_log_categorical(log_w, rng)
    draw = rng.gamma(shape[pick], 1.0 / rate)
    return EscobarWestDraw(u, int(pick), rate, float(draw))


def sample_omega_escobar_west(n_blocks: Sequence[int], J: int, omega: float, prior: GammaPrior,
                              rng: np.random.Generator) -> float:
    """Mixture-of-Gammas update of omega given the block counts T_m of M DP partitions of J items."""
    return escobar_west_step(n_blocks, J, omega, prior, rng).omega


# Restaurant and franchise concentrations

def auxiliary_concentration_update(value: float, n_clusters: Sequence[int], n_items: Sequence[int],
                                   prior: GammaPrior, rng: np.random.Generator) -> float:
    """Auxiliary-variable update of a DP concentration shared by one or more groups.

    Group g has n_items[g] draws forming n_clusters[g] clusters; empty groups carry no information.
    """
    k = np.asarray(n_clusters, dtype=float)
    n = np.asarray(n_items, dtype=float)
    active = n > 0
    k, n = k[active], n[active]
    if n.size == 0:
        return float(rng.gamma(prior.shape, 1.0 / prior.rate))
    w = rng.beta(value + 1.0, n)
    s = rng.random(n.size) < n / (n + value)
    shape = prior.shape + k.sum() - s.sum()
    rate = prior.rate - float(np.sum(np.log(w)))
    return float(rng.gamma(shape, 1.0 / rate))


def sample_concentrations(franchise: FranchiseState, gamma_prior: GammaPrior, alpha_prior: GammaPrior,
                          rng: np.random.Generator, tie_gamma: bool = False) -> None:
    """gamma_j from (tables in restaurant j, customers n_j); alpha from (dishes, total tables)."""
    tables = [franchise.n_tables(j) for j in range(franchise.J)]
    if tie_gamma:
        shared = auxiliary_concentration_update(float(franchise.gamma[0]), tables, franchise.sizes,
                                                gamma_prior, rng)
        franchise.gamma[:] = shared
    else:
        for j in range(franchise.J):
            franchise.gamma[j] = auxiliary_concentration_update(
                float(franchise.gamma[j]), [tables[j]], [franchise.sizes[j]], gamma_prior, rng)
    franchise.alpha = auxiliary_concentration_update(
        franchise.alpha, [franchise.n_dishes], [franchise.total_tables()], alpha_prior, rng)


# Sweeps and chains

def location_residuals(data: Dataset, franchise: FranchiseState, m: int) -> Tuple[List[np.ndarray], List[np.ndarray]]:
    """z = X - s * xi of each patient's dish, and that dish's variance."""
    z, sigmas2 = [], []
    for j, block in enumerate(data.values):
        dishes = franchise.dish_of_table[j]
        atoms = [franchise.menu[dishes[int(t)]] for t in franchise.table_of[j]]
        xi = np.array([a.xi for a in atoms])
        z.append(block[:, m] - franchise.sign[j] * xi)
        sigmas2.append(np.array([a.sigma2 for a in atoms]))
    return z, sigmas2


def sweep(state: ChainState, data: Dataset, config: ModelConfig, rng: np.random.Generator,
          omega_pool_size: int = 1000) -> ChainState:
    """One full scan: franchises, locations, omega, then concentrations."""
    for m in range(state.M):
        franchise = state.franchises[m]
        residuals = [block[:, m] - state.theta[m, j] for j, block in enumerate(data.values)]
        update_franchise(franchise, residuals, config.P0_for(m), rng)

        z, sigmas2 = location_residuals(data, franchise, m)
        labels, theta = sample_theta_labels(state.labels[m], state.theta[m], z, sigmas2, state.omega,
                                            config.G_for(m), config.prior_mode, rng)
        state.labels[m] = labels
        state.theta[m] = theta

    partitions = [SetPartition(state.labels[m]) for m in range(state.M)]
    if config.prior_mode == ModelConfig.MODE_RESTRICTED:
        state.omega = sample_omega_sir(partitions, config.omega_prior, omega_pool_size, rng, state.omega)
    elif config.prior_mode == ModelConfig.MODE_DP:
        state.omega = sample_omega_escobar_west([p.n_blocks for p in partitions], state.J, state.omega,
                                                config.omega_prior, rng)
    else:
        state.omega = float(rng.gamma(config.omega_prior.shape, 1.0 / config.omega_prior.rate))

    for franchise in state.franchises:
        sample_concentrations(franchise, config.gamma_prior, config.alpha_prior, rng, config.tie_gamma)

    state.iteration += 1
    return state


def check_state(state: ChainState, mode: str) -> None:
    """Raise NumericalError on non-finite values; structural problems are raised as well."""
    bad = not np.all(np.isfinite(state.theta)) or not math.isfinite(state.omega)
    for franchise in state.franchises:
        bad = bad or not np.all(np.isfinite(franchise.gamma)) or not math.isfinite(franchise.alpha)
        bad = bad or any(not (math.isfinite(a.xi) and math.isfinite(a.sigma2)) for a in franchise.menu.values())
    if bad:
        raise NumericalError("Non-finite value in chain state", chain=state.chain, iteration=state.iteration)
    problems = state.location_consistency()
    if mode != ModelConfig.MODE_DP:
        problems += [f"response {m}: non-contiguous location partition"
                     for m in range(state.M) if not is_order_consistent(SetPartition(state.labels[m]))]
    if problems:
        raise NumericalError(f"Inconsistent chain state: {problems[0]}", chain=state.chain,
                             iteration=state.iteration)


def make_record(state: ChainState, m: int) -> Dict[str, Any]:
    franchise = state.franchises[m]
    snapshot = franchise.snapshot()
    return {
        'iter': state.iteration,
        'chain': state.chain,
        'm': m,
        'theta': [float(t) for t in state.theta[m]],
        'partition': [int(l) for l in state.labels[m]],
        'dish_label_per_patient': [int(h) for h in franchise.dish_labels()],
        'sign': [int(s) for s in franchise.signs()],
        'n_dishes': franchise.n_dishes,
        'omega': state.omega,
        'gamma': snapshot['gamma'],
        'alpha': snapshot['alpha'],
        'mixture': {'tables': snapshot['tables'], 'menu': snapshot['menu']},
    }


def working_data(data: Dataset, config: ModelConfig) -> Dataset:
    """The scale the sampler runs on: standardized when configured and not already done."""
    if config.standardize and data.standardization is None:
        return standardize(data)
    return data


def run_chain(data: Dataset, config: ModelConfig, options: MCMCOptions, rng: np.random.Generator,
              chain: int = 0, state: Optional[ChainState] = None,
              on_checkpoint: Optional[Callable[[ChainState, np.random.Generator], None]] = None
              ) -> Iterator[List[Dict[str, Any]]]:
    """Run (or continue) one chain, yielding the M records of every emitted iteration.

    ``data`` must already be on the working scale (see ``working_data``). When ``state``
    is given the chain continues from ``state.iteration`` with the supplied generator.
    """
    if state is None:
        state = init_state(data, config, rng, chain)
    logger.info(f"Chain {chain}: iterations {state.iteration + 1}..{options.iterations}, "
                f"burn-in {options.burn_in}, thin {options.thin}, mode {config.prior_mode}")
    while state.iteration < options.iterations:
        try:
            sweep(state, data, config, rng, options.omega_pool_size)
        except (FloatingPointError, ZeroDivisionError, OverflowError) as e:
            raise NumericalError(f"Numerical failure during sweep: {str(e)}", chain=chain,
                                 iteration=state.iteration + 1)
        check_state(state, config.prior_mode)
        if state.iteration % options.audit_interval == 0:
            for m, franchise in enumerate(state.franchises):
                problems = franchise.audit(repair=True)
                if problems:
                    logger.warning(f"Chain {chain} response {m}: audit repaired {problems}")
        if logger.isEnabledFor(logging.DEBUG):
            logger.debug(f"Chain {chain} iteration {state.iteration}: omega={state.omega:.4f}, "
                         f"dishes={[f.n_dishes for f in state.franchises]}")
        if options.is_emitted(state.iteration):
            yield [make_record(state, m) for m in range(state.M)]
        if on_checkpoint is not None and (state.iteration % options.checkpoint_interval == 0
                                          or state.iteration == options.iterations):
            on_checkpoint(state, rng)
    logger.info(f"Chain {chain} finished at iteration {state.iteration}")
