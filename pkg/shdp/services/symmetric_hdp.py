"""Symmetric DP and symmetric hierarchical DP machinery.

Holds the Stirling/Antoniak tables, the exact partially exchangeable partition
probability (an enumeration oracle for small franchises), the generative
Chinese restaurant franchise with paired dishes, and the full conditionals used
by the Gibbs sampler. Every table serves a pair (+phi, -phi); the density of a
residual at a pair is the equal mixture of the two signed kernels.
"""

from functools import lru_cache
from typing import Callable, Dict, List, Optional, Sequence, Tuple
import itertools
import logging
import math

import numpy as np
from scipy.special import expit, gammaln, logsumexp

from shdp.errors import ArgumentError, DomainError, FeasibilityError
from shdp.models.franchise import DishAtom, FranchiseState
from shdp.models.params import NormalInverseGammaParams
from shdp.models.partition import SetPartition
from shdp.services.partitions import enumerate_set_partitions
from shdp.services.conjugate import (
    gaussian_logpdf,
    nig_marginal_loglik,
    nig_predictive_logpdf,
    nig_sample,
    nig_update,
)
from shdp.utils.helpers import log_normalize, sample_log_categorical

logger = logging.getLogger(__name__)

LOG_HALF = math.log(0.5)
STIRLING_MAX = 2000
PEPPF_MAX_CUSTOMERS = 12

DEFAULT_BASE = NormalInverseGammaParams(0.0, 1.0, 2.0, 4.0)


# Stirling numbers and the Antoniak distribution

@lru_cache(maxsize=4)
def _stirling_log(nmax: int) -> np.ndarray:
    table = np.full((nmax + 1, nmax + 1), -np.inf)
    table[0, 0] = 0.0
    for n in range(nmax):
        row = table[n]
        nxt = np.full(nmax + 1, -np.inf)
        scaled = row + (math.log(n) if n > 0 else -np.inf)
        nxt[1:] = np.logaddexp(scaled[1:], row[:-1])
        nxt[0] = scaled[0]
        table[n + 1] = nxt
    table.setflags(write=False)
    return table


def stirling1_unsigned_table(nmax: int) -> np.ndarray:
    """log|s(n, k)| for 0 <= n, k <= nmax (-inf where the number is zero)."""
    if not 0 <= nmax <= STIRLING_MAX:
        raise FeasibilityError(f"Stirling table size must be in [0, {STIRLING_MAX}], got {nmax}")
    return np.array(_stirling_log(int(nmax)))


def _stirling_row(n: int) -> np.ndarray:
    size = 16
    while size < n:
        size *= 2
    return _stirling_log(min(max(size, n), STIRLING_MAX))[n]


def log_rising_factorial(x: float, n: int) -> float:
    """log (x)_n = log Gamma(x + n) - log Gamma(x)."""
    return float(gammaln(x + n) - gammaln(x))


def antoniak_log_pmf(n: int, gamma: float) -> np.ndarray:
    """log P(K_n = l) for l = 1..n (entry l-1)."""
    if n < 1:
        raise ArgumentError(f"Antoniak distribution needs n >= 1, got {n}")
    if n > STIRLING_MAX:
        raise FeasibilityError(f"Antoniak distribution supports n <= {STIRLING_MAX}, got {n}")
    if not gamma > 0:
        raise DomainError(f"gamma must be positive, got {gamma}")
    ell = np.arange(1, n + 1)
    logs = ell * math.log(gamma) + _stirling_row(n)[1:n + 1] - log_rising_factorial(gamma, n)
    return logs


def antoniak_pmf(n: int, gamma: float) -> np.ndarray:
    """Distribution of the number of distinct values among n draws from a DP(gamma)."""
    return log_normalize(antoniak_log_pmf(n, gamma))


# Partition probabilities

def hdp_peppf_log(counts: np.ndarray, gamma: Sequence[float], alpha: float) -> float:
    """Exact log pEPPF of a hierarchical DP at the count matrix n[j, h].

    Sums over all table counts l[j, h] in 1..n[j, h]; only feasible for small totals.
    """
    counts = np.atleast_2d(np.asarray(counts, dtype=np.int64))
    if np.any(counts < 0):
        raise ArgumentError("Counts must be non-negative")
    J = counts.shape[0]
    gamma = np.broadcast_to(np.asarray(gamma, dtype=float), (J,))
    if np.any(gamma <= 0) or not alpha > 0:
        raise DomainError("gamma and alpha must be positive")
    counts = counts[:, counts.sum(axis=0) > 0]
    N = int(counts.sum())
    if N > PEPPF_MAX_CUSTOMERS:
        raise FeasibilityError(f"pEPPF enumeration supports at most {PEPPF_MAX_CUSTOMERS} customers, got {N}")
    if N == 0:
        return 0.0
    n_j = counts.sum(axis=1)
    prefactor = 0.0
    for j in range(J):
        for n in counts[j]:
            if n > 0:
                prefactor += log_rising_factorial(gamma[j], int(n))
        prefactor -= log_rising_factorial(gamma[j], int(n_j[j]))

    cells = [(j, h) for j in range(J) for h in range(counts.shape[1]) if counts[j, h] > 0]
    cell_logs = [antoniak_log_pmf(int(counts[j, h]), float(gamma[j])) for j, h in cells]
    k = counts.shape[1]
    terms = []
    for choice in itertools.product(*[range(1, counts[j, h] + 1) for j, h in cells]):
        per_dish = np.zeros(k, dtype=np.int64)
        log_term = 0.0
        for (j, h), ell, logs in zip(cells, choice, cell_logs):
            per_dish[h] += ell
            log_term += logs[ell - 1]
        total = int(per_dish.sum())
        log_term += k * math.log(alpha) - log_rising_factorial(alpha, total) + float(np.sum(gammaln(per_dish)))
        terms.append(log_term)
    return float(prefactor + logsumexp(terms))


def shdp_peppf_log(n_plus: np.ndarray, n_minus: np.ndarray, gamma: Sequence[float], alpha: float) -> float:
    """Symmetric version: the unsigned value times 2^-N."""
    n_plus = np.atleast_2d(np.asarray(n_plus, dtype=np.int64))
    n_minus = np.atleast_2d(np.asarray(n_minus, dtype=np.int64))
    if n_plus.shape != n_minus.shape:
        raise ArgumentError("Signed count matrices must have the same shape")
    total = n_plus + n_minus
    return hdp_peppf_log(total, gamma, alpha) - int(total.sum()) * math.log(2.0)


SignedOutcome = Tuple[Tuple[int, ...], Tuple[int, ...]]


def signed_counts(labels: Sequence[int], signs: Sequence[int], sizes: Sequence[int]) -> Tuple[np.ndarray, np.ndarray]:
    """n+[j, h] and n-[j, h] from per-customer dish labels and signs (populations concatenated)."""
    canonical = SetPartition(list(labels)).labels
    k = max(canonical) + 1
    plus = np.zeros((len(sizes), k), dtype=np.int64)
    minus = np.zeros((len(sizes), k), dtype=np.int64)
    start = 0
    for j, n in enumerate(sizes):
        for i in range(start, start + n):
            (plus if signs[i] > 0 else minus)[j, canonical[i]] += 1
        start += n
    return plus, minus


def signed_outcome(state: FranchiseState) -> SignedOutcome:
    """Canonical dish partition and signs of every customer of a franchise."""
    return (tuple(SetPartition(state.dish_labels().tolist()).labels),
            tuple(int(s) for s in state.signs()))


def signed_outcome_probabilities(sizes: Sequence[int], gamma: Sequence[float],
                                 alpha: float) -> Dict[SignedOutcome, float]:
    """Exact law of ``signed_outcome`` over every dish partition and sign pattern.

    Enumerates Bell(N) * 2^N outcomes, so N is limited to 8 customers.
    """
    sizes = [int(n) for n in sizes]
    N = sum(sizes)
    if N < 1 or N > 8:
        raise FeasibilityError(f"Signed outcome enumeration supports 1..8 customers, got {N}")
    out: Dict[SignedOutcome, float] = {}
    for partition in enumerate_set_partitions(N):
        labels = tuple(partition.labels)
        for signs in itertools.product((-1, 1), repeat=N):
            plus, minus = signed_counts(labels, signs, sizes)
            out[(labels, signs)] = math.exp(shdp_peppf_log(plus, minus, gamma, alpha))
    return out


# Generative franchise

def crf_generate(gamma: Sequence[float], alpha: float, sizes: Sequence[int], rng: np.random.Generator,
                 prior: NormalInverseGammaParams = DEFAULT_BASE) -> FranchiseState:
    """Seat customers restaurant by restaurant following the franchise scheme."""
    state = FranchiseState(sizes, gamma, alpha)
    for j, n in enumerate(state.sizes):
        g = state.gamma[j]
        tables: List[int] = []
        occupancy: List[float] = []
        for i in range(n):
            u = rng.random() * (sum(occupancy) + g)
            pick = int(np.searchsorted(np.cumsum(occupancy), u, side='right')) if occupancy else 0
            if pick < len(tables):
                table = tables[pick]
                occupancy[pick] += 1
            else:
                ids = sorted(state.menu)
                ell = [state.dish_tables[h] for h in ids]
                v = rng.random() * (sum(ell) + state.alpha)
                which = int(np.searchsorted(np.cumsum(ell), v, side='right')) if ell else 0
                if which < len(ids):
                    dish = ids[which]
                else:
                    dish = state.open_dish(DishAtom(*nig_sample(prior, rng)))
                table = state.open_table(j, dish)
                tables.append(table)
                occupancy.append(1.0)
            sign = 1 if rng.random() < 0.5 else -1
            state.add_customer(j, i, table, sign)
    return state


# Full conditionals

def pair_logpdf(eps: float, xi: np.ndarray, sigma2: np.ndarray) -> np.ndarray:
    """log of (h(eps | +phi) + h(eps | -phi)) / 2 for every atom."""
    return LOG_HALF + np.logaddexp(gaussian_logpdf(eps, xi, sigma2), gaussian_logpdf(eps, -np.asarray(xi), sigma2))


def new_dish_logpdf(eps, prior: NormalInverseGammaParams):
    """Symmetrized base marginal; reduces to the plain marginal when mu0 = 0."""
    eps = np.asarray(eps, dtype=float)
    out = LOG_HALF + np.logaddexp(nig_predictive_logpdf(prior, eps), nig_predictive_logpdf(prior, -eps))
    return float(out) if np.ndim(out) == 0 else out


def new_dish_sign_probability(prior: NormalInverseGammaParams, eps: float) -> float:
    return float(expit(nig_predictive_logpdf(prior, eps) - nig_predictive_logpdf(prior, -eps)))


class TableConditional:
    """Categorical over occupied tables of a restaurant plus a new table (last entry).

    Also carries the dish choice for a new table: menu dishes plus a new dish (last entry).
    """

    def __init__(self, tables: List[int], log_weights: np.ndarray,
                 dish_ids: List[int], dish_log_weights: np.ndarray):
        self.tables = tables
        self.log_weights = log_weights
        self.dish_ids = dish_ids
        self.dish_log_weights = dish_log_weights

    def probabilities(self) -> np.ndarray:
        return log_normalize(self.log_weights)

    def dish_probabilities(self) -> np.ndarray:
        return log_normalize(self.dish_log_weights)


def new_table_dish_log_weights(state: FranchiseState, eps: float,
                               prior: NormalInverseGammaParams) -> Tuple[List[int], np.ndarray]:
    """log of l_h/(|l|+alpha) p_old(eps|phi_h) for each dish, and alpha/(|l|+alpha) h-bar(eps) last."""
    ids, xi, sigma2, ell = state.menu_arrays()
    log_denominator = math.log(float(ell.sum()) + state.alpha)
    logs = np.empty(len(ids) + 1)
    if len(ids):
        logs[:-1] = np.log(ell) + pair_logpdf(eps, xi, sigma2) - log_denominator
    logs[-1] = math.log(state.alpha) + new_dish_logpdf(eps, prior) - log_denominator
    return [int(h) for h in ids], logs


def table_full_conditional(state: FranchiseState, eps: float, j: int,
                           prior: NormalInverseGammaParams) -> TableConditional:
    """Weights for re-seating a removed customer with residual ``eps`` in restaurant ``j``."""
    dish_ids, dish_logs = new_table_dish_log_weights(state, eps, prior)
    tables = sorted(state.occupancy[j])
    logs = np.empty(len(tables) + 1)
    if tables:
        counts = np.array([state.occupancy[j][t] for t in tables], dtype=float)
        xi = np.array([state.menu[state.dish_of_table[j][t]].xi for t in tables])
        sigma2 = np.array([state.menu[state.dish_of_table[j][t]].sigma2 for t in tables])
        logs[:-1] = np.log(counts) + pair_logpdf(eps, xi, sigma2)
    logs[-1] = math.log(state.gamma[j]) + logsumexp(dish_logs)
    return TableConditional(tables, logs, dish_ids, dish_logs)


def sign_full_conditional(atom: DishAtom, eps: float) -> float:
    """P(s = +1) = h(eps | +atom) / (h(eps | +atom) + h(eps | -atom))."""
    return float(expit(2.0 * eps * atom.xi / atom.sigma2))


class DishConditional:
    """Categorical over menu dishes plus a new dish (last entry)."""

    def __init__(self, dish_ids: List[int], log_weights: np.ndarray):
        self.dish_ids = dish_ids
        self.log_weights = log_weights

    def probabilities(self) -> np.ndarray:
        return log_normalize(self.log_weights)


def dish_full_conditional(state: FranchiseState, signed_residuals: np.ndarray,
                          prior: NormalInverseGammaParams) -> DishConditional:
    """Weights for the dish of a table whose dish has been detached.

    ``signed_residuals`` are s * eps for the customers at that table.
    """
    y = np.atleast_1d(np.asarray(signed_residuals, dtype=float))
    ids, xi, sigma2, ell = state.menu_arrays()
    logs = np.empty(len(ids) + 1)
    if len(ids):
        loglik = gaussian_logpdf(y[None, :], xi[:, None], sigma2[:, None])
        logs[:-1] = np.log(ell) + np.sum(np.atleast_2d(loglik), axis=1)
    logs[-1] = math.log(state.alpha) + nig_marginal_loglik(prior, y)
    return DishConditional([int(h) for h in ids], logs)


def signed_residuals_by_dish(state: FranchiseState, residuals: Sequence[np.ndarray]) -> Dict[int, np.ndarray]:
    """Group s * eps by dish id across all restaurants."""
    grouped: Dict[int, List[np.ndarray]] = {h: [] for h in state.menu}
    for j in range(state.J):
        if state.sizes[j] == 0:
            continue
        dishes = np.array([state.dish_of_table[j][int(t)] for t in state.table_of[j]])
        signed = state.sign[j] * np.asarray(residuals[j], dtype=float)
        for h in np.unique(dishes):
            grouped[int(h)].append(signed[dishes == h])
    return {h: np.concatenate(parts) if parts else np.zeros(0) for h, parts in grouped.items()}


def resample_atoms(state: FranchiseState, grouped: Dict[int, np.ndarray],
                   prior: NormalInverseGammaParams, rng: np.random.Generator) -> Dict[int, DishAtom]:
    """Draw every menu atom from its NIG posterior given its signed residuals."""
    for h in sorted(state.menu):
        obs = grouped.get(h, np.zeros(0))
        state.menu[h] = DishAtom(*nig_sample(nig_update(prior, obs), rng))
    return state.menu


# Symmetric DP representations

class StickBreakingDraw:
    """Truncated symmetric-DP draw: 2K signed atoms and the mass left in the tail."""

    def __init__(self, weights: np.ndarray, xi: np.ndarray, sigma2: np.ndarray, tail_mass: float):
        self.weights = weights
        self.xi = xi
        self.sigma2 = sigma2
        self.tail_mass = tail_mass

    def sample_residuals(self, size: int, rng: np.random.Generator) -> np.ndarray:
        """Residuals from the truncated mixture (weights renormalized over emitted atoms)."""
        probs = self.weights / self.weights.sum()
        idx = rng.choice(len(probs), size=size, p=probs)
        return rng.normal(self.xi[idx], np.sqrt(self.sigma2[idx]))


def stick_breaking_sdp(alpha: float, base_sampler: Callable[[np.random.Generator], Tuple[float, float]],
                       K: int, rng: np.random.Generator) -> StickBreakingDraw:
    """pi_h = (pi'_h / 2) prod_{r<h} (1 - pi'_r), each atom emitted at +phi and -phi."""
    if K < 1:
        raise ArgumentError(f"Truncation level must be at least 1, got {K}")
    if not alpha > 0:
        raise DomainError(f"alpha must be positive, got {alpha}")
    sticks = rng.beta(1.0, alpha, size=K)
    remaining = np.concatenate([[1.0], np.cumprod(1.0 - sticks)])
    masses = sticks * remaining[:-1]
    atoms = [base_sampler(rng) for _ in range(K)]
    xi = np.array([a[0] for a in atoms])
    sigma2 = np.array([a[1] for a in atoms])
    weights = np.repeat(masses / 2.0, 2)
    signed_xi = np.column_stack([xi, -xi]).ravel()
    return StickBreakingDraw(weights, signed_xi, np.repeat(sigma2, 2), float(remaining[-1]))


def sdp_polya_urn(alpha: float, size: int, base_sampler: Callable[[np.random.Generator], Tuple[float, float]],
                  rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sequential draws from a symmetric DP with the Polya urn.

    Returns (pair index, signed xi, sigma2) of each draw; a new pair appears with
    probability alpha / (alpha + n), otherwise a previous draw is copied with a fair sign.
    """
    if not alpha > 0:
        raise DomainError(f"alpha must be positive, got {alpha}")
    pair = np.empty(size, dtype=np.int64)
    xi = np.empty(size)
    sigma2 = np.empty(size)
    atoms: List[Tuple[float, float]] = []
    for n in range(size):
        if rng.random() < alpha / (alpha + n):
            atoms.append(base_sampler(rng))
            pair[n] = len(atoms) - 1
        else:
            pair[n] = pair[rng.integers(n)]
        value, var = atoms[pair[n]]
        xi[n] = value if rng.random() < 0.5 else -value
        sigma2[n] = var
    return pair, xi, sigma2


def nig_base_sampler(prior: NormalInverseGammaParams) -> Callable[[np.random.Generator], Tuple[float, float]]:
    return lambda rng: nig_sample(prior, rng)


# Predictive density of a new residual

def predictive_density(snapshot: Dict, j: int, grid: np.ndarray, prior: NormalInverseGammaParams,
                       log: bool = False) -> np.ndarray:
    """Density of a new customer's residual in restaurant ``j`` given a franchise snapshot.

    ``snapshot`` is ``FranchiseState.snapshot()`` (also stored in every sample record).
    """
    grid = np.asarray(grid, dtype=float)
    gamma = float(snapshot['gamma'][j])
    alpha = float(snapshot['alpha'])
    menu = {int(h): (float(ell), float(xi), float(s2)) for h, ell, xi, s2 in snapshot['menu']}
    tables = snapshot['tables'][j]
    n_j = float(sum(n for n, _ in tables))

    ids = sorted(menu)
    ell = np.array([menu[h][0] for h in ids])
    xi = np.array([menu[h][1] for h in ids])
    s2 = np.array([menu[h][2] for h in ids])
    log_den = math.log(float(ell.sum()) + alpha)
    parts = [math.log(alpha) - log_den + new_dish_logpdf(grid, prior)]
    if ids:
        per_dish = LOG_HALF + np.logaddexp(gaussian_logpdf(grid[None, :], xi[:, None], s2[:, None]),
                                           gaussian_logpdf(grid[None, :], -xi[:, None], s2[:, None]))
        parts.extend(np.log(ell)[:, None] - log_den + np.atleast_2d(per_dish))
    new_table = logsumexp(np.vstack(parts), axis=0)

    log_total = math.log(n_j + gamma)
    terms = [math.log(gamma) - log_total + new_table]
    by_dish: Dict[int, float] = {}
    for n, h in tables:
        by_dish[int(h)] = by_dish.get(int(h), 0.0) + float(n)
    for h, n in sorted(by_dish.items()):
        _, x, v = menu[h]
        pair = LOG_HALF + np.logaddexp(gaussian_logpdf(grid, x, v), gaussian_logpdf(grid, -x, v))
        terms.append(math.log(n) - log_total + pair)
    out = logsumexp(np.vstack(terms), axis=0)
    return out if log else np.exp(out)


def sample_new_table(conditional: TableConditional, state: FranchiseState, j: int, eps: float,
                     prior: NormalInverseGammaParams, rng: np.random.Generator) -> Tuple[int, int]:
    """Open a table for a customer, choosing its dish and the customer's sign; returns (table, sign)."""
    pick = sample_log_categorical(conditional.dish_log_weights, rng)
    if pick < len(conditional.dish_ids):
        dish = conditional.dish_ids[pick]
        sign = 1 if rng.random() < sign_full_conditional(state.menu[dish], eps) else -1
    else:
        sign = 1 if rng.random() < new_dish_sign_probability(prior, eps) else -1
        atom = DishAtom(*nig_sample(nig_update(prior, [sign * eps]), rng))
        dish = state.open_dish(atom)
    table = state.open_table(j, dish)
    return table, sign
