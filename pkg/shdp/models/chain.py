from typing import Dict, Any, List, Optional, Sequence, Union

import numpy as np

from shdp.errors import ArgumentError, DomainError
from shdp.models.franchise import FranchiseState
from shdp.models.params import GammaPrior, GaussianParams, NormalInverseGammaParams


class ModelConfig:

    MODE_RESTRICTED = 'restricted'
    MODE_DP = 'dp'
    MODE_UNIFORM = 'uniform'

    VALID_MODES = [MODE_RESTRICTED, MODE_DP, MODE_UNIFORM]

    def __init__(self, prior_mode: str = MODE_RESTRICTED,
                 G: Union[GaussianParams, Sequence[GaussianParams], None] = None,
                 P0: Union[NormalInverseGammaParams, Sequence[NormalInverseGammaParams], None] = None,
                 omega_prior: Optional[GammaPrior] = None,
                 gamma_prior: Optional[GammaPrior] = None,
                 alpha_prior: Optional[GammaPrior] = None,
                 standardize: bool = True, tie_gamma: bool = False):
        if prior_mode not in self.VALID_MODES:
            raise ArgumentError(f"Invalid prior mode: {prior_mode}. Must be one of {self.VALID_MODES}")
        self.prior_mode = prior_mode
        self.G = G if G is not None else GaussianParams(0.0, 1.0)
        self.P0 = P0 if P0 is not None else NormalInverseGammaParams(0.0, 1.0, 2.0, 4.0)
        self.omega_prior = omega_prior or GammaPrior(3.0, 3.0)
        self.gamma_prior = gamma_prior or GammaPrior(3.0, 3.0)
        self.alpha_prior = alpha_prior or GammaPrior(3.0, 3.0)
        self.standardize = bool(standardize)
        self.tie_gamma = bool(tie_gamma)

    def G_for(self, m: int) -> GaussianParams:
        if isinstance(self.G, GaussianParams):
            return self.G
        return self.G[m]

    def P0_for(self, m: int) -> NormalInverseGammaParams:
        if isinstance(self.P0, NormalInverseGammaParams):
            return self.P0
        return self.P0[m]

    def check_responses(self, M: int) -> None:
        for name, value in (('G', self.G), ('P0', self.P0)):
            if isinstance(value, (list, tuple)) and len(value) != M:
                raise ArgumentError(f"{name} lists {len(value)} entries for {M} responses")

    def to_dict(self) -> Dict[str, Any]:
        def dump(value: Any) -> Any:
            if isinstance(value, (list, tuple)):
                return [v.to_dict() for v in value]
            return value.to_dict()

        return {
            'prior_mode': self.prior_mode,
            'G': dump(self.G),
            'P0': dump(self.P0),
            'omega_prior': self.omega_prior.to_dict(),
            'gamma_prior': self.gamma_prior.to_dict(),
            'alpha_prior': self.alpha_prior.to_dict(),
            'standardize': self.standardize,
            'tie_gamma': self.tie_gamma,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ModelConfig':
        def load(value: Any, kind: Any) -> Any:
            if value is None:
                return None
            if isinstance(value, list):
                return [kind.from_dict(v) for v in value]
            return kind.from_dict(value)

        return cls(
            prior_mode=data.get('prior_mode', cls.MODE_RESTRICTED),
            G=load(data.get('G'), GaussianParams),
            P0=load(data.get('P0'), NormalInverseGammaParams),
            omega_prior=load(data.get('omega_prior'), GammaPrior),
            gamma_prior=load(data.get('gamma_prior'), GammaPrior),
            alpha_prior=load(data.get('alpha_prior'), GammaPrior),
            standardize=data.get('standardize', True),
            tie_gamma=data.get('tie_gamma', False),
        )


class MCMCOptions:

    def __init__(self, iterations: int = 10000, burn_in: int = 5000, thin: int = 1,
                 seed: Optional[int] = None, audit_interval: int = 100,
                 omega_pool_size: int = 1000, checkpoint_interval: int = 500):
        if iterations < 1:
            raise ArgumentError(f"iterations must be at least 1, got {iterations}")
        if not 0 <= burn_in < iterations:
            raise ArgumentError(f"burn_in must satisfy 0 <= burn_in < iterations, got {burn_in}")
        if thin < 1:
            raise ArgumentError(f"thin must be at least 1, got {thin}")
        if audit_interval < 1 or omega_pool_size < 1 or checkpoint_interval < 1:
            raise ArgumentError("audit_interval, omega_pool_size and checkpoint_interval must be positive")
        self.iterations = int(iterations)
        self.burn_in = int(burn_in)
        self.thin = int(thin)
        self.seed = seed
        self.audit_interval = int(audit_interval)
        self.omega_pool_size = int(omega_pool_size)
        self.checkpoint_interval = int(checkpoint_interval)

    def is_emitted(self, iteration: int) -> bool:
        """Iterations are 1-based; the first emitted one is burn_in + thin."""
        return iteration > self.burn_in and (iteration - self.burn_in) % self.thin == 0

    def n_emitted(self) -> int:
        return (self.iterations - self.burn_in) // self.thin

    def to_dict(self) -> Dict[str, Any]:
        return {
            'iterations': self.iterations,
            'burn_in': self.burn_in,
            'thin': self.thin,
            'seed': self.seed,
            'audit_interval': self.audit_interval,
            'omega_pool_size': self.omega_pool_size,
            'checkpoint_interval': self.checkpoint_interval,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'MCMCOptions':
        known = ('iterations', 'burn_in', 'thin', 'seed', 'audit_interval',
                 'omega_pool_size', 'checkpoint_interval')
        return cls(**{key: data[key] for key in known if key in data})


class ChainState:
    """All latent variables of one chain: locations, location labels, franchises and concentrations."""

    def __init__(self, theta: np.ndarray, labels: np.ndarray, franchises: List[FranchiseState],
                 omega: float, iteration: int = 0, chain: int = 0):
        self.theta = np.asarray(theta, dtype=float)
        self.labels = np.asarray(labels, dtype=np.int64)
        if self.theta.shape != self.labels.shape:
            raise ArgumentError("theta and labels must have the same (M, J) shape")
        if len(franchises) != self.theta.shape[0]:
            raise ArgumentError("One franchise per response is required")
        if not omega > 0:
            raise DomainError(f"omega must be positive, got {omega}")
        self.franchises = franchises
        self.omega = float(omega)
        self.iteration = int(iteration)
        self.chain = int(chain)

    @property
    def M(self) -> int:
        return self.theta.shape[0]

    @property
    def J(self) -> int:
        return self.theta.shape[1]

    def location_consistency(self) -> List[str]:
        """theta[m, j] == theta[m, j'] exactly when the labels agree."""
        problems = []
        for m in range(self.M):
            for j in range(self.J):
                for jj in range(j + 1, self.J):
                    same_label = self.labels[m, j] == self.labels[m, jj]
                    same_value = self.theta[m, j] == self.theta[m, jj]
                    if same_label != same_value:
                        problems.append(f"response {m}: populations {j},{jj} labels and values disagree")
        return problems

    def to_dict(self) -> Dict[str, Any]:
        return {
            'theta': self.theta.tolist(),
            'labels': self.labels.tolist(),
            'franchises': [f.to_dict() for f in self.franchises],
            'omega': self.omega,
            'iteration': self.iteration,
            'chain': self.chain,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ChainState':
        return cls(
            theta=np.array(data['theta'], dtype=float),
            labels=np.array(data['labels'], dtype=np.int64),
            franchises=[FranchiseState.from_dict(f) for f in data['franchises']],
            omega=data['omega'],
            iteration=data.get('iteration', 0),
            chain=data.get('chain', 0),
        )
