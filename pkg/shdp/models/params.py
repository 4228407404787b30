from typing import Dict, Any
import math

from shdp.errors import DomainError


def _positive(name: str, value: float) -> float:
    value = float(value)
    if not (value > 0) or not math.isfinite(value):
        raise DomainError(f"{name} must be a positive finite number, got {value}")
    return value


class NormalInverseGammaParams:
    """Base measure for dish atoms: xi | sigma2 ~ N(mu0, sigma2 / tau), sigma2 ~ InvGamma(a, b)."""

    def __init__(self, mu0: float = 0.0, tau: float = 1.0, a: float = 2.0, b: float = 4.0):
        self.mu0 = float(mu0)
        self.tau = _positive('tau', tau)
        self.a = _positive('a', a)
        self.b = _positive('b', b)

    def sigma2_prior_mean(self) -> float:
        if self.a <= 1:
            return math.inf
        return self.b / (self.a - 1)

    def to_dict(self) -> Dict[str, Any]:
        return {'mu0': self.mu0, 'tau': self.tau, 'a': self.a, 'b': self.b}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'NormalInverseGammaParams':
        return cls(data.get('mu0', 0.0), data.get('tau', 1.0), data.get('a', 2.0), data.get('b', 4.0))

    def __eq__(self, other: object) -> bool:
        return isinstance(other, NormalInverseGammaParams) and self.to_dict() == other.to_dict()

    def __repr__(self) -> str:
        return f"NIG(mu0={self.mu0}, tau={self.tau}, a={self.a}, b={self.b})"


class GaussianParams:
    """Normal distribution given by mean and variance."""

    def __init__(self, mean: float = 0.0, variance: float = 1.0):
        self.mean = float(mean)
        self.variance = _positive('variance', variance)

    @property
    def sd(self) -> float:
        return math.sqrt(self.variance)

    def to_dict(self) -> Dict[str, Any]:
        return {'mean': self.mean, 'variance': self.variance}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'GaussianParams':
        return cls(data.get('mean', 0.0), data.get('variance', 1.0))

    def __eq__(self, other: object) -> bool:
        return isinstance(other, GaussianParams) and self.to_dict() == other.to_dict()

    def __repr__(self) -> str:
        return f"N({self.mean}, {self.variance})"


class GammaPrior:
    """Gamma(shape, rate) hyperprior for a concentration parameter."""

    def __init__(self, shape: float = 3.0, rate: float = 3.0):
        self.shape = _positive('shape', shape)
        self.rate = _positive('rate', rate)

    @property
    def mean(self) -> float:
        return self.shape / self.rate

    def to_dict(self) -> Dict[str, Any]:
        return {'shape': self.shape, 'rate': self.rate}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'GammaPrior':
        return cls(data.get('shape', 3.0), data.get('rate', 3.0))

    def __eq__(self, other: object) -> bool:
        return isinstance(other, GammaPrior) and self.to_dict() == other.to_dict()

    def __repr__(self) -> str:
        return f"Gamma(shape={self.shape}, rate={self.rate})"
