"""Closed-form Wasserstein-2 geometry of one-dimensional Gaussians."""
import math
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
from scipy.special import ndtr

__all__ = [
    'GaussianPosterior', 'ValueBounds', 'w2_gaussian', 'barycenter_gaussian',
    'std_normal_quantile', 'upper_bound', 'prior_std',
]

# Rational approximation coefficients for the normal quantile (Acklam).
_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
      1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
      6.680131188771972e+01, -1.328068155288572e+01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
      -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
      3.754408661907416e+00)
_P_LOW = 0.02425


@dataclass(frozen=True)
class GaussianPosterior:
    """Q-posterior N(mean, std**2). A zero std is a point mass (terminal values)."""
    mean: float
    std: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.mean) and math.isfinite(self.std)):
            raise ValueError(
                f'Posterior must be finite, got N({self.mean}, {self.std})')
        if self.std < 0:
            raise ValueError(f'Posterior std must be >= 0, got {self.std}')


@dataclass(frozen=True)
class ValueBounds:
    q_min: float
    q_max: float

    def __post_init__(self) -> None:
        if self.q_min > self.q_max:
            raise ValueError(
                f'q_min {self.q_min} is above q_max {self.q_max}')

    @classmethod
    def from_rewards(cls, r_min: float, r_max: float, gamma: float,
                     episodic: bool = False) -> 'ValueBounds':
        """Value range of rewards in [r_min, r_max] discounted by `gamma`.

        Episodic tasks also reach the zero value of a terminal state.
        """
        if not 0.0 <= gamma < 1.0:
            raise ValueError(f'gamma must lie in [0, 1), got {gamma}')
        q_min = r_min / (1.0 - gamma)
        q_max = r_max / (1.0 - gamma)
        if episodic:
            q_min, q_max = min(q_min, 0.0), max(q_max, 0.0)
        return cls(q_min, q_max)

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.q_min + self.q_max)


def w2_gaussian(p: GaussianPosterior, q: GaussianPosterior) -> float:
    return math.hypot(p.mean - q.mean, p.std - q.std)


def barycenter_gaussian(
        items: Sequence[Tuple[float, GaussianPosterior]]) -> GaussianPosterior:
    """W2 barycenter: weighted average of the means and of the stds."""
    if not items:
        raise ValueError('Barycenter of an empty set is undefined')
    weights = np.array([w for w, _ in items], dtype=np.float64)
    if np.any(weights < 0):
        raise ValueError(f'Barycenter weights must be >= 0, got {weights}')
    if abs(weights.sum() - 1.0) > 1e-9:
        raise ValueError(
            f'Barycenter weights must sum to 1, got {weights.sum()}')
    means = np.array([p.mean for _, p in items])
    stds = np.array([p.std for _, p in items])
    return GaussianPosterior(float(weights @ means), float(weights @ stds))


def _acklam(delta: float) -> float:
    if delta < _P_LOW:
        q = math.sqrt(-2.0 * math.log(delta))
        return ((((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4])
                 * q + _C[5])
                / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0))
    if delta > 1.0 - _P_LOW:
        return -_acklam(1.0 - delta)
    q = delta - 0.5
    r = q * q
    return ((((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4])
             * r + _A[5]) * q
            / (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4])
               * r + 1.0))


def std_normal_quantile(delta: float) -> float:
    """Phi^-1(delta): rational approximation plus one Halley refinement."""
    if not 0.0 < delta < 1.0:
        raise ValueError(f'Quantile level must lie in (0, 1), got {delta}')
    if delta == 0.5:
        return 0.0
    # Solve in the tail closest to zero so the refinement keeps precision.
    if delta > 0.5:
        return -std_normal_quantile(1.0 - delta)
    x = _acklam(delta)
    e = float(ndtr(x)) - delta
    u = e * math.sqrt(2.0 * math.pi) * math.exp(0.5 * x * x)
    return x - u / (1.0 + 0.5 * x * u)


def upper_bound(p: GaussianPosterior, delta: float) -> float:
    """U^delta = mean + std * Phi^-1(delta)."""
    return p.mean + p.std * std_normal_quantile(delta)


def prior_std(bounds: ValueBounds) -> float:
    """Std of the Gaussian closest to the uniform law on [q_min, q_max]."""
    return (bounds.q_max - bounds.q_min) / math.sqrt(12.0)
