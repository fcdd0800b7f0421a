"""Closed-form univariate Gaussian machinery.

Everything here is a pure function of its arguments: conjugate mean updates,
KL divergences, log-domain mixture densities and mixture sampling. All other
modules build on these primitives.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError

# Guards beliefs against rounding after moment matching.
VARIANCE_FLOOR = 1e-12

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class GaussianBelief:
    """Belief over a single component mean: N(mean, variance)."""

    mean: float
    variance: float

    def __post_init__(self):
        if not (math.isfinite(self.mean) and math.isfinite(self.variance)):
            raise InvalidParameterError(
                f"belief parameters must be finite, got N({self.mean}, {self.variance})"
            )
        if self.variance <= 0.0:
            raise InvalidParameterError(f"belief variance must be > 0, got {self.variance}")


@dataclass(frozen=True)
class MixtureDensity:
    """Gaussian mixture over the data space: sum_j w_j N(x; m_j, v_j)."""

    weights: tuple
    means: tuple
    variances: tuple

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        m = np.asarray(self.means, dtype=float)
        v = np.asarray(self.variances, dtype=float)
        if not (len(w) == len(m) == len(v)) or len(w) == 0:
            raise InvalidParameterError("weights/means/variances must be nonempty and equal length")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(m)) and np.all(np.isfinite(v))):
            raise InvalidParameterError("mixture parameters must be finite")
        if np.any(w < 0.0) or abs(float(w.sum()) - 1.0) > 1e-12:
            raise InvalidParameterError("weights must be nonnegative and sum to 1 within 1e-12")
        if np.any(v <= 0.0):
            raise InvalidParameterError("all mixture variances must be > 0")
        object.__setattr__(self, "weights", tuple(float(x) for x in w))
        object.__setattr__(self, "means", tuple(float(x) for x in m))
        object.__setattr__(self, "variances", tuple(float(x) for x in v))

    @property
    def k(self) -> int:
        return len(self.weights)


def conjugate_update(
    belief: GaussianBelief, x: float, noise_variance: float, responsibility: float = 1.0
) -> GaussianBelief:
    """Update a Gaussian mean belief with one observation.

    With responsibility r=1 this is the exact conjugate posterior for a
    Gaussian likelihood with known noise variance. With r<1 the result is the
    moment match of the two-branch mixture {updated with prob r, unchanged
    with prob 1-r}, i.e. the assumed-density projection used when the
    observation may belong to another component.
    """
    if noise_variance <= 0.0 or not math.isfinite(noise_variance):
        raise InvalidParameterError(f"noise_variance must be > 0, got {noise_variance}")
    if not math.isfinite(x):
        raise InvalidParameterError(f"observation must be finite, got {x}")
    r = float(responsibility)
    if not (0.0 <= r <= 1.0):
        raise InvalidParameterError(f"responsibility must be in [0,1], got {r}")

    if r == 0.0:
        return belief

    v, m = belief.variance, belief.mean
    post_var = 1.0 / (1.0 / v + 1.0 / noise_variance)
    post_mean = post_var * (m / v + x / noise_variance)
    if r == 1.0:
        return GaussianBelief(post_mean, max(post_var, VARIANCE_FLOOR))

    # Mean and variance of the mixture r*N(post) + (1-r)*N(old).
    mix_mean = r * post_mean + (1.0 - r) * m
    mix_var = (
        r * post_var
        + (1.0 - r) * v
        + r * (1.0 - r) * (post_mean - m) ** 2
    )
    return GaussianBelief(mix_mean, max(mix_var, VARIANCE_FLOOR))


def gaussian_kl(p: GaussianBelief, q: GaussianBelief) -> float:
    """KL(p || q) between two univariate Gaussians, in nats."""
    vp, vq = p.variance, q.variance
    kl = 0.5 * (math.log(vq / vp) + (vp + (p.mean - q.mean) ** 2) / vq - 1.0)
    # The closed form is >= 0; rounding can leave a tiny negative residue.
    return max(kl, 0.0)


def gaussian_log_pdf(x, mean, variance):
    """Elementwise log N(x; mean, variance); inputs broadcast."""
    x = np.asarray(x, dtype=float)
    return -0.5 * (LOG_2PI + np.log(variance) + (x - mean) ** 2 / variance)


def mixture_log_pdf(d: MixtureDensity, x) -> float | np.ndarray:
    """log sum_j w_j N(x; m_j, v_j) via max-shifted log-sum-exp."""
    x = np.asarray(x, dtype=float)
    w = np.asarray(d.weights)
    m = np.asarray(d.means)
    v = np.asarray(d.variances)
    comp = gaussian_log_pdf(x[..., None], m, v)
    with np.errstate(divide="ignore"):
        logw = np.log(w)
    shifted = comp + logw
    mx = shifted.max(axis=-1)
    out = mx + np.log(np.exp(shifted - mx[..., None]).sum(axis=-1))
    return float(out) if out.ndim == 0 else out


def log_mean_exp(values) -> float:
    """log of the linear-domain mean of exp(values)."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise InvalidParameterError("log_mean_exp of an empty collection")
    mx = float(v.max())
    if not math.isfinite(mx):
        return mx
    return mx + math.log(float(np.exp(v - mx).mean()))


def sample_mixture(d: MixtureDensity, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw n iid points: component chosen by weight, then a Gaussian draw."""
    if n < 0:
        raise InvalidParameterError(f"sample count must be >= 0, got {n}")
    if n == 0:
        return np.empty(0, dtype=float)
    labels = rng.choice(d.k, size=n, p=np.asarray(d.weights))
    means = np.asarray(d.means)[labels]
    stds = np.sqrt(np.asarray(d.variances)[labels])
    return means + stds * rng.standard_normal(n)
