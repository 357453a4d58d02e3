"""Closed-form variance, deviation and threshold formulas for indirect surveys.

Notation: ``f`` is the hidden fraction, ``mu_d``/``sigma_d2`` the mean and
variance of the latent in-degree, ``phi`` the pairwise co-membership
parameter (``E[I_v1 I_v2] = phi * f``; ``phi == f`` means independence).
Smoothness parameters ``eps1``/``eps2`` bound the first and second
differences of a series relative to its value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DomainError, InfeasibleWindow
from .survey import BiasGroups


@dataclass(frozen=True)
class VarianceInputs:
    f: float
    mu_d: float
    sigma_d2: float
    phi: float

    def __post_init__(self) -> None:
        if not 0 <= self.f <= 1:
            raise DomainError("f must lie in [0, 1]")
        if not self.mu_d > 0:
            raise DomainError("mu_d must be positive")
        if self.sigma_d2 < 0:
            raise DomainError("sigma_d2 must be non-negative")
        if not 0 <= self.phi <= 1:
            raise DomainError("phi must lie in [0, 1]")


@dataclass(frozen=True)
class WindowBoundInputs:
    """Inputs to the first-difference threshold.

    Attributes
    ----------
    eps_f1, eps_f2 : float
        Relative first/second difference bounds of the hidden fraction.
    eps_s1, eps_s2 : float
        The same for the response variance.
    w : int
        Window half-width.
    n_t : int
        Responses in the bin being estimated.
    n_w : int
        Responses in the whole window around it.
    sigma_n_over_mu_n : float
        Coefficient of variation of the per-bin response counts.
    """

    eps_f1: float
    eps_f2: float
    eps_s1: float
    eps_s2: float
    w: int
    n_t: float
    n_w: float
    sigma_n_over_mu_n: float = 0.0

    def __post_init__(self) -> None:
        if min(self.eps_f1, self.eps_f2, self.eps_s1, self.eps_s2) < 0:
            raise DomainError("smoothness parameters must be non-negative")
        if self.w < 0:
            raise DomainError("w must be >= 0")
        if not 0 < self.n_t <= self.n_w:
            raise DomainError("need 0 < n_t <= n_w")
        if self.sigma_n_over_mu_n < 0:
            raise DomainError("sigma_n_over_mu_n must be non-negative")


def variance_indirect(v: VarianceInputs) -> float:
    """Variance of one indirect response: ``f (mu^2 (phi - f) + mu (1 - phi) + sigma^2 phi)``."""
    f, mu, s2, phi = v.f, v.mu_d, v.sigma_d2, v.phi
    return f * (mu * mu * (phi - f) + mu * (1.0 - phi) + s2 * phi)


def variance_bounds(v: VarianceInputs) -> tuple[float, float]:
    """Variance at ``phi = 0`` and ``phi = 1``, the extremes over co-membership."""
    f, mu, s2 = v.f, v.mu_d, v.sigma_d2
    return mu * f * (1.0 - mu * f), f * (s2 + mu * mu * (1.0 - f))


def indirect_beats_direct(mu_d: float, sigma_d2: float, phi: float) -> bool:
    """Whether degree variance is small enough for indirect responses to win.

    True iff ``sigma_d2 <= mu_d (mu_d - 1) (1 - phi) / phi``; ``phi == 0``
    makes the threshold infinite.
    """
    if mu_d < 1:
        raise DomainError("mu_d must be >= 1")
    if not 0 <= phi <= 1:
        raise DomainError("phi must lie in [0, 1]")
    if phi == 0:
        return True
    return sigma_d2 <= mu_d * (mu_d - 1.0) * (1.0 - phi) / phi


def first_diff_deviation(eps1: float, j: int) -> float:
    """Relative bound on ``|g[t+j] - g[t]|`` given ``|dg| <= eps1 * g``."""
    x = abs(j) * eps1
    if x >= 1:
        raise DomainError(f"|j| * eps1 = {x} >= 1; the bound is vacuous")
    return x / (1.0 - x)


def window_average_error(eps2: float, w: int) -> float:
    """Leading term ``w (w + 1) eps2 / 6`` of the centered-average deviation.

    The ``o(w**4 eps2**2)`` remainder has no closed form and is dropped.
    """
    if w < 0 or eps2 < 0:
        raise DomainError("need w >= 0 and eps2 >= 0")
    return w * (w + 1) * eps2 / 6.0


def gamma_factor(eps1: float, eps2: float, w: int, sigma_n_over_mu_n: float) -> float:
    """Relative deviation of a count-weighted window average from the center value."""
    return window_average_error(eps2, w) + eps1 * sigma_n_over_mu_n * first_diff_deviation(eps1, w)


def weighted_window_deviation(eps1: float, eps2: float, w: int, sigma_n_over_mu_n: float) -> float:
    """Count-weighted window deviation bound as obtained by Cauchy-Schwarz.

    Same as :func:`gamma_factor` without the extra ``eps1`` on the count
    term. Larger, and valid for arbitrary count patterns.
    """
    return window_average_error(eps2, w) + sigma_n_over_mu_n * first_diff_deviation(eps1, w)


def lambda_threshold_thm3(b: WindowBoundInputs) -> float:
    """Smallest fractional error for which smoothing provably helps.

    Uses the first-difference bounds only:
    ``(w e_f / (1 - w e_f)) / (1 - (1 + w e_s / (1 - w e_s)) sqrt(n_t / n_w))``.
    """
    try:
        spread_f = first_diff_deviation(b.eps_f1, b.w)
        spread_s = first_diff_deviation(b.eps_s1, b.w)
    except DomainError as exc:
        raise InfeasibleWindow(str(exc)) from None
    denom = 1.0 - (1.0 + spread_s) * math.sqrt(b.n_t / b.n_w)
    if denom <= 0:
        raise InfeasibleWindow(f"denominator {denom:.6g} <= 0 at w={b.w}")
    return spread_f / denom


def lambda_threshold_thm4(gamma_f: float, gamma_s2: float, n_t: float, n_w: float) -> float:
    """Threshold ``gamma_f / (1 - sqrt((n_t / n_w) (1 + gamma_s2)))``."""
    if not 0 < n_t <= n_w:
        raise DomainError("need 0 < n_t <= n_w")
    denom = 1.0 - math.sqrt(n_t / n_w * (1.0 + gamma_s2))
    if denom <= 0:
        raise InfeasibleWindow(f"denominator {denom:.6g} <= 0")
    return gamma_f / denom


def bias_factor(bias: BiasGroups) -> float:
    """Expected reporting multiplier ``sum_j q_j alpha_j``."""
    return float(sum(q * a for q, a in bias.groups))
