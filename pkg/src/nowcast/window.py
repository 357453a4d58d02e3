"""Adaptive choice of the smoothing window for a target fractional error."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .bounds import WindowBoundInputs, gamma_factor, lambda_threshold_thm3, lambda_threshold_thm4
from .errors import DomainError
from .estimator import EstimateSeries, unweighted_ma, weighted_ma

PILOT_W = 3
SAFETY_INFLATION = 1.5


@dataclass(frozen=True)
class SmoothnessProfile:
    """Smoothness bounds for the hidden fraction (``f``) and response variance (``s``).

    ``eps_s2`` defaults to ``eps_s1``: only a first-difference bound on the
    variance is usually available.
    """

    eps_f1: float
    eps_f2: float
    eps_s1: float
    eps_s2: Optional[float] = None

    def __post_init__(self) -> None:
        if self.eps_s2 is None:
            object.__setattr__(self, "eps_s2", self.eps_s1)
        if min(self.eps_f1, self.eps_f2, self.eps_s1, self.eps_s2) < 0:
            raise DomainError("smoothness parameters must be non-negative")

    def gammas(self, w: int, sigma_n_over_mu_n: float) -> tuple[float, float]:
        return (
            gamma_factor(self.eps_f1, self.eps_f2, w, sigma_n_over_mu_n),
            gamma_factor(self.eps_s1, self.eps_s2, w, sigma_n_over_mu_n),
        )


@dataclass(frozen=True)
class WindowSearchResult:
    w_selected: int
    lambda1: float
    lambda2: float
    satisfied: bool
    estimate: EstimateSeries
    trace: tuple = field(default=(), repr=False)


def count_dispersion(counts: Sequence[int]) -> float:
    """``sigma_n / mu_n`` over the bins that received responses."""
    n = np.asarray(counts, dtype=float)
    n = n[n > 0]
    if n.size == 0:
        raise DomainError("no bin has responses")
    return float(n.std() / n.mean())


def worst_count_ratio(counts: Sequence[int], w: int) -> tuple[float, float]:
    """``(n_t, n_w)`` of the bin whose share ``n_t / n_w`` of its window is largest.

    Only windows that fit inside the series are considered when any exist;
    otherwise the truncated edge windows are used.
    """
    n = np.asarray(counts, dtype=float)
    size = n.size
    centers = [t for t in range(w, size - w) if n[t] > 0] or [t for t in range(size) if n[t] > 0]
    if not centers:
        raise DomainError("no bin has responses")
    best = None
    for t in centers:
        n_w = n[max(0, t - w) : t + w + 1].sum()
        ratio = n[t] / n_w
        if best is None or ratio > best[0]:
            best = (ratio, n[t], n_w)
    return best[1], best[2]


def thresholds_at(counts: Sequence[int], w: int, profile: SmoothnessProfile) -> tuple[float, float]:
    """Both smoothing thresholds at window ``w``; infeasible windows give ``inf``."""
    n_t, n_w = worst_count_ratio(counts, w)
    ratio = count_dispersion(counts)
    try:
        lam1 = lambda_threshold_thm3(
            WindowBoundInputs(profile.eps_f1, profile.eps_f2, profile.eps_s1, profile.eps_s2, w, n_t, n_w, ratio)
        )
    except DomainError:
        lam1 = math.inf
    try:
        gamma_f, gamma_s = profile.gammas(w, ratio)
        lam2 = lambda_threshold_thm4(gamma_f, gamma_s, n_t, n_w)
    except DomainError:
        lam2 = math.inf
    return lam1, lam2


def aggregated_estimate(
    e: EstimateSeries, lam: float, w_init: int = 5, profile: Optional[SmoothnessProfile] = None
) -> WindowSearchResult:
    """Shrink the window from ``w_init`` until a threshold drops to ``lam``.

    Parameters
    ----------
    e : EstimateSeries
        Unsmoothed per-bin estimates and response counts.
    lam : float
        Acceptable fractional error.
    w_init : int
        First window half-width tried.
    profile : SmoothnessProfile, optional
        Smoothness bounds; estimated from ``e`` when omitted.

    Returns
    -------
    WindowSearchResult
        If no ``w >= 1`` qualifies, ``w_selected`` is 0, ``satisfied`` is
        False and the estimate is ``e`` unchanged.
    """
    if not lam > 0:
        raise DomainError("lambda must be positive")
    if w_init < 1:
        raise DomainError("w_init must be >= 1")
    if profile is None:
        profile = smoothness_from_pilot(e)
    trace = []
    w = w_init
    while w > 0:
        lam1, lam2 = thresholds_at(e.counts, w, profile)
        trace.append((w, lam1, lam2))
        if min(lam1, lam2) <= lam:
            return WindowSearchResult(w, lam1, lam2, True, weighted_ma(e, w), tuple(trace))
        w -= 1
    return WindowSearchResult(0, math.inf, math.inf, False, e, tuple(trace))


def _max_ratios(values: np.ndarray) -> tuple[float, float]:
    # max |dv|/v and |d2v|/v over positions where the denominator is positive
    d1 = [abs(values[t + 1] - values[t]) / values[t] for t in range(values.size - 1)
          if values[t] > 0 and np.isfinite(values[t + 1])]
    d2 = [abs(values[t + 1] - 2 * values[t] + values[t - 1]) / values[t] for t in range(1, values.size - 1)
          if values[t] > 0 and np.isfinite(values[t - 1]) and np.isfinite(values[t + 1])]
    return (max(d1) if d1 else 0.0), (max(d2) if d2 else 0.0)


def _pilot(values: np.ndarray, counts: np.ndarray) -> np.ndarray:
    # interior of a centered 7-bin mean; truncated edge windows are biased
    e = EstimateSeries(0, np.where(counts > 0, values, np.nan), counts, "Ind")
    smoothed = unweighted_ma(e, PILOT_W).values
    if smoothed.size >= 2 * PILOT_W + 3:
        return smoothed[PILOT_W:-PILOT_W]
    return smoothed


def smoothness_from_pilot(
    e: EstimateSeries, variances: Optional[np.ndarray] = None, inflation: float = SAFETY_INFLATION
) -> SmoothnessProfile:
    """Estimate smoothness bounds from a pre-smoothed copy of ``e``.

    ``eps_f1``/``eps_f2`` are the maximal difference ratios of the interior
    of a 7-bin unweighted moving average. ``eps_s1`` comes from per-bin
    response variances when supplied, and otherwise falls back to
    ``eps_f1`` (for a small hidden fraction the response variance is close
    to proportional to it). Everything is multiplied by ``inflation``.
    """
    values = np.where(e.missing, np.nan, e.values)
    if int(np.sum(values > 0)) < 3:
        raise DomainError("need at least three bins with positive estimates")
    eps_f1, eps_f2 = _max_ratios(_pilot(values, e.counts))
    if variances is not None:
        var = np.asarray(variances, dtype=float)
        present = np.isfinite(var)
        eps_s1, _ = _max_ratios(_pilot(np.where(present, var, np.nan), np.where(present, 1, 0)))
    else:
        eps_s1 = eps_f1
    return SmoothnessProfile(inflation * eps_f1, inflation * eps_f2, inflation * eps_s1)
