"""Closed-form predictions: convergence bounds for the consensus metrics,
error-moment constants, asymptotic detection characteristics, CUSUM operating
characteristics, the parallel-bank delay integral, and relative efficiencies.

Accurate and large-threshold approximations are always computed side by side
and labeled, because reproducing the reference tables requires both.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import integrate

from .stats import QuadratureError, kl_binary, q_function, q_inverse, wald_cdf, wald_cdf_inverse


# ---------------------------------------------------------------------------
# Consensus performance metrics and their bounds
# ---------------------------------------------------------------------------

def consensus_metrics_from_covariance(
    C: np.ndarray, sigma2: float, n: int, M: int
) -> tuple[np.ndarray, np.ndarray]:
    """Per-node variance ratio gamma and pairwise consensus coefficient rho.

    gamma_i normalizes the node variance by the centralized variance
    sigma^2/(nM); rho_ij = 2 C_ij / (C_ii + C_jj) equals the correlation
    coefficient times the geometric/arithmetic variance-ratio.
    """
    C = np.asarray(C, dtype=float)
    if C.shape != (M, M):
        raise ValueError(f"covariance must be {M}x{M}, got {C.shape}")
    diag = np.diag(C)
    if np.any(diag == 0.0):
        raise ValueError("covariance has a zero diagonal entry")
    sigma2_n = sigma2 / (n * M)
    gamma = diag / sigma2_n
    denom = 0.5 * (diag[:, None] + diag[None, :])
    rho = C / denom
    return gamma, rho


class BoundVariant(Enum):
    """Which slot-update form the bounds describe.

    NEW_SAMPLE_EXCHANGED: fresh measurements enter the same slot's gossip
    average, so even the newest term is mixed once (psi carries a leading
    eigenvalue factor).  NEW_SAMPLE_HELD: fresh measurements are added after
    the averaging step and stay unmixed for one slot.
    """

    NEW_SAMPLE_EXCHANGED = "new_sample_exchanged"
    NEW_SAMPLE_HELD = "new_sample_held"


@dataclass(frozen=True)
class BoundSet:
    """Per-slot bounds for gamma_i - 1 and 1 - rho_ij plus large-n forms."""

    variant: BoundVariant
    n: np.ndarray
    psi_U: np.ndarray
    psi_L: np.ndarray
    gamma_lower: np.ndarray
    gamma_upper: np.ndarray
    rho_lower: np.ndarray
    rho_upper: np.ndarray
    approx_B_L: np.ndarray
    approx_B_U: np.ndarray
    rate: float


def _psi(lam: float, n: np.ndarray, variant: BoundVariant) -> np.ndarray:
    if lam == 0.0:
        base = np.where(n >= 1, 1.0, 0.0) / n
        return np.zeros_like(base) if variant is BoundVariant.NEW_SAMPLE_EXCHANGED else base
    geometric = (1.0 - lam ** n) / (1.0 - lam)
    if variant is BoundVariant.NEW_SAMPLE_EXCHANGED:
        return lam * geometric / n
    return geometric / n


def theorem_bounds(
    lambda_U: float, lambda_L: float, M: int, n_max: int, variant: BoundVariant
) -> BoundSet:
    """Upper/lower envelopes for both consensus metrics on slots 1..n_max.

    The 1 - rho upper envelope uses psi_U in the numerator and psi_L in the
    denominator, the widest ratio the covariance sandwich allows.
    """
    if not 0.0 <= lambda_L <= lambda_U:
        raise ValueError(f"need 0 <= lambda_L <= lambda_U, got {lambda_L}, {lambda_U}")
    if lambda_U >= 1.0:
        raise ValueError(f"bounds require lambda_U < 1, got {lambda_U}")
    n = np.arange(1, n_max + 1, dtype=float)
    psi_U = _psi(lambda_U, n, variant)
    psi_L = _psi(lambda_L, n, variant)
    gamma_lower = (M - 1) * psi_L
    gamma_upper = (M - 1) * psi_U
    rho_lower = M * psi_L / (1.0 + (M - 1) * psi_U)
    rho_upper = M * psi_U / (1.0 + (M - 1) * psi_L)
    if variant is BoundVariant.NEW_SAMPLE_EXCHANGED:
        approx_B_L = (M / n) * lambda_L / (1.0 - lambda_L) if lambda_L < 1.0 else np.full_like(n, np.inf)
        approx_B_U = (M / n) * lambda_U / (1.0 - lambda_U)
        rate = M * lambda_U / (1.0 - lambda_U)
    else:
        approx_B_L = (M / n) / (1.0 - lambda_L)
        approx_B_U = (M / n) / (1.0 - lambda_U)
        rate = M / (1.0 - lambda_U)
    return BoundSet(
        variant=variant,
        n=n,
        psi_U=psi_U,
        psi_L=psi_L,
        gamma_lower=gamma_lower,
        gamma_upper=gamma_upper,
        rho_lower=rho_lower,
        rho_upper=rho_upper,
        approx_B_L=approx_B_L,
        approx_B_U=approx_B_U,
        rate=rate,
    )


@dataclass(frozen=True)
class MomentBoundConstants:
    C1: float
    C2: float


def moment_bound_constants(M: int, lambda_U: float) -> MomentBoundConstants:
    """Constants bounding the second and third moments of the consensus error."""
    if not 0.0 <= lambda_U < 1.0:
        raise ValueError(f"need lambda_U in [0,1), got {lambda_U}")
    c1 = M ** 3 * lambda_U / (1.0 - lambda_U)
    root = math.sqrt(lambda_U)
    c2 = M ** 4.5 / (1.0 - root) * (lambda_U / (1.0 - root) + 1.0 / (1.0 - lambda_U))
    return MomentBoundConstants(C1=c1, C2=c2)


# ---------------------------------------------------------------------------
# Fixed-sample-size and sequential asymptotics
# ---------------------------------------------------------------------------

def fss_asymptotic_pd(p_f: float, gamma_scale: float, d: float) -> float:
    """Limiting detection probability Q(Q^{-1}(p_f) - gamma d)."""
    return float(q_function(q_inverse(p_f) - gamma_scale * d))


def sequential_asymptotics(p_f: float, p_d: float, d: float) -> tuple[float, float]:
    """Scaled expected sample sizes under each hypothesis, Wiener limit."""
    if not 0.0 < p_f < p_d < 1.0:
        raise ValueError(f"need 0 < p_f < p_d < 1, got p_f={p_f}, p_d={p_d}")
    return 2.0 * kl_binary(p_f, p_d) / d**2, 2.0 * kl_binary(p_d, p_f) / d**2


# ---------------------------------------------------------------------------
# CUSUM operating characteristics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OperatingPoint:
    family: str
    gamma: float
    false_alarm_rate: float
    delay: float
    approximation: str  # "accurate" or "large_gamma"


def false_alarm_rate_accurate(gamma, M: int, delta01: float):
    g = np.asarray(gamma, dtype=float)
    return M * delta01 / (np.exp(g) - g - 1.0)


def false_alarm_rate_large_gamma(gamma, M: int, delta01: float):
    return M * delta01 * np.exp(-np.asarray(gamma, dtype=float))


def delay_accurate(gamma, M: int, delta10: float):
    g = np.asarray(gamma, dtype=float)
    return (g + np.exp(-g) - 1.0) / (M * delta10)


def delay_large_gamma(gamma, M: int, delta10: float):
    return np.asarray(gamma, dtype=float) / (M * delta10)


def page_operating_characteristics(
    gamma_grid, M: int, delta01: float, delta10: float
) -> list[OperatingPoint]:
    """Rate/delay predictions for the fusion detector and a lone sensor."""
    points: list[OperatingPoint] = []
    for gamma in np.asarray(gamma_grid, dtype=float):
        if gamma <= 0.0:
            raise ValueError(f"threshold must be positive, got {gamma}")
        for family, m in (("centralized", M), ("single", 1)):
            points.append(OperatingPoint(
                family, float(gamma),
                float(false_alarm_rate_accurate(gamma, m, delta01)),
                float(delay_accurate(gamma, m, delta10)),
                "accurate",
            ))
            points.append(OperatingPoint(
                family, float(gamma),
                float(false_alarm_rate_large_gamma(gamma, m, delta01)),
                float(delay_large_gamma(gamma, m, delta10)),
                "large_gamma",
            ))
    return points


def threshold_for_rate(R: float, M: int, delta01: float) -> float:
    """Invert the accurate rate formula for the threshold, by bisection."""
    if R <= 0.0:
        raise ValueError(f"rate must be positive, got {R}")
    target = M * delta01 / R  # = e^g - g - 1
    lo, hi = 1e-9, 1.0
    while math.exp(hi) - hi - 1.0 < target:
        hi *= 2.0
        if hi > 1e4:
            raise ValueError("threshold inversion out of range")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if math.exp(mid) - mid - 1.0 < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def threshold_for_rate_large_gamma(R: float, M: int, delta01: float) -> float:
    """log(M delta01 / R): the large-threshold inversion."""
    value = M * delta01 / R
    if value <= 1.0:
        raise ValueError(f"rate {R} too large for the large-threshold form")
    return math.log(value)


def centralized_delay_at_rate(R: float, M: int, delta01: float, delta10: float) -> float:
    """Operating characteristic D(R) through the accurate formula pair."""
    return float(delay_accurate(threshold_for_rate(R, M, delta01), M, delta10))


# ---------------------------------------------------------------------------
# Parallel-bank delay
# ---------------------------------------------------------------------------

def survival_power_integral(z: float, M: int) -> float:
    """Integral of [1 - F_W(.; z)]^M over (0, inf), log-domain inside."""
    if z <= 0.0 or M < 1:
        raise ValueError(f"need z > 0 and M >= 1, got z={z}, M={M}")

    def integrand(xi: float) -> float:
        if xi <= 0.0:
            return 1.0
        F = wald_cdf(xi, z)
        if F >= 1.0:
            return 0.0
        return math.exp(M * math.log1p(-F))

    hi = 2.0
    while integrand(hi) > 1e-14:
        hi *= 2.0
        if hi > 1e9:
            raise QuadratureError("bank-delay integrand does not decay")
    value, err = integrate.quad(integrand, 0.0, hi, epsabs=1e-12, epsrel=1e-10, limit=400)
    if err > max(abs(value), 1e-10) * 1e-6:
        raise QuadratureError(f"bank-delay integral error {err:.3e} for value {value:.6e}")
    return float(value)


@dataclass(frozen=True)
class BankDelay:
    integral: float
    castillo: float


def bank_delay(gamma: float, M: int, delta10: float, var1_of_llr: float) -> BankDelay:
    """Expected first alarm of M parallel filters after the change.

    The main route integrates the M-th power of the Wald survival; the
    companion value replaces the minimum's expectation with the 1/(M+1)
    quantile, a shortcut that works for moderately large M.
    """
    if gamma <= 0.0 or delta10 <= 0.0 or var1_of_llr <= 0.0 or M < 1:
        raise ValueError("bank_delay needs positive gamma, delta10, var1 and M >= 1")
    delta = delta10 / var1_of_llr
    z = gamma * delta
    base = (gamma + math.exp(-gamma) - 1.0) / delta10
    integral = base * survival_power_integral(z, M)
    castillo = (gamma / delta10) * wald_cdf_inverse(1.0 / (M + 1.0), z)
    return BankDelay(integral=integral, castillo=castillo)


def g_factor(M: int, R: float, delta01: float, delta10: float, var1_of_llr: float) -> float:
    """Bank speed-up factor at matched false-alarm rate (>= 1)."""
    gamma = threshold_for_rate_large_gamma(R, M, delta01)
    delta = delta10 / var1_of_llr
    return 1.0 / survival_power_integral(gamma * delta, M)


@dataclass(frozen=True)
class EfficiencyPoint:
    R: float
    eta_cr: float
    eta_sr: float
    eta_br: float
    eta_bs: float


def relative_efficiencies(
    R_values, M: int, delta01: float, delta10: float, var1_of_llr: float
) -> list[EfficiencyPoint]:
    """Delay ratios of the four architectures at matched false-alarm rate."""
    points = []
    for R in np.asarray(R_values, dtype=float):
        if math.log(delta01 / R) <= 0.0:
            raise ValueError(f"rate {R} too large: log(delta01/R) must be positive")
        braces = 1.0 + math.log(M) / math.log(delta01 / R)
        g = g_factor(M, R, delta01, delta10, var1_of_llr)
        points.append(EfficiencyPoint(
            R=float(R),
            eta_cr=1.0,
            eta_sr=braces / M,
            eta_br=g / M,
            eta_bs=g / braces,
        ))
    return points
