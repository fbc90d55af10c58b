"""Model-free implied quantities from option strips and model variance
term structures.

Power-payout portfolios replicate E[R^n] of the log-return from OTM option
prices; central moments, skew/kurtosis and a VIX-style annualized variance
follow.  The model side provides the CIR integrated-variance curve and the
OU-volatility instantaneous/total variance (with the convexity-adjusted
expected-vol variant used to build volatility-scale targets).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    InsufficientStrikes,
    NegativeAdjusted,
    NonPositiveVariance,
)
from .market_data import PILLARS
from .pricer import OptionSpec, gk_price


@dataclass(frozen=True)
class PowerPortfolio:
    """Un-annualized expected powers of log-return for one tenor."""
    p1: float
    p2: float
    p3: float
    p4: float
    tau: float


@dataclass(frozen=True)
class ImpliedMomentSet:
    """Per-tenor implied central moments and the combinations built on them."""
    tau: float
    mu2: float
    mu3: float
    mu4: float
    skew: float
    kurt: float
    a_factor: float   # sqrt(1 + E[R^2 centered])
    ey2: float        # E[Y_T^2]
    exy: float        # E[X_T Y_T]


@dataclass(frozen=True)
class VarianceTermStructure:
    taus: tuple
    v2: tuple            # annualized implied total variance per tenor
    v2_corrected: tuple  # after the rho/omega correction


def _delta_k(strikes):
    """Half-distance rule: interior 0.5*(K[i+1]-K[i-1]), simple gap at ends."""
    k = np.asarray(strikes, dtype=float)
    dk = np.empty_like(k)
    dk[0] = k[1] - k[0]
    dk[-1] = k[-1] - k[-2]
    if len(k) > 2:
        dk[1:-1] = 0.5 * (k[2:] - k[:-2])
    return dk


def _check_strip(strikes, prices, k0):
    k = np.asarray(strikes, dtype=float)
    q = np.asarray(prices, dtype=float)
    if len(k) < 3 or len(k) != len(q):
        raise InsufficientStrikes(f"need >= 3 strikes with prices, got {len(k)}")
    if not (k[0] < k0 < k[-1] or np.any(k == k0)):
        raise InsufficientStrikes("strikes must span the ATM strike")
    if np.any(np.diff(k) <= 0.0):
        raise InsufficientStrikes("strikes must be strictly increasing")
    return k, q


def power_portfolios(strikes, prices, f0, k0, r_d, r_f, tau):
    """Discrete replication of E[R], E[R^2], E[R^3], E[R^4].

    prices are OTM mids (puts below k0, calls above, straddle average at k0);
    the strike-mismatch corrections for f0 != k0 are dropped, which is the
    FX approximation (ATM-delta strikes sit next to the forward).
    """
    k, q = _check_strip(strikes, prices, k0)
    dk = _delta_k(k)
    y = np.log(k / f0)
    growth = math.exp(r_d * tau)
    base = growth * q * dk / (k * k)
    p2 = float(np.sum(2.0 * (1.0 - y) * base))
    p3 = float(np.sum(3.0 * (2.0 * y - y * y) * base))
    p4 = float(np.sum(4.0 * (3.0 * y * y - y ** 3) * base))
    p1 = math.exp((r_d - r_f) * tau) - 1.0 - p2 / 2.0 - p3 / 6.0 - p4 / 24.0
    return PowerPortfolio(p1=p1, p2=p2, p3=p3, p4=p4, tau=tau)


def central_moments(pp):
    """(mu2, mu3, mu4) from raw power expectations."""
    p1, p2, p3, p4 = pp.p1, pp.p2, pp.p3, pp.p4
    mu2 = p2 - p1 * p1
    mu3 = p3 - 3.0 * p1 * p2 + 2.0 * p1 ** 3
    mu4 = p4 - 4.0 * p1 * p3 + 6.0 * p1 * p1 * p2 - 3.0 * p1 ** 4
    if mu2 <= 0.0:
        raise NonPositiveVariance(f"mu2 = {mu2} <= 0")
    return mu2, mu3, mu4


def skew_kurt(mu2, mu3, mu4):
    return mu3 / mu2 ** 1.5, mu4 / mu2 ** 2


def implied_variance_vix(strikes, prices, f0, k0, r_d, tau):
    """Annualized implied total variance from an OTM strip.

    V^2 = (2/tau) sum dK/K^2 e^{r_d tau} Q(K) - (1/tau)(F0/K0 - 1)^2.
    """
    k, q = _check_strip(strikes, prices, k0)
    dk = _delta_k(k)
    s = float(np.sum(dk / (k * k) * math.exp(r_d * tau) * q))
    return 2.0 * s / tau - (f0 / k0 - 1.0) ** 2 / tau


def corrected_variance(v2, rho, omega, tau):
    """Strip variance corrected for the rho/omega distortion (kappa -> 0 limit)."""
    return v2 * (1.0 - 0.5 * rho * omega * tau + omega * omega * tau * tau / 12.0)


def heston_total_variance(nu0, theta, kappa, tau):
    """Annualized expected integrated CIR variance over [0, tau]."""
    x = kappa * tau
    if x < 1e-8:
        return nu0 + (theta - nu0) * x / 2.0
    return theta + (nu0 - theta) * (1.0 - math.exp(-x)) / x


def sz_instantaneous_variance(nu0, theta, kappa, omega, t):
    """E[nu_t^2] for the OU-volatility process."""
    e = math.exp(-2.0 * kappa * t)
    ek = math.exp(kappa * t)
    return (omega * omega / (2.0 * kappa) * (1.0 - e)
            + e * nu0 * nu0
            + theta * e * (ek - 1.0) * (theta * (ek - 1.0) + 2.0 * nu0))


def sz_total_variance(nu0, theta, kappa, omega, tau):
    """Annualized E[integrated nu_t^2 / tau] for the OU-volatility process."""
    e1 = math.exp(-kappa * tau)
    e2 = e1 * e1
    o2k = omega * omega / (2.0 * kappa)
    total = (theta * theta * (2.0 * kappa * tau - 3.0)
             + 2.0 * theta * nu0
             + o2k * (2.0 * kappa * tau - 1.0)
             + nu0 * nu0
             + 4.0 * theta * (theta - nu0) * e1
             - ((theta - nu0) ** 2 - o2k) * e2)
    return total / (2.0 * kappa * tau)


def heston_variance_of_total_variance(nu0, theta, kappa, omega, tau):
    """Var of annualized integrated CIR variance (used as convexity input)."""
    x = kappa * tau
    e = math.exp(-x)
    e2 = math.exp(-2.0 * x)
    return (omega * omega / (2.0 * tau * tau * kappa ** 3)
            * (2.0 * (nu0 - theta) * (1.0 - 2.0 * x * e - e2)
               + theta * (4.0 * e - 3.0 + 2.0 * x - e2)))


def sz_expected_vol(total_variance, nu0, theta, kappa, omega_h, tau):
    """E[sqrt(vbar/tau)] via the second-order convexity adjustment.

    total_variance is the corrected strip variance; the variance-of-variance
    plugs in the CIR-model formula with the variance-curve parameters and the
    historical omega estimate.
    """
    if total_variance <= 0.0:
        raise NonPositiveVariance(f"total variance {total_variance} <= 0")
    var_tv = heston_variance_of_total_variance(nu0, theta, kappa, omega_h, tau)
    adj = 1.0 - var_tv / (8.0 * total_variance * total_variance)
    if adj <= 0.0:
        raise NegativeAdjusted(
            f"convexity adjustment {1.0 - adj} exceeds 1 at tau={tau}")
    return math.sqrt(total_variance) * adj


def icm_moment_combinations(mu2, mu3, mu4):
    """(E[Y^2], E[X Y]) from implied central moments.

    A = sqrt(1 + mu2); both combinations are A^{-6}-weighted polynomials in A
    with the central moments as coefficients.
    """
    a = math.sqrt(1.0 + mu2)
    a2 = a * a
    a3 = a2 * a
    a5 = a3 * a2
    a6 = a3 * a3
    a7 = a6 * a
    a8 = a6 * a2
    inv6 = 1.0 / a6
    ey2 = inv6 * (4.0 * a8 - 8.0 * a7 + 4.0 * a6
                  + (4.0 * a6 - 8.0 * a5 + 4.0 * a3) * mu2
                  + (4.0 * a2 - 4.0 * a3) * mu3
                  + mu4)
    exy = inv6 * (2.0 * a8 - 4.0 * a7 + 2.0 * a6
                  + (2.0 * a3 - 2.0 * a5) * mu2
                  + (2.0 * a2 - a3) * mu3
                  + 0.5 * mu4)
    return ey2, exy


# ---------------------------------------------------------------------------
# surface helpers
# ---------------------------------------------------------------------------

def otm_strip(surface, sl):
    """(strikes, OTM mid prices, F0, K0) for one tenor of a surface.

    Prices are Garman-Kohlhagen values of the quoted pillar vols: puts below
    the ATM strike, calls above, put/call average at the ATM strike.
    """
    s = surface.spot
    k0 = sl.strikes[PILLARS.index("ATM")]
    prices = []
    for pillar, vol, strike in zip(PILLARS, sl.vols.vols, sl.strikes):
        if strike < k0:
            side = "put"
        elif strike > k0:
            side = "call"
        else:
            c = gk_price(OptionSpec(s, strike, sl.tau, sl.r_d, sl.r_f, "call"), vol)
            p = gk_price(OptionSpec(s, strike, sl.tau, sl.r_d, sl.r_f, "put"), vol)
            prices.append(0.5 * (c + p))
            continue
        prices.append(gk_price(OptionSpec(s, strike, sl.tau, sl.r_d, sl.r_f, side), vol))
    return np.asarray(sl.strikes), np.asarray(prices), sl.forward, k0


def moment_set_for_slice(surface, sl):
    """ImpliedMomentSet for one tenor (strip -> powers -> central moments)."""
    strikes, prices, f0, k0 = otm_strip(surface, sl)
    pp = power_portfolios(strikes, prices, f0, k0, sl.r_d, sl.r_f, sl.tau)
    mu2, mu3, mu4 = central_moments(pp)
    s, c = skew_kurt(mu2, mu3, mu4)
    ey2, exy = icm_moment_combinations(mu2, mu3, mu4)
    return ImpliedMomentSet(tau=sl.tau, mu2=mu2, mu3=mu3, mu4=mu4, skew=s, kurt=c,
                            a_factor=math.sqrt(1.0 + mu2), ey2=ey2, exy=exy)


def surface_moment_sets(surface):
    return [moment_set_for_slice(surface, sl) for sl in surface.slices]


def surface_variance_ts(surface, rho_h, omega_h):
    """Raw and corrected VIX-style variance term structure of a surface."""
    taus, v2s, v2cs = [], [], []
    for sl in surface.slices:
        strikes, prices, f0, k0 = otm_strip(surface, sl)
        v2 = implied_variance_vix(strikes, prices, f0, k0, sl.r_d, sl.tau)
        taus.append(sl.tau)
        v2s.append(v2)
        v2cs.append(corrected_variance(v2, rho_h, omega_h, sl.tau))
    return VarianceTermStructure(taus=tuple(taus), v2=tuple(v2s),
                                 v2_corrected=tuple(v2cs))
