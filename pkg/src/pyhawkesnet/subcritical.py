"""Estimators of (μ, Λ, p) from K observed individuals in the subcritical case.

Only Z^i on the grid {t, t + Δ, ..., 2t} (plus the 2Δ sub-grid) is ever
read from the log, so every statistic is a pure function of
(log, K, t, Δ).
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Optional

import numpy as np
from scipy.stats import norm

from .errors import DomainError, GridError, HorizonTooShortError
from .simulator import EventLog
from .utils import json_float

logger = logging.getLogger("pyhawkesnet.subcritical")

DEFAULT_Q = 7.0
DEFAULT_ALPHA = 0.1
GRID_TOL = 1e-9


class Regime(Enum):
    I = "I"
    II = "II"
    III = "III"
    MIXED = "mixed"


class CIMode(Enum):
    DELTA = "delta"
    LITERAL = "literal"


# ------------------ Δ rule and grids ------------------


def delta_rule(t: float, q: float = DEFAULT_Q) -> float:
    """Δ_t = t / (2 ⌊t^{1-4/(q+1)}⌋)."""
    if not q > 3:
        raise DomainError(f"q must be > 3, got {q}.")
    if not t > 0:
        raise HorizonTooShortError(f"t must be > 0, got {t}.")
    bins = math.floor(t ** (1.0 - 4.0 / (q + 1.0)) + GRID_TOL)
    if bins < 1:
        raise HorizonTooShortError(f"t={t} is too short for q={q}: ⌊t^(1-4/(q+1))⌋ = 0.")
    return t / (2 * bins)


def _grid_steps(t: float, delta: float) -> int:
    """t/Δ, which must be a positive integer."""
    if not delta > 0:
        raise GridError(f"Δ must be > 0, got {delta}.")
    ratio = t / delta
    steps = round(ratio)
    if steps < 1 or abs(ratio - steps) > GRID_TOL * max(1.0, ratio):
        raise GridError(f"t/Δ = {ratio} is not a positive integer.")
    return steps


def _check_window(log: EventLog, k_obs: int, t: float) -> None:
    if not t > 0:
        raise DomainError(f"t must be > 0, got {t}.")
    if log.horizon < 2 * t * (1 - GRID_TOL):
        raise HorizonTooShortError(
            f"Estimation on [t, 2t] needs horizon >= {2 * t}, log has {log.horizon}."
        )
    if not 1 <= k_obs <= log.n:
        raise DomainError(f"K must satisfy 1 <= K <= {log.n}, got {k_obs}.")


def _increments(log: EventLog, k_obs: int, t: float) -> np.ndarray:
    """(Z^i_{2t} - Z^i_t) for i <= K."""
    two_t = min(2 * t, log.horizon)
    counts = log.counts_on_grid([t, two_t], k_obs)
    return (counts[:, 1] - counts[:, 0]).astype(np.float64)


# ------------------ statistics ------------------


def epsilon_stat(log: EventLog, k_obs: int, t: float) -> float:
    """ε_t = (Z̄_{2t} - Z̄_t) / t."""
    _check_window(log, k_obs, t)
    return float(_increments(log, k_obs, t).mean() / t)


def v_stat(log: EventLog, k_obs: int, t: float) -> float:
    """𝒱_t = (N/K) Σ_{i≤K} [(Z^i_{2t} - Z^i_t)/t - ε_t]² - (N/t) ε_t."""
    _check_window(log, k_obs, t)
    rates = _increments(log, k_obs, t) / t
    eps = float(rates.mean())
    dev = rates - eps
    return float(log.n / k_obs * np.dot(dev, dev) - log.n / t * eps)


def z_delta_stat(log: EventLog, k_obs: int, t: float, delta: float) -> float:
    """𝒵_{Δ,t} = (N/t) Σ_{a=t/Δ+1}^{2t/Δ} (Z̄_{aΔ} - Z̄_{(a-1)Δ} - Δ ε_t)²."""
    _check_window(log, k_obs, t)
    steps = _grid_steps(t, delta)
    grid = delta * np.arange(steps, 2 * steps + 1)
    grid[0] = t
    grid[-1] = min(2 * t, log.horizon)
    z_bar = log.counts_on_grid(grid, k_obs).mean(axis=0)
    dev = np.diff(z_bar) - delta * epsilon_stat(log, k_obs, t)
    return float(log.n / t * np.dot(dev, dev))


def w_stat(log: EventLog, k_obs: int, t: float, delta: float) -> float:
    """𝒲_{Δ,t} = 2 𝒵_{2Δ,t} - 𝒵_{Δ,t}."""
    return 2.0 * z_delta_stat(log, k_obs, t, 2 * delta) - z_delta_stat(log, k_obs, t, delta)


def x_stat(log: EventLog, k_obs: int, t: float, delta: float) -> float:
    """𝒳_{t,Δ} = 𝒲_{Δ,t} - ((N-K)/K) ε_t."""
    correction = (log.n - k_obs) / k_obs * epsilon_stat(log, k_obs, t)
    return w_stat(log, k_obs, t, delta) - correction


# ------------------ plug-in maps ------------------


def f_map(u: float, v: float, w: float) -> float:
    """u(w - u) / (w + √(wu))."""
    return u * (w - u) / (w + math.sqrt(w * u))


def psi3(u: float, v: float, w: float) -> float:
    """p̂ map; 0 outside u, v, w > 0."""
    if not (u > 0 and v > 0 and w > 0):
        return 0.0
    head = (u * (1.0 - math.sqrt(u / w))) ** 2
    return head / (v + head)


def psi1(u: float, v: float, w: float) -> float:
    """μ̂ map; 0 outside u > 0, v > 0, w > u."""
    if not (u > 0 and v > 0 and w > u):
        return 0.0
    return u * math.sqrt(u / w)


def psi2(u: float, v: float, w: float) -> float:
    """Λ̂ map; 0 outside u > 0, v > 0, w > u."""
    if not (u > 0 and v > 0 and w > u):
        return 0.0
    gap = u - psi1(u, v, w)
    return (v + gap**2) / (u * gap)


def fixed_point(mu: float, lam: float, p: float) -> tuple[float, float, float]:
    """Limits (ε, 𝒱, 𝒳) = (μ/(1-Λp), (μΛ)²p(1-p)/(1-Λp)², μ/(1-Λp)³)."""
    slack = 1.0 - lam * p
    if not slack > 0:
        raise DomainError(f"Λp = {lam * p} is not subcritical.")
    return (
        mu / slack,
        (mu * lam) ** 2 * p * (1 - p) / slack**2,
        mu / slack**3,
    )


# ------------------ regimes and variances ------------------


class RateTerms(NamedTuple):
    sqrt_k: float
    bandwidth: float
    horizon: float
    graph: Optional[float] = None

    def by_regime(self) -> dict:
        return {Regime.I: self.sqrt_k, Regime.II: self.horizon, Regime.III: self.bandwidth}


def rate_terms(
    n: int, k_obs: int, t: float, delta: float, p: Optional[float] = None, lam: Optional[float] = None
) -> RateTerms:
    """1/√K, (N/K)√(Δ/t), N/(t√K) and, with (p, Λ), N e^{-c_{p,Λ} K}."""
    graph = None
    if p is not None and lam is not None:
        c = (1.0 - lam * p) ** 2 / (2.0 * lam**2)
        graph = n * math.exp(-c * k_obs)
    return RateTerms(
        1.0 / math.sqrt(k_obs),
        n / k_obs * math.sqrt(delta / t),
        n / (t * math.sqrt(k_obs)),
        graph,
    )


class VarianceOracle(NamedTuple):
    literal: float
    delta_method: float

    @property
    def mismatch(self) -> bool:
        return not math.isclose(self.literal, self.delta_method, rel_tol=1e-9, abs_tol=1e-15)


def psi3_gradient(mu: float, lam: float, p: float) -> tuple[float, float]:
    """(∂Ψ³/∂v, ∂Ψ³/∂w) at the fixed point."""
    slack = 1.0 - lam * p
    return -(slack**2) / (mu**2 * lam**2), slack**4 * (1 - p) / (mu * lam)


def component_variance(regime: Regime, mu: float, lam: float, p: float, gamma: Optional[float] = None) -> float:
    """Limit variance of the statistic driving each regime.

    I: √K(𝒱_t - μ²·limit), from the matrix CLT scaled by μ⁴.
    II: (t√K/N)(𝒱_t - μ²𝒱_∞).
    III: (K/N)√(t/Δ)(𝒳 - 𝒳_∞).
    """
    slack = 1.0 - lam * p
    if regime is Regime.I:
        return (mu**2 * lam**2 * p * (1 - p) / slack**2) ** 2
    if regime is Regime.II:
        return 2 * mu**2 / slack**2
    if regime is Regime.III:
        if gamma is None:
            raise DomainError("Regime III needs gamma = lim K/N.")
        return 1.5 * ((1 - gamma) / slack + gamma / slack**3) ** 2
    raise DomainError(f"No variance for regime {regime}.")


def asymptotic_variance(
    regime: Regime, mu: float, lam: float, p: float, gamma: Optional[float] = None
) -> VarianceOracle:
    """Limit variance of p̂ in a regime, as printed and by the delta method."""
    regime = Regime(regime)
    if not lam * p < 1:
        raise DomainError(f"Λp = {lam * p} is not subcritical.")
    if regime is Regime.III and gamma is None:
        raise DomainError("Regime III needs gamma = lim K/N.")
    slack = 1.0 - lam * p

    if regime is Regime.I:
        literal = p**2 * (1 - p) ** 2 / mu**4
    elif regime is Regime.II:
        literal = 2 * slack / (mu**2 * lam**4)
    elif regime is Regime.III:
        literal = (
            3 * (1 - p) ** 2 / (2 * mu**2 * lam**2)
            * ((1 - gamma) * slack**3 + gamma * slack) ** 2
        )
    else:
        raise DomainError("Mixed regimes have no limit variance.")

    d_v, d_w = psi3_gradient(mu, lam, p)
    slope = d_w if regime is Regime.III else d_v
    delta = slope**2 * component_variance(regime, mu, lam, p, gamma)
    return VarianceOracle(literal, delta)


def classify_terms(terms: RateTerms, factor: float = 5.0) -> tuple[Regime, float]:
    """Dominating regime and the realized max/median ratio."""
    ranked = sorted(terms.by_regime().items(), key=lambda kv: kv[1], reverse=True)
    (top, first), (_, second) = ranked[0], ranked[1]
    ratio = first / second if second > 0 else math.inf
    return (top if ratio >= factor else Regime.MIXED), ratio


# ------------------ confidence interval ------------------


@dataclass(slots=True, frozen=True)
class ConfidenceInterval:
    mode: CIMode
    halfwidth: Optional[float]
    reason: Optional[str] = None

    @property
    def defined(self) -> bool:
        return self.halfwidth is not None

    def bounds(self, p_hat: float) -> Optional[tuple[float, float]]:
        if self.halfwidth is None:
            return None
        return max(0.0, p_hat - self.halfwidth), min(1.0, p_hat + self.halfwidth)

    def to_dict(self, p_hat: float) -> dict:
        return {
            "mode": self.mode.value,
            "defined": self.defined,
            "halfwidth": json_float(self.halfwidth),
            "interval": self.bounds(p_hat),
            "reason": self.reason,
        }


def ci_halfwidth(
    mode: CIMode,
    p_hat: float,
    mu_hat: float,
    lam_hat: float,
    terms: RateTerms,
    gamma: float,
    alpha: float,
) -> ConfidenceInterval:
    """I_{N,K,t,α} from the plug-in estimates, in either mode."""
    mode = CIMode(mode)
    if not 0 < alpha < 1:
        raise DomainError(f"alpha must lie in (0,1), got {alpha}.")
    z = float(norm.ppf(1 - alpha / 2))
    if not (p_hat > 0 and mu_hat > 0 and lam_hat > 0):
        return ConfidenceInterval(mode, None, "plug-in estimates on the boundary (p̂, μ̂ or Λ̂ is 0)")

    if mode is CIMode.LITERAL:
        if mu_hat > 1:
            return ConfidenceInterval(mode, None, "√(2(1-μ̂)) undefined for μ̂ > 1")
        width = (
            terms.sqrt_k * p_hat * (1 - p_hat) / p_hat
            + terms.horizon * math.sqrt(2 * (1 - mu_hat)) / (mu_hat * lam_hat**2)
            + terms.bandwidth * math.sqrt(3 * (1 - p_hat) ** 2 / (2 * mu_hat**2 * lam_hat**2))
        )
        return ConfidenceInterval(mode, z * width)

    if not lam_hat * p_hat < 1:
        return ConfidenceInterval(mode, None, "Λ̂p̂ >= 1: plug-in point is not subcritical")
    sds = {
        regime: math.sqrt(asymptotic_variance(regime, mu_hat, lam_hat, p_hat, gamma).delta_method)
        for regime in (Regime.I, Regime.II, Regime.III)
    }
    width = (
        terms.sqrt_k * sds[Regime.I]
        + terms.horizon * sds[Regime.II]
        + terms.bandwidth * sds[Regime.III]
    )
    return ConfidenceInterval(mode, z * width)


# ------------------ estimate ------------------


@dataclass(slots=True, frozen=True)
class SubcriticalEstimate:
    epsilon: float
    v_stat: float
    z_delta: float
    z_2delta: float
    w_stat: float
    x_stat: float
    delta: float
    p_hat: float
    mu_hat: float
    lambda_hat: float
    ci: ConfidenceInterval
    ci_alternate: ConfidenceInterval
    terms: RateTerms
    regime: Regime
    dominance: float
    n: int
    k: int
    t: float
    q: float
    alpha: float

    @property
    def ci_halfwidth(self) -> Optional[float]:
        return self.ci.halfwidth

    def to_dict(self) -> dict:
        return {
            "kind": "subcritical",
            "inputs": {"n": self.n, "k": self.k, "t": self.t, "q": self.q, "alpha": self.alpha},
            "epsilon": self.epsilon,
            "v_stat": self.v_stat,
            "z_delta": self.z_delta,
            "z_2delta": self.z_2delta,
            "w_stat": self.w_stat,
            "x_stat": self.x_stat,
            "delta": self.delta,
            "p_hat": self.p_hat,
            "mu_hat": self.mu_hat,
            "lambda_hat": self.lambda_hat,
            "ci": self.ci.to_dict(self.p_hat),
            "ci_alternate": self.ci_alternate.to_dict(self.p_hat),
            "diagnostics": {
                "rate_terms": {
                    "inv_sqrt_k": self.terms.sqrt_k,
                    "bandwidth": self.terms.bandwidth,
                    "horizon": self.terms.horizon,
                },
                "dominating": self.regime.value,
                "dominance_factor": json_float(self.dominance),
            },
        }


def estimate(
    log: EventLog,
    k_obs: int,
    t: float,
    q: float = DEFAULT_Q,
    alpha: float = DEFAULT_ALPHA,
    ci_mode: CIMode = CIMode.DELTA,
    dominance_factor: float = 5.0,
) -> SubcriticalEstimate:
    """(ε, 𝒱, 𝒳) → (μ̂, Λ̂, p̂) with the interval I_{N,K,t,α}."""
    ci_mode = CIMode(ci_mode)
    _check_window(log, k_obs, t)
    delta = delta_rule(t, q)

    eps = epsilon_stat(log, k_obs, t)
    v = v_stat(log, k_obs, t)
    z1 = z_delta_stat(log, k_obs, t, delta)
    z2 = z_delta_stat(log, k_obs, t, 2 * delta)
    w = 2.0 * z2 - z1
    x = w - (log.n - k_obs) / k_obs * eps

    p_hat = psi3(eps, v, x)
    mu_hat = psi1(eps, v, x)
    lam_hat = psi2(eps, v, x)

    terms = rate_terms(log.n, k_obs, t, delta)
    regime, dominance = classify_terms(terms, dominance_factor)
    gamma = k_obs / log.n
    other = CIMode.LITERAL if ci_mode is CIMode.DELTA else CIMode.DELTA
    ci = ci_halfwidth(ci_mode, p_hat, mu_hat, lam_hat, terms, gamma, alpha)
    ci_alt = ci_halfwidth(other, p_hat, mu_hat, lam_hat, terms, gamma, alpha)
    if not ci.defined:
        logger.warning("Confidence interval undefined: %s", ci.reason)

    return SubcriticalEstimate(
        epsilon=eps,
        v_stat=v,
        z_delta=z1,
        z_2delta=z2,
        w_stat=w,
        x_stat=x,
        delta=delta,
        p_hat=p_hat,
        mu_hat=mu_hat,
        lambda_hat=lam_hat,
        ci=ci,
        ci_alternate=ci_alt,
        terms=terms,
        regime=regime,
        dominance=dominance,
        n=log.n,
        k=k_obs,
        t=t,
        q=q,
        alpha=alpha,
    )
