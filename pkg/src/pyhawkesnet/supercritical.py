import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import AssumptionViolation, DomainError, HorizonTooShortError
from .simulator import EventLog

logger = logging.getLogger("pyhawkesnet.supercritical")

GROWTH_GRID = 64


def _check_window(log: EventLog, k_obs: int, t: float) -> None:
    if not t > 0:
        raise DomainError(f"t must be > 0, got {t}.")
    if log.horizon < t:
        raise HorizonTooShortError(f"Need horizon >= {t}, log has {log.horizon}.")
    if not 1 <= k_obs <= log.n:
        raise DomainError(f"K must satisfy 1 <= K <= {log.n}, got {k_obs}.")


def u_stat(log: EventLog, k_obs: int, t: float) -> float:
    """𝒰_t = [(N/K) Σ_{i≤K} ((Z^i_t - Z̄_t)/Z̄_t)² - N/Z̄_t] 1{Z̄_t > 0}."""
    _check_window(log, k_obs, t)
    counts = log.counts_at(t, k_obs).astype(np.float64)
    z_bar = float(counts.mean())
    if z_bar <= 0:
        return 0.0
    rel = (counts - z_bar) / z_bar
    return float(log.n / k_obs * np.dot(rel, rel) - log.n / z_bar)


def p_stat(u: float) -> float:
    """𝒫_t = 1/(𝒰_t + 1) when 𝒰_t >= 0, else 0."""
    if not u >= 0:
        return 0.0
    return 1.0 / (u + 1.0)


def asymptotic_variance_super(mu: float, p: float, b: float) -> float:
    """2 α₀⁴ p² / μ² with α₀ = p - b."""
    if not p > b:
        raise AssumptionViolation(f"Supercritical regime needs p > b, got p={p}, b={b}.")
    if not mu > 0:
        raise AssumptionViolation(f"mu must be > 0, got {mu}.")
    alpha0 = p - b
    return 2 * alpha0**4 * p**2 / mu**2


def fit_growth_rate(log: EventLog, k_obs: int, t: float) -> Optional[float]:
    """Least-squares slope of log Z̄_s over s in [3t/4, t].

    Auxiliary, used only when α₀ cannot be taken from known (p, b).
    None when Z̄ vanishes on the fitting window.
    """
    _check_window(log, k_obs, t)
    grid = np.linspace(0.75 * t, t, GROWTH_GRID)
    z_bar = log.counts_on_grid(grid, k_obs).mean(axis=0)
    keep = z_bar > 0
    if keep.sum() < 2:
        return None
    slope, _ = np.polyfit(grid[keep], np.log(z_bar[keep]), 1)
    return float(slope)


@dataclass(slots=True, frozen=True)
class SupercriticalEstimate:
    z_bar: float
    u_stat: float
    p_stat: float
    n: int
    k: int
    t: float
    alpha0_used: Optional[float] = None
    alpha0_source: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "kind": "supercritical",
            "inputs": {"n": self.n, "k": self.k, "t": self.t},
            "z_bar": self.z_bar,
            "u": self.u_stat,
            "p": self.p_stat,
            "alpha0_used": self.alpha0_used,
            "alpha0_source": self.alpha0_source,
            "clt_scale": self.clt_scale,
        }

    @property
    def clt_scale(self) -> Optional[float]:
        """e^{α₀t}√K/N, the CLT normalization of (𝒫_t - p)."""
        if self.alpha0_used is None:
            return None
        return math.exp(self.alpha0_used * self.t) * math.sqrt(self.k) / self.n


def estimate_super(
    log: EventLog,
    k_obs: int,
    t: float,
    p: Optional[float] = None,
    b: Optional[float] = None,
) -> SupercriticalEstimate:
    """𝒰_t and 𝒫_t, with α₀ = p - b when both are known, fitted otherwise."""
    u = u_stat(log, k_obs, t)
    if p is not None and b is not None:
        if not p > b:
            raise AssumptionViolation(f"Supercritical regime needs p > b, got p={p}, b={b}.")
        alpha0, source = p - b, "true"
    else:
        alpha0, source = fit_growth_rate(log, k_obs, t), "fitted"
        logger.debug("Fitted growth rate alpha0=%s", alpha0)
    return SupercriticalEstimate(
        z_bar=log.mean_count(t, k_obs),
        u_stat=u,
        p_stat=p_stat(u),
        n=log.n,
        k=k_obs,
        t=t,
        alpha0_used=alpha0,
        alpha0_source=source if alpha0 is not None else None,
    )
