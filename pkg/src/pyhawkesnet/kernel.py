"""Decay kernels φ, their convolution powers and the model assumptions.

Two families are built in: ``exp:<b>`` with φ(s) = e^{-bs} and ``unif:<a>``
with φ(s) = 1_{[0,a]}(s). Every quantity is evaluated in closed form; the
uniform family goes through exact rational Irwin–Hall sums.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Optional

from scipy.special import gammainc

from .errors import (
    AssumptionViolation,
    ConfigError,
    KernelDomainError,
    UnsupportedPointwiseError,
)

logger = logging.getLogger("pyhawkesnet.kernel")


class KernelFamily(Enum):
    EXPONENTIAL = "exp"
    UNIFORM = "unif"


class Criticality(Enum):
    SUBCRITICAL = "subcritical"
    SUPERCRITICAL = "supercritical"


@dataclass(slots=True, frozen=True)
class KernelSpec:
    """φ together with its parameter (rate b or cutoff a)."""

    family: KernelFamily
    param: float

    def __post_init__(self):
        if not (math.isfinite(self.param) and self.param > 0):
            raise KernelDomainError(
                f"Kernel parameter must be finite and > 0, got {self.param!r}."
            )

    @classmethod
    def exponential(cls, b: float) -> "KernelSpec":
        return cls(KernelFamily.EXPONENTIAL, float(b))

    @classmethod
    def uniform(cls, a: float) -> "KernelSpec":
        return cls(KernelFamily.UNIFORM, float(a))

    @classmethod
    def parse(cls, text: str) -> "KernelSpec":
        """Parse ``"exp:<b>"`` or ``"unif:<a>"``."""
        name, sep, value = text.strip().partition(":")
        if not sep:
            raise ConfigError(f"Kernel must look like 'exp:<b>' or 'unif:<a>', got {text!r}.")
        try:
            family = KernelFamily(name.lower())
        except ValueError:
            raise ConfigError(f"Unknown kernel family {name!r}.") from None
        try:
            param = float(value)
        except ValueError:
            raise ConfigError(f"Invalid kernel parameter {value!r}.") from None
        return cls(family, param)

    def __str__(self) -> str:
        return f"{self.family.value}:{self.param!r}"

    @property
    def is_exponential(self) -> bool:
        return self.family is KernelFamily.EXPONENTIAL

    @property
    def rate(self) -> float:
        """b of the exponential family."""
        if not self.is_exponential:
            raise KernelDomainError("Only the exponential kernel has a decay rate.")
        return self.param

    @property
    def cutoff(self) -> float:
        """a of the uniform family."""
        if self.is_exponential:
            raise KernelDomainError("Only the uniform kernel has a cutoff.")
        return self.param

    @property
    def lam(self) -> float:
        """Λ = ∫₀^∞ φ(s) ds."""
        if self.is_exponential:
            return 1.0 / self.param
        return self.param

    @property
    def q_max(self) -> float:
        return math.inf

    @property
    def mean_delay(self) -> float:
        """∫ s φ(s) ds / Λ."""
        return moment(self, 1.0) / self.lam


@dataclass(slots=True, frozen=True)
class RegimeParams:
    mu: float
    p: float
    criticality: Criticality
    alpha0: Optional[float] = None
    gamma: Optional[float] = None

    def __post_init__(self):
        if not self.mu > 0:
            raise AssumptionViolation(f"Baseline rate mu must be > 0, got {self.mu}.")
        if not 0.0 <= self.p <= 1.0:
            raise AssumptionViolation(f"Edge probability p must lie in [0,1], got {self.p}.")
        if self.gamma is not None and not 0.0 <= self.gamma <= 1.0:
            raise AssumptionViolation(f"gamma must lie in [0,1], got {self.gamma}.")
        if self.criticality is Criticality.SUPERCRITICAL and self.alpha0 is None:
            raise AssumptionViolation("Supercritical parameters need alpha0 = p - b.")

    @classmethod
    def build(
        cls, kernel: KernelSpec, mu: float, p: float, gamma: Optional[float] = None
    ) -> "RegimeParams":
        """Classify (kernel, p) as sub- or supercritical, rejecting Λp = 1."""
        load = kernel.lam * p
        if load < 1.0:
            return cls(mu, p, Criticality.SUBCRITICAL, None, gamma)
        if load == 1.0:
            raise AssumptionViolation("Critical case Λp = 1 is not covered.")
        if not satisfies_a(kernel):
            raise AssumptionViolation(
                f"Supercritical regime (Λp = {load:g}) requires the exponential kernel."
            )
        b = kernel.rate
        if not p > b:
            raise AssumptionViolation(f"Supercritical regime requires p > b ({p} <= {b}).")
        return cls(mu, p, Criticality.SUPERCRITICAL, p - b, gamma)


# ------------------ Irwin–Hall sums (exact) ------------------


def _irwin_hall_sum(n: int, x: Fraction, power: int) -> Fraction:
    total = Fraction(0)
    for k in range(0, min(n, math.floor(x)) + 1):
        term = math.comb(n, k) * (x - k) ** power
        total += -term if k % 2 else term
    return total


def _irwin_hall_density(n: int, x: Fraction) -> Fraction:
    if x <= 0 or x >= n:
        return Fraction(0)
    return _irwin_hall_sum(n, x, n - 1) / math.factorial(n - 1)


def _irwin_hall_cdf(n: int, x: Fraction) -> Fraction:
    if x <= 0:
        return Fraction(0)
    if x >= n:
        return Fraction(1)
    return _irwin_hall_sum(n, x, n) / math.factorial(n)


def _irwin_hall_cdf_integral(n: int, x: Fraction) -> Fraction:
    """∫₀ˣ F_n(y) dy."""
    if x <= 0:
        return Fraction(0)
    if x >= n:
        return x - Fraction(n, 2)
    return _irwin_hall_sum(n, x, n + 1) / math.factorial(n + 1)


# ------------------ operations ------------------


def _check_time(s: float, name: str = "s") -> None:
    if not s >= 0:
        raise KernelDomainError(f"{name} must be >= 0, got {s}.")


def kernel_value(k: KernelSpec, s: float) -> float:
    """φ(s)."""
    _check_time(s)
    if k.is_exponential:
        return math.exp(-k.param * s)
    return 1.0 if s <= k.param else 0.0


def convolution_power(k: KernelSpec, n: int, s: float) -> float:
    """φ^{*n}(s) for n >= 1."""
    if n == 0:
        raise UnsupportedPointwiseError(
            "φ^{*0} is the Dirac mass at 0; it has no pointwise value."
        )
    if n < 0:
        raise KernelDomainError(f"Convolution order must be >= 0, got {n}.")
    _check_time(s)
    if n == 1:
        return kernel_value(k, s)

    if k.is_exponential:
        if s == 0:
            return 0.0
        b = k.param
        return math.exp((n - 1) * math.log(s) - b * s - math.lgamma(n))

    a = Fraction(k.param)
    x = Fraction(s) / a
    return float(a ** (n - 1) * _irwin_hall_density(n, x))


def conv_integral(k: KernelSpec, n: int, t: float) -> float:
    """∫₀ᵗ φ^{*n}(s) ds (n = 0 counts the Dirac mass)."""
    _check_time(t, "t")
    if n == 0:
        return 1.0
    if k.is_exponential:
        b = k.param
        return float(gammainc(n, b * t)) / b**n
    a = Fraction(k.param)
    return float(a**n * _irwin_hall_cdf(n, Fraction(t) / a))


def weighted_conv_integral(k: KernelSpec, n: int, t: float) -> float:
    """∫₀ᵗ (t - s) φ^{*n}(s) ds; equals t for n = 0."""
    _check_time(t, "t")
    if n == 0:
        return float(t)
    if k.is_exponential:
        b = k.param
        x = b * t
        return (t * float(gammainc(n, x)) - n / b * float(gammainc(n + 1, x))) / b**n
    a = Fraction(k.param)
    return float(a ** (n + 1) * _irwin_hall_cdf_integral(n, Fraction(t) / a))


def integral(k: KernelSpec, t: float) -> float:
    """∫₀ᵗ φ(s) ds."""
    _check_time(t, "t")
    if k.is_exponential:
        b = k.param
        return -math.expm1(-b * t) / b
    return min(t, k.param)


def tail_mass(k: KernelSpec, n: int, t: float) -> float:
    """Upper bound n Λ^{n-1} ∫_{t/n}^∞ φ on |∫₀ᵗ φ^{*n} - Λⁿ|."""
    if n < 1:
        raise KernelDomainError(f"tail_mass needs n >= 1, got {n}.")
    _check_time(t, "t")
    cut = t / n
    if k.is_exponential:
        b = k.param
        tail = math.exp(-b * cut) / b
    else:
        tail = max(k.param - cut, 0.0)
    return n * k.lam ** (n - 1) * tail


def moment(k: KernelSpec, q: float) -> float:
    """∫₀^∞ s^q φ(s) ds for q > -1."""
    if not q > -1:
        raise KernelDomainError(f"Moment order must be > -1, got {q}.")
    if k.is_exponential:
        b = k.param
        return math.gamma(q + 1) / b ** (q + 1)
    a = k.param
    return a ** (q + 1) / (q + 1)


def square_integral(k: KernelSpec) -> float:
    """∫₀^∞ φ(s)² ds."""
    if k.is_exponential:
        return 1.0 / (2.0 * k.param)
    return k.param


def satisfies_h(k: KernelSpec, q: float) -> bool:
    """Assumption H(q): finite q-moment and square-integrable φ."""
    return q < k.q_max and math.isfinite(moment(k, q)) and math.isfinite(square_integral(k))


def satisfies_a(k: KernelSpec) -> bool:
    """Assumption (A): φ(s) = e^{-bs}."""
    return k.is_exponential
