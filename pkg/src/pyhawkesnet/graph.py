import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
import scipy.linalg

from .errors import DegenerateGraphError, DomainError, SubcriticalityError

logger = logging.getLogger("pyhawkesnet.graph")

# Dense LU up to this size, Neumann iteration above.
DENSE_LIMIT = 4000
RESIDUAL_TOL = 1e-10
NEUMANN_MAX_ITER = 100_000
POWER_MAX_ITER = 10_000


@dataclass(slots=True, frozen=True, eq=False)
class InteractionGraph:
    """θ_ij = 1 means individual j influences individual i."""

    n: int
    p: float
    theta: np.ndarray
    seed: Optional[int] = None

    def __post_init__(self):
        theta = np.array(self.theta, dtype=bool, copy=True)
        if theta.shape != (self.n, self.n):
            raise DomainError(
                f"theta must be {self.n}x{self.n}, got shape {theta.shape}."
            )
        if self.n < 1:
            raise DomainError(f"Graph size must be >= 1, got {self.n}.")
        if not 0.0 <= self.p <= 1.0:
            raise DomainError(f"Edge probability must lie in [0,1], got {self.p}.")
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)

    def __repr__(self):
        return f"InteractionGraph(n={self.n}, p={self.p}, seed={self.seed}, edges={self.edge_count})"

    @property
    def edge_count(self) -> int:
        return int(self.theta.sum())

    @property
    def a_matrix(self) -> np.ndarray:
        """A_N = θ / N."""
        return self.theta.astype(np.float64) / self.n

    @property
    def max_row_sum(self) -> int:
        return int(self.theta.sum(axis=1).max())

    @property
    def a_norm_inf(self) -> float:
        """‖A_N‖_∞ = max row sum / N."""
        return self.max_row_sum / self.n

    def influenced_by(self) -> list[np.ndarray]:
        """For each j, the indices i with θ_ij = 1."""
        return [np.flatnonzero(self.theta[:, j]) for j in range(self.n)]

    def permuted(self, order: np.ndarray) -> "InteractionGraph":
        """Relabel individuals: new individual i is old individual order[i]."""
        order = np.asarray(order)
        return InteractionGraph(self.n, self.p, self.theta[np.ix_(order, order)], self.seed)


def sample_graph(n: int, p: float, seed: int) -> InteractionGraph:
    """i.i.d. Bernoulli(p) entries, not symmetrized."""
    if n < 1:
        raise DomainError(f"Graph size must be >= 1, got {n}.")
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"Edge probability must lie in [0,1], got {p}.")
    rng = np.random.Generator(np.random.PCG64(seed))
    theta = rng.random((n, n)) < p
    return InteractionGraph(n, float(p), theta, seed)


def _check_k(g: InteractionGraph, k: int) -> None:
    if not 1 <= k <= g.n:
        raise DomainError(f"Observed block size K must satisfy 1 <= K <= {g.n}, got {k}.")


def check_subcritical(g: InteractionGraph, lam: float) -> None:
    load = lam * g.a_norm_inf
    if not load < 1.0:
        raise SubcriticalityError(
            f"Λ‖A_N‖_∞ = {load:.6g} >= 1; the resolvent (I - ΛA_N)^-1 is not guaranteed."
        )


class Resolvent:
    """Solves (I - ΛA_N) x = r and its transpose for one graph."""

    def __init__(self, g: InteractionGraph, lam: float):
        check_subcritical(g, lam)
        self.graph = g
        self.lam = lam
        self._a = g.a_matrix
        self._lu = None
        if g.n <= DENSE_LIMIT:
            self._lu = scipy.linalg.lu_factor(np.eye(g.n) - lam * self._a)
            logger.debug("Resolvent: dense LU for N=%d", g.n)
        else:
            logger.debug("Resolvent: Neumann iteration for N=%d", g.n)

    def _apply(self, x: np.ndarray, transpose: bool) -> np.ndarray:
        a = self._a.T if transpose else self._a
        return x - self.lam * (a @ x)

    def solve(self, rhs: np.ndarray, transpose: bool = False) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=np.float64)
        if self._lu is not None:
            x = scipy.linalg.lu_solve(self._lu, rhs, trans=1 if transpose else 0)
            # one step of iterative refinement
            r = rhs - self._apply(x, transpose)
            if np.max(np.abs(r)) > RESIDUAL_TOL:
                x = x + scipy.linalg.lu_solve(self._lu, r, trans=1 if transpose else 0)
        else:
            x = self._neumann(rhs, transpose)

        residual = float(np.max(np.abs(self._apply(x, transpose) - rhs)))
        if residual > RESIDUAL_TOL * max(1.0, float(np.max(np.abs(rhs)))):
            raise SubcriticalityError(f"Resolvent residual {residual:.3g} exceeds tolerance.")
        return x

    def _neumann(self, rhs: np.ndarray, transpose: bool) -> np.ndarray:
        a = self._a.T if transpose else self._a
        x = rhs.copy()
        for it in range(NEUMANN_MAX_ITER):
            x_next = rhs + self.lam * (a @ x)
            if np.max(np.abs(x_next - x)) <= RESIDUAL_TOL * 1e-2:
                logger.debug("Neumann series converged after %d iterations", it + 1)
                return x_next
            x = x_next
        raise SubcriticalityError("Neumann series did not converge.")


def compute_ell(g: InteractionGraph, lam: float, solver: Optional[Resolvent] = None) -> np.ndarray:
    """ℓ_N = (I - ΛA_N)^{-1} 1_N."""
    solver = solver or Resolvent(g, lam)
    return solver.solve(np.ones(g.n))


def _v_from_ell(ell: np.ndarray, n: int, k: int) -> float:
    head = ell[:k]
    x = head - head.mean()
    return float(n / k * np.dot(x, x))


def v_infinity(g: InteractionGraph, lam: float, k: int) -> float:
    """𝒱_∞ = (N/K) Σ_{i≤K} (ℓ_N(i) - ℓ̄^K_N)²."""
    _check_k(g, k)
    return _v_from_ell(compute_ell(g, lam), g.n, k)


def column_sums(g: InteractionGraph, lam: float, k: int, solver: Optional[Resolvent] = None) -> np.ndarray:
    """c^K_N(j) = Σ_{i≤K} Q_N(i,j), from (I - ΛA_N)ᵀ c = 1_{i≤K}."""
    _check_k(g, k)
    solver = solver or Resolvent(g, lam)
    indicator = np.zeros(g.n)
    indicator[:k] = 1.0
    return solver.solve(indicator, transpose=True)


class XLimit(NamedTuple):
    x_inf: float
    w_inf: float
    a_inf: float


def _x_parts(g: InteractionGraph, lam: float, mu: float, k: int, solver: Resolvent, ell: np.ndarray) -> XLimit:
    c = column_sums(g, lam, k, solver)
    a_inf = float(np.dot(c * c, ell))
    w_inf = mu * g.n / k**2 * a_inf
    x_inf = w_inf - (g.n - k) * mu / k * float(ell[:k].mean())
    return XLimit(x_inf, w_inf, a_inf)


def x_infinity_parts(g: InteractionGraph, lam: float, mu: float, k: int) -> XLimit:
    _check_k(g, k)
    solver = Resolvent(g, lam)
    return _x_parts(g, lam, mu, k, solver, compute_ell(g, lam, solver))


def x_infinity(g: InteractionGraph, lam: float, mu: float, k: int) -> float:
    """𝒳_∞ = 𝒲_∞ - ((N-K)μ/K) ℓ̄^K_N."""
    return x_infinity_parts(g, lam, mu, k).x_inf


def a_infinity(g: InteractionGraph, lam: float, k: int) -> float:
    """A_∞ = Σ_j c^K_N(j)² ℓ_N(j)."""
    return x_infinity_parts(g, lam, 1.0, k).a_inf


class PerronData(NamedTuple):
    rho: float
    v: np.ndarray
    alpha_n: float


def positivity_gate(g: InteractionGraph) -> bool:
    """A_N² > 0 entrywise."""
    t = g.theta.astype(np.float32)
    return bool(np.all(t @ t > 0))


def perron_data(
    g: InteractionGraph,
    b: float,
    check_positivity: bool = True,
    tol: float = RESIDUAL_TOL,
    max_iter: int = POWER_MAX_ITER,
) -> PerronData:
    """Spectral radius ρ_N, Perron vector V_N (‖V_N‖₂ = √N) and α_N = ρ_N - b."""
    if check_positivity and not positivity_gate(g):
        raise DegenerateGraphError("A_N² has zero entries; the Perron pair is not guaranteed.")

    a = g.a_matrix
    scale = math.sqrt(g.n)
    v = np.ones(g.n)
    w = a @ v
    for it in range(max_iter):
        w_norm = float(np.linalg.norm(w))
        if w_norm == 0.0:
            raise DegenerateGraphError("A_N annihilates the start vector.")
        rho = w_norm / scale
        residual = float(np.linalg.norm(w - rho * v)) / scale
        if residual <= tol:
            break
        v = w * (scale / w_norm)
        w = a @ v
    else:
        raise DegenerateGraphError(
            f"Power iteration did not converge in {max_iter} iterations (residual {residual:.3g})."
        )

    if not np.all(v > 0):
        raise DegenerateGraphError("Perron vector has non-positive entries.")
    logger.debug("Power iteration: rho=%.12g after %d iterations", rho, it + 1)
    v = v.copy()
    v.setflags(write=False)
    return PerronData(rho, v, rho - b)


def _u_from_perron(v: np.ndarray, n: int, k: int) -> float:
    head = v[:k]
    v_bar = float(head.mean())
    dev = head - v_bar
    return float(n / (k * v_bar**2) * np.dot(dev, dev))


def u_infinity(g: InteractionGraph, b: float, k: int, check_positivity: bool = True) -> float:
    """𝒰_∞ = N/(K (V̄^K_N)²) Σ_{i≤K} (V_N(i) - V̄^K_N)²."""
    _check_k(g, k)
    return _u_from_perron(perron_data(g, b, check_positivity).v, g.n, k)


@dataclass(slots=True)
class GraphLimits:
    k: int
    ell: Optional[np.ndarray] = None
    ell_bar: Optional[float] = None
    ell_bar_k: Optional[float] = None
    v_inf: Optional[float] = None
    w_inf: Optional[float] = None
    x_inf: Optional[float] = None
    a_inf: Optional[float] = None
    rho: Optional[float] = None
    perron: Optional[np.ndarray] = None
    alpha_n: Optional[float] = None
    u_inf: Optional[float] = None
    notes: list[str] = field(default_factory=list)

    def to_dict(self, include_vectors: bool = False) -> dict:
        out = {
            "k": self.k,
            "ell_bar": self.ell_bar,
            "ell_bar_k": self.ell_bar_k,
            "v_inf": self.v_inf,
            "w_inf": self.w_inf,
            "x_inf": self.x_inf,
            "a_inf": self.a_inf,
            "rho": self.rho,
            "alpha_n": self.alpha_n,
            "u_inf": self.u_inf,
            "notes": list(self.notes),
        }
        if include_vectors:
            out["ell"] = None if self.ell is None else self.ell.tolist()
            out["perron"] = None if self.perron is None else self.perron.tolist()
        return out


def graph_limits(
    g: InteractionGraph,
    k: int,
    lam: Optional[float] = None,
    mu: float = 1.0,
    b: Optional[float] = None,
    check_positivity: bool = True,
) -> GraphLimits:
    """Every deterministic functional of one graph sample that applies.

    The resolvent part needs ``lam`` and the subcritical gate; the Perron
    part needs ``b``. A part that does not apply is left as None and the
    reason is recorded in ``notes``.
    """
    _check_k(g, k)
    limits = GraphLimits(k=k)

    if lam is not None:
        try:
            solver = Resolvent(g, lam)
        except SubcriticalityError as e:
            limits.notes.append(str(e))
        else:
            ell = compute_ell(g, lam, solver)
            limits.ell = ell
            limits.ell_bar = float(ell.mean())
            limits.ell_bar_k = float(ell[:k].mean())
            limits.v_inf = _v_from_ell(ell, g.n, k)
            limits.x_inf, limits.w_inf, limits.a_inf = _x_parts(g, lam, mu, k, solver, ell)

    if b is not None:
        try:
            perron = perron_data(g, b, check_positivity)
        except DegenerateGraphError as e:
            limits.notes.append(str(e))
        else:
            limits.rho = perron.rho
            limits.perron = perron.v
            limits.alpha_n = perron.alpha_n
            limits.u_inf = _u_from_perron(perron.v, g.n, k)

    return limits
