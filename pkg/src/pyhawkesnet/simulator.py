"""Exact simulation of the interacting Hawkes system and its mean path.

The exponential kernel is sampled from the superposed intensity of the whole
population, one accepted event per step. The uniform kernel is thinned per
individual. Either way a run is a pure function of
(graph, kernel, μ, T, seed).
"""

import bisect
import logging
import math
from array import array
from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .errors import DomainError, EventBudgetExceeded, LogRangeError
from .graph import InteractionGraph, check_subcritical
from .kernel import KernelSpec, tail_mass, weighted_conv_integral
from .utils import spawn_generators

logger = logging.getLogger("pyhawkesnet.simulator")

DEFAULT_EVENT_BUDGET = 10_000_000
TICKS_PER_UNIT = 1_000_000_000
SERIES_TOL = 1e-8
SERIES_MAX_DEPTH = 100_000


def quantize_times(times: np.ndarray, horizon: float) -> np.ndarray:
    """Round to the CSV resolution, keeping times strictly increasing and in (0, horizon]."""
    times = np.asarray(times, dtype=np.float64)
    if times.size == 0:
        return times.copy()
    ticks = np.rint(times * TICKS_PER_UNIT).astype(np.int64)
    ticks = np.clip(ticks, 1, max(1, math.floor(horizon * TICKS_PER_UNIT)))
    steps = np.arange(ticks.size, dtype=np.int64)
    ticks = np.maximum.accumulate(ticks - steps) + steps
    return ticks / TICKS_PER_UNIT


@dataclass(slots=True, frozen=True, eq=False)
class EventLog:
    """Jump times of N individuals over (0, horizon]."""

    n: int
    horizon: float
    events: tuple
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n < 1:
            raise DomainError(f"EventLog needs n >= 1, got {self.n}.")
        if not self.horizon > 0:
            raise DomainError(f"Horizon must be > 0, got {self.horizon}.")
        if len(self.events) != self.n:
            raise DomainError(f"Expected {self.n} event arrays, got {len(self.events)}.")
        frozen = []
        for i, times in enumerate(self.events):
            arr = np.array(times, dtype=np.float64, copy=True).reshape(-1)
            if arr.size:
                if arr[0] <= 0 or arr[-1] > self.horizon:
                    raise DomainError(f"Individual {i} has times outside (0, {self.horizon}].")
                if np.any(np.diff(arr) <= 0):
                    raise DomainError(f"Individual {i} has non-increasing times.")
            arr.setflags(write=False)
            frozen.append(arr)
        object.__setattr__(self, "events", tuple(frozen))

    @classmethod
    def empty(cls, n: int, horizon: float, meta: Optional[dict] = None) -> "EventLog":
        return cls(n, horizon, tuple(np.empty(0) for _ in range(n)), dict(meta or {}))

    def __repr__(self):
        return f"EventLog(n={self.n}, horizon={self.horizon}, events={self.total_events})"

    @property
    def total_events(self) -> int:
        return sum(arr.size for arr in self.events)

    def identical(self, other: "EventLog") -> bool:
        """Bit-identical times, size and horizon (meta is ignored)."""
        return (
            self.n == other.n
            and self.horizon == other.horizon
            and all(
                a.shape == b.shape and a.tobytes() == b.tobytes()
                for a, b in zip(self.events, other.events)
            )
        )

    def _check_k(self, k: Optional[int]) -> int:
        k = self.n if k is None else k
        if not 1 <= k <= self.n:
            raise LogRangeError(f"K must satisfy 1 <= K <= {self.n}, got {k}.")
        return k

    def _check_time(self, t: float) -> None:
        if not 0.0 <= t <= self.horizon:
            raise LogRangeError(f"Time {t} outside [0, {self.horizon}].")

    def count_at(self, i: int, t: float) -> int:
        """Z^i(t), right-continuous: a jump at t is counted."""
        if not 0 <= i < self.n:
            raise LogRangeError(f"Individual {i} outside [0, {self.n}).")
        self._check_time(t)
        return int(np.searchsorted(self.events[i], t, side="right"))

    def counts_at(self, t: float, k: Optional[int] = None) -> np.ndarray:
        k = self._check_k(k)
        self._check_time(t)
        return np.array(
            [np.searchsorted(self.events[i], t, side="right") for i in range(k)],
            dtype=np.int64,
        )

    def counts_on_grid(self, times: Sequence[float], k: Optional[int] = None) -> np.ndarray:
        """K x len(times) matrix of Z^i at each grid time."""
        k = self._check_k(k)
        times = np.asarray(times, dtype=np.float64)
        if times.size and (times.min() < 0 or times.max() > self.horizon):
            raise LogRangeError(f"Grid leaves [0, {self.horizon}].")
        out = np.empty((k, times.size), dtype=np.int64)
        for i in range(k):
            out[i] = np.searchsorted(self.events[i], times, side="right")
        return out

    def mean_count(self, t: float, k: Optional[int] = None) -> float:
        """Z̄^{N,K}_t."""
        return float(self.counts_at(t, k).mean())


# ------------------ simulation ------------------


class _Stream:
    """Buffered draws from one PCG64 generator."""

    BLOCK = 128

    def __init__(self, gen: np.random.Generator):
        self._gen = gen
        self._exp: list[float] = []
        self._unif: list[float] = []

    def exponential(self) -> float:
        if not self._exp:
            self._exp = self._gen.standard_exponential(self.BLOCK).tolist()[::-1]
        return self._exp.pop()

    def uniform(self) -> float:
        if not self._unif:
            self._unif = self._gen.random(self.BLOCK).tolist()[::-1]
        return self._unif.pop()

    def index(self, size: int) -> int:
        """Uniform integer in [0, size)."""
        return min(int(self.uniform() * size), size - 1)


class _ParentTable:
    """Past jumps j weighted by |targets(j)| e^{b(τ_j - ref)}.

    Σ_i g_i(s) is ``mass(s) / N``. The individual fired by the excitation
    part is a uniform target of a parent drawn in proportion to its weight.
    """

    REBASE = 200.0

    def __init__(self, b: float):
        self.b = b
        self.ref = 0.0
        self.parents = array("q")
        self.cumulative = array("d")

    @property
    def total(self) -> float:
        return self.cumulative[-1] if self.cumulative else 0.0

    def mass(self, s: float) -> float:
        return self.total * math.exp(-self.b * (s - self.ref))

    def add(self, j: int, degree: int, s: float) -> None:
        if self.b * (s - self.ref) > self.REBASE:
            self._rebase(s)
        self.cumulative.append(self.total + degree * math.exp(self.b * (s - self.ref)))
        self.parents.append(j)

    def _rebase(self, s: float) -> None:
        scale = math.exp(-self.b * (s - self.ref))
        cumulative = array("d", (c * scale for c in self.cumulative))
        # weights that underflowed can never be drawn again
        start = bisect.bisect_right(cumulative, 0.0)
        self.cumulative = cumulative[start:]
        self.parents = self.parents[start:]
        self.ref = s

    def draw(self, u: float) -> int:
        idx = bisect.bisect_right(self.cumulative, u * self.total)
        return self.parents[min(idx, len(self.parents) - 1)]


class _WindowExcitation:
    """Uniform kernel: neighbours' jumps in [t-a, t), kept in a deque."""

    def __init__(self, n: int, a: float, influenced: list[np.ndarray]):
        self.a = a
        self.n = n
        self.influenced = influenced
        self.hits = np.zeros(n, dtype=np.int64)
        self.window: deque = deque()

    def _expire(self, s: float) -> None:
        cutoff = s - self.a
        window = self.window
        while window and window[0][0] < cutoff:
            _, j = window.popleft()
            self.hits[self.influenced[j]] -= 1

    def value(self, i: int, s: float) -> float:
        self._expire(s)
        return self.hits[i] / self.n

    def jump(self, j: int, s: float, targets: np.ndarray) -> None:
        self.window.append((s, j))
        self.hits[targets] += 1


def _build_log(n: int, horizon: float, times: list, meta: dict) -> EventLog:
    return EventLog(n, horizon, tuple(quantize_times(np.array(t), horizon) for t in times), meta)


def _budget_exceeded(n: int, s: float, times: list, meta: dict, max_events: int) -> EventBudgetExceeded:
    meta["truncated_at"] = s
    partial = _build_log(n, s, times, meta)
    return EventBudgetExceeded(f"Event budget of {max_events} exceeded at t={s:.6g}.", partial)


def _simulate_by_composition(
    g: InteractionGraph, b: float, mu: float, horizon: float, seed: int,
    max_events: int, times: list, meta: dict,
) -> tuple[int, int]:
    """Exact composition sampler for φ(s) = e^{-bs}.

    The next event is the earlier of an immigrant (rate Nμ) and a descendant
    of the excitation G = Σ_i g_i. G decays at the common rate b between
    jumps, so the descendant wait solves (G/b)(1 - e^{-bw}) = E in closed
    form. Nothing is rejected.
    """
    n = g.n
    influenced = g.influenced_by()
    degree = [targets.size for targets in influenced]
    stream = _Stream(spawn_generators(seed, 1)[0])
    table = _ParentTable(b)
    base = n * mu
    s = 0.0
    accepted = 0

    while True:
        wait_imm = stream.exponential() / base
        reach = table.mass(s) / (n * b)
        e = stream.exponential()
        wait_desc = -math.log1p(-e / reach) / b if e < reach else math.inf

        s += min(wait_imm, wait_desc)
        if s > horizon:
            break
        if wait_desc < wait_imm:
            targets = influenced[table.draw(stream.uniform())]
            i = int(targets[stream.index(targets.size)])
        else:
            i = stream.index(n)

        times[i].append(s)
        accepted += 1
        if accepted > max_events:
            raise _budget_exceeded(n, s, times, meta, max_events)
        if degree[i]:
            table.add(i, degree[i], s)

    return accepted, accepted


def _simulate_by_thinning(
    g: InteractionGraph, a: float, mu: float, horizon: float, seed: int,
    max_events: int, times: list, meta: dict,
) -> tuple[int, int]:
    """Per-individual thinning for φ = 1_{[0,a]}.

    Each individual i is thinned against its own dominating rate M_i >= λ^i_t
    and draws from its own PCG64 stream. M_i is reset to the current
    intensity at every candidate of i and raised by θ_ij/N when j jumps. A
    raise rescales the residual of i's exponential clock instead of
    redrawing it.
    """
    n = g.n
    inc = 1.0 / n
    influenced = g.influenced_by()
    excitation = _WindowExcitation(n, a, influenced)
    streams = [_Stream(gen) for gen in spawn_generators(seed, n)]
    bound = np.full(n, float(mu))
    clock = np.array([streams[i].exponential() / mu for i in range(n)])
    accepted = 0
    candidates = 0

    while True:
        i = int(clock.argmin())
        s = float(clock[i])
        if s > horizon:
            break
        candidates += 1

        stream = streams[i]
        intensity = mu + excitation.value(i, s)
        hit = stream.uniform() * bound[i] <= intensity
        bound[i] = intensity
        clock[i] = s + stream.exponential() / intensity

        if not hit:
            continue

        times[i].append(s)
        accepted += 1
        if accepted > max_events:
            raise _budget_exceeded(n, s, times, meta, max_events)

        targets = influenced[i]
        if targets.size:
            residual = (clock[targets] - s) * bound[targets]
            bound[targets] += inc
            clock[targets] = s + residual / bound[targets]
            excitation.jump(i, s, targets)

    return accepted, candidates


def simulate(
    g: InteractionGraph,
    k: KernelSpec,
    mu: float,
    horizon: float,
    seed: int,
    max_events: int = DEFAULT_EVENT_BUDGET,
) -> EventLog:
    """Sample path of λ^i_t = μ + N^{-1} Σ_j θ_ij ∫_0^{t-} φ(t-s) dZ^j_s on (0, horizon]."""
    if not horizon > 0:
        raise DomainError(f"Horizon must be > 0, got {horizon}.")
    if not mu > 0:
        raise DomainError(f"Baseline rate mu must be > 0, got {mu}.")
    if not k.is_exponential:
        check_subcritical(g, k.lam)

    meta = {
        "n": g.n,
        "horizon": horizon,
        "mu": mu,
        "kernel": str(k),
        "p": g.p,
        "graph_seed": g.seed,
        "sim_seed": seed,
    }
    times: list[list[float]] = [[] for _ in range(g.n)]
    if k.is_exponential:
        run = _simulate_by_composition
    else:
        run = _simulate_by_thinning
    accepted, candidates = run(g, k.param, mu, horizon, seed, max_events, times, meta)

    logger.debug(
        "simulate: n=%d horizon=%g seed=%s events=%d candidates=%d",
        g.n, horizon, seed, accepted, candidates,
    )
    meta["events"] = accepted
    return _build_log(g.n, horizon, times, meta)


# ------------------ expected trajectory ------------------


def _check_k_obs(g: InteractionGraph, k_obs: int) -> None:
    if not 1 <= k_obs <= g.n:
        raise DomainError(f"K must satisfy 1 <= K <= {g.n}, got {k_obs}.")


def _series_remainder(n: int, mu: float, t: float, lam: float, a_norm: float) -> float:
    """Bound on Σ_{m>n} μ c_m(t) ‖A_N‖^m_∞ with c_m(t) = ∫₀ᵗ (t-s) φ^{*m}(s) ds."""
    if a_norm == 0.0 or t == 0.0:
        return 0.0
    bounds = []
    r = lam * a_norm
    if r < 1.0:
        bounds.append(mu * t * r ** (n + 1) / (1.0 - r))
    x = a_norm * t
    if x < n + 2:
        log_first = math.log(mu * t) + (n + 1) * math.log(x) - math.lgamma(n + 2)
        bounds.append(math.exp(log_first) / (1.0 - x / (n + 2)))
    return min(bounds) if bounds else math.inf


def expected_counts_series(
    g: InteractionGraph, k: KernelSpec, mu: float, t: float, k_obs: int, tol: float = SERIES_TOL
) -> np.ndarray:
    """E_θ[Z^{N,K}_t] = μ Σ_n [∫₀ᵗ s φ^{*n}(t-s) ds] I_K A_N^n 1_N, truncated."""
    _check_k_obs(g, k_obs)
    if not t >= 0:
        raise DomainError(f"t must be >= 0, got {t}.")
    if not k.is_exponential:
        check_subcritical(g, k.lam)

    a = g.a_matrix
    a_norm = g.a_norm_inf
    power = np.ones(g.n)
    result = mu * t * power[:k_obs]
    target = tol * (1.0 + mu * t)

    for depth in range(1, SERIES_MAX_DEPTH + 1):
        power = a @ power
        result = result + mu * weighted_conv_integral(k, depth, t) * power[:k_obs]
        if _series_remainder(depth, mu, t, k.lam, a_norm) < target:
            break
    else:
        raise DomainError(f"Series did not reach tolerance within {SERIES_MAX_DEPTH} terms.")

    logger.debug(
        "expected_counts_series: depth=%d tail_mass=%.3g", depth, tail_mass(k, depth, t)
    )
    return result


def expected_counts_ode(
    g: InteractionGraph, k: KernelSpec, mu: float, t: float, k_obs: int, atol: float = 1e-8
) -> np.ndarray:
    """Mean path for φ(s) = e^{-bs}: g' = -b g + A_N(μ1 + g), E[Z]' = μ1 + g."""
    _check_k_obs(g, k_obs)
    if not k.is_exponential:
        raise DomainError("The ODE evaluator needs the exponential kernel.")
    if not t >= 0:
        raise DomainError(f"t must be >= 0, got {t}.")
    n = g.n
    if t == 0:
        return np.zeros(k_obs)

    b = k.rate
    a = g.a_matrix

    def rhs(_, y):
        excitation = y[:n]
        intensity = mu + excitation
        return np.concatenate([-b * excitation + a @ intensity, intensity])

    sol = solve_ivp(rhs, (0.0, t), np.zeros(2 * n), method="DOP853", rtol=1e-10, atol=atol)
    if not sol.success:
        raise DomainError(f"Mean-path ODE failed: {sol.message}")
    return sol.y[n : n + k_obs, -1].copy()


def expected_counts(
    g: InteractionGraph, k: KernelSpec, mu: float, t: float, k_obs: int, method: str = "auto"
) -> np.ndarray:
    """Mean counts of the first K individuals at time t.

    ``method`` is "series", "ode" or "auto" (series when the subcritical
    gate holds, ODE otherwise).
    """
    if method == "series":
        return expected_counts_series(g, k, mu, t, k_obs)
    if method == "ode":
        return expected_counts_ode(g, k, mu, t, k_obs)
    if method != "auto":
        raise DomainError(f"Unknown evaluator {method!r}.")
    if k.lam * g.a_norm_inf < 1.0:
        return expected_counts_series(g, k, mu, t, k_obs)
    if k.is_exponential:
        return expected_counts_ode(g, k, mu, t, k_obs)
    check_subcritical(g, k.lam)
    return expected_counts_series(g, k, mu, t, k_obs)
