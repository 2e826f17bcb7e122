"""Replicated Monte Carlo experiments checking the estimators' limit theorems.

Every replica gets its own seed from ``derive_seeds(cfg.seed, R)`` and splits
it into a graph seed and a simulation seed, so a report is a pure function of
the config. Replicas run in-process for ``threads=1`` and on a
``ProcessPoolExecutor`` otherwise; results are reduced in replica order.
"""

import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from enum import Enum
from pathlib import Path
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy.stats import kstest, norm
from tqdm import tqdm

from .errors import ConfigError, FormatError, HawkesNetError, ReplicaQuotaExceeded
from .graph import sample_graph, u_infinity, v_infinity, x_infinity
from .kernel import Criticality, KernelSpec, RegimeParams
from .simulator import DEFAULT_EVENT_BUDGET, simulate
from .subcritical import (
    DEFAULT_ALPHA,
    DEFAULT_Q,
    CIMode,
    Regime,
    RateTerms,
    asymptotic_variance,
    classify_terms,
    component_variance,
    delta_rule,
    estimate,
    rate_terms,
    v_stat,
    x_stat,
)
from .supercritical import asymptotic_variance_super, estimate_super
from .utils import derive_seeds, json_float, jsonable
from .version import SchemaVersion

logger = logging.getLogger("pyhawkesnet.harness")


class Target(Enum):
    GRAPH_V_INF_CLT = "graph_v_inf_clt"
    GRAPH_U_INF = "graph_u_inf"
    SUB_CONSISTENCY = "sub_consistency"
    SUB_CLT_REGIME = "sub_clt_regime"
    SUB_V_CLT = "sub_v_clt"
    SUB_X_CLT = "sub_x_clt"
    SUB_COVERAGE = "sub_coverage"
    SUPER_CONSISTENCY = "super_consistency"
    SUPER_CLT = "super_clt"
    P_ZERO_PROP = "p_zero_prop"

    @property
    def is_matrix_only(self) -> bool:
        return self in (Target.GRAPH_V_INF_CLT, Target.GRAPH_U_INF)

    @property
    def is_supercritical(self) -> bool:
        return self in (Target.SUPER_CONSISTENCY, Target.SUPER_CLT)


class PZeroCase(Enum):
    """Limit of p̂ when p = 0: 0 in case I, Bernoulli(1/2) in case II."""

    I = "i"
    II = "ii"
    MIXED = "mixed"


@dataclass(slots=True, frozen=True)
class Tolerances:
    """Acceptance thresholds; every field can be overridden from the config."""

    variance_band_matrix: float = 0.2
    variance_band_process: float = 0.3
    ks_level: float = 0.01
    mean_sd_factor: float = 4.0
    failure_quota: float = 0.02
    dominance_factor: float = 5.0
    p_tol: float = 0.05
    mu_tol: float = 0.1
    lambda_tol: float = 0.15
    u_tol: float = 0.1
    p_plugin_tol: float = 0.03
    coverage_low: float = 0.82
    coverage_high: float = 0.96
    p_zero_low: float = 0.4
    p_zero_high: float = 0.6
    p_zero_median: float = 0.05

    @classmethod
    def from_dict(cls, data: Optional[dict]) -> "Tolerances":
        data = dict(data or {})
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"Unknown tolerance keys: {sorted(unknown)}.")
        try:
            return cls(**{key: float(value) for key, value in data.items()})
        except (TypeError, ValueError) as e:
            raise ConfigError(f"Invalid tolerance value: {e}") from None


_REQUIRED = ("target", "n", "k", "p", "replicas", "seed")
_OPTIONAL = (
    "t", "q", "mu", "kernel", "gamma", "alpha", "regime",
    "tolerances", "max_events", "ci_mode", "p_zero_case",
)


@dataclass(slots=True, frozen=True)
class ExperimentConfig:
    target: Target
    n: int
    k: int
    p: float
    replicas: int
    seed: int
    t: Optional[float] = None
    q: float = DEFAULT_Q
    mu: float = 1.0
    kernel: KernelSpec = KernelSpec.exponential(1.0)
    gamma: Optional[float] = None
    alpha: float = DEFAULT_ALPHA
    regime: Optional[Regime] = None
    tolerances: Tolerances = field(default_factory=Tolerances)
    max_events: int = DEFAULT_EVENT_BUDGET
    ci_mode: CIMode = CIMode.DELTA
    p_zero_case: Optional[PZeroCase] = None

    def __post_init__(self):
        if self.replicas < 1:
            raise ConfigError(f"replicas must be >= 1, got {self.replicas}.")
        if not 1 <= self.k <= self.n:
            raise ConfigError(f"Need 1 <= k <= n, got k={self.k}, n={self.n}.")
        if not 0.0 <= self.p <= 1.0:
            raise ConfigError(f"p must lie in [0,1], got {self.p}.")
        if not self.mu > 0:
            raise ConfigError(f"mu must be > 0, got {self.mu}.")
        if not self.target.is_matrix_only and (self.t is None or not self.t > 0):
            raise ConfigError(f"Target {self.target.value} needs an observation time t > 0.")
        if self.target is Target.P_ZERO_PROP and self.p != 0.0:
            raise ConfigError("p_zero_prop requires p = 0.")
        if self.target is Target.P_ZERO_PROP and self.regime is not None:
            raise ConfigError("p_zero_prop takes p_zero_case (i or ii), not regime.")
        if self.p_zero_case is not None and (
            self.target is not Target.P_ZERO_PROP or self.p_zero_case is PZeroCase.MIXED
        ):
            raise ConfigError("p_zero_case is i or ii and only applies to p_zero_prop.")
        if self.target is Target.SUB_CLT_REGIME and self.regime in (None, Regime.MIXED):
            raise ConfigError("sub_clt_regime needs regime I, II or III.")
        if self.target is Target.GRAPH_U_INF and self.p == 0.0:
            raise ConfigError("graph_u_inf needs p > 0.")

    @property
    def gamma_value(self) -> float:
        return self.k / self.n if self.gamma is None else self.gamma

    @property
    def horizon(self) -> float:
        """Simulation horizon: 2t for subcritical targets, t otherwise."""
        return self.t if self.target.is_supercritical else 2 * self.t

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("Experiment config must be a JSON object.")
        unknown = set(data) - set(_REQUIRED) - set(_OPTIONAL)
        if unknown:
            raise ConfigError(f"Unknown config keys: {sorted(unknown)}.")
        missing = [key for key in _REQUIRED if data.get(key) is None]
        if missing:
            raise ConfigError(f"Missing required config keys: {missing}.")

        try:
            target = Target(data["target"])
        except ValueError:
            raise ConfigError(f"Unknown target {data['target']!r}.") from None
        kernel = data.get("kernel", "exp:1")
        if not isinstance(kernel, KernelSpec):
            kernel = KernelSpec.parse(str(kernel))
        regime = data.get("regime")
        case = data.get("p_zero_case")
        try:
            regime = None if regime is None else Regime(str(regime))
            case = None if case is None else PZeroCase(str(case).lower())
            ci_mode = CIMode(data.get("ci_mode", CIMode.DELTA.value))
            return cls(
                target=target,
                n=int(data["n"]),
                k=int(data["k"]),
                p=float(data["p"]),
                replicas=int(data["replicas"]),
                seed=int(data["seed"]),
                t=None if data.get("t") is None else float(data["t"]),
                q=float(data.get("q", DEFAULT_Q)),
                mu=float(data.get("mu", 1.0)),
                kernel=kernel,
                gamma=None if data.get("gamma") is None else float(data["gamma"]),
                alpha=float(data.get("alpha", DEFAULT_ALPHA)),
                regime=regime,
                tolerances=Tolerances.from_dict(data.get("tolerances")),
                max_events=int(data.get("max_events", DEFAULT_EVENT_BUDGET)),
                ci_mode=ci_mode,
                p_zero_case=case,
            )
        except (TypeError, ValueError) as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(f"Invalid config value: {e}") from None

    @classmethod
    def from_json(cls, path: str | Path) -> "ExperimentConfig":
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            raise FormatError(f"Config {path} is not valid JSON: {e}") from None
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return {
            "target": self.target.value,
            "n": self.n,
            "k": self.k,
            "p": self.p,
            "replicas": self.replicas,
            "seed": self.seed,
            "t": self.t,
            "q": self.q,
            "mu": self.mu,
            "kernel": str(self.kernel),
            "gamma": self.gamma,
            "alpha": self.alpha,
            "regime": None if self.regime is None else self.regime.value,
            "tolerances": asdict(self.tolerances),
            "max_events": self.max_events,
            "ci_mode": self.ci_mode.value,
            "p_zero_case": None if self.p_zero_case is None else self.p_zero_case.value,
        }


# ------------------ regime classifier ------------------


class RegimeClassification(NamedTuple):
    regime: Regime
    terms: RateTerms
    dominance: float


def classify_regime(
    n: int, k: int, t: float, q: float = DEFAULT_Q, factor: float = 5.0
) -> RegimeClassification:
    """Which of 1/√K, N/(t√K), (N/K)√(Δ_t/t) dominates by ``factor``."""
    terms = rate_terms(n, k, t, delta_rule(t, q))
    regime, dominance = classify_terms(terms, factor)
    return RegimeClassification(regime, terms, dominance)


class PZeroClassification(NamedTuple):
    case: PZeroCase
    terms: RateTerms
    ratio: float


def classify_p_zero(
    n: int, k: int, t: float, q: float = DEFAULT_Q, factor: float = 5.0
) -> PZeroClassification:
    """Compare N/(t√K) with [(N/K)√(Δ_t/t)]² for a p = 0 configuration.

    ``ratio`` is horizon / bandwidth²: case I when it reaches ``factor``,
    case II when its inverse does, mixed otherwise.
    """
    terms = rate_terms(n, k, t, delta_rule(t, q))
    ratio = terms.horizon / terms.bandwidth**2
    if ratio >= factor:
        case = PZeroCase.I
    elif ratio * factor <= 1.0:
        case = PZeroCase.II
    else:
        case = PZeroCase.MIXED
    return PZeroClassification(case, terms, ratio)


# ------------------ per-replica work ------------------


def _graph_v_inf(cfg: ExperimentConfig, graph_seed: int, sim_seed: int) -> dict:
    lam = cfg.kernel.lam
    g = sample_graph(cfg.n, cfg.p, graph_seed)
    v = v_infinity(g, lam, cfg.k)
    centre = lam**2 * cfg.p * (1 - cfg.p) / (1 - lam * cfg.p) ** 2
    return {"value": math.sqrt(cfg.k) * (v - centre), "raw": {"v_inf": v}}


def _graph_u_inf(cfg: ExperimentConfig, graph_seed: int, sim_seed: int) -> dict:
    b = cfg.kernel.rate if cfg.kernel.is_exponential else 0.0
    g = sample_graph(cfg.n, cfg.p, graph_seed)
    u = u_infinity(g, b, cfg.k)
    return {"value": u, "raw": {"u_inf": u, "p_plugin": 1.0 / (u + 1.0)}}


def _simulate(cfg: ExperimentConfig, graph_seed: int, sim_seed: int):
    g = sample_graph(cfg.n, cfg.p, graph_seed)
    log = simulate(g, cfg.kernel, cfg.mu, cfg.horizon, sim_seed, cfg.max_events)
    return g, log


def _sub_estimate(cfg: ExperimentConfig, graph_seed: int, sim_seed: int) -> dict:
    _, log = _simulate(cfg, graph_seed, sim_seed)
    est = estimate(log, cfg.k, cfg.t, cfg.q, cfg.alpha, cfg.ci_mode, cfg.tolerances.dominance_factor)
    bounds = est.ci.bounds(est.p_hat)
    return {
        "value": est.p_hat,
        "raw": {
            "p_hat": est.p_hat,
            "mu_hat": est.mu_hat,
            "lambda_hat": est.lambda_hat,
            "epsilon": est.epsilon,
            "v_stat": est.v_stat,
            "x_stat": est.x_stat,
            "ci_low": None if bounds is None else bounds[0],
            "ci_high": None if bounds is None else bounds[1],
        },
        "events": log.total_events,
    }


def _sub_regime(cfg: ExperimentConfig, graph_seed: int, sim_seed: int) -> dict:
    result = _sub_estimate(cfg, graph_seed, sim_seed)
    terms = rate_terms(cfg.n, cfg.k, cfg.t, delta_rule(cfg.t, cfg.q))
    rate = terms.by_regime()[cfg.regime]
    result["value"] = (result["raw"]["p_hat"] - cfg.p) / rate
    return result


def _sub_v(cfg: ExperimentConfig, graph_seed: int, sim_seed: int) -> dict:
    g, log = _simulate(cfg, graph_seed, sim_seed)
    v = v_stat(log, cfg.k, cfg.t)
    v_inf = v_infinity(g, cfg.kernel.lam, cfg.k)
    scale = cfg.t * math.sqrt(cfg.k) / cfg.n
    return {
        "value": scale * (v - cfg.mu**2 * v_inf),
        "raw": {"v_stat": v, "v_inf": v_inf},
        "events": log.total_events,
    }


def _sub_x(cfg: ExperimentConfig, graph_seed: int, sim_seed: int) -> dict:
    g, log = _simulate(cfg, graph_seed, sim_seed)
    delta = delta_rule(cfg.t, cfg.q)
    x = x_stat(log, cfg.k, cfg.t, delta)
    x_inf = x_infinity(g, cfg.kernel.lam, cfg.mu, cfg.k)
    scale = cfg.k / cfg.n * math.sqrt(cfg.t / delta)
    return {
        "value": scale * (x - x_inf),
        "raw": {"x_stat": x, "x_inf": x_inf},
        "events": log.total_events,
    }


def _super_estimate(cfg: ExperimentConfig, graph_seed: int, sim_seed: int) -> dict:
    _, log = _simulate(cfg, graph_seed, sim_seed)
    b = cfg.kernel.rate
    est = estimate_super(log, cfg.k, cfg.t, cfg.p, b)
    return {
        "value": est.p_stat,
        "raw": {"u_stat": est.u_stat, "p_stat": est.p_stat, "z_bar": est.z_bar},
        "events": log.total_events,
    }


def _super_clt(cfg: ExperimentConfig, graph_seed: int, sim_seed: int) -> dict:
    result = _super_estimate(cfg, graph_seed, sim_seed)
    alpha0 = cfg.p - cfg.kernel.rate
    scale = math.exp(alpha0 * cfg.t) * math.sqrt(cfg.k) / cfg.n
    result["value"] = scale * (result["raw"]["p_stat"] - cfg.p)
    return result


_REPLICAS: dict[Target, Callable[[ExperimentConfig, int, int], dict]] = {
    Target.GRAPH_V_INF_CLT: _graph_v_inf,
    Target.GRAPH_U_INF: _graph_u_inf,
    Target.SUB_CONSISTENCY: _sub_estimate,
    Target.SUB_CLT_REGIME: _sub_regime,
    Target.SUB_V_CLT: _sub_v,
    Target.SUB_X_CLT: _sub_x,
    Target.SUB_COVERAGE: _sub_estimate,
    Target.SUPER_CONSISTENCY: _super_estimate,
    Target.SUPER_CLT: _super_clt,
    Target.P_ZERO_PROP: _sub_estimate,
}


def _run_replica(job: tuple[dict, int, int]) -> dict:
    """Top-level so it pickles for the process pool; never raises model errors."""
    cfg_dict, index, seed = job
    cfg = ExperimentConfig.from_dict(cfg_dict)
    graph_seed, sim_seed = derive_seeds(seed, 2)
    started = time.perf_counter()
    try:
        result = _REPLICAS[cfg.target](cfg, graph_seed, sim_seed)
    except HawkesNetError as e:
        result = {"error": f"{type(e).__name__}: {e}"}
    result.update(
        index=index,
        seed=seed,
        graph_seed=graph_seed,
        sim_seed=sim_seed,
        seconds=time.perf_counter() - started,
    )
    result.setdefault("events", 0)
    return result


# ------------------ report ------------------


@dataclass(slots=True)
class Criterion:
    name: str
    value: Optional[float]
    bound: str
    passed: bool

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "value": json_float(self.value),
            "bound": self.bound,
            "passed": self.passed,
        }


@dataclass(slots=True)
class MCReport:
    config: ExperimentConfig
    centering: str
    scaling: str
    values: np.ndarray
    replicas: list[dict]
    failures: list[dict]
    criteria: list[Criterion] = field(default_factory=list)
    theory: dict = field(default_factory=dict)
    ks: Optional[dict] = None
    qq: Optional[np.ndarray] = None
    regime: Optional[dict] = None
    events: int = 0
    timing: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.criteria)

    @property
    def summary(self) -> dict:
        values = self.values
        if values.size == 0:
            return {"count": 0, "mean": None, "variance": None, "median": None}
        return {
            "count": int(values.size),
            "mean": float(values.mean()),
            "variance": float(values.var(ddof=1)) if values.size > 1 else None,
            "median": float(np.median(values)),
        }

    def to_dict(self, include_timing: bool = True) -> dict:
        out = {
            "schema": int(SchemaVersion.current()),
            "target": self.config.target.value,
            "config": self.config.to_dict(),
            "centering": self.centering,
            "scaling": self.scaling,
            "passed": self.passed,
            "criteria": [c.to_dict() for c in self.criteria],
            "summary": self.summary,
            "theory": self.theory,
            "ks": self.ks,
            "regime": self.regime,
            "failures": self.failures,
            "events": self.events,
            "values": self.values,
            "replicas": [
                {key: value for key, value in r.items() if key != "seconds"}
                for r in self.replicas
            ],
            "qq": None if self.qq is None else self.qq,
        }
        if include_timing:
            out["timing"] = self.timing
        return jsonable(out)

    def qq_rows(self) -> list[tuple[float, float]]:
        if self.qq is None:
            return []
        return [(float(a), float(b)) for a, b in self.qq]


def _qq_points(values: np.ndarray, sd: float) -> np.ndarray:
    r = values.size
    probs = (np.arange(1, r + 1) - 0.5) / r
    return np.column_stack([sd * norm.ppf(probs), np.sort(values)])


def _clt_checks(report: MCReport, literal: float, delta: float, band: float) -> None:
    tol = report.config.tolerances
    values = report.values
    report.theory = {
        "literal": literal,
        "delta_method": delta,
        "mismatch": not math.isclose(literal, delta, rel_tol=1e-9, abs_tol=1e-15),
    }
    if values.size < 2:
        report.criteria.append(Criterion("variance_ratio", None, "needs >= 2 replicas", False))
        return

    sd = math.sqrt(delta)
    ratio = float(values.var(ddof=1)) / delta
    report.theory["variance_ratio"] = ratio
    report.criteria.append(
        Criterion("variance_ratio", ratio, f"[{1 - band:g}, {1 + band:g}]", abs(ratio - 1) <= band)
    )

    ks = kstest(values, "norm", args=(0.0, sd))
    report.ks = {"statistic": float(ks.statistic), "pvalue": float(ks.pvalue)}
    report.criteria.append(
        Criterion("ks_pvalue", float(ks.pvalue), f"> {tol.ks_level:g}", ks.pvalue > tol.ks_level)
    )

    mean = float(values.mean())
    limit = tol.mean_sd_factor * float(values.std(ddof=1)) / math.sqrt(values.size)
    report.criteria.append(
        Criterion("mean_normalized_error", mean, f"|.| <= {limit:.6g}", abs(mean) <= limit)
    )
    report.qq = _qq_points(values, sd)


def _raw_column(report: MCReport, key: str) -> np.ndarray:
    return np.array([r["raw"][key] for r in report.replicas], dtype=np.float64)


def _median_abs(report: MCReport, key: str, centre: float, tol: float, name: str) -> None:
    column = _raw_column(report, key)
    value = float(np.median(np.abs(column - centre))) if column.size else None
    passed = value is not None and value <= tol
    report.criteria.append(Criterion(name, value, f"<= {tol:g}", passed))


def _evaluate(report: MCReport) -> None:
    cfg = report.config
    tol = cfg.tolerances
    target = cfg.target
    lam = cfg.kernel.lam
    p, mu = cfg.p, cfg.mu

    if target is Target.GRAPH_V_INF_CLT:
        var = (lam**2 * p * (1 - p) / (1 - lam * p) ** 2) ** 2
        _clt_checks(report, var, var, tol.variance_band_matrix)

    elif target is Target.GRAPH_U_INF:
        u = report.values
        plug = _raw_column(report, "p_plugin")
        mean_u = float(u.mean()) if u.size else None
        mean_p = float(plug.mean()) if plug.size else None
        centre = 1.0 / p - 1.0
        report.criteria.append(
            Criterion("mean_u_inf", mean_u, f"|. - {centre:g}| <= {tol.u_tol:g}",
                      mean_u is not None and abs(mean_u - centre) <= tol.u_tol)
        )
        report.criteria.append(
            Criterion("mean_p_plugin", mean_p, f"|. - {p:g}| <= {tol.p_plugin_tol:g}",
                      mean_p is not None and abs(mean_p - p) <= tol.p_plugin_tol)
        )

    elif target is Target.SUB_CONSISTENCY:
        _median_abs(report, "p_hat", p, tol.p_tol, "median_abs_p_error")
        _median_abs(report, "mu_hat", mu, tol.mu_tol, "median_abs_mu_error")
        _median_abs(report, "lambda_hat", lam, tol.lambda_tol, "median_abs_lambda_error")

    elif target is Target.SUB_CLT_REGIME:
        oracle = asymptotic_variance(cfg.regime, mu, lam, p, cfg.gamma_value)
        _clt_checks(report, oracle.literal, oracle.delta_method, tol.variance_band_process)

    elif target is Target.SUB_V_CLT:
        var = component_variance(Regime.II, mu, lam, p)
        _clt_checks(report, var, var, tol.variance_band_process)

    elif target is Target.SUB_X_CLT:
        var = component_variance(Regime.III, mu, lam, p, cfg.gamma_value)
        _clt_checks(report, var, var, tol.variance_band_process)

    elif target is Target.SUB_COVERAGE:
        low = _raw_column(report, "ci_low")
        high = _raw_column(report, "ci_high")
        covered = (low <= p) & (p <= high)
        rate = float(covered.mean()) if covered.size else None
        report.criteria.append(
            Criterion("coverage", rate, f"[{tol.coverage_low:g}, {tol.coverage_high:g}]",
                      rate is not None and tol.coverage_low <= rate <= tol.coverage_high)
        )

    elif target is Target.SUPER_CONSISTENCY:
        _median_abs(report, "p_stat", p, tol.p_tol, "median_abs_p_error")
        _median_abs(report, "u_stat", 1.0 / p - 1.0, tol.u_tol, "median_abs_u_error")

    elif target is Target.SUPER_CLT:
        var = asymptotic_variance_super(mu, p, cfg.kernel.rate)
        _clt_checks(report, var, var, tol.variance_band_process)

    elif target is Target.P_ZERO_PROP:
        p_hat = report.values
        if cfg.p_zero_case is PZeroCase.I:
            value = float(np.median(p_hat)) if p_hat.size else None
            report.criteria.append(
                Criterion("median_p_hat", value, f"<= {tol.p_zero_median:g}",
                          value is not None and value <= tol.p_zero_median)
            )
        else:
            value = float((p_hat > 0.5).mean()) if p_hat.size else None
            report.criteria.append(
                Criterion("frequency_p_hat_above_half", value,
                          f"[{tol.p_zero_low:g}, {tol.p_zero_high:g}]",
                          value is not None and tol.p_zero_low <= value <= tol.p_zero_high)
            )


_CENTERING = {
    Target.GRAPH_V_INF_CLT: ("Λ²p(1-p)/(1-Λp)² (population constant)", "√K"),
    Target.GRAPH_U_INF: ("1/p - 1", "none"),
    Target.SUB_CONSISTENCY: ("(μ, Λ, p)", "none"),
    Target.SUB_CLT_REGIME: ("p", "inverse of the regime's rate term"),
    Target.SUB_V_CLT: ("μ²𝒱_∞ of the replica's graph", "t√K/N"),
    Target.SUB_X_CLT: ("𝒳_∞ of the replica's graph", "(K/N)√(t/Δ_t)"),
    Target.SUB_COVERAGE: ("p", "none"),
    Target.SUPER_CONSISTENCY: ("p and 1/p - 1", "none"),
    Target.SUPER_CLT: ("p", "e^{α₀t}√K/N"),
    Target.P_ZERO_PROP: ("0", "none"),
}


# ------------------ experiment ------------------


def _check_config(cfg: ExperimentConfig) -> Optional[dict]:
    """Reject configs outside their target's regime; returns regime diagnostics."""
    target = cfg.target
    if target.is_matrix_only:
        if target is Target.GRAPH_V_INF_CLT and not cfg.kernel.lam * cfg.p < 1:
            raise ConfigError("graph_v_inf_clt needs Λp < 1.")
        return None

    params = RegimeParams.build(cfg.kernel, cfg.mu, cfg.p, cfg.gamma)
    if target.is_supercritical:
        if params.criticality is not Criticality.SUPERCRITICAL:
            raise ConfigError(f"Target {target.value} needs Λp > 1.")
        return None
    if params.criticality is not Criticality.SUBCRITICAL:
        raise ConfigError(f"Target {target.value} needs Λp < 1.")

    found = classify_regime(cfg.n, cfg.k, cfg.t, cfg.q, cfg.tolerances.dominance_factor)
    diagnostics = {
        "dominating": found.regime.value,
        "dominance_factor": json_float(found.dominance),
        "rate_terms": {
            "inv_sqrt_k": found.terms.sqrt_k,
            "bandwidth": found.terms.bandwidth,
            "horizon": found.terms.horizon,
        },
    }
    if target is Target.P_ZERO_PROP:
        p_zero = classify_p_zero(cfg.n, cfg.k, cfg.t, cfg.q, cfg.tolerances.dominance_factor)
        diagnostics["p_zero_case"] = p_zero.case.value
        diagnostics["horizon_over_bandwidth_sq"] = json_float(p_zero.ratio)
    if target is Target.SUB_CLT_REGIME:
        if found.regime is Regime.MIXED:
            raise ConfigError(
                f"No regime dominates by {cfg.tolerances.dominance_factor:g}x "
                f"(realized {found.dominance:.3g}); mixed regimes have no CLT."
            )
        if found.regime is not cfg.regime:
            raise ConfigError(
                f"Config requests regime {cfg.regime.value} but regime {found.regime.value} dominates."
            )
    return diagnostics


def run_experiment(cfg: ExperimentConfig, threads: int = 1, progress: bool = False) -> MCReport:
    """Run R replicas of ``cfg.target`` and check its acceptance criteria."""
    if cfg.target is Target.P_ZERO_PROP:
        found = classify_p_zero(cfg.n, cfg.k, cfg.t, cfg.q, cfg.tolerances.dominance_factor)
        if found.case is PZeroCase.MIXED:
            raise ConfigError(
                f"horizon/bandwidth² = {found.ratio:.3g} is within "
                f"{cfg.tolerances.dominance_factor:g}x of 1; neither p = 0 limit applies."
            )
        if cfg.p_zero_case not in (None, found.case):
            raise ConfigError(
                f"Config requests p = 0 case {cfg.p_zero_case.value} "
                f"but the rates give case {found.case.value}."
            )
        cfg = ExperimentConfig.from_dict({**cfg.to_dict(), "p_zero_case": found.case.value})
    diagnostics = _check_config(cfg)

    started = time.perf_counter()
    seeds = derive_seeds(cfg.seed, cfg.replicas)
    cfg_dict = cfg.to_dict()
    jobs = [(cfg_dict, index, seed) for index, seed in enumerate(seeds)]
    logger.info(
        "Running %s: %d replicas on %d thread(s), seed %d",
        cfg.target.value, cfg.replicas, threads, cfg.seed,
    )

    with tqdm(total=len(jobs), desc=cfg.target.value, disable=not progress) as bar:
        if threads > 1:
            with ProcessPoolExecutor(max_workers=threads) as pool:
                results = []
                for result in pool.map(_run_replica, jobs, chunksize=max(1, len(jobs) // (4 * threads))):
                    results.append(result)
                    bar.update(1)
        else:
            results = []
            for job in jobs:
                results.append(_run_replica(job))
                bar.update(1)

    ok = [r for r in results if "error" not in r]
    failures = [
        {"index": r["index"], "seed": r["seed"], "error": r["error"]}
        for r in results
        if "error" in r
    ]
    for failure in failures:
        logger.warning("Replica %d (seed %d) failed: %s", failure["index"], failure["seed"], failure["error"])
    allowed = math.floor(cfg.tolerances.failure_quota * cfg.replicas)
    if len(failures) > allowed:
        raise ReplicaQuotaExceeded(
            f"{len(failures)} of {cfg.replicas} replicas failed (quota {allowed}).", failures
        )

    centering, scaling = _CENTERING[cfg.target]
    report = MCReport(
        config=cfg,
        centering=centering,
        scaling=scaling,
        values=np.array([r["value"] for r in ok], dtype=np.float64),
        replicas=ok,
        failures=failures,
        regime=diagnostics,
        events=int(sum(r["events"] for r in results)),
    )
    _evaluate(report)

    report.timing = {
        "wall_seconds": time.perf_counter() - started,
        "replica_seconds": float(sum(r["seconds"] for r in results)),
    }
    logger.info(
        "%s finished: passed=%s, %d failures, %d events",
        cfg.target.value, report.passed, len(failures), report.events,
    )
    return report
