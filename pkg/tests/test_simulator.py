import math

import numpy as np
import pytest
from scipy.stats import expon, kstest

from pyhawkesnet.errors import DomainError, EventBudgetExceeded, LogRangeError, SubcriticalityError
from pyhawkesnet.graph import InteractionGraph, compute_ell, perron_data, sample_graph
from pyhawkesnet.kernel import KernelSpec
from pyhawkesnet.simulator import (
    EventLog,
    _ParentTable,
    expected_counts,
    expected_counts_ode,
    expected_counts_series,
    quantize_times,
    simulate,
)
from pyhawkesnet.utils import derive_seeds

EXP1 = KernelSpec.exponential(1.0)
EXP2 = KernelSpec.exponential(2.0)

# E[Z_1] for N=1, θ=1, φ(s)=e^{-2s}, μ=1
RENEWAL_MEAN = 2.0 - (1.0 - math.exp(-1.0))


def zero_graph(n: int) -> InteractionGraph:
    return InteractionGraph(n, 0.0, np.zeros((n, n), dtype=bool))


def self_loop() -> InteractionGraph:
    return InteractionGraph(1, 1.0, np.ones((1, 1), dtype=bool))


def test_count_at_examples():
    log = EventLog(2, 2.0, ([0.5, 1.5], []))
    assert log.count_at(0, 1.0) == 1
    assert log.count_at(0, 1.5) == 2
    assert log.count_at(0, 0.0) == 0
    assert log.count_at(1, 2.0) == 0
    assert EventLog.empty(3, 1.0).count_at(2, 1.0) == 0

    with pytest.raises(LogRangeError):
        log.count_at(2, 1.0)
    with pytest.raises(LogRangeError):
        log.count_at(0, 2.5)


def test_counts_on_grid():
    log = EventLog(2, 4.0, ([0.5, 1.5, 3.0], [2.0]))
    counts = log.counts_on_grid([0.0, 1.5, 4.0])
    assert counts.tolist() == [[0, 2, 3], [0, 0, 1]]
    assert log.counts_at(2.0, 1).tolist() == [2]
    assert log.mean_count(4.0) == 2.0
    assert log.total_events == 4
    with pytest.raises(LogRangeError):
        log.counts_at(1.0, 3)


def test_event_log_validation():
    with pytest.raises(DomainError):
        EventLog(1, 2.0, ([1.0, 1.0],))
    with pytest.raises(DomainError):
        EventLog(1, 2.0, ([0.0],))
    with pytest.raises(DomainError):
        EventLog(1, 2.0, ([2.5],))
    with pytest.raises(DomainError):
        EventLog(2, 2.0, ([1.0],))

    log = EventLog(1, 2.0, ([1.0],))
    with pytest.raises(ValueError):
        log.events[0][0] = 0.5


def test_quantize_times():
    times = quantize_times(np.array([1e-12, 0.25, 0.25, 0.7500000004, 3.0]), 2.0)
    assert np.all(np.diff(times) > 0)
    assert times[0] > 0
    assert times[-1] <= 2.0
    assert times[1] == 0.25
    assert times[2] == pytest.approx(0.25 + 1e-9, abs=1e-15)


def test_simulate_deterministic():
    g = sample_graph(10, 0.5, seed=1)
    a = simulate(g, EXP2, 1.0, 20.0, seed=99)
    b = simulate(g, EXP2, 1.0, 20.0, seed=99)
    c = simulate(g, EXP2, 1.0, 20.0, seed=100)
    assert a.identical(b)
    assert not a.identical(c)
    assert a.meta["sim_seed"] == 99
    assert a.meta["events"] == a.total_events
    assert a.meta["kernel"] == "exp:2.0"


def test_simulate_uniform_kernel():
    g = sample_graph(8, 0.5, seed=4)
    log = simulate(g, KernelSpec.uniform(0.5), 1.0, 30.0, seed=2)
    assert log.total_events > 0
    for times in log.events:
        assert np.all(np.diff(times) > 0)
        assert times.size == 0 or times[-1] <= 30.0


def test_simulate_rejects_bad_input():
    with pytest.raises(DomainError):
        simulate(zero_graph(2), EXP1, 0.0, 10.0, seed=1)
    with pytest.raises(DomainError):
        simulate(zero_graph(2), EXP1, 1.0, 0.0, seed=1)
    ones = InteractionGraph(2, 1.0, np.ones((2, 2), dtype=bool))
    with pytest.raises(SubcriticalityError):
        simulate(ones, KernelSpec.uniform(2.0), 1.0, 10.0, seed=1)


def test_event_budget():
    with pytest.raises(EventBudgetExceeded) as info:
        simulate(zero_graph(2), EXP1, 10.0, 10.0, seed=3, max_events=5)
    partial = info.value.partial
    assert partial.total_events == 6
    assert partial.meta["truncated_at"] == partial.horizon


def test_parent_table_draws_by_weight():
    table = _ParentTable(math.log(2.0))
    assert table.mass(0.0) == 0.0
    table.add(0, 2, 0.0)
    table.add(1, 1, 1.0)
    assert table.total == pytest.approx(4.0)
    assert table.mass(1.0) == pytest.approx(2.0)
    assert table.draw(0.49) == 0
    assert table.draw(0.51) == 1

    table.add(2, 1, 300.0)
    assert table.ref == 300.0
    assert table.mass(300.0) == pytest.approx(1.0)
    assert table.draw(0.5) == 2
    assert len(table.parents) == len(table.cumulative)


def test_supercritical_mean_matches_ode():
    # ρ_N = 1, b = 0.5: E[Z^i_4] = 4e² - 8
    g = InteractionGraph(3, 1.0, np.ones((3, 3), dtype=bool))
    slow = KernelSpec.exponential(0.5)
    runs = 300
    means = np.array(
        [simulate(g, slow, 1.0, 4.0, seed).counts_at(4.0).mean() for seed in derive_seeds(3, runs)]
    )
    oracle = expected_counts(g, slow, 1.0, 4.0, 3)
    assert oracle == pytest.approx(np.full(3, 4 * math.e**2 - 8), rel=1e-6)
    stderr = means.std(ddof=1) / math.sqrt(runs)
    assert abs(means.mean() - oracle[0]) <= 4 * stderr


def test_poisson_rate_decoupled():
    log = simulate(zero_graph(20), EXP1, 2.0, 50.0, seed=8)
    # 2000 expected events, sd ≈ 45
    assert abs(log.total_events - 2000) < 6 * math.sqrt(2000)


def test_expected_counts_zero_graph():
    g = zero_graph(4)
    assert np.array_equal(expected_counts_series(g, EXP1, 1.5, 10.0, 3), np.full(3, 15.0))
    assert np.allclose(expected_counts_ode(g, EXP1, 1.5, 10.0, 3), 15.0, rtol=1e-9)


def test_expected_counts_renewal():
    g = self_loop()
    assert expected_counts_series(g, EXP2, 1.0, 1.0, 1)[0] == pytest.approx(RENEWAL_MEAN, rel=1e-7)
    assert expected_counts_ode(g, EXP2, 1.0, 1.0, 1)[0] == pytest.approx(RENEWAL_MEAN, rel=1e-7)


def test_expected_counts_uniform_short_time():
    # for t below the cutoff the mean path is e^t - 1
    g = self_loop()
    value = expected_counts_series(g, KernelSpec.uniform(0.5), 1.0, 0.4, 1)[0]
    assert value == pytest.approx(math.exp(0.4) - 1.0, rel=1e-7)


def test_series_and_ode_agree():
    g = sample_graph(5, 0.6, seed=123)
    series = expected_counts_series(g, EXP2, 1.0, 50.0, 5)
    ode = expected_counts_ode(g, EXP2, 1.0, 50.0, 5)
    assert np.allclose(series, ode, rtol=1e-6)
    assert np.array_equal(expected_counts(g, EXP2, 1.0, 50.0, 5, method="series"), series)


def test_expected_counts_slope():
    g = InteractionGraph(4, 1.0, np.ones((4, 4), dtype=bool))
    late = expected_counts(g, EXP2, 1.0, 200.0, 4)
    early = expected_counts(g, EXP2, 1.0, 190.0, 4)
    assert np.allclose((late - early) / 10.0, 2.0, rtol=0.01)


def test_expected_counts_auto_falls_back_to_ode():
    # Λ‖A_N‖_∞ = 2: series gate fails, exponential kernel still has the ODE
    g = InteractionGraph(2, 1.0, np.ones((2, 2), dtype=bool))
    slow = KernelSpec.exponential(0.5)
    auto = expected_counts(g, slow, 1.0, 2.0, 2)
    assert np.allclose(auto, expected_counts_ode(g, slow, 1.0, 2.0, 2))
    with pytest.raises(SubcriticalityError):
        expected_counts(g, KernelSpec.uniform(2.0), 1.0, 2.0, 2)
    with pytest.raises(DomainError):
        expected_counts(g, slow, 1.0, 2.0, 2, method="euler")


@pytest.mark.slow
def test_poisson_interarrival_ks():
    log = simulate(zero_graph(10), EXP1, 2.0, 600.0, seed=2024)
    gaps = np.concatenate([np.diff(np.concatenate([[0.0], t])) for t in log.events])
    assert gaps.size >= 10_000
    assert kstest(gaps, expon(scale=0.5).cdf).pvalue > 0.01


@pytest.mark.slow
def test_mean_path_matches_oracle():
    g = sample_graph(5, 0.6, seed=123)
    runs = 500
    counts = np.empty((runs, 5))
    for r, seed in enumerate(derive_seeds(77, runs)):
        counts[r] = simulate(g, EXP2, 1.0, 50.0, seed).counts_at(50.0)
    oracle = expected_counts(g, EXP2, 1.0, 50.0, 5)
    stderr = counts.std(axis=0, ddof=1) / math.sqrt(runs)
    assert np.all(np.abs(counts.mean(axis=0) - oracle) <= 3 * stderr)


@pytest.mark.slow
def test_renewal_mean_single_individual():
    runs = 20_000
    counts = np.array(
        [simulate(self_loop(), EXP2, 1.0, 1.0, seed).count_at(0, 1.0) for seed in derive_seeds(5, runs)]
    )
    stderr = counts.std(ddof=1) / math.sqrt(runs)
    assert abs(counts.mean() - RENEWAL_MEAN) <= 3 * stderr


@pytest.mark.slow
def test_stationary_throughput():
    g = sample_graph(50, 0.5, seed=9)
    log = simulate(g, EXP1, 1.0, 400.0, seed=10)
    ell_bar = compute_ell(g, 1.0).mean()
    assert log.mean_count(400.0) / 400.0 == pytest.approx(ell_bar, rel=0.05)


@pytest.mark.slow
def test_supercritical_growth_rate():
    g = sample_graph(80, 0.6, seed=12)
    log = simulate(g, KernelSpec.exponential(0.3), 1.0, 30.0, seed=13)
    grid = np.linspace(20.0, 30.0, 41)
    z_bar = log.counts_on_grid(grid).mean(axis=0)
    slope, _ = np.polyfit(grid, np.log(z_bar), 1)
    assert slope == pytest.approx(perron_data(g, 0.3).alpha_n, rel=0.1)
