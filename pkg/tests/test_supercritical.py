import math

import numpy as np
import pytest

from pyhawkesnet.errors import AssumptionViolation, DomainError, HorizonTooShortError
from pyhawkesnet.simulator import EventLog
from pyhawkesnet.supercritical import (
    asymptotic_variance_super,
    estimate_super,
    fit_growth_rate,
    p_stat,
    u_stat,
)


def growth_log() -> EventLog:
    # Z_s = ⌊e^s - 1⌋, so log Z grows with slope ≈ 1
    times = np.log(np.arange(2, 2981, dtype=np.float64))
    return EventLog(1, 8.0, (times,))


def test_u_stat_empty():
    assert u_stat(EventLog.empty(3, 5.0), 2, 5.0) == 0.0


def test_u_stat_toy():
    log = EventLog(2, 2.0, ([1.0], [0.5, 1.0, 1.5]))
    # counts (1, 3), Z̄ = 2
    assert u_stat(log, 2, 2.0) == pytest.approx(-0.5)


def test_u_stat_window():
    log = EventLog.empty(3, 5.0)
    with pytest.raises(HorizonTooShortError):
        u_stat(log, 2, 6.0)
    with pytest.raises(DomainError):
        u_stat(log, 4, 5.0)


def test_p_stat():
    assert p_stat(-0.5) == 0.0
    assert p_stat(0.0) == 1.0
    assert p_stat(1.0) == 0.5
    assert p_stat(float("nan")) == 0.0


def test_asymptotic_variance_super():
    assert asymptotic_variance_super(1.0, 0.5, 0.2) == pytest.approx(0.00405)
    assert asymptotic_variance_super(2.0, 0.6, 0.3) == pytest.approx(0.001458)
    with pytest.raises(AssumptionViolation):
        asymptotic_variance_super(1.0, 0.3, 0.3)
    with pytest.raises(AssumptionViolation):
        asymptotic_variance_super(0.0, 0.5, 0.2)


def test_fit_growth_rate():
    assert fit_growth_rate(growth_log(), 1, 8.0) == pytest.approx(1.0, abs=0.02)
    assert fit_growth_rate(EventLog.empty(2, 8.0), 2, 8.0) is None


def test_estimate_super_with_true_parameters():
    est = estimate_super(growth_log(), 1, 8.0, p=0.6, b=0.3)
    assert est.alpha0_source == "true"
    assert est.alpha0_used == pytest.approx(0.3)
    assert est.z_bar == 2979.0
    assert est.u_stat == pytest.approx(-1 / 2979.0)
    assert est.p_stat == 0.0
    assert est.clt_scale == pytest.approx(math.exp(0.3 * 8.0))

    data = est.to_dict()
    assert data["kind"] == "supercritical"
    assert data["p"] == 0.0
    assert data["inputs"] == {"n": 1, "k": 1, "t": 8.0}

    with pytest.raises(AssumptionViolation):
        estimate_super(growth_log(), 1, 8.0, p=0.3, b=0.4)


def test_estimate_super_fitted():
    est = estimate_super(growth_log(), 1, 8.0)
    assert est.alpha0_source == "fitted"
    assert est.alpha0_used == pytest.approx(1.0, abs=0.02)

    empty = estimate_super(EventLog.empty(2, 8.0), 2, 8.0, p=0.6)
    assert empty.alpha0_used is None
    assert empty.alpha0_source is None
    assert empty.clt_scale is None
    assert empty.p_stat == 1.0
