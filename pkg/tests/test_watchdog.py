from dataclasses import replace

import pytest
from hypothesis import given, settings, strategies as st

from udos_guard.core import SYSTEM_RESOURCES, PolicyConfig, SystemFractions
from udos_guard.watchdog import MitigationState, Mode, SystemMetrics, Watchdog, tick

CFG = PolicyConfig()


def m(cpu=0.0, mem=0.0, conn=0.0, t=0):
    return SystemMetrics(cpu, mem, conn, t)


ACTIVE = MitigationState(Mode.ACTIVE, 0)
INACTIVE = MitigationState()


def test_cpu_over_enable_activates():
    s = tick(INACTIVE, m(cpu=0.80, t=7), CFG)
    assert s.mode is Mode.ACTIVE and s.last_transition == 7


def test_hold_when_not_all_below_disable():
    assert tick(ACTIVE, m(0.50, 0.40, 0.20), CFG) == ACTIVE


def test_release_when_all_below_disable():
    assert tick(ACTIVE, m(0.30, 0.45, 0.30, t=9), CFG) == MitigationState(Mode.INACTIVE, 9)


@pytest.mark.parametrize("res", SYSTEM_RESOURCES)
def test_equal_to_enable_triggers(res):
    kw = {"cpu": 0.0, "mem": 0.0, "conn": 0.0}
    kw[{"cpu": "cpu", "memory": "mem", "connection_pool": "conn"}[res]] = getattr(CFG.enable_thresholds, res)
    assert tick(INACTIVE, m(**kw), CFG).active


@pytest.mark.parametrize("res", SYSTEM_RESOURCES)
def test_equal_to_disable_holds(res):
    kw = {"cpu": 0.0, "mem": 0.0, "conn": 0.0}
    kw[{"cpu": "cpu", "memory": "mem", "connection_pool": "conn"}[res]] = getattr(CFG.disable_thresholds, res)
    assert tick(ACTIVE, m(**kw), CFG).active


def test_pool_at_384_of_512_is_enable():
    assert tick(INACTIVE, m(conn=384 / 512), CFG).active


@pytest.mark.parametrize("bad", [-0.01, 1.01, float("nan")])
def test_metrics_range(bad):
    with pytest.raises(ValueError):
        SystemMetrics(bad, 0, 0)


fractions = st.floats(0.0, 1.0, allow_nan=False)
samples = st.tuples(fractions, fractions, fractions)


@settings(max_examples=300)
@given(st.lists(samples, min_size=1, max_size=200))
def test_transitions_respect_hysteresis(trajectory):
    en, dis = CFG.enable_thresholds, CFG.disable_thresholds
    state = INACTIVE
    for n, (c, mm, k) in enumerate(trajectory):
        new = tick(state, m(c, mm, k, n), CFG)
        vals = {"cpu": c, "memory": mm, "connection_pool": k}
        if state.mode is Mode.INACTIVE and new.mode is Mode.ACTIVE:
            assert any(vals[r] >= getattr(en, r) for r in SYSTEM_RESOURCES)
        if state.mode is Mode.ACTIVE and new.mode is Mode.INACTIVE:
            assert all(vals[r] < getattr(dis, r) for r in SYSTEM_RESOURCES)
        if state.mode is Mode.INACTIVE and any(vals[r] >= getattr(en, r) for r in SYSTEM_RESOURCES):
            assert new.active
        if state.mode is Mode.ACTIVE and all(vals[r] < getattr(dis, r) for r in SYSTEM_RESOURCES):
            assert not new.active
        if new.mode is state.mode:
            assert new == state
        state = new


def _in_band(res):
    lo, hi = getattr(CFG.disable_thresholds, res), getattr(CFG.enable_thresholds, res)
    return st.floats(lo, hi, exclude_max=True, allow_nan=False)


@settings(max_examples=200)
@given(
    st.sampled_from(SYSTEM_RESOURCES),
    st.data(),
    st.integers(2, 100),
    st.sampled_from([INACTIVE, ACTIVE]),
)
def test_oscillation_inside_band_never_transitions(res, data, periods, start):
    low = data.draw(_in_band(res))
    high = data.draw(_in_band(res))
    wd = Watchdog(CFG)
    wd.state = start
    key = {"cpu": "cpu", "memory": "mem", "connection_pool": "conn"}[res]
    for n in range(periods * 2):
        value = low if n % 2 else high
        # Other resources sit below their disable thresholds: the band alone decides.
        wd.tick(m(**{key: value}, t=n))
    assert wd.transitions == 0
    assert wd.state == start


def test_watchdog_counts_transitions():
    wd = Watchdog(CFG)
    for c in (0.1, 0.8, 0.5, 0.2, 0.9):
        wd.tick(m(cpu=c))
    assert wd.transitions == 3 and wd.active


def test_thresholds_are_read_from_config():
    cfg = replace(CFG, enable_thresholds=SystemFractions(0.9, 0.9, 0.9))
    assert not tick(INACTIVE, m(cpu=0.8), cfg).active
