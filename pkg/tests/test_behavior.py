import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from intentmerge.behavior import (
    BEFORE_TRIGGER,
    COMMITTED_ACTION_UNUSED,
    DEFAULT_TRIGGERS,
    FIRED,
    UNCOMMITTED_ACTION_USED,
    IdmParams,
    MobilParams,
    SenderAssignment,
    check_compliance,
    idm_acceleration,
    mobil_criterion,
    mobil_decide,
    sample_assignment,
    sender_policy_step,
)
from intentmerge.dynamics import Action
from intentmerge.intent import CATALOG, I_FASTER, I_IDLE, I_LANE_LEFT, I_SLOWER
from intentmerge.world import LaneRef, RoadGeometry, make_vehicle

import oracles

G = RoadGeometry()
P = IdmParams()
I, LL, F, S = Action.IDLE, Action.LANE_LEFT, Action.FASTER, Action.SLOWER


# --- IDM ----------------------------------------------------------------------

def test_idm_examples():
    assert idm_acceleration(0.0, None, None, P) == 3.0
    assert idm_acceleration(30.0, None, None, P) == 0.0
    assert idm_acceleration(20.0, 40.0, 20.0, P) == pytest.approx(-0.5925925925925926, abs=1e-12)


def test_idm_infinite_gap_is_free_road():
    assert idm_acceleration(12.0, math.inf, 5.0, P) == idm_acceleration(12.0, None, None, P)


def test_idm_rejects_nonpositive_gap():
    with pytest.raises(ValueError):
        idm_acceleration(10.0, 0.0, 10.0, P)


def test_idm_clamps():
    assert idm_acceleration(30.0, 0.5, 0.0, P) == -10.0
    assert idm_acceleration(0.0, None, None, IdmParams(a=8.0), a_cmd_max=5.0) == 5.0


def test_params_validation():
    with pytest.raises(ValueError):
        IdmParams(T=0)
    with pytest.raises(ValueError):
        MobilParams(politeness=1.5)
    with pytest.raises(ValueError):
        MobilParams(b_safe=0)


idm_params = st.builds(IdmParams, v0=st.floats(10, 40), T=st.floats(0.5, 3), s0=st.floats(1, 15),
                       a=st.floats(0.5, 4), b=st.floats(1, 6), delta=st.sampled_from([2.0, 4.0]))


@given(idm_params, st.floats(0, 40), st.floats(0, 40), st.floats(0.5, 200), st.floats(0, 10))
def test_idm_monotone_in_speed(p, v1, vl, gap, dv):
    v2 = v1 + dv
    assert idm_acceleration(v2, gap, vl, p) <= idm_acceleration(v1, gap, vl, p) + 1e-12


@given(idm_params, st.floats(0, 40), st.floats(0, 40), st.floats(0.5, 200), st.floats(0, 50))
def test_idm_monotone_in_gap(p, v, vl, gap, dg):
    assert idm_acceleration(v, gap + dg, vl, p) >= idm_acceleration(v, gap, vl, p) - 1e-12


def test_idm_matches_oracle_on_random_draws():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        p = IdmParams(v0=rng.uniform(10, 40), T=rng.uniform(0.5, 3), s0=rng.uniform(1, 15),
                      a=rng.uniform(0.5, 4), b=rng.uniform(1, 6), delta=4.0)
        v, vl, gap = rng.uniform(0, 40), rng.uniform(0, 40), rng.uniform(0.5, 200)
        lead = rng.random() < 0.8
        got = idm_acceleration(v, gap if lead else None, vl if lead else None, p)
        want = oracles.idm(v, gap if lead else None, vl, p.v0, p.T, p.s0, p.a, p.b, p.delta)
        assert abs(got - want) <= 1e-9


# --- MOBIL ----------------------------------------------------------------------

def test_mobil_criterion_examples():
    m = MobilParams()
    assert not mobil_criterion(0.0, 5.0, 0.0, -3.0, 0.0, 0.0, m).change
    out = mobil_criterion(0.0, 0.5, 0.0, -0.6, 0.0, -0.4, m)
    assert out.incentive == pytest.approx(0.4)
    assert out.change
    assert not mobil_criterion(1.0, 1.0, 0.0, 0.0, 0.0, 0.0, m).change


def car(vid, lane, x, v):
    return make_vehicle(vid, G, LaneRef.highway(lane), x, v)


def test_mobil_decide_matches_oracle_and_never_unsafe():
    rng = np.random.default_rng(1)
    m = MobilParams()
    changes = 0
    for k in range(10000):
        ego = car("ego", 1, 200.0, rng.uniform(15, 32))
        cur = [car(f"c{j}", 1, 200 + rng.uniform(-80, 80), rng.uniform(10, 32))
               for j in range(rng.integers(0, 3))]
        cur = [v for v in cur if abs(v.x - 200) > 5.5]
        tgt = [car(f"t{j}", 0, 200 + rng.uniform(-80, 80), rng.uniform(10, 32))
               for j in range(rng.integers(0, 3))]
        out = mobil_decide(ego, cur, tgt, P, m)
        assert out.change == oracles.mobil_decide(ego, cur, tgt, m.politeness, m.b_safe, m.a_threshold)
        if out.change:
            changes += 1
            assert out.safe and out.new_follower_accel >= -m.b_safe
        if not out.safe:
            assert not out.change
    assert changes > 100


def test_mobil_keeps_lane_when_follower_would_brake_hard():
    ego = car("ego", 1, 200, 25)
    slow_leader = car("l", 1, 225, 10)
    fast_follower = car("f", 0, 188, 32)
    out = mobil_decide(ego, [slow_leader], [fast_follower])
    assert not out.safe and not out.change


# --- sender ---------------------------------------------------------------------

def test_sender_examples():
    assert sender_policy_step(SenderAssignment(I_IDLE), 1000.0)[0] is I
    a = SenderAssignment(I_FASTER, 220.0)
    act, a2 = sender_policy_step(a, 219.9)
    assert act is I and a2.phase == BEFORE_TRIGGER
    act, a3 = sender_policy_step(a2, 220.0)
    assert act is F and a3.phase == FIRED
    assert sender_policy_step(a3, 300.0)[0] is I


def test_assignment_validation():
    with pytest.raises(ValueError):
        SenderAssignment(I_IDLE, 220.0)
    with pytest.raises(ValueError):
        SenderAssignment(I_FASTER)
    with pytest.raises(ValueError):
        SenderAssignment(I_FASTER, 230.0).validate()
    with pytest.raises(ValueError):
        SenderAssignment(I_FASTER, 190.0).validate(merge_zone_end=150.0)
    SenderAssignment(I_SLOWER, 160.0).validate()


def test_sample_assignment_deterministic():
    a = [sample_assignment(np.random.default_rng(7)) for _ in range(2)]
    assert a[0] == a[1]


def test_sample_assignment_frequencies():
    rng = np.random.default_rng(2024)
    n = 100_000
    draws = [sample_assignment(rng) for _ in range(n)]
    for name in CATALOG:
        frac = sum(d.intent.name == name for d in draws) / n
        assert abs(frac - 0.25) < 0.01
    slow = [d.trigger_x for d in draws if d.intent == I_SLOWER]
    for t in (160.0, 190.0, 220.0):
        assert abs(slow.count(t) / len(slow) - 1 / 3) < 0.015
    for d in draws:
        if d.trigger_x is not None:
            assert d.trigger_x in DEFAULT_TRIGGERS[d.intent.name]


def test_slower_trigger_frequencies_direct():
    rng = np.random.default_rng(5)
    counts = {160.0: 0, 190.0: 0, 220.0: 0}
    n = 0
    while n < 100_000:
        d = sample_assignment(rng)
        if d.intent == I_SLOWER:
            counts[d.trigger_x] += 1
            n += 1
    for c in counts.values():
        assert abs(c / n - 1 / 3) < 0.01


@settings(max_examples=200)
@given(st.sampled_from(list(CATALOG.values())), st.integers(0, 2),
       st.lists(st.floats(0, 40), min_size=1, max_size=25))
def test_sender_fires_once_at_first_step_past_trigger(intent, k, steps):
    xs = np.cumsum(steps) + 100.0
    a = SenderAssignment(intent) if intent == I_IDLE else \
        SenderAssignment(intent, DEFAULT_TRIGGERS[intent.name][k])
    trace = []
    for x in xs:
        act, a = sender_policy_step(a, float(x))
        trace.append(act)
    if intent == I_IDLE:
        assert set(trace) == {I}
        return
    fired = [i for i, act in enumerate(trace) if act is not I]
    past = [i for i, x in enumerate(xs) if x >= a.trigger_x]
    if past:
        assert fired == [past[0]]
        assert trace[past[0]] is intent.committed_action
    else:
        assert fired == []


# --- compliance ---------------------------------------------------------------------

def test_compliance_examples():
    assert check_compliance([I, I, I], I_IDLE).compliant
    r = check_compliance([I, F, I], I_IDLE)
    assert not r.compliant
    assert [(v.step, v.action, v.kind) for v in r.violations] == [(1, F, UNCOMMITTED_ACTION_USED)]
    r = check_compliance([I] * 20, I_LANE_LEFT)
    assert [(v.step, v.action, v.kind) for v in r.violations] == [(None, LL, COMMITTED_ACTION_UNUSED)]


def test_compliance_requires_trace():
    with pytest.raises(ValueError):
        check_compliance([], I_IDLE)


def test_compliance_flags_both_kinds():
    r = check_compliance([I, S, I], I_FASTER)
    kinds = sorted(v.kind for v in r.violations)
    assert kinds == [COMMITTED_ACTION_UNUSED, UNCOMMITTED_ACTION_USED]
    assert r.compliant == (len(r.violations) == 0)
