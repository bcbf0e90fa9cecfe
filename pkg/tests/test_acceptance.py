"""One test per acceptance criterion; each records a PASS/FAIL line.

Criteria 6 and 7 need ten full 40,000-step training runs. Trained checkpoints
are cached under ``.acceptance_cache/<key>`` (override the location with
``INTENTMERGE_ACCEPTANCE_CACHE``); the key hashes the experiment config and
the package sources, so any change to either retrains from scratch.
"""
import hashlib
import math
import os
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

import conftest
import oracles
import intentmerge
from intentmerge import config as config_mod
from intentmerge.behavior import (
    DEFAULT_TRIGGERS,
    IdmParams,
    MobilParams,
    SenderAssignment,
    idm_acceleration,
    mobil_decide,
)
from intentmerge.env import (
    EnvConfig,
    MergeEnv,
    MergeEvent,
    collision_reward,
    lane_reward,
    merge_reward,
    speed_reward,
)
from intentmerge.intent import I_IDLE, I_SLOWER
from intentmerge.learn import TrainConfig, evaluate, merge_env_factory, rollout, train
from intentmerge.qnet import QNetwork
from intentmerge.results import ResultsTable
from intentmerge.world import LaneRef, RoadGeometry, make_vehicle

# pinned tolerances and thresholds
REWARD_TOL = 1e-9
REWARD_RUNTIME = 1.0
COMPLIANCE_EPISODES = 10_000
COMPLIANCE_RUNTIME = 120.0
IDM_DRAWS = 1_000
IDM_TOL = 1e-9
MOBIL_CONFIGS = 10_000
ORACLE_RUNTIME = 30.0
GRAD_REL_TOL = 1e-4
TOY_Q_TOL = 1e-2
TOY_STEPS = 20_000
LEARNER_RUNTIME = 120.0
GRID_STEPS = 40_000
GRID_SEEDS = (0, 1, 2, 3, 4)
SHARED_CRASH_RATE = 0.0
MEAN_ROWS_MIN = 8
SE_ROWS_MIN = 7
FIG2_SEEDS_MIN = 4
FIG2_SLOWER_TRIGGER = 190.0


def record(n, ok, detail):
    conftest.ACCEPTANCE.append((n, bool(ok), detail))
    print(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


# --- 1. reward fidelity -----------------------------------------------------------

RH, LH, RAMP = LaneRef.highway(1), LaneRef.highway(0), LaneRef.ramp()
REWARD_CASES = [
    # (label, computed, expected)
    ("r_s v=20", lambda: speed_reward(20.0), 0.0),
    ("r_s v=30", lambda: speed_reward(30.0), 0.275),
    ("r_s v=25", lambda: speed_reward(25.0), 0.1375),
    ("r_s v=22.5", lambda: speed_reward(22.5), oracles.r_speed(22.5)),
    ("r_s v=15 clamps", lambda: speed_reward(15.0), 0.0),
    ("r_s v=33 clamps", lambda: speed_reward(33.0), 0.275),
    ("r_l rightmost", lambda: lane_reward(RH), 0.1),
    ("r_l leftmost", lambda: lane_reward(LH), 0.0),
    ("r_l ramp", lambda: lane_reward(RAMP), 0.0),
    ("r_c crash", lambda: collision_reward(True), -5.0),
    ("r_c no crash", lambda: collision_reward(False), 0.0),
    ("r_q t=8", lambda: merge_reward(MergeEvent(8.0, 30.0))[0], 0.25),
    ("r_q t=5", lambda: merge_reward(MergeEvent(5.0, 30.0))[0], oracles.r_quick(5.0)),
    ("r_q t=13", lambda: merge_reward(MergeEvent(13.0, 30.0))[0], oracles.r_quick(13.0)),
    ("r_f gap=36 v=30", lambda: merge_reward(MergeEvent(8.0, 30.0, front_gap=36.0))[1], 0.0),
    ("r_f gap=18 v=30", lambda: merge_reward(MergeEvent(8.0, 30.0, front_gap=18.0))[1],
     0.5 * math.log(0.5)),
    ("r_f gap=60 v=25", lambda: merge_reward(MergeEvent(8.0, 25.0, front_gap=60.0))[1], 0.0),
    ("r_f gap=7 v=27", lambda: merge_reward(MergeEvent(8.0, 27.0, front_gap=7.0))[1],
     oracles.r_front(7.0, 27.0)),
    ("r_f no front", lambda: merge_reward(MergeEvent(8.0, 27.0))[1], 0.0),
    ("r_r gap=12 v=28", lambda: merge_reward(MergeEvent(8.0, 30.0, rear_gap=12.0, rear_speed=28.0))[2],
     oracles.r_rear(12.0, 28.0)),
    ("r_r gap=40 v=28", lambda: merge_reward(MergeEvent(8.0, 30.0, rear_gap=40.0, rear_speed=28.0))[2],
     0.0),
    ("r_r no rear", lambda: merge_reward(MergeEvent(8.0, 30.0))[2], 0.0),
    ("r_e v=30", lambda: merge_reward(MergeEvent(8.0, 30.0))[3], 0.0),
    ("r_e v=24", lambda: merge_reward(MergeEvent(8.0, 24.0))[3], -0.2),
    ("r_e v=21.3", lambda: merge_reward(MergeEvent(8.0, 21.3))[3], oracles.r_eff(21.3)),
]


def test_criterion_1_reward_fidelity():
    t0 = time.perf_counter()
    bad = [(label, got, want) for label, f, want in REWARD_CASES
           if abs((got := f()) - want) > REWARD_TOL]
    elapsed = time.perf_counter() - t0
    record(1, not bad and len(REWARD_CASES) >= 20 and elapsed < REWARD_RUNTIME,
           f"{len(REWARD_CASES) - len(bad)}/{len(REWARD_CASES)} reward cases within "
           f"{REWARD_TOL:g} in {elapsed:.3f}s" + (f"; failing {bad}" if bad else ""))


# --- 2. intent compliance ------------------------------------------------------------

def test_criterion_2_intent_compliance():
    t0 = time.perf_counter()
    env = MergeEnv(EnvConfig(seed=2024))
    rng = np.random.default_rng(99)
    allowed = {name: set(ts) for name, ts in DEFAULT_TRIGGERS.items()}
    failures = []
    for ep in range(COMPLIANCE_EPISODES):
        env.reset()
        a = env.assignment
        while not env.done:
            env.step(int(rng.integers(5)))
        if not env.compliance().compliant:
            failures.append((ep, "non-compliant"))
            continue
        committed = a.intent.committed_action
        if committed is None:
            continue
        if a.trigger_x not in allowed[a.intent.name]:
            failures.append((ep, f"trigger {a.trigger_x}"))
        fired = [k for k, act in enumerate(env.sender_trace) if act is committed]
        first_past = next(k for k, x in enumerate(env.sender_positions) if x >= a.trigger_x)
        if fired != [first_past]:
            failures.append((ep, f"fired at {fired}, first step past trigger {first_past}"))
    elapsed = time.perf_counter() - t0
    record(2, not failures and elapsed < COMPLIANCE_RUNTIME,
           f"{COMPLIANCE_EPISODES - len(failures)}/{COMPLIANCE_EPISODES} episodes compliant, "
           f"each commitment fired once at its trigger, in {elapsed:.1f}s"
           + (f"; first failures {failures[:3]}" if failures else ""))


# --- 3. model oracles ------------------------------------------------------------------

def test_criterion_3_model_oracles():
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(IDM_DRAWS):
        p = IdmParams(v0=rng.uniform(10, 40), T=rng.uniform(0.5, 3), s0=rng.uniform(1, 15),
                      a=rng.uniform(0.5, 4), b=rng.uniform(1, 6), delta=float(rng.choice([2.0, 4.0])))
        v, vl, gap = rng.uniform(0, 40), rng.uniform(0, 40), rng.uniform(0.5, 200)
        lead = rng.random() < 0.8
        got = idm_acceleration(v, gap if lead else None, vl if lead else None, p)
        want = oracles.idm(v, gap if lead else None, vl, p.v0, p.T, p.s0, p.a, p.b, p.delta)
        worst = max(worst, abs(got - want))

    g = RoadGeometry()
    m = MobilParams()
    unsafe_changes = disagreements = unsafe_seen = 0
    for k in range(MOBIL_CONFIGS):
        ego = make_vehicle("ego", g, LaneRef.highway(1), 200.0, rng.uniform(15, 32))
        cur = [make_vehicle(f"c{j}", g, LaneRef.highway(1), 200 + rng.uniform(-80, 80),
                            rng.uniform(10, 32)) for j in range(rng.integers(0, 3))]
        cur = [v for v in cur if abs(v.x - 200) > 5.5]
        tgt = [make_vehicle(f"t{j}", g, LaneRef.highway(0), 200 + rng.uniform(-60, 60),
                            rng.uniform(10, 35)) for j in range(rng.integers(0, 3))]
        out = mobil_decide(ego, cur, tgt, IdmParams(), m)
        unsafe = out.new_follower_accel < -m.b_safe
        unsafe_seen += unsafe
        unsafe_changes += unsafe and out.change
        disagreements += out.change != oracles.mobil_decide(ego, cur, tgt, m.politeness,
                                                            m.b_safe, m.a_threshold)
    elapsed = time.perf_counter() - t0
    ok = worst <= IDM_TOL and unsafe_changes == 0 and disagreements == 0 and unsafe_seen > 0 \
        and elapsed < ORACLE_RUNTIME
    record(3, ok, f"IDM max error {worst:.2e} over {IDM_DRAWS} draws; MOBIL {unsafe_changes} unsafe "
                  f"changes in {MOBIL_CONFIGS} configs ({unsafe_seen} unsafe), {disagreements} "
                  f"oracle disagreements; {elapsed:.1f}s")


# --- 4. learner soundness -----------------------------------------------------------------

def _finite_difference_error():
    net = QNetwork((6, 16, 16, 5), np.float64).init(np.random.default_rng(4))
    net.biases[0][...] = 0.05
    rng = np.random.default_rng(5)
    x = rng.standard_normal((4, 6))
    dout = rng.standard_normal((4, 5))
    _, acts = net.forward_cached(x)
    g = net.backward(acts, dout)
    h = 1e-6
    num = np.empty_like(g)
    for i in range(net.params.size):
        old = net.params[i]
        net.params[i] = old + h
        up = float(np.sum(net.forward(x) * dout))
        net.params[i] = old - h
        down = float(np.sum(net.forward(x) * dout))
        net.params[i] = old
        num[i] = (up - down) / (2 * h)
    return float((np.abs(g - num) / np.maximum(np.abs(g) + np.abs(num), 1e-8)).max())


def test_criterion_4_learner_soundness():
    t0 = time.perf_counter()
    rel = _finite_difference_error()
    q_star = oracles.value_iteration(oracles.ToyMDP.P, oracles.ToyMDP.R,
                                     oracles.ToyMDP.TERMINAL, 0.95)
    cfg = replace(TrainConfig(), total_steps=TOY_STEPS, hidden=(64, 64), dtype="float64")
    net = train(lambda s: oracles.ToyMDP(s), cfg, 0).net
    q_err = float(np.abs(net.forward(np.eye(2)) - q_star).max())
    elapsed = time.perf_counter() - t0
    record(4, rel < GRAD_REL_TOL and q_err < TOY_Q_TOL and elapsed < LEARNER_RUNTIME,
           f"(a) gradient relative error {rel:.2e}; (b) toy MDP max|Q-Q*| {q_err:.2e} "
           f"after {TOY_STEPS} steps; {elapsed:.1f}s")


# --- 5. determinism ------------------------------------------------------------------------

def test_criterion_5_determinism():
    cfg = replace(TrainConfig(), total_steps=2500)
    env_cfg = EnvConfig()
    blobs, csvs = [], []
    for _ in range(2):
        net = train(merge_env_factory(env_cfg), cfg, 11).net
        blobs.append(net.to_bytes())
        csvs.append(ResultsTable.from_stats(evaluate([net], env_cfg)).to_csv())
    record(5, blobs[0] == blobs[1] and csvs[0] == csvs[1],
           f"two train+evaluate runs with seed 11: checkpoints "
           f"{'identical' if blobs[0] == blobs[1] else 'differ'}, evaluation CSV "
           f"{'identical' if csvs[0] == csvs[1] else 'differs'}")


# --- 6 and 7. the full grid ------------------------------------------------------------------

def _cache_dir(cfg: TrainConfig, env_cfg: EnvConfig) -> Path:
    h = hashlib.sha256()
    h.update(config_mod.dumps(config_mod.ExperimentConfig(env=env_cfg, train=cfg)).encode())
    src = Path(intentmerge.__file__).parent
    for p in sorted(src.glob("*.py")) + sorted(src.glob("*.pyx")):
        h.update(p.name.encode())
        h.update(p.read_bytes())
    root = os.environ.get("INTENTMERGE_ACCEPTANCE_CACHE",
                          Path(__file__).resolve().parent.parent / ".acceptance_cache")
    return Path(root) / h.hexdigest()[:16]


@pytest.fixture(scope="module")
def grid():
    cfg = replace(TrainConfig(), total_steps=GRID_STEPS, seeds=GRID_SEEDS)
    base = EnvConfig()
    cache = _cache_dir(cfg, base)
    cache.mkdir(parents=True, exist_ok=True)
    nets = {}
    for sharing in (True, False):
        env_cfg = replace(base, sharing=sharing)
        for seed in GRID_SEEDS:
            path = cache / f"model_{'on' if sharing else 'off'}_{seed}.bin"
            if not path.exists():
                net = train(merge_env_factory(env_cfg), cfg, seed).net
                tmp = path.with_suffix(".tmp")
                net.save(tmp)
                tmp.replace(path)
            nets[sharing, seed] = QNetwork.load(path)
    stats = {s: evaluate([nets[s, k] for k in GRID_SEEDS], replace(base, sharing=s))
             for s in (True, False)}
    return base, nets, stats


@pytest.mark.slow
def test_criterion_6_table_directions(grid):
    _, _, stats = grid
    on, off = stats[True], stats[False]
    rows = list(zip(on, off))
    crash_cells = [(a.intent, a.trigger) for a, _ in rows if a.crash_rate > SHARED_CRASH_RATE]
    mean_rows = sum(a.mean >= b.mean for a, b in rows)
    se_rows = sum(a.stderr <= b.stderr for a, b in rows)
    ok_a = not crash_cells
    ok_b = mean_rows >= MEAN_ROWS_MIN
    ok_c = se_rows >= SE_ROWS_MIN
    lines = "; ".join(f"{a.intent}/{a.trigger}: on {a.mean:.3f}±{a.stderr:.3f} ({a.crash_rate:.0f}%) "
                      f"off {b.mean:.3f}±{b.stderr:.3f} ({b.crash_rate:.0f}%)" for a, b in rows)
    print(lines)
    record(6, ok_a and ok_b and ok_c,
           f"(a) sharing crash cells {crash_cells or 'none'} [{'ok' if ok_a else 'fail'}]; "
           f"(b) mean on>=off in {mean_rows}/10 rows [{'ok' if ok_b else 'fail'}]; "
           f"(c) SE on<=off in {se_rows}/10 rows [{'ok' if ok_c else 'fail'}]")


@pytest.mark.slow
def test_criterion_7_figure2_positions(grid):
    base, nets, _ = grid
    env_cfg = replace(base, sharing=True)
    ahead = behind = 0
    detail = []
    for seed in GRID_SEEDS:
        net = nets[True, seed]
        slow = rollout(net, env_cfg, SenderAssignment(I_SLOWER, FIG2_SLOWER_TRIGGER), 12345)
        idle = rollout(net, env_cfg, SenderAssignment(I_IDLE), 12345)
        s_ok = slow.merge is not None and slow.merge_merger_x > slow.merge_sender_x
        i_ok = idle.merge is not None and idle.merge_merger_x < idle.merge_sender_x
        ahead += s_ok
        behind += i_ok
        detail.append(f"seed {seed}: SLOWER {'ahead' if s_ok else 'not ahead'}, "
                      f"IDLE {'behind' if i_ok else 'not behind'}")
    print("; ".join(detail))
    record(7, ahead >= FIG2_SEEDS_MIN and behind >= FIG2_SEEDS_MIN,
           f"SLOWER/{FIG2_SLOWER_TRIGGER:g} merges ahead of the sender in {ahead}/5 seeds, "
           f"IDLE merges behind in {behind}/5 seeds (need {FIG2_SEEDS_MIN})")
