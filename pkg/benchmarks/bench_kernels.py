"""Compare the compiled and pure-Python kernels.

    python3 benchmarks/bench_kernels.py [--ticks 1500] [--repeat 5]

Runs the same traffic scene through both simulation backends, then the Adam
update on a parameter vector the size of the default Q-network. Checks the
results agree bit for bit and reports throughput for each.
"""
import argparse
import time

import numpy as np

from intentmerge import _kernels_py
from intentmerge.env import EnvConfig, MergeEnv

try:
    from intentmerge import _kernels as _kernels_c
except ImportError:
    _kernels_c = None


def scene():
    env = MergeEnv(EnvConfig(seed=3))
    env.reset()
    cfg = env.config
    g = cfg.geometry
    vs = env.world.vehicles
    arrays = {
        "x": np.array([v.x for v in vs]), "y": np.array([v.y for v in vs]),
        "heading": np.zeros(len(vs)), "speed": np.array([v.speed for v in vs]),
        "length": np.array([v.length for v in vs]), "width": np.array([v.width for v in vs]),
        "target_speed": np.array([v.target_speed for v in vs]),
        "lane": np.array([g.lane_code(v.lane) for v in vs], dtype=np.int64),
        "target_lane": np.array([g.lane_code(v.target_lane) for v in vs], dtype=np.int64),
        "is_human": np.array([0, 0] + [1] * (len(vs) - 2), dtype=np.uint8),
        "crashed": np.zeros(len(vs), dtype=np.uint8),
        "exited": np.zeros(len(vs), dtype=np.uint8),
        "immune_to_ego": np.array([0, 1] + [0] * (len(vs) - 2), dtype=np.uint8),
    }
    arrays["target_lane"][0] = 1
    gains, idm = cfg.gains, cfg.idm
    params = (cfg.dt_sim, g.highway_lane_count, g.lane_width, g.ramp_end, g.road_end,
              cfg.lane_margin, gains.k_speed, gains.k_lateral, gains.k_heading, gains.a_cmd_max,
              gains.steering_max, idm.v0, idm.T, idm.s0, idm.a, idm.b, idm.delta)
    return arrays, params


def run(mod, ticks, repeat):
    best = float("inf")
    for _ in range(repeat):
        arrays, params = scene()
        a = {k: v.copy() for k, v in arrays.items()}
        t0 = time.perf_counter()
        for _ in range(ticks // 15):
            mod.simulate_ticks(*a.values(), 15, *params)
        best = min(best, time.perf_counter() - t0)
    return best, a


def run_adam(mod, n, steps, repeat):
    rng = np.random.default_rng(0)
    grads = [rng.standard_normal(n).astype(np.float32) * 1e-2 for _ in range(4)]
    best = float("inf")
    for _ in range(repeat):
        p = rng.standard_normal(n).astype(np.float32)
        m, v = np.zeros_like(p), np.zeros_like(p)
        t0 = time.perf_counter()
        for t in range(1, steps + 1):
            mod.adam_update(p, grads[t % 4], m, v, 0.9, 0.999, 1e-8, 5e-4, t,
                            1e-30 if t % 16 == 0 else 0.0)
        best = min(best, time.perf_counter() - t0)
    return best, p


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--ticks", type=int, default=1500)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    t_py, out_py = run(_kernels_py, args.ticks, args.repeat)
    print(f"python : {args.ticks / t_py:12.0f} ticks/s")
    if _kernels_c is None:
        print("cython : extension not built")
        return
    t_c, out_c = run(_kernels_c, args.ticks, args.repeat)
    same = all(np.array_equal(out_py[k], out_c[k]) for k in out_py)
    print(f"cython : {args.ticks / t_c:12.0f} ticks/s")
    print(f"speedup: {t_py / t_c:.1f}x   identical results: {same}")

    n = sum(i * o + o for i, o in ((29, 512), (512, 512), (512, 5)))
    steps = 200
    a_py, p_py = run_adam(_kernels_py, n, steps, args.repeat)
    a_c, p_c = run_adam(_kernels_c, n, steps, args.repeat)
    print(f"adam numpy : {1e3 * a_py / steps:8.3f} ms/step ({n} params)")
    print(f"adam cython: {1e3 * a_c / steps:8.3f} ms/step")
    print(f"speedup: {a_py / a_c:.1f}x   identical results: {np.array_equal(p_py, p_c)}")


if __name__ == "__main__":
    main()
