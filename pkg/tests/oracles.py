"""Independent reference implementations used as test oracles.

These are written straight from the closed-form definitions and share no
code with the package.
"""
import math

import numpy as np


def idm(v, gap, v_lead, v0=30.0, T=1.5, s0=10.0, a=3.0, b=5.0, delta=4.0, a_max=5.0):
    free = 1.0 - (v / v0) ** delta
    if gap is None:
        acc = a * free
    else:
        s_star = s0 + max(0.0, v * T + v * (v - v_lead) / (2.0 * math.sqrt(a * b)))
        acc = a * (free - (s_star / gap) ** 2)
    return min(max(acc, -2.0 * b), a_max)


def bicycle(x, y, h, v, length, acc, steer, dt):
    beta = math.atan(math.tan(steer) / 2.0)
    return (x + v * math.cos(h + beta) * dt,
            y + v * math.sin(h + beta) * dt,
            h + v * math.sin(beta) / length * dt,
            max(0.0, v + acc * dt))


def rect_corners(x, y, h, length, width):
    c, s = math.cos(h), math.sin(h)
    return [(x + dx * c - dy * s, y + dx * s + dy * c)
            for dx, dy in ((length / 2, width / 2), (length / 2, -width / 2),
                           (-length / 2, -width / 2), (-length / 2, width / 2))]


def rects_intersect(r1, r2):
    """Open-set polygon intersection by brute-force projection onto every edge normal."""
    for poly in (r1, r2):
        for k in range(4):
            (x1, y1), (x2, y2) = poly[k], poly[(k + 1) % 4]
            nx, ny = y2 - y1, x1 - x2
            p1 = [px * nx + py * ny for px, py in r1]
            p2 = [px * nx + py * ny for px, py in r2]
            if max(p1) <= min(p2) + 1e-12 or max(p2) <= min(p1) + 1e-12:
                return False
    return True


# reward closed forms with the published constants
B_S, B_L, B_C, B_Q, B_F, B_R, B_E = 0.275, 0.1, -5.0, 2.0, 0.5, 0.5, -1.0
T_H, V_MIN, V_MAX, V_STAR = 1.2, 20.0, 30.0, 30.0


def r_speed(v):
    v = min(max(v, V_MIN), V_MAX)
    return B_S * (v - V_MIN) / (V_MAX - V_MIN)


def r_quick(t_m):
    return B_Q / t_m


def r_front(gap, v1):
    if gap is None:
        return 0.0
    return B_F * min(math.log(gap / (T_H * v1)), 0.0)


def r_rear(gap, v_rear):
    if gap is None:
        return 0.0
    return B_R * min(math.log(gap / (T_H * v_rear)), 0.0)


def r_eff(v1):
    return B_E * abs((V_STAR - v1) / V_STAR)


def value_iteration(P, R, terminal, gamma, iters=10000):
    """Q* for a deterministic MDP: P[s][a] next state, R[s][a] reward, terminal[s][a]."""
    n_s, n_a = len(P), len(P[0])
    Q = np.zeros((n_s, n_a))
    for _ in range(iters):
        V = Q.max(axis=1)
        Q = np.array([[R[s][a] + (0.0 if terminal[s][a] else gamma * V[P[s][a]])
                       for a in range(n_a)] for s in range(n_s)])
    return Q


class ToyMDP:
    """Two states, two actions, deterministic, one-hot observations.

    s0: a0 -> s1 (r=0), a1 -> end (r=0.5); s1: a0 -> end (r=1), a1 -> s0 (r=0).
    Episodes are cut after ``max_steps`` without being terminal.
    """

    P = [[1, 0], [0, 0]]
    R = [[0.0, 0.5], [1.0, 0.0]]
    TERMINAL = [[False, True], [True, False]]
    n_actions = 2

    def __init__(self, seed=0, max_steps=10):
        self.max_steps = max_steps
        self.s = 0
        self.k = 0

    def obs(self, s):
        o = np.zeros(2)
        o[s] = 1.0
        return o

    def reset(self):
        self.s, self.k = 0, 0
        return self.obs(0)

    def step(self, a):
        from intentmerge.learn import StepOutcome
        s = self.s
        r = self.R[s][a]
        term = self.TERMINAL[s][a]
        self.s = self.P[s][a]
        self.k += 1
        return StepOutcome(self.obs(self.s), r, term, (not term) and self.k >= self.max_steps)


def mobil_decide(ego, current, target, politeness=0.1, b_safe=2.0, a_threshold=0.2, length=5.0):
    """Brute-force MOBIL for one candidate lane, with IDM on bumper-to-bumper gaps.

    Vehicles need ``x`` and ``speed``; a target-lane vehicle within one length
    of the ego blocks the change outright.
    """
    def acc(f, lead):
        if lead is None:
            return idm(f.speed, None, 0.0)
        gap = lead.x - f.x - length
        return -10.0 if gap <= 0 else idm(f.speed, gap, lead.speed)

    def split(vs):
        ahead = [v for v in vs if v.x > ego.x]
        behind = [v for v in vs if v.x <= ego.x]
        return (min(ahead, key=lambda v: v.x) if ahead else None,
                max(behind, key=lambda v: v.x) if behind else None)

    if any(abs(v.x - ego.x) < length for v in target):
        return False
    lead, old_f = split(current)
    new_lead, new_f = split(target)
    gain = acc(ego, new_lead) - acc(ego, lead)
    new_f_delta = acc(new_f, ego) - acc(new_f, new_lead) if new_f else 0.0
    old_f_delta = acc(old_f, lead) - acc(old_f, ego) if old_f else 0.0
    safe = (acc(new_f, ego) if new_f else 0.0) >= -b_safe
    return safe and gain + politeness * (new_f_delta + old_f_delta) > a_threshold
