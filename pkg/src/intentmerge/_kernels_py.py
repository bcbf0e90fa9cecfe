"""Pure-Python simulation kernels.

This module is the reference implementation of the per-tick physics. The
compiled module ``intentmerge._kernels`` mirrors every function here
operation-for-operation so the two backends produce identical floats.
"""
import math

SPEED_EPS = 1e-6
GAP_FLOOR = 0.01


def idm_accel(ego_speed, gap, leader_speed, has_leader,
              v0, T, s0, a, b, delta, a_max):
    """Intelligent Driver Model acceleration, clamped to [-2b, a_max]."""
    acc = a * (1.0 - (ego_speed / v0) ** delta)
    if has_leader:
        dv = ego_speed - leader_speed
        s_star = s0 + max(0.0, ego_speed * T + ego_speed * dv / (2.0 * math.sqrt(a * b)))
        acc = acc - a * (s_star / gap) ** 2
    if acc < -2.0 * b:
        acc = -2.0 * b
    if acc > a_max:
        acc = a_max
    return acc


def speed_command(speed, target_speed, kp, a_max):
    acc = kp * (target_speed - speed)
    if acc > a_max:
        acc = a_max
    if acc < -a_max:
        acc = -a_max
    return acc


def steering_command(y, heading, speed, length, target_y,
                     k_lat, k_head, delta_max):
    """Cascade lateral controller: position -> lateral speed -> heading -> steering."""
    v = speed if speed > SPEED_EPS else SPEED_EPS
    lat_speed = k_lat * (target_y - y)
    ratio = lat_speed / v
    if ratio > 1.0:
        ratio = 1.0
    if ratio < -1.0:
        ratio = -1.0
    heading_cmd = math.asin(ratio)
    if heading_cmd > math.pi / 4.0:
        heading_cmd = math.pi / 4.0
    if heading_cmd < -math.pi / 4.0:
        heading_cmd = -math.pi / 4.0
    rate = k_head * (heading_cmd - heading)
    sin_slip = length * rate / v
    if sin_slip > 1.0:
        sin_slip = 1.0
    if sin_slip < -1.0:
        sin_slip = -1.0
    steer = math.atan(2.0 * math.tan(math.asin(sin_slip)))
    if steer > delta_max:
        steer = delta_max
    if steer < -delta_max:
        steer = -delta_max
    return steer


def bicycle_step(x, y, heading, speed, length, acc, steer, dt):
    """One explicit-Euler step of the kinematic bicycle model."""
    beta = math.atan(0.5 * math.tan(steer))
    nx = x + speed * math.cos(heading + beta) * dt
    ny = y + speed * math.sin(heading + beta) * dt
    nh = heading + (speed / length) * math.sin(beta) * dt
    nv = speed + acc * dt
    if nv < 0.0:
        nv = 0.0
    return nx, ny, nh, nv


def boxes_overlap(x1, y1, h1, l1, w1, x2, y2, h2, l2, w2):
    """Separating-axis test for two oriented rectangles (open sets)."""
    c1 = math.cos(h1)
    s1 = math.sin(h1)
    c2 = math.cos(h2)
    s2 = math.sin(h2)
    dx = x2 - x1
    dy = y2 - y1
    axes = ((c1, s1), (-s1, c1), (c2, s2), (-s2, c2))
    for ax, ay in axes:
        r1 = 0.5 * l1 * abs(c1 * ax + s1 * ay) + 0.5 * w1 * abs(-s1 * ax + c1 * ay)
        r2 = 0.5 * l2 * abs(c2 * ax + s2 * ay) + 0.5 * w2 * abs(-s2 * ax + c2 * ay)
        if abs(dx * ax + dy * ay) >= r1 + r2:
            return False
    return True


def lane_center_y(lane, lane_width):
    return lane * lane_width


def locate(x, y, n_hw, lane_width, ramp_end):
    """Nearest existing lane to ``y`` at ``x``; the ramp has index ``n_hw``."""
    best = 0
    best_d = abs(y)
    for k in range(1, n_hw):
        d = abs(y - k * lane_width)
        if d < best_d:
            best = k
            best_d = d
    if x <= ramp_end:
        d = abs(y - n_hw * lane_width)
        if d < best_d:
            best = n_hw
    return best


def _leader(i, lane, xs, ys, lengths, speeds, target_lane, exited,
            n, lane_width, margin):
    cy = lane * lane_width
    half = 0.5 * lane_width + margin
    best = -1
    best_dx = 0.0
    for j in range(n):
        if j == i or exited[j]:
            continue
        if not (abs(ys[j] - cy) < half or target_lane[j] == lane):
            continue
        dx = xs[j] - xs[i]
        if dx <= 0.0:
            continue
        if best < 0 or dx < best_dx:
            best = j
            best_dx = dx
    return best, best_dx


def simulate_ticks(x, y, heading, speed, length, width, target_speed,
                   lane, target_lane, is_human, crashed, exited, immune_to_ego,
                   n_ticks, dt, n_hw, lane_width, ramp_end, road_end, margin,
                   kp, k_lat, k_head, a_max, delta_max,
                   v0, T, s0, a, b, delta):
    """Advance all vehicles ``n_ticks`` ticks in place.

    Arrays are numpy arrays (float64 for kinematics, int64 for lanes and
    uint8 for flags). Vehicle 0 is the ego; vehicles with ``immune_to_ego``
    set are not marked crashed by contact with it.
    """
    n = x.shape[0]
    xs = x.tolist()
    ys = y.tolist()
    hs = heading.tolist()
    vs = speed.tolist()
    ls = length.tolist()
    ws = width.tolist()
    tv = target_speed.tolist()
    ln = lane.tolist()
    tl = target_lane.tolist()
    hum = is_human.tolist()
    cr = crashed.tolist()
    ex = exited.tolist()
    imm = immune_to_ego.tolist()
    acc = [0.0] * n
    st = [0.0] * n
    for _ in range(n_ticks):
        for i in range(n):
            if cr[i] or ex[i]:
                continue
            if hum[i]:
                j, dx = _leader(i, ln[i], xs, ys, ls, vs, tl, ex, n, lane_width, margin)
                if j >= 0:
                    gap = dx - 0.5 * (ls[i] + ls[j])
                    if gap < GAP_FLOOR:
                        gap = GAP_FLOOR
                    acc_i = idm_accel(vs[i], gap, vs[j], True, v0, T, s0, a, b, delta, a_max)
                else:
                    acc_i = idm_accel(vs[i], 1.0, 0.0, False, v0, T, s0, a, b, delta, a_max)
                if tl[i] != ln[i]:
                    j, dx = _leader(i, tl[i], xs, ys, ls, vs, tl, ex, n, lane_width, margin)
                    if j >= 0:
                        gap = dx - 0.5 * (ls[i] + ls[j])
                        if gap < GAP_FLOOR:
                            gap = GAP_FLOOR
                        alt = idm_accel(vs[i], gap, vs[j], True, v0, T, s0, a, b, delta, a_max)
                        if alt < acc_i:
                            acc_i = alt
                acc[i] = acc_i
            else:
                acc[i] = speed_command(vs[i], tv[i], kp, a_max)
            st[i] = steering_command(ys[i], hs[i], vs[i], ls[i], tl[i] * lane_width,
                                     k_lat, k_head, delta_max)
        for i in range(n):
            if cr[i] or ex[i]:
                continue
            xs[i], ys[i], hs[i], vs[i] = bicycle_step(xs[i], ys[i], hs[i], vs[i], ls[i],
                                                      acc[i], st[i], dt)
            if ln[i] == n_hw and xs[i] >= ramp_end:
                if abs(ys[i] - n_hw * lane_width) < abs(ys[i] - (n_hw - 1) * lane_width):
                    cr[i] = 1
                    vs[i] = 0.0
                    continue
            if xs[i] > road_end:
                ex[i] = 1
                continue
            ln[i] = locate(xs[i], ys[i], n_hw, lane_width, ramp_end)
        for i in range(n):
            if ex[i]:
                continue
            for j in range(i + 1, n):
                if ex[j] or (cr[i] and cr[j]):
                    continue
                reach = 0.5 * (ls[i] + ws[i] + ls[j] + ws[j])
                if abs(xs[j] - xs[i]) >= reach or abs(ys[j] - ys[i]) >= reach:
                    continue
                if boxes_overlap(xs[i], ys[i], hs[i], ls[i], ws[i],
                                 xs[j], ys[j], hs[j], ls[j], ws[j]):
                    if not (i == 0 and imm[j]):
                        cr[j] = 1
                        vs[j] = 0.0
                    cr[i] = 1
                    vs[i] = 0.0
    x[:] = xs
    y[:] = ys
    heading[:] = hs
    speed[:] = vs
    lane[:] = ln
    crashed[:] = cr
    exited[:] = ex


def adam_update(params, grad, m, v, beta1, beta2, eps, lr, t, flush_tiny):
    """In-place Adam step on float32 arrays; zeroes moments below ``flush_tiny`` when > 0.

    Every operation runs in float32, in the order the compiled kernel uses.
    """
    import numpy as np

    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    tmp = np.empty_like(params)
    m *= beta1
    np.multiply(grad, 1.0 - beta1, out=tmp)
    m += tmp
    v *= beta2
    np.multiply(grad, grad, out=tmp)
    tmp *= 1.0 - beta2
    v += tmp
    np.sqrt(v, out=tmp)
    tmp *= 1.0 / math.sqrt(bc2)
    tmp += eps
    np.divide(m, tmp, out=tmp)
    tmp *= lr / bc1
    params -= tmp
    if flush_tiny > 0:
        for x in (m, v):
            np.abs(x, out=tmp)
            np.putmask(x, tmp < flush_tiny, 0)
