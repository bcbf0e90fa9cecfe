# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled simulation kernels.

Operation-for-operation mirror of ``intentmerge._kernels_py``; keep the two
in lockstep. Built without FP contraction so results match the fallback bit
for bit.
"""
from libc.math cimport sqrt, sqrtf, pow, fabs, fabsf, sin, cos, tan, atan, asin, M_PI

cdef double SPEED_EPS = 1e-6
cdef double GAP_FLOOR = 0.01


cdef inline double _idm(double ego_speed, double gap, double leader_speed, bint has_leader,
                        double v0, double T, double s0, double a, double b, double delta,
                        double a_max) noexcept nogil:
    cdef double acc = a * (1.0 - pow(ego_speed / v0, delta))
    cdef double dv, inner, s_star
    if has_leader:
        dv = ego_speed - leader_speed
        inner = ego_speed * T + ego_speed * dv / (2.0 * sqrt(a * b))
        if inner < 0.0:
            inner = 0.0
        s_star = s0 + inner
        acc = acc - a * pow(s_star / gap, 2.0)
    if acc < -2.0 * b:
        acc = -2.0 * b
    if acc > a_max:
        acc = a_max
    return acc


cdef inline double _speed_cmd(double speed, double target_speed, double kp,
                              double a_max) noexcept nogil:
    cdef double acc = kp * (target_speed - speed)
    if acc > a_max:
        acc = a_max
    if acc < -a_max:
        acc = -a_max
    return acc


cdef inline double _steer_cmd(double y, double heading, double speed, double length,
                              double target_y, double k_lat, double k_head,
                              double delta_max) noexcept nogil:
    cdef double v = speed if speed > SPEED_EPS else SPEED_EPS
    cdef double lat_speed = k_lat * (target_y - y)
    cdef double ratio = lat_speed / v
    cdef double heading_cmd, rate, sin_slip, steer
    if ratio > 1.0:
        ratio = 1.0
    if ratio < -1.0:
        ratio = -1.0
    heading_cmd = asin(ratio)
    if heading_cmd > M_PI / 4.0:
        heading_cmd = M_PI / 4.0
    if heading_cmd < -M_PI / 4.0:
        heading_cmd = -M_PI / 4.0
    rate = k_head * (heading_cmd - heading)
    sin_slip = length * rate / v
    if sin_slip > 1.0:
        sin_slip = 1.0
    if sin_slip < -1.0:
        sin_slip = -1.0
    steer = atan(2.0 * tan(asin(sin_slip)))
    if steer > delta_max:
        steer = delta_max
    if steer < -delta_max:
        steer = -delta_max
    return steer


cdef inline void _bicycle(double* x, double* y, double* heading, double* speed,
                          double length, double acc, double steer, double dt) noexcept nogil:
    cdef double beta = atan(0.5 * tan(steer))
    cdef double x0 = x[0]
    cdef double y0 = y[0]
    cdef double h0 = heading[0]
    cdef double v0 = speed[0]
    cdef double nv
    x[0] = x0 + v0 * cos(h0 + beta) * dt
    y[0] = y0 + v0 * sin(h0 + beta) * dt
    heading[0] = h0 + (v0 / length) * sin(beta) * dt
    nv = v0 + acc * dt
    if nv < 0.0:
        nv = 0.0
    speed[0] = nv


cdef inline bint _overlap(double x1, double y1, double h1, double l1, double w1,
                          double x2, double y2, double h2, double l2, double w2) noexcept nogil:
    cdef double c1 = cos(h1)
    cdef double s1 = sin(h1)
    cdef double c2 = cos(h2)
    cdef double s2 = sin(h2)
    cdef double dx = x2 - x1
    cdef double dy = y2 - y1
    cdef double axs[4]
    cdef double ays[4]
    cdef double ax, ay, r1, r2
    cdef int k
    axs[0] = c1
    ays[0] = s1
    axs[1] = -s1
    ays[1] = c1
    axs[2] = c2
    ays[2] = s2
    axs[3] = -s2
    ays[3] = c2
    for k in range(4):
        ax = axs[k]
        ay = ays[k]
        r1 = 0.5 * l1 * fabs(c1 * ax + s1 * ay) + 0.5 * w1 * fabs(-s1 * ax + c1 * ay)
        r2 = 0.5 * l2 * fabs(c2 * ax + s2 * ay) + 0.5 * w2 * fabs(-s2 * ax + c2 * ay)
        if fabs(dx * ax + dy * ay) >= r1 + r2:
            return False
    return True


cdef inline long long _locate(double x, double y, long long n_hw, double lane_width,
                              double ramp_end) noexcept nogil:
    cdef long long best = 0
    cdef double best_d = fabs(y)
    cdef double d
    cdef long long k
    for k in range(1, n_hw):
        d = fabs(y - k * lane_width)
        if d < best_d:
            best = k
            best_d = d
    if x <= ramp_end:
        d = fabs(y - n_hw * lane_width)
        if d < best_d:
            best = n_hw
    return best


cdef inline long long _leader(Py_ssize_t i, long long lane, double[::1] xs, double[::1] ys,
                              long long[::1] target_lane, unsigned char[::1] exited,
                              Py_ssize_t n, double lane_width, double margin,
                              double* out_dx) noexcept nogil:
    cdef double cy = lane * lane_width
    cdef double half = 0.5 * lane_width + margin
    cdef long long best = -1
    cdef double best_dx = 0.0
    cdef double dx
    cdef Py_ssize_t j
    for j in range(n):
        if j == i or exited[j]:
            continue
        if not (fabs(ys[j] - cy) < half or target_lane[j] == lane):
            continue
        dx = xs[j] - xs[i]
        if dx <= 0.0:
            continue
        if best < 0 or dx < best_dx:
            best = j
            best_dx = dx
    out_dx[0] = best_dx
    return best


def idm_accel(double ego_speed, double gap, double leader_speed, bint has_leader,
              double v0, double T, double s0, double a, double b, double delta, double a_max):
    """Intelligent Driver Model acceleration, clamped to [-2b, a_max]."""
    return _idm(ego_speed, gap, leader_speed, has_leader, v0, T, s0, a, b, delta, a_max)


def speed_command(double speed, double target_speed, double kp, double a_max):
    return _speed_cmd(speed, target_speed, kp, a_max)


def steering_command(double y, double heading, double speed, double length, double target_y,
                     double k_lat, double k_head, double delta_max):
    """Cascade lateral controller: position -> lateral speed -> heading -> steering."""
    return _steer_cmd(y, heading, speed, length, target_y, k_lat, k_head, delta_max)


def bicycle_step(double x, double y, double heading, double speed, double length,
                 double acc, double steer, double dt):
    """One explicit-Euler step of the kinematic bicycle model."""
    _bicycle(&x, &y, &heading, &speed, length, acc, steer, dt)
    return x, y, heading, speed


def boxes_overlap(double x1, double y1, double h1, double l1, double w1,
                  double x2, double y2, double h2, double l2, double w2):
    """Separating-axis test for two oriented rectangles (open sets)."""
    return _overlap(x1, y1, h1, l1, w1, x2, y2, h2, l2, w2)


def lane_center_y(long long lane, double lane_width):
    return lane * lane_width


def locate(double x, double y, long long n_hw, double lane_width, double ramp_end):
    """Nearest existing lane to ``y`` at ``x``; the ramp has index ``n_hw``."""
    return _locate(x, y, n_hw, lane_width, ramp_end)


def simulate_ticks(double[::1] x, double[::1] y, double[::1] heading, double[::1] speed,
                   double[::1] length, double[::1] width, double[::1] target_speed,
                   long long[::1] lane, long long[::1] target_lane,
                   unsigned char[::1] is_human, unsigned char[::1] crashed,
                   unsigned char[::1] exited, unsigned char[::1] immune_to_ego,
                   int n_ticks, double dt, long long n_hw, double lane_width,
                   double ramp_end, double road_end, double margin,
                   double kp, double k_lat, double k_head, double a_max, double delta_max,
                   double v0, double T, double s0, double a, double b, double delta):
    """Advance all vehicles ``n_ticks`` ticks in place."""
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t i, j
    cdef int tick
    cdef long long ldr
    cdef double dx, gap, acc_i, alt, reach
    cdef double[::1] acc = _zeros(n)
    cdef double[::1] st = _zeros(n)
    with nogil:
        for tick in range(n_ticks):
            for i in range(n):
                if crashed[i] or exited[i]:
                    continue
                if is_human[i]:
                    ldr = _leader(i, lane[i], x, y, target_lane, exited, n, lane_width, margin, &dx)
                    if ldr >= 0:
                        gap = dx - 0.5 * (length[i] + length[ldr])
                        if gap < GAP_FLOOR:
                            gap = GAP_FLOOR
                        acc_i = _idm(speed[i], gap, speed[ldr], True, v0, T, s0, a, b, delta, a_max)
                    else:
                        acc_i = _idm(speed[i], 1.0, 0.0, False, v0, T, s0, a, b, delta, a_max)
                    if target_lane[i] != lane[i]:
                        ldr = _leader(i, target_lane[i], x, y, target_lane, exited, n,
                                      lane_width, margin, &dx)
                        if ldr >= 0:
                            gap = dx - 0.5 * (length[i] + length[ldr])
                            if gap < GAP_FLOOR:
                                gap = GAP_FLOOR
                            alt = _idm(speed[i], gap, speed[ldr], True, v0, T, s0, a, b, delta,
                                       a_max)
                            if alt < acc_i:
                                acc_i = alt
                    acc[i] = acc_i
                else:
                    acc[i] = _speed_cmd(speed[i], target_speed[i], kp, a_max)
                st[i] = _steer_cmd(y[i], heading[i], speed[i], length[i],
                                   target_lane[i] * lane_width, k_lat, k_head, delta_max)
            for i in range(n):
                if crashed[i] or exited[i]:
                    continue
                _bicycle(&x[i], &y[i], &heading[i], &speed[i], length[i], acc[i], st[i], dt)
                if lane[i] == n_hw and x[i] >= ramp_end:
                    if fabs(y[i] - n_hw * lane_width) < fabs(y[i] - (n_hw - 1) * lane_width):
                        crashed[i] = 1
                        speed[i] = 0.0
                        continue
                if x[i] > road_end:
                    exited[i] = 1
                    continue
                lane[i] = _locate(x[i], y[i], n_hw, lane_width, ramp_end)
            for i in range(n):
                if exited[i]:
                    continue
                for j in range(i + 1, n):
                    if exited[j] or (crashed[i] and crashed[j]):
                        continue
                    reach = 0.5 * (length[i] + width[i] + length[j] + width[j])
                    if fabs(x[j] - x[i]) >= reach or fabs(y[j] - y[i]) >= reach:
                        continue
                    if _overlap(x[i], y[i], heading[i], length[i], width[i],
                                x[j], y[j], heading[j], length[j], width[j]):
                        if not (i == 0 and immune_to_ego[j]):
                            crashed[j] = 1
                            speed[j] = 0.0
                        crashed[i] = 1
                        speed[i] = 0.0


def adam_update(float[::1] params, float[::1] grad, float[::1] m, float[::1] v,
                double beta1, double beta2, double eps, double lr, long long t,
                double flush_tiny):
    """In-place fused Adam step on float32 arrays; zeroes moments below ``flush_tiny`` when > 0."""
    cdef Py_ssize_t n = params.shape[0]
    cdef Py_ssize_t i
    cdef double bc1 = 1.0 - pow(beta1, <double>t)
    cdef double bc2 = 1.0 - pow(beta2, <double>t)
    cdef float b1 = <float>beta1
    cdef float b2 = <float>beta2
    cdef float c1 = <float>(1.0 - beta1)
    cdef float c2 = <float>(1.0 - beta2)
    cdef float inv = <float>(1.0 / sqrt(bc2))
    cdef float e = <float>eps
    cdef float step = <float>(lr / bc1)
    cdef float tiny = <float>flush_tiny
    cdef bint flush = flush_tiny > 0
    cdef float g, mi, vi, d
    if grad.shape[0] != n or m.shape[0] != n or v.shape[0] != n:
        raise ValueError("array lengths differ")
    with nogil:
        for i in range(n):
            g = grad[i]
            mi = m[i] * b1
            mi = mi + g * c1
            vi = v[i] * b2
            vi = vi + (g * g) * c2
            d = sqrtf(vi) * inv
            d = d + e
            d = mi / d
            params[i] = params[i] - d * step
            if flush:
                if fabsf(mi) < tiny:
                    mi = 0.0
                if fabsf(vi) < tiny:
                    vi = 0.0
            m[i] = mi
            v[i] = vi


cdef double[::1] _zeros(Py_ssize_t n):
    import numpy as np
    return np.zeros(n, dtype=np.float64)
