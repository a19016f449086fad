"""Numba kernels for the Monte Carlo hot loops.

Everything here is a pure function of (masterSeed, tag, envIndex,
replicaIndex) words: per-replica streams are derived with the same hash
chain as `_rng.hash_words`, each replica writes only its own output slots,
and no kernel performs a floating-point reduction, so results are
bit-identical for any thread count.

Conventions shared with the rest of the package:

* walk steps are nearest-neighbour; under tilt theta the step e is drawn
  with probability exp(theta * e_1) / (2 d m) where m = (cosh theta + d-1)/d,
  and the importance weight of a path of T steps ending at x is
  exp(-theta * x_1 + T * log m) relative to the untilted walk;
* passage sums charge the occupied site at times 0..T-1, never the arrival
  site of the stopping step;
* tubes are open sets; a walk is censored the moment it steps outside;
* balls are Euclidean: exit of B(c, r) happens at the first site with
  squared distance to c strictly greater than r^2 for tau_r, and >= r^2 for
  the sigma stopping times (matching the defining inequalities).
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange, types
from numba.typed import Dict

U64 = np.uint64
_GOLDEN = U64(0x9E3779B97F4A7C15)
_MIX1 = U64(0xBF58476D1CE4E5B9)
_MIX2 = U64(0x94D049BB133111EB)
_SEED0 = U64(0xC2B2AE3D27D4EB4F)
_WORDMUL = U64(0xD6E8FEB86659FD93)
_U53 = 2.0 ** -53

EXIT_OK = 0
EXIT_TUBE = 1
EXIT_CAP = 2
EXIT_TABLE = 3


@njit(inline="always")
def _mix64(z):
    z = (z ^ (z >> U64(30))) * _MIX1
    z = (z ^ (z >> U64(27))) * _MIX2
    return z ^ (z >> U64(31))


@njit(inline="always")
def _hash_start(w0):
    return _mix64(U64(w0) ^ _SEED0)


@njit(inline="always")
def _hash_add(h, w):
    return _mix64((h + _GOLDEN) ^ (U64(w) * _WORDMUL))


@njit(inline="always")
def _stream4(master, tag, env_idx, replica):
    h = _hash_start(master)
    h = _hash_add(h, tag)
    h = _hash_add(h, env_idx)
    return _hash_add(h, replica)


@njit(inline="always")
def _next_u01(state):
    state = state + _GOLDEN
    return state, (_mix64(state) >> U64(11)) * _U53


@njit(inline="always")
def _env_u01(envseed, x, d):
    h = _hash_start(envseed)
    for j in range(d):
        h = _hash_add(h, x[j])
    return (h >> U64(11)) * _U53


@njit(inline="always")
def _sample_pot(code, p0, p1, cutoff, cmean, u):
    if code == 0:
        v = p0
    elif code == 1:
        v = p1 if u >= 1.0 - p0 else 0.0
    elif code == 2:
        v = -np.log1p(-u) / p0
    else:
        v = p1 * (1.0 - u) ** (-1.0 / p0)
    if v < cutoff:
        v = cmean
    return v


@njit(inline="always")
def _env_value(envseed, x, d, code, p0, p1, cutoff, cmean, ov_sites, ov_vals):
    for i in range(ov_sites.shape[0]):
        hit = True
        for j in range(d):
            if ov_sites[i, j] != x[j]:
                hit = False
                break
        if hit:
            return ov_vals[i]
    return _sample_pot(code, p0, p1, cutoff, cmean, _env_u01(envseed, x, d))


@njit(inline="always")
def _step(x, d, u, p_plus, p_cum2, inv_pt):
    if u < p_plus:
        x[0] += 1
        return
    if u < p_cum2:
        x[0] -= 1
        return
    k = int((u - p_cum2) * inv_pt)
    kmax = 2 * (d - 1)
    if k >= kmax:
        k = kmax - 1
    axis = 1 + (k >> 1)
    if k & 1:
        x[axis] -= 1
    else:
        x[axis] += 1


def step_probs(d: int, theta: float):
    """(p_plus, p_plus+p_minus, 1/p_transverse, log m(theta)) for the tilted step."""
    m = (np.cosh(theta) + d - 1.0) / d
    p_plus = np.exp(theta) / (2.0 * d * m)
    p_minus = np.exp(-theta) / (2.0 * d * m)
    p_t = 1.0 / (2.0 * d * m)
    return p_plus, p_plus + p_minus, 1.0 / p_t, np.log(m)


# ---------------------------------------------------------------------------
# passage kernels (quenched / annealed)


@njit(parallel=True, cache=True)
def quenched_passage(
    d, envseed, code, p0, p1, cutoff, cmean, ov_sites, ov_vals,
    lam, theta, p_plus, p_cum2, inv_pt, log_m,
    targets, back_b, halfw, step_cap,
    master, tag, env_idx, rep0, nrep,
):
    ntg = targets.shape[0]
    log_y = np.full((nrep, ntg), np.nan)
    t_hit = np.full((nrep, ntg), -1, np.int64)
    cens_logw = np.full(nrep, np.nan)
    exit_code = np.zeros(nrep, np.int8)
    for r in prange(nrep):
        state = _stream4(master, tag, env_idx, rep0 + r)
        x = np.zeros(d, np.int64)
        s_cost = 0.0
        t = 0
        ti = 0
        while ti < ntg:
            s_cost += lam * _env_value(envseed, x, d, code, p0, p1, cutoff, cmean,
                                       ov_sites, ov_vals)
            if t >= step_cap:
                exit_code[r] = EXIT_CAP
                cens_logw[r] = -s_cost - theta * x[0] + t * log_m
                break
            state, u = _next_u01(state)
            _step(x, d, u, p_plus, p_cum2, inv_pt)
            t += 1
            if x[0] <= -back_b:
                exit_code[r] = EXIT_TUBE
                cens_logw[r] = -s_cost - theta * x[0] + t * log_m
                break
            outside = False
            for j in range(1, d):
                if x[j] >= halfw or x[j] <= -halfw:
                    outside = True
            if outside:
                exit_code[r] = EXIT_TUBE
                cens_logw[r] = -s_cost - theta * x[0] + t * log_m
                break
            while ti < ntg and x[0] >= targets[ti]:
                log_y[r, ti] = -s_cost - theta * x[0] + t * log_m
                t_hit[r, ti] = t
                ti += 1
    return log_y, t_hit, cens_logw, exit_code


@njit(parallel=True, cache=True)
def annealed_passage(
    d, g_table, theta, p_plus, p_cum2, inv_pt, log_m,
    targets, back_b, halfw, step_cap,
    master, tag, env_idx, rep0, nrep,
):
    ntg = targets.shape[0]
    log_y = np.full((nrep, ntg), np.nan)
    t_hit = np.full((nrep, ntg), -1, np.int64)
    cens_logw = np.full(nrep, np.nan)
    exit_code = np.zeros(nrep, np.int8)
    bits = 63 // d
    off = np.int64(1) << (bits - 1)
    gmax = g_table.shape[0] - 1
    for r in prange(nrep):
        state = _stream4(master, tag, env_idx, rep0 + r)
        x = np.zeros(d, np.int64)
        counts = Dict.empty(types.int64, types.int64)
        s_cost = 0.0
        t = 0
        ti = 0
        dead = False
        while ti < ntg and not dead:
            key = np.int64(0)
            for j in range(d):
                cj = x[j] + off
                if cj < 0 or cj >= (np.int64(1) << bits):
                    dead = True
                key = (key << bits) | cj
            if dead:
                exit_code[r] = EXIT_TABLE
                cens_logw[r] = -s_cost - theta * x[0] + t * log_m
                break
            c = counts.get(key, np.int64(0))
            if c >= gmax:
                exit_code[r] = EXIT_TABLE
                cens_logw[r] = -s_cost - theta * x[0] + t * log_m
                break
            counts[key] = c + 1
            s_cost += g_table[c + 1] - g_table[c]
            if t >= step_cap:
                exit_code[r] = EXIT_CAP
                cens_logw[r] = -s_cost - theta * x[0] + t * log_m
                break
            state, u = _next_u01(state)
            _step(x, d, u, p_plus, p_cum2, inv_pt)
            t += 1
            if x[0] <= -back_b:
                exit_code[r] = EXIT_TUBE
                cens_logw[r] = -s_cost - theta * x[0] + t * log_m
                break
            outside = False
            for j in range(1, d):
                if x[j] >= halfw or x[j] <= -halfw:
                    outside = True
            if outside:
                exit_code[r] = EXIT_TUBE
                cens_logw[r] = -s_cost - theta * x[0] + t * log_m
                break
            while ti < ntg and x[0] >= targets[ti]:
                log_y[r, ti] = -s_cost - theta * x[0] + t * log_m
                t_hit[r, ti] = t
                ti += 1
    return log_y, t_hit, cens_logw, exit_code


# ---------------------------------------------------------------------------
# plain-walk kernels


@njit(parallel=True, cache=True)
def origin_visits(d, nsteps, master, tag, rep0, nrep):
    """Visits to the origin among times 0..nsteps (time 0 included)."""
    out = np.zeros(nrep, np.int64)
    two_d = U64(2 * d)
    for r in prange(nrep):
        state = _stream4(master, tag, np.int64(0), rep0 + r)
        x = np.zeros(d, np.int64)
        v = 1
        for _k in range(nsteps):
            state = state + _GOLDEN
            w = _mix64(state)
            dirn = int(w % two_d)
            axis = dirn >> 1
            if dirn & 1:
                x[axis] -= 1
            else:
                x[axis] += 1
            at0 = True
            for j in range(d):
                if x[j] != 0:
                    at0 = False
                    break
            if at0:
                v += 1
        out[r] = v
    return out


@njit(parallel=True, cache=True)
def hit_before_exit(d, target, r2, master, tag, rep0, nrep):
    """1 when the walk from 0 reaches `target` before its squared distance
    to 0 first exceeds r2."""
    out = np.zeros(nrep, np.uint8)
    two_d = U64(2 * d)
    for r in prange(nrep):
        state = _stream4(master, tag, np.int64(0), rep0 + r)
        x = np.zeros(d, np.int64)
        while True:
            state = state + _GOLDEN
            w = _mix64(state)
            dirn = int(w % two_d)
            axis = dirn >> 1
            if dirn & 1:
                x[axis] -= 1
            else:
                x[axis] += 1
            dist2 = np.int64(0)
            hit = True
            for j in range(d):
                dist2 += x[j] * x[j]
                if x[j] != target[j]:
                    hit = False
            if hit:
                out[r] = 1
                break
            if dist2 > r2:
                break
    return out


@njit(parallel=True, cache=True)
def visit_count(d, target, r2, master, tag, rep0, nrep):
    """Number of visits to `target` strictly before tau_r (walk from 0)."""
    out = np.zeros(nrep, np.int64)
    two_d = U64(2 * d)
    for r in prange(nrep):
        state = _stream4(master, tag, np.int64(0), rep0 + r)
        x = np.zeros(d, np.int64)
        n = 0
        while True:
            dist2 = np.int64(0)
            hit = True
            for j in range(d):
                dist2 += x[j] * x[j]
                if x[j] != target[j]:
                    hit = False
            if dist2 > r2:
                break
            if hit:
                n += 1
            state = state + _GOLDEN
            w = _mix64(state)
            dirn = int(w % two_d)
            axis = dirn >> 1
            if dirn & 1:
                x[axis] -= 1
            else:
                x[axis] += 1
        out[r] = n
    return out


@njit(parallel=True, cache=True)
def distinct_sites(d, r2, master, tag, rep0, nrep):
    """(#distinct sites occupied before tau_r, tau_r) per replica."""
    outn = np.zeros(nrep, np.int64)
    outt = np.zeros(nrep, np.int64)
    two_d = U64(2 * d)
    bits = 63 // d
    off = np.int64(1) << (bits - 1)
    for r in prange(nrep):
        state = _stream4(master, tag, np.int64(0), rep0 + r)
        x = np.zeros(d, np.int64)
        seen = Dict.empty(types.int64, types.int64)
        t = 0
        while True:
            dist2 = np.int64(0)
            for j in range(d):
                dist2 += x[j] * x[j]
            if dist2 > r2:
                break
            key = np.int64(0)
            for j in range(d):
                key = (key << bits) | (x[j] + off)
            seen[key] = np.int64(1)
            state = state + _GOLDEN
            w = _mix64(state)
            dirn = int(w % two_d)
            axis = dirn >> 1
            if dirn & 1:
                x[axis] -= 1
            else:
                x[axis] += 1
            t += 1
        outn[r] = len(seen)
        outt[r] = t
    return outn, outt


# ---------------------------------------------------------------------------
# forward-corridor events


@njit(parallel=True, cache=True)
def corridor_events(
    d, plane_level, win_lo2, win_hi2, win_half,
    tube_back, tube_lo2, tube_hi2, tube_half,
    deadline, sigma_r2, k_sigma, sigma_cap,
    theta, p_plus, p_cum2, inv_pt, log_m,
    master, tag, rep0, nrep,
):
    """Simultaneous time-clock / sigma-clock corridor events (d >= 2 only).

    A replica succeeds on the time clock when it visits a site with
    x_1 == plane_level, x_2 in (win_lo2, win_hi2) and |x_j| < win_half for
    j >= 3 within `deadline` steps, never having left the open tube
    x_1 > tube_back, x_2 in (tube_lo2, tube_hi2), |x_j| < tube_half.  The
    sigma-clock flag asks instead that fewer than k_sigma sigma times
    (exits of Euclidean balls of squared radius sigma_r2 around the previous
    sigma point) have elapsed at the hit.  Returns (time flag, sigma flag,
    importance log-weight at termination).
    """
    flag_a = np.zeros(nrep, np.uint8)
    flag_s = np.zeros(nrep, np.uint8)
    logw = np.zeros(nrep)
    for r in prange(nrep):
        state = _stream4(master, tag, np.int64(0), rep0 + r)
        x = np.zeros(d, np.int64)
        cx = np.zeros(d, np.int64)
        t = 0
        nsig = 0
        while True:
            if t > deadline and nsig >= k_sigma:
                break
            if t >= sigma_cap:
                break
            state, u = _next_u01(state)
            _step(x, d, u, p_plus, p_cum2, inv_pt)
            t += 1
            if x[0] <= tube_back or x[1] <= tube_lo2 or x[1] >= tube_hi2:
                break
            outside = False
            for j in range(2, d):
                if x[j] >= tube_half or x[j] <= -tube_half:
                    outside = True
            if outside:
                break
            ds2 = np.int64(0)
            for j in range(d):
                dj = x[j] - cx[j]
                ds2 += dj * dj
            if ds2 >= sigma_r2:
                nsig += 1
                for j in range(d):
                    cx[j] = x[j]
            if x[0] == plane_level and win_lo2 < x[1] < win_hi2:
                inwin = True
                for j in range(2, d):
                    if x[j] >= win_half or x[j] <= -win_half:
                        inwin = False
                if inwin:
                    if t <= deadline:
                        flag_a[r] = 1
                    if nsig < k_sigma:
                        flag_s[r] = 1
                    break
        logw[r] = -theta * x[0] + t * log_m
    return flag_a, flag_s, logw


# ---------------------------------------------------------------------------
# sigma-ball scans around a point (healthy / generic machinery)


@njit(parallel=True, cache=True)
def sigma_ball_scan(
    d, x0, envseed, code, p0, p1, cutoff, cmean, ov_sites, ov_vals,
    important_threshold, sigma_r2, outer_r2, inner_r2, heal_r2,
    step_cap, master, tag, rep0, nrep,
):
    """Walks from x0 until first exit of the outer ball.

    Records the sigma exit displacement (first site at squared distance
    >= sigma_r2 from x0), whether an important site within squared distance
    heal_r2 of x0 was occupied before sigma, and whether an important site
    in the annulus inner_r2 < |z-x0|^2 <= outer_r2 was occupied before the
    outer exit.  Sites are checked at every occupation, the start included.
    """
    exit_dx = np.zeros((nrep, d), np.int64)
    heal_hit = np.zeros(nrep, np.uint8)
    annulus_hit = np.zeros(nrep, np.uint8)
    done = np.zeros(nrep, np.uint8)
    for r in prange(nrep):
        state = _stream4(master, tag, np.int64(0), rep0 + r)
        dx = np.zeros(d, np.int64)
        ax = np.empty(d, np.int64)
        have_sigma = False
        t = 0
        while True:
            dist2 = np.int64(0)
            for j in range(d):
                dist2 += dx[j] * dx[j]
                ax[j] = x0[j] + dx[j]
            if not have_sigma and dist2 >= sigma_r2:
                have_sigma = True
                for j in range(d):
                    exit_dx[r, j] = dx[j]
            check_heal = (not have_sigma) and dist2 <= heal_r2
            check_ann = (dist2 > inner_r2) and (dist2 <= outer_r2)
            if check_heal or check_ann:
                v = _env_value(envseed, ax, d, code, p0, p1, cutoff, cmean,
                               ov_sites, ov_vals)
                if v >= important_threshold:
                    if check_heal:
                        heal_hit[r] = 1
                    if check_ann:
                        annulus_hit[r] = 1
            if dist2 > outer_r2:
                done[r] = 1
                break
            if t >= step_cap:
                break
            state = state + _GOLDEN
            w = _mix64(state)
            dirn = int(w % U64(2 * d))
            axis = dirn >> 1
            if dirn & 1:
                dx[axis] -= 1
            else:
                dx[axis] += 1
            t += 1
    return exit_dx, heal_hit, annulus_hit, done


# ---------------------------------------------------------------------------
# single recorded trajectory (mirrors quenched_passage step-for-step)


@njit(cache=True)
def record_trajectory(
    d, theta, p_plus, p_cum2, inv_pt,
    target_level, back_b, halfw, step_cap,
    master, tag, env_idx, replica,
):
    """Path X_0..X_T for one replica of the passage walk; same stream and
    stepping as the bulk kernels, so replica r is exactly reproducible.

    Returns (path, exit_code) where exit_code is EXIT_OK when the plane
    x_1 >= target_level was reached, else the censor reason.
    """
    path = np.zeros((step_cap + 1, d), np.int64)
    state = _stream4(master, tag, env_idx, replica)
    x = np.zeros(d, np.int64)
    t = 0
    code = EXIT_CAP
    while t < step_cap:
        state, u = _next_u01(state)
        _step(x, d, u, p_plus, p_cum2, inv_pt)
        t += 1
        for j in range(d):
            path[t, j] = x[j]
        if x[0] <= -back_b:
            code = EXIT_TUBE
            break
        outside = False
        for j in range(1, d):
            if x[j] >= halfw or x[j] <= -halfw:
                outside = True
        if outside:
            code = EXIT_TUBE
            break
        if x[0] >= target_level:
            code = EXIT_OK
            break
    return path[: t + 1], code
