"""Numba twin of the plan objective and the projected quasi-Newton loop.

This module mirrors the numpy implementations in :mod:`crowdmpc.mpc`
step for step; it exists purely so the per-iteration cost of the inner
solve is a few microseconds instead of a few hundred. ``mpc.solve_mpc``
falls back to the numpy loop when numba is unavailable, and the test
suite asserts both paths agree.
"""

from __future__ import annotations

import math

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(func):
            return func

        if len(args) == 1 and callable(args[0]):
            return args[0]
        return wrap


@njit(cache=True)
def _softplus_over_mu(z: float, x: float, mu: float) -> float:
    # smoothed hinge smax(x) with z = mu * x, safe for any magnitude
    if z > 0.0:
        return x + math.log1p(math.exp(-z)) / mu
    return math.log1p(math.exp(z)) / mu


@njit(cache=True)
def _sig(z: float) -> float:
    return 0.5 * (1.0 + math.tanh(0.5 * z))


@njit(cache=True)
def _eval(u, v0, ref, preds, u_prev, tau, d_min, rho, mu, v_max,
          w_goal, w_acce, w_jerk, w_coll, w_vel, want_grad, gu):
    """Objective value; fills ``gu`` with the plan gradient when asked."""
    horizon = u.shape[0]
    n_ped = preds.shape[1]
    pos = np.empty((horizon, 2))
    vel = np.empty((horizon, 2))
    px = 0.0
    py = 0.0
    vx = v0[0]
    vy = v0[1]
    for k in range(horizon):
        ax = u[k, 0]
        ay = u[k, 1]
        px += tau * vx + 0.5 * tau * tau * ax
        py += tau * vy + 0.5 * tau * tau * ay
        vx += tau * ax
        vy += tau * ay
        pos[k, 0] = px
        pos[k, 1] = py
        vel[k, 0] = vx
        vel[k, 1] = vy

    gs = np.zeros((horizon, 2))
    gv = np.zeros((horizon, 2))
    d_min2 = d_min * d_min
    f = 0.0
    for k in range(horizon):
        dxr = pos[k, 0] - ref[k, 0]
        dyr = pos[k, 1] - ref[k, 1]
        f += w_goal * (dxr * dxr + dyr * dyr)
        if want_grad:
            gs[k, 0] += 2.0 * w_goal * dxr
            gs[k, 1] += 2.0 * w_goal * dyr
        speed2 = vel[k, 0] * vel[k, 0] + vel[k, 1] * vel[k, 1]
        for n in range(n_ped):
            ddx = pos[k, 0] - preds[k, n, 0]
            ddy = pos[k, 1] - preds[k, n, 1]
            margin = d_min2 + rho * speed2 - (ddx * ddx + ddy * ddy)
            z = mu * margin
            f += w_coll * _softplus_over_mu(z, margin, mu)
            if want_grad:
                s = _sig(z)
                gs[k, 0] += -2.0 * w_coll * s * ddx
                gs[k, 1] += -2.0 * w_coll * s * ddy
                gv[k, 0] += 2.0 * rho * w_coll * s * vel[k, 0]
                gv[k, 1] += 2.0 * rho * w_coll * s * vel[k, 1]
        for axis in range(2):
            v = vel[k, axis]
            z_hi = mu * (v - v_max)
            z_lo = mu * (-v - v_max)
            f += w_vel * (
                _softplus_over_mu(z_hi, v - v_max, mu)
                + _softplus_over_mu(z_lo, -v - v_max, mu)
            )
            if want_grad:
                gv[k, axis] += w_vel * (_sig(z_hi) - _sig(z_lo))
        f += w_acce * (u[k, 0] * u[k, 0] + u[k, 1] * u[k, 1])

    prev_x = u_prev[0]
    prev_y = u_prev[1]
    for k in range(horizon):
        dx = u[k, 0] - prev_x
        dy = u[k, 1] - prev_y
        f += w_jerk * (dx * dx + dy * dy)
        prev_x = u[k, 0]
        prev_y = u[k, 1]

    if want_grad:
        for k in range(horizon):
            gu[k, 0] = 2.0 * w_acce * u[k, 0]
            gu[k, 1] = 2.0 * w_acce * u[k, 1]
            bx = u[k - 1, 0] if k > 0 else u_prev[0]
            by = u[k - 1, 1] if k > 0 else u_prev[1]
            dkx = u[k, 0] - bx
            dky = u[k, 1] - by
            if k < horizon - 1:
                dk1x = u[k + 1, 0] - u[k, 0]
                dk1y = u[k + 1, 1] - u[k, 1]
            else:
                dk1x = 0.0
                dk1y = 0.0
            gu[k, 0] += 2.0 * w_jerk * (dkx - dk1x)
            gu[k, 1] += 2.0 * w_jerk * (dky - dk1y)
        acc_sx = 0.0
        acc_sy = 0.0
        acc_vx = 0.0
        acc_vy = 0.0
        for k in range(horizon - 1, -1, -1):
            acc_vx = gv[k, 0] + tau * acc_sx + acc_vx
            acc_vy = gv[k, 1] + tau * acc_sy + acc_vy
            acc_sx = gs[k, 0] + acc_sx
            acc_sy = gs[k, 1] + acc_sy
            gu[k, 0] += 0.5 * tau * tau * acc_sx + tau * acc_vx
            gu[k, 1] += 0.5 * tau * tau * acc_sy + tau * acc_vy
    return f


@njit(cache=True)
def solve_loop(u0, v0, ref, preds, u_prev, box, tau, d_min, rho, mu, v_max,
               w_goal, w_acce, w_jerk, w_coll, w_vel, max_iter, grad_tol, mem_size):
    """Projected L-BFGS with monotone Armijo; mirrors the numpy loop in mpc.py.

    Returns (plan, objective, iterations, converged, history, history_len).
    """
    horizon = u0.shape[0]
    dim = 2 * horizon
    u = np.minimum(np.maximum(u0, -box), box)
    g = np.zeros((horizon, 2))
    scratch = np.zeros((horizon, 2))
    f = _eval(u, v0, ref, preds, u_prev, tau, d_min, rho, mu, v_max,
              w_goal, w_acce, w_jerk, w_coll, w_vel, True, g)
    history = np.empty(max_iter + 1)
    history[0] = f
    hist_len = 1

    s_mem = np.zeros((mem_size, dim))
    y_mem = np.zeros((mem_size, dim))
    rho_mem = np.zeros(mem_size)
    n_mem = 0

    gmax = 0.0
    for k in range(horizon):
        for a in range(2):
            if abs(g[k, a]) > gmax:
                gmax = abs(g[k, a])
    alpha_bb = 1.0 / (gmax + 1.0)

    direction = np.zeros((horizon, 2))
    q = np.zeros(dim)
    alphas = np.zeros(mem_size)
    iterations = 0
    converged = False
    stalled = 0

    for _ in range(max_iter):
        pgn = 0.0
        for k in range(horizon):
            for a in range(2):
                w = u[k, a] - min(max(u[k, a] - g[k, a], -box), box)
                pgn += w * w
        if math.sqrt(pgn) <= grad_tol:
            converged = True
            break

        # freeze coordinates pinned at the box with the gradient pushing out
        any_free = False
        for k in range(horizon):
            for a in range(2):
                pinned = (u[k, a] <= -box and g[k, a] > 0.0) or (
                    u[k, a] >= box and g[k, a] < 0.0
                )
                q[2 * k + a] = 0.0 if pinned else g[k, a]
                if not pinned and g[k, a] != 0.0:
                    any_free = True

        accepted = False
        u_new = u
        f_new = f
        if n_mem > 0 and any_free:
            # two-loop recursion on the masked gradient
            for m in range(n_mem - 1, -1, -1):
                a_m = rho_mem[m] * np.dot(s_mem[m], q)
                alphas[m] = a_m
                for i in range(dim):
                    q[i] -= a_m * y_mem[m][i]
            last = n_mem - 1
            gamma = 1.0 / (rho_mem[last] * np.dot(y_mem[last], y_mem[last]))
            for i in range(dim):
                q[i] *= gamma
            for m in range(n_mem):
                b_m = rho_mem[m] * np.dot(y_mem[m], q)
                for i in range(dim):
                    q[i] += (alphas[m] - b_m) * s_mem[m][i]
            ddotg = 0.0
            for k in range(horizon):
                for a in range(2):
                    i = 2 * k + a
                    pinned = (u[k, a] <= -box and g[k, a] > 0.0) or (
                        u[k, a] >= box and g[k, a] < 0.0
                    )
                    direction[k, a] = 0.0 if pinned else -q[i]
                    ddotg += direction[k, a] * g[k, a]
            if ddotg < 0.0:
                t = 1.0
                for _ls in range(40):
                    u_try = np.minimum(np.maximum(u + t * direction, -box), box)
                    dec = 0.0
                    for k in range(horizon):
                        for a in range(2):
                            dec += g[k, a] * (u_try[k, a] - u[k, a])
                    if dec >= 0.0:
                        break
                    f_try = _eval(u_try, v0, ref, preds, u_prev, tau, d_min, rho, mu,
                                  v_max, w_goal, w_acce, w_jerk, w_coll, w_vel,
                                  False, scratch)
                    if np.isfinite(f_try) and f_try <= f + 1e-4 * dec:
                        accepted = True
                        u_new = u_try
                        f_new = f_try
                        break
                    t *= 0.5
        if not accepted:
            t = min(max(alpha_bb, 1e-14), 1e2)
            for _ls in range(40):
                u_try = np.minimum(np.maximum(u - t * g, -box), box)
                dec = 0.0
                for k in range(horizon):
                    for a in range(2):
                        dec += g[k, a] * (u_try[k, a] - u[k, a])
                if dec >= 0.0:
                    break
                f_try = _eval(u_try, v0, ref, preds, u_prev, tau, d_min, rho, mu,
                              v_max, w_goal, w_acce, w_jerk, w_coll, w_vel,
                              False, scratch)
                if np.isfinite(f_try) and f_try <= f + 1e-4 * dec:
                    accepted = True
                    u_new = u_try
                    f_new = f_try
                    break
                t *= 0.5
        if not accepted:
            break

        g_new = np.zeros((horizon, 2))
        f_new = _eval(u_new, v0, ref, preds, u_prev, tau, d_min, rho, mu, v_max,
                      w_goal, w_acce, w_jerk, w_coll, w_vel, True, g_new)
        ss = 0.0
        yy = 0.0
        sy = 0.0
        for k in range(horizon):
            for a in range(2):
                sk = u_new[k, a] - u[k, a]
                yk = g_new[k, a] - g[k, a]
                ss += sk * sk
                yy += yk * yk
                sy += sk * yk
        if sy > 1e-12 * math.sqrt(ss * yy):
            if n_mem == mem_size:
                for m in range(mem_size - 1):
                    s_mem[m] = s_mem[m + 1]
                    y_mem[m] = y_mem[m + 1]
                    rho_mem[m] = rho_mem[m + 1]
                n_mem -= 1
            for k in range(horizon):
                for a in range(2):
                    i = 2 * k + a
                    s_mem[n_mem][i] = u_new[k, a] - u[k, a]
                    y_mem[n_mem][i] = g_new[k, a] - g[k, a]
            rho_mem[n_mem] = 1.0 / sy
            n_mem += 1
            alpha_bb = ss / sy
        else:
            gmax = 0.0
            for k in range(horizon):
                for a in range(2):
                    if abs(g_new[k, a]) > gmax:
                        gmax = abs(g_new[k, a])
            alpha_bb = 1.0 / (gmax + 1.0)
        # objective-stall stop, mirrored from the reference loop
        if f - f_new <= 1e-8 * max(1.0, abs(f_new)):
            stalled += 1
        else:
            stalled = 0
        u = u_new
        f = f_new
        g = g_new
        history[hist_len] = f
        hist_len += 1
        iterations += 1
        if stalled >= 10:
            converged = True
            break

    return u, f, iterations, converged, history, hist_len
