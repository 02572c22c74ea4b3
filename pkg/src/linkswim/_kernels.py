"""Compiled numerical kernels for the swimmer dynamics and policy rollouts.

Everything in here operates on plain float64 arrays so that numba can compile
it. The public modules (:mod:`linkswim.dynamics`, :mod:`linkswim.environment`,
...) wrap these kernels in typed value objects; tests cross-check both layers.

If numba is unavailable the kernels fall back to pure Python. They stay
correct but become far too slow for training-scale workloads.
"""

from __future__ import annotations

import math

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - exercised only without numba
    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]):
            return args[0]

        def deco(fn):
            return fn

        return deco


LINK_LENGTH = 1.0 / 3.0
ALPHA_LIMIT = 2.0 * math.pi / 3.0
GAMMA_DEFAULT = 0.5
COND_LIMIT = 1e12

# status codes returned by the stepping kernels
OK = 0
SINGULAR = 1
ILL_CONDITIONED = 2


@njit(cache=True)
def reconstruct_into(s, x3, y3, th3):
    """Fill link left-end coordinates and orientations from the reduced state.

    s = (x1, y1, theta1, theta2, theta3); the chain closure x_{i+1} = x_i +
    l cos(theta_i) is applied exactly, never integrated.
    """
    x3[0] = s[0]
    y3[0] = s[1]
    th3[0] = s[2]
    th3[1] = s[3]
    th3[2] = s[4]
    for i in range(2):
        x3[i + 1] = x3[i] + LINK_LENGTH * math.cos(th3[i])
        y3[i + 1] = y3[i] + LINK_LENGTH * math.sin(th3[i])


@njit(cache=True)
def assemble_into(x3, y3, th3, a1dot, a2dot, gamma, H, q):
    """Populate the 9x9 mobility matrix H and right-hand side q.

    Unknown ordering: (xdot1..3, ydot1..3, thetadot1..3). Rows 0-2 are the
    force-x, force-y, and torque balances; rows 3-8 the kinematic constraints.
    """
    for r in range(9):
        q[r] = 0.0
        for c in range(9):
            H[r, c] = 0.0

    for i in range(3):
        ci = math.cos(th3[i])
        si = math.sin(th3[i])
        s2 = 2.0 * si * ci
        c2 = ci * ci - si * si
        xi = x3[i]
        yi = y3[i]

        H[0, i] = -(gamma * ci * ci + si * si) / 3.0
        H[0, i + 3] = (1.0 - gamma) * s2 / 6.0
        H[0, i + 6] = si / 18.0

        H[1, i] = (1.0 - gamma) * s2 / 6.0
        H[1, i + 3] = -(ci * ci + gamma * si * si) / 3.0
        H[1, i + 6] = -ci / 18.0

        H[2, i] = (si / 18.0
                   + (1.0 - gamma) * xi * s2 / 6.0
                   + (1.0 + gamma) * yi / 6.0
                   - (1.0 - gamma) * yi * c2 / 6.0)
        H[2, i + 3] = -(ci / 18.0
                        + (1.0 - gamma) * yi * s2 / 6.0
                        + (1.0 + gamma) * xi / 6.0
                        + (1.0 - gamma) * xi * c2 / 6.0)
        H[2, i + 6] = -(1.0 / 81.0 + xi * ci / 18.0 + yi * si / 18.0)

    s1 = math.sin(th3[0])
    c1 = math.cos(th3[0])
    s2_ = math.sin(th3[1])
    c2_ = math.cos(th3[1])

    H[3, 0] = -1.0
    H[3, 1] = 1.0
    H[3, 6] = s1 / 3.0
    H[4, 1] = -1.0
    H[4, 2] = 1.0
    H[4, 7] = s2_ / 3.0
    H[5, 3] = -1.0
    H[5, 4] = 1.0
    H[5, 6] = -c1 / 3.0
    H[6, 4] = -1.0
    H[6, 5] = 1.0
    H[6, 7] = -c2_ / 3.0
    H[7, 6] = -1.0
    H[7, 7] = 1.0
    H[8, 7] = -1.0
    H[8, 8] = 1.0

    q[7] = a1dot
    q[8] = a2dot


@njit(cache=True)
def gauss_solve(A, b):
    """Partial-pivot Gaussian elimination, in place; solution left in b.

    Returns a cheap condition estimate max|pivot| / min|pivot|, or -1.0 when a
    pivot underflows to (numerical) zero.
    """
    n = A.shape[0]
    maxp = 0.0
    minp = 1e308
    for k in range(n):
        p = k
        amax = abs(A[k, k])
        for r in range(k + 1, n):
            ar = abs(A[r, k])
            if ar > amax:
                amax = ar
                p = r
        if amax < 1e-300:
            return -1.0
        if p != k:
            for c in range(k, n):
                tmp = A[k, c]
                A[k, c] = A[p, c]
                A[p, c] = tmp
            tmp = b[k]
            b[k] = b[p]
            b[p] = tmp
        piv = A[k, k]
        apiv = abs(piv)
        if apiv > maxp:
            maxp = apiv
        if apiv < minp:
            minp = apiv
        inv = 1.0 / piv
        for r in range(k + 1, n):
            f = A[r, k] * inv
            if f != 0.0:
                for c in range(k + 1, n):
                    A[r, c] -= f * A[k, c]
                b[r] -= f * b[k]
    for k in range(n - 1, -1, -1):
        acc = b[k]
        for c in range(k + 1, n):
            acc -= A[k, c] * b[c]
        b[k] = acc / A[k, k]
    return maxp / minp


@njit(cache=True)
def power_from(x3, y3, th3, rates9, gamma):
    """Dissipated power: the per-link drag integral in closed form.

    The integrand is quadratic in arclength, so the integral over a link of
    length l has the exact form gamma*l*(u.t)^2 + l*(u.n)^2 + l^2*w*(u.n)
    + (l^3/3)*w^2 with u the left-end velocity and w the link's angular rate.
    """
    l = LINK_LENGTH
    phi = 0.0
    for i in range(3):
        ci = math.cos(th3[i])
        si = math.sin(th3[i])
        ux = rates9[i]
        uy = rates9[3 + i]
        w = rates9[6 + i]
        ut = ux * ci + uy * si
        un = -ux * si + uy * ci
        phi += (gamma * l * ut * ut
                + l * un * un
                + l * l * w * un
                + (l * l * l / 3.0) * w * w)
    return phi


@njit(cache=True)
def derivative(s, r1, r2, gamma, x3, y3, th3, H, A, q, bx, out6):
    """Reduced-state time derivative plus instantaneous power.

    out6 = (xdot1, ydot1, thetadot1, thetadot2, thetadot3, power).
    Returns the solver's condition estimate (negative on singularity).
    """
    reconstruct_into(s, x3, y3, th3)
    assemble_into(x3, y3, th3, r1, r2, gamma, H, q)
    for r in range(9):
        bx[r] = q[r]
        for c in range(9):
            A[r, c] = H[r, c]
    cond = gauss_solve(A, bx)
    if cond < 0.0:
        return cond
    out6[0] = bx[0]
    out6[1] = bx[3]
    out6[2] = bx[6]
    out6[3] = bx[7]
    out6[4] = bx[8]
    out6[5] = power_from(x3, y3, th3, bx, gamma)
    return cond


@njit(cache=True)
def rk4_span(s, r1, r2, span, n_sub, gamma,
             x3, y3, th3, H, A, q, bx, k1, k2, k3, k4, stmp):
    """Integrate a span of constant joint rates with classical RK4 sub-steps.

    The mechanical work over the span is accumulated with the Simpson weights
    of the RK4 stage powers (equivalent to integrating dW/dt = power alongside
    the state). Returns (work, status, cond).
    """
    work = 0.0
    h = span / n_sub
    for _ in range(n_sub):
        c = derivative(s, r1, r2, gamma, x3, y3, th3, H, A, q, bx, k1)
        if c < 0.0 or c > COND_LIMIT:
            return work, SINGULAR if c < 0.0 else ILL_CONDITIONED, c
        for j in range(5):
            stmp[j] = s[j] + 0.5 * h * k1[j]
        c = derivative(stmp, r1, r2, gamma, x3, y3, th3, H, A, q, bx, k2)
        if c < 0.0 or c > COND_LIMIT:
            return work, SINGULAR if c < 0.0 else ILL_CONDITIONED, c
        for j in range(5):
            stmp[j] = s[j] + 0.5 * h * k2[j]
        c = derivative(stmp, r1, r2, gamma, x3, y3, th3, H, A, q, bx, k3)
        if c < 0.0 or c > COND_LIMIT:
            return work, SINGULAR if c < 0.0 else ILL_CONDITIONED, c
        for j in range(5):
            stmp[j] = s[j] + h * k3[j]
        c = derivative(stmp, r1, r2, gamma, x3, y3, th3, H, A, q, bx, k4)
        if c < 0.0 or c > COND_LIMIT:
            return work, SINGULAR if c < 0.0 else ILL_CONDITIONED, c
        for j in range(5):
            s[j] += (h / 6.0) * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
        work += (h / 6.0) * (k1[5] + 2.0 * k2[5] + 2.0 * k3[5] + k4[5])
    return work, OK, 0.0


@njit(cache=True)
def step_with_limits(s, r1in, r2in, dt, n_sub, gamma, alpha_limit,
                     x3, y3, th3, H, A, q, bx, k1, k2, k3, k4, stmp):
    """Advance the reduced state by one action step of duration dt.

    Joint rates are constant within the step except for limit handling: a
    joint reaching +-alpha_limit is pinned there and its rate zeroed for the
    remainder of the step. Joint angles evolve linearly in time (the
    constraint rows make dalpha/dt equal the commanded rate exactly), so the
    crossing times are exact.

    Returns (work, status, cond).
    """
    r1 = r1in
    r2 = r2in
    t = 0.0
    work = 0.0
    h_nom = dt / n_sub
    for _ in range(6):
        if t >= dt * (1.0 - 1e-15):
            break
        a1 = s[3] - s[2]
        a2 = s[4] - s[3]

        t1 = dt
        if r1 > 0.0:
            t1 = (alpha_limit - a1) / r1
        elif r1 < 0.0:
            t1 = (-alpha_limit - a1) / r1
        t2 = dt
        if r2 > 0.0:
            t2 = (alpha_limit - a2) / r2
        elif r2 < 0.0:
            t2 = (-alpha_limit - a2) / r2

        if r1 != 0.0 and t1 <= 0.0:
            r1 = 0.0
            continue
        if r2 != 0.0 and t2 <= 0.0:
            r2 = 0.0
            continue
        if r1 == 0.0 and r2 == 0.0:
            break  # fully pinned or idle: q = 0 forces zero body rates

        remaining = dt - t
        seg = remaining
        hit1 = False
        hit2 = False
        if r1 != 0.0 and t1 < seg:
            seg = t1
        if r2 != 0.0 and t2 < seg:
            seg = t2
        if r1 != 0.0 and t1 <= seg:
            hit1 = True
        if r2 != 0.0 and t2 <= seg:
            hit2 = True
        if seg >= remaining:
            seg = remaining
            if not (r1 != 0.0 and t1 <= remaining):
                hit1 = False
            if not (r2 != 0.0 and t2 <= remaining):
                hit2 = False

        m = int(math.ceil(seg / h_nom - 1e-12))
        if m < 1:
            m = 1
        w, status, cond = rk4_span(s, r1, r2, seg, m, gamma,
                                   x3, y3, th3, H, A, q, bx, k1, k2, k3, k4, stmp)
        work += w
        if status != OK:
            return work, status, cond
        t += seg

        if hit1:
            s[2] = s[3] - (alpha_limit if r1 > 0.0 else -alpha_limit)
            r1 = 0.0
        if hit2:
            s[4] = s[3] + (alpha_limit if r2 > 0.0 else -alpha_limit)
            r2 = 0.0
    return work, OK, 0.0


@njit(cache=True)
def centroid_of(s, out2):
    """Geometric centroid: mean of the three link midpoints."""
    l = LINK_LENGTH
    cx = 0.0
    cy = 0.0
    x = s[0]
    y = s[1]
    for i in range(3):
        th = s[2 + i]
        dx = l * math.cos(th)
        dy = l * math.sin(th)
        cx += x + 0.5 * dx
        cy += y + 0.5 * dy
        x += dx
        y += dy
    out2[0] = cx / 3.0
    out2[1] = cy / 3.0


@njit(cache=True)
def mlp2_forward(obs, w1, b1, w2, b2, w3, b3, h1, h2, out):
    """Two-hidden-layer tanh MLP; weight matrices are (out, in) row-major."""
    n1 = b1.shape[0]
    n2 = b2.shape[0]
    no = b3.shape[0]
    ni = obs.shape[0]
    for i in range(n1):
        acc = b1[i]
        for j in range(ni):
            acc += w1[i, j] * obs[j]
        h1[i] = math.tanh(acc)
    for i in range(n2):
        acc = b2[i]
        for j in range(n1):
            acc += w2[i, j] * h1[j]
        h2[i] = math.tanh(acc)
    for i in range(no):
        acc = b3[i]
        for j in range(n2):
            acc += w3[i, j] * h2[j]
        out[i] = acc


@njit(cache=True)
def observe_into(s, theta_t, out4):
    """Observation (cos(theta2 - theta_t), sin(theta2 - theta_t), a1, a2)."""
    td = s[3] - theta_t
    out4[0] = math.cos(td)
    out4[1] = math.sin(td)
    out4[2] = s[3] - s[2]
    out4[3] = s[4] - s[3]


LOG_2PI = math.log(2.0 * math.pi)


@njit(cache=True)
def rollout_train(s, theta_t, w1, b1, w2, b2, w3, b3, log_std, z,
                  dt, n_sub, rate_cap, alpha_limit, gamma, b_scale, c_weight,
                  obs_out, act_out, rew_out, logp_out, work_out, cent_out):
    """Collect one training episode with a stochastic Gaussian policy.

    s is the (mutated) reduced state; z holds pre-drawn standard normals,
    one row per step. Raw (unclamped) samples and their exact log-density are
    recorded; the environment receives the rate-capped action. Rewards follow
    the displacement-along-target rule minus c_weight times the step work.

    Returns (status, cond).
    """
    n_steps = z.shape[0]
    x3 = np.empty(3)
    y3 = np.empty(3)
    th3 = np.empty(3)
    H = np.empty((9, 9))
    A = np.empty((9, 9))
    q = np.empty(9)
    bx = np.empty(9)
    k1 = np.empty(6)
    k2 = np.empty(6)
    k3 = np.empty(6)
    k4 = np.empty(6)
    stmp = np.empty(5)
    obs = np.empty(4)
    h1 = np.empty(b1.shape[0])
    h2 = np.empty(b2.shape[0])
    mean = np.empty(2)
    cent = np.empty(2)

    px = math.cos(theta_t)
    py = math.sin(theta_t)
    sig1 = math.exp(log_std[0])
    sig2 = math.exp(log_std[1])

    centroid_of(s, cent)
    cent_out[0, 0] = cent[0]
    cent_out[0, 1] = cent[1]

    for k in range(n_steps):
        observe_into(s, theta_t, obs)
        for j in range(4):
            obs_out[k, j] = obs[j]
        mlp2_forward(obs, w1, b1, w2, b2, w3, b3, h1, h2, mean)

        z1 = z[k, 0]
        z2 = z[k, 1]
        a1 = mean[0] + sig1 * z1
        a2 = mean[1] + sig2 * z2
        act_out[k, 0] = a1
        act_out[k, 1] = a2
        logp_out[k] = (-0.5 * (z1 * z1 + z2 * z2)
                       - log_std[0] - log_std[1] - LOG_2PI)

        r1 = min(max(a1, -rate_cap), rate_cap)
        r2 = min(max(a2, -rate_cap), rate_cap)
        work, status, cond = step_with_limits(
            s, r1, r2, dt, n_sub, gamma, alpha_limit,
            x3, y3, th3, H, A, q, bx, k1, k2, k3, k4, stmp)
        if status != OK:
            return status, cond

        cx_prev = cent[0]
        cy_prev = cent[1]
        centroid_of(s, cent)
        cent_out[k + 1, 0] = cent[0]
        cent_out[k + 1, 1] = cent[1]
        work_out[k] = work
        rew_out[k] = (b_scale * ((cent[0] - cx_prev) * px + (cent[1] - cy_prev) * py)
                      - c_weight * work)
    return OK, 0.0


@njit(cache=True)
def run_fixed_target(s, theta_t, w1, b1, w2, b2, w3, b3,
                     n_steps, dt, n_sub, rate_cap, alpha_limit, gamma,
                     states_out, work_out):
    """Deterministic (mean-action) rollout toward a fixed target direction.

    Records the full reduced state at every sample. Returns (status, cond).
    """
    x3 = np.empty(3)
    y3 = np.empty(3)
    th3 = np.empty(3)
    H = np.empty((9, 9))
    A = np.empty((9, 9))
    q = np.empty(9)
    bx = np.empty(9)
    k1 = np.empty(6)
    k2 = np.empty(6)
    k3 = np.empty(6)
    k4 = np.empty(6)
    stmp = np.empty(5)
    obs = np.empty(4)
    h1 = np.empty(b1.shape[0])
    h2 = np.empty(b2.shape[0])
    mean = np.empty(2)

    for j in range(5):
        states_out[0, j] = s[j]
    for k in range(n_steps):
        observe_into(s, theta_t, obs)
        mlp2_forward(obs, w1, b1, w2, b2, w3, b3, h1, h2, mean)
        r1 = min(max(mean[0], -rate_cap), rate_cap)
        r2 = min(max(mean[1], -rate_cap), rate_cap)
        work, status, cond = step_with_limits(
            s, r1, r2, dt, n_sub, gamma, alpha_limit,
            x3, y3, th3, H, A, q, bx, k1, k2, k3, k4, stmp)
        if status != OK:
            return status, cond
        work_out[k] = work
        for j in range(5):
            states_out[k + 1, j] = s[j]
    return OK, 0.0


@njit(cache=True)
def run_course(s, targets, threshold, budget_per_wp,
               w1, b1, w2, b2, w3, b3,
               dt, n_sub, rate_cap, alpha_limit, gamma,
               cent_traj, arrivals):
    """Waypoint tracing: retarget every step to the active waypoint.

    cent_traj must have room for budget_per_wp * n_targets + 1 samples.
    arrivals[i] receives the global step index at which waypoint i was
    reached, or -1. Returns (n_samples, status, cond).
    """
    n_wp = targets.shape[0]
    x3 = np.empty(3)
    y3 = np.empty(3)
    th3 = np.empty(3)
    H = np.empty((9, 9))
    A = np.empty((9, 9))
    q = np.empty(9)
    bx = np.empty(9)
    k1 = np.empty(6)
    k2 = np.empty(6)
    k3 = np.empty(6)
    k4 = np.empty(6)
    stmp = np.empty(5)
    obs = np.empty(4)
    h1 = np.empty(b1.shape[0])
    h2 = np.empty(b2.shape[0])
    mean = np.empty(2)
    cent = np.empty(2)

    for i in range(n_wp):
        arrivals[i] = -1

    centroid_of(s, cent)
    cent_traj[0, 0] = cent[0]
    cent_traj[0, 1] = cent[1]
    step = 0
    wp = 0
    wp_steps = 0
    cond = 1.0
    while wp < n_wp:
        if wp_steps >= budget_per_wp:
            return step + 1, OK, cond
        tx = targets[wp, 0]
        ty = targets[wp, 1]
        theta_t = math.atan2(ty - cent[1], tx - cent[0])
        observe_into(s, theta_t, obs)
        mlp2_forward(obs, w1, b1, w2, b2, w3, b3, h1, h2, mean)
        r1 = min(max(mean[0], -rate_cap), rate_cap)
        r2 = min(max(mean[1], -rate_cap), rate_cap)
        work, status, cond = step_with_limits(
            s, r1, r2, dt, n_sub, gamma, alpha_limit,
            x3, y3, th3, H, A, q, bx, k1, k2, k3, k4, stmp)
        if status != OK:
            return step + 1, status, cond
        centroid_of(s, cent)
        step += 1
        wp_steps += 1
        cent_traj[step, 0] = cent[0]
        cent_traj[step, 1] = cent[1]
        dx = tx - cent[0]
        dy = ty - cent[1]
        if math.sqrt(dx * dx + dy * dy) < threshold:
            arrivals[wp] = step
            wp += 1
            wp_steps = 0
    return step + 1, OK, cond


@njit(cache=True)
def run_pursuit(s, target0, pT, v_target, diffusivity, noise, threshold,
                w1, b1, w2, b2, w3, b3,
                dt, n_sub, rate_cap, alpha_limit, gamma,
                cent_traj, target_traj, dist_out):
    """Pursue a moving, diffusing target.

    Per step: retarget to the target's instantaneous position, advance the
    swimmer, then advance the target by v_target * pT * dt plus a Gaussian
    kick with per-axis variance 2 * diffusivity * dt (noise holds the
    pre-drawn standard normals). Returns (capture_step or -1, n_steps_run,
    status, cond).
    """
    budget = noise.shape[0]
    x3 = np.empty(3)
    y3 = np.empty(3)
    th3 = np.empty(3)
    H = np.empty((9, 9))
    A = np.empty((9, 9))
    q = np.empty(9)
    bx = np.empty(9)
    k1 = np.empty(6)
    k2 = np.empty(6)
    k3 = np.empty(6)
    k4 = np.empty(6)
    stmp = np.empty(5)
    obs = np.empty(4)
    h1 = np.empty(b1.shape[0])
    h2 = np.empty(b2.shape[0])
    mean = np.empty(2)
    cent = np.empty(2)

    tx = target0[0]
    ty = target0[1]
    sigma = math.sqrt(2.0 * diffusivity * dt)
    cond = 1.0

    centroid_of(s, cent)
    cent_traj[0, 0] = cent[0]
    cent_traj[0, 1] = cent[1]
    target_traj[0, 0] = tx
    target_traj[0, 1] = ty
    dist_out[0] = math.sqrt((tx - cent[0]) ** 2 + (ty - cent[1]) ** 2)

    for k in range(budget):
        theta_t = math.atan2(ty - cent[1], tx - cent[0])
        observe_into(s, theta_t, obs)
        mlp2_forward(obs, w1, b1, w2, b2, w3, b3, h1, h2, mean)
        r1 = min(max(mean[0], -rate_cap), rate_cap)
        r2 = min(max(mean[1], -rate_cap), rate_cap)
        work, status, cond = step_with_limits(
            s, r1, r2, dt, n_sub, gamma, alpha_limit,
            x3, y3, th3, H, A, q, bx, k1, k2, k3, k4, stmp)
        if status != OK:
            return -1, k + 1, status, cond
        centroid_of(s, cent)
        tx += v_target * pT[0] * dt + sigma * noise[k, 0]
        ty += v_target * pT[1] * dt + sigma * noise[k, 1]
        cent_traj[k + 1, 0] = cent[0]
        cent_traj[k + 1, 1] = cent[1]
        target_traj[k + 1, 0] = tx
        target_traj[k + 1, 1] = ty
        d = math.sqrt((tx - cent[0]) ** 2 + (ty - cent[1]) ** 2)
        dist_out[k + 1] = d
        if d < threshold:
            return k + 1, k + 1, OK, cond
    return -1, budget, OK, cond
