"""Numba kernels for the coordinate-descent sweeps and the Gibbs chain.

Kept separate so the rest of the package imports numba lazily; all kernels
are single-threaded and deterministic.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def concord_theta_sweeps(theta, s, m, rho2, gamma_n, max_sweeps, tol):
    """In-place coordinate descent on the quadratic-coupling theta block.

    m = omega - w is the consensus target. Maintains u = theta @ s
    incrementally. Diagonal entries first, then lexicographic (i, j).
    Returns the number of sweeps run.
    """
    p = theta.shape[0]
    u = theta @ s
    sweeps = 0
    for _ in range(max_sweeps):
        sweeps += 1
        max_delta = 0.0
        max_abs = 0.0
        for i in range(p):
            a = (1.0 + rho2) * s[i, i] + gamma_n
            coup = u[i, i] - theta[i, i] * s[i, i]
            b = (1.0 + rho2) * coup - gamma_n * m[i, i]
            new = (-b + math.sqrt(b * b + 4.0 * a)) / (2.0 * a)
            delta = new - theta[i, i]
            if delta != 0.0:
                theta[i, i] = new
                for k in range(p):
                    u[i, k] += delta * s[i, k]
            if abs(delta) > max_delta:
                max_delta = abs(delta)
            if abs(new) > max_abs:
                max_abs = abs(new)
        for i in range(p - 1):
            for j in range(i + 1, p):
                a = (1.0 + rho2) * (s[i, i] + s[j, j]) + gamma_n
                coup = u[i, j] + u[j, i] - theta[i, j] * (s[i, i] + s[j, j])
                b = (1.0 + rho2) * coup - gamma_n * m[i, j]
                new = -b / a
                delta = new - theta[i, j]
                if delta != 0.0:
                    theta[i, j] = new
                    theta[j, i] = new
                    for k in range(p):
                        u[i, k] += delta * s[j, k]
                        u[j, k] += delta * s[i, k]
                if abs(delta) > max_delta:
                    max_delta = abs(delta)
                if abs(new) > max_abs:
                    max_abs = abs(new)
        if max_delta <= tol * max(max_abs, 1e-12):
            break
    return sweeps


@njit(cache=True)
def concord_omega_sweeps(omega, q, m2, rho1, rho2, gamma_n, max_sweeps, tol):
    """In-place coordinate descent on the quadratic-coupling omega block.

    m2 = theta + w. Off-diagonals soft-threshold at rho1 / c_ij with
    c_ij = rho2 (q_ii + q_jj) + gamma_n.
    """
    p = omega.shape[0]
    v = omega @ q
    sweeps = 0
    for _ in range(max_sweeps):
        sweeps += 1
        max_delta = 0.0
        max_abs = 0.0
        for i in range(p):
            c = rho2 * q[i, i] + gamma_n
            coup = v[i, i] - omega[i, i] * q[i, i]
            d = rho2 * coup - gamma_n * m2[i, i]
            new = -d / c
            delta = new - omega[i, i]
            if delta != 0.0:
                omega[i, i] = new
                for k in range(p):
                    v[i, k] += delta * q[i, k]
            if abs(delta) > max_delta:
                max_delta = abs(delta)
            if abs(new) > max_abs:
                max_abs = abs(new)
        for i in range(p - 1):
            for j in range(i + 1, p):
                c = rho2 * (q[i, i] + q[j, j]) + gamma_n
                coup = v[i, j] + v[j, i] - omega[i, j] * (q[i, i] + q[j, j])
                d = rho2 * coup - gamma_n * m2[i, j]
                raw = -d / c
                thr = rho1 / c
                if raw > thr:
                    new = raw - thr
                elif raw < -thr:
                    new = raw + thr
                else:
                    new = 0.0
                delta = new - omega[i, j]
                if delta != 0.0:
                    omega[i, j] = new
                    omega[j, i] = new
                    for k in range(p):
                        v[i, k] += delta * q[j, k]
                        v[j, k] += delta * q[i, k]
                if abs(delta) > max_delta:
                    max_delta = abs(delta)
                if abs(new) > max_abs:
                    max_abs = abs(new)
        if max_delta <= tol * max(max_abs, 1e-12):
            break
    return sweeps


@njit(cache=True)
def dykstra_slabs(coords, normals, sq_norms, bounds, tol, max_cycles):
    """Dykstra's alternating projections onto slabs |a_h^T x| <= b_h.

    ``coords`` is (r, m): one r-dimensional point per column, projected in
    place. Normals are (h, r). The slabs share the origin, so the
    intersection is nonempty.
    """
    r, m = coords.shape
    h = normals.shape[0]
    scale = 1.0
    for i in range(r):
        for j in range(m):
            if abs(coords[i, j]) > scale:
                scale = abs(coords[i, j])
    increments = np.zeros((h, r, m))
    for _ in range(max_cycles):
        shift = 0.0
        for idx in range(h):
            worst = 0.0
            for j in range(m):
                # y = x + increment; value = a . y
                val = 0.0
                for i in range(r):
                    val += normals[idx, i] * (coords[i, j] + increments[idx, i, j])
                if val > bounds[idx]:
                    excess = val - bounds[idx]
                elif val < -bounds[idx]:
                    excess = val + bounds[idx]
                else:
                    excess = 0.0
                step = excess / sq_norms[idx]
                for i in range(r):
                    y = coords[i, j] + increments[idx, i, j]
                    proj = y - normals[idx, i] * step
                    delta = proj - coords[i, j]
                    if abs(delta) > worst:
                        worst = abs(delta)
                    increments[idx, i, j] = y - proj
                    coords[i, j] = proj
            if worst > shift:
                shift = worst
        if shift <= tol * scale:
            # verify all slabs hold before stopping
            ok = True
            for idx in range(h):
                for j in range(m):
                    val = 0.0
                    for i in range(r):
                        val += normals[idx, i] * coords[i, j]
                    if abs(val) > bounds[idx] + tol * scale:
                        ok = False
                        break
                if not ok:
                    break
            if ok:
                break
    return coords


@njit(cache=True)
def gibbs_chain(theta, init_state, uniforms, n_out, burn_in, thin):
    """Systematic-scan Gibbs sampler for the binary pairwise model.

    Each conditional is logistic in the field theta_jj
    + sum_{k != j} theta_jk y_k. Emits every ``thin``-th sweep after
    ``burn_in`` sweeps; consumes one uniform per site visit.
    """
    p = theta.shape[0]
    state = init_state.copy()
    out = np.empty((n_out, p))
    total_sweeps = burn_in + n_out * thin
    u_idx = 0
    sample_idx = 0
    for sweep in range(total_sweeps):
        for j in range(p):
            eta = theta[j, j]
            for k in range(p):
                if k != j:
                    eta += theta[j, k] * state[k]
            if eta > 0.0:
                prob = 1.0 / (1.0 + math.exp(-eta))
            else:
                e = math.exp(eta)
                prob = e / (1.0 + e)
            if uniforms[u_idx] < prob:
                state[j] = 1.0
            else:
                state[j] = 0.0
            u_idx += 1
        if sweep >= burn_in and (sweep - burn_in + 1) % thin == 0:
            for k in range(p):
                out[sample_idx, k] = state[k]
            sample_idx += 1
    return out
