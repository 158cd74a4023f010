"""Compiled active-set solver for one implicit Euler step.

Minimises, over nodal values with ``u[0] = u[n] = 0``::

    sum_i h (u_i - g_i)^2 / (2 tau) - sum_i h f_i u_i
        + sum_e |u_{e+1} - u_e| + sum_e h W_r((u_{e+1} - u_e) / h)

Nodes joined by zero-jump ("flat") edges form blocks that move rigidly.
For a fixed block structure and fixed jump signs the objective is smooth
in the block values and is minimised by (damped) Newton steps on a
tridiagonal system.  A step that would flip the sign of a jump is cut at
the crossing and the edge is merged; at a structure optimum the flux on
every flat edge is reconstructed from the discrete balance and the edge
with the largest excursion outside the jump interval is split.
"""

import numpy as np
from numba import njit

STATUS_OK = 0
STATUS_MAX_ITER = 1


@njit(cache=True)
def pp_eval(p, breaks, coef):
    k = np.searchsorted(breaks, p, side="right")
    acc = 0.0
    for j in range(coef.shape[1] - 1, -1, -1):
        acc = acc * p + coef[k, j]
    return acc


@njit(cache=True)
def _objective(v, nb, w, gs, fs, inter, sgn, tau, h, breaks, wcoef):
    out = 0.0
    for b in range(1, nb - 1):
        out += h * (0.5 * w[b] * v[b] * v[b] - v[b] * gs[b]) / tau - h * v[b] * fs[b]
    for j in range(nb - 1):
        d = v[j + 1] - v[j]
        out += sgn[inter[j]] * d + h * pp_eval(d / h, breaks, wcoef)
    return out


@njit(cache=True)
def solve_step(g, f, tau, h, breaks, lcoef, dcoef, wcoef, lr0, quad, split_tol, max_iter):
    """Return ``(u, sigma, status, iterations)``.

    ``g`` and ``f`` hold one value per node (boundary entries are ignored);
    ``sigma`` holds one flux per edge, built from the discrete balance
    ``(u_i - g_i)/tau - (sigma_i - sigma_{i-1})/h = f_i``.
    """
    n = g.shape[0] - 1
    u = g.copy()
    u[0] = 0.0
    u[n] = 0.0
    flat = np.empty(n, np.bool_)
    sgn = np.zeros(n)
    for e in range(n):
        d = u[e + 1] - u[e]
        if d == 0.0:
            flat[e] = True
        else:
            flat[e] = False
            sgn[e] = 1.0 if d > 0.0 else -1.0

    bstart = np.empty(n + 1, np.int64)
    bend = np.empty(n + 1, np.int64)
    inter = np.empty(n + 1, np.int64)
    v = np.empty(n + 1)
    vt = np.empty(n + 1)
    dv = np.zeros(n + 1)
    w = np.empty(n + 1)
    gs = np.empty(n + 1)
    fs = np.empty(n + 1)
    grad = np.zeros(n + 1)
    sig_in = np.empty(n + 1)
    lp = np.empty(n + 1)
    diag = np.empty(n + 1)
    off = np.empty(n + 1)
    cpr = np.empty(n + 1)
    dpr = np.empty(n + 1)
    sig = np.zeros(n)
    theta_e = np.empty(n + 1)

    gtol = 0.1 * split_tol
    status = STATUS_MAX_ITER
    solved = False
    it = 0
    while it < max_iter:
        it += 1
        # --- blocks
        nb = 0
        start = 0
        for e in range(n):
            if not flat[e]:
                bstart[nb] = start
                bend[nb] = e
                inter[nb] = e
                nb += 1
                start = e + 1
        bstart[nb] = start
        bend[nb] = n
        nb += 1
        for b in range(nb):
            a = bstart[b]
            z = bend[b]
            sg = 0.0
            sf = 0.0
            su = 0.0
            for i in range(a, z + 1):
                sg += g[i]
                sf += f[i]
                su += u[i]
            if a == 0 or z == n:
                val = 0.0
            else:
                val = su / (z - a + 1)
            for i in range(a, z + 1):
                u[i] = val
            v[b] = val
            w[b] = z - a + 1
            gs[b] = sg
            fs[b] = sf
        # --- fluxes on jump edges and block gradients
        for j in range(nb - 1):
            p = (v[j + 1] - v[j]) / h
            sig_in[j] = sgn[inter[j]] + pp_eval(p, breaks, lcoef)
            lp[j] = pp_eval(p, breaks, dcoef)
        gmax = 0.0
        for b in range(1, nb - 1):
            grad[b] = h * (w[b] * v[b] - gs[b]) / tau - h * fs[b] + sig_in[b - 1] - sig_in[b]
            if abs(grad[b]) > gmax:
                gmax = abs(grad[b])
        m = nb - 2
        if m > 0 and not solved and gmax > gtol:
            # --- Newton direction on free blocks 1..nb-2
            for k in range(m):
                b = k + 1
                diag[k] = h * w[b] / tau + (lp[b - 1] + lp[b]) / h
                off[k] = -lp[b] / h
            cpr[0] = off[0] / diag[0]
            dpr[0] = -grad[1] / diag[0]
            for k in range(1, m):
                den = diag[k] - off[k - 1] * cpr[k - 1]
                cpr[k] = off[k] / den
                dpr[k] = (-grad[k + 1] - off[k - 1] * dpr[k - 1]) / den
            dv[0] = 0.0
            dv[nb - 1] = 0.0
            dv[m] = dpr[m - 1]
            for k in range(m - 2, -1, -1):
                dv[k + 1] = dpr[k] - cpr[k] * dv[k + 2]
            # --- first sign change along the step
            theta_max = 1.0
            for j in range(nb - 1):
                dd = dv[j + 1] - dv[j]
                s = sgn[inter[j]]
                theta_e[j] = 2.0
                if s * dd < 0.0:
                    th = -(v[j + 1] - v[j]) / dd
                    if th < 0.0:
                        th = 0.0
                    theta_e[j] = th
                    if th < theta_max:
                        theta_max = th
            theta = theta_max
            if not quad:
                phi0 = _objective(v, nb, w, gs, fs, inter, sgn, tau, h, breaks, wcoef)
                slope = 0.0
                for b in range(1, nb - 1):
                    slope += grad[b] * dv[b]
                # Newton decrement below round-off of the objective: take the step
                local = -slope < 1e-10 * (1.0 + abs(phi0))
                while theta > 1e-14 and not local:
                    for b in range(nb):
                        vt[b] = v[b] + theta * dv[b]
                    phi = _objective(vt, nb, w, gs, fs, inter, sgn, tau, h, breaks, wcoef)
                    if phi <= phi0 + 1e-4 * theta * slope:
                        break
                    theta *= 0.5
            for b in range(1, nb - 1):
                val = v[b] + theta * dv[b]
                for i in range(bstart[b], bend[b] + 1):
                    u[i] = val
            if theta == theta_max and theta_max < 1.0:
                lim = theta_max * (1.0 + 1e-12) + 1e-300
                for j in range(nb - 1):
                    if theta_e[j] <= lim:
                        flat[inter[j]] = True
            elif theta == 1.0 and quad:
                solved = True
            continue
        solved = False
        # --- flux on flat edges, most violated edge
        worst = -1
        wval = 0.0
        if nb == 1:
            acc = 0.0
            cmin = 0.0
            cmax = 0.0
            sig[0] = 0.0
            for e in range(1, n):
                acc += h * ((u[e] - g[e]) / tau - f[e])
                sig[e] = acc
                cmin = min(cmin, acc)
                cmax = max(cmax, acc)
            s0 = lr0 - 0.5 * (cmin + cmax)
            for e in range(n):
                sig[e] += s0
        else:
            for j in range(nb - 1):
                sig[inter[j]] = sig_in[j]
            z = bend[0]
            for e in range(z - 1, -1, -1):
                sig[e] = sig[e + 1] - h * ((u[e + 1] - g[e + 1]) / tau - f[e + 1])
            for b in range(1, nb):
                a = bstart[b]
                z = bend[b] if b < nb - 1 else n
                for e in range(a, z):
                    sig[e] = sig[e - 1] + h * ((u[e] - g[e]) / tau - f[e])
        for e in range(n):
            if flat[e]:
                exc = abs(sig[e] - lr0) - 1.0
                if exc > wval:
                    wval = exc
                    worst = e
        if worst >= 0 and wval > split_tol:
            flat[worst] = False
            sgn[worst] = 1.0 if sig[worst] > lr0 else -1.0
            continue
        status = STATUS_OK
        break

    # certificate: one pass of the balance from the left end
    cert = np.empty(n)
    cert[0] = sig[0]
    for e in range(1, n):
        cert[e] = cert[e - 1] + h * ((u[e] - g[e]) / tau - f[e])
    return u, cert, status, it
