"""Pure-Python block-coordinate MM pass over the antenna boresights.

Mirrors ``_mmpass.pyx`` statement for statement (vectorized over devices);
used when the compiled kernel is unavailable or ``RAMEC_PURE_PYTHON=1``.
"""
import math

import numpy as np

LN2 = math.log(2.0)
MAX_STRETCH = 1024.0


def latency_and_slope(gamma, Lc, cb, fe, fl):
    """Equal-split latency as a function of SINR, and its derivative."""
    g = np.maximum(gamma, 0.0)
    x = cb * np.log2(1.0 + g)
    den = fe * (fl + x) + x * fl
    safe = den > 0
    den_s = np.where(safe, den, 1.0)
    D = np.where(safe, Lc * (fe + x) / den_s, Lc / fl)
    dD = np.where(safe, -Lc * fe * fe / (den_s * den_s) * cb / (LN2 * (1.0 + g)), 0.0)
    return D, dD


def project_cap(v, cos_max):
    """Projection onto ``{||f|| <= 1, f[0] >= cos_max}``."""
    nrm = math.sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
    if nrm <= 1.0 and v[0] >= cos_max:
        return v.copy()
    if nrm > 1.0:
        u = v / nrm
        if u[0] >= cos_max:
            return u
    h = v.copy()
    if h[0] < cos_max:
        h[0] = cos_max
    if h[0] * h[0] + h[1] * h[1] + h[2] * h[2] <= 1.0:
        return h
    s = math.sqrt(max(1.0 - cos_max * cos_max, 0.0))
    r = math.hypot(v[1], v[2])
    out = np.empty(3)
    out[0] = cos_max
    if r > 0:
        out[1] = s * v[1] / r
        out[2] = s * v[2] / r
    else:
        out[1] = 0.0
        out[2] = s
    return out


def _sinr(Y, powers, sigma2):
    G = (Y.real**2 + Y.imag**2) * powers[None, :]
    sig = np.diag(G).copy()
    den = G.sum(axis=1) - sig + sigma2
    return sig / den, den


def solve_block(anchor, gam, g, rho, Lc, cb, fe, fl, cos_max, steps, step0):
    """Projected subgradient on ``max_k D_k(s_k(f))`` with concave quadratic ``s_k``."""
    f = anchor.copy()
    best = anchor.copy()
    D, _ = latency_and_slope(gam, Lc, cb, fe, fl)
    k = int(np.argmax(D))
    best_val = D[k]
    # start no farther than the bottleneck device's own surrogate peak
    a0 = step0
    if rho[k] > 0.0:
        reach = math.sqrt(g[k] @ g[k]) / rho[k]
        if 0.0 < reach < a0:
            a0 = reach
    for t in range(steps):
        d = f - anchor
        s = gam + g @ d - 0.5 * rho * (d @ d)
        D, dD = latency_and_slope(s, Lc, cb, fe, fl)
        k = int(np.argmax(D))
        if D[k] < best_val:
            best_val = D[k]
            best = f.copy()
        grad = dD[k] * (g[k] - rho[k] * d)
        nrm = math.sqrt(grad @ grad)
        if nrm == 0.0:
            break
        f = project_cap(f - (a0 / (1.0 + t)) * grad / nrm, cos_max)
    d = f - anchor
    s = gam + g @ d - 0.5 * rho * (d @ d)
    D, _ = latency_and_slope(s, Lc, cb, fe, fl)
    if D.max() < best_val:
        best = f.copy()
    return best


def mm_pass(F, qhat, beta, nu, W, powers, sigma2, p, cos_max, Lc, cb, fe, fl, steps, step0):
    """One sweep over the antennas; ``F`` is updated in place.

    Returns the worst-device equal-split latency at the final ``F``.
    """
    K, N = beta.shape
    Wc = W.conj()
    sqP = np.sqrt(powers)
    b = np.einsum("knd,nd->kn", qhat, F)
    amp = np.maximum(b, 0.0) ** p
    H = beta * amp + nu
    Y = Wc @ H.T
    gam, den = _sinr(Y, powers, sigma2)
    obj = latency_and_slope(gam, Lc, cb, fe, fl)[0].max()
    offdiag = ~np.eye(K, dtype=bool)
    d1 = p * (p - 1.0)
    d2 = 2.0 * p * (2.0 * p - 1.0)

    for n in range(N):
        anchor = F[n].copy()
        eta = sqP * np.diag(Y) / den
        eta2 = eta.real**2 + eta.imag**2
        bn = b[:, n]
        dpow = np.where(bn > 0, p * np.maximum(bn, 0.0) ** (p - 1.0), 0.0)
        q = qhat[:, n, :]

        num = 2.0 * sqP * np.real(np.conj(eta) * Wc[:, n] * beta[:, n]) * dpow
        g = num[:, None] * q

        cc = Wc[:, n][:, None] * beta[:, n][None, :]  # [k, j]
        dbar = Y - cc * amp[:, n][None, :]
        Bc = 2.0 * np.real(dbar * np.conj(cc))
        Cc = cc.real**2 + cc.imag**2
        du = dpow[None, :] * (Bc + 2.0 * Cc * amp[:, n][None, :])
        delta = d1 * np.abs(Bc) + d2 * Cc
        wP = np.where(offdiag, powers[None, :], 0.0)
        g -= eta2[:, None] * ((wP * du) @ q)
        rho = eta2 * (wP * delta).sum(axis=1)

        f = solve_block(anchor, gam, g, rho, Lc, cb, fe, fl, cos_max, steps, step0)
        step = f - anchor

        # the surrogate step is conservative; stretch it while the true
        # objective keeps dropping (scale 1 is the plain MM update)
        best = None
        scale = 1.0
        while scale <= MAX_STRETCH:
            cand = project_cap(anchor + scale * step, cos_max)
            cand = cand / math.sqrt(cand @ cand)
            bnew = q @ cand
            ampnew = np.maximum(bnew, 0.0) ** p
            Hn = beta[:, n] * ampnew + nu[:, n]
            Ynew = Y + Wc[:, n][:, None] * (Hn - H[:, n])[None, :]
            gnew, dnew = _sinr(Ynew, powers, sigma2)
            objnew = latency_and_slope(gnew, Lc, cb, fe, fl)[0].max()
            if objnew >= obj:
                break
            best = (cand, bnew, ampnew, Hn, Ynew, gnew, dnew)
            obj = objnew
            scale *= 2.0
        if best is not None:
            F[n], b[:, n], amp[:, n], H[:, n], Y, gam, den = best
    return float(obj)
