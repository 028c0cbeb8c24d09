# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled block-coordinate MM pass over the antenna boresights.

Same algorithm and argument list as ``_mmpass_py.mm_pass``.
"""
import numpy as np

from libc.math cimport fabs, log, log2, pow, sqrt

cdef double LN2 = log(2.0)
cdef double MAX_STRETCH = 1024.0


cdef inline void latency_slope(double gamma, double Lc, double cb, double fe, double fl,
                               double* D, double* dD) noexcept nogil:
    cdef double g = gamma if gamma > 0.0 else 0.0
    cdef double x = cb * log2(1.0 + g)
    cdef double den = fe * (fl + x) + x * fl
    if den > 0.0:
        D[0] = Lc * (fe + x) / den
        dD[0] = -Lc * fe * fe / (den * den) * cb / (LN2 * (1.0 + g))
    else:
        D[0] = Lc / fl
        dD[0] = 0.0


cdef inline void project_cap(double* v, double cos_max, double* out) noexcept nogil:
    cdef double nrm = sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
    cdef double s, r
    if nrm <= 1.0 and v[0] >= cos_max:
        out[0] = v[0]; out[1] = v[1]; out[2] = v[2]
        return
    if nrm > 1.0 and v[0] / nrm >= cos_max:
        out[0] = v[0] / nrm; out[1] = v[1] / nrm; out[2] = v[2] / nrm
        return
    out[0] = v[0] if v[0] >= cos_max else cos_max
    out[1] = v[1]; out[2] = v[2]
    if out[0] * out[0] + out[1] * out[1] + out[2] * out[2] <= 1.0:
        return
    s = 1.0 - cos_max * cos_max
    s = sqrt(s) if s > 0.0 else 0.0
    r = sqrt(v[1] * v[1] + v[2] * v[2])
    out[0] = cos_max
    if r > 0.0:
        out[1] = s * v[1] / r
        out[2] = s * v[2] / r
    else:
        out[1] = 0.0
        out[2] = s


cdef double sinr_into(double complex[:, ::1] Y, const double[::1] powers, double sigma2,
                      double[::1] gam, double[::1] den,
                      const double[::1] Lc, const double[::1] cb,
                      const double[::1] fe, const double[::1] fl) noexcept nogil:
    """Fill SINR and denominators from ``Y``; return the worst latency."""
    cdef Py_ssize_t K = Y.shape[0], k, j
    cdef double tot, sig, gk, D, dD, worst = -1.0
    for k in range(K):
        tot = 0.0
        sig = 0.0
        for j in range(K):
            gk = (Y[k, j].real * Y[k, j].real + Y[k, j].imag * Y[k, j].imag) * powers[j]
            tot += gk
            if j == k:
                sig = gk
        den[k] = tot - sig + sigma2
        gam[k] = sig / den[k]
        latency_slope(gam[k], Lc[k], cb[k], fe[k], fl[k], &D, &dD)
        if D > worst:
            worst = D
    return worst


cdef double surrogate_worst(double* f, double* anchor, const double[::1] gam, double[:, ::1] g,
                            double[::1] rho, const double[::1] Lc, const double[::1] cb,
                            const double[::1] fe, const double[::1] fl,
                            Py_ssize_t* kstar, double* slope, double* d) noexcept nogil:
    cdef Py_ssize_t K = gam.shape[0], k
    cdef double dd, s, D, dD, worst = -1.0
    d[0] = f[0] - anchor[0]; d[1] = f[1] - anchor[1]; d[2] = f[2] - anchor[2]
    dd = d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
    for k in range(K):
        s = gam[k] + (g[k, 0] * d[0] + g[k, 1] * d[1] + g[k, 2] * d[2]) - 0.5 * rho[k] * dd
        latency_slope(s, Lc[k], cb[k], fe[k], fl[k], &D, &dD)
        if D > worst:
            worst = D
            kstar[0] = k
            slope[0] = dD
    return worst


cdef void solve_block(double* anchor, const double[::1] gam, double[:, ::1] g, double[::1] rho,
                      const double[::1] Lc, const double[::1] cb, const double[::1] fe,
                      const double[::1] fl, double cos_max, int steps, double step0,
                      double* best) noexcept nogil:
    cdef double f[3]
    cdef double d[3]
    cdef double v[3]
    cdef double grad[3]
    cdef double best_val, val, slope, nrm, a, a0, reach
    cdef Py_ssize_t kstar = 0, i
    cdef int t
    for i in range(3):
        f[i] = anchor[i]
        best[i] = anchor[i]
    best_val = surrogate_worst(anchor, anchor, gam, g, rho, Lc, cb, fe, fl, &kstar, &slope, d)
    # start no farther than the bottleneck device's own surrogate peak
    a0 = step0
    if rho[kstar] > 0.0:
        reach = sqrt(g[kstar, 0] * g[kstar, 0] + g[kstar, 1] * g[kstar, 1] + g[kstar, 2] * g[kstar, 2]) / rho[kstar]
        if reach > 0.0 and reach < a0:
            a0 = reach
    for t in range(steps):
        val = surrogate_worst(f, anchor, gam, g, rho, Lc, cb, fe, fl, &kstar, &slope, d)
        if val < best_val:
            best_val = val
            best[0] = f[0]; best[1] = f[1]; best[2] = f[2]
        for i in range(3):
            grad[i] = slope * (g[kstar, i] - rho[kstar] * d[i])
        nrm = sqrt(grad[0] * grad[0] + grad[1] * grad[1] + grad[2] * grad[2])
        if nrm == 0.0:
            break
        a = a0 / (1.0 + t)
        for i in range(3):
            v[i] = f[i] - a * grad[i] / nrm
        project_cap(v, cos_max, f)
    val = surrogate_worst(f, anchor, gam, g, rho, Lc, cb, fe, fl, &kstar, &slope, d)
    if val < best_val:
        best[0] = f[0]; best[1] = f[1]; best[2] = f[2]


cdef double score_column(double* f, Py_ssize_t n, const double[:, :, ::1] qhat,
                         const double complex[:, ::1] beta, const double complex[:, ::1] nu,
                         const double complex[:, ::1] W, double complex[:, ::1] H,
                         double complex[:, ::1] Y, const double[::1] powers, double sigma2, double p,
                         const double[::1] Lc, const double[::1] cb, const double[::1] fe,
                         const double[::1] fl, double[::1] bnew, double[::1] ampnew,
                         double complex[::1] Hn, double complex[:, ::1] Ynew,
                         double[::1] gnew, double[::1] dnew) noexcept nogil:
    """True worst latency with column ``n`` of the boresights replaced by ``f``."""
    cdef Py_ssize_t K = beta.shape[0], k, j
    cdef double bpos
    cdef double complex wc
    for j in range(K):
        bnew[j] = qhat[j, n, 0] * f[0] + qhat[j, n, 1] * f[1] + qhat[j, n, 2] * f[2]
        bpos = bnew[j] if bnew[j] > 0.0 else 0.0
        ampnew[j] = pow(bpos, p)
        Hn[j] = beta[j, n] * ampnew[j] + nu[j, n]
    for k in range(K):
        wc = W[k, n].conjugate()
        for j in range(K):
            Ynew[k, j] = Y[k, j] + wc * (Hn[j] - H[j, n])
    return sinr_into(Ynew, powers, sigma2, gnew, dnew, Lc, cb, fe, fl)


def project_cap_c(v, double cos_max):
    cdef double vin[3]
    cdef double out[3]
    vin[0] = v[0]; vin[1] = v[1]; vin[2] = v[2]
    project_cap(vin, cos_max, out)
    return np.array([out[0], out[1], out[2]])


def mm_pass(double[:, ::1] F, const double[:, :, ::1] qhat, const double complex[:, ::1] beta,
            const double complex[:, ::1] nu, const double complex[:, ::1] W,
            const double[::1] powers, double sigma2, double p, double cos_max,
            const double[::1] Lc, const double[::1] cb, const double[::1] fe,
            const double[::1] fl, int steps, double step0):
    """One sweep over the antennas; ``F`` is updated in place.

    Returns the worst-device equal-split latency at the final ``F``.
    """
    cdef Py_ssize_t K = beta.shape[0], N = beta.shape[1]
    cdef Py_ssize_t k, j, n, m, i
    cdef double[:, ::1] b = np.empty((K, N))
    cdef double[:, ::1] amp = np.empty((K, N))
    cdef double complex[:, ::1] H = np.empty((K, N), dtype=complex)
    cdef double complex[:, ::1] Y = np.empty((K, K), dtype=complex)
    cdef double complex[:, ::1] Ynew = np.empty((K, K), dtype=complex)
    cdef double complex[::1] Hn = np.empty(K, dtype=complex)
    cdef double complex[::1] eta = np.empty(K, dtype=complex)
    cdef double[::1] gam = np.empty(K)
    cdef double[::1] den = np.empty(K)
    cdef double[::1] gnew = np.empty(K)
    cdef double[::1] dnew = np.empty(K)
    cdef double[::1] dpow = np.empty(K)
    cdef double[::1] ampnew = np.empty(K)
    cdef double[::1] bnew = np.empty(K)
    cdef double[::1] rho = np.empty(K)
    cdef double[:, ::1] g = np.empty((K, 3))
    cdef double[:, ::1] gtmp = np.empty((K, 3))
    cdef double complex acc, cc, dbar, wc
    cdef double obj, objnew, eta2, num, Bc, Cc, du, delta, bpos, nrm
    cdef double d1 = p * (p - 1.0)
    cdef double d2 = 2.0 * p * (2.0 * p - 1.0)
    cdef double anchor[3]
    cdef double f[3]
    cdef double v[3]
    cdef double step[3]
    cdef double fbest[3]
    cdef double scale
    cdef int found
    cdef double sqP

    with nogil:
        for k in range(K):
            for n in range(N):
                b[k, n] = qhat[k, n, 0] * F[n, 0] + qhat[k, n, 1] * F[n, 1] + qhat[k, n, 2] * F[n, 2]
                bpos = b[k, n] if b[k, n] > 0.0 else 0.0
                amp[k, n] = pow(bpos, p)
                H[k, n] = beta[k, n] * amp[k, n] + nu[k, n]
        for k in range(K):
            for j in range(K):
                acc = 0.0
                for m in range(N):
                    acc = acc + W[k, m].conjugate() * H[j, m]
                Y[k, j] = acc
        obj = sinr_into(Y, powers, sigma2, gam, den, Lc, cb, fe, fl)

        for n in range(N):
            for i in range(3):
                anchor[i] = F[n, i]
            for k in range(K):
                eta[k] = sqrt(powers[k]) * Y[k, k] / den[k]
                if b[k, n] > 0.0:
                    dpow[k] = p * pow(b[k, n], p - 1.0)
                else:
                    dpow[k] = 0.0
            for k in range(K):
                wc = W[k, n].conjugate()
                eta2 = eta[k].real * eta[k].real + eta[k].imag * eta[k].imag
                sqP = sqrt(powers[k])
                num = 2.0 * sqP * (eta[k].conjugate() * wc * beta[k, n]).real * dpow[k]
                for i in range(3):
                    g[k, i] = num * qhat[k, n, i]
                    gtmp[k, i] = 0.0
                rho[k] = 0.0
                for j in range(K):
                    if j == k:
                        continue
                    cc = wc * beta[j, n]
                    dbar = Y[k, j] - cc * amp[j, n]
                    Bc = 2.0 * (dbar * cc.conjugate()).real
                    Cc = cc.real * cc.real + cc.imag * cc.imag
                    du = dpow[j] * (Bc + 2.0 * Cc * amp[j, n])
                    delta = d1 * fabs(Bc) + d2 * Cc
                    for i in range(3):
                        gtmp[k, i] += powers[j] * du * qhat[j, n, i]
                    rho[k] += powers[j] * delta
                for i in range(3):
                    g[k, i] -= eta2 * gtmp[k, i]
                rho[k] = eta2 * rho[k]

            solve_block(anchor, gam, g, rho, Lc, cb, fe, fl, cos_max, steps, step0, f)
            for i in range(3):
                step[i] = f[i] - anchor[i]

            # the surrogate step is conservative; stretch it while the true
            # objective keeps dropping (scale 1 is the plain MM update)
            found = 0
            scale = 1.0
            while scale <= MAX_STRETCH:
                for i in range(3):
                    v[i] = anchor[i] + scale * step[i]
                project_cap(v, cos_max, f)
                nrm = sqrt(f[0] * f[0] + f[1] * f[1] + f[2] * f[2])
                for i in range(3):
                    f[i] = f[i] / nrm
                objnew = score_column(f, n, qhat, beta, nu, W, H, Y, powers, sigma2, p,
                                      Lc, cb, fe, fl, bnew, ampnew, Hn, Ynew, gnew, dnew)
                if objnew >= obj:
                    break
                for i in range(3):
                    fbest[i] = f[i]
                obj = objnew
                found = 1
                scale *= 2.0

            if found:
                score_column(fbest, n, qhat, beta, nu, W, H, Y, powers, sigma2, p,
                             Lc, cb, fe, fl, bnew, ampnew, Hn, Ynew, gnew, dnew)
                for i in range(3):
                    F[n, i] = fbest[i]
                for j in range(K):
                    b[j, n] = bnew[j]
                    amp[j, n] = ampnew[j]
                    H[j, n] = Hn[j]
                for k in range(K):
                    gam[k] = gnew[k]
                    den[k] = dnew[k]
                    for j in range(K):
                        Y[k, j] = Ynew[k, j]
    return obj
