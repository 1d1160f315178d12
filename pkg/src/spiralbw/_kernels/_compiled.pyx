# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the kernels in ``_fallback.py``.

The Poisson sampler must match the fallback bit for bit; keep the operation
order identical to the Python version.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, sqrt, floor, fabs
from libc.stdint cimport uint64_t, int64_t

cnp.import_array()

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef double INV_2_53 = 1.0 / 9007199254740992.0
cdef int LOGFACT_TABLE_SIZE = 256
cdef double HALF_LOG_2PI = 0.91893853320467274178
cdef double _LOGFACT[256]


cdef void _build_logfact():
    cdef double acc = 0.0
    cdef int k
    _LOGFACT[0] = 0.0
    for k in range(1, LOGFACT_TABLE_SIZE):
        acc = acc + log(<double>k)
        _LOGFACT[k] = acc


_build_logfact()


cdef inline uint64_t _mix64(uint64_t x) nogil:
    cdef uint64_t z = x + GOLDEN
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline double _uniform(uint64_t key, uint64_t counter) nogil:
    return <double>(_mix64(key + counter) >> 11) * INV_2_53


def stream_key(seed, stream):
    cdef uint64_t s = <uint64_t>(int(seed) & 0xFFFFFFFFFFFFFFFF)
    cdef uint64_t st = <uint64_t>(int(stream) & 0xFFFFFFFFFFFFFFFF)
    return _mix64(s ^ _mix64(st))


def uniform(key, counter):
    return _uniform(<uint64_t>key, <uint64_t>counter)


cdef double _log_factorial(int64_t k) nogil:
    cdef double x, ix, ix2, series
    if k < LOGFACT_TABLE_SIZE:
        return _LOGFACT[k]
    x = k + 1.0
    ix = 1.0 / x
    ix2 = ix * ix
    series = ix * (1.0 / 12.0 - ix2 * (1.0 / 360.0 - ix2 * (1.0 / 1260.0)))
    return (x - 0.5) * log(x) - x + HALF_LOG_2PI + series


def log_factorial(k):
    return _log_factorial(<int64_t>k)


cdef int64_t _poisson_inversion(double mu, uint64_t key, uint64_t base) nogil:
    cdef double u = _uniform(key, base)
    cdef double p = exp(-mu)
    cdef double s = p
    cdef double s_new
    cdef int64_t k = 0
    while u > s:
        k += 1
        p = p * mu / k
        s_new = s + p
        if s_new == s:
            break
        s = s_new
    return k


cdef int64_t _poisson_ptrs(double mu, uint64_t key, uint64_t base) nogil:
    cdef double slam = sqrt(mu)
    cdef double loglam = log(mu)
    cdef double b = 0.931 + 2.53 * slam
    cdef double a = -0.059 + 0.02483 * b
    cdef double invalpha = 1.1239 + 1.1328 / (b - 3.4)
    cdef double vr = 0.9277 - 3.6224 / (b - 2.0)
    cdef uint64_t j = base
    cdef double U, V, us, lhs, rhs
    cdef int64_t k
    while True:
        U = _uniform(key, j) - 0.5
        V = _uniform(key, j + 1)
        j += 2
        us = 0.5 - fabs(U)
        k = <int64_t>floor((2.0 * a / us + b) * U + mu + 0.43)
        if us >= 0.07 and V <= vr:
            return k
        if k < 0 or (us < 0.013 and V > us):
            continue
        lhs = log(V) + log(invalpha) - log(a / (us * us) + b)
        rhs = -mu + k * loglam - _log_factorial(k)
        if lhs <= rhs:
            return k


def poisson_sample(means, seed, stream):
    cdef double[::1] m = np.ascontiguousarray(means, dtype=np.float64)
    cdef Py_ssize_t n = m.shape[0]
    out = np.empty(n, dtype=np.int64)
    cdef int64_t[::1] o = out
    cdef uint64_t key = stream_key(seed, stream)
    cdef Py_ssize_t i
    cdef double mu
    cdef uint64_t base
    with nogil:
        for i in range(n):
            mu = m[i]
            base = (<uint64_t>i) << 32
            if mu <= 0.0:
                o[i] = 0
            elif mu < 30.0:
                o[i] = _poisson_inversion(mu, key, base)
            else:
                o[i] = _poisson_ptrs(mu, key, base)
    return out


def jacobi_eigh(a_in, double tol=1e-14, int max_sweeps=100):
    a_arr = np.array(a_in, dtype=np.complex128, copy=True, order="C")
    cdef double complex[:, ::1] a = a_arr
    cdef Py_ssize_t n = a.shape[0]
    v_arr = np.eye(n, dtype=np.complex128)
    cdef double complex[:, ::1] v = v_arr
    cdef Py_ssize_t p, q, k
    cdef double off, mag, app, aqq, theta, t, c, s, scale = 0.0
    cdef double complex apq, ph, u_qp, u_qq, xp, xq
    cdef int sweeps = 0
    for p in range(n):
        for q in range(n):
            scale += a[p, q].real * a[p, q].real + a[p, q].imag * a[p, q].imag
    scale = sqrt(scale)
    if scale < 1e-300:
        scale = 1e-300
    for sweeps in range(1, max_sweeps + 1):
        off = 0.0
        for p in range(n):
            for q in range(p + 1, n):
                off += a[p, q].real * a[p, q].real + a[p, q].imag * a[p, q].imag
        if sqrt(2.0 * off) <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                mag = sqrt(apq.real * apq.real + apq.imag * apq.imag)
                if mag == 0.0:
                    continue
                ph = apq.conjugate() / mag
                app = a[p, p].real
                aqq = a[q, q].real
                theta = (aqq - app) / (2.0 * mag)
                t = 1.0 / (fabs(theta) + sqrt(theta * theta + 1.0))
                if theta < 0.0:
                    t = -t
                c = 1.0 / sqrt(t * t + 1.0)
                s = t * c
                u_qp = -s * ph
                u_qq = c * ph
                for k in range(n):
                    xp = a[k, p]
                    xq = a[k, q]
                    a[k, p] = xp * c + xq * u_qp
                    a[k, q] = xp * s + xq * u_qq
                for k in range(n):
                    xp = a[p, k]
                    xq = a[q, k]
                    a[p, k] = xp * c + xq * u_qp.conjugate()
                    a[q, k] = xp * s + xq * u_qq.conjugate()
                a[p, q] = 0.0
                a[q, p] = 0.0
                a[p, p] = a[p, p].real
                a[q, q] = a[q, q].real
                for k in range(n):
                    xp = v[k, p]
                    xq = v[k, q]
                    v[k, p] = xp * c + xq * u_qp
                    v[k, q] = xp * s + xq * u_qq
    w = np.empty(n, dtype=np.float64)
    for p in range(n):
        w[p] = a[p, p].real
    return w, v_arr, sweeps


def overlap_sum(r_in, weights_in, factors_in):
    cdef double[::1] r = np.ascontiguousarray(r_in, dtype=np.float64)
    cdef double[::1] wts = np.ascontiguousarray(weights_in, dtype=np.float64)
    cdef double[:, ::1] f = np.ascontiguousarray(factors_in, dtype=np.float64)
    cdef Py_ssize_t n = r.shape[0], m = f.shape[0], i, j
    cdef double total = 0.0, acc, lr, term, half_log2 = 0.5 * log(2.0)
    with nogil:
        for i in range(n):
            if r[i] <= 0.0:
                continue
            lr = log(r[i])
            acc = lr
            for j in range(m):
                term = f[j, 2] - log(f[j, 1]) - (r[i] / f[j, 1]) * (r[i] / f[j, 1])
                if f[j, 0] != 0.0:
                    term = term + f[j, 0] * (half_log2 + lr - log(f[j, 1]))
                acc = acc + f[j, 3] * term
            total += wts[i] * exp(acc)
    return total


cdef void _probabilities(double[::1] t, double complex[:, ::1] phis, double[::1] p) nogil:
    cdef Py_ssize_t d = phis.shape[1], K = phis.shape[0], i, j, k, idx
    cdef double norm = 0.0, acc
    cdef double complex vi
    cdef double complex tm[8][8]
    for i in range(d):
        for j in range(d):
            tm[i][j] = 0.0
        tm[i][i] = t[i]
        norm += t[i] * t[i]
    idx = d
    for i in range(1, d):
        for j in range(i):
            tm[i][j] = t[idx] + 1j * t[idx + 1]
            norm += t[idx] * t[idx] + t[idx + 1] * t[idx + 1]
            idx += 2
    for k in range(K):
        acc = 0.0
        for i in range(d):
            vi = 0.0
            for j in range(i + 1):
                vi = vi + tm[i][j] * phis[k, j]
            acc += vi.real * vi.real + vi.imag * vi.imag
        p[k] = acc / norm


def tomo_probabilities(t_in, phis_in):
    cdef double[::1] t = np.ascontiguousarray(t_in, dtype=np.float64)
    cdef double complex[:, ::1] phis = np.ascontiguousarray(phis_in, dtype=np.complex128)
    if phis.shape[1] > 8:
        raise ValueError("compiled tomography kernel supports dimension <= 8")
    out = np.empty(phis.shape[0], dtype=np.float64)
    cdef double[::1] p = out
    _probabilities(t, phis, p)
    return out


def tomo_nll(t_in, phis_in, counts_in, double scale, double background, bint profile):
    cdef double[::1] t = np.ascontiguousarray(t_in, dtype=np.float64)
    cdef double complex[:, ::1] phis = np.ascontiguousarray(phis_in, dtype=np.complex128)
    cdef double[::1] n = np.ascontiguousarray(counts_in, dtype=np.float64)
    cdef Py_ssize_t K = phis.shape[0], k
    if phis.shape[1] > 8:
        raise ValueError("compiled tomography kernel supports dimension <= 8")
    cdef double[::1] p = np.empty(K, dtype=np.float64)
    cdef double total = 0.0, psum = 0.0, dot = 0.0, lam, out = 0.0
    _probabilities(t, phis, p)
    if profile:
        for k in range(K):
            total += n[k]
            psum += p[k]
            dot += n[k] * log(p[k] if p[k] > 1e-300 else 1e-300)
        if psum <= 0.0:
            return float("inf")
        return total * log(psum) - dot
    for k in range(K):
        lam = scale * p[k] + background
        if lam < 1e-300:
            lam = 1e-300
        out += lam - n[k] * log(lam)
    return out


cdef double _call(objective, double[::1] x) except? -1.0:
    cdef double v = float(objective(np.asarray(x).copy()))
    if v != v or v == float("inf") or v == -float("inf"):
        return float("inf")
    return v


cdef void _order(double[::1] values, Py_ssize_t[::1] idx) noexcept:
    # stable insertion sort of indices by value
    cdef Py_ssize_t m = values.shape[0], i, j, key
    for i in range(m):
        idx[i] = i
    for i in range(1, m):
        key = idx[i]
        j = i - 1
        while j >= 0 and values[idx[j]] > values[key]:
            idx[j + 1] = idx[j]
            j -= 1
        idx[j + 1] = key


cdef bint _diameter_below(double[:, ::1] s, double tol) noexcept:
    cdef Py_ssize_t m = s.shape[0], n = s.shape[1], i, j, k
    cdef double d, dmax = 0.0, diff
    for i in range(1, m):
        d = 0.0
        for k in range(n):
            diff = s[i, k] - s[0, k]
            d += diff * diff
        if d > dmax:
            dmax = d
    dmax = sqrt(dmax)
    if 2.0 * dmax < tol:
        return True
    if dmax >= tol:
        return False
    dmax = 0.0
    for i in range(m):
        for j in range(i + 1, m):
            d = 0.0
            for k in range(n):
                diff = s[i, k] - s[j, k]
                d += diff * diff
            if d > dmax:
                dmax = d
    return sqrt(dmax) < tol


def nelder_mead(objective, x0_in, double f0, double tolerance, long budget, step):
    cdef double[::1] x0 = np.ascontiguousarray(x0_in, dtype=np.float64)
    cdef Py_ssize_t n = x0.shape[0], i, k
    cdef double[:, ::1] s = np.empty((n + 1, n), dtype=np.float64)
    cdef double[:, ::1] tmp = np.empty((n + 1, n), dtype=np.float64)
    cdef double[::1] values = np.empty(n + 1, dtype=np.float64)
    cdef double[::1] tmpv = np.empty(n + 1, dtype=np.float64)
    cdef Py_ssize_t[::1] idx = np.empty(n + 1, dtype=np.intp)
    cdef double[::1] cen = np.empty(n, dtype=np.float64)
    cdef double[::1] xr = np.empty(n, dtype=np.float64)
    cdef double[::1] xe = np.empty(n, dtype=np.float64)
    cdef double[::1] xc = np.empty(n, dtype=np.float64)
    cdef double[::1] stp
    cdef double fr, fe, fc
    cdef long it = 0
    cdef bint has_step = step is not None
    if has_step:
        stp = np.ascontiguousarray(step, dtype=np.float64)
    for i in range(n + 1):
        for k in range(n):
            s[i, k] = x0[k]
    for i in range(n):
        if has_step:
            s[i + 1, i] = s[i + 1, i] + stp[i]
        elif x0[i] != 0.0:
            s[i + 1, i] = s[i + 1, i] * 1.05
        else:
            s[i + 1, i] = 0.00025
    values[0] = f0
    for i in range(1, n + 1):
        values[i] = _call(objective, s[i])
    while it < budget:
        it += 1
        _order(values, idx)
        for i in range(n + 1):
            tmpv[i] = values[idx[i]]
            for k in range(n):
                tmp[i, k] = s[idx[i], k]
        s[:, :] = tmp
        values[:] = tmpv
        if values[0] == values[n] or _diameter_below(s, tolerance):
            return np.asarray(s[0]).copy(), values[0], it, True
        for k in range(n):
            cen[k] = 0.0
        for i in range(n):
            for k in range(n):
                cen[k] = cen[k] + s[i, k]
        for k in range(n):
            cen[k] = cen[k] / n
            xr[k] = cen[k] + 1.0 * (cen[k] - s[n, k])
        fr = _call(objective, xr)
        if fr < values[0]:
            for k in range(n):
                xe[k] = cen[k] + 2.0 * (cen[k] - s[n, k])
            fe = _call(objective, xe)
            if fe < fr:
                s[n, :] = xe
                values[n] = fe
            else:
                s[n, :] = xr
                values[n] = fr
            continue
        if fr < values[n - 1]:
            s[n, :] = xr
            values[n] = fr
            continue
        if fr < values[n]:
            for k in range(n):
                xc[k] = cen[k] + 0.5 * (xr[k] - cen[k])
            fc = _call(objective, xc)
            if fc <= fr:
                s[n, :] = xc
                values[n] = fc
                continue
        else:
            for k in range(n):
                xc[k] = cen[k] + 0.5 * (s[n, k] - cen[k])
            fc = _call(objective, xc)
            if fc < values[n]:
                s[n, :] = xc
                values[n] = fc
                continue
        for i in range(1, n + 1):
            for k in range(n):
                s[i, k] = s[0, k] + 0.5 * (s[i, k] - s[0, k])
            values[i] = _call(objective, s[i])
    _order(values, idx)
    return np.asarray(s[idx[0]]).copy(), values[idx[0]], it, False
