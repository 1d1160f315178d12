"""Pure-Python/numpy implementations of the hot kernels.

Every function here has a twin in ``_compiled.pyx`` with the same signature.
The Poisson sampler must stay bitwise identical between the two, so the
arithmetic is written out step by step; do not "simplify" it.
"""
import math

import numpy as np

MASK64 = 0xFFFFFFFFFFFFFFFF
GOLDEN = 0x9E3779B97F4A7C15
INV_2_53 = 1.0 / 9007199254740992.0
LOGFACT_TABLE_SIZE = 256
HALF_LOG_2PI = 0.91893853320467274178


def _mix64(x):
    z = (x + GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def stream_key(seed, stream):
    return _mix64((seed & MASK64) ^ _mix64(stream & MASK64))


def uniform(key, counter):
    return (_mix64((key + counter) & MASK64) >> 11) * INV_2_53


def _build_logfact():
    table = [0.0] * LOGFACT_TABLE_SIZE
    acc = 0.0
    for k in range(1, LOGFACT_TABLE_SIZE):
        acc = acc + math.log(k)
        table[k] = acc
    return table


_LOGFACT = _build_logfact()


def log_factorial(k):
    if k < LOGFACT_TABLE_SIZE:
        return _LOGFACT[k]
    x = k + 1.0
    ix = 1.0 / x
    ix2 = ix * ix
    series = ix * (1.0 / 12.0 - ix2 * (1.0 / 360.0 - ix2 * (1.0 / 1260.0)))
    return (x - 0.5) * math.log(x) - x + HALF_LOG_2PI + series


def _poisson_inversion(mu, key, base):
    u = uniform(key, base)
    p = math.exp(-mu)
    s = p
    k = 0
    while u > s:
        k += 1
        p = p * mu / k
        s_new = s + p
        if s_new == s:
            break
        s = s_new
    return k


def _poisson_ptrs(mu, key, base):
    slam = math.sqrt(mu)
    loglam = math.log(mu)
    b = 0.931 + 2.53 * slam
    a = -0.059 + 0.02483 * b
    invalpha = 1.1239 + 1.1328 / (b - 3.4)
    vr = 0.9277 - 3.6224 / (b - 2.0)
    j = base
    while True:
        U = uniform(key, j) - 0.5
        V = uniform(key, j + 1)
        j += 2
        us = 0.5 - abs(U)
        k = math.floor((2.0 * a / us + b) * U + mu + 0.43)
        if us >= 0.07 and V <= vr:
            return k
        if k < 0 or (us < 0.013 and V > us):
            continue
        lhs = math.log(V) + math.log(invalpha) - math.log(a / (us * us) + b)
        rhs = -mu + k * loglam - log_factorial(k)
        if lhs <= rhs:
            return k


def poisson_sample(means, seed, stream):
    means = np.ascontiguousarray(means, dtype=np.float64)
    out = np.empty(means.shape[0], dtype=np.int64)
    key = stream_key(int(seed), int(stream))
    for i in range(means.shape[0]):
        mu = float(means[i])
        base = i << 32
        if mu <= 0.0:
            out[i] = 0
        elif mu < 30.0:
            out[i] = _poisson_inversion(mu, key, base)
        else:
            out[i] = _poisson_ptrs(mu, key, base)
    return out


def jacobi_eigh(a, tol=1e-14, max_sweeps=100):
    """Cyclic complex Jacobi. Returns unsorted (eigenvalues, eigenvectors, sweeps)."""
    a = np.array(a, dtype=np.complex128, copy=True)
    n = a.shape[0]
    v = np.eye(n, dtype=np.complex128)
    scale = max(np.sqrt(np.sum(np.abs(a) ** 2)), 1e-300)
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        off = 0.0
        for p in range(n):
            for q in range(p + 1, n):
                off += abs(a[p, q]) ** 2
        if math.sqrt(2.0 * off) <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                mag = abs(apq)
                if mag == 0.0:
                    continue
                phase = apq / mag
                app = a[p, p].real
                aqq = a[q, q].real
                theta = (aqq - app) / (2.0 * mag)
                t = 1.0 / (abs(theta) + math.sqrt(theta * theta + 1.0))
                if theta < 0.0:
                    t = -t
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                # U on (p, q): [[c, s], [-s*conj(phase), c*conj(phase)]]
                ph = phase.conjugate()
                u_qp = -s * ph
                u_qq = c * ph
                colp = a[:, p].copy()
                colq = a[:, q].copy()
                a[:, p] = colp * c + colq * u_qp
                a[:, q] = colp * s + colq * u_qq
                rowp = a[p, :].copy()
                rowq = a[q, :].copy()
                a[p, :] = rowp * c + rowq * u_qp.conjugate()
                a[q, :] = rowp * s + rowq * u_qq.conjugate()
                a[p, q] = 0.0
                a[q, p] = 0.0
                a[p, p] = a[p, p].real
                a[q, q] = a[q, q].real
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = vp * c + vq * u_qp
                v[:, q] = vp * s + vq * u_qq
    return np.real(np.diag(a)).copy(), v, sweeps


def overlap_sum(r, weights, factors):
    """Sum_i w_i r_i prod_f R_f(r_i) evaluated in log space.

    ``factors`` is an (m, 4) float array with rows (|l|, waist, log_norm, power)
    where log R = log_norm - log(waist) + |l| log(sqrt2 r / waist) - r^2/waist^2.
    """
    r = np.asarray(r, dtype=np.float64)
    logs = np.log(r)
    with np.errstate(divide="ignore"):
        acc = logs.copy()
        for absl, w, lognorm, power in np.asarray(factors, dtype=np.float64):
            term = lognorm - math.log(w) - (r / w) ** 2
            if absl != 0.0:
                term = term + absl * (0.5 * math.log(2.0) + logs - math.log(w))
            acc = acc + power * term
    return float(np.sum(np.asarray(weights) * np.exp(acc)))


def tomo_probabilities(t, phis):
    """Probabilities ||T phi_k||^2 / ||T||_F^2 for a lower-triangular T built from t."""
    d = phis.shape[1]
    tmat = cholesky_factor(t, d)
    v = phis @ tmat.T
    p = np.sum(v.real ** 2 + v.imag ** 2, axis=1)
    norm = np.sum(tmat.real ** 2 + tmat.imag ** 2)
    return p / norm


def cholesky_factor(t, d):
    tmat = np.zeros((d, d), dtype=np.complex128)
    tmat[np.diag_indices(d)] = t[:d]
    k = d
    for i in range(1, d):
        for j in range(i):
            tmat[i, j] = t[k] + 1j * t[k + 1]
            k += 2
    return tmat


def tomo_nll(t, phis, counts, scale, background, profile):
    """Poisson negative log-likelihood (constant terms dropped).

    With ``profile`` true the scale is profiled out analytically and
    ``scale``/``background`` are ignored.
    """
    p = tomo_probabilities(np.asarray(t, dtype=np.float64), phis)
    if profile:
        total = float(np.sum(counts))
        psum = float(np.sum(p))
        if psum <= 0.0:
            return math.inf
        logs = np.log(np.maximum(p, 1e-300))
        return total * math.log(psum) - float(np.dot(counts, logs))
    lam = scale * p + background
    lam = np.maximum(lam, 1e-300)
    return float(np.sum(lam) - np.dot(counts, np.log(lam)))


def _simplex_diameter_below(simplex, tol):
    # cheap bounds first: diameter lies in [dmax, 2 dmax] with dmax measured from vertex 0
    d0 = np.sqrt(np.sum((simplex[1:] - simplex[0]) ** 2, axis=1))
    dmax = float(np.max(d0))
    if 2.0 * dmax < tol:
        return True
    if dmax >= tol:
        return False
    diffs = simplex[:, None, :] - simplex[None, :, :]
    return float(np.sqrt(np.max(np.sum(diffs**2, axis=-1)))) < tol


def _safe(objective, x):
    v = float(objective(x))
    return v if math.isfinite(v) else math.inf


def nelder_mead(objective, x0, f0, tolerance, budget, step):
    """Standard-coefficient Nelder-Mead. Returns (best, f_best, iterations, converged)."""
    x0 = np.asarray(x0, dtype=np.float64)
    n = x0.size
    simplex = np.repeat(x0[None, :], n + 1, axis=0)
    for i in range(n):
        if step is not None:
            simplex[i + 1, i] += step[i]
        elif x0[i] != 0.0:
            simplex[i + 1, i] *= 1.05
        else:
            simplex[i + 1, i] = 0.00025
    values = np.empty(n + 1)
    values[0] = f0
    for i in range(1, n + 1):
        values[i] = _safe(objective, simplex[i].copy())
    it = 0
    while it < budget:
        it += 1
        order = np.argsort(values, kind="stable")
        simplex = simplex[order]
        values = values[order]
        if values[0] == values[n] or _simplex_diameter_below(simplex, tolerance):
            return simplex[0].copy(), float(values[0]), it, True
        centroid = np.zeros(n)
        for i in range(n):
            centroid = centroid + simplex[i]
        centroid = centroid / n
        worst = simplex[n].copy()
        xr = centroid + 1.0 * (centroid - worst)
        fr = _safe(objective, xr)
        if fr < values[0]:
            xe = centroid + 2.0 * (centroid - worst)
            fe = _safe(objective, xe)
            if fe < fr:
                simplex[n], values[n] = xe, fe
            else:
                simplex[n], values[n] = xr, fr
            continue
        if fr < values[n - 1]:
            simplex[n], values[n] = xr, fr
            continue
        if fr < values[n]:
            xc = centroid + 0.5 * (xr - centroid)
            fc = _safe(objective, xc)
            if fc <= fr:
                simplex[n], values[n] = xc, fc
                continue
        else:
            xc = centroid + 0.5 * (worst - centroid)
            fc = _safe(objective, xc)
            if fc < values[n]:
                simplex[n], values[n] = xc, fc
                continue
        best = simplex[0].copy()
        for i in range(1, n + 1):
            simplex[i] = best + 0.5 * (simplex[i] - best)
            values[i] = _safe(objective, simplex[i].copy())
    order = np.argsort(values, kind="stable")
    return simplex[order[0]].copy(), float(values[order[0]]), it, False
