"""Compiled kernels: Householder tridiagonalization and implicit QL."""
import math

import numba
import numpy as np

EPS = np.finfo(np.float64).eps
SAFMIN = np.finfo(np.float64).tiny


@numba.njit(cache=True)
def householder_tridiagonal(a):
    """Reduce a Hermitian matrix (lower triangle read, destroyed) to real
    tridiagonal form.  Works for float64 and complex128 input.

    Complex reflectors leave complex subdiagonal entries; a diagonal unitary
    similarity makes them real, which amounts to taking moduli.
    """
    n = a.shape[0]
    d = np.empty(n)
    e = np.zeros(n)
    v = np.zeros(n, dtype=a.dtype)
    p = np.zeros(n, dtype=a.dtype)
    for k in range(n - 2):
        alpha = 0.0
        for i in range(k + 1, n):
            alpha += abs(a[i, k]) ** 2
        alpha = math.sqrt(alpha)
        if alpha == 0.0:
            e[k] = 0.0
            continue
        x0 = a[k + 1, k]
        if x0 != 0:
            phase = x0 / abs(x0)
        else:
            phase = x0 * 0 + 1.0
        for i in range(k + 1, n):
            v[i] = a[i, k]
        v[k + 1] = x0 + phase * alpha
        vnorm2 = 0.0
        for i in range(k + 1, n):
            vnorm2 += abs(v[i]) ** 2
        tau = 2.0 / vnorm2
        for i in range(k + 1, n):
            p[i] = 0.0
        # p = A v using the lower triangle only
        for j in range(k + 1, n):
            vj = v[j]
            s = a[j, j] * vj
            for i in range(j + 1, n):
                aij = a[i, j]
                p[i] += aij * vj
                s += aij.conjugate() * v[i]
            p[j] += s
        kk = 0.0
        for i in range(k + 1, n):
            p[i] *= tau
            kk += (v[i].conjugate() * p[i]).real
        kk *= 0.5 * tau
        for i in range(k + 1, n):
            p[i] -= kk * v[i]
        for j in range(k + 1, n):
            vj = v[j].conjugate()
            pj = p[j].conjugate()
            for i in range(j, n):
                a[i, j] -= v[i] * pj + p[i] * vj
        e[k] = alpha
    for i in range(n):
        d[i] = a[i, i].real
    if n >= 2:
        e[n - 2] = abs(a[n - 1, n - 2])
    return d, e


@numba.njit(cache=True)
def implicit_ql(d, e, thresh, max_sweeps):
    """Eigenvalues of the symmetric tridiagonal (d, e[:-1]) in place in ``d``.

    Wilkinson-shifted implicit QL with deflation when
    ``|e_i| <= thresh * (|d_i| + |d_{i+1}|)``.  Returns the total number of
    sweeps, or ``-(l + 1)`` if eigenvalue ``l`` failed to converge.
    """
    n = d.shape[0]
    total = 0
    for l in range(n):
        sweeps = 0
        while True:
            m = l
            while m < n - 1:
                if abs(e[m]) <= thresh * (abs(d[m]) + abs(d[m + 1])) or abs(e[m]) <= SAFMIN:
                    break
                m += 1
            if m == l:
                break
            sweeps += 1
            total += 1
            if sweeps > max_sweeps:
                return -(l + 1)
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = math.hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + (r if g >= 0.0 else -r))
            s = 1.0
            c = 1.0
            p = 0.0
            underflow = False
            i = m - 1
            while i >= l:
                f = s * e[i]
                b = c * e[i]
                r = math.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    underflow = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                i -= 1
            if underflow:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0
    return total
