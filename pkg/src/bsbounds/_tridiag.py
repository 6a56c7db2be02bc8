"""Implicit-shift QL for complex-symmetric tridiagonal matrices.

Complex orthogonal rotations (c^2 + s^2 = 1) keep the tridiagonal form, so
all eigenvalues come out in O(n^2) work.  The rotations are not unitary and
the iteration can break down when f^2 + g^2 vanishes with f, g nonzero; the
routine then reports failure and callers fall back to LAPACK.
"""

import numpy as np
import numba

EPS = 2.220446049250313e-16


@numba.njit(cache=True)
def ql_eigenvalues(diag, off, maxit=60):
    n = diag.shape[0]
    d = diag.copy()
    e = np.zeros(n, np.complex128)
    e[: n - 1] = off
    for l in range(n):
        it = 0
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) <= EPS * dd:
                    break
                m += 1
            if m == l:
                break
            it += 1
            if it > maxit:
                return d, False
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = np.sqrt(g * g + 1.0)
            # sign of r chosen to maximise |g + r|
            if g.real * r.real + g.imag * r.imag < 0:
                r = -r
            g = d[m] - d[l] + e[l] / (g + r)
            s = 1.0 + 0j
            c = 1.0 + 0j
            p = 0j
            i = m - 1
            underflow = False
            while i >= l:
                f = s * e[i]
                b = c * e[i]
                r = np.sqrt(f * f + g * g)
                e[i + 1] = r
                if r == 0:
                    d[i + 1] -= p
                    e[m] = 0
                    underflow = True
                    break
                if abs(r) < 1e-12 * (abs(f) + abs(g)):
                    return d, False
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
            e[m] = 0
    return d, True
