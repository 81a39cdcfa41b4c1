"""Dense symmetric eigensolver: Householder tridiagonalization + implicit QL.

Classic EISPACK-style routines (tred2/tql2) operating on small dense
matrices.  These run inside every iteration of the SDP solver (scaling
points, step lengths, rank profiles), which makes them the hot kernels of
this package; they are compiled with numba unless PPAPEP_DISABLE_NUMBA=1.
Eigenvalues are returned in ascending order.
"""
from __future__ import annotations

import numpy as np

from ._accel import maybe_njit

__all__ = ["EigenError", "eigh", "eigvalsh", "min_eigenvalue"]

_MAX_QL_SWEEPS = 64


class EigenError(np.linalg.LinAlgError):
    """QL iteration failed to converge."""


@maybe_njit
def _tridiag(V, d, e, accumulate):
    # Householder reduction of the symmetric matrix stored in V.
    # On exit d/e hold the tridiagonal; if accumulate, V holds the
    # accumulated orthogonal transformation, otherwise V is scratch.
    n = V.shape[0]
    for j in range(n):
        d[j] = V[n - 1, j]
    for i in range(n - 1, 0, -1):
        scale = 0.0
        h = 0.0
        for k in range(i):
            scale += abs(d[k])
        if scale == 0.0:
            e[i] = d[i - 1]
            for j in range(i):
                d[j] = V[i - 1, j]
                V[i, j] = 0.0
                V[j, i] = 0.0
        else:
            for k in range(i):
                d[k] /= scale
                h += d[k] * d[k]
            f = d[i - 1]
            g = np.sqrt(h)
            if f > 0.0:
                g = -g
            e[i] = scale * g
            h -= f * g
            d[i - 1] = f - g
            for j in range(i):
                e[j] = 0.0
            for j in range(i):
                f = d[j]
                V[j, i] = f
                g = e[j] + V[j, j] * f
                for k in range(j + 1, i):
                    g += V[k, j] * d[k]
                    e[k] += V[k, j] * f
                e[j] = g
            f = 0.0
            for j in range(i):
                e[j] /= h
                f += e[j] * d[j]
            hh = f / (h + h)
            for j in range(i):
                e[j] -= hh * d[j]
            for j in range(i):
                f = d[j]
                g = e[j]
                for k in range(j, i):
                    V[k, j] -= f * e[k] + g * d[k]
                d[j] = V[i - 1, j]
                V[i, j] = 0.0
        d[i] = h
    if accumulate:
        for i in range(n - 1):
            V[n - 1, i] = V[i, i]
            V[i, i] = 1.0
            h = d[i + 1]
            if h != 0.0:
                for k in range(i + 1):
                    d[k] = V[k, i + 1] / h
                for j in range(i + 1):
                    g = 0.0
                    for k in range(i + 1):
                        g += V[k, i + 1] * V[k, j]
                    for k in range(i + 1):
                        V[k, j] -= g * d[k]
            for k in range(i + 1):
                V[k, i + 1] = 0.0
        for j in range(n):
            d[j] = V[n - 1, j]
            V[n - 1, j] = 0.0
        V[n - 1, n - 1] = 1.0
    else:
        # diagonal of the reduced matrix stays in place
        for j in range(n):
            d[j] = V[j, j]
    e[0] = 0.0


@maybe_njit
def _ql(d, e, V, accumulate):
    # Implicit-shift QL sweeps on the tridiagonal (d, e); returns 0 on
    # success, 1 + index of the unconverged eigenvalue otherwise.
    # Eigen{values,vectors} are sorted ascending in place.
    n = d.shape[0]
    for i in range(1, n):
        e[i - 1] = e[i]
    e[n - 1] = 0.0
    f = 0.0
    tst1 = 0.0
    eps = 2.220446049250313e-16
    for l in range(n):
        tst1 = max(tst1, abs(d[l]) + abs(e[l]))
        m = l
        while m < n:
            if abs(e[m]) <= eps * tst1:
                break
            m += 1
        if m > l:
            sweeps = 0
            while True:
                sweeps += 1
                if sweeps > _MAX_QL_SWEEPS:
                    return l + 1
                g = d[l]
                p = (d[l + 1] - g) / (2.0 * e[l])
                r = np.hypot(p, 1.0)
                if p < 0.0:
                    r = -r
                d[l] = e[l] / (p + r)
                d[l + 1] = e[l] * (p + r)
                dl1 = d[l + 1]
                h = g - d[l]
                for i in range(l + 2, n):
                    d[i] -= h
                f += h
                p = d[m]
                c = 1.0
                c2 = c
                c3 = c
                el1 = e[l + 1]
                s = 0.0
                s2 = 0.0
                for i in range(m - 1, l - 1, -1):
                    c3 = c2
                    c2 = c
                    s2 = s
                    g = c * e[i]
                    h = c * p
                    r = np.hypot(p, e[i])
                    e[i + 1] = s * r
                    s = e[i] / r
                    c = p / r
                    p = c * d[i] - s * g
                    d[i + 1] = h + s * (c * g + s * d[i])
                    if accumulate:
                        for k in range(n):
                            h = V[k, i + 1]
                            V[k, i + 1] = s * V[k, i] + c * h
                            V[k, i] = c * V[k, i] - s * h
                p = -s * s2 * c3 * el1 * e[l] / dl1
                e[l] = s * p
                d[l] = c * p
                if abs(e[l]) <= eps * tst1:
                    break
        d[l] = d[l] + f
        e[l] = 0.0
    for i in range(n - 1):
        k = i
        p = d[i]
        for j in range(i + 1, n):
            if d[j] < p:
                k = j
                p = d[j]
        if k != i:
            d[k] = d[i]
            d[i] = p
            if accumulate:
                for j in range(n):
                    p = V[j, i]
                    V[j, i] = V[j, k]
                    V[j, k] = p
    return 0


def _prepare(a):
    V = np.array(a, dtype=np.float64, order="C")
    if V.ndim != 2 or V.shape[0] != V.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {V.shape}")
    if V.size and not np.isfinite(V).all():
        raise EigenError("matrix contains non-finite entries")
    V = np.ascontiguousarray(0.5 * (V + V.T))
    n = V.shape[0]
    return V, np.empty(n), np.empty(n)


def eigh(a):
    """Eigen-decomposition of a symmetric matrix.

    Returns (w, V) with eigenvalues w ascending and orthonormal
    eigenvectors in the columns of V.
    """
    V, d, e = _prepare(a)
    if d.size == 0:
        return d, V
    _tridiag(V, d, e, True)
    status = _ql(d, e, V, True)
    if status:
        raise EigenError(f"QL iteration failed to converge at eigenvalue {status - 1}")
    return d, V


def eigvalsh(a):
    """Eigenvalues (ascending) of a symmetric matrix."""
    V, d, e = _prepare(a)
    if d.size == 0:
        return d
    _tridiag(V, d, e, False)
    status = _ql(d, e, V, False)
    if status:
        raise EigenError(f"QL iteration failed to converge at eigenvalue {status - 1}")
    return d


def min_eigenvalue(a):
    """Smallest eigenvalue of a symmetric matrix."""
    w = eigvalsh(a)
    return float(w[0]) if w.size else 0.0
