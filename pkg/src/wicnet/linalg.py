"""Matrix machinery for well-posedness certification.

Two deliberately separate routes live here:

* fast float paths (Gram matrices, pivoted-LU log-determinants, solver
  backed left inverses) used by the layers, and
* an exact-rational route (Fraction RREF rank, fraction Gaussian
  elimination determinants) used by the theorem oracles, where no
  tolerance may enter.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np

from .errors import DimensionError, WellPosednessError

# a pivot below this fraction of the largest entry counts as zero
SINGULAR_RTOL = 1e-12


def _as_matrix(w):
    a = np.asarray(w, dtype=np.float64)
    if a.ndim != 2:
        raise DimensionError(f"expected a 2-D matrix, got shape {a.shape}")
    return a


def gram(w):
    """Return w^T w, symmetrized so the result is symmetric bit-exactly."""
    a = _as_matrix(w)
    g = a.T @ a
    return (g + g.T) / 2.0


def log_abs_det(a):
    """(sign, log|det|) of a square matrix via hand-rolled pivoted LU.

    Numerically singular input (pivot below SINGULAR_RTOL times the largest
    entry magnitude) returns (0, -inf); singularity is a state, not an error.
    """
    a = _as_matrix(a).copy()
    n, m = a.shape
    if n != m:
        raise DimensionError(f"log_abs_det needs a square matrix, got {a.shape}")
    if n == 0:
        return 1, 0.0
    tol = SINGULAR_RTOL * float(np.max(np.abs(a)))
    sign = 1
    logabs = 0.0
    for k in range(n):
        p = k + int(np.argmax(np.abs(a[k:, k])))
        piv = a[p, k]
        if abs(piv) <= tol:
            return 0, -math.inf
        if p != k:
            a[[k, p]] = a[[p, k]]
            sign = -sign
        if piv < 0:
            sign = -sign
        logabs += math.log(abs(piv))
        if k + 1 < n:
            a[k + 1:, k] /= piv
            a[k + 1:, k + 1:] -= a[k + 1:, k:k + 1] * a[k:k + 1, k + 1:]
    return sign, logabs


def cholesky(g):
    """Lower-triangular L with L L^T = g; raises on a non-SPD matrix."""
    g = _as_matrix(g)
    n = g.shape[0]
    if g.shape[1] != n:
        raise DimensionError("cholesky needs a square matrix")
    low = np.zeros_like(g)
    for j in range(n):
        d = g[j, j] - low[j, :j] @ low[j, :j]
        if d <= 0.0 or not np.isfinite(d):
            raise WellPosednessError(f"matrix not positive definite at pivot {j}")
        low[j, j] = math.sqrt(d)
        if j + 1 < n:
            low[j + 1:, j] = (g[j + 1:, j] - low[j + 1:, :j] @ low[j, :j]) / low[j, j]
    return low


def solve_tri(low, b, lower=True):
    """Solve a triangular system by substitution (columns of b in parallel)."""
    n = low.shape[0]
    x = np.array(b, dtype=np.float64, copy=True)
    if x.ndim == 1:
        x = x[:, None]
        squeeze = True
    else:
        squeeze = False
    order = range(n) if lower else range(n - 1, -1, -1)
    for i in order:
        if lower:
            x[i] -= low[i, :i] @ x[:i]
        else:
            x[i] -= low[i, i + 1:] @ x[i + 1:]
        x[i] /= low[i, i]
    return x[:, 0] if squeeze else x


def lu_solve(a, b):
    """Solve a x = b with partial pivoting; raises WellPosednessError when
    a pivot falls below the singularity tolerance."""
    a = _as_matrix(a).copy()
    n = a.shape[0]
    x = np.array(b, dtype=np.float64, copy=True)
    if x.ndim == 1:
        x = x[:, None]
        squeeze = True
    else:
        squeeze = False
    tol = SINGULAR_RTOL * float(np.max(np.abs(a))) if a.size else 0.0
    for k in range(n):
        p = k + int(np.argmax(np.abs(a[k:, k])))
        if abs(a[p, k]) <= tol:
            raise WellPosednessError("singular system in lu_solve",
                                     log_abs_det=-math.inf)
        if p != k:
            a[[k, p]] = a[[p, k]]
            x[[k, p]] = x[[p, k]]
        if k + 1 < n:
            mults = a[k + 1:, k] / a[k, k]
            a[k + 1:, k + 1:] -= np.outer(mults, a[k, k + 1:])
            x[k + 1:] -= np.outer(mults, x[k])
    for k in range(n - 1, -1, -1):
        x[k] -= a[k, k + 1:] @ x[k + 1:]
        x[k] /= a[k, k]
    return x[:, 0] if squeeze else x


def _solve_spd(g, rhs):
    """LAPACK solve of a symmetric system, mapped onto the error contract."""
    try:
        return np.linalg.solve(g, rhs)
    except np.linalg.LinAlgError:
        raise WellPosednessError("singular system in solve",
                                 log_abs_det=-math.inf)


def inv_gram(g):
    """Inverse of an SPD Gram matrix."""
    g = _as_matrix(g)
    return _solve_spd(g, np.eye(g.shape[0]))


def left_inverse(w):
    """Normal-equation left inverse (w^T w)^{-1} w^T of a full-column-rank
    matrix; raises WellPosednessError (carrying log|det| of the Gram matrix)
    when the Gram matrix is singular."""
    a = _as_matrix(w)
    g = gram(a)
    sign, logdet = log_abs_det(g)
    if sign == 0:
        raise WellPosednessError(
            f"Gram matrix of shape-{a.shape} kernel is singular",
            log_abs_det=logdet)
    return _solve_spd(g, a.T)


# ---------------------------------------------------------------------------
# exact-rational route


def to_fractions(rows):
    """Validate and convert nested data to a rectangular Fraction matrix."""
    if isinstance(rows, np.ndarray):
        rows = rows.tolist()
    mat = [[Fraction(v) for v in r] for r in rows]
    if not mat or not mat[0]:
        raise DimensionError("rational matrix must be nonempty")
    width = len(mat[0])
    if any(len(r) != width for r in mat):
        raise DimensionError("ragged rational matrix")
    return mat


def rref(rows):
    """Reduced row-echelon form over exact rationals; returns (mat, rank)."""
    mat = [r[:] for r in to_fractions(rows)]
    nrows, ncols = len(mat), len(mat[0])
    lead = 0
    for col in range(ncols):
        pivot = next((i for i in range(lead, nrows) if mat[i][col] != 0), None)
        if pivot is None:
            continue
        mat[lead], mat[pivot] = mat[pivot], mat[lead]
        inv = Fraction(1) / mat[lead][col]
        mat[lead] = [v * inv for v in mat[lead]]
        for i in range(nrows):
            if i != lead and mat[i][col] != 0:
                f = mat[i][col]
                mat[i] = [a - f * b for a, b in zip(mat[i], mat[lead])]
        lead += 1
        if lead == nrows:
            break
    return mat, lead


def rank_exact(rows):
    """Exact rank via rational RREF; no tolerance involved."""
    return rref(rows)[1]


def det_exact(rows):
    """Exact determinant via rational Gaussian elimination."""
    mat = [r[:] for r in to_fractions(rows)]
    n = len(mat)
    if len(mat[0]) != n:
        raise DimensionError("det_exact needs a square matrix")
    det = Fraction(1)
    for k in range(n):
        pivot = next((i for i in range(k, n) if mat[i][k] != 0), None)
        if pivot is None:
            return Fraction(0)
        if pivot != k:
            mat[k], mat[pivot] = mat[pivot], mat[k]
            det = -det
        det *= mat[k][k]
        invp = Fraction(1) / mat[k][k]
        for i in range(k + 1, n):
            if mat[i][k] != 0:
                f = mat[i][k] * invp
                mat[i] = [a - f * b for a, b in zip(mat[i], mat[k])]
    return det


def gram_exact(rows):
    """w^T w over exact rationals."""
    mat = to_fractions(rows)
    nrows, ncols = len(mat), len(mat[0])
    out = [[Fraction(0)] * ncols for _ in range(ncols)]
    for i in range(ncols):
        for j in range(ncols):
            out[i][j] = sum((mat[k][i] * mat[k][j] for k in range(nrows)),
                            Fraction(0))
    return out
