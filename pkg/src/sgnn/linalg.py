"""Dense float64 linear algebra: products, norms, Jacobi SVD and symmetric eigensolver.

Matrices are plain 2-D ``numpy.ndarray`` objects of dtype float64. The
factorizations are one-sided (Hestenes) Jacobi for the SVD and two-sided cyclic
Jacobi for symmetric eigenproblems, both using a round-robin pair ordering so
that every step rotates ``n // 2`` disjoint column pairs at once.
"""
from __future__ import annotations

from functools import lru_cache
from typing import NamedTuple

import numpy as np

from .errors import ContractError, NumericError, ShapeError

MAX_SWEEPS = 100
JACOBI_TOL = 1e-12
RANK_RTOL = 1e-10


class SvdResult(NamedTuple):
    u: np.ndarray  # (m, r)
    sigma: np.ndarray  # (r,), descending
    vt: np.ndarray  # (r, n)
    rank: int


class SymEigResult(NamedTuple):
    vectors: np.ndarray  # columns are eigenvectors
    values: np.ndarray  # descending


def as_matrix(a, name="matrix") -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {a.shape}")
    return a


def _require_finite(a: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(a)):
        raise NumericError(f"{what} produced non-finite entries")
    return a


def matmul(a, b) -> np.ndarray:
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return _require_finite(a @ b, "matmul")


def frobenius_norm(a) -> float:
    a = np.asarray(a, dtype=np.float64)
    return float(np.sqrt(np.sum(a * a)))


def inner(a, b) -> float:
    """Trace inner product <A, B> = sum_ij A_ij B_ij."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"inner product needs equal shapes, got {a.shape} and {b.shape}")
    return float(np.sum(a * b))


def matrix_angle(b1, b2) -> float:
    """Angle in [0, pi] between two equal-shape matrices under the trace inner product."""
    n1 = frobenius_norm(b1)
    n2 = frobenius_norm(b2)
    if n1 == 0.0 or n2 == 0.0:
        raise ContractError("matrix_angle is undefined for a zero-norm argument")
    c = inner(b1, b2) / (n1 * n2)
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


@lru_cache(maxsize=64)
def _round_robin(n: int) -> tuple[tuple[np.ndarray, np.ndarray], ...]:
    """Pairings of 0..n-1 such that each unordered pair meets exactly once per sweep."""
    m = n + (n % 2)
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        p, q = [], []
        for i in range(m // 2):
            a, b = players[i], players[m - 1 - i]
            if a < n and b < n:
                p.append(min(a, b))
                q.append(max(a, b))
        rounds.append((np.array(p, dtype=np.intp), np.array(q, dtype=np.intp)))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return tuple(rounds)


def _fix_signs(cols: np.ndarray, *others: np.ndarray) -> None:
    """Flip columns in place so the first non-negligible entry is positive.

    ``others`` are flipped along their matching axis (rows of ``vt`` etc.).
    """
    if cols.size == 0:
        return
    mags = np.abs(cols)
    thresh = 1e-10 * mags.max(axis=0, keepdims=True)
    first = np.argmax(mags > thresh, axis=0)
    signs = np.sign(cols[first, np.arange(cols.shape[1])])
    signs[signs == 0] = 1.0
    cols *= signs
    for o in others:
        if o.shape[0] == signs.shape[0] and o.ndim == 2 and o is not cols:
            o *= signs[:, None]


def _complete_basis(q: np.ndarray, count: int) -> np.ndarray:
    """Extend the orthonormal columns ``q`` (m x r) with ``count`` more, deterministically."""
    m = q.shape[0]
    basis = [q[:, j] for j in range(q.shape[1])]
    out = []
    for i in range(m):
        if len(out) == count:
            break
        v = np.zeros(m)
        v[i] = 1.0
        for _ in range(2):  # re-orthogonalize once
            for b in basis:
                v -= (b @ v) * b
        nv = np.linalg.norm(v)
        if nv > 1e-8:
            v /= nv
            basis.append(v)
            out.append(v)
    return np.column_stack(out) if out else np.zeros((m, 0))


def _jacobi_svd_tall(a: np.ndarray):
    m, n = a.shape
    g = a.copy()
    v = np.eye(n)
    rounds = _round_robin(n)
    for sweep in range(MAX_SWEEPS):
        rotated = False
        for p, q in rounds:
            if p.size == 0:
                continue
            gp, gq = g[:, p], g[:, q]
            alpha = np.einsum("ij,ij->j", gp, gp)
            beta = np.einsum("ij,ij->j", gq, gq)
            gamma = np.einsum("ij,ij->j", gp, gq)
            scale = np.sqrt(alpha * beta)
            act = (np.abs(gamma) > JACOBI_TOL * scale) & (scale > 0.0)
            if not act.any():
                continue
            rotated = True
            p, q = p[act], q[act]
            alpha, beta, gamma = alpha[act], beta[act], gamma[act]
            zeta = (beta - alpha) / (2.0 * gamma)
            t = np.where(zeta >= 0, 1.0, -1.0) / (np.abs(zeta) + np.sqrt(1.0 + zeta * zeta))
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = c * t
            gp, gq = g[:, p], g[:, q]
            g[:, p] = c * gp - s * gq
            g[:, q] = s * gp + c * gq
            vp, vq = v[:, p], v[:, q]
            v[:, p] = c * vp - s * vq
            v[:, q] = s * vp + c * vq
        if not rotated:
            return g, v, sweep + 1
    raise NumericError(f"Jacobi SVD did not converge within {MAX_SWEEPS} sweeps")


def svd(a) -> SvdResult:
    """Thin SVD ``a = u @ diag(sigma) @ vt`` with ``r = min(m, n)`` components.

    ``rank`` counts singular values above ``1e-10 * sigma[0]``. Left singular
    vectors for numerically zero singular values are an orthonormal completion.
    """
    a = as_matrix(a, "a")
    m, n = a.shape
    if m < 1 or n < 1:
        raise ShapeError("svd needs at least one row and one column")
    _require_finite(a, "svd input")
    if m < n:
        r = svd(a.T)
        u = r.vt.T.copy()
        vt = r.u.T.copy()
        _fix_signs(u, vt)
        return SvdResult(u, r.sigma, vt, r.rank)

    g, v, _ = _jacobi_svd_tall(a)
    sigma = np.sqrt(np.einsum("ij,ij->j", g, g))
    order = np.argsort(-sigma, kind="stable")
    sigma = sigma[order]
    g = g[:, order]
    v = v[:, order]
    top = sigma[0] if sigma.size else 0.0
    rank = int(np.sum(sigma > RANK_RTOL * top)) if top > 0 else 0
    u = np.zeros((m, n))
    u[:, :rank] = g[:, :rank] / sigma[:rank]
    if rank < n:
        u[:, rank:] = _complete_basis(u[:, :rank], n - rank)
    vt = v.T.copy()
    _fix_signs(u, vt)
    return SvdResult(u, sigma, vt, rank)


def _check_symmetric(a: np.ndarray) -> None:
    if a.shape[0] != a.shape[1]:
        raise ContractError(f"expected a square matrix, got {a.shape}")
    scale = max(1.0, float(np.max(np.abs(a))) if a.size else 1.0)
    if a.size and np.max(np.abs(a - a.T)) > 1e-10 * scale:
        raise ContractError("matrix is not symmetric within 1e-10")


def sym_eig(a) -> SymEigResult:
    """Full eigendecomposition of a symmetric matrix, eigenvalues descending."""
    a = as_matrix(a, "a")
    _check_symmetric(a)
    _require_finite(a, "sym_eig input")
    n = a.shape[0]
    w = 0.5 * (a + a.T)
    v = np.eye(n)
    norm = frobenius_norm(w)
    rounds = _round_robin(n)
    converged = n <= 1 or norm == 0.0
    for _ in range(MAX_SWEEPS):
        if converged:
            break
        rotated = False
        for p, q in rounds:
            if p.size == 0:
                continue
            apq = w[p, q]
            act = np.abs(apq) > JACOBI_TOL * norm
            if not act.any():
                continue
            rotated = True
            p, q, apq = p[act], q[act], apq[act]
            theta = (w[q, q] - w[p, p]) / (2.0 * apq)
            t = np.where(theta >= 0, 1.0, -1.0) / (np.abs(theta) + np.sqrt(theta * theta + 1.0))
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            cp, cq = w[:, p], w[:, q]
            w[:, p] = c * cp - s * cq
            w[:, q] = s * cp + c * cq
            rp, rq = w[p, :], w[q, :]
            w[p, :] = c[:, None] * rp - s[:, None] * rq
            w[q, :] = s[:, None] * rp + c[:, None] * rq
            vp, vq = v[:, p], v[:, q]
            v[:, p] = c * vp - s * vq
            v[:, q] = s * vp + c * vq
        converged = not rotated
    if not converged:
        raise NumericError(f"Jacobi eigensolver did not converge within {MAX_SWEEPS} sweeps")
    values = np.diag(w).copy()
    order = np.argsort(-values, kind="stable")
    values = values[order]
    v = v[:, order].copy()
    _fix_signs(v)
    return SymEigResult(v, values)
