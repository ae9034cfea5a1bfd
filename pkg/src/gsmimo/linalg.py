"""Dense complex linear algebra shared by the detectors.

Every routine accepts stacked operands: matrices are ``(..., K, K)`` and
vectors ``(..., K)``, with leading axes broadcast numpy-style. Operation
counts (see :mod:`gsmimo.complexity`) are tallied per single instance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .complexity import FACTOR, INIT, SOLVE, OpCount, tally
from .errors import InvalidInputError, NotPositiveDefiniteError, SingularMatrixError

# relative size of round-off tolerated in the imaginary part of a Hermitian diagonal
DIAG_IMAG_TOL = 1e-10


@dataclass(frozen=True)
class MatrixSplit:
    """``W = D + L + L^H`` with ``D`` kept as a real vector."""

    diag: np.ndarray
    lower: np.ndarray

    @property
    def K(self) -> int:
        return self.diag.shape[-1]

    def recombine(self) -> np.ndarray:
        K = self.K
        out = self.lower + np.swapaxes(self.lower, -1, -2).conj()
        idx = np.arange(K)
        out[..., idx, idx] = self.diag
        return out


def _as_square(A: np.ndarray, name: str) -> np.ndarray:
    A = np.asarray(A)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise InvalidInputError(f"{name} must be square, got shape {A.shape}")
    return A.astype(complex, copy=False)


def hermitian_part(A: np.ndarray) -> np.ndarray:
    """Mirror the lower triangle so that ``A[m, k] == conj(A[k, m])`` bit for bit."""
    K = A.shape[-1]
    out = np.tril(A, -1)
    out = out + np.swapaxes(out, -1, -2).conj()
    idx = np.arange(K)
    out[..., idx, idx] = real_diagonal(A)
    return out


def real_diagonal(A: np.ndarray) -> np.ndarray:
    """Diagonal of a Hermitian matrix as reals, after checking the imaginary residue."""
    d = np.diagonal(A, axis1=-2, axis2=-1)
    if np.iscomplexobj(d):
        if np.any(np.abs(d.imag) > DIAG_IMAG_TOL * np.maximum(np.abs(d.real), 1e-300)):
            raise InvalidInputError("diagonal of a Hermitian matrix has a non-negligible imaginary part")
        d = d.real
    return np.array(d, dtype=float)


def gram(H: np.ndarray) -> np.ndarray:
    """``H^H H`` for ``H`` of shape ``(..., N, K)`` with ``N >= K``."""
    H = np.asarray(H)
    if H.ndim < 2:
        raise InvalidInputError(f"H must be at least 2-D, got shape {H.shape}")
    N, K = H.shape[-2:]
    if K < 1 or N < K:
        raise InvalidInputError(f"need N >= K >= 1, got N={N}, K={K}")
    H = H.astype(complex, copy=False)
    G = np.swapaxes(H, -1, -2).conj() @ H
    return hermitian_part(G)


def regularize(G: np.ndarray, sigma2: float) -> np.ndarray:
    """``G + sigma2 * I``."""
    G = _as_square(G, "G")
    sigma2 = np.asarray(sigma2, dtype=float)
    if np.any(sigma2 < 0):
        raise InvalidInputError(f"sigma2 must be nonnegative, got {sigma2}")
    W = G.copy()
    idx = np.arange(G.shape[-1])
    W[..., idx, idx] += sigma2[..., None] if sigma2.ndim else sigma2
    return W


def split_dlu(W: np.ndarray) -> MatrixSplit:
    W = _as_square(W, "W")
    return MatrixSplit(diag=real_diagonal(W), lower=np.tril(W, -1))


def diag_inverse(diag: np.ndarray, ops: OpCount | None = None) -> np.ndarray:
    diag = np.asarray(diag)
    if np.any(diag == 0):
        raise SingularMatrixError("zero diagonal entry")
    tally(ops, INIT, diag.shape[-1])
    return 1.0 / diag


def cholesky(W: np.ndarray, ops: OpCount | None = None) -> np.ndarray:
    """Lower factor ``L`` with ``L L^H = W``; no pivoting.

    Raises:
        NotPositiveDefiniteError: a pivot came out non-positive (or NaN).
    """
    W = _as_square(W, "W")
    K = W.shape[-1]
    L = np.zeros_like(W)
    for j in range(K):
        row = L[..., j, :j]
        pivot = W[..., j, j].real - np.sum((row * row.conj()).real, axis=-1)
        tally(ops, FACTOR, j)
        if not np.all(pivot > 0):
            raise NotPositiveDefiniteError(f"non-positive pivot at column {j}")
        ljj = np.sqrt(pivot)
        L[..., j, j] = ljj
        # reciprocal of the pivot, reused for the column and by both substitutions
        inv = 1.0 / ljj
        tally(ops, FACTOR, 1)
        if j + 1 < K:
            acc = (L[..., j + 1 :, :j] @ row.conj()[..., None])[..., 0]
            L[..., j + 1 :, j] = (W[..., j + 1 :, j] - acc) * inv[..., None]
            tally(ops, FACTOR, (K - j - 1) * (j + 1))
    return L


def _lower_solve(L: np.ndarray, B: np.ndarray, diag: np.ndarray, ops: OpCount | None) -> np.ndarray:
    """Forward substitution for a lower-triangular system, RHS ``(..., K, M)``."""
    K, M = B.shape[-2:]
    shape = np.broadcast_shapes(L.shape[:-2], B.shape[:-2]) + (K, M)
    X = np.zeros(shape, dtype=complex)
    for m in range(K):
        acc = np.sum(L[..., m, :m, None] * X[..., :m, :], axis=-2)
        X[..., m, :] = (B[..., m, :] - acc) / diag[..., m, None]
        tally(ops, SOLVE, (m + 1) * M)
    return X


def _upper_solve_from_lower(L: np.ndarray, B: np.ndarray, diag: np.ndarray, ops: OpCount | None) -> np.ndarray:
    """Back substitution for ``L^H X = B`` without forming ``L^H``."""
    K, M = B.shape[-2:]
    shape = np.broadcast_shapes(L.shape[:-2], B.shape[:-2]) + (K, M)
    X = np.zeros(shape, dtype=complex)
    for m in range(K - 1, -1, -1):
        acc = np.sum(L[..., m + 1 :, m, None].conj() * X[..., m + 1 :, :], axis=-2)
        X[..., m, :] = (B[..., m, :] - acc) / diag[..., m, None]
        tally(ops, SOLVE, (K - m) * M)
    return X


def cholesky_solve_factored(L: np.ndarray, B: np.ndarray, ops: OpCount | None = None) -> np.ndarray:
    """Solve ``L L^H X = B`` for a matrix right-hand side ``(..., K, M)``."""
    diag = np.diagonal(L, axis1=-2, axis2=-1).real
    Z = _lower_solve(L, B, diag, ops)
    return _upper_solve_from_lower(L, Z, diag, ops)


def cholesky_solve(W: np.ndarray, b: np.ndarray, ops: OpCount | None = None) -> np.ndarray:
    """Solve ``W x = b`` for Hermitian positive definite ``W``; ``b`` is ``(..., K)``."""
    W = _as_square(W, "W")
    b = np.asarray(b, dtype=complex)
    if b.shape[-1] != W.shape[-1]:
        raise InvalidInputError(f"b has length {b.shape[-1]}, W is {W.shape[-1]}x{W.shape[-1]}")
    L = cholesky(W, ops)
    return cholesky_solve_factored(L, b[..., None], ops)[..., 0]


def cholesky_inverse(W: np.ndarray, ops: OpCount | None = None) -> np.ndarray:
    """Explicit ``W^{-1}`` by solving against the identity."""
    W = _as_square(W, "W")
    L = cholesky(W, ops)
    eye = np.broadcast_to(np.eye(W.shape[-1], dtype=complex), W.shape)
    return cholesky_solve_factored(L, eye, ops)


def forward_substitute(split: MatrixSplit, b: np.ndarray, ops: OpCount | None = None) -> np.ndarray:
    """Solve ``(D + L) x = b`` by forward substitution; ``b`` is ``(..., K)``."""
    if np.any(split.diag == 0):
        raise SingularMatrixError("zero diagonal entry")
    b = np.asarray(b, dtype=complex)
    if b.shape[-1] != split.K:
        raise InvalidInputError(f"b has length {b.shape[-1]}, split is {split.K}x{split.K}")
    return _lower_solve(split.lower, b[..., None], split.diag, ops)[..., 0]
