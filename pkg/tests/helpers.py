"""Shared oracles and random instances for the test suite."""

import numpy as np

from gsmimo import channel, linalg

# acceptance verdicts by criterion number, printed in the terminal summary
ACCEPTANCE = {}


def random_system(rng, N=128, K=16, snr_db=12.0):
    H = channel.complex_normal(rng, (N, K))
    sigma2 = channel.sigma2_from_snr(snr_db, K)
    G = linalg.gram(H)
    W = linalg.regularize(G, sigma2)
    return H, G, W, sigma2


def random_hpd(rng, K, cond_floor=0.5):
    A = channel.complex_normal(rng, (K, K))
    return linalg.hermitian_part(A @ A.conj().T + cond_floor * K * np.eye(K))


def gauss_elim(A, b):
    """Naive Gaussian elimination with partial pivoting, one column at a time."""
    A = np.array(A, dtype=complex)
    b = np.array(b, dtype=complex)
    n = len(b)
    for col in range(n):
        piv = col + int(np.argmax(np.abs(A[col:, col])))
        A[[col, piv]] = A[[piv, col]]
        b[[col, piv]] = b[[piv, col]]
        for r in range(col + 1, n):
            f = A[r, col] / A[col, col]
            A[r, col:] -= f * A[col, col:]
            b[r] -= f * b[col]
    x = np.zeros(n, dtype=complex)
    for r in range(n - 1, -1, -1):
        x[r] = (b[r] - A[r, r + 1 :] @ x[r + 1 :]) / A[r, r]
    return x


def gauss_inverse(A):
    n = A.shape[0]
    return np.column_stack([gauss_elim(A, e) for e in np.eye(n)])
