"""Linear MMSE-type detectors and their LLR statistics.

All detectors work on stacked inputs: the channel is ``(..., N, K)`` and
received vectors ``(..., N)``. A single channel with a block of received
vectors (``H`` of shape ``(N, K)``, ``y`` of shape ``(T, N)``) is the common
case in the simulator.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .channel import ChannelRealization
from .complexity import INIT, LLR_STATS, SERIES, SOLVE, SWEEPS, OpCount, tally
from .errors import InvalidInputError
from .linalg import MatrixSplit
from .modem import LLR_CLAMP, Constellation, maxlog_llr

log = logging.getLogger(__name__)

METHODS = ("mmse_cholesky", "gauss_seidel", "neumann", "ml_bruteforce")
INITS = ("zero", "diagonal")
LLR_MODES = ("exact", "approximated")

NU2_FLOOR = 1e-12
MU_IMAG_TOL = 1e-8
ML_MAX_CANDIDATES = 1 << 20


@dataclass(frozen=True)
class DetectorConfig:
    method: str
    iterations: int = 1
    init: str = "diagonal"
    llr_mode: str = "approximated"

    def __post_init__(self):
        if self.method not in METHODS:
            raise InvalidInputError(f"unknown detector {self.method!r}")
        if self.init not in INITS:
            raise InvalidInputError(f"unknown init {self.init!r}")
        if self.llr_mode not in LLR_MODES:
            raise InvalidInputError(f"unknown llr_mode {self.llr_mode!r}")
        if self.iterative and self.iterations < 1:
            raise InvalidInputError("iterative detectors need at least one iteration")

    @property
    def iterative(self) -> bool:
        return self.method in ("gauss_seidel", "neumann")

    @property
    def label(self) -> str:
        if self.method == "gauss_seidel":
            return f"gs_i{self.iterations}_{self.init}_{self.llr_mode}"
        if self.method == "neumann":
            return f"neumann_i{self.iterations}_{self.llr_mode}"
        if self.method == "mmse_cholesky":
            return f"mmse_{self.llr_mode}"
        return "ml"

    def check_scale(self, order: int, K: int) -> None:
        if self.method == "ml_bruteforce" and order**K > ML_MAX_CANDIDATES:
            raise InvalidInputError(f"ML search over {order}^{K} candidates is beyond the tiny-scale limit")


@dataclass
class DetectionOutput:
    s_hat: np.ndarray
    mu: np.ndarray
    nu2: np.ndarray
    llrs: np.ndarray | None = None
    op_count: OpCount = field(default_factory=OpCount)


@dataclass(frozen=True)
class MatrixInvEstimate:
    W_inv_hat: np.ndarray
    iterations_used: int


def matched_filter(H: np.ndarray, y: np.ndarray) -> np.ndarray:
    """``H^H y``."""
    H = np.asarray(H)
    y = np.asarray(y)
    if H.shape[-2] != y.shape[-1]:
        raise InvalidInputError(f"H has {H.shape[-2]} rows but y has length {y.shape[-1]}")
    return np.einsum("...nk,...n->...k", H.conj(), y)


def _off_diagonal(split: MatrixSplit) -> np.ndarray:
    return split.lower + np.swapaxes(split.lower, -1, -2).conj()


def _gs_sweeps(split, dinv, B, X, i, ops, trace=None):
    """``i`` in-place Gauss-Seidel sweeps on ``W X = B`` with ``X, B`` of shape ``(..., K, M)``."""
    K, M = B.shape[-2:]
    off = _off_diagonal(split)
    for _ in range(i):
        for m in range(K):
            if trace is not None:
                trace.append((m, X.copy()))
            acc = (off[..., m : m + 1, :] @ X)[..., 0, :]
            X[..., m, :] = dinv[..., m, None] * (B[..., m, :] - acc)
            # K - 1 off-diagonal products plus the reciprocal scaling
            tally(ops, SWEEPS, K * M)
    return X


def gs_init(init: str, D_inv: np.ndarray, y_bar: np.ndarray, ops: OpCount | None = None) -> np.ndarray:
    y_bar = np.asarray(y_bar, dtype=complex)
    if init == "zero":
        return np.zeros(np.broadcast_shapes(np.shape(D_inv), y_bar.shape), dtype=complex)
    if init == "diagonal":
        tally(ops, INIT, y_bar.shape[-1])
        return D_inv * y_bar
    raise InvalidInputError(f"unknown init {init!r}")


def gs_iterate(split: MatrixSplit, y_bar, s0, i: int, D_inv=None, ops: OpCount | None = None, trace=None):
    """Run ``i`` Gauss-Seidel sweeps from ``s0`` on ``W s = y_bar``.

    One working vector is overwritten element by element, so the update of
    element ``m`` already sees elements ``0..m-1`` of the current sweep. When
    ``trace`` is a list it receives ``(m, state)`` before every element update.
    """
    if i < 1:
        raise InvalidInputError("need at least one sweep")
    if D_inv is None:
        D_inv = linalg.diag_inverse(split.diag)
    elif np.any(split.diag == 0):
        raise linalg.SingularMatrixError("zero diagonal entry")
    y_bar = np.asarray(y_bar, dtype=complex)[..., None]
    s0 = np.asarray(s0, dtype=complex)[..., None]
    shape = np.broadcast_shapes(split.lower.shape[:-2], y_bar.shape[:-2], s0.shape[:-2]) + y_bar.shape[-2:]
    X = np.array(np.broadcast_to(s0, shape))
    _gs_sweeps(split, D_inv, y_bar, X, i, ops, trace)
    return X[..., 0]


def gs_matrix_inverse_estimate(split: MatrixSplit, D_inv, i: int, ops: OpCount | None = None) -> MatrixInvEstimate:
    """Column-wise GS estimate of ``W^{-1}``, columns started at ``D^{-1} e_m``."""
    if i < 1:
        raise InvalidInputError("need at least one sweep")
    K = split.K
    D_inv = np.asarray(D_inv)
    idx = np.arange(K)
    X = np.zeros(D_inv.shape[:-1] + (K, K), dtype=complex)
    X[..., idx, idx] = D_inv
    B = np.broadcast_to(np.eye(K, dtype=complex), X.shape)
    _gs_sweeps(split, D_inv, B, X, i, ops)
    return MatrixInvEstimate(W_inv_hat=X, iterations_used=i)


def _stats_from_E(E, U_diag, sigma2):
    K = E.shape[-1]
    idx = np.arange(K)
    mag = np.abs(E) ** 2
    interference = mag.sum(axis=-2) - mag[..., idx, idx]
    nu2 = interference + U_diag.real * np.asarray(sigma2)[..., None]
    return np.maximum(nu2, NU2_FLOOR)


def exact_llr_stats(W_inv_hat, G, sigma2, ops: OpCount | None = None, check_real: bool = False):
    """Gain and NPI variance from an estimate ``A`` of ``W^{-1}``: ``E = A G``, ``U = A G A``."""
    A = W_inv_hat.W_inv_hat if isinstance(W_inv_hat, MatrixInvEstimate) else np.asarray(W_inv_hat)
    K = A.shape[-1]
    E = A @ G
    tally(ops, LLR_STATS, K**3)
    # only the diagonal of U is needed: U_kk = sum_m E_km A_mk
    U_diag = np.einsum("...km,...mk->...k", E, A)
    tally(ops, LLR_STATS, K * K)
    idx = np.arange(K)
    e_diag = E[..., idx, idx]
    if check_real and np.any(np.abs(e_diag.imag) > MU_IMAG_TOL * np.abs(e_diag.real)):
        raise InvalidInputError("equivalent channel gain has a non-negligible imaginary part")
    return e_diag.real, _stats_from_E(E, U_diag, sigma2)


def approx_llr_stats(D_inv, G, sigma2, ops: OpCount | None = None):
    """Gain and NPI variance with ``W^{-1}`` replaced by ``D^{-1}``."""
    D_inv = np.asarray(D_inv)
    K = D_inv.shape[-1]
    E = D_inv[..., :, None] * G
    tally(ops, LLR_STATS, K * K)
    idx = np.arange(K)
    g_diag = np.asarray(G)[..., idx, idx].real
    U_diag = D_inv * D_inv * g_diag
    tally(ops, LLR_STATS, 2 * K)
    return E[..., idx, idx].real, _stats_from_E(E, U_diag, sigma2)


def mmse_exact(W, G, y_bar, sigma2, ops: OpCount | None = None) -> DetectionOutput:
    """Exact MMSE estimate and statistics through a Cholesky factorization of ``W``."""
    L = linalg.cholesky(W, ops)
    s_hat = linalg.cholesky_solve_factored(L, np.asarray(y_bar, dtype=complex)[..., None], ops)[..., 0]
    eye = np.broadcast_to(np.eye(W.shape[-1], dtype=complex), W.shape)
    W_inv = linalg.cholesky_solve_factored(L, eye, ops)
    mu, nu2 = exact_llr_stats(W_inv, G, sigma2, ops, check_real=True)
    return DetectionOutput(s_hat=s_hat, mu=mu, nu2=nu2, op_count=ops if ops is not None else OpCount())


def neumann_detect(W, D_inv, y_bar, i: int) -> np.ndarray:
    """Truncated Neumann series ``sum_{n<i} (-D^{-1}(W - D))^n D^{-1} y_bar``, Horner form."""
    if i < 1:
        raise InvalidInputError("need at least one series term")
    W = np.asarray(W, dtype=complex)
    K = W.shape[-1]
    off = W * (1 - np.eye(K))
    base = D_inv * np.asarray(y_bar, dtype=complex)
    x = base
    step = None
    for n in range(1, i):
        x_new = base - D_inv * np.einsum("...mk,...k->...m", off, x)
        new_step = np.linalg.norm(x_new - x)
        if step is not None and new_step > step:
            log.warning("Neumann series update grew at term %d; the series may be diverging", n)
        x, step = x_new, new_step
    return x


def neumann_inverse(split: MatrixSplit, D_inv, i: int, ops: OpCount | None = None) -> np.ndarray:
    """Explicit ``sum_{n<i} (-D^{-1}(W - D))^n D^{-1}``.

    The first correction term only needs diagonal scalings; every further
    term is a full ``K x K`` matrix product.
    """
    if i < 1:
        raise InvalidInputError("need at least one series term")
    K = split.K
    D_inv = np.asarray(D_inv)
    idx = np.arange(K)
    A = np.zeros(D_inv.shape[:-1] + (K, K), dtype=complex)
    A[..., idx, idx] = D_inv
    if i == 1:
        return A
    T = -D_inv[..., :, None] * _off_diagonal(split)
    tally(ops, SERIES, K * (K - 1))
    term = T * D_inv[..., None, :]
    tally(ops, SERIES, K * (K - 1))
    A = A + term
    for _ in range(2, i):
        term = T @ term
        tally(ops, SERIES, K**3)
        A = A + term
    return A


def _apply(A, v, ops, label):
    tally(ops, label, A.shape[-1] * A.shape[-2])
    return np.einsum("...mk,...k->...m", A, v)


def _candidates(c: Constellation, K: int) -> np.ndarray:
    """All ``order^K`` label tuples, shape ``(C, K)``."""
    return np.array(list(itertools.product(range(c.order), repeat=K)), dtype=np.int64)


def _ml_metrics(H, y, c: Constellation):
    K = H.shape[-1]
    if c.order**K > ML_MAX_CANDIDATES:
        raise InvalidInputError(f"ML search over {c.order}^{K} candidates is beyond the tiny-scale limit")
    labels = _candidates(c, K)
    S = c.points[labels]  # (C, K)
    HS = H @ S.T  # (..., N, C)
    d = np.sum(np.abs(np.asarray(y)[..., :, None] - HS) ** 2, axis=-2)
    return labels, d


def ml_detect(H, y, c: Constellation) -> np.ndarray:
    """Brute-force ``argmin_s ||y - H s||^2`` over all symbol vectors."""
    labels, d = _ml_metrics(H, y, c)
    return c.points[labels[np.argmin(d, axis=-1)]]


def ml_llr(H, y, sigma2, c: Constellation, clamp: float = LLR_CLAMP):
    """Max-log LLRs over the full candidate set, with the hard ML decision."""
    labels, d = _ml_metrics(H, y, c)
    K = H.shape[-1]
    bps = c.bits_per_symbol
    cand_bits = c.bits[labels].astype(bool)  # (C, K, bps)
    out = np.empty(d.shape[:-1] + (K, bps))
    for k in range(K):
        for b in range(bps):
            ones = cand_bits[:, k, b]
            out[..., k, b] = (d[..., ones].min(axis=-1) - d[..., ~ones].min(axis=-1)) / sigma2
    hard = c.points[labels[np.argmin(d, axis=-1)]]
    return hard, np.clip(out, -clamp, clamp)


def detect(
    config: DetectorConfig,
    channel: ChannelRealization,
    y,
    c: Constellation,
    clamp: float = LLR_CLAMP,
    ops: OpCount | None = None,
) -> DetectionOutput:
    """Full detection pass: estimate, LLR statistics and max-log LLRs.

    The op count covers everything after the Gram matrix and matched filter,
    for one received vector.
    """
    ops = OpCount() if ops is None else ops
    H = np.asarray(channel.H)
    sigma2 = channel.sigma2
    config.check_scale(c.order, H.shape[-1])

    if config.method == "ml_bruteforce":
        hard, llrs = ml_llr(H, y, sigma2, c, clamp)
        K = H.shape[-1]
        return DetectionOutput(s_hat=hard, mu=np.ones(K), nu2=np.full(K, sigma2), llrs=llrs, op_count=ops)

    G = linalg.gram(H)
    W = linalg.regularize(G, sigma2)
    y_bar = matched_filter(H, y)
    exact = config.llr_mode == "exact"

    if config.method == "mmse_cholesky":
        if exact:
            out = mmse_exact(W, G, y_bar, sigma2, ops)
            s_hat, mu, nu2 = out.s_hat, out.mu, out.nu2
        else:
            s_hat = linalg.cholesky_solve(W, y_bar, ops)
            D_inv = linalg.diag_inverse(linalg.real_diagonal(W), ops)
            mu, nu2 = approx_llr_stats(D_inv, G, sigma2, ops)
    else:
        split = linalg.split_dlu(W)
        D_inv = linalg.diag_inverse(split.diag, ops)
        if config.method == "gauss_seidel":
            s0 = gs_init(config.init, D_inv, y_bar, ops)
            s_hat = gs_iterate(split, y_bar, s0, config.iterations, D_inv, ops)
            if exact:
                est = gs_matrix_inverse_estimate(split, D_inv, config.iterations, ops)
                mu, nu2 = exact_llr_stats(est, G, sigma2, ops)
        else:
            A = neumann_inverse(split, D_inv, config.iterations, ops)
            if config.iterations == 1:
                s_hat = gs_init("diagonal", D_inv, y_bar, ops)
            else:
                s_hat = _apply(A, y_bar, ops, SOLVE)
            if exact:
                mu, nu2 = exact_llr_stats(A, G, sigma2, ops)
        if not exact:
            mu, nu2 = approx_llr_stats(D_inv, G, sigma2, ops)

    llrs = maxlog_llr(s_hat, mu, nu2, c, clamp)
    return DetectionOutput(s_hat=s_hat, mu=mu, nu2=nu2, llrs=llrs, op_count=ops)
