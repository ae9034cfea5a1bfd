"""Flat Rayleigh fading channels, receive correlation and AWGN."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, NotPositiveDefiniteError

SNR_CONVENTIONS = ("per_antenna", "per_user")


def make_rng(seed) -> np.random.Generator:
    """Generator from an int, a ``SeedSequence`` or an existing generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def trial_rng(master_seed: int, *key: int) -> np.random.Generator:
    """Independent stream for ``key`` (e.g. snr index, trial index, stream id)."""
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=tuple(int(k) for k in key)))


@dataclass(frozen=True)
class ChannelSpec:
    n_antennas: int
    n_users: int
    xi: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not (self.n_antennas >= self.n_users >= 1):
            raise InvalidInputError(f"need N >= K >= 1, got N={self.n_antennas}, K={self.n_users}")
        if not (0.0 <= self.xi < 1.0):
            raise InvalidInputError(f"correlation factor must lie in [0, 1), got {self.xi}")


@dataclass(frozen=True)
class ChannelRealization:
    H: np.ndarray
    sigma2: float
    xi: float = 0.0

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise InvalidInputError(f"sigma2 must be positive, got {self.sigma2}")
        if not np.all(np.isfinite(self.H)):
            raise InvalidInputError("channel matrix has non-finite entries")


def complex_normal(rng: np.random.Generator, shape, variance: float = 1.0) -> np.ndarray:
    scale = np.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def gen_iid_rayleigh(spec: ChannelSpec, rng=None, batch: tuple = ()) -> np.ndarray:
    """CN(0, 1) entries of shape ``batch + (N, K)``; drawn from ``spec.seed`` unless ``rng`` is given."""
    rng = make_rng(spec.seed if rng is None else rng)
    return complex_normal(rng, tuple(batch) + (spec.n_antennas, spec.n_users))


def exp_correlation_matrix(N: int, xi: float) -> np.ndarray:
    """Exponential receive correlation ``R[m, n] = xi ** |m - n|``."""
    if not (0.0 <= xi < 1.0):
        raise InvalidInputError(f"correlation factor must lie in [0, 1), got {xi}")
    idx = np.arange(N)
    return (float(xi) ** np.abs(idx[:, None] - idx[None, :])).astype(complex)


def apply_rx_correlation(R: np.ndarray, H_iid: np.ndarray) -> np.ndarray:
    """``F @ H_iid`` with ``F`` the lower Cholesky factor of ``R``."""
    try:
        F = np.linalg.cholesky(R)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(f"correlation matrix is not positive definite: {exc}") from exc
    return F @ H_iid


def correlated_channel(spec: ChannelSpec, rng=None, batch: tuple = ()) -> np.ndarray:
    H = gen_iid_rayleigh(spec, rng, batch)
    if spec.xi == 0.0:
        return H
    return apply_rx_correlation(exp_correlation_matrix(spec.n_antennas, spec.xi), H)


def sigma2_from_snr(snr_db: float, K: int, convention: str = "per_antenna", N: int | None = None) -> float:
    """Noise variance for a receive SNR in dB.

    ``per_antenna`` (default): SNR is the received signal power per antenna,
    ``K`` for unit-variance channel entries, over the noise power, so
    ``sigma2 = K / snr``. ``per_user``: SNR is one user's received energy
    summed over the ``N`` antennas over the per-antenna noise power, so
    ``sigma2 = N / snr``.
    """
    if K < 1:
        raise InvalidInputError(f"K must be >= 1, got {K}")
    snr = 10.0 ** (snr_db / 10.0)
    if convention == "per_antenna":
        return K / snr
    if convention == "per_user":
        if N is None or N < 1:
            raise InvalidInputError("per_user convention needs the antenna count N")
        return N / snr
    raise InvalidInputError(f"unknown SNR convention {convention!r}")


def awgn(y_clean: np.ndarray, sigma2: float, seed=None) -> np.ndarray:
    """Add i.i.d. CN(0, sigma2) noise."""
    if not sigma2 > 0:
        raise InvalidInputError(f"sigma2 must be positive, got {sigma2}")
    y_clean = np.asarray(y_clean)
    return y_clean + complex_normal(make_rng(seed), y_clean.shape, sigma2)
