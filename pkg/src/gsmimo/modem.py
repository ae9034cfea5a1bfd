"""Gray-labelled square QAM and max-log soft demapping."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import InvalidInputError

LLR_CLAMP = 64.0
GRAY_TABLE_ID = "per-axis reflected Gray, I bits first (MSB), level 0 = most positive amplitude"

_ORDERS = {"qpsk": 4, "4qam": 4, "16qam": 16, "64qam": 64}


def gray_code(n: int) -> np.ndarray:
    i = np.arange(1 << n)
    return i ^ (i >> 1)


@dataclass(frozen=True, eq=False)
class Constellation:
    """Square QAM with ``points[label]`` the symbol carrying integer ``label``.

    ``bits[label]`` is the bit pattern of ``label``, most significant bit first.
    The first half of the bits labels the in-phase axis and the second half
    the quadrature axis, both with amplitudes ``axis_amplitudes[axis_label]``.
    """

    order: int
    points: np.ndarray
    bits: np.ndarray
    axis_amplitudes: np.ndarray

    @property
    def bits_per_symbol(self) -> int:
        return self.bits.shape[1]

    @property
    def labels(self) -> np.ndarray:
        return np.arange(self.order)


@lru_cache(maxsize=None)
def qam(order: int) -> Constellation:
    """Energy-normalized square QAM of ``order`` 4, 16 or 64."""
    if order not in (4, 16, 64):
        raise InvalidInputError(f"unsupported QAM order {order}")
    bps = int(np.log2(order))
    half = bps // 2
    m = 1 << half
    # axis amplitude for level l is m-1-2l; level l carries Gray label gray(l)
    level_of_label = np.argsort(gray_code(half))
    amp = (m - 1 - 2 * level_of_label).astype(float)
    labels = np.arange(order)
    amp = amp / np.sqrt(2.0 * (order - 1) / 3.0)
    points = amp[labels >> half] + 1j * amp[labels & (m - 1)]
    bits = ((labels[:, None] >> np.arange(bps - 1, -1, -1)) & 1).astype(np.uint8)
    for arr in (amp, points, bits):
        arr.setflags(write=False)
    return Constellation(order=order, points=points, bits=bits, axis_amplitudes=amp)


def constellation(name: str | int) -> Constellation:
    if isinstance(name, str):
        key = name.lower().replace("-", "")
        if key not in _ORDERS:
            raise InvalidInputError(f"unknown modulation {name!r}")
        return qam(_ORDERS[key])
    return qam(int(name))


def map_symbols(coded_bits: np.ndarray, c: Constellation) -> np.ndarray:
    """Map bit groups along the last axis to symbols, ``(..., L) -> (..., L / bps)``."""
    coded_bits = np.asarray(coded_bits)
    bps = c.bits_per_symbol
    if coded_bits.shape[-1] % bps:
        raise InvalidInputError(f"bit count {coded_bits.shape[-1]} is not a multiple of {bps}")
    groups = coded_bits.reshape(coded_bits.shape[:-1] + (-1, bps)).astype(np.int64)
    labels = groups @ (1 << np.arange(bps - 1, -1, -1))
    return c.points[labels]


def hard_demap(symbols: np.ndarray, c: Constellation) -> np.ndarray:
    """Nearest-point decision, returning bits ``(..., T) -> (..., T * bps)``."""
    symbols = np.asarray(symbols)
    labels = np.argmin(np.abs(symbols[..., None] - c.points) ** 2, axis=-1)
    bits = c.bits[labels]
    return bits.reshape(symbols.shape[:-1] + (-1,))


def bit_partition_sets(c: Constellation, b: int) -> tuple[np.ndarray, np.ndarray]:
    """Points whose bit ``b`` is 0, and those whose bit ``b`` is 1."""
    if not 0 <= b < c.bits_per_symbol:
        raise InvalidInputError(f"bit index {b} out of range for {c.order}-QAM")
    mask = c.bits[:, b].astype(bool)
    return c.points[~mask], c.points[mask]


def maxlog_llr(s_hat, mu, nu2, c: Constellation, clamp: float = LLR_CLAMP) -> np.ndarray:
    """Max-log LLRs ``log P(b=0) / P(b=1)`` of the detected symbols.

    ``s_hat``, ``mu`` and ``nu2`` broadcast together; the result gains a
    trailing axis of length ``bits_per_symbol``. Positive values favour 0.
    """
    s_hat = np.asarray(s_hat)
    mu = np.asarray(mu, dtype=float)
    nu2 = np.asarray(nu2, dtype=float)
    if np.any(nu2 <= 0):
        raise InvalidInputError("NPI variance must be positive")
    if np.any(mu == 0):
        raise InvalidInputError("channel gain must be nonzero")
    z = s_hat / mu
    gamma = mu * mu / nu2
    # square QAM separates per axis: for an in-phase bit the quadrature
    # distance is the same in both minima and cancels (and vice versa)
    half = c.bits_per_symbol // 2
    amp = c.axis_amplitudes
    axis_bits = ((np.arange(amp.size)[:, None] >> np.arange(half - 1, -1, -1)) & 1).astype(bool)
    out = np.empty(np.broadcast_shapes(z.shape, gamma.shape) + (c.bits_per_symbol,))
    for offset, coord in ((0, z.real), (half, z.imag)):
        d = (coord[..., None] - amp) ** 2
        for j in range(half):
            ones = axis_bits[:, j]
            out[..., offset + j] = gamma * (d[..., ones].min(axis=-1) - d[..., ~ones].min(axis=-1))
    return np.clip(out, -clamp, clamp)
