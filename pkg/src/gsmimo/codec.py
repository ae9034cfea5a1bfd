"""Rate-1/2, constraint-length-7 convolutional code and its soft Viterbi decoder."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np
from numba import njit

from .errors import InvalidInputError


@dataclass(frozen=True)
class CodecSpec:
    polynomials: tuple[int, int] = (0o133, 0o171)
    constraint_length: int = 7
    terminated: bool = True

    def __post_init__(self):
        if self.constraint_length != 7:
            raise InvalidInputError("only constraint length 7 is supported")
        if any(p <= 0 or p >= 1 << self.constraint_length for p in self.polynomials):
            raise InvalidInputError(f"bad generator polynomials {self.polynomials}")

    @property
    def rate(self) -> Fraction:
        return Fraction(1, len(self.polynomials))

    @property
    def memory(self) -> int:
        return self.constraint_length - 1

    @property
    def n_states(self) -> int:
        return 1 << self.memory

    def coded_length(self, n_info: int) -> int:
        return len(self.polynomials) * (n_info + self.memory)


DEFAULT_CODEC = CodecSpec()


def _taps(poly: int, K: int) -> np.ndarray:
    # tap j multiplies the input delayed by j; the polynomial MSB is the current input
    return np.array([(poly >> (K - 1 - j)) & 1 for j in range(K)], dtype=np.uint8)


def conv_encode(info_bits: np.ndarray, spec: CodecSpec = DEFAULT_CODEC) -> np.ndarray:
    """Zero-tail terminated encoding along the last axis.

    Output bits alternate between the two generators:
    ``a0 b0 a1 b1 ...`` for ``(..., L) -> (..., 2 * (L + 6))``.
    """
    info_bits = np.asarray(info_bits, dtype=np.uint8)
    if info_bits.shape[-1] == 0:
        raise InvalidInputError("nothing to encode")
    K = spec.constraint_length
    m = spec.memory
    lead = info_bits.shape[:-1]
    L = info_bits.shape[-1] + m
    u = np.concatenate([np.zeros(lead + (m,), np.uint8), info_bits, np.zeros(lead + (m,), np.uint8)], axis=-1)
    out = np.zeros(lead + (L, len(spec.polynomials)), dtype=np.uint8)
    for g, poly in enumerate(spec.polynomials):
        for j, t in enumerate(_taps(poly, K)):
            if t:
                out[..., g] ^= u[..., m - j : m - j + L]
    return out.reshape(lead + (-1,))


@lru_cache(maxsize=None)
def _trellis(spec: CodecSpec):
    """Predecessor description of the trellis.

    The state holds the last ``memory`` inputs, most recent in the top bit.
    State ``ns`` is reached from ``((ns & mask) << 1) | x`` for ``x in (0, 1)``
    with input ``ns >> (memory - 1)``.
    """
    m = spec.memory
    ns = np.arange(spec.n_states)
    prev = ((ns & ((1 << (m - 1)) - 1)) << 1)[:, None] | np.arange(2)[None, :]
    window = (ns[:, None] << 1) | np.arange(2)[None, :]
    signs = np.empty((spec.n_states, 2, len(spec.polynomials)))
    for g, poly in enumerate(spec.polynomials):
        parity = np.vectorize(lambda w: bin(w & poly).count("1") & 1)(window)
        signs[..., g] = 1.0 - 2.0 * parity
    return prev, signs


def viterbi_soft_decode(llrs: np.ndarray, spec: CodecSpec = DEFAULT_CODEC) -> np.ndarray:
    """Maximum-likelihood info bits from LLRs (positive favours 0) along the last axis.

    The branch metric adds ``+L/2`` for a hypothesised 0 and ``-L/2`` for a 1;
    equal metrics keep the lower-indexed predecessor.
    """
    llrs = np.asarray(llrs, dtype=float)
    n_out = len(spec.polynomials)
    if llrs.shape[-1] % n_out or llrs.shape[-1] // n_out <= spec.memory:
        raise InvalidInputError(f"LLR count {llrs.shape[-1]} does not match a terminated codeword")
    lead = llrs.shape[:-1]
    flat = llrs.reshape((-1, llrs.shape[-1] // n_out, n_out))
    B, steps, _ = flat.shape
    prev, signs = _trellis(spec)
    S = spec.n_states

    decoded = _viterbi_kernel(0.5 * flat, signs, prev, spec.memory - 1)
    info = decoded[:, : steps - spec.memory]
    return info.reshape(lead + (-1,))


@njit(cache=True)
def _viterbi_kernel(half_llr, signs, prev, top):
    """Add-compare-select and traceback; ``half_llr`` is ``(B, steps, n_out)``."""
    B, steps, n_out = half_llr.shape
    S = prev.shape[0]
    decoded = np.empty((B, steps), dtype=np.uint8)
    choice = np.empty((steps, S), dtype=np.uint8)
    metric = np.empty(S)
    new = np.empty(S)
    for b in range(B):
        metric[:] = -np.inf
        metric[0] = 0.0
        for t in range(steps):
            for ns in range(S):
                c0 = metric[prev[ns, 0]]
                c1 = metric[prev[ns, 1]]
                for g in range(n_out):
                    c0 += signs[ns, 0, g] * half_llr[b, t, g]
                    c1 += signs[ns, 1, g] * half_llr[b, t, g]
                # ties keep the lower-indexed predecessor
                if c1 > c0:
                    new[ns] = c1
                    choice[t, ns] = 1
                else:
                    new[ns] = c0
                    choice[t, ns] = 0
            metric[:] = new
        # traceback from the all-zero terminal state
        state = 0
        for t in range(steps - 1, -1, -1):
            decoded[b, t] = state >> top
            state = prev[state, choice[t, state]]
    return decoded
