"""Complex-multiplication bookkeeping for the detection pipelines.

Kernels take an optional :class:`OpCount` and tally into it while they run.
Counts always refer to a single received vector: leading batch axes of the
arrays (several channel uses sharing one channel, or several frames) do not
multiply the tally. Work that depends only on the channel (reciprocals of the
diagonal, LLR statistics) is charged once per pass.

Bookkeeping rules:

* a division by a precomputed reciprocal is one multiplication, and forming
  the reciprocal is one multiplication as well;
* real-by-complex scaling counts as one complex multiplication;
* ``z * conj(z)`` inside a factorization counts as one multiplication;
* the Gram matrix and the matched filter are outside the tally.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

from .errors import InvalidInputError

INIT = "init"
SWEEPS = "sweeps"
LLR_STATS = "llr_stats"
FACTOR = "factor"
SOLVE = "solve"
SERIES = "series"


@dataclass
class OpCount:
    """Running tally of complex multiplications, split by pipeline stage."""

    breakdown: Counter = field(default_factory=Counter)

    def tally(self, label: str, n: int) -> None:
        if n < 0:
            raise InvalidInputError("operation counts are nonnegative")
        self.breakdown[label] += int(n)

    @property
    def complex_mults(self) -> int:
        return int(sum(self.breakdown.values()))

    def merge(self, other: "OpCount") -> "OpCount":
        out = OpCount(Counter(self.breakdown))
        out.breakdown.update(other.breakdown)
        return out

    def as_dict(self) -> dict:
        return {"complex_mults": self.complex_mults, **dict(self.breakdown)}


def tally(ops: OpCount | None, label: str, n: int) -> None:
    """Tally into ``ops`` when a counter was supplied."""
    if ops is not None:
        ops.tally(label, n)


def predict_gs(K: int, i: int) -> int:
    """Closed-form count for the GS pipeline with diagonal init and approximated LLRs."""
    return sum(predict_gs_breakdown(K, i).values())


def predict_gs_breakdown(K: int, i: int) -> dict[str, int]:
    if K < 1 or i < 1:
        raise InvalidInputError(f"need K >= 1 and i >= 1, got K={K}, i={i}")
    return {INIT: 2 * K, SWEEPS: i * K * K, LLR_STATS: K * K + 2 * K}


def measure(pipeline, *args, **kwargs) -> OpCount:
    """Run ``pipeline(*args, ops=counter, **kwargs)`` and return the filled counter."""
    ops = OpCount()
    pipeline(*args, ops=ops, **kwargs)
    return ops
