"""Monte-Carlo link simulation: encode, transmit, detect, decode, count errors."""

from __future__ import annotations

import csv
import dataclasses
import datetime as _dt
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, linalg
from .channel import (
    ChannelRealization,
    ChannelSpec,
    complex_normal,
    correlated_channel,
    sigma2_from_snr,
    trial_rng,
)
from .codec import CodecSpec, conv_encode, viterbi_soft_decode
from .complexity import OpCount
from .detectors import DetectorConfig, detect
from .errors import InvalidInputError
from .modem import GRAY_TABLE_ID, LLR_CLAMP, constellation, map_symbols

log = logging.getLogger(__name__)

FADING_MODES = ("per_frame", "per_use")
WORKERS_ENV = "GSMIMO_WORKERS"
CSV_FIELDS = (
    "detector",
    "snr_db",
    "N",
    "K",
    "xi",
    "iterations",
    "init",
    "llr_mode",
    "bits",
    "errors",
    "ber",
    "mean_complex_mults",
    "trials",
    "seed",
)

# stream ids for the per-trial random generators
_BITS, _CHANNEL, _NOISE = 0, 1, 2


@dataclass
class SimConfig:
    N: int = 128
    K: int = 16
    snr_db_sweep: list[float] = field(default_factory=lambda: [10.0])
    trials_per_point: int = 100
    modulation: str = "64qam"
    code: CodecSpec = field(default_factory=CodecSpec)
    detectors: list[DetectorConfig] = field(default_factory=lambda: [DetectorConfig("mmse_cholesky")])
    xi: float = 0.0
    master_seed: int = 0
    fading: str = "per_frame"
    frame_info_bits: int = 1152
    min_bit_errors: int = 200
    min_trials: int = 20
    snr_convention: str = "per_antenna"
    llr_clamp: float = LLR_CLAMP

    def __post_init__(self):
        self.snr_db_sweep = [float(s) for s in self.snr_db_sweep]
        if not self.snr_db_sweep:
            raise InvalidInputError("SNR sweep is empty")
        if self.trials_per_point < 1:
            raise InvalidInputError("need at least one trial per point")
        if self.fading not in FADING_MODES:
            raise InvalidInputError(f"unknown fading mode {self.fading!r}")
        ChannelSpec(self.N, self.K, self.xi)
        sigma2_from_snr(0.0, self.K, self.snr_convention, self.N)
        c = constellation(self.modulation)
        coded = self.code.coded_length(self.frame_info_bits)
        if self.frame_info_bits < 1 or coded % c.bits_per_symbol:
            raise InvalidInputError(
                f"{coded} coded bits per frame do not fill whole {c.order}-QAM symbols; adjust frame_info_bits"
            )
        for det in self.detectors:
            det.check_scale(c.order, self.K)

    @property
    def symbols_per_frame(self) -> int:
        return self.code.coded_length(self.frame_info_bits) // constellation(self.modulation).bits_per_symbol

    def sigma2(self, snr_db: float) -> float:
        return sigma2_from_snr(snr_db, self.K, self.snr_convention, self.N)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["code"]["polynomials"] = [oct(p) for p in self.code.polynomials]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        d = dict(d)
        unknown = set(d) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise InvalidInputError(f"unknown config fields: {sorted(unknown)}")
        if "code" in d:
            code = dict(d["code"])
            if "polynomials" in code:
                code["polynomials"] = tuple(int(p, 8) if isinstance(p, str) else int(p) for p in code["polynomials"])
            d["code"] = CodecSpec(**code)
        if "detectors" in d:
            d["detectors"] = [DetectorConfig(**det) for det in d["detectors"]]
        return cls(**d)


@dataclass
class BerRecord:
    detector: str
    snr_db: float
    N: int
    K: int
    xi: float
    iterations: int
    init: str
    llr_mode: str
    bits: int
    errors: int
    ber: float
    mean_complex_mults: float
    trials: int
    seed: int

    def as_row(self) -> dict:
        row = dataclasses.asdict(self)
        row["ber"] = f"{self.ber:.6e}"
        row["mean_complex_mults"] = f"{self.mean_complex_mults:.1f}"
        return row

    @classmethod
    def from_row(cls, row: dict) -> "BerRecord":
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        conv = {"int": int, "float": float, "str": str}
        return cls(**{k: conv[types[k]](v) for k, v in row.items()})


@dataclass
class TrialResult:
    bits: int
    errors: int
    op_count: OpCount


def simulate_trial(config: SimConfig, detector: DetectorConfig, snr_db: float, snr_index: int, trial_index: int):
    """One coded frame per user through the channel and the detector.

    The random streams depend on (master seed, SNR index, trial index) only,
    so every detector sees the same bits, channel and noise.
    """
    c = constellation(config.modulation)
    K, N, T = config.K, config.N, config.symbols_per_frame
    key = (config.master_seed, snr_index, trial_index)

    info = trial_rng(*key, _BITS).integers(0, 2, (K, config.frame_info_bits), dtype=np.uint8)
    symbols = map_symbols(conv_encode(info, config.code), c).T  # (T, K)

    spec = ChannelSpec(N, K, config.xi)
    batch = (T,) if config.fading == "per_use" else ()
    H = correlated_channel(spec, trial_rng(*key, _CHANNEL), batch)
    sigma2 = config.sigma2(snr_db)
    y = np.einsum("...nk,...k->...n", H, symbols) + complex_normal(trial_rng(*key, _NOISE), (T, N), sigma2)

    out = detect(detector, ChannelRealization(H, sigma2, config.xi), y, c, config.llr_clamp)
    llr_streams = np.swapaxes(out.llrs, 0, 1).reshape(K, -1)
    decoded = viterbi_soft_decode(llr_streams, config.code)
    return TrialResult(bits=info.size, errors=int(np.count_nonzero(decoded != info)), op_count=out.op_count)


def run_point(config: SimConfig, detector: DetectorConfig, snr_db: float, snr_index: int | None = None) -> BerRecord:
    """BER at one SNR, stopping once ``min_bit_errors`` errors and ``min_trials`` trials are in."""
    if snr_index is None:
        snr_index = config.snr_db_sweep.index(snr_db) if snr_db in config.snr_db_sweep else 0
    bits = errors = trials = 0
    mults = 0
    for t in range(config.trials_per_point):
        try:
            res = simulate_trial(config, detector, snr_db, snr_index, t)
        except (np.linalg.LinAlgError, FloatingPointError):
            log.error(
                "trial failed: detector=%s master_seed=%d snr_index=%d trial_index=%d",
                detector.label, config.master_seed, snr_index, t,
            )
            raise
        bits += res.bits
        errors += res.errors
        mults += res.op_count.complex_mults
        trials += 1
        if errors >= config.min_bit_errors and trials >= config.min_trials:
            break
    return BerRecord(
        detector=detector.label,
        snr_db=float(snr_db),
        N=config.N,
        K=config.K,
        xi=config.xi,
        iterations=detector.iterations,
        init=detector.init,
        llr_mode=detector.llr_mode,
        bits=bits,
        errors=errors,
        ber=errors / bits,
        mean_complex_mults=mults / trials,
        trials=trials,
        seed=config.master_seed,
    )


def _run_point_args(args):
    return run_point(*args)


def worker_count() -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            n = int(env)
        except ValueError as exc:
            raise InvalidInputError(f"{WORKERS_ENV} must be an integer, got {env!r}") from exc
        return max(1, n)
    return os.cpu_count() or 1


def sweep(config: SimConfig, out_dir: str | Path | None = None, workers: int | None = None) -> list[BerRecord]:
    """All (detector, SNR) points, in detector-major order; optionally persisted."""
    jobs = [(config, det, snr, j) for det in config.detectors for j, snr in enumerate(config.snr_db_sweep)]
    workers = worker_count() if workers is None else workers
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            records = list(pool.map(_run_point_args, jobs))
    else:
        records = [run_point(*job) for job in jobs]
    if out_dir is not None:
        write_results(config, records, out_dir)
    return records


def resolved_defaults(config: SimConfig) -> dict:
    return {
        "gray_table": GRAY_TABLE_ID,
        "snr_convention": config.snr_convention,
        "fading": config.fading,
        "frame_info_bits": config.frame_info_bits,
        "coded_bits_per_frame": config.code.coded_length(config.frame_info_bits),
        "symbols_per_frame": config.symbols_per_frame,
        "termination": "zero-tail, 6 flush bits" if config.code.terminated else "none",
        "interleaver": "none",
        "llr_clamp": config.llr_clamp,
        "llr_sign": "positive favours bit 0",
        "viterbi_ties": "lower-indexed predecessor",
        "early_stop": f">= {config.min_bit_errors} bit errors and >= {config.min_trials} trials",
        "op_count_unit": "complex multiplications per received vector, Gram matrix and matched filter excluded",
    }


def write_results(config: SimConfig, records: list[BerRecord], out_dir: str | Path, extra: dict | None = None) -> Path:
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        csv_path = out_dir / "results.csv"
        write_csv(records, csv_path)
        manifest = {
            "package_version": __version__,
            "created": _dt.datetime.now(_dt.timezone.utc).isoformat(),
            "config": config.to_dict(),
            "resolved_defaults": resolved_defaults(config),
            "records": len(records),
        }
        if extra:
            manifest.update(extra)
        (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    except OSError as exc:
        raise OSError(f"could not write results to {out_dir}: {exc}") from exc
    return csv_path


def write_csv(records: list[BerRecord], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS, lineterminator="\n")
        writer.writeheader()
        for rec in records:
            writer.writerow(rec.as_row())


def read_csv(path: str | Path) -> list[BerRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_FIELDS:
            raise InvalidInputError(f"{path} does not follow the results schema")
        return [BerRecord.from_row(row) for row in reader]


def snr_at_ber(records: list[BerRecord], target: float) -> float:
    """SNR where the BER curve crosses ``target``, interpolating log10(BER) linearly.

    A point without errors enters the interpolation at half an error. Returns
    ``-inf`` if the first point is already below target and ``+inf`` if the
    curve never gets there.
    """
    pts = sorted((r.snr_db, max(r.ber, 0.5 / r.bits)) for r in records)
    if pts[0][1] <= target:
        return -math.inf
    lt = math.log10(target)
    for (s0, b0), (s1, b1) in zip(pts, pts[1:]):
        if b1 <= target:
            l0, l1 = math.log10(b0), math.log10(b1)
            return s0 + (lt - l0) * (s1 - s0) / (l1 - l0)
    return math.inf


def ber_interval(rec: BerRecord, confidence: float = 0.95) -> tuple[float, float]:
    """Wilson score interval treating bits as independent."""
    from scipy.stats import norm

    z = norm.ppf(0.5 + confidence / 2)
    n, p = rec.bits, rec.ber
    denom = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


@dataclass
class DiagDomStats:
    """Normalized ``|W^{-1}|`` entries (divided by the largest entry) averaged over trials."""

    N: int
    K: int
    trials: int
    snr_db: float
    xi: float
    diag_mean: float
    offdiag_mean: float
    bin_edges: list[float]
    diag_hist: list[int]
    offdiag_hist: list[int]


def diag_dominance_stats(
    N: int, K: int, trials: int, seed: int = 0, snr_db: float = 12.0, xi: float = 0.0, bins: int = 20
) -> DiagDomStats:
    spec = ChannelSpec(N, K, xi)
    sigma2 = sigma2_from_snr(snr_db, K)
    H = correlated_channel(spec, trial_rng(seed, 0), (trials,))
    W = linalg.regularize(linalg.gram(H), sigma2)
    A = np.abs(linalg.cholesky_inverse(W))
    A /= A.max(axis=(-2, -1), keepdims=True)
    eye = np.eye(K, dtype=bool)
    diag, off = A[:, eye], A[:, ~eye]
    edges = np.linspace(0.0, 1.0, bins + 1)
    return DiagDomStats(
        N=N,
        K=K,
        trials=trials,
        snr_db=snr_db,
        xi=xi,
        diag_mean=float(diag.mean()),
        offdiag_mean=float(off.mean()) if off.size else 0.0,
        bin_edges=edges.tolist(),
        diag_hist=np.histogram(diag, edges)[0].tolist(),
        offdiag_hist=np.histogram(off, edges)[0].tolist(),
    )


def uncoded_sweep(
    N: int,
    K: int,
    modulation: str,
    detector_list: list[DetectorConfig],
    snr_db_sweep: list[float],
    trials: int,
    seed: int = 0,
    snr_convention: str = "per_antenna",
) -> list[BerRecord]:
    """Uncoded hard-decision BER, one channel and one symbol vector per trial.

    All detectors see the same draws; bits are read from the LLR signs, so
    the ML entry is the exact ML vector decision.
    """
    c = constellation(modulation)
    spec = ChannelSpec(N, K)
    records = []
    for j, snr in enumerate(snr_db_sweep):
        sigma2 = sigma2_from_snr(snr, K, snr_convention, N)
        H = correlated_channel(spec, trial_rng(seed, j, _CHANNEL), (trials,))
        bits = trial_rng(seed, j, _BITS).integers(0, 2, (trials, K * c.bits_per_symbol), dtype=np.uint8)
        s = map_symbols(bits, c)
        y = np.einsum("tnk,tk->tn", H, s) + complex_normal(trial_rng(seed, j, _NOISE), (trials, N), sigma2)
        for det in detector_list:
            det.check_scale(c.order, K)
            llrs = detect(det, ChannelRealization(H, sigma2), y, c).llrs
            errors = int(np.count_nonzero((llrs.reshape(trials, -1) < 0) != bits))
            records.append(
                BerRecord(
                    detector=det.label, snr_db=float(snr), N=N, K=K, xi=0.0, iterations=det.iterations,
                    init=det.init, llr_mode=det.llr_mode, bits=bits.size, errors=errors,
                    ber=errors / bits.size, mean_complex_mults=0.0, trials=trials, seed=seed,
                )
            )
    return records
