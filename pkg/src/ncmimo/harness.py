"""Monte Carlo experiment engine: simulation, error-rate estimation, sweeps and timing.

Reproducibility: the transmit basis and the alphabet are drawn from ``seed``
alone, so they are shared across every grid point of a sweep. Trials run in
fixed-size batches and each batch draws from its own generator keyed by
``(seed, grid point, hypothesis, batch index)``; results are reduced in batch
order, so the output does not depend on the worker count.
"""

from __future__ import annotations

import csv
import io
import os
import time
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ._linalg import complex_normal
from .channel import ChannelProfile, ChannelSampler, FadingCovariance, assemble_fading_covariance, load_profile, random_unitary
from .codebook import CodewordAlphabet, as_matrix, grassmannian_alphabet, load_alphabet, orthogonal_pair_alphabet
from .detector_direct import detect_direct, precompute_direct
from .detector_spectral import WINDOWS, detect_spectral, precompute_spectral
from .errors import InvalidArgumentError

PRESETS = ("orthogonal-pair", "grassmannian")
DETECTORS = ("direct", "spectral", "both")
BATCH_SIZE = 2000
THREADS_ENV = "NONCOHERENT_MIMO_THREADS"

SWEEP_HEADER = ("K", "nt", "Nr", "SNR_dB", "detector", "p_err", "stderr", "t_precompute_ms", "t_per_trial_us")
BENCH_HEADER = ("K", "nt", "Nr", "detector", "t_precompute_ms", "t_detect_us", "t_single_us", "t_end_to_end_ms", "precompute_ratio")


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce a sweep.

    ``profile`` is a fading preset (``triangular``, ``flat``) or a profile table
    path; ``alphabet_path`` overrides ``preset`` with codewords read from disk.
    ``timing=False`` writes empty timing columns so reruns are byte-identical.
    """

    K: int = 4
    nt: int = 1
    M: int = 2
    nrs: Sequence[int] = (128,)
    snrs_db: Sequence[float] = (-10.0,)
    trials: int = 100_000
    seed: int = 0
    detector: str = "both"
    preset: str = "orthogonal-pair"
    profile: str = "triangular"
    window: str = "bt"
    out: Optional[str] = None
    timing: bool = True
    alphabet_path: Optional[str] = None
    bench_observations: int = 1000

    def __post_init__(self):
        self.nrs = tuple(int(n) for n in self.nrs)
        self.snrs_db = tuple(float(s) for s in self.snrs_db)
        self.validate()

    def validate(self) -> None:
        for name in ("K", "nt", "M", "trials"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise InvalidArgumentError(f"{name} must be a positive integer, got {value!r}")
        if self.detector not in DETECTORS:
            raise InvalidArgumentError(f"detector must be one of {DETECTORS}, got {self.detector!r}")
        if self.window not in WINDOWS:
            raise InvalidArgumentError(f"window must be one of {WINDOWS}, got {self.window!r}")
        if self.alphabet_path is None:
            if self.preset not in PRESETS:
                raise InvalidArgumentError(f"preset must be one of {PRESETS}, got {self.preset!r}")
            if self.preset == "orthogonal-pair":
                if self.K < 2 * self.nt:
                    raise InvalidArgumentError(f"orthogonal pair needs K >= 2*nt, got K={self.K}, nt={self.nt}")
                if self.M != 2:
                    raise InvalidArgumentError("orthogonal pair has exactly M = 2 codewords")
            elif self.M < 2:
                raise InvalidArgumentError("grassmannian alphabet needs M >= 2")
        for nr in self.nrs:
            if nr < 2 or nr % 2:
                raise InvalidArgumentError(f"Nr values must be positive and even, got {nr}")
        if self.bench_observations < 1:
            raise InvalidArgumentError("bench_observations must be positive")

    @property
    def detectors(self) -> tuple:
        return ("direct", "spectral") if self.detector == "both" else (self.detector,)


@dataclass(frozen=True)
class ErrorRecord:
    """Error-rate estimate of one detector at one grid point."""

    K: int
    nt: int
    nr: int
    snr_db: float
    detector: str
    errors: int
    trials: int
    t_precompute_ms: float = float("nan")
    t_per_trial_us: float = float("nan")

    @property
    def p_err(self) -> float:
        return self.errors / self.trials

    @property
    def stderr(self) -> float:
        p = self.p_err
        return float(np.sqrt(p * (1.0 - p) / self.trials))


@dataclass
class ErrorEstimate:
    """All records of a sweep plus the configuration that produced them."""

    config: ExperimentConfig
    records: list = field(default_factory=list)

    def get(self, nr: int, snr_db: float, detector: str) -> ErrorRecord:
        for r in self.records:
            if r.nr == nr and r.snr_db == snr_db and r.detector == detector:
                return r
        raise KeyError((nr, snr_db, detector))


def _seed_rng(seed: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), *keys]))


def worker_count() -> int:
    """Thread count: the CPU count, capped by ``NONCOHERENT_MIMO_THREADS`` if set."""
    n = os.cpu_count() or 1
    cap = os.environ.get(THREADS_ENV)
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            raise InvalidArgumentError(f"{THREADS_ENV} must be an integer, got {cap!r}") from None
    return n


def build_setup(config: ExperimentConfig) -> tuple:
    """Seed-derived ``(profile, alphabet)`` shared by every grid point."""
    rng = _seed_rng(config.seed, 0)
    ut = random_unitary(config.nt, rng)
    profile = load_profile(config.profile, config.nt, ut=ut)
    if config.alphabet_path is not None:
        alphabet = load_alphabet(config.alphabet_path)
        if (alphabet.K, alphabet.nt) != (config.K, config.nt):
            raise InvalidArgumentError(f"alphabet file has K={alphabet.K}, nt={alphabet.nt}")
    elif config.preset == "orthogonal-pair":
        alphabet = orthogonal_pair_alphabet(config.K, config.nt, rng)
    else:
        alphabet = grassmannian_alphabet(config.K, config.nt, config.M, rng)
    return profile, alphabet


def snr_to_noise_power(
    snr_linear: float,
    alphabet: CodewordAlphabet,
    fading: FadingCovariance,
    preset: Optional[str] = None,
) -> float:
    """Noise power giving receive SNR ``E|XH|^2 / E|Z|^2 = snr_linear``.

    With equiprobable codewords the SNR equals
    ``tr(C_h (I (x) G)) / (noise_power K nr) = tr(Cf(0) G) / (noise_power K)``,
    where ``G`` is the mean Gram matrix. ``preset="orthogonal-pair"`` uses the
    closed form ``0.75 / snr_linear``.
    """
    if not snr_linear > 0:
        raise InvalidArgumentError(f"SNR must be positive, got {snr_linear!r}")
    if preset == "orthogonal-pair":
        return 0.75 / snr_linear
    signal = float(np.real(np.trace(fading.blocks[0] @ alphabet.mean_gram())))
    if not signal > 0:
        raise InvalidArgumentError("alphabet carries no power")
    return signal / (alphabet.K * snr_linear)


def vectorize(y_mat: np.ndarray) -> np.ndarray:
    """Column-wise ``vec`` of ``(..., K, nr)`` blocks: entry ``(t, r)`` goes to ``t + r*K``."""
    y_mat = np.asarray(y_mat)
    return np.swapaxes(y_mat, -1, -2).reshape(y_mat.shape[:-2] + (-1,))


def simulate_observations(x, sampler: ChannelSampler, noise_power: float, rng: np.random.Generator, size: int) -> np.ndarray:
    """Draw ``size`` independent ``vec(X H + Z)``, shape ``(size, K*nr)``."""
    x = as_matrix(x)
    h = sampler.sample(rng, size)
    z = complex_normal(rng, (size, x.shape[0], sampler.nr), noise_power)
    return vectorize(x @ h + z)


def simulate_observation(
    x,
    profile: ChannelProfile,
    nr: int,
    noise_power: float,
    rng: np.random.Generator,
    eta: Optional[float] = None,
) -> np.ndarray:
    """One received block ``vec(X H + Z)`` of length ``K*nr``."""
    sampler = ChannelSampler(profile, nr, eta)
    return simulate_observations(x, sampler, noise_power, rng, 1)[0]


def _grid_key(config: ExperimentConfig, nr: int, snr_db: float) -> int:
    return zlib.crc32(f"K{config.K}:nt{config.nt}:nr{nr}:snr{snr_db!r}".encode())


def _split(trials: int, m: int) -> list:
    base, extra = divmod(trials, m)
    return [base + (1 if h < extra else 0) for h in range(m)]


def estimate_point(config: ExperimentConfig, profile: ChannelProfile, alphabet: CodewordAlphabet, nr: int, snr_db: float) -> list:
    """Paired error-rate estimates of the configured detectors at one ``(nr, snr)`` point."""
    fading = assemble_fading_covariance(profile, nr)
    preset = config.preset if config.alphabet_path is None else None
    noise_power = snr_to_noise_power(10.0 ** (snr_db / 10.0), alphabet, fading, preset)
    sampler = ChannelSampler(profile, nr, fading.eta)

    states, t_pre = {}, {}
    for det in config.detectors:
        start = time.perf_counter()
        if det == "direct":
            states[det] = precompute_direct(alphabet, fading, noise_power)
        else:
            states[det] = precompute_spectral(alphabet, fading, noise_power, config.window)
        t_pre[det] = time.perf_counter() - start
    detect = {"direct": detect_direct, "spectral": detect_spectral}

    key = _grid_key(config, nr, snr_db)
    jobs = []
    for h, count in enumerate(_split(config.trials, alphabet.M)):
        for b, lo in enumerate(range(0, count, BATCH_SIZE)):
            jobs.append((h, b, min(BATCH_SIZE, count - lo)))

    def run(job):
        h, b, size = job
        rng = _seed_rng(config.seed, key, h, b)
        y = simulate_observations(alphabet[h], sampler, noise_power, rng, size)
        out = {}
        for det in config.detectors:
            start = time.perf_counter()
            decisions = detect[det](y, states[det])
            out[det] = (int(np.count_nonzero(decisions != h)), time.perf_counter() - start)
        return out

    workers = min(worker_count(), max(1, len(jobs)))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(job) for job in jobs]

    records = []
    for det in config.detectors:
        errors = sum(r[det][0] for r in results)
        t_det = sum(r[det][1] for r in results)
        records.append(
            ErrorRecord(
                K=config.K,
                nt=config.nt,
                nr=nr,
                snr_db=snr_db,
                detector=det,
                errors=errors,
                trials=config.trials,
                t_precompute_ms=1e3 * t_pre[det],
                t_per_trial_us=1e6 * t_det / config.trials,
            )
        )
    return records


def pairwise_error(config: ExperimentConfig) -> ErrorEstimate:
    """Average misdetection rate over the ``(nr, snr)`` grid, trials split equally across hypotheses."""
    profile, alphabet = build_setup(config)
    estimate = ErrorEstimate(config=config)
    for nr in config.nrs:
        for snr_db in config.snrs_db:
            estimate.records.extend(estimate_point(config, profile, alphabet, nr, snr_db))
    return estimate


def _fmt(value: float) -> str:
    return f"{value:.10g}"


def sweep_csv(estimate: ErrorEstimate, timing: bool = True) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_HEADER)
    for r in estimate.records:
        writer.writerow([
            r.K, r.nt, r.nr, f"{r.snr_db:g}", r.detector, _fmt(r.p_err), _fmt(r.stderr),
            f"{r.t_precompute_ms:.4f}" if timing else "",
            f"{r.t_per_trial_us:.4f}" if timing else "",
        ])
    return buf.getvalue()


def _write(text: str, out: Optional[str]) -> None:
    if out is None:
        return
    with open(out, "w", newline="") as fh:
        fh.write(text)


def run_sweep(config: ExperimentConfig) -> ErrorEstimate:
    """Run :func:`pairwise_error` and write one CSV row per grid point and detector to ``config.out``."""
    estimate = pairwise_error(config)
    _write(sweep_csv(estimate, config.timing), config.out)
    return estimate


@dataclass(frozen=True)
class BenchRecord:
    """Wall-clock of one detector at one array size.

    ``t_detect_us`` is per observation when ``observations`` blocks are detected
    as one batch. ``t_single_us`` is the detection of a single block, and
    ``t_end_to_end_ms`` adds it to the precompute: the cost of refreshing the
    statistics and detecting one codeword.
    """

    K: int
    nt: int
    nr: int
    detector: str
    t_precompute_ms: float
    t_detect_us: float
    observations: int
    t_single_us: float

    @property
    def t_end_to_end_ms(self) -> float:
        return self.t_precompute_ms + 1e-3 * self.t_single_us


def _best_time(fn, repeats: int, min_sample: float = 0.02) -> float:
    """Per-call time: each sample loops until it spans ``min_sample`` seconds; best of ``repeats`` samples."""
    loops = 1
    while True:
        start = time.perf_counter()
        for _ in range(loops):
            fn()
        elapsed = time.perf_counter() - start
        if elapsed >= min_sample:
            break
        loops *= 2
    best = elapsed / loops
    for _ in range(repeats - 1):
        start = time.perf_counter()
        for _ in range(loops):
            fn()
        best = min(best, (time.perf_counter() - start) / loops)
    return best


def benchmark_complexity(config: ExperimentConfig, repeats: int = 7) -> list:
    """Time precompute and detection of both detectors over ``config.nrs``.

    Each timing is the best of ``repeats`` runs. The noise power is taken at the
    first configured SNR. Writes a CSV with consecutive-rung precompute ratios
    to ``config.out`` when set.
    """
    profile, alphabet = build_setup(config)
    snr_db = config.snrs_db[0] if config.snrs_db else 0.0
    preset = config.preset if config.alphabet_path is None else None
    records = []
    for nr in config.nrs:
        fading = assemble_fading_covariance(profile, nr)
        noise_power = snr_to_noise_power(10.0 ** (snr_db / 10.0), alphabet, fading, preset)
        sampler = ChannelSampler(profile, nr, fading.eta)
        y = simulate_observations(alphabet[0], sampler, noise_power, _seed_rng(config.seed, 1, nr), config.bench_observations)
        for det in ("direct", "spectral"):
            if det == "direct":
                pre = lambda: precompute_direct(alphabet, fading, noise_power)  # noqa: E731
                detect = detect_direct
            else:
                pre = lambda: precompute_spectral(alphabet, fading, noise_power, config.window)  # noqa: E731
                detect = detect_spectral
            state = pre()
            t_pre = _best_time(pre, repeats)
            t_det = _best_time(lambda: detect(y, state), repeats)
            t_one = _best_time(lambda: detect(y[0], state), repeats)
            records.append(BenchRecord(config.K, config.nt, nr, det, 1e3 * t_pre, 1e6 * t_det / len(y), len(y), 1e6 * t_one))
    _write(bench_csv(records), config.out)
    return records


def precompute_ratios(records: Sequence[BenchRecord], detector: str) -> list:
    """Precompute-time ratios between consecutive array sizes for one detector."""
    times = [r.t_precompute_ms for r in sorted(records, key=lambda r: r.nr) if r.detector == detector]
    return [b / a for a, b in zip(times, times[1:])]


def bench_csv(records: Sequence[BenchRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(BENCH_HEADER)
    previous = {}
    for r in sorted(records, key=lambda r: (r.detector, r.nr)):
        ratio = r.t_precompute_ms / previous[r.detector] if r.detector in previous else None
        previous[r.detector] = r.t_precompute_ms
        writer.writerow([
            r.K, r.nt, r.nr, r.detector, f"{r.t_precompute_ms:.4f}", f"{r.t_detect_us:.4f}",
            f"{r.t_single_us:.4f}", f"{r.t_end_to_end_ms:.4f}", "" if ratio is None else f"{ratio:.3f}",
        ])
    return buf.getvalue()
