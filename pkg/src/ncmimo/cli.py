"""Command-line entry point.

Exit codes: 0 success, 1 invalid configuration, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .errors import InvalidArgumentError, NumericalError
from .harness import DETECTORS, PRESETS, ExperimentConfig, benchmark_complexity, build_setup, precompute_ratios, run_sweep, snr_to_noise_power


def _int_list(text: str) -> list:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text: str) -> list:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="ncmimo",
        description="Noncoherent massive-MIMO detection experiments: error-rate sweeps and complexity benchmarks.",
        epilog="Negative SNR lists need the '=' form, e.g. --snr-db=-10,-5.",
    )
    p.add_argument("--preset", choices=PRESETS, default="orthogonal-pair", help="codeword alphabet")
    p.add_argument("--alphabet", default=None, help="read codewords from a text file instead of a preset")
    p.add_argument("--K", type=int, default=4, help="codeword length")
    p.add_argument("--nt", type=int, default=1, help="transmit antennas")
    p.add_argument("--M", type=int, default=2, help="alphabet size (grassmannian)")
    p.add_argument("--nr", type=_int_list, default=[128], help="comma list of receive array sizes")
    p.add_argument("--snr-db", type=_float_list, default=[-10.0], help="comma list of SNR values in dB")
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--detector", choices=DETECTORS, default="both")
    p.add_argument("--window", choices=("rect", "bt"), default="bt", help="lag window of the spectral estimate")
    p.add_argument("--profile", default="triangular", help="fading preset (triangular, flat) or profile table path")
    p.add_argument("--out", default=None, help="CSV output path (stdout if omitted)")
    p.add_argument("--bench", action="store_true", help="time precompute and detection instead of estimating errors")
    p.add_argument("--no-timing", action="store_true", help="leave timing columns empty so reruns are byte-identical")
    p.add_argument("--dump-csm", default=None, metavar="PATH", help="write the spectral CSMs of the first grid point")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _dump_csm(config: ExperimentConfig, path: str) -> None:
    from .channel import assemble_fading_covariance
    from .detector_spectral import dump_csms, precompute_spectral

    if not config.nrs or not config.snrs_db:
        raise InvalidArgumentError("--dump-csm needs at least one Nr and one SNR value")
    profile, alphabet = build_setup(config)
    fading = assemble_fading_covariance(profile, config.nrs[0])
    preset = config.preset if config.alphabet_path is None else None
    noise_power = snr_to_noise_power(10.0 ** (config.snrs_db[0] / 10.0), alphabet, fading, preset)
    dump_csms(precompute_spectral(alphabet, fading, noise_power, config.window), path)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        config = ExperimentConfig(
            K=args.K,
            nt=args.nt,
            M=args.M,
            nrs=args.nr,
            snrs_db=args.snr_db,
            trials=args.trials,
            seed=args.seed,
            detector=args.detector,
            preset=args.preset,
            profile=args.profile,
            window=args.window,
            out=args.out,
            timing=not args.no_timing,
            alphabet_path=args.alphabet,
        )
        if args.dump_csm:
            _dump_csm(config, args.dump_csm)
        if args.bench:
            from .harness import bench_csv

            records = benchmark_complexity(config)
            if config.out is None:
                sys.stdout.write(bench_csv(records))
            for det in ("direct", "spectral"):
                ratios = ", ".join(f"{r:.2f}" for r in precompute_ratios(records, det))
                print(f"{det} precompute ratios per rung: {ratios}", file=sys.stderr)
        else:
            from .harness import sweep_csv

            estimate = run_sweep(config)
            if config.out is None:
                sys.stdout.write(sweep_csv(estimate, config.timing))
    except (InvalidArgumentError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
