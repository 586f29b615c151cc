"""Acceptance suite: ten end-to-end checks, one printed pass/fail line each.

The slow checks share the session-scoped desk-scale training run from
conftest (20 grayscale 16x16 images, 10-layer FC, seed 42, loss driven
to 1e-8) plus one 50% uniform-random erasure of that dataset.
"""

import json
import os
import time

import numpy as np
import pytest

from memprobe.autoencoder import Activation, TiedAutoencoder, build_deep_fc, build_tied
from memprobe.cli import main as cli_main
from memprobe.degradation import DegradationSpec, degrade, generate_mask
from memprobe.metrics import mse, psnr, summarize
from memprobe.numerics import Rng
from memprobe.recovery import (RecoveryConfig, baseline_iterate,
                               data_fidelity_update, mask_update,
                               recover_known_H, recover_unknown_H)
from memprobe.proxcheck import check_moreau
from memprobe.trainer import backprop_gradients, mse_loss, project_spectral_norm

from test_trainer import finite_diff_check

ACCURATE = 1e-7
APPROXIMATE = 5e-4


def _report(num, name, ok, detail=""):
    status = "PASS" if ok else "FAIL"
    print(f"\n[criterion {num:2d}] {name}: {status}" + (f" ({detail})" if detail else ""))
    assert ok, f"criterion {num} ({name}) failed: {detail}"


def _accurate_count(estimates, truth):
    return sum(mse(e, t) < ACCURATE for e, t in zip(estimates, truth))


def _approximate_count(estimates, truth):
    return sum(mse(e, t) < APPROXIMATE for e, t in zip(estimates, truth))


@pytest.fixture(scope="module")
def erasure_setup(desk_run):
    """50% uniform-random erasure of the desk-scale training set, noiseless."""
    mask = generate_mask("uniform_random", {"p_erase": 0.5}, d=256,
                         rng=Rng(42, spawn_key=(0x22,)))
    spec = DegradationSpec(mask, 0.0)
    degraded = np.stack([degrade(x, spec) for x in desk_run["data"]])
    return mask, degraded


def _recover_all_unknown(model, degraded):
    cfg = RecoveryConfig(gamma=0.5, seed=42)
    return np.stack([
        recover_unknown_H(model, degraded[i], cfg, sample_index=i).estimate
        for i in range(degraded.shape[0])
    ])


@pytest.fixture(scope="module")
def unknown_estimates(desk_run, erasure_setup):
    _, degraded = erasure_setup
    return _recover_all_unknown(desk_run["checkpoints"][-1].model, degraded)


def test_criterion_01_closed_form_data_step():
    t0 = time.perf_counter()
    rng = Rng(0xC1)
    worst_grad = 0.0
    losses = 0
    for _ in range(1000):
        d = 1 + int(rng.uniform() * 255)
        y = rng.uniform(size=d)
        v_tilde = rng.uniform(size=d, low=-0.5, high=1.5)
        theta_diag = (rng.uniform(size=d) < 0.5).astype(float)
        gamma = 0.05 + 2.0 * rng.uniform()
        from memprobe.degradation import ErasureMask
        theta = ErasureMask(theta_diag)
        z = data_fidelity_update(y, v_tilde, theta, gamma)
        grad = 2 * theta_diag * (theta_diag * z - y) + gamma * (z - v_tilde)
        worst_grad = max(worst_grad, float(np.max(np.abs(grad))))

        def objective(x):
            return (np.sum((x * theta_diag - y) ** 2, axis=-1)
                    + (gamma / 2.0) * np.sum((x - v_tilde) ** 2, axis=-1))

        dirs = rng.normal(size=(1000, d))
        dirs *= 1e-3 / np.linalg.norm(dirs, axis=1, keepdims=True)
        losses += int(np.sum(objective(z + dirs) < objective(z)))
    elapsed = time.perf_counter() - t0
    ok = worst_grad <= 1e-10 and losses == 0 and elapsed < 10.0
    _report(1, "closed-form data-fidelity step",
            ok, f"max|grad|={worst_grad:.2e}, losses={losses}, {elapsed:.1f}s")


def test_criterion_02_mask_update_oracle():
    t0 = time.perf_counter()
    rng = Rng(0xC2)
    n = 10 ** 6
    x_hat = rng.uniform(size=n, low=-1.0, high=2.5)
    y = rng.uniform(size=n)
    ours = mask_update(x_hat, y).diag
    keep_cost = (x_hat - y) ** 2
    drop_cost = y ** 2
    oracle = np.where(keep_cost <= drop_cost, 1.0, 0.0)
    mismatches = int(np.sum(ours != oracle))
    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and elapsed < 5.0
    _report(2, "mask-update brute-force oracle",
            ok, f"{mismatches} mismatches over 1e6 coords, {elapsed:.1f}s")


def test_criterion_03_proximity_certification():
    t0 = time.perf_counter()
    rng = Rng(0xC3)
    certified = 0
    for i in range(100):
        d = 4 + int(rng.uniform() * 29)  # <= 32
        m = 4 + int(rng.uniform() * 61)  # <= 64
        ae = build_tied(d, m, Activation("softplus", 0.5 + rng.uniform() * 2), rng,
                        scale=0.5 + rng.uniform() * 2)
        ae = project_spectral_norm(ae, 1.0)
        rep = check_moreau(ae)
        if (rep.verdict == "certified"
                and rep.eigen_min >= -1e-6 and rep.eigen_max <= 1 + 1e-6
                and rep.analytic_vs_numeric_jacobian_maxerr <= 1e-5):
            certified += 1
    violator = check_moreau(TiedAutoencoder(2.0 * np.eye(6), Activation("identity")))
    violator_ok = (violator.verdict == "premise_violated"
                   and abs(violator.eigen_max - 4.0) <= 1e-6)
    elapsed = time.perf_counter() - t0
    ok = certified == 100 and violator_ok and elapsed < 60.0
    _report(3, "proximity-operator certification",
            ok, f"{certified}/100 certified, violator eig_max="
                f"{violator.eigen_max:.8f}, {elapsed:.1f}s")


def test_criterion_04_gradient_check():
    t0 = time.perf_counter()
    deep = build_deep_fc(8, 4, Activation("prelu", 0.25), Rng(0xC4),
                         widths=[8, 6, 4, 8])
    tied = build_tied(8, 12, Activation("prelu", 0.3), Rng(0xC5))
    batch = Rng(0xC6).uniform(size=(3, 8))
    err_deep = finite_diff_check(deep, batch)
    err_tied = finite_diff_check(tied, batch)
    elapsed = time.perf_counter() - t0
    ok = err_deep <= 1e-4 and err_tied <= 1e-4 and elapsed < 5.0
    _report(4, "finite-difference gradient check",
            ok, f"rel err deep={err_deep:.2e}, tied={err_tied:.2e}, {elapsed:.1f}s")


def test_criterion_05_perfect_fit_fixed_points(desk_run):
    t0 = time.perf_counter()
    model, data = desk_run["model"], desk_run["data"]
    worst_recon = max(mse(model(x), x) for x in data)
    worst_step = 0.0
    for x in data:
        res = baseline_iterate(model, x, max_iters=3, tol=0.0)
        worst_step = max(worst_step, max(res.step_mse_trace))
    elapsed = desk_run["train_seconds"] + (time.perf_counter() - t0)
    ok = (mse_loss(model, data) <= 1e-8 and worst_recon <= 1e-6
          and worst_step <= 1e-6 and elapsed < 600.0)
    _report(5, "perfect-fit fixed points",
            ok, f"loss={mse_loss(model, data):.2e}, worst recon={worst_recon:.2e}, "
                f"worst step={worst_step:.2e}, {elapsed:.0f}s incl. training")


def test_criterion_06_recovery_ordering(desk_run, erasure_setup, unknown_estimates):
    t0 = time.perf_counter()
    model = desk_run["checkpoints"][-1].model
    data, nontrain = desk_run["data"], desk_run["nontrain"]
    mask, degraded = erasure_setup
    cfg = RecoveryConfig(gamma=0.5, seed=42)

    known = np.stack([
        recover_known_H(model, degraded[i], mask, cfg, noiseless=True).estimate
        for i in range(20)
    ])
    base = np.stack([baseline_iterate(model, degraded[i]).estimate
                     for i in range(20)])

    acc_known = _accurate_count(known, data)
    acc_unknown = _accurate_count(unknown_estimates, data)
    acc_base = _accurate_count(base, data)

    spec = DegradationSpec(mask, 0.0)
    nt_degraded = np.stack([degrade(x, spec) for x in nontrain])
    nt_estimates = _recover_all_unknown(model, nt_degraded)
    acc_nontrain = _accurate_count(nt_estimates, nontrain)

    elapsed = time.perf_counter() - t0
    ok = (acc_known >= acc_unknown > acc_base
          and acc_unknown - acc_base >= 2
          and acc_nontrain == 0
          and elapsed < 900.0)
    _report(6, "recovery-rate ordering",
            ok, f"accurate known={acc_known}/20 >= unknown={acc_unknown}/20 > "
                f"baseline={acc_base}/20; non-training={acc_nontrain}/20, {elapsed:.0f}s")


def test_criterion_07_overfitting_monotonicity(desk_run, erasure_setup,
                                               unknown_estimates):
    t0 = time.perf_counter()
    data = desk_run["data"]
    _, degraded = erasure_setup
    rates = []
    for ckpt in desk_run["checkpoints"][:-1]:  # 1e-4, 1e-6
        est = _recover_all_unknown(ckpt.model, degraded)
        rates.append(_approximate_count(est, data))
    rates.append(_approximate_count(unknown_estimates, data))  # 1e-8
    elapsed = time.perf_counter() - t0
    ok = rates[0] <= rates[1] <= rates[2] and elapsed < 600.0
    _report(7, "overfitting-level monotonicity",
            ok, f"approximate counts at losses 1e-4/1e-6/1e-8: "
                f"{rates[0]}/{rates[1]}/{rates[2]} of 20, {elapsed:.0f}s")


def test_criterion_08_metric_anchors():
    p70 = psnr(1e-7)
    p33 = psnr(5e-4)
    ok = abs(p70 - 70.0) <= 1e-3 and abs(p33 - 33.0103) <= 1e-3
    _report(8, "PSNR threshold anchors",
            ok, f"psnr(1e-7)={p70:.4f} dB, psnr(5e-4)={p33:.4f} dB")


def test_criterion_09_noise_robustness(desk_run, erasure_setup):
    t0 = time.perf_counter()
    model, data = desk_run["checkpoints"][-1].model, desk_run["data"]
    mask, _ = erasure_setup
    spec = DegradationSpec(mask, 0.02)
    noisy = np.stack([
        degrade(x, spec, rng=Rng(42, spawn_key=(0x23, i)))
        for i, x in enumerate(data)
    ])
    unknown = _recover_all_unknown(model, noisy)
    base = np.stack([baseline_iterate(model, noisy[i]).estimate
                     for i in range(20)])
    psnr_unknown = summarize([mse(e, t) for e, t in zip(unknown, data)]).average_psnr
    psnr_base = summarize([mse(e, t) for e, t in zip(base, data)]).average_psnr
    elapsed = time.perf_counter() - t0
    ok = psnr_unknown - psnr_base >= 3.0 and elapsed < 900.0
    _report(9, "noise robustness (sigma=0.02)",
            ok, f"avg PSNR unknown={psnr_unknown:.2f} dB vs "
                f"baseline={psnr_base:.2f} dB, {elapsed:.0f}s")


def test_criterion_10_determinism(tmp_path):
    out_a = str(tmp_path / "run_a")
    out_b = str(tmp_path / "run_b")
    rc_a = cli_main(["e2e", "--out", out_a, "--seed", "42"])
    rc_b = cli_main(["e2e", "--out", out_b, "--seed", "42"])
    bytes_a = open(os.path.join(out_a, "summary.json"), "rb").read()
    bytes_b = open(os.path.join(out_b, "summary.json"), "rb").read()
    ok = rc_a == 0 and rc_b == 0 and bytes_a == bytes_b
    payload = json.loads(bytes_a)
    _report(10, "byte-identical repeated pipeline",
            ok, f"summary files identical ({len(bytes_a)} bytes, "
                f"approx rate {payload['approximate_rate_percent']:.0f}%)")
