"""Command line driver: train / degrade / recover / evaluate / proxcheck
/ e2e / gen-data over a shared output directory.

Exit codes: 0 success, 1 runtime failure, 2 usage error.  The
MEMPROBE_THREADS environment variable caps the recovery worker count
(0 or unset means sequential); file writes stay on the coordinator so
outputs are deterministic.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import io as mio
from . import report
from .autoencoder import Activation, build_deep_fc, build_tied
from .config import ExperimentConfig, apply_key, load_config
from .degradation import DegradationSpec, degrade, generate_mask
from .metrics import format_psnr, mse, psnr, summarize
from .numerics import Rng
from .proxcheck import check_moreau
from .recovery import (RecoveryConfig, baseline_iterate, default_gamma,
                       recover_known_H, recover_unknown_H)
from .trainer import train


def _worker_count() -> int:
    raw = os.environ.get("MEMPROBE_THREADS", "0")
    try:
        return max(int(raw), 0)
    except ValueError:
        return 0


def _resolve_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg.seed = args.seed
        cfg.train.seed = args.seed
        cfg.recover.seed = args.seed
    if args.out is not None:
        cfg.out_dir = args.out
    if getattr(args, "gamma", None) is not None:
        cfg.recover.gamma = args.gamma
        cfg.gamma_set = True
    if getattr(args, "mask_pattern", None) is not None:
        cfg.degrade.pattern = args.mask_pattern
    if getattr(args, "sigma_eps", None) is not None:
        cfg.degrade.sigma_eps = args.sigma_eps
    if getattr(args, "loss_target", None) is not None:
        cps = tuple(c for c in cfg.train.loss_checkpoints if c > args.loss_target)
        cfg.train.loss_checkpoints = cps + (args.loss_target,)
    if getattr(args, "mode", None) is not None:
        cfg.mode = args.mode
    if not cfg.gamma_set:
        cfg.recover.gamma = default_gamma(
            f"fc{cfg.arch.num_layers}", cfg.arch.activation
        )
    os.makedirs(cfg.out_dir, exist_ok=True)
    return cfg


def _dataset_records(cfg: ExperimentConfig):
    ds = cfg.dataset
    if ds.path:
        return mio.load_dataset(ds.path, limit=ds.limit, seed=cfg.seed)
    return mio.synthetic_dataset(ds.n, ds.height, ds.width, seed=cfg.seed)


def _geometry(records):
    first = records[0]
    return first.height, first.width, first.channels


def stage_gen_data(cfg: ExperimentConfig) -> str:
    records = mio.synthetic_dataset(
        cfg.dataset.n, cfg.dataset.height, cfg.dataset.width, seed=cfg.seed
    )
    path = os.path.join(cfg.out_dir, "dataset.mpr")
    mio.save_tensor(path, mio.records_to_array(records),
                    cfg.dataset.height, cfg.dataset.width, cfg.dataset.channels)
    return path


def stage_train(cfg: ExperimentConfig):
    records = _dataset_records(cfg)
    h, w, c = _geometry(records)
    data = mio.records_to_array(records)
    mio.save_tensor(os.path.join(cfg.out_dir, "dataset.mpr"), data, h, w, c)

    d = data.shape[1]
    n = data.shape[0]
    latent = cfg.arch.latent if cfg.arch.latent else 2 * n
    act = Activation(cfg.arch.activation, cfg.arch.act_param)
    rng = Rng(cfg.train.seed, spawn_key=(0x11,))
    if cfg.arch.kind == "tied":
        model = build_tied(d, latent, act, rng)
    else:
        model = build_deep_fc(d, latent, act, rng, num_layers=cfg.arch.num_layers)

    checkpoints, log = train(model, data, cfg.train)
    report.write_train_log_csv(os.path.join(cfg.out_dir, "train_log.csv"), log)
    for ckpt in checkpoints:
        name = f"ckpt_{ckpt.threshold:.0e}.mprm"
        mio.save_model(os.path.join(cfg.out_dir, name), ckpt.model)
    mio.save_model(os.path.join(cfg.out_dir, "model.mprm"), model)
    if not checkpoints or checkpoints[-1].threshold != cfg.train.loss_checkpoints[-1]:
        print(
            f"warning: final loss target {cfg.train.loss_checkpoints[-1]:.1e} "
            f"not reached within {cfg.train.max_epochs} epochs", file=sys.stderr,
        )
    return checkpoints


def stage_degrade(cfg: ExperimentConfig):
    data, h, w, c = mio.load_tensor(os.path.join(cfg.out_dir, "dataset.mpr"))
    mask = generate_mask(
        cfg.degrade.pattern, cfg.degrade.pattern_params(),
        geometry=(h, w, c), rng=Rng(cfg.seed, spawn_key=(0x22,)),
    )
    spec = DegradationSpec(mask, cfg.degrade.sigma_eps, cfg.seed,
                           cfg.degrade.noise_on_kept_only)
    degraded = np.stack([
        degrade(row, spec, rng=Rng(cfg.seed, spawn_key=(0x23, i)))
        for i, row in enumerate(data)
    ])
    mio.save_mask(os.path.join(cfg.out_dir, "mask.pbm"), mask, h * c, w)
    mio.save_tensor(os.path.join(cfg.out_dir, "degraded.mpr"), degraded, h, w, c)
    return mask, degraded


def _recover_one(model, y, mask, truth, cfg: ExperimentConfig, index: int):
    if cfg.mode == "unknown-h":
        return recover_unknown_H(model, y, cfg.recover, truth=truth,
                                 sample_index=index)
    if cfg.mode == "known-h":
        noiseless = cfg.degrade.sigma_eps == 0.0
        return recover_known_H(model, y, mask, cfg.recover,
                               noiseless=noiseless, truth=truth)
    if cfg.mode == "baseline":
        return baseline_iterate(model, y, truth=truth)
    raise ValueError(f"unknown mode {cfg.mode!r}")


def stage_recover(cfg: ExperimentConfig):
    model = mio.load_model(os.path.join(cfg.out_dir, "model.mprm"))
    degraded, h, w, c = mio.load_tensor(os.path.join(cfg.out_dir, "degraded.mpr"))
    truth_path = os.path.join(cfg.out_dir, "dataset.mpr")
    truth = mio.load_tensor(truth_path)[0] if os.path.exists(truth_path) else None
    mask_path = os.path.join(cfg.out_dir, "mask.pbm")
    true_mask = mio.load_mask(mask_path) if os.path.exists(mask_path) else None
    if cfg.mode == "known-h" and true_mask is None:
        raise FileNotFoundError(f"known-h mode needs a mask file at {mask_path}")

    jobs = list(range(degraded.shape[0]))
    run = lambda i: _recover_one(
        model, degraded[i], true_mask,
        truth[i] if truth is not None else None, cfg, i,
    )
    workers = _worker_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(i) for i in jobs]

    estimates = np.stack([r.estimate for r in results])
    mio.save_tensor(os.path.join(cfg.out_dir, "recovered.mpr"), estimates, h, w, c)

    records = []
    for i, res in enumerate(results):
        rec = {
            "sample_id": i,
            "converged": bool(res.converged),
            "outer_iters": res.outer_iters_used,
        }
        if truth is not None:
            final_mse = mse(res.estimate, truth[i])
            rec["final_mse"] = final_mse
            rec["final_psnr"] = format_psnr(psnr(final_mse))
        if true_mask is not None and res.mask_estimate is not None:
            rec["mask_hamming_error"] = res.mask_estimate.hamming_error(true_mask)
        records.append(rec)
    report.write_sample_records_jsonl(
        os.path.join(cfg.out_dir, "records.jsonl"), records)

    truth_traces = {
        i: r.truth_mse_trace for i, r in enumerate(results)
        if r.truth_mse_trace
    }
    if truth_traces:
        report.write_trace_csv(os.path.join(cfg.out_dir, "truth_trace.csv"),
                               truth_traces)
        report.render_trace_figure(cfg.out_dir, truth_traces)
    return results


def stage_evaluate(cfg: ExperimentConfig):
    truth = mio.load_tensor(os.path.join(cfg.out_dir, "dataset.mpr"))[0]
    recovered = mio.load_tensor(os.path.join(cfg.out_dir, "recovered.mpr"))[0]
    if truth.shape != recovered.shape:
        raise ValueError("dataset and recovered tensors disagree in shape")
    sample_mses = [mse(recovered[i], truth[i]) for i in range(truth.shape[0])]
    summary = summarize(sample_mses, cfg.thresholds)
    report.write_per_sample_csv(os.path.join(cfg.out_dir, "per_sample.csv"), summary)
    report.write_summary_json(
        os.path.join(cfg.out_dir, "summary.json"), summary,
        extra={"mode": cfg.mode, "seed": cfg.seed, "gamma": cfg.recover.gamma},
    )
    report.render_summary_figures(cfg.out_dir, summary, cfg.thresholds)
    return summary


def stage_proxcheck(cfg: ExperimentConfig, model_path: str | None = None):
    path = model_path or os.path.join(cfg.out_dir, "model.mprm")
    model = mio.load_model(path)
    rep = check_moreau(model)
    with open(os.path.join(cfg.out_dir, "proxcheck.json"), "w") as fh:
        fh.write(rep.to_json() + "\n")
    print(rep.summary())
    return rep


def run_experiment(cfg: ExperimentConfig) -> int:
    stage_train(cfg)
    stage_degrade(cfg)
    stage_recover(cfg)
    stage_evaluate(cfg)
    return 0


def _add_common(parser):
    parser.add_argument("--config", help="flat key=value config file")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="memprobe",
        description="Recover memorized training images from overparameterized autoencoders",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write a synthetic dataset tensor")
    _add_common(p)

    p = sub.add_parser("train", help="train an autoencoder with loss checkpoints")
    _add_common(p)
    p.add_argument("--loss-target", type=float)

    p = sub.add_parser("degrade", help="mask + noise the training images")
    _add_common(p)
    p.add_argument("--mask-pattern",
                   choices=["uniform_random", "center_block", "stripes", "half",
                            "from_file"])
    p.add_argument("--sigma-eps", type=float)

    p = sub.add_parser("recover", help="run a recovery solver")
    _add_common(p)
    p.add_argument("--mode", choices=["unknown-h", "known-h", "baseline"])
    p.add_argument("--gamma", type=float)

    p = sub.add_parser("evaluate", help="score recovered images, write reports")
    _add_common(p)

    p = sub.add_parser("proxcheck", help="certify the Moreau-proximity conditions")
    _add_common(p)
    p.add_argument("--model", help="model file (default <out>/model.mprm)")

    p = sub.add_parser("e2e", help="train, degrade, recover, evaluate")
    _add_common(p)
    p.add_argument("--loss-target", type=float)
    p.add_argument("--mask-pattern",
                   choices=["uniform_random", "center_block", "stripes", "half",
                            "from_file"])
    p.add_argument("--sigma-eps", type=float)
    p.add_argument("--mode", choices=["unknown-h", "known-h", "baseline"])
    p.add_argument("--gamma", type=float)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _resolve_config(args)
        if args.command == "gen-data":
            print(stage_gen_data(cfg))
        elif args.command == "train":
            stage_train(cfg)
        elif args.command == "degrade":
            stage_degrade(cfg)
        elif args.command == "recover":
            stage_recover(cfg)
        elif args.command == "evaluate":
            summary = stage_evaluate(cfg)
            print(json.dumps({
                "accurate_rate_percent": summary.accurate_rate,
                "approximate_rate_percent": summary.approximate_rate,
                "average_psnr_db": summary.average_psnr,
            }, sort_keys=True))
        elif args.command == "proxcheck":
            stage_proxcheck(cfg, getattr(args, "model", None))
        elif args.command == "e2e":
            run_experiment(cfg)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
