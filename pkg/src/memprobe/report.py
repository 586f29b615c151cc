"""Delimited reports and figure rendering for recovery experiments.

CSV/JSON files are the machine contract; alongside them the report path
renders matplotlib figures (per-sample PSNR bars, MSE histogram, and
recovery traces) so a run can be eyeballed without extra tooling.
"""

from __future__ import annotations

import csv
import json
import math
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .metrics import EvalSummary, EvalThresholds, format_psnr


def write_per_sample_csv(path, summary: EvalSummary):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "mse", "psnr_db", "accurate", "approximate"])
        for r in summary.records:
            writer.writerow([
                r.sample_id, repr(r.mse), format_psnr(r.psnr_db),
                int(r.accurate), int(r.approximate),
            ])


def write_summary_json(path, summary: EvalSummary, extra: dict | None = None):
    payload = {
        "accurate_rate_percent": summary.accurate_rate,
        "approximate_rate_percent": summary.approximate_rate,
        "average_psnr_db": summary.average_psnr,
        "num_samples": len(summary.records),
    }
    if extra:
        payload.update(extra)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_sample_records_jsonl(path, records: list[dict]):
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def write_train_log_csv(path, log):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "loss", "lr"])
        for entry in log:
            writer.writerow([entry.epoch, repr(entry.loss), repr(entry.learning_rate)])


def render_summary_figures(out_dir, summary: EvalSummary,
                           thresholds: EvalThresholds | None = None,
                           prefix: str = ""):
    """PNG figures next to the CSV: PSNR bars and an MSE histogram."""
    if thresholds is None:
        thresholds = EvalThresholds()
    ids = [r.sample_id for r in summary.records]
    psnrs = [min(r.psnr_db, 150.0) for r in summary.records]

    fig, ax = plt.subplots(figsize=(8, 4))
    ax.bar(ids, psnrs, color="steelblue")
    for level, label, color in (
        (10 * math.log10(1 / thresholds.accurate_mse), "accurate", "forestgreen"),
        (10 * math.log10(1 / thresholds.approximate_mse), "approximate", "darkorange"),
    ):
        ax.axhline(level, color=color, linestyle="--", linewidth=1, label=label)
    ax.set_xlabel("sample")
    ax.set_ylabel("PSNR [dB]")
    ax.set_title(f"Per-sample PSNR (avg {summary.average_psnr:.2f} dB)")
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(os.path.join(out_dir, f"{prefix}psnr_per_sample.png"), dpi=120)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(6, 4))
    mses = np.maximum([r.mse for r in summary.records], 1e-16)
    ax.hist(np.log10(mses), bins=20, color="slategray")
    ax.axvline(math.log10(thresholds.accurate_mse), color="forestgreen",
               linestyle="--", linewidth=1)
    ax.axvline(math.log10(thresholds.approximate_mse), color="darkorange",
               linestyle="--", linewidth=1)
    ax.set_xlabel("log10 MSE")
    ax.set_ylabel("count")
    ax.set_title("Reconstruction MSE distribution")
    fig.tight_layout()
    fig.savefig(os.path.join(out_dir, f"{prefix}mse_hist.png"), dpi=120)
    plt.close(fig)


def render_trace_figure(out_dir, traces: dict[int, list[float]],
                        ylabel: str = "MSE to ground truth",
                        name: str = "recovery_traces.png"):
    """Per-iteration traces, one line per sample, log y-scale."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for sample_id, trace in sorted(traces.items()):
        vals = np.maximum(np.asarray(trace, dtype=float), 1e-16)
        ax.semilogy(range(1, len(vals) + 1), vals, alpha=0.6, linewidth=1)
    ax.set_xlabel("outer iteration")
    ax.set_ylabel(ylabel)
    ax.set_title(f"Recovery traces ({len(traces)} samples)")
    fig.tight_layout()
    fig.savefig(os.path.join(out_dir, name), dpi=120)
    plt.close(fig)


def write_trace_csv(path, traces: dict[int, list[float]]):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "iteration", "value"])
        for sample_id, trace in sorted(traces.items()):
            for i, val in enumerate(trace, 1):
                writer.writerow([sample_id, i, repr(float(val))])
