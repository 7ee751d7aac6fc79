"""Delimited reports and companion figures.

CSV is the canonical interface for downstream tooling; alongside each
report the render helpers write a matching PNG so runs can be eyeballed
without extra plotting scripts.  Floats are written with ``repr`` so files
round-trip exactly and byte-identical reruns stay byte-identical.
"""

import csv
import json
import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .active import CurvePoint
from .em import EmReport
from .evaluate import MetricsRow

CURVE_COLUMNS = [
    "strategy",
    "iteration",
    "dataset_size",
    "train_ll_per_seq",
    "test_ll_per_seq",
    "skipped_traces",
]


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_curve_csv(points: list[CurvePoint], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CURVE_COLUMNS)
        for p in points:
            writer.writerow(
                [
                    p.strategy,
                    p.iteration,
                    p.dataset_size,
                    _fmt(p.train_ll_per_seq),
                    _fmt(p.test_ll_per_seq),
                    p.skipped_traces,
                ]
            )


def render_curve_figure(points: list[CurvePoint], path) -> None:
    """Learning curves per strategy: test log-likelihood (solid) and train
    (dashed) against iteration."""
    strategies = sorted({p.strategy for p in points})
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for strategy in strategies:
        rows = [p for p in points if p.strategy == strategy]
        iters = [p.iteration for p in rows]
        test = [p.test_ll_per_seq for p in rows]
        if any(v is not None and math.isfinite(v) for v in test):
            ax.plot(iters, test, label=f"{strategy} (test)")
        train = [p.train_ll_per_seq for p in rows]
        if any(math.isfinite(v) for v in train):
            ax.plot(iters, train, linestyle="--", alpha=0.6, label=f"{strategy} (train)")
    ax.set_xlabel("iteration")
    ax.set_ylabel("log-likelihood per sequence (nats)")
    ax.legend(loc="lower right")
    ax.grid(True, alpha=0.3)
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)


def render_em_trace_figure(report: EmReport, path) -> None:
    """Total log-likelihood after each Baum-Welch update."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    trace = [v for v in report.log_likelihood_trace if math.isfinite(v)]
    offset = len(report.log_likelihood_trace) - len(trace)
    ax.plot(range(offset, offset + len(trace)), trace, marker=".")
    ax.set_xlabel("update")
    ax.set_ylabel("total log-likelihood (nats)")
    ax.grid(True, alpha=0.3)
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)


def write_metrics_csv(rows: list[MetricsRow], path) -> None:
    docs = [row.as_dict() for row in rows]
    columns: list[str] = []
    for doc in docs:
        for key in doc:
            if key not in columns:
                columns.append(key)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for doc in docs:
            writer.writerow([_fmt(doc.get(col)) for col in columns])


def write_metrics_json(rows: list[MetricsRow], path) -> None:
    with open(path, "w") as fh:
        json.dump([row.as_dict() for row in rows], fh, indent=2)
        fh.write("\n")


def render_metrics_figure(rows: list[MetricsRow], path) -> None:
    """Bar chart of per-model test log-likelihoods (finite values only)."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    names, values = [], []
    for row in rows:
        if row.test_ll is not None and math.isfinite(row.test_ll.value):
            names.append(row.model_id)
            values.append(row.test_ll.value)
    if names:
        ax.bar(range(len(names)), values)
        ax.set_xticks(range(len(names)))
        ax.set_xticklabels(names, rotation=20, ha="right")
        ax.set_ylabel("test log-likelihood per sequence (nats)")
    else:
        ax.text(0.5, 0.5, "no finite test log-likelihoods", ha="center", va="center")
        ax.set_axis_off()
    ax.grid(True, axis="y", alpha=0.3)
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
