"""Sweep result serialization (CSV/JSON) and chart rendering (SVG).

Output bytes are a pure function of the result: floats are written through
repr (shortest round-trip), orderings are fixed, and the SVG renderer pins
matplotlib's hash salt and strips the date metadata.
"""

from __future__ import annotations

import csv
import io
import json
import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .bench import SweepResult, SweepRecord, AggregateRow, SnapshotTable  # noqa: E402

AGG_HEADER = ["method", "pt_db", "mean_min_snr", "n_ok", "n_failed"]
REC_HEADER = ["method", "pt_db", "realization", "min_snr", "balanced",
              "rank_case", "iters", "wall_ms"]

_SVG_RC = {
    "svg.hashsalt": "mmfbeam",
    "svg.fonttype": "path",
}


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def render_csv(result: SweepResult) -> str:
    """Aggregate section, blank line, then the per-record section."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(AGG_HEADER)
    for row in result.aggregates:
        writer.writerow([_fmt(getattr(row, col)) for col in AGG_HEADER])
    writer.writerow([])
    writer.writerow(REC_HEADER)
    for rec in result.records:
        writer.writerow([_fmt(getattr(rec, col)) for col in REC_HEADER])
    return buf.getvalue()


def write_csv(result: SweepResult, path) -> None:
    try:
        with open(path, "w", newline="") as f:
            f.write(render_csv(result))
    except OSError as e:
        raise OSError(f"cannot write CSV report to {path}: {e}") from e


def result_to_dict(result: SweepResult) -> dict:
    return {
        "config": result.config,
        "aggregates": [
            {"method": a.method, "pt_db": a.pt_db, "mean_min_snr": a.mean_min_snr,
             "n_ok": a.n_ok, "n_failed": a.n_failed}
            for a in result.aggregates
        ],
        "records": [
            {"method": r.method, "pt_db": r.pt_db, "realization": r.realization,
             "status": r.status, "min_snr": r.min_snr,
             "per_user_snr": list(r.per_user_snr), "balanced": r.balanced,
             "rank_case": r.rank_case, "iters": r.iters, "wall_ms": r.wall_ms,
             "kkt": r.kkt}
            for r in result.records
        ],
    }


def result_from_dict(payload: dict) -> SweepResult:
    records = tuple(
        SweepRecord(method=r["method"], pt_db=r["pt_db"], realization=r["realization"],
                    status=r["status"], min_snr=r["min_snr"],
                    per_user_snr=tuple(r["per_user_snr"]), balanced=r["balanced"],
                    rank_case=r["rank_case"], iters=r["iters"], wall_ms=r["wall_ms"],
                    kkt=r["kkt"])
        for r in payload["records"])
    aggregates = tuple(
        AggregateRow(method=a["method"], pt_db=a["pt_db"],
                     mean_min_snr=a["mean_min_snr"], n_ok=a["n_ok"],
                     n_failed=a["n_failed"])
        for a in payload["aggregates"])
    return SweepResult(config=payload["config"], records=records, aggregates=aggregates)


def write_json(result: SweepResult, path) -> None:
    try:
        with open(path, "w") as f:
            json.dump(result_to_dict(result), f, indent=2)
            f.write("\n")
    except OSError as e:
        raise OSError(f"cannot write JSON report to {path}: {e}") from e


def load_result(path) -> SweepResult:
    with open(path) as f:
        return result_from_dict(json.load(f))


def _to_db(x):
    return 10.0 * math.log10(x) if x and x > 0 else float("nan")


def render_sweep_svg(result: SweepResult, path, db_scale: bool = False) -> None:
    """Line chart of mean min-SNR (linear by default) versus transmit power."""
    methods = []
    for a in result.aggregates:
        if a.method not in methods:
            methods.append(a.method)
    with matplotlib.rc_context(_SVG_RC):
        fig, ax = plt.subplots(figsize=(6.4, 4.2))
        for method in methods:
            rows = [a for a in result.aggregates if a.method == method]
            xs = [a.pt_db for a in rows]
            ys = [a.mean_min_snr if a.mean_min_snr is not None else float("nan")
                  for a in rows]
            if db_scale:
                ys = [_to_db(y) for y in ys]
            ax.plot(xs, ys, marker="o", label=method)
        ax.set_xlabel("transmit power [dB]")
        ax.set_ylabel("mean min-SNR [dB]" if db_scale else "mean min-SNR (linear)")
        ax.grid(True, alpha=0.4)
        ax.legend()
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)


def render_snapshot_svg(table: SnapshotTable, path) -> None:
    """Grouped per-user SNR bars, one group color per method."""
    n_methods = len(table.methods)
    width = 0.8 / max(n_methods, 1)
    with matplotlib.rc_context(_SVG_RC):
        fig, ax = plt.subplots(figsize=(6.4, 4.2))
        for i, method in enumerate(table.methods):
            xs = [u + (i - (n_methods - 1) / 2.0) * width for u in range(table.K)]
            ax.bar(xs, table.snrs[method], width=width, label=method)
        ax.set_xticks(range(table.K))
        ax.set_xticklabels([str(u + 1) for u in range(table.K)])
        ax.set_xlabel("user index")
        ax.set_ylabel("SNR (linear)")
        ax.grid(True, axis="y", alpha=0.4)
        ax.legend()
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)


def snapshot_csv(table: SnapshotTable) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["method", "user", "snr"])
    for method in table.methods:
        for u, v in enumerate(table.snrs[method]):
            writer.writerow([method, u, repr(float(v))])
    return buf.getvalue()


def emit(result: SweepResult, fmt: str, path) -> None:
    """Write one output artifact: fmt in {"csv", "json", "svg"}."""
    if fmt == "csv":
        write_csv(result, path)
    elif fmt == "json":
        write_json(result, path)
    elif fmt == "svg":
        render_sweep_svg(result, path)
    else:
        raise ValueError(f"unknown emit format {fmt!r}")
