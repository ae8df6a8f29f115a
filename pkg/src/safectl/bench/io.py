"""CSV run logs, summary tables and SVG charts."""

from __future__ import annotations

import csv
import io
import os
from typing import Optional

import numpy as np

from ..metrics import (
    ComparatorTrajectory,
    RunLog,
    dynamic_regret,
    path_length_CT,
    set_variation_ST,
)

HEADER = ("t", "x", "u", "w", "loss", "zeta", "safe_state", "safe_input", "x_next", "decision")


def _num(v: float) -> str:
    return format(float(v), ".17g")


def _vecstr(v) -> str:
    return ";".join(_num(e) for e in np.asarray(v, dtype=float).reshape(-1))


def summary_items(log: RunLog, comp: Optional[ComparatorTrajectory] = None) -> list:
    items = [("cumulative_loss", _num(log.cumulative_loss())),
             ("S_T", _num(set_variation_ST(log))),
             ("safe", "true" if log.is_safe() else "false"),
             ("seed", "" if log.seed is None else str(log.seed)),
             ("aborted", log.aborted or "")]
    if comp is not None:
        items += [("regret", _num(dynamic_regret(log, comp))),
                  ("C_T", _num(path_length_CT(comp)))]
    for k in sorted(log.meta):
        v = log.meta[k]
        if isinstance(v, (float, np.floating)):
            v = repr(float(v))
        items.append((f"meta.{k}", str(v)))
    return items


def format_csv(log: RunLog, comp: Optional[ComparatorTrajectory] = None) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(HEADER)
    for k in range(log.T):
        wr.writerow([k + 1, _vecstr(log.x[k]), _vecstr(log.u[k]), _vecstr(log.w[k]),
                     _num(log.loss[k]), _num(log.zeta[k]),
                     "true" if log.safe_state[k] else "false",
                     "true" if log.safe_input[k] else "false",
                     _vecstr(log.x_next[k]), _vecstr(log.decision[k])])
    for key, value in summary_items(log, comp):
        wr.writerow([f"# {key}", value])
    return buf.getvalue()


def emit_csv(log: RunLog, path, comp: Optional[ComparatorTrajectory] = None) -> None:
    """Write the per-step table and '#'-prefixed summary rows. Raises OSError."""
    text = format_csv(log, comp)
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _parse_meta(value: str):
    try:
        if any(c in value for c in ".eE") or value in ("inf", "-inf", "nan"):
            return float(value)
        return int(value)
    except ValueError:
        return value


def read_csv(path):
    """Parse a file written by ``emit_csv``. Returns (RunLog, summary dict)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != HEADER:
        raise ValueError(f"{path}: not a run log")
    data = [r for r in rows[1:] if not r[0].startswith("#")]
    summary = {r[0][1:].strip(): r[1] if len(r) > 1 else "" for r in rows[1:] if r[0].startswith("#")}

    def vecs(col):
        out = [[float(e) for e in r[col].split(";")] for r in data]
        return np.array(out, dtype=float)

    meta = {k[5:]: _parse_meta(v) for k, v in summary.items() if k.startswith("meta.")}
    d_x = len(data[0][1].split(";")) if data else int(meta.get("d_x", 1))
    d_u = len(data[0][2].split(";")) if data else 1
    n_dec = len(data[0][9].split(";")) if data else 1
    if data:
        x, u, w, xn, dec = vecs(1), vecs(2), vecs(3), vecs(8), vecs(9)
    else:
        x, u, w, xn, dec = (np.zeros((0, d_x)), np.zeros((0, d_u)), np.zeros((0, d_x)),
                            np.zeros((0, d_x)), np.zeros((0, n_dec)))
    log = RunLog(x, u, w, xn,
                 np.array([float(r[4]) for r in data]),
                 np.array([float(r[5]) for r in data]),
                 np.array([r[6] == "true" for r in data], dtype=bool),
                 np.array([r[7] == "true" for r in data], dtype=bool),
                 dec, meta=meta,
                 seed=int(summary["seed"]) if summary.get("seed") else None,
                 aborted=summary.get("aborted") or None)
    return log, summary


SUMMARY_HEADER = ("scenario", "algorithm", "noise", "seed", "T", "cumulative_loss", "safe",
                  "aborted", "regret", "C_T", "S_T")


def summary_row(log: RunLog, comp: Optional[ComparatorTrajectory] = None) -> list:
    return [log.meta.get("scenario", ""), log.meta.get("algorithm", ""), log.meta.get("noise", ""),
            "" if log.seed is None else log.seed, log.meta.get("T", log.T), _num(log.cumulative_loss()),
            "true" if log.is_safe() else "false", log.aborted or "",
            _num(dynamic_regret(log, comp)) if comp is not None else "",
            _num(path_length_CT(comp)) if comp is not None else "",
            _num(set_variation_ST(log))]


def emit_summary(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(SUMMARY_HEADER)
        wr.writerows(rows)


def read_summaries(directory) -> list:
    """All rows of every summary*.csv file in ``directory`` as dicts."""
    out = []
    for name in sorted(os.listdir(directory)):
        if name.startswith("summary") and name.endswith(".csv"):
            with open(os.path.join(directory, name), newline="") as fh:
                out.extend(csv.DictReader(fh))
    return out


def summary_table(rows) -> str:
    """Mean +- std cumulative loss and safety rate per (algorithm, noise)."""
    groups = {}
    for r in rows:
        groups.setdefault((r["algorithm"], r["noise"], r.get("T", "")), []).append(r)
    lines = [f"{'algorithm':<14}{'noise':<13}{'T':>6}{'runs':>6}  {'cumulative loss':>24}  "
             f"{'safety rate':>11}"]
    for (alg, noise, T), rs in sorted(groups.items(), key=lambda kv: (kv[0][0], kv[0][1],
                                                                      int(kv[0][2] or 0))):
        losses = np.array([float(r["cumulative_loss"]) for r in rs])
        safe = np.mean([r["safe"] == "true" for r in rs])
        lines.append(f"{alg:<14}{noise:<13}{T:>6}{len(rs):>6}  "
                     f"{losses.mean():>12.4f} +- {losses.std():<9.4f}  {100 * safe:>10.0f}%")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# charts

CHART_KINDS = ("state-trajectory", "cumulative-loss", "regret-vs-T")


def _label(log: RunLog) -> str:
    parts = [str(log.meta.get(k)) for k in ("algorithm", "noise") if log.meta.get(k)]
    if log.seed is not None:
        parts.append(f"seed {log.seed}")
    return " / ".join(parts) or "run"


def emit_chart(logs, kind: str, path, series: Optional[dict] = None) -> None:
    """Write an SVG line chart.

    ``state-trajectory`` plots the first state component, ``cumulative-loss``
    the running loss sum, one line per log. ``regret-vs-T`` plots ``series``,
    a mapping label -> [(T, average regret), ...]; when it is omitted the
    series is built from logs carrying ``meta['regret']``.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if kind not in CHART_KINDS:
        raise ValueError(f"unknown chart kind {kind!r}")
    logs = list(logs)
    if not logs and not series:
        raise ValueError("emit_chart needs at least one log")
    fig, ax = plt.subplots(figsize=(7, 4))
    if kind == "state-trajectory":
        for lg in logs:
            ax.plot(np.arange(0, lg.T + 1), np.concatenate([lg.x[:1, 0], lg.x_next[:, 0]]),
                    label=_label(lg), gid=f"series-{len(ax.lines)}")
        ax.set_xlabel("t")
        ax.set_ylabel("x[0]")
    elif kind == "cumulative-loss":
        for lg in logs:
            ax.plot(lg.t, np.cumsum(lg.loss), label=_label(lg), gid=f"series-{len(ax.lines)}")
        ax.set_xlabel("t")
        ax.set_ylabel("cumulative loss")
    else:
        if series is None:
            series = {}
            for lg in logs:
                series.setdefault(str(lg.meta.get("algorithm", "run")), {}).setdefault(
                    lg.T, []).append(float(lg.meta["regret"]) / lg.T)
            series = {k: sorted((T, float(np.mean(v))) for T, v in d.items())
                      for k, d in series.items()}
        for label, pts in series.items():
            pts = sorted(pts)
            ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=label,
                    gid=f"series-{len(ax.lines)}")
        ax.set_xscale("log")
        ax.set_xlabel("horizon T")
        ax.set_ylabel("regret / T")
    ax.legend(fontsize="small")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    with plt.rc_context({"svg.hashsalt": "safectl", "svg.fonttype": "none"}):
        fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
