"""Results tables: one row per run, per-task errors in stream order, AWER, best marked."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

from aoscl.errors import SpecError

_METHOD_LABEL = {"aos": "AOS", "ft": "FT", "er": "ER", "ogem": "O-GEM", "uoe": "UOE", "ewc": "EWC"}


def _label(cfg: dict) -> str:
    return _METHOD_LABEL.get(cfg["method"], cfg["method"])


def summary_rows(records, include_initial: bool = False) -> list[dict]:
    """Table rows (errors in percent) for runs that share one stream."""
    records = list(records)
    if not records:
        return []
    streams = {(r.stream, tuple(r.task_order), r.config.get("seed")) for r in records}
    if len({(s, o) for s, o, _ in streams}) != 1:
        raise SpecError("records come from different streams")
    order = records[0].task_order
    rows = []
    if include_initial:
        init = records[0].initial_errors
        row = {"model": "initial", "M": "", "tau_lambda_tau2": ""}
        row.update({f"T{t}": 100 * init[str(t)] for t in order})
        row["AWER"] = sum(row[f"T{t}"] for t in order) / len(order)
        rows.append(row)
    for r in records:
        cfg = r.config
        row = {
            "model": _label(cfg),
            "M": cfg["memory"] if cfg["method"] in ("er", "ogem") else "",
            "tau_lambda_tau2": f"({cfg['tau']:g}, {cfg['lam']:g}, {cfg['tau2']:g})" if cfg["method"] == "aos" else "",
        }
        errs = r.summary.get("per_task_error", {})
        for t in order:
            row[f"T{t}"] = 100 * errs[str(t)] if str(t) in errs else ""
        row["AWER"] = 100 * r.summary["awer"] if "awer" in r.summary else ""
        if r.status != "ok":
            row["model"] += " (failed)"
        rows.append(row)
    finished = [row["AWER"] for row in rows[1 if include_initial else 0:] if row["AWER"] != ""]
    best = min(finished) if finished else None
    for row in rows:
        row["best"] = "*" if best is not None and row["AWER"] == best and row["model"] != "initial" else ""
    return rows


def write_csv(path, rows) -> None:
    path = Path(path)
    if not rows:
        path.write_text("")
        return
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})


def read_csv(path) -> list[dict]:
    """Inverse of :func:`write_csv`; numeric cells come back as exact floats."""
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            parsed = {}
            for k, v in row.items():
                try:
                    if k == "AWER" or k.startswith("T"):
                        parsed[k] = float(v)
                    else:
                        parsed[k] = int(v) if k == "M" else v
                except ValueError:
                    parsed[k] = v
            out.append(parsed)
    return out


def render_text(rows) -> str:
    """Aligned plain-text table; the best AWER is flagged with ``*``."""
    if not rows:
        return ""
    cols = [k for k in rows[0] if k != "best"]
    cells = [[_fmt(row[c], c) for c in cols] + [row.get("best", "")] for row in rows]
    header = cols + [""]
    widths = [max(len(h), *(len(r[i]) for r in cells)) for i, h in enumerate(header)]
    buf = io.StringIO()
    buf.write("  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip() + "\n")
    buf.write("  ".join("-" * w for w in widths).rstrip() + "\n")
    for r in cells:
        buf.write("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() + "\n")
    return buf.getvalue()


def _fmt(v, col):
    if isinstance(v, float):
        return f"{v:.2f}" if col == "AWER" else f"{v:.1f}"
    return str(v)


def load_records(paths):
    from aoscl.harness.runner import RunRecord

    records = []
    for p in paths:
        p = Path(p)
        if p.is_dir():
            p = p / "record.json"
        records.append(RunRecord.from_json(json.loads(p.read_text(encoding="utf-8"))))
    return records


def report(records, out_dir=None, include_initial: bool = False) -> str:
    """Render a results table; with ``out_dir`` also write ``report.csv`` and ``report.txt``."""
    rows = summary_rows(records, include_initial)
    text = render_text(rows)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_csv(out_dir / "report.csv", rows)
        (out_dir / "report.txt").write_text(text, encoding="utf-8")
    return text
