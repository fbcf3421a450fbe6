"""Summary tables over finished runs and sweeps."""
from __future__ import annotations

import csv
import json
import statistics
from dataclasses import dataclass
from pathlib import Path

from ..attack import AttackAnalyticsInput, expected_steps


class EmptyInput(ValueError):
    """No run artifacts were found."""


@dataclass
class Summary:
    attempts: list
    traffic: list
    sweeps: list
    alerts: list
    expected: list

    def tables(self) -> dict[str, list]:
        return {"attempts": self.attempts, "traffic": self.traffic, "sweeps": self.sweeps,
                "alert_histogram": self.alerts, "expected_vs_empirical": self.expected}


def find_reports(paths) -> list[dict]:
    """Every ``report.json`` under the given files or directories, in path order."""
    found = []
    for p in paths:
        p = Path(p)
        files = [p] if p.is_file() else sorted(p.rglob("report.json")) if p.is_dir() else []
        for f in files:
            with open(f) as fh:
                doc = json.load(fh)
            doc["_path"] = str(f.parent)
            found.append(doc)
    return found


def _mean(values):
    values = [v for v in values if v is not None]
    return statistics.fmean(values) if values else None


def summarize(docs: list[dict]) -> Summary:
    if not docs:
        raise EmptyInput("no run reports found")
    runs = [d for d in docs if "windows" in d]
    sweeps = [d for d in docs if "summary" in d and "windows" not in d]
    if not runs and not sweeps:
        raise EmptyInput("no run reports found")

    attempts, traffic, alerts, expected = [], [], [], []
    groups: dict[tuple, list] = {}
    for d in runs:
        cfg = d["config"]
        mode = f"{cfg['masters']['count']}x{cfg['masters']['command_mode']}"
        if d["attempts"]:
            groups.setdefault((d["scenario"], mode), []).append(d)
        rtts = [w["mean_rtt"] for w in d["windows"] if w["mean_rtt"] is not None]
        traffic.append({
            "run": d["_path"], "scenario": d["scenario"], "seed": d["seed"], "masters": mode,
            "mean_rtt": _mean(rtts),
            "throughput": _mean([w["throughput"] for w in d["windows"]]),
            "goodput": _mean([w["goodput"] for w in d["windows"]]),
            "retransmissions": d["retransmission_count"],
            "time_to_overload": d["time_to_overload"],
        })
        for kind, buckets in d["alert_histogram"].items():
            for bucket, count in buckets.items():
                alerts.append({"run": d["_path"], "scenario": d["scenario"], "seed": d["seed"],
                               "kind": kind, "window": int(bucket), "count": count})

    for (scen, mode), ds in sorted(groups.items()):
        row = {"scenario": scen, "masters": mode, "runs": len(ds)}
        for cls in ("FCI", "FDI"):
            row[f"{cls.lower()}_attempts"] = _mean([x["attempts"][cls]["attempts"] for x in ds])
            row[f"{cls.lower()}_successes"] = _mean([x["attempts"][cls]["successes"] for x in ds])
        row["miss_rate"] = _mean([x["mitm"]["miss_rate"] for x in ds])
        row["traffic_intensity"] = _mean([x["mitm"]["traffic_intensity"] for x in ds])
        camp = [x["campaign"] for x in ds if x["campaign"]]
        row["campaign_fci_attempts"] = _mean([c["mean_fci_attempts"] for c in camp])
        row["campaign_fdi_attempts"] = _mean([c["mean_fdi_attempts"] for c in camp])
        attempts.append(row)

        if camp:
            c0 = camp[0]
            exp = expected_steps(AttackAnalyticsInput(c0["m"], c0["n"], c0["o"]), c0["use_case"],
                                 c0["p"], c0["q"], c0["r"])
            trials = sum(c["trials"] for c in camp)
            emp = sum(c["mean_attempts"] * c["trials"] for c in camp) / trials
            expected.append({"scenario": scen, "masters": mode, "m": c0["m"], "n": c0["n"], "o": c0["o"],
                             "p": c0["p"], "q": c0["q"], "r": c0["r"], "trials": trials,
                             "expected_attempts": exp, "empirical_attempts": emp,
                             "relative_error": abs(emp - exp) / exp})

    sweep_rows = []
    for d in sweeps:
        for row in d["summary"]:
            sweep_rows.append({"sweep": d["kind"], "run": d["_path"], **row})
    return Summary(attempts, traffic, sweep_rows, alerts, expected)


def _fmt(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def render(summary: Summary) -> str:
    out = []
    for name, rows in summary.tables().items():
        out.append(f"== {name} ==")
        if not rows:
            out.append("(none)")
            out.append("")
            continue
        cols = [c for c in rows[0] if c != "run"]
        cells = [[_fmt(r.get(c)) for c in cols] for r in rows]
        widths = [max(len(c), *(len(row[i]) for row in cells)) for i, c in enumerate(cols)]
        out.append("  ".join(c.ljust(w) for c, w in zip(cols, widths)))
        for row in cells:
            out.append("  ".join(v.ljust(w) for v, w in zip(row, widths)))
        out.append("")
    return "\n".join(out)


def report(paths, out_dir=None) -> Summary:
    """Summarise every run found under ``paths``; write text and CSV tables when ``out_dir`` is set."""
    summary = summarize(find_reports(paths))
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for name, rows in summary.tables().items():
            with open(out / f"{name}.csv", "w", newline="") as fh:
                if rows:
                    writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
                    writer.writeheader()
                    writer.writerows(rows)
        (out / "summary.txt").write_text(render(summary))
    return summary
