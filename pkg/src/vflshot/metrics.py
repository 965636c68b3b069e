"""Utility metrics, communication summaries and run reports."""
import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from .comm import CommLedger

MB = float(2 ** 20)


def accuracy(pred, truth):
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise ValueError("prediction and label vectors differ in length")
    if pred.size == 0:
        raise ValueError("accuracy of an empty vector is undefined")
    return float(np.mean(pred == truth))


def _average_ranks(scores):
    """1-based ranks with ties sharing their mean rank."""
    order = np.argsort(scores, kind="mergesort")
    s = scores[order]
    ranks = np.empty(s.size)
    i = 0
    while i < s.size:
        j = i
        while j + 1 < s.size and s[j + 1] == s[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def auc(scores, labels):
    """ROC AUC via the Mann-Whitney U statistic (ties count one half)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels differ in length")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both positive and negative labels")
    ranks = _average_ranks(scores)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def comm_summary(ledger: CommLedger) -> Dict:
    total = ledger.total_bytes()
    return {
        "comm_times": ledger.comm_times(),
        "directions": ledger.direction_counts(),
        "messages": len(ledger),
        "total_scalars": ledger.total_scalars(),
        "total_bytes": total,
        "total_mb": total / MB,
        "bytes_by_role": ledger.bytes_by_role(),
        "bytes_per_scalar": ledger.bytes_per_scalar,
    }


@dataclass
class RunReport:
    run_id: str
    method: str
    seed: int
    config: Dict
    metrics: Dict[str, Optional[float]]
    comm: Dict
    timings: Dict[str, float] = field(default_factory=dict)
    curve: List[Dict] = field(default_factory=list)
    notes: List[str] = field(default_factory=list)

    @property
    def comm_times(self):
        times = self.comm["comm_times"]
        return max(times.values()) if times else 0

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, doc):
        return cls(**doc)


def write_report(report: RunReport, path):
    """Serialize to JSON. Floats round-trip exactly through ``repr``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def read_report(path) -> RunReport:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"report not found: {path}")
    doc = json.loads(path.read_text(encoding="utf-8"))
    missing = {"run_id", "method", "seed", "config", "metrics", "comm"} - set(doc)
    if missing:
        raise ValueError(f"{path}: not a run report (missing {sorted(missing)})")
    return RunReport.from_dict(doc)


COMPARE_COLUMNS = ["run_id", "method", "accuracy", "auc", "comm_times", "comm_mb"]


def compare_runs(reports: List[RunReport]) -> List[Dict]:
    rows = []
    for r in reports:
        rows.append({
            "run_id": r.run_id,
            "method": r.method,
            "accuracy": r.metrics.get("accuracy"),
            "auc": r.metrics.get("auc"),
            "comm_times": r.comm_times,
            "comm_mb": r.comm["total_mb"],
        })
    return rows


def format_table(rows: List[Dict]) -> str:
    def fmt(v):
        if v is None:
            return "-"
        if isinstance(v, float):
            return f"{v:.4f}"
        return str(v)

    cells = [COMPARE_COLUMNS] + [[fmt(r[c]) for c in COMPARE_COLUMNS] for r in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(COMPARE_COLUMNS))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def write_compare_csv(rows: List[Dict], path):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=COMPARE_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow(r)
