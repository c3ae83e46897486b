from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional


def thr_key(t: float) -> str:
    return f"{t:g}"


def mean_or_none(values) -> Optional[float]:
    vals = [v for v in values if v is not None]
    if not vals:
        return None
    return math.fsum(vals) / len(vals)


@dataclass
class EvalReport:
    """Per-category AP tables plus the headline mean.

    ``ap[category][threshold]`` is None when the category was skipped (no GT
    and, in frame mode, no predictions either).
    """

    mode: str
    ap: Dict[str, Dict[str, Optional[float]]]
    mean_ap: Optional[float]
    ap_polygon: Optional[float] = None
    ap_polyline: Optional[float] = None
    config: dict = field(default_factory=dict)
    frames: List[dict] = field(default_factory=list)
    traces: List[dict] = field(default_factory=list)

    @property
    def category_ap(self) -> Dict[str, Optional[float]]:
        return {cat: mean_or_none(table.values()) for cat, table in self.ap.items()}

    def to_dict(self) -> dict:
        out = {
            "mode": self.mode,
            "ap": self.ap,
            "category_ap": self.category_ap,
            "mAP" if self.mode == "frame" else "G-mAP": self.mean_ap,
            "config": self.config,
        }
        if self.mode == "global":
            out["AP_polygon"] = self.ap_polygon
            out["AP_polyline"] = self.ap_polyline
        if self.frames:
            out["frames"] = self.frames
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def rows(self) -> List[List[str]]:
        thresholds = sorted({t for table in self.ap.values() for t in table}, key=float)
        header = ["category", *(f"AP@{t}" for t in thresholds), "mean"]
        body = [header]
        fmt = lambda v: "-" if v is None else f"{v:.1f}"
        for cat, table in self.ap.items():
            body.append([cat, *(fmt(table.get(t)) for t in thresholds), fmt(self.category_ap[cat])])
        label = "mAP" if self.mode == "frame" else "G-mAP"
        body.append([label, *([""] * len(thresholds)), fmt(self.mean_ap)])
        return body

    def to_table(self) -> str:
        rows = self.rows()
        widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
        lines = ["  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip() for r in rows]
        lines.insert(1, "  ".join("-" * w for w in widths))
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        csv.writer(buf, lineterminator="\n").writerows(self.rows())
        return buf.getvalue()
