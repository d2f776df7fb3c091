"""Forecast evaluation: cumulative squared-error and density-score comparisons.

All statistics derive from persisted forecast records alone; nothing here
re-samples.  Paths accumulate in origin order with exactly rounded partial
sums, so the terminal statistics are invariant to the order records arrive in.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass

import pandas as pd

__all__ = [
    "EvaluationReport",
    "csfe_difference",
    "cumulative_lbf",
    "build_report",
]

MODEL_CLASSES = ("ms-tvp", "ms-ft", "linear")
TOP_N = 5


def _aligned_frames(model_records, rw_records):
    """Sort the two record streams by origin and verify exact alignment."""
    m = sorted(model_records, key=lambda r: (r.horizon, r.origin))
    b = sorted(rw_records, key=lambda r: (r.horizon, r.origin))
    if [(r.origin, r.horizon) for r in m] != [(r.origin, r.horizon) for r in b]:
        raise ValueError("model and benchmark records are misaligned on (origin, horizon)")
    if len({r.horizon for r in m}) > 1:
        raise ValueError("pass records for a single horizon at a time")
    return m, b


def _cumulative(diffs):
    # exactly rounded prefix sums; n is small so the quadratic cost is irrelevant
    return [math.fsum(diffs[: i + 1]) for i in range(len(diffs))]


def csfe_difference(model_records, rw_records):
    """Cumulative squared-forecast-error gap to the benchmark, per origin.

    Negative values mean the model's point forecasts beat the benchmark's up
    to that origin.  Returns (origins, path).
    """
    m, b = _aligned_frames(model_records, rw_records)
    diffs = [(rm.point - rm.realized) ** 2 - (rb.point - rb.realized) ** 2 for rm, rb in zip(m, b)]
    return [r.origin for r in m], _cumulative(diffs)


def cumulative_lbf(model_records, rw_records):
    """Cumulative log-predictive-score gap to the benchmark, per origin.

    Positive values mean better density forecasts than the benchmark; the
    terminal entry is the summary statistic reported per model and horizon.
    """
    m, b = _aligned_frames(model_records, rw_records)
    diffs = [rm.log_score - rb.log_score for rm, rb in zip(m, b)]
    return [r.origin for r in m], _cumulative(diffs)


@dataclass
class EvaluationReport:
    """Plot-ready tables plus per-class rankings of the grid."""

    lbf_terminal: pd.DataFrame  # model_id, horizon, value
    lbf_path: pd.DataFrame  # model_id, horizon, origin, value
    csfe_path: pd.DataFrame  # model_id, horizon, origin, value
    rankings: dict
    missing: list
    grid_meta: list | None = None

    def write(self, out_dir) -> None:
        from pathlib import Path

        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        self.lbf_terminal.to_csv(out / "lbf_terminal.csv", index=False, float_format="%.17g")
        self.lbf_path.to_csv(out / "lbf_path.csv", index=False, float_format="%.17g")
        self.csfe_path.to_csv(out / "csfe_path.csv", index=False, float_format="%.17g")
        payload = {"rankings": self.rankings, "missing": self.missing, "grid": self.grid_meta or []}
        with open(out / "summary.json", "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)


def _model_class(model_id: str) -> str | None:
    for cls in MODEL_CLASSES:
        if model_id.startswith(cls):
            return cls
    return None


def build_report(records, expected_ids=None, benchmark_id: str = "rw", grid_meta=None) -> EvaluationReport:
    """Aggregate forecast records into the evaluation tables.

    ``expected_ids`` lists the grid cells that should be present; absent cells
    are reported and the rest of the report is still produced.  Rankings per
    class keep the five best cells per horizon: by terminal cumulative density
    gap (descending) and by terminal squared-error gap (ascending), ties
    broken by model id.  ``grid_meta`` is echoed into the JSON summary.
    """
    by_model: dict[str, list] = {}
    for r in records:
        by_model.setdefault(r.model_id, []).append(r)
    if benchmark_id not in by_model:
        raise ValueError(f"benchmark records {benchmark_id!r} missing")
    rw = by_model.pop(benchmark_id)
    rw_by_h: dict[int, list] = {}
    for r in rw:
        rw_by_h.setdefault(r.horizon, []).append(r)

    missing = sorted(set(expected_ids or []) - set(by_model))
    if missing:
        warnings.warn(f"missing model cells: {missing}", stacklevel=2)

    terminal_rows, lbf_rows, csfe_rows = [], [], []
    for model_id in sorted(by_model):
        recs = by_model[model_id]
        horizons = sorted({r.horizon for r in recs})
        for h in horizons:
            mrecs = [r for r in recs if r.horizon == h]
            brecs = rw_by_h.get(h, [])
            origins, lbf = cumulative_lbf(mrecs, brecs)
            _, csfe = csfe_difference(mrecs, brecs)
            terminal_rows.append({"model_id": model_id, "horizon": h, "value": lbf[-1]})
            for o, v in zip(origins, lbf):
                lbf_rows.append({"model_id": model_id, "horizon": h, "origin": o, "value": v})
            for o, v in zip(origins, csfe):
                csfe_rows.append({"model_id": model_id, "horizon": h, "origin": o, "value": v})

    terminal = pd.DataFrame(terminal_rows, columns=["model_id", "horizon", "value"])
    lbf_path = pd.DataFrame(lbf_rows, columns=["model_id", "horizon", "origin", "value"])
    csfe_path = pd.DataFrame(csfe_rows, columns=["model_id", "horizon", "origin", "value"])

    csfe_terminal = csfe_path.sort_values(["model_id", "horizon", "origin"], kind="stable").groupby(["model_id", "horizon"], as_index=False).last()

    rankings: dict = {"lbf": {}, "csfe": {}}
    for cls in MODEL_CLASSES:
        in_cls_t = terminal[terminal.model_id.map(lambda m: _model_class(m) == cls)]
        if in_cls_t.empty:
            warnings.warn(f"no cells in class {cls!r}; omitted from rankings", stacklevel=2)
            continue
        rankings["lbf"][cls] = {}
        rankings["csfe"][cls] = {}
        for h in sorted(in_cls_t.horizon.unique()):
            sub = in_cls_t[in_cls_t.horizon == h]
            best_lbf = sub.sort_values(["value", "model_id"], ascending=[False, True], kind="stable")
            rankings["lbf"][cls][int(h)] = best_lbf.model_id.head(TOP_N).tolist()
            sub_c = csfe_terminal[(csfe_terminal.horizon == h) & csfe_terminal.model_id.map(lambda m: _model_class(m) == cls)]
            best_csfe = sub_c.sort_values(["value", "model_id"], ascending=[True, True], kind="stable")
            rankings["csfe"][cls][int(h)] = best_csfe.model_id.head(TOP_N).tolist()

    return EvaluationReport(lbf_terminal=terminal, lbf_path=lbf_path, csfe_path=csfe_path, rankings=rankings, missing=missing, grid_meta=grid_meta)
