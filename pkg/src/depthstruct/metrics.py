"""Standard depth evaluation metrics over a depth-range mask."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .core import DepthLike, as_values_mask

MIN_DEPTH = 0.25
MAX_DEPTH = 5.0

_JSON_KEYS = {
    "abs_rel": "absRel",
    "abs_diff": "absDiff",
    "abs_inv": "absInv",
    "sq_rel": "sqRel",
    "rmse": "rmse",
    "delta_lt_125": "deltaLt125",
    "valid_count": "validCount",
}


class NoValidPixelsError(ValueError):
    pass


@dataclass(frozen=True)
class MetricReport:
    abs_rel: float
    abs_diff: float
    abs_inv: float
    sq_rel: float
    rmse: float
    delta_lt_125: float
    valid_count: int

    def to_json_dict(self) -> dict:
        return {_JSON_KEYS[k]: v for k, v in asdict(self).items()}


def evaluate(pred: DepthLike, gt: DepthLike, min_depth: float = MIN_DEPTH,
             max_depth: float = MAX_DEPTH) -> MetricReport:
    """Counted pixels: gt valid and inside [min_depth, max_depth], pred valid
    and positive."""
    p, mp = as_values_mask(pred)
    g, mg = as_values_mask(gt)
    if p.shape != g.shape:
        raise ValueError(f"dimension mismatch: {p.shape} vs {g.shape}")
    counted = mg & (g >= min_depth) & (g <= max_depth) & mp & (p > 0)
    n = int(counted.sum())
    if n == 0:
        raise NoValidPixelsError("no pixels to evaluate")
    p = p[counted]
    g = g[counted]
    err = p - g
    ratio = np.maximum(p / g, g / p)
    return MetricReport(
        abs_rel=float(np.mean(np.abs(err) / g)),
        abs_diff=float(np.mean(np.abs(err))),
        abs_inv=float(np.mean(np.abs(1.0 / p - 1.0 / g))),
        sq_rel=float(np.mean(err ** 2 / g)),
        rmse=float(np.sqrt(np.mean(err ** 2))),
        delta_lt_125=float(np.mean(ratio < 1.25)),
        valid_count=n,
    )


def aggregate(reports: list[MetricReport]) -> MetricReport:
    """Unweighted per-report mean; valid counts are summed."""
    if not reports:
        raise ValueError("cannot aggregate an empty list of reports")
    fields = ("abs_rel", "abs_diff", "abs_inv", "sq_rel", "rmse", "delta_lt_125")
    means = {f: float(np.mean([getattr(r, f) for r in reports])) for f in fields}
    return MetricReport(**means, valid_count=sum(r.valid_count for r in reports))
