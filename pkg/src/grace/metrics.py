"""Evaluation metrics: vertex-level detection scores and geodesic errors.

geo_err_fp is the classic false-positive-only geometric error: the mean
geodesic distance from each wrongly-predicted contact vertex to the nearest
ground-truth contact vertex. geo_err_fn is the mirrored false-negative
term (distance from each missed vertex to the nearest predicted contact),
and geo_sum is their sum, so a model is penalized both for hallucinating
contact and for missing it. All three are in centimeters, averaged within
each error set, per sample, then averaged over the dataset.

Conventions (all surfaced in tests):
    precision = 1 when nothing is predicted (no false alarms)
    recall    = 1 when there is nothing to find, 0 when there is and none found
    f1        = 0 when precision + recall = 0
    a nonempty error set with an empty reference set, or a vertex
    unreachable from the reference set, contributes the per-mesh penalty
    cap instead of an (undefined/infinite) distance
"""

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .geodesics import GeodesicIndex


def detection_metrics(pred: np.ndarray, gt: np.ndarray) -> tuple[float, float, float]:
    """Vertex-level (precision, recall, f1) for binary contact masks."""
    pred = np.asarray(pred).astype(bool)
    gt = np.asarray(gt).astype(bool)
    if pred.shape != gt.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {gt.shape}")
    tp = float(np.sum(pred & gt))
    fp = float(np.sum(pred & ~gt))
    fn = float(np.sum(~pred & gt))
    precision = tp / (tp + fp) if tp + fp > 0 else 1.0
    recall = tp / (tp + fn) if tp + fn > 0 else 1.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return precision, recall, f1


@dataclass
class GeoErrors:
    fp_cm: float
    fn_cm: float
    sum_cm: float
    capped_fp: int = 0  # error vertices that hit the penalty cap
    capped_fn: int = 0


def _one_sided_error(error_set: np.ndarray, reference_set: np.ndarray,
                     index: GeodesicIndex) -> tuple[float, int]:
    """Mean distance (cm) from error vertices to the nearest reference vertex."""
    if error_set.sum() == 0:
        return 0.0, 0
    cap = index.penalty_cap_cm
    if reference_set.sum() == 0:
        return cap, int(error_set.sum())
    dist = index.distances_cm(reference_set)
    d = dist[error_set]
    unreachable = ~np.isfinite(d)
    d = np.where(unreachable, cap, d)
    return float(d.mean()), int(unreachable.sum())


def geo_sum(pred: np.ndarray, gt: np.ndarray, index: GeodesicIndex) -> GeoErrors:
    """Bidirectional geometric error of a binary prediction, in cm."""
    pred = np.asarray(pred).astype(bool)
    gt = np.asarray(gt).astype(bool)
    if pred.shape != gt.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {gt.shape}")
    fp = pred & ~gt
    fn = ~pred & gt
    fp_cm, capped_fp = _one_sided_error(fp, gt, index)
    fn_cm, capped_fn = _one_sided_error(fn, pred, index)
    return GeoErrors(fp_cm=fp_cm, fn_cm=fn_cm, sum_cm=fp_cm + fn_cm,
                     capped_fp=capped_fp, capped_fn=capped_fn)


@dataclass
class SampleMetrics:
    sample_id: str
    n_points: int
    n_contact_gt: int
    precision: float
    recall: float
    f1: float
    geo_err_fp_cm: float
    geo_err_fn_cm: float
    geo_sum_cm: float
    capped_fp: int
    capped_fn: int
    topology: str


@dataclass
class MetricsReport:
    per_sample: list[SampleMetrics] = field(default_factory=list)

    @property
    def precision(self) -> float:
        return float(np.mean([s.precision for s in self.per_sample]))

    @property
    def recall(self) -> float:
        return float(np.mean([s.recall for s in self.per_sample]))

    @property
    def f1(self) -> float:
        return float(np.mean([s.f1 for s in self.per_sample]))

    @property
    def geo_err_fp_cm(self) -> float:
        return float(np.mean([s.geo_err_fp_cm for s in self.per_sample]))

    @property
    def geo_err_fn_cm(self) -> float:
        return float(np.mean([s.geo_err_fn_cm for s in self.per_sample]))

    @property
    def geo_sum_cm(self) -> float:
        return float(np.mean([s.geo_sum_cm for s in self.per_sample]))


def score_sample(sample_id: str, pred_binary: np.ndarray, gt: np.ndarray,
                 index: GeodesicIndex) -> SampleMetrics:
    precision, recall, f1 = detection_metrics(pred_binary, gt)
    geo = geo_sum(pred_binary, gt, index)
    return SampleMetrics(
        sample_id=sample_id,
        n_points=int(len(gt)),
        n_contact_gt=int(np.asarray(gt).astype(bool).sum()),
        precision=precision,
        recall=recall,
        f1=f1,
        geo_err_fp_cm=geo.fp_cm,
        geo_err_fn_cm=geo.fn_cm,
        geo_sum_cm=geo.sum_cm,
        capped_fp=geo.capped_fp,
        capped_fn=geo.capped_fn,
        topology=index.source,
    )


# ---------------------------------------------------------------------------
# report rendering (field order is fixed and part of the file contract)

_COLUMNS = ["sample_id", "n_points", "n_contact_gt", "precision", "recall",
            "f1", "geo_err_fp_cm", "geo_err_fn_cm", "geo_sum_cm",
            "capped_fp", "capped_fn", "topology"]


def _row_values(s: SampleMetrics, legacy_geo_err: bool) -> list[str]:
    vals = [s.sample_id, str(s.n_points), str(s.n_contact_gt),
            f"{s.precision:.6f}", f"{s.recall:.6f}", f"{s.f1:.6f}",
            f"{s.geo_err_fp_cm:.6f}", f"{s.geo_err_fn_cm:.6f}", f"{s.geo_sum_cm:.6f}",
            str(s.capped_fp), str(s.capped_fn), s.topology]
    if legacy_geo_err:
        vals.append(f"{s.geo_err_fp_cm:.6f}")
    return vals


def report_csv(report: MetricsReport, legacy_geo_err: bool = False) -> str:
    """Deterministic CSV: one row per sample plus a MEAN footer."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = list(_COLUMNS) + (["geo_err_cm"] if legacy_geo_err else [])
    writer.writerow(header)
    for s in report.per_sample:
        writer.writerow(_row_values(s, legacy_geo_err))
    footer = ["MEAN", str(sum(s.n_points for s in report.per_sample)),
              str(sum(s.n_contact_gt for s in report.per_sample)),
              f"{report.precision:.6f}", f"{report.recall:.6f}", f"{report.f1:.6f}",
              f"{report.geo_err_fp_cm:.6f}", f"{report.geo_err_fn_cm:.6f}",
              f"{report.geo_sum_cm:.6f}",
              str(sum(s.capped_fp for s in report.per_sample)),
              str(sum(s.capped_fn for s in report.per_sample)), "-"]
    if legacy_geo_err:
        footer.append(f"{report.geo_err_fp_cm:.6f}")
    writer.writerow(footer)
    return buf.getvalue()


def report_text(report: MetricsReport, legacy_geo_err: bool = False) -> str:
    """Human-readable table with the same content as the CSV."""
    lines = []
    head = f"{'sample':<16}{'prec':>8}{'rec':>8}{'f1':>8}{'geo_fp':>10}{'geo_fn':>10}{'geo_sum':>10}  topo"
    if legacy_geo_err:
        head += "  geo_err"
    lines.append(head)
    lines.append("-" * len(head))
    for s in report.per_sample:
        row = (f"{s.sample_id:<16}{s.precision:>8.3f}{s.recall:>8.3f}{s.f1:>8.3f}"
               f"{s.geo_err_fp_cm:>10.3f}{s.geo_err_fn_cm:>10.3f}{s.geo_sum_cm:>10.3f}  {s.topology}")
        if legacy_geo_err:
            row += f"  {s.geo_err_fp_cm:.3f}"
        lines.append(row)
    lines.append("-" * len(head))
    lines.append(
        f"{'MEAN':<16}{report.precision:>8.3f}{report.recall:>8.3f}{report.f1:>8.3f}"
        f"{report.geo_err_fp_cm:>10.3f}{report.geo_err_fn_cm:>10.3f}{report.geo_sum_cm:>10.3f}"
    )
    capped = sum(s.capped_fp + s.capped_fn for s in report.per_sample)
    if capped:
        lines.append(f"note: {capped} error vertices had no reachable reference "
                     "and scored at the penalty cap")
    return "\n".join(lines) + "\n"
