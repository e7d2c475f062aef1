"""Expert annotations, their rasterized binary masks, and the alignment
metrics (threshold-optimized Dice/IoU plus tie-corrected Spearman)
computed exclusively inside the expert-selected region.

Rasterization conventions: millisecond bounds round to the nearest sample
(ties to even), intervals are inclusive-start / exclusive-end. Interval
segments shorter than the regional minimum (25 ms inside the 0-150 ms
depolarization region, 50 ms after it, classified by segment midpoint)
widen symmetrically about their center before rasterization; point
annotations expand by +-10 ms and are taken as-is. Segments re-imported
from an existing mask carry a `verbatim` flag that skips the widening so
mask -> segments -> mask round trips preserve the cell set.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sp_stats

from .crossmodal import ImportanceMap
from .errors import (
    DegenerateRegion,
    EmptyGroundTruth,
    EmptyRegion,
    InvalidConfig,
    OutOfWindow,
    ShapeMismatch,
)
from .signals import LEAD_NAMES, QRS_REGION_END_MS, ClassLabel

MODALITIES = ("ecg12", "cine")
POINT_TOLERANCE_MS = 10.0
MIN_SEGMENT_QRS_MS = 25.0
MIN_SEGMENT_LATE_MS = 50.0

THRESHOLD_GRID = np.arange(101) / 100.0


@dataclass
class ExpertAnnotation:
    """Salient-segment annotation for one case and modality."""

    case_id: str
    modality: str
    diagnosis: ClassLabel
    leads: list[str]
    segments: list[dict]
    annotator_id: str = ""
    free_text: str = ""

    def __post_init__(self):
        if self.modality not in MODALITIES:
            raise InvalidConfig(f"modality must be one of {MODALITIES}, "
                                f"got {self.modality!r}")
        self.diagnosis = ClassLabel.parse(self.diagnosis)
        if self.modality == "ecg12":
            if not self.leads:
                raise InvalidConfig("ecg12 annotation needs at least one lead")
            unknown = [l for l in self.leads if l not in LEAD_NAMES]
            if unknown:
                raise InvalidConfig(f"unknown leads {unknown}")
        else:
            self.leads = ["all"]
        if not self.segments:
            raise InvalidConfig("annotation needs at least one segment")
        for seg in self.segments:
            if "point_ms" not in seg and not {"start_ms", "end_ms"} <= set(seg):
                raise InvalidConfig(f"segment needs point_ms or start_ms/end_ms: {seg}")

    def to_dict(self) -> dict:
        return {
            "case_id": self.case_id,
            "annotator_id": self.annotator_id,
            "modality": self.modality,
            "diagnosis": "Normal" if self.diagnosis is ClassLabel.NORMAL else "Abnormal",
            "leads": list(self.leads),
            "segments": [dict(s) for s in self.segments],
            "free_text": self.free_text,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "ExpertAnnotation":
        return cls(case_id=obj["case_id"], modality=obj["modality"],
                   diagnosis=obj["diagnosis"], leads=list(obj.get("leads", [])),
                   segments=[dict(s) for s in obj["segments"]],
                   annotator_id=obj.get("annotator_id", ""),
                   free_text=obj.get("free_text", ""))


@dataclass
class BinaryMask:
    """Rasterized ground truth: [12, T] for ecg12, [1, T] temporal for cine.

    Cells outside the selected leads are always false; the evaluation
    region is the selected-lead rows across the full time axis.
    """

    cells: np.ndarray
    selected_leads: list[str]

    def __post_init__(self):
        self.cells = np.asarray(self.cells, dtype=bool)
        if self.cells.ndim != 2:
            raise ShapeMismatch(f"cells must be 2-D, got {self.cells.shape}")
        if not self.cells[self.region()].any():
            raise EmptyGroundTruth("mask has no active cells in selected leads")
        outside = self.cells & ~self.region()
        if outside.any():
            raise InvalidConfig("mask has active cells outside selected leads")

    def _rows(self) -> list[int]:
        if self.selected_leads == ["all"]:
            return list(range(self.cells.shape[0]))
        return [LEAD_NAMES.index(name) for name in self.selected_leads]

    def region(self) -> np.ndarray:
        region = np.zeros_like(self.cells, dtype=bool)
        region[self._rows(), :] = True
        return region


@dataclass
class AlignmentResult:
    """Per-case agreement bundle at the Dice-optimal threshold."""

    case_id: str
    dice: float
    iou: float
    spearman: float
    threshold: float
    config: dict = field(default_factory=dict)
    spearman_degenerate: bool = False

    def __post_init__(self):
        if not (0.0 <= self.dice <= 1.0 and 0.0 <= self.iou <= 1.0):
            raise InvalidConfig(f"dice/iou out of range: {self.dice}, {self.iou}")
        if not -1.0 <= self.spearman <= 1.0:
            raise InvalidConfig(f"spearman out of range: {self.spearman}")
        if self.iou > self.dice + 1e-12:
            raise InvalidConfig(f"iou {self.iou} exceeds dice {self.dice}")
        if abs(self.dice - 2.0 * self.iou / (1.0 + self.iou)) > 1e-12:
            raise InvalidConfig("dice and iou are not consistent")

    def to_dict(self) -> dict:
        return {
            "case_id": self.case_id,
            "dice": self.dice,
            "iou": self.iou,
            "spearman": self.spearman,
            "threshold": self.threshold,
            "config": dict(self.config),
            "spearman_degenerate": self.spearman_degenerate,
        }


# ---------------------------------------------------------------------------
# rasterization
# ---------------------------------------------------------------------------

def _regional_minimum_ms(center_ms: float) -> float:
    return (MIN_SEGMENT_QRS_MS if center_ms < QRS_REGION_END_MS
            else MIN_SEGMENT_LATE_MS)


def _segment_bounds_ms(seg: dict, window_ms: float) -> tuple[float, float]:
    """Resolve one raw segment entry to widened, window-clipped ms bounds."""
    if "point_ms" in seg:
        point = float(seg["point_ms"])
        if point < 0 or point > window_ms:
            raise OutOfWindow(f"point {point} ms outside [0, {window_ms}]")
        start, end = point - POINT_TOLERANCE_MS, point + POINT_TOLERANCE_MS
    else:
        start, end = float(seg["start_ms"]), float(seg["end_ms"])
        if end <= start:
            raise InvalidConfig(f"segment end {end} <= start {start}")
        if end <= 0 or start >= window_ms:
            raise OutOfWindow(f"segment [{start}, {end}] ms outside [0, {window_ms}]")
        if not seg.get("verbatim", False):
            center = (start + end) / 2.0
            minimum = _regional_minimum_ms(center)
            if end - start < minimum:
                start, end = center - minimum / 2.0, center + minimum / 2.0
    return max(0.0, start), min(window_ms, end)


def annotation_to_mask(ann: ExpertAnnotation, sample_rate_hz: int,
                       window_ms: float) -> BinaryMask:
    """Rasterize an annotation onto the sample grid of its modality.

    A segment carrying a `lead` key marks only that lead; segments without
    one mark every annotated lead.
    """
    n = int(window_ms * sample_rate_hz // 1000)
    n_rows = 12 if ann.modality == "ecg12" else 1
    cells = np.zeros((n_rows, n), dtype=bool)
    all_rows = ([LEAD_NAMES.index(name) for name in ann.leads]
                if ann.modality == "ecg12" else [0])

    for seg in ann.segments:
        if ann.modality == "ecg12" and "lead" in seg:
            if seg["lead"] not in ann.leads:
                raise InvalidConfig(
                    f"segment lead {seg['lead']!r} not in annotation leads")
            rows = [LEAD_NAMES.index(seg["lead"])]
        else:
            rows = all_rows
        start_ms, end_ms = _segment_bounds_ms(seg, window_ms)
        i0 = int(round(start_ms * sample_rate_hz / 1000.0))
        i1 = int(round(end_ms * sample_rate_hz / 1000.0))
        i0, i1 = max(0, i0), min(n, i1)
        for r in rows:
            cells[r, i0:i1] = True

    selected = list(ann.leads) if ann.modality == "ecg12" else ["all"]
    return BinaryMask(cells=cells, selected_leads=selected)


def mask_to_segments(mask: BinaryMask, sample_rate_hz: int) -> list[dict]:
    """Runs of active cells as verbatim ms segments (per selected lead for
    ecg12 masks; temporal runs for cine). Re-rasterizing them reproduces
    the exact cell set."""
    segments = []
    per_ms = 1000.0 / sample_rate_hz
    rows = (range(mask.cells.shape[0]) if mask.selected_leads == ["all"]
            else [LEAD_NAMES.index(name) for name in mask.selected_leads])
    for r in rows:
        row = mask.cells[r]
        t = 0
        while t < row.size:
            if row[t]:
                t0 = t
                while t < row.size and row[t]:
                    t += 1
                seg = {"start_ms": t0 * per_ms, "end_ms": t * per_ms,
                       "verbatim": True}
                if mask.selected_leads != ["all"]:
                    seg["lead"] = LEAD_NAMES[r]
                segments.append(seg)
            else:
                t += 1
    return segments


# ---------------------------------------------------------------------------
# overlap metrics
# ---------------------------------------------------------------------------

def _resolve_masks(pred, truth, region) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    pred_cells = pred.cells if isinstance(pred, BinaryMask) else np.asarray(pred, dtype=bool)
    truth_cells = truth.cells if isinstance(truth, BinaryMask) else np.asarray(truth, dtype=bool)
    if region is None and isinstance(truth, BinaryMask):
        region = truth.region()
    region = np.asarray(region, dtype=bool)
    if pred_cells.shape != truth_cells.shape or region.shape != truth_cells.shape:
        raise ShapeMismatch(
            f"shape mismatch: pred {pred_cells.shape}, truth {truth_cells.shape}, "
            f"region {region.shape}")
    if not region.any():
        raise EmptyRegion("metric region has no cells")
    if not truth_cells[region].any():
        raise EmptyGroundTruth("ground truth empty inside the region")
    return pred_cells, truth_cells, region


def dice(pred, truth, region=None) -> float:
    """2|A&B| / (|A| + |B|) restricted to the region."""
    pred_cells, truth_cells, region = _resolve_masks(pred, truth, region)
    a = pred_cells & region
    b = truth_cells & region
    inter = int(np.sum(a & b))
    total = int(np.sum(a)) + int(np.sum(b))
    return 2.0 * inter / total


def iou(pred, truth, region=None) -> float:
    """|A&B| / |A|B| restricted to the region."""
    pred_cells, truth_cells, region = _resolve_masks(pred, truth, region)
    a = pred_cells & region
    b = truth_cells & region
    inter = int(np.sum(a & b))
    union = int(np.sum(a | b))
    return inter / union


# ---------------------------------------------------------------------------
# rank correlation
# ---------------------------------------------------------------------------

def spearman(importance, truth, region=None) -> tuple[float, bool]:
    """Tie-corrected Spearman of continuous map values against the binary
    truth over region cells. Returns (rho, degenerate): a constant map has
    undefined rank variance and reports (0.0, True)."""
    values = importance.values if isinstance(importance, ImportanceMap) else np.asarray(
        importance, dtype=np.float64)
    truth_cells = truth.cells if isinstance(truth, BinaryMask) else np.asarray(truth, dtype=bool)
    if region is None and isinstance(truth, BinaryMask):
        region = truth.region()
    region = np.asarray(region, dtype=bool)
    if values.shape != truth_cells.shape or region.shape != values.shape:
        raise ShapeMismatch("importance/truth/region shapes differ")

    v = values[region]
    g = truth_cells[region].astype(np.float64)
    if v.size < 2 or np.all(g == g[0]):
        raise DegenerateRegion("need >= 2 region cells with non-identical truth")
    if np.all(v == v[0]):
        return 0.0, True
    rho = sp_stats.spearmanr(v, g).statistic
    if not np.isfinite(rho):
        return 0.0, True
    return float(rho), False


# ---------------------------------------------------------------------------
# threshold optimization
# ---------------------------------------------------------------------------

def optimal_threshold(importance, truth, region=None) -> tuple[float, float]:
    """Sweep thresholds 0.00..1.00 (step 0.01) over unit-scaled map values;
    return the lowest threshold attaining the maximum Dice."""
    values = importance.values if isinstance(importance, ImportanceMap) else np.asarray(
        importance, dtype=np.float64)
    truth_cells = truth.cells if isinstance(truth, BinaryMask) else np.asarray(truth, dtype=bool)
    if region is None and isinstance(truth, BinaryMask):
        region = truth.region()
    region = np.asarray(region, dtype=bool)
    if values.shape != truth_cells.shape or region.shape != values.shape:
        raise ShapeMismatch("importance/truth/region shapes differ")
    if not region.any():
        raise EmptyRegion("threshold region has no cells")
    if not truth_cells[region].any():
        raise EmptyGroundTruth("ground truth empty inside the region")

    v = values[region]
    if v.size and (v.min() < -1e-12 or v.max() > 1.0 + 1e-12):
        raise InvalidConfig("threshold sweep expects map values in [0, 1]")
    g = truth_cells[region]
    n_truth = int(g.sum())

    best_t, best_dice = 0.0, -1.0
    for t in THRESHOLD_GRID:
        pred = v >= t
        inter = int(np.sum(pred & g))
        total = int(np.sum(pred)) + n_truth
        d = 2.0 * inter / total if total else 0.0
        if d > best_dice:
            best_t, best_dice = float(t), d
    return best_t, best_dice


def rescale_for_threshold(importance: ImportanceMap, region: np.ndarray) -> np.ndarray:
    """Unit-scale positive/absolute maps over the region before sweeping;
    scaled maps are already in [0, 1]."""
    region = np.asarray(region, dtype=bool)
    if importance.prep == "scaled":
        return importance.values
    v = importance.values
    lo, hi = v[region].min(), v[region].max()
    if hi == lo:
        return np.zeros_like(v)
    return np.clip((v - lo) / (hi - lo), 0.0, 1.0)


def align_case(importance: ImportanceMap, truth: BinaryMask,
               region: np.ndarray | None = None,
               config: dict | None = None) -> AlignmentResult:
    """Bundle threshold-optimal Dice, the IoU at that threshold, and the
    Spearman rank correlation into one record."""
    if region is None:
        region = truth.region()
    region = np.asarray(region, dtype=bool)
    scaled = rescale_for_threshold(importance, region)
    threshold, best_dice = optimal_threshold(scaled, truth, region)
    pred = (scaled >= threshold) & region
    iou_value = iou(pred, truth, region)
    try:
        rho, rho_degenerate = spearman(importance.values, truth, region)
    except DegenerateRegion:
        rho, rho_degenerate = 0.0, True
    return AlignmentResult(case_id=importance.case_id, dice=best_dice,
                           iou=iou_value, spearman=rho, threshold=threshold,
                           config=dict(config or {}),
                           spearman_degenerate=rho_degenerate)
