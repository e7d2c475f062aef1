"""Cohort orchestration: the (method x prep x representation) optimization
pool with content-hash caching, diagnosis/agreement stratification with
BCa intervals, report tables, and the case bundles the annotation UI
consumes.

Pool cells are independent: a missing checkpoint or annotation is recorded
per cell and the run continues. Results rows are plain dicts (one JSON
object per line on disk) sorted deterministically so an unchanged re-run
writes a byte-identical table.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import agreement as ag
from . import attribution as at
from . import crossmodal as cm
from .bootstrap import BootstrapCI, bca_bootstrap
from .errors import (
    InvalidConfig,
    MissingAnnotation,
    MissingCheckpoint,
    MissingPrediction,
    SchemaError,
)
from .model import Model, model_digest, predict_proba
from .signals import Case, ClassLabel, case_to_dict

REPRESENTATIONS = ("ecg12", "cine_direct", "cine_mapped")
METRICS = ("dice", "iou", "spearman")


@dataclass
class PoolConfig:
    """Which (method x prep x representation x seed) cells to evaluate."""

    methods: tuple[str, ...] = ("ig",)
    preps: tuple[str, ...] = cm.PREPS
    representations: tuple[str, ...] = REPRESENTATIONS
    seeds: tuple[int, ...] = (0,)
    bootstrap_B: int = 2000
    alpha: float = 0.05
    method_params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.methods = tuple(self.methods)
        self.preps = tuple(self.preps)
        self.representations = tuple(self.representations)
        self.seeds = tuple(int(s) for s in self.seeds)
        if not (self.methods and self.preps and self.representations and self.seeds):
            raise InvalidConfig("methods/preps/representations/seeds must be nonempty")
        for m in self.methods:
            if m not in at.METHOD_NAMES:
                raise InvalidConfig(f"unknown method {m!r}")
        for p in self.preps:
            if p not in cm.PREPS:
                raise InvalidConfig(f"unknown prep {p!r}")
        for r in self.representations:
            if r not in REPRESENTATIONS:
                raise InvalidConfig(f"unknown representation {r!r}")
        if self.bootstrap_B < 1:
            raise InvalidConfig(f"bootstrap_B must be >= 1, got {self.bootstrap_B}")
        if not 0.0 < self.alpha < 1.0:
            raise InvalidConfig(f"alpha must be in (0, 1), got {self.alpha}")

    @classmethod
    def from_dict(cls, obj: dict) -> "PoolConfig":
        kwargs = {key: obj[key] for key in
                  ("methods", "preps", "representations", "seeds", "bootstrap_B",
                   "alpha", "method_params") if key in obj}
        return cls(**kwargs)


@dataclass
class PoolResult:
    """Alignment rows plus per-cell errors and cache accounting."""

    rows: list[dict] = field(default_factory=list)
    errors: list[dict] = field(default_factory=list)
    computed_cells: int = 0
    cached_cells: int = 0


def case_digest(case: Case) -> str:
    payload = json.dumps(case_to_dict(case), sort_keys=True)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _cell_key(checkpoint_digest: str, case_dig: str, method: str, params: dict,
              prep: str, representation: str, seed: int) -> str:
    payload = json.dumps({
        "checkpoint": checkpoint_digest,
        "case": case_dig,
        "method": method,
        "params": params,
        "prep": prep,
        "representation": representation,
        "seed": seed,
    }, sort_keys=True)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _model_for(representation: str, checkpoints: dict[str, Model]) -> Model:
    key = "cine" if representation == "cine_direct" else "ecg12"
    model = checkpoints.get(key)
    if model is None:
        raise MissingCheckpoint(f"representation {representation} needs the "
                                f"{key!r} checkpoint")
    return model


def _annotation_for(case_id: str, representation: str,
                    annotations: dict) -> ag.ExpertAnnotation:
    modality = "ecg12" if representation == "ecg12" else "cine"
    ann = annotations.get((case_id, modality))
    if ann is None:
        raise MissingAnnotation(f"case {case_id} has no {modality} annotation")
    return ann


def evaluate_cell(case: Case, annotation: ag.ExpertAnnotation, model: Model,
                  method: str, prep: str, representation: str, seed: int,
                  method_params: dict | None = None,
                  attribution: at.ClassAttribution | None = None,
                  ) -> ag.AlignmentResult:
    """Attribute -> bipolar profile -> (projection) -> orient -> post-process
    -> align, for one pool cell."""
    params = dict(method_params or {})
    record = case.record
    if attribution is None:
        x = case.cine.path if representation == "cine_direct" else record.leads
        attribution = at.attribute_both_classes(model, x, method,
                                                case_id=record.case_id,
                                                seed=seed, **params)
    profile = cm.bipolar_profile(attribution)

    if representation == "ecg12":
        values = profile.values
    elif representation == "cine_mapped":
        values = cm.map_to_cine(profile).temporal[None, :]
    else:
        temporal, _ = cm.aggregate_temporal(profile.values)
        values = temporal[None, :]

    mask = ag.annotation_to_mask(annotation, record.sample_rate_hz,
                                 record.window_ms)
    region = mask.region()
    oriented = cm.orient_by_diagnosis(values, annotation.diagnosis)
    importance = cm.post_process(oriented, prep, region,
                                 diagnosis=annotation.diagnosis,
                                 case_id=record.case_id)
    config = {"method": method, "prep": prep, "representation": representation,
              "seed": seed}
    return ag.align_case(importance, mask, region, config)


def run_pool(cases: list[Case], annotations: dict, checkpoints: dict[str, Model],
             config: PoolConfig, cache_dir: str | Path | None = None) -> PoolResult:
    """Evaluate every (case, method, prep, representation, seed) cell.

    `annotations` maps (case_id, modality) to ExpertAnnotation;
    `checkpoints` maps "ecg12"/"cine" to loaded models. Cells already in
    the content-hash cache are loaded, not recomputed. Rows carry the
    expert diagnosis and the model prediction so reports can stratify
    without re-running inference.
    """
    cache_path = Path(cache_dir) if cache_dir is not None else None
    if cache_path is not None:
        cache_path.mkdir(parents=True, exist_ok=True)

    digests = {key: model_digest(m) for key, m in checkpoints.items()}
    result = PoolResult()
    attr_memo: dict[tuple, at.ClassAttribution] = {}
    prediction_memo: dict[tuple, int] = {}

    for case in cases:
        case_dig = case_digest(case)
        for representation in config.representations:
            for method in config.methods:
                for seed in config.seeds:
                    for prep in config.preps:
                        cell_id = {"case_id": case.case_id, "method": method,
                                   "prep": prep, "representation": representation,
                                   "seed": seed}
                        try:
                            row = _run_cell(case, case_dig, annotations, checkpoints,
                                            digests, config, method, prep,
                                            representation, seed, cache_path,
                                            attr_memo, prediction_memo, result)
                        except (MissingCheckpoint, MissingAnnotation) as exc:
                            result.errors.append(
                                {**cell_id, "error": type(exc).__name__,
                                 "message": str(exc)})
                            continue
                        result.rows.append(row)

    result.rows.sort(key=lambda r: (r["case_id"], r["representation"], r["method"],
                                    r["prep"], r["seed"]))
    return result


def _run_cell(case, case_dig, annotations, checkpoints, digests, config, method,
              prep, representation, seed, cache_path, attr_memo, prediction_memo,
              result) -> dict:
    model = _model_for(representation, checkpoints)
    annotation = _annotation_for(case.case_id, representation, annotations)
    if representation != "ecg12" and case.cine is None:
        raise MissingAnnotation(f"case {case.case_id} has no trajectory")

    model_key = "cine" if representation == "cine_direct" else "ecg12"
    params = dict(config.method_params.get(method, {}))
    key = _cell_key(digests[model_key], case_dig, method, params, prep,
                    representation, seed)

    cached = None
    if cache_path is not None:
        cell_file = cache_path / f"{key}.json"
        if cell_file.exists():
            cached = json.loads(cell_file.read_text(encoding="utf-8"))

    if cached is not None:
        result.cached_cells += 1
        return cached

    memo_key = (case.case_id, model_key, method, seed)
    if memo_key not in attr_memo:
        x = case.cine.path if model_key == "cine" else case.record.leads
        attr_memo[memo_key] = at.attribute_both_classes(
            model, x, method, case_id=case.case_id, seed=seed, **params)
    alignment = evaluate_cell(case, annotation, model, method, prep,
                              representation, seed, params,
                              attribution=attr_memo[memo_key])

    pred_key = (case.case_id, model_key)
    if pred_key not in prediction_memo:
        x = case.cine.path if model_key == "cine" else case.record.leads
        probs = predict_proba(model, x)
        prediction_memo[pred_key] = int(probs[1] > probs[0])

    row = alignment.to_dict()
    row.update({"method": method, "prep": prep, "representation": representation,
                "seed": seed,
                "diagnosis": int(annotation.diagnosis),
                "prediction": prediction_memo[pred_key]})
    del row["config"]
    result.computed_cells += 1

    if cache_path is not None:
        (cache_path / f"{key}.json").write_text(
            json.dumps(row, sort_keys=True), encoding="utf-8")
    return row


def save_results(result: PoolResult, path: str | Path) -> None:
    """One sorted JSON object per row; stable across identical re-runs."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for row in result.rows:
            fh.write(json.dumps(row, sort_keys=True))
            fh.write("\n")


def load_results(path: str | Path) -> list[dict]:
    rows = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows


# ---------------------------------------------------------------------------
# aggregation, stratification, reporting
# ---------------------------------------------------------------------------

def _metric_cis(rows: list[dict], B: int, alpha: float, seed: int) -> dict:
    out = {}
    for i, metric in enumerate(METRICS):
        values = [r[metric] for r in rows]
        out[metric] = bca_bootstrap(values, B=B, alpha=alpha, seed=seed + i)
    return out


@dataclass
class CohortReport:
    """Aggregated pool outcome: per-config intervals, the winning config per
    representation, and diagnosis/agreement strata."""

    per_config: list[dict] = field(default_factory=list)
    winners: dict = field(default_factory=dict)
    strata: dict = field(default_factory=dict)
    n_cases: int = 0


def stratify(rows: list[dict], diagnoses: dict | None = None,
             predictions: dict | None = None, B: int = 2000,
             alpha: float = 0.05, seed: int = 0) -> dict:
    """Partition rows by expert diagnosis and by model-expert agreement.

    `diagnoses`/`predictions` override the per-row fields when given.
    Strata with fewer than 2 distinct cases are flagged, not dropped.
    """
    def diagnosis_of(row):
        if diagnoses is not None:
            if row["case_id"] not in diagnoses:
                raise MissingAnnotation(f"no diagnosis for case {row['case_id']}")
            return int(ClassLabel.parse(diagnoses[row["case_id"]]))
        if "diagnosis" not in row:
            raise MissingAnnotation(f"row for case {row['case_id']} lacks a diagnosis")
        return int(row["diagnosis"])

    def prediction_of(row):
        if predictions is not None:
            if row["case_id"] not in predictions:
                raise MissingPrediction(f"no prediction for case {row['case_id']}")
            return int(predictions[row["case_id"]])
        if "prediction" not in row:
            raise MissingPrediction(f"row for case {row['case_id']} lacks a prediction")
        return int(row["prediction"])

    buckets = {
        "diagnosis:Normal": [r for r in rows if diagnosis_of(r) == 0],
        "diagnosis:Abnormal": [r for r in rows if diagnosis_of(r) == 1],
        "agreement:Agree": [r for r in rows
                            if prediction_of(r) == diagnosis_of(r)],
        "agreement:Disagree": [r for r in rows
                               if prediction_of(r) != diagnosis_of(r)],
    }
    strata = {}
    for name, bucket in buckets.items():
        n_cases = len({r["case_id"] for r in bucket})
        entry = {"n_cases": n_cases, "n_rows": len(bucket),
                 "flagged": n_cases < 2}
        if bucket:
            entry["metrics"] = {k: ci.to_dict() for k, ci in
                                _metric_cis(bucket, B, alpha, seed).items()}
        else:
            entry["metrics"] = None
        strata[name] = entry
    return strata


def build_report(rows: list[dict], config: PoolConfig, seed: int = 0) -> CohortReport:
    """Per-config bootstrap intervals plus the mean-Dice winner per
    representation."""
    report = CohortReport(n_cases=len({r["case_id"] for r in rows}))
    groups: dict[tuple, list[dict]] = {}
    for row in rows:
        groups.setdefault((row["representation"], row["method"], row["prep"]), []).append(row)

    for (representation, method, prep) in sorted(groups):
        bucket = groups[(representation, method, prep)]
        cis = _metric_cis(bucket, config.bootstrap_B, config.alpha, seed)
        report.per_config.append({
            "representation": representation,
            "method": method,
            "prep": prep,
            "n": len(bucket),
            "metrics": {k: ci.to_dict() for k, ci in cis.items()},
        })

    for representation in sorted({c["representation"] for c in report.per_config}):
        configs = [c for c in report.per_config
                   if c["representation"] == representation]
        winner = max(configs, key=lambda c: c["metrics"]["dice"]["mean"])
        report.winners[representation] = winner

    try:
        report.strata = stratify(rows, B=config.bootstrap_B, alpha=config.alpha,
                                 seed=seed)
    except (MissingAnnotation, MissingPrediction):
        report.strata = {}
    return report


def _fmt_ci(ci: dict | BootstrapCI) -> str:
    if isinstance(ci, BootstrapCI):
        ci = ci.to_dict()
    return f"{ci['mean']:.2f} ({ci['lo']:.2f}–{ci['hi']:.2f})"


def emit_report(report: CohortReport, fmt: str = "markdown") -> str:
    """Render the cohort report; markdown mirrors the winner-per-modality
    table layout (mean plus a 2-decimal CI per metric), JSON keeps full
    precision."""
    if fmt == "json":
        return json.dumps({
            "n_cases": report.n_cases,
            "per_config": report.per_config,
            "winners": report.winners,
            "strata": report.strata,
        }, indent=2, sort_keys=True)
    if fmt not in ("markdown", "md"):
        raise InvalidConfig(f"unknown report format {fmt!r}")

    lines = []
    lines.append("## Optimized alignment by representation")
    lines.append("")
    lines.append("| Modality | Dice Score | IoU Score | Spearman Cor. |")
    lines.append("| --- | --- | --- | --- |")
    for representation in sorted(report.winners):
        w = report.winners[representation]
        label = f"{representation} ({w['method']}, {w['prep']})"
        cells = [_fmt_ci(w["metrics"][m]) for m in METRICS]
        lines.append(f"| {label} | {cells[0]} | {cells[1]} | {cells[2]} |")
    lines.append("")

    lines.append("## All configurations")
    lines.append("")
    lines.append("| Representation | Method | Prep | n | Dice Score | IoU Score "
                 "| Spearman Cor. |")
    lines.append("| --- | --- | --- | --- | --- | --- | --- |")
    for c in report.per_config:
        cells = [_fmt_ci(c["metrics"][m]) for m in METRICS]
        lines.append(f"| {c['representation']} | {c['method']} | {c['prep']} "
                     f"| {c['n']} | {cells[0]} | {cells[1]} | {cells[2]} |")
    lines.append("")

    if report.strata:
        lines.append("## Strata")
        lines.append("")
        lines.append("| Stratum | Cases | Dice Score | IoU Score | Spearman Cor. |")
        lines.append("| --- | --- | --- | --- | --- |")
        for name in sorted(report.strata):
            entry = report.strata[name]
            if entry["metrics"] is None:
                cells = ["—"] * 3
            else:
                cells = [_fmt_ci(entry["metrics"][m]) for m in METRICS]
            flag = " (flagged)" if entry["flagged"] else ""
            lines.append(f"| {name}{flag} | {entry['n_cases']} | {cells[0]} "
                         f"| {cells[1]} | {cells[2]} |")
        lines.append("")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# permutation null for cohort mean Dice
# ---------------------------------------------------------------------------

def best_dice_matrix(maps: list[np.ndarray], masks: list[np.ndarray]) -> np.ndarray:
    """matrix[i, j] = max Dice over the threshold grid of map i vs mask j.

    Maps are unit-scaled flat arrays; masks are flat booleans of the same
    length (all restricted to their regions beforehand).
    """
    n = len(maps)
    out = np.zeros((n, n))
    mask_stack = np.stack([m.astype(np.float64) for m in masks])  # [n, L]
    mask_counts = mask_stack.sum(axis=1)
    for i, values in enumerate(maps):
        pred = values[None, :] >= ag.THRESHOLD_GRID[:, None]  # [101, L]
        pred_counts = pred.sum(axis=1)
        inter = pred @ mask_stack.T  # [101, n]
        denom = pred_counts[:, None] + mask_counts[None, :]
        with np.errstate(invalid="ignore", divide="ignore"):
            dice_grid = np.where(denom > 0, 2.0 * inter / denom, 0.0)
        out[i] = dice_grid.max(axis=0)
    return out


def label_permutation_test(maps: list[np.ndarray], masks: list[np.ndarray],
                           n_permutations: int = 1000,
                           seed: int = 0) -> tuple[float, float, np.ndarray]:
    """Observed mean best-Dice of matched (map, mask) pairs against the null
    of randomly re-paired masks. Returns (observed, p_value, null_means)."""
    matrix = best_dice_matrix(maps, masks)
    n = matrix.shape[0]
    observed = float(np.mean(np.diag(matrix)))
    rng = np.random.default_rng(seed)
    null_means = np.empty(n_permutations)
    rows = np.arange(n)
    for b in range(n_permutations):
        perm = rng.permutation(n)
        null_means[b] = matrix[rows, perm].mean()
    p_value = (1.0 + np.count_nonzero(null_means >= observed)) / (n_permutations + 1.0)
    return observed, float(p_value), null_means


# ---------------------------------------------------------------------------
# UI case bundles and annotation import
# ---------------------------------------------------------------------------

_LABEL_BEARING_KEYS = ("label", "diagnosis", "prediction")


def export_case_bundle(case: Case, attributions: at.ClassAttribution | None = None,
                       mapped: cm.MappedProfile | None = None,
                       prediction: int | None = None,
                       blind: bool = False) -> dict:
    """Self-contained JSON document for the annotation/inspection UI.

    Blind bundles strip every label-bearing key (label, diagnosis,
    prediction) and all overlays so reviewers see only the signals.
    """
    record = case.record
    bundle: dict = {
        "case_id": record.case_id,
        "sample_rate_hz": int(record.sample_rate_hz),
        "window_ms": record.window_ms,
        "lead_names": list(ag.LEAD_NAMES),
        "ecg": [row.tolist() for row in record.leads],
        "blind": bool(blind),
    }
    if case.cine is not None:
        bundle["cine"] = [row.tolist() for row in case.cine.path]
    if not blind:
        bundle["label"] = int(record.label)
        overlays = {}
        if attributions is not None:
            profile = cm.bipolar_profile(attributions)
            peak = float(np.max(np.abs(profile.values)))
            overlays["ecg12"] = {
                "values": [row.tolist() for row in profile.values],
                "scale": {"min": -peak if peak else -1.0, "max": peak if peak else 1.0},
                "method": attributions.method,
            }
        if mapped is not None:
            overlays["cine"] = {
                "values": mapped.temporal.tolist(),
                "scale": {"min": -1.0, "max": 1.0},
                "degenerate": mapped.degenerate_flag,
                "method": mapped.source_method,
            }
        if overlays:
            bundle["overlays"] = overlays
        if prediction is not None:
            bundle["prediction"] = int(prediction)
    if blind:
        assert_blind_safe(bundle)
    return bundle


def assert_blind_safe(obj) -> None:
    """Recursively verify no label-bearing key survives in a blind bundle."""
    if isinstance(obj, dict):
        for key, value in obj.items():
            if key in _LABEL_BEARING_KEYS:
                raise InvalidConfig(f"blind bundle contains key {key!r}")
            assert_blind_safe(value)
    elif isinstance(obj, (list, tuple)):
        for item in obj:
            assert_blind_safe(item)


def import_annotations(path: str | Path) -> list[ag.ExpertAnnotation]:
    """Read annotation JSON (a single object, a list, or NDJSON lines)."""
    text = Path(path).read_text(encoding="utf-8").strip()
    if not text:
        return []
    try:
        payload = json.loads(text)
        objs = payload if isinstance(payload, list) else [payload]
    except json.JSONDecodeError:
        objs = [json.loads(line) for line in text.splitlines() if line.strip()]
    annotations = []
    for obj in objs:
        for key in ("case_id", "modality", "diagnosis", "segments"):
            if key not in obj:
                raise SchemaError(key)
        annotations.append(ag.ExpertAnnotation.from_dict(obj))
    return annotations
