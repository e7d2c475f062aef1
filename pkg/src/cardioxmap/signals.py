"""Domain data model, dataset splitting, windowing, synthetic case
generation with exact cross-modal correspondence, and NDJSON file I/O.

A "case" couples a 12-lead voltage record with an optional 3D trajectory
sampled on the same time grid, plus (for synthetic data) the ground-truth
window where the generator placed the abnormality.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import IntEnum
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import (
    InsufficientData,
    InvalidConfig,
    ParseError,
    SchemaError,
    SeriesTooShort,
)

LEAD_NAMES = ("I", "II", "III", "aVR", "aVL", "aVF",
              "V1", "V2", "V3", "V4", "V5", "V6")

QRS_REGION_END_MS = 150.0
DEFAULT_WINDOW_MS = 400.0
DEFAULT_SAMPLE_RATE_HZ = 500


class ClassLabel(IntEnum):
    NORMAL = 0
    ABNORMAL = 1

    @classmethod
    def parse(cls, value) -> "ClassLabel":
        if isinstance(value, str):
            key = value.strip().upper()
            if key in cls.__members__:
                return cls[key]
            raise ValueError(f"unknown class label {value!r}")
        return cls(int(value))


def load_lead_matrix() -> np.ndarray:
    """The fixed 12x3 dipole-to-lead coefficient matrix shipped with the package."""
    text = resources.files("cardioxmap.data").joinpath("lead_matrix.json").read_text()
    return np.asarray(json.loads(text)["matrix"], dtype=np.float64)


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------

@dataclass
class EcgRecord:
    """12-lead voltage matrix [12, T] in millivolts plus sampling metadata."""

    case_id: str
    leads: np.ndarray
    sample_rate_hz: int = DEFAULT_SAMPLE_RATE_HZ
    label: ClassLabel = ClassLabel.NORMAL
    patient_id: str = ""

    def __post_init__(self):
        self.leads = np.asarray(self.leads, dtype=np.float64)
        if self.leads.ndim != 2 or self.leads.shape[0] != 12:
            raise InvalidConfig(f"leads must be [12, T], got {self.leads.shape}")
        if not np.all(np.isfinite(self.leads)):
            raise InvalidConfig("leads contain non-finite values")
        if self.sample_rate_hz <= 0:
            raise InvalidConfig(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        self.label = ClassLabel.parse(self.label)

    @property
    def n_samples(self) -> int:
        return self.leads.shape[1]

    @property
    def window_ms(self) -> float:
        return self.n_samples * 1000.0 / self.sample_rate_hz


@dataclass
class CineTrajectory:
    """3D spatial path [3, T] (dimensionless x, y, z per time-step)."""

    case_id: str
    path: np.ndarray
    sample_rate_hz: int = DEFAULT_SAMPLE_RATE_HZ

    def __post_init__(self):
        self.path = np.asarray(self.path, dtype=np.float64)
        if self.path.ndim != 2 or self.path.shape[0] != 3:
            raise InvalidConfig(f"path must be [3, T], got {self.path.shape}")
        if not np.all(np.isfinite(self.path)):
            raise InvalidConfig("path contains non-finite values")
        if self.sample_rate_hz <= 0:
            raise InvalidConfig(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")

    @property
    def n_samples(self) -> int:
        return self.path.shape[1]


@dataclass
class GroundTruthWindow:
    """Interval [start_ms, end_ms) where the generator placed the evidence."""

    start_ms: float
    end_ms: float
    description: str = ""

    def __post_init__(self):
        if not (np.isfinite(self.start_ms) and np.isfinite(self.end_ms)):
            raise InvalidConfig("ground-truth window bounds must be finite")
        if self.start_ms < 0 or self.end_ms <= self.start_ms:
            raise InvalidConfig(
                f"need 0 <= start_ms < end_ms, got [{self.start_ms}, {self.end_ms}]")


@dataclass
class Case:
    """One record with its optional paired trajectory and truth window."""

    record: EcgRecord
    cine: CineTrajectory | None = None
    truth: GroundTruthWindow | None = None

    def __post_init__(self):
        if self.cine is not None and self.cine.n_samples != self.record.n_samples:
            raise InvalidConfig(
                f"trajectory length {self.cine.n_samples} != record length "
                f"{self.record.n_samples}")

    @property
    def case_id(self) -> str:
        return self.record.case_id


@dataclass
class DatasetSplit:
    """Patient-level partition of case ids into train/val/test."""

    train: list[str]
    val: list[str]
    test: list[str]

    def partitions(self) -> dict[str, list[str]]:
        return {"train": self.train, "val": self.val, "test": self.test}


# ---------------------------------------------------------------------------
# windowing
# ---------------------------------------------------------------------------

def truncate_window(record: EcgRecord, window_ms: float,
                    offset_samples: int = 0) -> EcgRecord:
    """Cut the record to floor(window_ms * rate / 1000) samples.

    Anchors at index 0 by default; `offset_samples` shifts the anchor for
    pre-aligned data.
    """
    if window_ms <= 0:
        raise InvalidConfig(f"window_ms must be positive, got {window_ms}")
    n = int(window_ms * record.sample_rate_hz // 1000)
    if offset_samples < 0:
        raise InvalidConfig(f"offset_samples must be >= 0, got {offset_samples}")
    if record.n_samples - offset_samples < n:
        raise SeriesTooShort(
            f"{record.case_id}: needs {n} samples from offset {offset_samples}, "
            f"series has {record.n_samples}")
    if offset_samples == 0 and record.n_samples == n:
        return record
    return replace(record, leads=record.leads[:, offset_samples:offset_samples + n].copy())


# ---------------------------------------------------------------------------
# stratified splitting
# ---------------------------------------------------------------------------

def _largest_remainder_counts(n: int, ratios: tuple[float, ...]) -> list[int]:
    raw = [n * r for r in ratios]
    counts = [int(x) for x in raw]
    remainder = n - sum(counts)
    order = sorted(range(len(ratios)), key=lambda i: raw[i] - counts[i], reverse=True)
    for i in order[:remainder]:
        counts[i] += 1
    return counts


def stratified_split(cases: list[tuple[str, str, int]],
                     ratios: tuple[float, float, float] = (0.6, 0.2, 0.2),
                     seed: int = 0,
                     tolerance_pp: float = 2.0,
                     max_attempts: int = 50) -> DatasetSplit:
    """Patient-level stratified shuffle split of (case_id, patient_id, label).

    All cases of a patient land in the same partition; patients are
    shuffled and allocated per class so each partition's class mix stays
    within `tolerance_pp` percentage points of the global mix. Deterministic
    for a fixed seed.
    """
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise InvalidConfig(f"ratios must sum to 1, got {ratios}")
    if any(r <= 0 for r in ratios):
        raise InvalidConfig(f"all ratios must be positive, got {ratios}")
    if not cases:
        raise InsufficientData("no cases supplied")

    by_patient: dict[str, list[tuple[str, int]]] = {}
    for case_id, patient_id, label in cases:
        by_patient.setdefault(patient_id, []).append((case_id, int(label)))

    def patient_label(entries: list[tuple[str, int]]) -> int:
        votes = sum(lab for _, lab in entries)
        return 1 if votes * 2 > len(entries) else 0

    patients_by_class: dict[int, list[str]] = {0: [], 1: []}
    for pid in sorted(by_patient):
        patients_by_class[patient_label(by_patient[pid])].append(pid)

    for cls in (0, 1):
        if len(patients_by_class[cls]) < 5:
            raise InsufficientData(
                f"need >= 5 patients per class, class {cls} has "
                f"{len(patients_by_class[cls])}")

    n_cases = len(cases)
    global_abnormal = sum(int(lab) for _, _, lab in cases) / n_cases

    rng = np.random.default_rng(seed)
    last_problem = ""
    for _ in range(max_attempts):
        parts: list[list[str]] = [[], [], []]
        for cls in (0, 1):
            pool = list(patients_by_class[cls])
            rng.shuffle(pool)
            counts = _largest_remainder_counts(len(pool), ratios)
            idx = 0
            for part_i, cnt in enumerate(counts):
                parts[part_i].extend(pool[idx:idx + cnt])
                idx += cnt

        split_cases: list[list[tuple[str, int]]] = []
        for pids in parts:
            bucket: list[tuple[str, int]] = []
            for pid in pids:
                bucket.extend(by_patient[pid])
            split_cases.append(bucket)

        ok = True
        for bucket in split_cases:
            if not bucket:
                raise InsufficientData("a partition received zero cases")
            labels = [lab for _, lab in bucket]
            if 0 not in labels or 1 not in labels:
                raise InsufficientData(
                    "a partition received zero cases of one class")
            frac = sum(labels) / len(labels)
            if abs(frac - global_abnormal) * 100.0 > tolerance_pp:
                ok = False
                last_problem = (f"class fraction {frac:.3f} vs global "
                                f"{global_abnormal:.3f}")
                break
        if ok:
            train, val, test = ([cid for cid, _ in bucket] for bucket in split_cases)
            return DatasetSplit(train=train, val=val, test=test)

    raise InsufficientData(
        f"could not satisfy +-{tolerance_pp}pp class balance after "
        f"{max_attempts} shuffles ({last_problem})")


# ---------------------------------------------------------------------------
# synthetic case generation
# ---------------------------------------------------------------------------

@dataclass
class GeneratorConfig:
    """Shape parameters for the synthetic dipole-loop generator.

    The path is a sum of parameterized Gaussian bumps: a two-component
    depolarization loop inside the 0-150 ms region and a slower
    repolarization loop after it. Abnormal cases apply one of two
    documented perturbations inside a known window: widening of the
    depolarization bumps, or a plateau-shaped level offset after them.
    """

    window_ms: float = DEFAULT_WINDOW_MS
    sample_rate_hz: int = DEFAULT_SAMPLE_RATE_HZ
    noise_sigma: float = 0.02
    lead_matrix: np.ndarray = field(default_factory=load_lead_matrix)
    qrs_sigma_ms: float = 11.0
    qrs_center_low_ms: float = 50.0
    qrs_center_high_ms: float = 95.0
    qrs_amplitude: float = 1.4
    t_center_low_ms: float = 270.0
    t_center_high_ms: float = 330.0
    t_sigma_ms: float = 28.0
    t_amplitude: float = 0.45
    widen_factor: float = 1.9
    st_amplitude: float = 0.35
    st_start_low_ms: float = 160.0
    st_start_high_ms: float = 230.0
    st_duration_low_ms: float = 60.0
    st_duration_high_ms: float = 90.0
    direction_jitter: float = 0.18

    def __post_init__(self):
        self.lead_matrix = np.asarray(self.lead_matrix, dtype=np.float64)
        if self.lead_matrix.shape != (12, 3):
            raise InvalidConfig(f"lead_matrix must be 12x3, got {self.lead_matrix.shape}")
        if not np.all(np.isfinite(self.lead_matrix)):
            raise InvalidConfig("lead_matrix contains non-finite values")
        positive = {
            "window_ms": self.window_ms,
            "sample_rate_hz": self.sample_rate_hz,
            "qrs_sigma_ms": self.qrs_sigma_ms,
            "qrs_amplitude": self.qrs_amplitude,
            "t_sigma_ms": self.t_sigma_ms,
            "t_amplitude": self.t_amplitude,
            "widen_factor": self.widen_factor,
            "st_amplitude": self.st_amplitude,
        }
        for name, value in positive.items():
            if not np.isfinite(value) or value <= 0:
                raise InvalidConfig(f"{name} must be finite and positive, got {value}")
        if not np.isfinite(self.noise_sigma) or self.noise_sigma < 0:
            raise InvalidConfig(f"noise_sigma must be finite and >= 0, got {self.noise_sigma}")
        if not np.isfinite(self.direction_jitter) or self.direction_jitter < 0:
            raise InvalidConfig(
                f"direction_jitter must be finite and >= 0, got {self.direction_jitter}")

    @property
    def n_samples(self) -> int:
        return int(self.window_ms * self.sample_rate_hz // 1000)


# Canonical loop axes (dimensionless x, y, z), shared across the cohort.
_BASE_DIR_EARLY = np.array([0.75, -0.25, 0.55])
_BASE_DIR_MAIN = np.array([0.45, 0.85, -0.28])
_BASE_DIR_OFFSET = np.array([0.5, 0.55, 0.65])


def _jittered_direction(base: np.ndarray, rng: np.random.Generator,
                        jitter: float) -> np.ndarray:
    d = base / np.linalg.norm(base) + jitter * rng.normal(size=3)
    return d / np.linalg.norm(d)


def _gauss(t_ms: np.ndarray, center: float, sigma: float) -> np.ndarray:
    return np.exp(-0.5 * ((t_ms - center) / sigma) ** 2)


def _plateau(t_ms: np.ndarray, start: float, end: float, tau: float = 6.0) -> np.ndarray:
    return 0.5 * (np.tanh((t_ms - start) / tau) - np.tanh((t_ms - end) / tau))


def generate_synthetic_case(seed: int, label: ClassLabel | int,
                            config: GeneratorConfig | None = None,
                            ) -> tuple[EcgRecord, CineTrajectory, GroundTruthWindow]:
    """Build one synthetic case with exact lead/trajectory correspondence.

    The lead matrix maps the 3D path to 12 lead voltages; Gaussian noise
    (config.noise_sigma) is added to the leads only, so with zero noise
    `leads == lead_matrix @ path` holds exactly. Deterministic per
    (seed, label).
    """
    config = config or GeneratorConfig()
    label = ClassLabel.parse(label)
    rng = np.random.default_rng([int(seed), int(label)])
    t_ms = np.arange(config.n_samples) * 1000.0 / config.sample_rate_hz

    qrs_center = rng.uniform(config.qrs_center_low_ms, config.qrs_center_high_ms)
    qrs_sigma = config.qrs_sigma_ms * rng.uniform(0.9, 1.1)
    qrs_amp = config.qrs_amplitude * rng.uniform(0.85, 1.15)

    # Two crossing components trace a loop instead of a straight stroke.
    # Directions jitter around shared anatomical-style axes so lead
    # polarities stay consistent across the cohort.
    dir_a = _jittered_direction(_BASE_DIR_EARLY, rng, config.direction_jitter)
    dir_b = _jittered_direction(_BASE_DIR_MAIN, rng, config.direction_jitter)
    dir_b -= dir_a * np.dot(dir_a, dir_b)
    dir_b /= np.linalg.norm(dir_b)

    truth: GroundTruthWindow
    abnormal_kind = ""
    st_wave = None
    if label is ClassLabel.ABNORMAL:
        if rng.random() < 0.5:
            abnormal_kind = "qrs-widening"
            qrs_sigma *= config.widen_factor
            half = 2.2 * qrs_sigma
            truth = GroundTruthWindow(
                start_ms=max(0.0, qrs_center - half),
                end_ms=min(QRS_REGION_END_MS, qrs_center + half),
                description="widened depolarization loop")
        else:
            abnormal_kind = "st-offset"
            st_start = rng.uniform(config.st_start_low_ms, config.st_start_high_ms)
            st_end = st_start + rng.uniform(config.st_duration_low_ms,
                                            config.st_duration_high_ms)
            st_dir = _jittered_direction(_BASE_DIR_OFFSET, rng, config.direction_jitter)
            st_wave = (config.st_amplitude * rng.uniform(0.85, 1.15)
                       * np.outer(st_dir, _plateau(t_ms, st_start, st_end)))
            truth = GroundTruthWindow(start_ms=st_start, end_ms=st_end,
                                      description="sustained level offset")
    else:
        half = 2.2 * qrs_sigma
        truth = GroundTruthWindow(
            start_ms=max(0.0, qrs_center - half),
            end_ms=min(QRS_REGION_END_MS, qrs_center + half),
            description="baseline depolarization loop")

    delta = 0.55 * qrs_sigma
    path = (qrs_amp * np.outer(dir_a, _gauss(t_ms, qrs_center - delta, 0.8 * qrs_sigma))
            + qrs_amp * np.outer(dir_b, _gauss(t_ms, qrs_center + delta, qrs_sigma)))

    t_center = rng.uniform(config.t_center_low_ms, config.t_center_high_ms)
    t_dir = _jittered_direction(dir_b, rng, config.direction_jitter)
    path += (config.t_amplitude * rng.uniform(0.85, 1.15)
             * np.outer(t_dir, _gauss(t_ms, t_center, config.t_sigma_ms)))

    if st_wave is not None:
        path += st_wave

    leads = config.lead_matrix @ path
    if config.noise_sigma > 0:
        leads = leads + rng.normal(scale=config.noise_sigma, size=leads.shape)

    case_id = f"case-{seed:06d}"
    patient_id = f"patient-{seed:06d}"
    record = EcgRecord(case_id=case_id, leads=leads,
                       sample_rate_hz=config.sample_rate_hz,
                       label=label, patient_id=patient_id)
    cine = CineTrajectory(case_id=case_id, path=path,
                          sample_rate_hz=config.sample_rate_hz)
    if abnormal_kind:
        truth.description = abnormal_kind
    return record, cine, truth


def generate_dataset(n_cases: int, seed: int,
                     config: GeneratorConfig | None = None) -> list[Case]:
    """Balanced synthetic cohort: even seeds normal, odd seeds abnormal."""
    config = config or GeneratorConfig()
    cases = []
    for i in range(n_cases):
        label = ClassLabel.ABNORMAL if i % 2 else ClassLabel.NORMAL
        record, cine, truth = generate_synthetic_case(seed * 1_000_000 + i, label, config)
        cases.append(Case(record=record, cine=cine, truth=truth))
    return cases


# ---------------------------------------------------------------------------
# NDJSON dataset I/O
# ---------------------------------------------------------------------------

_REQUIRED_KEYS = ("case_id", "patient_id", "label", "sample_rate_hz", "leads")


def case_to_dict(case: Case) -> dict:
    obj = {
        "case_id": case.record.case_id,
        "patient_id": case.record.patient_id,
        "label": int(case.record.label),
        "sample_rate_hz": int(case.record.sample_rate_hz),
        "leads": [row.tolist() for row in case.record.leads],
    }
    if case.cine is not None:
        obj["cine"] = [row.tolist() for row in case.cine.path]
    if case.truth is not None:
        obj["truth_window"] = {
            "start_ms": case.truth.start_ms,
            "end_ms": case.truth.end_ms,
            "description": case.truth.description,
        }
    return obj


def case_from_dict(obj: dict, line_no: int | None = None) -> Case:
    for key in _REQUIRED_KEYS:
        if key not in obj:
            raise SchemaError(key, line_no)
    leads = obj["leads"]
    if len(leads) != 12:
        raise ParseError(line_no or 0, f"leads must have 12 rows, got {len(leads)}")
    record = EcgRecord(case_id=obj["case_id"], leads=np.asarray(leads, dtype=np.float64),
                       sample_rate_hz=obj["sample_rate_hz"], label=obj["label"],
                       patient_id=obj["patient_id"])
    cine = None
    if obj.get("cine") is not None:
        cine_rows = obj["cine"]
        if len(cine_rows) != 3:
            raise ParseError(line_no or 0, f"cine must have 3 rows, got {len(cine_rows)}")
        cine = CineTrajectory(case_id=obj["case_id"],
                              path=np.asarray(cine_rows, dtype=np.float64),
                              sample_rate_hz=obj["sample_rate_hz"])
    truth = None
    if obj.get("truth_window") is not None:
        tw = obj["truth_window"]
        for key in ("start_ms", "end_ms"):
            if key not in tw:
                raise SchemaError(f"truth_window.{key}", line_no)
        truth = GroundTruthWindow(start_ms=tw["start_ms"], end_ms=tw["end_ms"],
                                  description=tw.get("description", ""))
    return Case(record=record, cine=cine, truth=truth)


def save_dataset(cases: list[Case], path: str | Path) -> None:
    """Write one JSON object per line; floats keep full round-trip precision."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for case in cases:
            fh.write(json.dumps(case_to_dict(case)))
            fh.write("\n")


def load_dataset(path: str | Path, window_ms: float | None = None) -> list[Case]:
    """Read an NDJSON dataset; optionally truncate every record to `window_ms`.

    Truncation honors an optional per-case "offset_samples" field for
    pre-aligned data (default anchor is index 0).
    """
    path = Path(path)
    cases: list[Case] = []
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(line_no, str(exc)) from exc
            case = case_from_dict(obj, line_no)
            if window_ms is not None:
                offset = int(obj.get("offset_samples", 0))
                record = truncate_window(case.record, window_ms, offset)
                cine = case.cine
                if cine is not None:
                    n = record.n_samples
                    cine = CineTrajectory(case_id=cine.case_id,
                                          path=cine.path[:, offset:offset + n].copy(),
                                          sample_rate_hz=cine.sample_rate_hz)
                case = Case(record=record, cine=cine, truth=case.truth)
            cases.append(case)
    return cases
