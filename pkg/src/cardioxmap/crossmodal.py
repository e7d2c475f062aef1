"""Bipolar standardization of class attributions, projection of 12-lead
profiles onto the spatial trajectory's time axis, diagnosis-conditional
sign orientation, and the three post-processing strategies.

The bipolar profile's sign convention: positive values are evidence for
the abnormal class, negative values for the normal class. Projection sums
the standardized lead profiles per time-step and rescales by the peak
absolute value, so the same scalar colors every spatial dimension.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attribution import ClassAttribution
from .errors import EmptyRegion, InvalidConfig, MissingDiagnosis, WrongChannelCount
from .signals import ClassLabel

PREPS = ("positive", "absolute", "scaled")


@dataclass
class BipolarProfile:
    """Half-difference of abnormal and normal class attributions, [C, T]."""

    values: np.ndarray
    source_method: str = ""
    case_id: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise InvalidConfig(f"profile must be [C, T], got {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise InvalidConfig("profile contains non-finite values")


@dataclass
class MappedProfile:
    """Lead-aggregated temporal importance, unit-normalized, replicated
    across the three spatial dimensions."""

    temporal: np.ndarray
    replicated: np.ndarray
    degenerate_flag: bool = False
    source_method: str = ""
    case_id: str = ""

    def __post_init__(self):
        self.temporal = np.asarray(self.temporal, dtype=np.float64)
        self.replicated = np.asarray(self.replicated, dtype=np.float64)
        if self.temporal.ndim != 1:
            raise InvalidConfig(f"temporal must be a vector, got {self.temporal.shape}")
        if self.replicated.shape != (3, self.temporal.shape[0]):
            raise InvalidConfig(
                f"replicated must be [3, {self.temporal.shape[0]}], "
                f"got {self.replicated.shape}")
        peak = np.max(np.abs(self.temporal)) if self.temporal.size else 0.0
        if not self.degenerate_flag and abs(peak - 1.0) > 1e-9:
            raise InvalidConfig(f"peak |temporal| must be 1, got {peak}")


@dataclass
class ImportanceMap:
    """Post-processed attribution map ready for thresholding/ranking."""

    values: np.ndarray
    prep: str
    oriented_for: ClassLabel
    constant_flag: bool = False
    case_id: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.prep not in PREPS:
            raise InvalidConfig(f"prep must be one of {PREPS}, got {self.prep!r}")
        if not np.all(np.isfinite(self.values)):
            raise InvalidConfig("importance map contains non-finite values")
        if self.prep in ("positive", "absolute") and np.any(self.values < 0):
            raise InvalidConfig(f"{self.prep} map must be non-negative")
        if self.prep == "scaled" and (np.any(self.values < 0) or np.any(self.values > 1)):
            raise InvalidConfig("scaled map must lie in [0, 1]")


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def bipolar_profile(attribution: ClassAttribution) -> BipolarProfile:
    """Elementwise (abnormal - normal) / 2 across the class axis."""
    values = (attribution.class_slice(1) - attribution.class_slice(0)) / 2.0
    return BipolarProfile(values=values, source_method=attribution.method,
                          case_id=attribution.case_id)


def aggregate_temporal(values: np.ndarray) -> tuple[np.ndarray, bool]:
    """Sum channel profiles per time-step and rescale by the peak |sum|.

    Returns (temporal vector, degenerate flag); an all-zero aggregation
    yields zeros with the flag set instead of an error.
    """
    s = np.asarray(values, dtype=np.float64).sum(axis=0)
    peak = np.max(np.abs(s)) if s.size else 0.0
    if peak == 0.0:
        return np.zeros_like(s), True
    return s / peak, False


def map_to_cine(profile: BipolarProfile) -> MappedProfile:
    """Project a 12-lead bipolar profile onto the trajectory's time axis."""
    if profile.values.shape[0] != 12:
        raise WrongChannelCount(
            f"lead aggregation needs 12 rows, got {profile.values.shape[0]}")
    temporal, degenerate = aggregate_temporal(profile.values)
    return MappedProfile(temporal=temporal,
                         replicated=np.tile(temporal, (3, 1)),
                         degenerate_flag=degenerate,
                         source_method=profile.source_method,
                         case_id=profile.case_id)


def orient_by_diagnosis(values: np.ndarray, diagnosis) -> np.ndarray:
    """Flip the profile sign for normal diagnoses so evidence supporting the
    expert's call is always positive."""
    if diagnosis is None:
        raise MissingDiagnosis("sign orientation requires a diagnosis")
    label = ClassLabel.parse(diagnosis)
    values = np.asarray(values, dtype=np.float64)
    return -values if label is ClassLabel.NORMAL else values.copy()


def post_process(oriented: np.ndarray, prep: str, region: np.ndarray,
                 diagnosis=ClassLabel.ABNORMAL, case_id: str = "") -> ImportanceMap:
    """Turn an oriented profile into a non-negative importance map.

    positive: max(0, x). absolute: |x|. scaled: min-max over the region's
    cells only (values outside the region are clipped into [0, 1]); a
    region-constant input maps to zeros with `constant_flag` set.
    """
    oriented = np.asarray(oriented, dtype=np.float64)
    region = np.asarray(region, dtype=bool)
    if region.shape != oriented.shape:
        raise InvalidConfig(f"region {region.shape} vs profile {oriented.shape}")
    if prep not in PREPS:
        raise InvalidConfig(f"prep must be one of {PREPS}, got {prep!r}")
    if not region.any():
        raise EmptyRegion("post-processing region has no cells")

    constant = False
    if prep == "positive":
        values = np.maximum(0.0, oriented)
    elif prep == "absolute":
        values = np.abs(oriented)
    else:
        lo = oriented[region].min()
        hi = oriented[region].max()
        if hi == lo:
            values = np.zeros_like(oriented)
            constant = True
        else:
            values = np.clip((oriented - lo) / (hi - lo), 0.0, 1.0)
    return ImportanceMap(values=values, prep=prep,
                         oriented_for=ClassLabel.parse(diagnosis),
                         constant_flag=constant, case_id=case_id)
