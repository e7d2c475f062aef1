/** Data contracts shared between the viewer and the Python toolkit. */

export interface OverlayScale {
  min: number;
  max: number;
}

export interface EcgOverlay {
  values: number[][];
  scale: OverlayScale;
  method?: string;
}

export interface CineOverlay {
  values: number[];
  scale: OverlayScale;
  method?: string;
  degenerate?: boolean;
}

/** Mirror of the toolkit's case-bundle JSON document. */
export interface CaseBundle {
  case_id: string;
  sample_rate_hz: number;
  window_ms: number;
  lead_names: string[];
  ecg: number[][];
  cine?: number[][];
  blind: boolean;
  label?: number;
  prediction?: number;
  overlays?: { ecg12?: EcgOverlay; cine?: CineOverlay };
}

export type IntervalSegment = { start_ms: number; end_ms: number; lead?: string };
export type PointSegment = { point_ms: number; lead?: string };
export type SegmentEntry = IntervalSegment | PointSegment;

/** Annotation document consumed by the toolkit's import-annotations. */
export interface AnnotationExport {
  case_id: string;
  annotator_id: string;
  modality: "ecg12" | "cine";
  diagnosis: "Normal" | "Abnormal";
  leads: string[];
  segments: SegmentEntry[];
  free_text: string;
}

const REQUIRED_BUNDLE_FIELDS = [
  "case_id",
  "sample_rate_hz",
  "window_ms",
  "lead_names",
  "ecg",
  "blind",
] as const;

/** Returns the name of the first missing/invalid field, or null if valid. */
export function bundleProblem(obj: unknown): string | null {
  if (typeof obj !== "object" || obj === null) {
    return "bundle";
  }
  const record = obj as Record<string, unknown>;
  for (const field of REQUIRED_BUNDLE_FIELDS) {
    if (!(field in record)) {
      return field;
    }
  }
  const ecg = record.ecg;
  if (!Array.isArray(ecg) || ecg.length !== 12) {
    return "ecg";
  }
  const cine = record.cine;
  if (cine !== undefined && (!Array.isArray(cine) || cine.length !== 3)) {
    return "cine";
  }
  return null;
}

export function isPoint(seg: SegmentEntry): seg is PointSegment {
  return "point_ms" in seg;
}
