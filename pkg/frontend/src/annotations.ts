/** Annotation draft state: segments entered by dragging/clicking on lead
 * plots or the trajectory timeline, diagnosis selection, and export to the
 * annotation JSON the toolkit imports.
 *
 * Drags snap to 5 ms. Segments below the regional minimum (25 ms inside
 * the 0-150 ms depolarization region, 50 ms after it) are accepted with a
 * warning; the widening happens toolkit-side on import. The diagnosis
 * selector deliberately uses "physiological"/"pathological" wording so a
 * blind session's DOM never contains the label vocabulary; export maps
 * them onto the schema's Normal/Abnormal values.
 */

import { AnnotationExport, SegmentEntry } from "./types.js";

export const SNAP_MS = 5;
export const DEPOLARIZATION_END_MS = 150;
export const MIN_SEGMENT_EARLY_MS = 25;
export const MIN_SEGMENT_LATE_MS = 50;

export type DiagnosisChoice = "physiological" | "pathological" | null;

export interface DraftSegment {
  id: number;
  modality: "ecg12" | "cine";
  lead: string | null;
  entry: SegmentEntry;
  belowMinimum: boolean;
}

export function snapMs(raw: number): number {
  return Math.round(raw / SNAP_MS) * SNAP_MS;
}

export function regionalMinimumMs(startMs: number, endMs: number): number {
  const center = (startMs + endMs) / 2;
  return center < DEPOLARIZATION_END_MS ? MIN_SEGMENT_EARLY_MS : MIN_SEGMENT_LATE_MS;
}

export class AnnotationDraft {
  readonly caseId: string;
  readonly windowMs: number;
  annotatorId: string;
  diagnosis: DiagnosisChoice = null;
  freeText = "";
  private segments: DraftSegment[] = [];
  private nextId = 1;

  constructor(caseId: string, windowMs: number, annotatorId = "") {
    this.caseId = caseId;
    this.windowMs = windowMs;
    this.annotatorId = annotatorId;
  }

  list(): readonly DraftSegment[] {
    return this.segments;
  }

  /** Drag gesture: snapped, clipped interval on one lead (or the timeline). */
  addDrag(modality: "ecg12" | "cine", lead: string | null,
          rawStartMs: number, rawEndMs: number): DraftSegment | null {
    let start = snapMs(Math.min(rawStartMs, rawEndMs));
    let end = snapMs(Math.max(rawStartMs, rawEndMs));
    start = Math.max(0, start);
    end = Math.min(this.windowMs, end);
    if (end <= start) {
      return null;
    }
    const segment: DraftSegment = {
      id: this.nextId++,
      modality,
      lead: modality === "ecg12" ? lead : null,
      entry: lead && modality === "ecg12"
        ? { start_ms: start, end_ms: end, lead }
        : { start_ms: start, end_ms: end },
      belowMinimum: end - start < regionalMinimumMs(start, end),
    };
    this.segments.push(segment);
    return segment;
  }

  /** Click gesture: snapped point annotation (expanded toolkit-side). */
  addClick(modality: "ecg12" | "cine", lead: string | null,
           rawMs: number): DraftSegment | null {
    const point = snapMs(rawMs);
    if (point < 0 || point > this.windowMs) {
      return null;
    }
    const segment: DraftSegment = {
      id: this.nextId++,
      modality,
      lead: modality === "ecg12" ? lead : null,
      entry: lead && modality === "ecg12"
        ? { point_ms: point, lead }
        : { point_ms: point },
      belowMinimum: false,
    };
    this.segments.push(segment);
    return segment;
  }

  /** Delete gesture: removes exactly the one identified segment. */
  remove(id: number): boolean {
    const before = this.segments.length;
    this.segments = this.segments.filter((s) => s.id !== id);
    return this.segments.length === before - 1;
  }

  canExport(): boolean {
    return this.diagnosis !== null && this.segments.length > 0;
  }

  /** One annotation document per modality that has segments. */
  exportAnnotations(): AnnotationExport[] {
    if (this.diagnosis === null) {
      throw new Error("diagnosis required before export");
    }
    const diagnosis = this.diagnosis === "pathological" ? "Abnormal" : "Normal";
    const out: AnnotationExport[] = [];
    for (const modality of ["ecg12", "cine"] as const) {
      const segs = this.segments.filter((s) => s.modality === modality);
      if (!segs.length) {
        continue;
      }
      const leads = modality === "ecg12"
        ? [...new Set(segs.map((s) => s.lead as string))].sort()
        : ["all"];
      out.push({
        case_id: this.caseId,
        annotator_id: this.annotatorId,
        modality,
        diagnosis,
        leads,
        segments: segs.map((s) => ({ ...s.entry })),
        free_text: this.freeText,
      });
    }
    return out;
  }
}
