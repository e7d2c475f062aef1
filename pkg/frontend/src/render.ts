/** DOM construction and canvas painting for one case bundle.
 *
 * Layout: a header strip, the 12-lead grid on a calibrated background
 * (0.04 s / 0.1 mV minor grid), the rotatable 3D trajectory panel, and the
 * annotation sidebar (diagnosis, segment list, free text, export). All
 * canvas painting is skipped when a 2D context is unavailable (headless
 * test DOMs), leaving the DOM structure intact.
 */

import { AnnotationDraft, DraftSegment, regionalMinimumMs } from "./annotations.js";
import { divergingColor, normalizeOverlayValue, toCss } from "./colors.js";
import { Camera, defaultCamera, normalizePath, projectPath, Vec3 } from "./geometry.js";
import { CaseBundle, isPoint } from "./types.js";

const LEAD_CANVAS_W = 620;
const LEAD_CANVAS_H = 64;
const CINE_CANVAS_W = 380;
const CINE_CANVAS_H = 340;
const MINOR_GRID_S = 0.04;
const MINOR_GRID_MV = 0.1;
const DRAG_AS_CLICK_MS = 4;

export interface CaseView {
  draft: AnnotationDraft;
  root: HTMLElement;
  setCursor(timeMs: number | null): void;
  repaint(): void;
  exportAnnotationJson(): string | null;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K, className?: string, text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) {
    node.className = className;
  }
  if (text !== undefined) {
    node.textContent = text;
  }
  return node;
}

function leadRange(values: number[]): [number, number] {
  let lo = Math.min(...values);
  let hi = Math.max(...values);
  if (hi - lo < 1e-9) {
    lo -= 0.5;
    hi += 0.5;
  }
  const pad = 0.15 * (hi - lo);
  return [lo - pad, hi + pad];
}

export function renderCase(root: HTMLElement, bundle: CaseBundle,
                           annotatorId = ""): CaseView {
  root.textContent = "";
  const draft = new AnnotationDraft(bundle.case_id, bundle.window_ms, annotatorId);
  let cursorMs: number | null = null;
  const camera: Camera = defaultCamera();
  const leadCanvases: HTMLCanvasElement[] = [];

  // -- header --------------------------------------------------------------
  const header = el("div", "header");
  header.appendChild(el("span", "case-id", `Case ${bundle.case_id}`));
  header.appendChild(el("span", "axis-span",
    `time axis 0–${bundle.window_ms} ms at ${bundle.sample_rate_hz} Hz`));
  if (bundle.blind) {
    header.appendChild(el("span", "blind-badge", "blind review"));
  } else {
    if (bundle.label !== undefined) {
      header.appendChild(el("span", "truth-label",
        `label: ${bundle.label === 1 ? "Abnormal" : "Normal"}`));
    }
    if (bundle.prediction !== undefined) {
      header.appendChild(el("span", "model-prediction",
        `prediction: ${bundle.prediction === 1 ? "Abnormal" : "Normal"}`));
    }
  }
  root.appendChild(header);

  const columns = el("div", "columns");
  root.appendChild(columns);
  const leadPanel = el("div", "lead-panel");
  columns.appendChild(leadPanel);
  const sidePanel = el("div", "side-panel");
  columns.appendChild(sidePanel);

  leadPanel.appendChild(el("div", "protocol-hint",
    "minimum window 25 ms in 0–150 ms, 50 ms after; points expand ±10 ms"));

  // -- lead grid -------------------------------------------------------------
  const pxToMs = (canvas: HTMLCanvasElement, clientX: number): number => {
    const rect = canvas.getBoundingClientRect();
    const width = rect.width || canvas.width;
    const x = clientX - rect.left;
    return Math.max(0, Math.min(bundle.window_ms, (x / width) * bundle.window_ms));
  };

  bundle.lead_names.forEach((name, leadIndex) => {
    const row = el("div", "lead-row");
    row.appendChild(el("span", "lead-name", name));
    const canvas = el("canvas", "lead-canvas") as HTMLCanvasElement;
    canvas.width = LEAD_CANVAS_W;
    canvas.height = LEAD_CANVAS_H;
    canvas.dataset.lead = name;
    row.appendChild(canvas);
    leadPanel.appendChild(row);
    leadCanvases.push(canvas);

    let dragStartMs: number | null = null;
    canvas.addEventListener("pointerdown", (ev) => {
      dragStartMs = pxToMs(canvas, (ev as PointerEvent).clientX);
    });
    canvas.addEventListener("pointerup", (ev) => {
      if (dragStartMs === null) {
        return;
      }
      const endMs = pxToMs(canvas, (ev as PointerEvent).clientX);
      if (Math.abs(endMs - dragStartMs) <= DRAG_AS_CLICK_MS) {
        draft.addClick("ecg12", name, endMs);
      } else {
        draft.addDrag("ecg12", name, dragStartMs, endMs);
      }
      dragStartMs = null;
      refreshSegmentList();
      repaint();
    });
    canvas.addEventListener("pointermove", (ev) => {
      setCursor(pxToMs(canvas, (ev as PointerEvent).clientX));
    });
    canvas.addEventListener("pointerleave", () => setCursor(null));
  });

  // -- trajectory panel -------------------------------------------------------
  let cineCanvas: HTMLCanvasElement | null = null;
  let cinePoints: Vec3[] = [];
  if (bundle.cine) {
    const panel = el("div", "cine-panel");
    panel.appendChild(el("div", "cine-title", "3D trajectory (drag to orbit)"));
    cineCanvas = el("canvas", "cine-canvas") as HTMLCanvasElement;
    cineCanvas.width = CINE_CANVAS_W;
    cineCanvas.height = CINE_CANVAS_H;
    panel.appendChild(cineCanvas);
    const controls = el("div", "cine-controls");
    const zoomIn = el("button", "zoom-in", "+");
    const zoomOut = el("button", "zoom-out", "−");
    zoomIn.addEventListener("click", () => {
      camera.zoom = Math.min(4, camera.zoom * 1.25);
      repaint();
    });
    zoomOut.addEventListener("click", () => {
      camera.zoom = Math.max(0.25, camera.zoom / 1.25);
      repaint();
    });
    controls.appendChild(zoomIn);
    controls.appendChild(zoomOut);
    panel.appendChild(controls);
    sidePanel.appendChild(panel);
    cinePoints = normalizePath(bundle.cine);

    let orbit: [number, number] | null = null;
    cineCanvas.addEventListener("pointerdown", (ev) => {
      orbit = [(ev as PointerEvent).clientX, (ev as PointerEvent).clientY];
    });
    cineCanvas.addEventListener("pointermove", (ev) => {
      if (!orbit) {
        return;
      }
      const e = ev as PointerEvent;
      camera.yawRad += (e.clientX - orbit[0]) * 0.01;
      camera.pitchRad += (e.clientY - orbit[1]) * 0.01;
      orbit = [e.clientX, e.clientY];
      repaint();
    });
    cineCanvas.addEventListener("pointerup", () => {
      orbit = null;
    });
  }

  // -- annotation sidebar ------------------------------------------------------
  const form = el("div", "annotation-form");
  sidePanel.appendChild(form);
  form.appendChild(el("div", "form-title", "Reviewer assessment"));

  const diagnosisBox = el("div", "diagnosis-box");
  for (const [value, text] of [["physiological", "physiological"],
                               ["pathological", "pathological"]] as const) {
    const label = el("label", "diagnosis-option");
    const radio = el("input") as HTMLInputElement;
    radio.type = "radio";
    radio.name = "diagnosis";
    radio.value = value;
    radio.addEventListener("change", () => {
      draft.diagnosis = value;
      banner.textContent = "";
      exportButton.disabled = !draft.canExport();
    });
    label.appendChild(radio);
    label.appendChild(document.createTextNode(` ${text}`));
    diagnosisBox.appendChild(label);
  }
  form.appendChild(diagnosisBox);

  const freeText = el("textarea", "free-text") as HTMLTextAreaElement;
  freeText.placeholder = "notes on salient segments";
  freeText.addEventListener("input", () => {
    draft.freeText = freeText.value;
  });
  form.appendChild(freeText);

  const segmentList = el("ul", "segment-list");
  form.appendChild(segmentList);

  const banner = el("div", "export-banner");
  form.appendChild(banner);
  const exportButton = el("button", "export-button", "export annotation") as
    HTMLButtonElement;
  exportButton.disabled = true;
  form.appendChild(exportButton);

  function refreshSegmentList(): void {
    segmentList.textContent = "";
    for (const segment of draft.list()) {
      const item = el("li", "segment-item");
      item.appendChild(el("span", "segment-text", describeSegment(segment)));
      if (segment.belowMinimum) {
        item.appendChild(el("span", "segment-warning",
          ` below ${regionalMinimumMs(
            (segment.entry as { start_ms: number }).start_ms,
            (segment.entry as { end_ms: number }).end_ms)} ms minimum;` +
          " widened on import"));
      }
      const remove = el("button", "segment-delete", "×");
      remove.addEventListener("click", () => {
        draft.remove(segment.id);
        refreshSegmentList();
        repaint();
      });
      item.appendChild(remove);
      segmentList.appendChild(item);
    }
    exportButton.disabled = !draft.canExport();
  }

  function exportAnnotationJson(): string | null {
    if (draft.diagnosis === null) {
      banner.textContent = "diagnosis required before export";
      return null;
    }
    banner.textContent = "";
    return JSON.stringify(draft.exportAnnotations(), null, 2);
  }

  // -- painting ------------------------------------------------------------
  function paintLead(canvas: HTMLCanvasElement, leadIndex: number): void {
    const ctx = canvas.getContext && canvas.getContext("2d");
    if (!ctx) {
      return;
    }
    const w = canvas.width;
    const h = canvas.height;
    const values = bundle.ecg[leadIndex];
    const [lo, hi] = leadRange(values);
    ctx.clearRect(0, 0, w, h);

    const overlay = bundle.overlays?.ecg12;
    if (overlay) {
      const row = overlay.values[leadIndex];
      for (let t = 0; t < row.length; t++) {
        const v = normalizeOverlayValue(row[t], overlay.scale.min, overlay.scale.max);
        ctx.fillStyle = toCss(divergingColor(v), 0.5);
        const x0 = (t / row.length) * w;
        ctx.fillRect(x0, 0, w / row.length + 1, h);
      }
    }

    ctx.strokeStyle = "#e8c8c8";
    ctx.lineWidth = 0.5;
    const msPerPx = bundle.window_ms / w;
    for (let s = 0; s * MINOR_GRID_S * 1000 < bundle.window_ms; s++) {
      const x = (s * MINOR_GRID_S * 1000) / msPerPx;
      ctx.beginPath();
      ctx.moveTo(x, 0);
      ctx.lineTo(x, h);
      ctx.stroke();
    }
    const mvPerPx = (hi - lo) / h;
    for (let mv = Math.ceil(lo / MINOR_GRID_MV) * MINOR_GRID_MV; mv < hi;
         mv += MINOR_GRID_MV) {
      const y = h - (mv - lo) / mvPerPx;
      ctx.beginPath();
      ctx.moveTo(0, y);
      ctx.lineTo(w, y);
      ctx.stroke();
    }

    // annotated spans on this lead
    const leadName = bundle.lead_names[leadIndex];
    ctx.fillStyle = "rgba(120, 120, 120, 0.25)";
    for (const segment of draft.list()) {
      if (segment.lead !== leadName) {
        continue;
      }
      if (isPoint(segment.entry)) {
        const x = (segment.entry.point_ms / bundle.window_ms) * w;
        ctx.fillRect(x - 2, 0, 4, h);
      } else {
        const x0 = (segment.entry.start_ms / bundle.window_ms) * w;
        const x1 = (segment.entry.end_ms / bundle.window_ms) * w;
        ctx.fillRect(x0, 0, x1 - x0, h);
      }
    }

    ctx.strokeStyle = "#202020";
    ctx.lineWidth = 1.2;
    ctx.beginPath();
    for (let t = 0; t < values.length; t++) {
      const x = (t / (values.length - 1)) * w;
      const y = h - (values[t] - lo) / mvPerPx;
      if (t === 0) {
        ctx.moveTo(x, y);
      } else {
        ctx.lineTo(x, y);
      }
    }
    ctx.stroke();

    if (cursorMs !== null) {
      ctx.strokeStyle = "#2255cc";
      ctx.beginPath();
      const x = (cursorMs / bundle.window_ms) * w;
      ctx.moveTo(x, 0);
      ctx.lineTo(x, h);
      ctx.stroke();
    }
  }

  function paintCine(): void {
    if (!cineCanvas || !bundle.cine) {
      return;
    }
    const ctx = cineCanvas.getContext && cineCanvas.getContext("2d");
    if (!ctx) {
      return;
    }
    const w = cineCanvas.width;
    const h = cineCanvas.height;
    ctx.clearRect(0, 0, w, h);
    const projected = projectPath(cinePoints, camera, w, h);
    const overlay = bundle.overlays?.cine;
    for (let t = 1; t < projected.length; t++) {
      let color = "#404040";
      if (overlay) {
        const v = normalizeOverlayValue(overlay.values[t], overlay.scale.min,
                                        overlay.scale.max);
        color = toCss(divergingColor(v));
      }
      ctx.strokeStyle = color;
      ctx.lineWidth = 2;
      ctx.beginPath();
      ctx.moveTo(projected[t - 1][0], projected[t - 1][1]);
      ctx.lineTo(projected[t][0], projected[t][1]);
      ctx.stroke();
    }
    if (cursorMs !== null) {
      const t = Math.max(0, Math.min(projected.length - 1,
        Math.round((cursorMs / bundle.window_ms) * (projected.length - 1))));
      ctx.fillStyle = "#2255cc";
      ctx.beginPath();
      ctx.arc(projected[t][0], projected[t][1], 5, 0, Math.PI * 2);
      ctx.fill();
    }
  }

  function repaint(): void {
    leadCanvases.forEach((canvas, i) => paintLead(canvas, i));
    paintCine();
  }

  function setCursor(timeMs: number | null): void {
    cursorMs = timeMs;
    repaint();
  }

  refreshSegmentList();
  repaint();

  return {
    draft,
    root,
    setCursor,
    repaint,
    exportAnnotationJson,
  };
}

function describeSegment(segment: DraftSegment): string {
  const where = segment.modality === "ecg12" ? `lead ${segment.lead}` : "trajectory";
  if (isPoint(segment.entry)) {
    return `${where}: point ${segment.entry.point_ms} ms`;
  }
  return `${where}: ${segment.entry.start_ms}–${segment.entry.end_ms} ms`;
}
