// @vitest-environment jsdom
/** Scripted annotation session -> exported JSON -> the Python toolkit's
 * import-annotations + mask rasterization; the produced cell sets must
 * match the protocol arithmetic exactly. Requires the cardioxmap package
 * on python3's path (editable install from the repository root). */

import { execFileSync } from "node:child_process";
import { mkdtempSync, readFileSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { describe, expect, it } from "vitest";

import { initApp } from "../src/app.js";

const FIXTURES = join(__dirname, "..", "fixtures");
const blindText = readFileSync(join(FIXTURES, "bundle_blind.json"), "utf-8");

const SAMPLE_RATE = 500;
const WINDOW_MS = 400;

function msToSample(ms: number): number {
  return Math.round((ms * SAMPLE_RATE) / 1000);
}

function range(lo: number, hi: number): number[] {
  return Array.from({ length: hi - lo }, (_, i) => lo + i);
}

describe("annotation round trip through the toolkit", () => {
  it("reproduces the expected mask cells exactly", () => {
    const root = document.createElement("div");
    document.body.appendChild(root);
    const app = initApp(root, blindText, "rev-7");
    const view = app.view!;
    const leadCanvases = root.querySelectorAll(".lead-canvas");
    const msToPx = (ms: number) => (ms / WINDOW_MS) * 620;

    const drag = (canvas: Element, startMs: number, endMs: number) => {
      canvas.dispatchEvent(new MouseEvent("pointerdown",
        { clientX: msToPx(startMs), bubbles: true }));
      canvas.dispatchEvent(new MouseEvent("pointerup",
        { clientX: msToPx(endMs), bubbles: true }));
    };

    // scripted session: two interval drags, one click, one trajectory drag
    drag(leadCanvases[2], 40, 90);    // lead III
    drag(leadCanvases[1], 160, 240);  // lead II
    drag(leadCanvases[7], 200, 200);  // collapses to a click on V2
    view.draft.addDrag("cine", null, 100, 180);

    const radio = root.querySelector(
      'input[name="diagnosis"][value="pathological"]') as HTMLInputElement;
    radio.checked = true;
    radio.dispatchEvent(new Event("change", { bubbles: true }));

    const exported = app.exportAnnotationJson();
    expect(exported).not.toBeNull();
    const docs = JSON.parse(exported!);
    expect(docs.map((d: { modality: string }) => d.modality).sort())
      .toEqual(["cine", "ecg12"]);

    const dir = mkdtempSync(join(tmpdir(), "cardioxmap-ui-"));
    const annPath = join(dir, "annotation.json");
    writeFileSync(annPath, exported!);

    const stdout = execFileSync("python3", [
      "-m", "cardioxmap.cli", "import-annotations",
      "--in", annPath, "--emit-masks",
      "--sample-rate-hz", String(SAMPLE_RATE),
      "--window-ms", String(WINDOW_MS),
    ], { encoding: "utf-8" });
    const summary = JSON.parse(stdout);
    expect(summary.count).toBe(2);

    const masks: Record<string, Set<string>> = {};
    for (const mask of summary.masks) {
      masks[mask.modality] = new Set(
        mask.cells.map(([row, t]: [number, number]) => `${row}:${t}`));
    }

    // expected cells from the protocol arithmetic (no widening applies:
    // intervals meet the regional minima, points expand +-10 ms verbatim)
    const expectedEcg = new Set<string>();
    for (const t of range(msToSample(40), msToSample(90))) {
      expectedEcg.add(`2:${t}`);   // lead III
    }
    for (const t of range(msToSample(160), msToSample(240))) {
      expectedEcg.add(`1:${t}`);   // lead II
    }
    for (const t of range(msToSample(190), msToSample(210))) {
      expectedEcg.add(`7:${t}`);   // V2 point, +-10 ms
    }
    const expectedCine = new Set<string>();
    for (const t of range(msToSample(100), msToSample(180))) {
      expectedCine.add(`0:${t}`);
    }

    expect(masks.ecg12).toEqual(expectedEcg);
    expect(masks.cine).toEqual(expectedCine);
  });
});
