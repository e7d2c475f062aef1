/** Composition root: parse and validate a bundle document, render it, and
 * expose the export paths. The raw input text is retained verbatim so the
 * bundle can be re-exported byte-for-byte (rendering is read-only). */

import { renderCase, CaseView } from "./render.js";
import { bundleProblem, CaseBundle } from "./types.js";

export interface App {
  view: CaseView | null;
  error: string | null;
  /** Annotation JSON for download, or null when no diagnosis is chosen. */
  exportAnnotationJson(): string | null;
  /** The loaded bundle document, byte-for-byte as it arrived. */
  exportBundle(): string;
}

export function initApp(root: HTMLElement, rawBundleText: string,
                        annotatorId = ""): App {
  let parsed: unknown;
  try {
    parsed = JSON.parse(rawBundleText);
  } catch {
    return errorApp(root, rawBundleText, "bundle (not valid JSON)");
  }
  const problem = bundleProblem(parsed);
  if (problem !== null) {
    return errorApp(root, rawBundleText, problem);
  }
  const view = renderCase(root, parsed as CaseBundle, annotatorId);
  return {
    view,
    error: null,
    exportAnnotationJson: () => view.exportAnnotationJson(),
    exportBundle: () => rawBundleText,
  };
}

function errorApp(root: HTMLElement, rawText: string, field: string): App {
  root.textContent = "";
  const screen = document.createElement("div");
  screen.className = "error-screen";
  screen.textContent = `malformed bundle: problem with field "${field}"`;
  root.appendChild(screen);
  return {
    view: null,
    error: field,
    exportAnnotationJson: () => null,
    exportBundle: () => rawText,
  };
}
