/** Browser entry point: load a bundle from a file picker (or a ?bundle=
 * URL), render it, and wire the export button to a JSON download. */

import { initApp, App } from "./app.js";

function download(filename: string, text: string): void {
  const blob = new Blob([text], { type: "application/json" });
  const url = URL.createObjectURL(blob);
  const link = document.createElement("a");
  link.href = url;
  link.download = filename;
  link.click();
  URL.revokeObjectURL(url);
}

function mount(rawText: string): void {
  const root = document.getElementById("app");
  if (!root) {
    return;
  }
  const annotator = (document.getElementById("annotator-id") as
    HTMLInputElement | null)?.value ?? "";
  const app: App = initApp(root, rawText, annotator);
  if (app.view) {
    const button = root.querySelector(".export-button");
    button?.addEventListener("click", () => {
      const text = app.exportAnnotationJson();
      if (text !== null) {
        const caseId = JSON.parse(app.exportBundle()).case_id;
        download(`annotation-${caseId}.json`, text);
      }
    });
  }
}

function wirePicker(): void {
  const picker = document.getElementById("bundle-file") as HTMLInputElement | null;
  picker?.addEventListener("change", async () => {
    const file = picker.files?.[0];
    if (file) {
      mount(await file.text());
    }
  });

  const params = new URLSearchParams(window.location.search);
  const bundleUrl = params.get("bundle");
  if (bundleUrl) {
    fetch(bundleUrl).then((r) => r.text()).then(mount);
  }
}

wirePicker();
