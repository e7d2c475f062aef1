"""Command-line entry points.

Subcommands: train, attribute, map, pool, report, export-ui,
import-annotations. Exit codes: 0 on success, 1 on any hard error, 2 on
partial completion (pool cells failed; details go to stderr).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import agreement as ag
from . import attribution as at
from . import crossmodal as cm
from . import harness as hn
from . import model as md
from . import signals as sg
from .errors import CardioXMapError, SchemaError


def _load_config_json(text_or_path: str | None) -> dict:
    if not text_or_path:
        return {}
    candidate = Path(text_or_path)
    if candidate.exists():
        return json.loads(candidate.read_text(encoding="utf-8"))
    return json.loads(text_or_path)


def _samples_for_modality(cases: list[sg.Case], modality: str):
    samples = []
    for case in cases:
        if modality == "cine":
            if case.cine is None:
                raise SchemaError("cine")
            samples.append((case.cine.path, int(case.record.label)))
        else:
            samples.append((case.record.leads, int(case.record.label)))
    return samples


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_train(args) -> int:
    cases = sg.load_dataset(args.data, window_ms=args.window_ms)
    triples = [(c.case_id, c.record.patient_id, int(c.record.label)) for c in cases]
    split = sg.stratified_split(triples, seed=args.seed)
    by_id = {c.case_id: c for c in cases}

    config_obj = _load_config_json(args.config)
    train_opts = {key: config_obj.pop(key) for key in
                  ("lr", "batch_size", "max_epochs", "patience") if key in config_obj}
    in_channels = 3 if args.modality == "cine" else 12
    config_obj.setdefault("in_channels", in_channels)
    model_config = md.ModelConfig.from_dict({**md.ModelConfig().to_dict(),
                                             **config_obj})

    train_cases = [by_id[cid] for cid in split.train]
    test_cases = [by_id[cid] for cid in split.test]
    model = md.build_model(model_config, seed=args.seed)
    report = md.train(model, _samples_for_modality(train_cases, args.modality),
                      seed=args.seed,
                      test_set=_samples_for_modality(test_cases, args.modality),
                      **train_opts)
    md.save_checkpoint(model, args.out_checkpoint)
    print(json.dumps(report.to_dict(), sort_keys=True))
    return 0


def _method_kwargs(method: str, params: dict, baselines_path: str | None):
    kwargs = dict(params)
    if baselines_path:
        baseline_cases = sg.load_dataset(baselines_path)
        records = [c.record.leads for c in baseline_cases]
        baseline_set = at.BaselineSet(
            records=records, case_ids=[c.case_id for c in baseline_cases])
        if method == "gradshap":
            kwargs["baselines"] = baseline_set
        elif method == "ig" and kwargs.pop("baseline", "zeros") == "mean":
            kwargs["baseline"] = baseline_set.mean()
        elif method in ("kernelshap", "lime"):
            kwargs.setdefault("background", baseline_set.mean())
    return kwargs


def cmd_attribute(args) -> int:
    model = md.load_checkpoint(args.checkpoint)
    cases = sg.load_dataset(args.data)
    params = _load_config_json(args.params)
    kwargs = _method_kwargs(args.method, params, args.baselines)

    with Path(args.out).open("w", encoding="utf-8") as fh:
        for case in cases:
            x = (case.cine.path if model.config.in_channels == 3
                 else case.record.leads)
            result = at.attribute_both_classes(model, x, args.method,
                                               case_id=case.case_id,
                                               seed=args.seed, **kwargs)
            fh.write(json.dumps({
                "case_id": result.case_id,
                "method": result.method,
                "params": result.params,
                "values": result.values.tolist(),
            }, sort_keys=True))
            fh.write("\n")
    return 0


def cmd_map(args) -> int:
    diagnoses = _load_config_json(args.diagnoses)
    rows_out = []
    with Path(args.attributions).open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            attribution = at.ClassAttribution(case_id=obj["case_id"],
                                              values=np.asarray(obj["values"]),
                                              method=obj["method"],
                                              params=obj.get("params", {}))
            profile = cm.bipolar_profile(attribution)
            mapped = cm.map_to_cine(profile)
            diagnosis = diagnoses.get(obj["case_id"])
            oriented = cm.orient_by_diagnosis(mapped.temporal[None, :], diagnosis)
            region = np.ones_like(oriented, dtype=bool)
            importance = cm.post_process(oriented, args.prep, region,
                                         diagnosis=diagnosis,
                                         case_id=obj["case_id"])
            rows_out.append({
                "case_id": obj["case_id"],
                "method": obj["method"],
                "prep": args.prep,
                "temporal": importance.values[0].tolist(),
                "degenerate": mapped.degenerate_flag,
                "constant": importance.constant_flag,
            })
    with Path(args.out).open("w", encoding="utf-8") as fh:
        for row in rows_out:
            fh.write(json.dumps(row, sort_keys=True))
            fh.write("\n")
    return 0


def cmd_pool(args) -> int:
    spec = _load_config_json(args.config)
    for key in ("data", "annotations", "checkpoints"):
        if key not in spec:
            raise SchemaError(key)
    cases = sg.load_dataset(spec["data"], window_ms=spec.get("window_ms"))
    annotations = {}
    for ann in hn.import_annotations(spec["annotations"]):
        annotations[(ann.case_id, ann.modality)] = ann
    checkpoints = {key: md.load_checkpoint(path)
                   for key, path in spec["checkpoints"].items()}
    config = hn.PoolConfig.from_dict(spec)
    result = hn.run_pool(cases, annotations, checkpoints, config,
                         cache_dir=spec.get("cache_dir"))
    hn.save_results(result, args.out)
    print(json.dumps({"rows": len(result.rows), "computed": result.computed_cells,
                      "cached": result.cached_cells,
                      "errors": len(result.errors)}, sort_keys=True))
    if result.errors:
        for err in result.errors:
            print(json.dumps(err, sort_keys=True), file=sys.stderr)
        return 2
    return 0


def cmd_report(args) -> int:
    rows = hn.load_results(args.results)
    config = hn.PoolConfig(bootstrap_B=args.bootstrap_b, alpha=args.alpha)
    report = hn.build_report(rows, config, seed=args.seed)
    fmt = "markdown" if args.format == "md" else args.format
    print(hn.emit_report(report, fmt))
    return 0


def cmd_export_ui(args) -> int:
    cases = sg.load_dataset(args.data)
    matches = [c for c in cases if c.case_id == args.case]
    if not matches:
        raise SchemaError(f"case {args.case}")
    case = matches[0]

    attribution = None
    if args.attributions:
        with Path(args.attributions).open("r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                obj = json.loads(line)
                if obj["case_id"] == args.case:
                    attribution = at.ClassAttribution(
                        case_id=obj["case_id"], values=np.asarray(obj["values"]),
                        method=obj["method"], params=obj.get("params", {}))
                    break
    mapped = None
    if attribution is not None and attribution.values.shape[0] == 12:
        mapped = cm.map_to_cine(cm.bipolar_profile(attribution))

    prediction = None
    if args.checkpoint:
        model = md.load_checkpoint(args.checkpoint)
        probs = md.predict_proba(model, case.record)
        prediction = int(probs[1] > probs[0])

    bundle = hn.export_case_bundle(case, attributions=attribution, mapped=mapped,
                                   prediction=prediction, blind=args.blind)
    Path(args.out).write_text(json.dumps(bundle, sort_keys=True) + "\n",
                              encoding="utf-8")
    return 0


def cmd_import_annotations(args) -> int:
    annotations = hn.import_annotations(args.infile)
    summary = {"count": len(annotations),
               "cases": sorted({a.case_id for a in annotations})}
    if args.emit_masks:
        masks = []
        for ann in annotations:
            mask = ag.annotation_to_mask(ann, args.sample_rate_hz, args.window_ms)
            masks.append({
                "case_id": ann.case_id,
                "modality": ann.modality,
                "selected_leads": mask.selected_leads,
                "cells": [[int(r), int(t)] for r, t in zip(*np.nonzero(mask.cells))],
            })
        summary["masks"] = masks
    if args.out:
        Path(args.out).write_text(
            json.dumps([a.to_dict() for a in annotations], sort_keys=True) + "\n",
            encoding="utf-8")
    print(json.dumps(summary, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cardioxmap",
        description="Cross-modal attribution toolkit for multi-lead cardiac "
                    "time-series")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a classifier on an NDJSON dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--modality", choices=("ecg", "cine"), default="ecg")
    p.add_argument("--config", default=None,
                   help="JSON string or file with model/training settings")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-checkpoint", required=True)
    p.add_argument("--window-ms", type=float, default=None)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("attribute", help="compute per-class attributions")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--method", choices=at.METHOD_NAMES, required=True)
    p.add_argument("--params", default=None, help="JSON string or file")
    p.add_argument("--baselines", default=None,
                   help="NDJSON dataset used as the reference distribution")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_attribute)

    p = sub.add_parser("map", help="project 12-lead attributions onto the "
                                   "trajectory time axis")
    p.add_argument("--attributions", required=True)
    p.add_argument("--diagnoses", required=True,
                   help="JSON map case_id -> diagnosis")
    p.add_argument("--prep", choices=cm.PREPS, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_map)

    p = sub.add_parser("pool", help="run the optimization pool")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_pool)

    p = sub.add_parser("report", help="aggregate pool results into tables")
    p.add_argument("--results", required=True)
    p.add_argument("--format", choices=("md", "markdown", "json"), default="md")
    p.add_argument("--bootstrap-b", type=int, default=2000)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_report)

    p = sub.add_parser("export-ui", help="write a case bundle for the viewer")
    p.add_argument("--data", required=True)
    p.add_argument("--case", required=True)
    p.add_argument("--attributions", default=None)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--blind", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_export_ui)

    p = sub.add_parser("import-annotations", help="validate annotation JSON")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--emit-masks", action="store_true")
    p.add_argument("--sample-rate-hz", type=int, default=500)
    p.add_argument("--window-ms", type=float, default=400.0)
    p.set_defaults(fn=cmd_import_annotations)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (CardioXMapError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
