"""Run the optimization pool end to end and print the report tables.

The pool sweeps (attribution method x post-processing x representation)
over an annotated cohort, caches each cell by content hash (re-runs are
free), bootstraps BCa intervals per configuration, picks the mean-Dice
winner per representation, and stratifies by diagnosis and model-expert
agreement. A label-permutation test checks that matched (map, mask)
pairs beat randomly re-paired ones.
"""

import tempfile
from pathlib import Path

from cardioxmap import agreement as ag
from cardioxmap import harness as hn
from cardioxmap import model as md
from cardioxmap import signals as sg

gen = sg.GeneratorConfig(noise_sigma=0.05)
cohort = sg.generate_dataset(260, seed=41, config=gen)
train_cases, eval_cases = cohort[:200], cohort[200:240]

model = md.build_model(md.ModelConfig(in_channels=12, stem=(16, 5, 2),
                                      blocks=((16, 3, 2), (32, 3, 1)),
                                      dropout_rate=0.2), seed=41)
report = md.train(model, [(c.record.leads, int(c.record.label))
                          for c in train_cases],
                  seed=41, max_epochs=8, patience=3, lr=1e-3)
print(f"trained {report.epochs_run} epochs, best val loss "
      f"{report.best_val_loss:.4f}\n")

# synthetic "expert" annotations derived from the generator truth windows
annotations = {}
for c in eval_cases:
    seg = [{"start_ms": c.truth.start_ms, "end_ms": c.truth.end_ms}]
    annotations[(c.case_id, "cine")] = ag.ExpertAnnotation(
        case_id=c.case_id, modality="cine", diagnosis=c.record.label,
        leads=["all"], segments=seg)
    annotations[(c.case_id, "ecg12")] = ag.ExpertAnnotation(
        case_id=c.case_id, modality="ecg12", diagnosis=c.record.label,
        leads=["I", "II", "V2", "V5"], segments=seg)

config = hn.PoolConfig(methods=("ig",),
                       preps=("positive", "absolute", "scaled"),
                       representations=("ecg12", "cine_mapped"),
                       bootstrap_B=2000,
                       method_params={"ig": {"steps": 25, "noise_samples": 1}})

with tempfile.TemporaryDirectory() as cache:
    result = hn.run_pool(eval_cases, annotations, {"ecg12": model}, config,
                         cache_dir=cache)
    print(f"pool: {len(result.rows)} cells computed "
          f"({result.computed_cells} fresh, {result.cached_cells} cached), "
          f"{len(result.errors)} errors")

    rerun = hn.run_pool(eval_cases, annotations, {"ecg12": model}, config,
                        cache_dir=cache)
    print(f"re-run: {rerun.computed_cells} fresh, {rerun.cached_cells} cached\n")

cohort_report = hn.build_report(result.rows, config, seed=1)
print(hn.emit_report(cohort_report, "markdown"))

# permutation null for the winning mapped configuration
winner = cohort_report.winners["cine_mapped"]
from cardioxmap import attribution as at
from cardioxmap import crossmodal as cm
import numpy as np

maps, masks = [], []
for c in eval_cases:
    attribution = at.attribute_both_classes(model, c.record.leads, "ig",
                                            case_id=c.case_id, seed=0,
                                            steps=25, noise_samples=1)
    mapped = cm.map_to_cine(cm.bipolar_profile(attribution))
    ann = annotations[(c.case_id, "cine")]
    mask = ag.annotation_to_mask(ann, 500, 400.0)
    oriented = cm.orient_by_diagnosis(mapped.temporal[None, :], ann.diagnosis)
    imp = cm.post_process(oriented, winner["prep"], mask.region(),
                          diagnosis=ann.diagnosis, case_id=c.case_id)
    scaled = ag.rescale_for_threshold(imp, mask.region())
    maps.append(scaled[mask.region()])
    masks.append(mask.cells[mask.region()])

observed, p_value, null_means = hn.label_permutation_test(maps, masks,
                                                          n_permutations=1000,
                                                          seed=0)
print(f"winning mapped config ({winner['method']}, {winner['prep']}): "
      f"mean Dice {observed:.3f} vs permuted null {null_means.mean():.3f} "
      f"(p = {p_value:.4f})")
