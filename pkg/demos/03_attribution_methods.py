"""Run the four attribution methods on one case and compare their shapes.

Gradient methods (integrated gradients, gradient SHAP) need the model's
input gradients; perturbation methods (kernel SHAP, LIME) only query its
probabilities. Every method yields a [C, T, 2] tensor: one slice per
class, computed against the softmax probability output.
"""

import numpy as np

from cardioxmap import attribution as at
from cardioxmap import model as md
from cardioxmap import signals as sg

gen = sg.GeneratorConfig(noise_sigma=0.05)
cohort = sg.generate_dataset(200, seed=21, config=gen)
samples = [(c.record.leads, int(c.record.label)) for c in cohort[:160]]

model = md.build_model(md.ModelConfig(in_channels=12, stem=(16, 5, 2),
                                      blocks=((16, 3, 2), (32, 3, 1)),
                                      dropout_rate=0.2), seed=21)
md.train(model, samples, seed=21, max_epochs=12, patience=4, lr=3e-3)

# pick a held-out abnormal case the model is confident about
held_out = [c for c in cohort[160:] if int(c.record.label) == 1]
case = max(held_out, key=lambda c: model.predict(c.record.leads)[1])
print(f"case {case.case_id}: label={int(case.record.label)}, "
      f"truth window [{case.truth.start_ms:.0f}, {case.truth.end_ms:.0f}] ms "
      f"({case.truth.description})")
probs = model.predict(case.record.leads)
print(f"model probabilities: normal {probs[0]:.3f} / abnormal {probs[1]:.3f}\n")

# reference distribution of normal inputs for the SHAP-family baselines
normals = [c.record.leads for c in cohort[:160] if int(c.record.label) == 0]
baselines = at.BaselineSet(records=normals[:50])

runs = {
    "ig": {"steps": 50, "noise_samples": 1},
    "gradshap": {"baselines": baselines, "n_samples": 100},
    # 50 ms segments keep 12 x 200 cells at 96 groups, inside a 100-eval budget
    "kernelshap": {"budget": 100, "segment_len": 25,
                   "background": baselines.mean()},
    "lime": {"n_perturb": 500, "background": baselines.mean()},
}

for method, params in runs.items():
    result = at.attribute_both_classes(model, case.record.leads, method,
                                       case_id=case.case_id, seed=0, **params)
    slice_abn = result.class_slice(1)
    t_ms = np.arange(slice_abn.shape[1]) * 1000.0 / case.record.sample_rate_hz
    lead_sum = np.abs(slice_abn).sum(axis=0)
    peak_ms = t_ms[int(np.argmax(lead_sum))]
    inside = lead_sum[(t_ms >= case.truth.start_ms) & (t_ms < case.truth.end_ms)]
    print(f"{method:>10}: values {result.values.shape}, "
          f"peak |attribution| at {peak_ms:.0f} ms, "
          f"mass inside truth window {inside.sum() / lead_sum.sum():.2f}")
