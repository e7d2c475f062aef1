"""Project 12-lead attributions onto the trajectory's time axis.

The bipolar profile is the half-difference of the abnormal and normal
class attributions (positive = evidence for abnormal). Lead profiles are
summed per time-step and rescaled by the peak absolute value, giving one
scalar per time-step that colors all three spatial dimensions. The sign
is flipped for expert-diagnosed-normal cases, then one of three
post-processing strategies turns the profile into a thresholdable map.
"""

import numpy as np

from cardioxmap import attribution as at
from cardioxmap import crossmodal as cm
from cardioxmap import model as md
from cardioxmap import signals as sg

gen = sg.GeneratorConfig(noise_sigma=0.05)
cohort = sg.generate_dataset(200, seed=31, config=gen)
samples = [(c.record.leads, int(c.record.label)) for c in cohort[:160]]
model = md.build_model(md.ModelConfig(in_channels=12, stem=(16, 5, 2),
                                      blocks=((16, 3, 2), (32, 3, 1)),
                                      dropout_rate=0.2), seed=31)
md.train(model, samples, seed=31, max_epochs=6, patience=2, lr=1e-3)

case = cohort[165]
attribution = at.attribute_both_classes(model, case.record.leads, "ig",
                                        case_id=case.case_id, seed=0,
                                        steps=50, noise_samples=1)

profile = cm.bipolar_profile(attribution)
print(f"bipolar profile: shape {profile.values.shape}, "
      f"range [{profile.values.min():.4f}, {profile.values.max():.4f}]")

mapped = cm.map_to_cine(profile)
t_ms = np.arange(mapped.temporal.size) * 1000.0 / case.record.sample_rate_hz
print(f"mapped temporal vector: peak |value| = "
      f"{np.max(np.abs(mapped.temporal)):.1f} at "
      f"{t_ms[int(np.argmax(np.abs(mapped.temporal)))]:.0f} ms "
      f"(degenerate: {mapped.degenerate_flag})")
print(f"replicated rows identical: "
      f"{all(np.array_equal(mapped.replicated[d], mapped.temporal) for d in range(3))}")

oriented = cm.orient_by_diagnosis(mapped.temporal[None, :], case.record.label)
region = np.ones_like(oriented, dtype=bool)
print(f"\ncase diagnosed {'Abnormal' if case.record.label else 'Normal'} -> "
      f"sign {'kept' if case.record.label else 'flipped'}")
print(f"truth window [{case.truth.start_ms:.0f}, {case.truth.end_ms:.0f}] ms\n")

for prep in cm.PREPS:
    importance = cm.post_process(oriented, prep, region,
                                 diagnosis=case.record.label,
                                 case_id=case.case_id)
    v = importance.values[0]
    print(f"{prep:>9}: range [{v.min():.3f}, {v.max():.3f}], "
          f"argmax at {t_ms[int(np.argmax(v))]:.0f} ms")
