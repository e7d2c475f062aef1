"""Train the 1D residual classifier on both modalities.

The same architecture serves the 12-lead records and the 3-channel
trajectories; only the input width changes. Training uses Adam on
cross-entropy with an inner 15% stratified validation split and early
stopping, then restores the best-validation parameters.
"""

from cardioxmap import model as md
from cardioxmap import signals as sg

cohort = sg.generate_dataset(300, seed=11, config=sg.GeneratorConfig(noise_sigma=0.05))
triples = [(c.case_id, c.record.patient_id, int(c.record.label)) for c in cohort]
split = sg.stratified_split(triples, seed=11)
by_id = {c.case_id: c for c in cohort}
train_cases = [by_id[i] for i in split.train]
test_cases = [by_id[i] for i in split.test]

config = md.ModelConfig(in_channels=12, stem=(16, 5, 2),
                        blocks=((16, 3, 2), (32, 3, 1)), dropout_rate=0.2)

for modality, channels in (("ecg", 12), ("cine", 3)):
    cfg = md.ModelConfig(in_channels=channels, stem=config.stem,
                         blocks=config.blocks, dropout_rate=config.dropout_rate)
    model = md.build_model(cfg, seed=11)

    def samples(cases):
        return [((c.record.leads if modality == "ecg" else c.cine.path),
                 int(c.record.label)) for c in cases]

    # the trajectory model converges more slowly than the 12-lead one
    max_epochs = 10 if modality == "ecg" else 20
    report = md.train(model, samples(train_cases), seed=11, max_epochs=max_epochs,
                      patience=5, lr=1e-3, test_set=samples(test_cases))
    print(f"{modality:>4}-modality model: {report.epochs_run} epochs, "
          f"best val loss {report.best_val_loss:.4f}, "
          f"test accuracy {report.test_accuracy:.3f}, "
          f"macro F1 {report.test_macro_f1:.3f}")

    if modality == "ecg":
        md.save_checkpoint(model, "/tmp/demo_ecg_model.json")
        p0, p1 = md.predict_proba(model, test_cases[0].record)
        print(f"     example case {test_cases[0].case_id}: "
              f"p(normal)={p0:.3f} p(abnormal)={p1:.3f} "
              f"(true label {int(test_cases[0].record.label)})")

print("\ncheckpoint written to /tmp/demo_ecg_model.json")
