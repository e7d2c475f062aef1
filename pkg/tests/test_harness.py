"""Harness tests: pool cardinality/caching/error isolation, stratification,
report formatting, the permutation null, and blind bundles."""

import json

import numpy as np
import pytest

from cardioxmap import agreement as ag
from cardioxmap import harness as hn
from cardioxmap import model as md
from cardioxmap import signals as sg
from cardioxmap.errors import InvalidConfig, MissingPrediction

from oracles import grid_threshold_search


@pytest.fixture(scope="module")
def tiny_setup():
    """Six synthetic cases, a barely-trained 12-lead model, and cine
    annotations derived from the generator truth windows."""
    config = sg.GeneratorConfig(noise_sigma=0.01)
    cases = sg.generate_dataset(6, seed=21, config=config)
    samples = [(c.record.leads, int(c.record.label)) for c in cases]
    model_cfg = md.ModelConfig(in_channels=12, stem=(8, 5, 2),
                               blocks=((8, 3, 2),), dropout_rate=0.1)
    model = md.build_model(model_cfg, seed=1)
    md.train(model, samples, seed=1, max_epochs=2, patience=1, batch_size=4)

    annotations = {}
    for c in cases:
        annotations[(c.case_id, "cine")] = ag.ExpertAnnotation(
            case_id=c.case_id, modality="cine", diagnosis=c.record.label,
            leads=["all"],
            segments=[{"start_ms": c.truth.start_ms, "end_ms": c.truth.end_ms}])
        annotations[(c.case_id, "ecg12")] = ag.ExpertAnnotation(
            case_id=c.case_id, modality="ecg12", diagnosis=c.record.label,
            leads=["I", "II", "V2"],
            segments=[{"start_ms": c.truth.start_ms, "end_ms": c.truth.end_ms}])
    return cases, model, annotations


IG_FAST = {"ig": {"steps": 4, "noise_samples": 1}}


class TestRunPool:
    def test_cell_cardinality(self, tiny_setup):
        cases, model, annotations = tiny_setup
        config = hn.PoolConfig(methods=("ig",), preps=("positive", "absolute", "scaled"),
                               representations=("cine_mapped",), bootstrap_B=50,
                               method_params=IG_FAST)
        result = hn.run_pool(cases[:2], annotations, {"ecg12": model}, config)
        assert len(result.rows) == 2 * 1 * 3 * 1
        assert result.computed_cells == 6
        assert not result.errors

    def test_cache_round_trip_and_byte_identical_output(self, tiny_setup, tmp_path):
        cases, model, annotations = tiny_setup
        config = hn.PoolConfig(methods=("ig",), preps=("scaled",),
                               representations=("ecg12", "cine_mapped"),
                               bootstrap_B=50, method_params=IG_FAST)
        cache = tmp_path / "cache"
        first = hn.run_pool(cases[:3], annotations, {"ecg12": model}, config,
                            cache_dir=cache)
        assert first.computed_cells == 6 and first.cached_cells == 0
        out1 = tmp_path / "r1.ndjson"
        hn.save_results(first, out1)

        second = hn.run_pool(cases[:3], annotations, {"ecg12": model}, config,
                             cache_dir=cache)
        assert second.computed_cells == 0
        assert second.cached_cells == 6
        out2 = tmp_path / "r2.ndjson"
        hn.save_results(second, out2)
        assert out1.read_bytes() == out2.read_bytes()

    def test_missing_checkpoint_isolated(self, tiny_setup):
        cases, model, annotations = tiny_setup
        config = hn.PoolConfig(methods=("ig",), preps=("scaled",),
                               representations=("ecg12", "cine_direct"),
                               bootstrap_B=50, method_params=IG_FAST)
        result = hn.run_pool(cases[:2], annotations, {"ecg12": model}, config)
        # cine_direct cells fail (no cine model); ecg12 cells survive
        assert len(result.rows) == 2
        assert len(result.errors) == 2
        assert all(e["error"] == "MissingCheckpoint" for e in result.errors)
        assert all(e["representation"] == "cine_direct" for e in result.errors)

    def test_missing_annotation_isolated(self, tiny_setup):
        cases, model, annotations = tiny_setup
        pruned = {k: v for k, v in annotations.items()
                  if k != (cases[0].case_id, "cine")}
        config = hn.PoolConfig(methods=("ig",), preps=("scaled",),
                               representations=("cine_mapped",), bootstrap_B=50,
                               method_params=IG_FAST)
        result = hn.run_pool(cases[:2], pruned, {"ecg12": model}, config)
        assert len(result.rows) == 1
        assert len(result.errors) == 1
        assert result.errors[0]["error"] == "MissingAnnotation"

    def test_empty_selection_rejected(self):
        with pytest.raises(InvalidConfig):
            hn.PoolConfig(methods=())


class TestStratify:
    @staticmethod
    def _rows():
        rows = []
        for i, (diag, pred, dice_val) in enumerate(
                [(0, 0, 0.5), (0, 1, 0.4), (1, 1, 0.8), (1, 1, 0.7)]):
            iou_val = dice_val / (2.0 - dice_val)
            rows.append({"case_id": f"c{i}", "dice": dice_val, "iou": iou_val,
                         "spearman": 0.1, "threshold": 0.2, "diagnosis": diag,
                         "prediction": pred, "method": "ig", "prep": "scaled",
                         "representation": "cine_mapped", "seed": 0,
                         "spearman_degenerate": False})
        return rows

    def test_partitions_cover_rows(self):
        strata = hn.stratify(self._rows(), B=50, seed=0)
        assert strata["diagnosis:Normal"]["n_rows"] == 2
        assert strata["diagnosis:Abnormal"]["n_rows"] == 2
        assert strata["agreement:Agree"]["n_rows"] == 3
        assert strata["agreement:Disagree"]["n_rows"] == 1
        assert strata["agreement:Disagree"]["flagged"]

    def test_all_correct_leaves_empty_disagree_stratum(self):
        rows = self._rows()
        for r in rows:
            r["prediction"] = r["diagnosis"]
        strata = hn.stratify(rows, B=50, seed=0)
        assert strata["agreement:Disagree"]["n_rows"] == 0
        assert strata["agreement:Disagree"]["metrics"] is None
        assert strata["agreement:Disagree"]["flagged"]

    def test_single_case_stratum_degenerate_ci(self):
        rows = self._rows()[:1]
        strata = hn.stratify(rows, B=50, seed=0)
        entry = strata["diagnosis:Normal"]
        assert entry["flagged"]
        assert entry["metrics"]["dice"]["degenerate"]
        assert entry["metrics"]["dice"]["mean"] == 0.5

    def test_missing_prediction(self):
        rows = self._rows()
        del rows[0]["prediction"]
        with pytest.raises(MissingPrediction):
            hn.stratify(rows, B=50, seed=0)


class TestReport:
    @staticmethod
    def _report():
        rng = np.random.default_rng(0)
        rows = []
        for rep, base in (("ecg12", 0.45), ("cine_mapped", 0.6)):
            for prep in ("absolute", "scaled"):
                for i in range(8):
                    d = float(np.clip(base + (0.05 if prep == "scaled" else 0.0)
                                      + rng.normal(scale=0.05), 0.01, 0.99))
                    rows.append({"case_id": f"c{i}", "dice": d,
                                 "iou": d / (2.0 - d), "spearman": 0.2,
                                 "threshold": 0.3, "diagnosis": i % 2,
                                 "prediction": i % 2, "method": "ig",
                                 "prep": prep, "representation": rep, "seed": 0,
                                 "spearman_degenerate": False})
        config = hn.PoolConfig(bootstrap_B=100)
        return hn.build_report(rows, config, seed=1), rows

    def test_winner_is_argmax_mean_dice(self):
        report, rows = self._report()
        for rep, winner in report.winners.items():
            candidates = [c for c in report.per_config
                          if c["representation"] == rep]
            best = max(candidates, key=lambda c: c["metrics"]["dice"]["mean"])
            assert winner == best
            # brute-force over raw rows agrees
            means = {}
            for c in candidates:
                subset = [r["dice"] for r in rows
                          if (r["representation"], r["method"], r["prep"])
                          == (rep, c["method"], c["prep"])]
                means[(c["method"], c["prep"])] = np.mean(subset)
            assert (winner["method"], winner["prep"]) == max(means, key=means.get)

    def test_markdown_layout(self):
        report, _ = self._report()
        text = hn.emit_report(report, "markdown")
        assert "| Modality | Dice Score | IoU Score | Spearman Cor. |" in text
        # 2-decimal mean with an en-dash CI
        import re
        assert re.search(r"\| 0\.\d{2} \(0\.\d{2}–0\.\d{2}\)", text)

    def test_json_and_markdown_agree_after_rounding(self):
        report, _ = self._report()
        payload = json.loads(hn.emit_report(report, "json"))
        text = hn.emit_report(report, "markdown")
        for rep, winner in payload["winners"].items():
            mean = winner["metrics"]["dice"]["mean"]
            assert f"{mean:.2f} (" in text

    def test_ci_format_example(self):
        ci = {"mean": 0.561234, "lo": 0.512, "hi": 0.621}
        assert hn._fmt_ci(ci) == "0.56 (0.51–0.62)"

    def test_empty_stratum_rendered_as_dash(self):
        report, rows = self._report()
        for r in rows:
            r["prediction"] = r["diagnosis"]
        config = hn.PoolConfig(bootstrap_B=100)
        report = hn.build_report(rows, config, seed=1)
        text = hn.emit_report(report, "markdown")
        assert "—" in text


class TestPermutationNull:
    def test_best_dice_matrix_matches_grid_oracle(self):
        rng = np.random.default_rng(5)
        maps = [rng.random(30) for _ in range(4)]
        masks = [rng.random(30) < 0.3 for _ in range(4)]
        masks[0][:3] = True  # ensure nonempty
        matrix = hn.best_dice_matrix(maps, masks)
        for i in range(4):
            for j in range(4):
                _, expect = grid_threshold_search(maps[i], masks[j])
                assert matrix[i, j] == pytest.approx(expect, abs=1e-12)

    def test_matched_pairs_beat_null(self):
        rng = np.random.default_rng(6)
        maps, masks = [], []
        for i in range(12):
            mask = np.zeros(50, dtype=bool)
            start = 4 * i % 40
            mask[start:start + 8] = True
            noise = rng.random(50) * 0.2
            values = np.where(mask, 0.8 + noise, noise)
            maps.append(np.clip(values, 0, 1))
            masks.append(mask)
        observed, p, null = hn.label_permutation_test(maps, masks,
                                                      n_permutations=300, seed=0)
        assert observed > null.mean()
        assert p < 0.05


class TestCaseBundles:
    def test_blind_bundle_has_no_label_keys(self, tiny_setup):
        cases, model, _ = tiny_setup
        bundle = hn.export_case_bundle(cases[0], blind=True)
        hn.assert_blind_safe(bundle)  # no raise
        text = json.dumps(bundle)
        for key in ("label", "diagnosis", "prediction"):
            assert f'"{key}"' not in text

    def test_open_bundle_carries_overlays_and_scale(self, tiny_setup):
        cases, model, _ = tiny_setup
        from cardioxmap import attribution as at
        from cardioxmap import crossmodal as cm
        attr = at.attribute_both_classes(model, cases[0].record.leads, "ig",
                                         case_id=cases[0].case_id, seed=0,
                                         steps=4, noise_samples=1)
        mapped = cm.map_to_cine(cm.bipolar_profile(attr))
        bundle = hn.export_case_bundle(cases[0], attributions=attr, mapped=mapped,
                                       prediction=1, blind=False)
        assert bundle["label"] in (0, 1)
        assert "scale" in bundle["overlays"]["ecg12"]
        assert len(bundle["overlays"]["cine"]["values"]) == 200
        assert bundle["prediction"] == 1

    def test_annotation_import_round_trip(self, tiny_setup, tmp_path):
        cases, _, annotations = tiny_setup
        ann = annotations[(cases[0].case_id, "ecg12")]
        path = tmp_path / "ann.json"
        path.write_text(json.dumps([ann.to_dict()]))
        loaded = hn.import_annotations(path)
        assert len(loaded) == 1
        mask_a = ag.annotation_to_mask(ann, 500, 400.0)
        mask_b = ag.annotation_to_mask(loaded[0], 500, 400.0)
        np.testing.assert_array_equal(mask_a.cells, mask_b.cells)
