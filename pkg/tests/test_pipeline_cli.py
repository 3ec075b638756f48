import csv
import json
import os

import numpy as np
import pytest

from fmriscales import cli, data, pipeline, synth
from fmriscales.errors import IncompleteRun

CFG_OVERRIDES = {
    "trees": 10,
    "folds": 2,
    "d_max": 6,
    "render_limit": 1,
    "render_size": 16,
    "seed": 5,
}


@pytest.fixture(scope="module")
def cohort_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("data") / "cohort"
    cohort = synth.gen_two_class_cohort(
        separation=1.0, subjects_per_class=3, n_timepoints=48, n_rois=34,
        seed=9, all_networks=True,
    )
    data.write_cohort(cohort, root)
    return root


def run_once(cohort_dir, out_dir, extra=None):
    overrides = dict(CFG_OVERRIDES)
    overrides.update(extra or {})
    config = pipeline.load_config(overrides=overrides)
    return pipeline.run_pipeline(cohort_dir, out_dir, config=config)


class TestConfig:
    def test_file_and_override_precedence(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("# comment\ntrees=50\nfolds = 3\ntau=auto\n")
        config = pipeline.load_config(path, overrides={"folds": "4"})
        assert config.trees == 50
        assert config.folds == 4
        assert config.tau == "auto"

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("depth=3\n")
        with pytest.raises(ValueError, match="unknown config key"):
            pipeline.load_config(path)
        with pytest.raises(ValueError):
            pipeline.load_config(overrides={"nope": "1"})

    def test_unknown_family_rejected(self):
        with pytest.raises(ValueError, match="family"):
            pipeline.load_config(overrides={"families": "rqa,images"})

    def test_hash_stable_under_key_order(self, tmp_path):
        a = pipeline.load_config(overrides={"trees": 10, "folds": 3})
        b = pipeline.load_config(overrides={"folds": 3, "trees": 10})
        assert a.config_hash() == b.config_hash()
        c = pipeline.load_config(overrides={"trees": 11, "folds": 3})
        assert a.config_hash() != c.config_hash()


class TestRunPipeline:
    def test_artifacts_present(self, cohort_dir, tmp_path):
        out = tmp_path / "run"
        summary = run_once(cohort_dir, out)
        assert summary["n_subjects"] == 6
        assert (out / "manifest.json").exists()
        assert (out / "validate" / "report.json").exists()
        assert (out / "rqa" / "features.csv").exists()
        assert (out / "plots" / "rendered.csv").exists()
        assert (out / "graph" / "frequency_table.csv").exists()
        assert (out / "classify" / "metrics.csv").exists()
        # six networks x three families
        with open(out / "classify" / "metrics.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 18
        for network in summary["networks"]:
            for family in pipeline.FEATURE_FAMILIES:
                assert (out / "classify" / f"metrics_{network}_{family}.json").exists()
        # one subject rendered, 160 ROIs
        with open(out / "plots" / "rendered.csv", newline="") as fh:
            rendered = list(csv.DictReader(fh))
        assert len(rendered) == 160
        pgm = out / "plots" / rendered[0]["file"]
        assert pgm.read_bytes().startswith(b"P5\n16 16\n255\n")

    def test_rerun_is_byte_identical_and_resumes(self, cohort_dir, tmp_path):
        out = tmp_path / "run"
        run_once(cohort_dir, out)
        metrics = (out / "classify" / "metrics.csv").read_bytes()
        rqa_mtime = os.path.getmtime(out / "rqa" / "features.csv")
        run_once(cohort_dir, out)
        assert (out / "classify" / "metrics.csv").read_bytes() == metrics
        assert os.path.getmtime(out / "rqa" / "features.csv") == rqa_mtime

    def test_fresh_runs_reproduce_metrics_bytes(self, cohort_dir, tmp_path):
        a = run_once(cohort_dir, tmp_path / "a")
        b = run_once(cohort_dir, tmp_path / "b")
        assert a["config_hash"] == b["config_hash"]
        bytes_a = (tmp_path / "a" / "classify" / "metrics.csv").read_bytes()
        bytes_b = (tmp_path / "b" / "classify" / "metrics.csv").read_bytes()
        assert bytes_a == bytes_b

    def test_config_change_rejected_on_existing_dir(self, cohort_dir, tmp_path):
        out = tmp_path / "run"
        run_once(cohort_dir, out)
        with pytest.raises(ValueError, match="different config"):
            run_once(cohort_dir, out, extra={"trees": 11})

    def test_network_filter(self, cohort_dir, tmp_path):
        out = tmp_path / "only"
        summary = run_once(
            cohort_dir, out, extra={"networks": "default_mode", "render_limit": 0}
        )
        assert summary["networks"] == ["default_mode"]
        with open(out / "classify" / "metrics.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert {r["network"] for r in rows} == {"default_mode"}

    def test_parallel_jobs_match_serial(self, cohort_dir, tmp_path):
        cohort = data.load_cohort(cohort_dir)
        config = pipeline.load_config(overrides=dict(CFG_OVERRIDES))
        serial = pipeline.compute_rqa_features(cohort, config, ["cerebellum"])
        config.jobs = 2
        parallel = pipeline.compute_rqa_features(cohort, config, ["cerebellum"])
        assert serial == parallel


class TestReport:
    def test_text_report_lists_networks(self, cohort_dir, tmp_path):
        out = tmp_path / "run"
        run_once(cohort_dir, out)
        text = pipeline.report(out)
        assert "Classification (leading_eigenvector)" in text
        assert "default_mode" in text and "cerebellum" in text
        assert "Fraction of subj." in text

    def test_csv_report(self, cohort_dir, tmp_path):
        out = tmp_path / "run"
        run_once(cohort_dir, out)
        text = pipeline.report(out, fmt="csv")
        assert text.splitlines()[0] == "network,family,precision,recall,f1,accuracy"

    def test_incomplete_run_raises(self, tmp_path):
        with pytest.raises(IncompleteRun):
            pipeline.report(tmp_path)


class TestCli:
    def test_synth_validate_run_report_flow(self, tmp_path, capsys):
        root = tmp_path / "cohort"
        rc = cli.main([
            "synth", "--kind", "two_class_cohort", "--sep", "1.0",
            "--subjects", "3", "--n", "34", "--N", "48", "--seed", "9",
            "--all-networks", "--out", str(root),
        ])
        assert rc == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["subjects"] == 6

        rc = cli.main(["validate", "--data", str(root)])
        assert rc == 0
        report = json.loads(capsys.readouterr().out)
        assert report["n_subjects"] == 6

        out = tmp_path / "run"
        rc = cli.main([
            "run", "--data", str(root), "--out", str(out),
            "--set", "trees=10", "--set", "folds=2", "--set", "d_max=6",
            "--set", "render_limit=0", "--only", "network=default_mode",
        ])
        assert rc == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["networks"] == ["default_mode"]

        rc = cli.main(["report", "--run", str(out)])
        assert rc == 0
        assert "default_mode" in capsys.readouterr().out

    def test_embed_subcommand(self, tmp_path, capsys):
        series = tmp_path / "sine.csv"
        rc = cli.main([
            "synth", "--kind", "sine", "--N", "400", "--out", str(series),
        ])
        assert rc == 0
        capsys.readouterr()
        curve = tmp_path / "curve.csv"
        rc = cli.main([
            "embed", "--series", str(series), "--dmax", "8",
            "--out", str(curve),
        ])
        assert rc == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["tau"] in range(6, 12)
        assert payload["k"] + (payload["m"] - 1) * payload["tau"] == 400
        with open(curve, newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 7
        assert set(rows[0]) == {"d", "e1", "e2"}

    def test_reho_subcommand(self, tmp_path, capsys):
        rng = np.random.default_rng(0)
        block = tmp_path / "block.csv"
        with open(block, "w") as fh:
            fh.write("x,y,z," + ",".join(f"t{i}" for i in range(20)) + "\n")
            for x in range(2):
                for y in range(2):
                    for z in range(2):
                        vals = rng.standard_normal(20)
                        fh.write(f"{x},{y},{z}," + ",".join(map(str, vals)) + "\n")
        rc = cli.main([
            "reho", "--block", str(block),
            "--out-map", str(tmp_path / "map.csv"),
            "--out-series", str(tmp_path / "rep.csv"),
        ])
        assert rc == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["defined_voxels"] == 8
        assert (tmp_path / "map.csv").exists()
        rep = (tmp_path / "rep.csv").read_text().strip().splitlines()
        assert len(rep) == 20

    def test_rqa_and_graph_and_classify_subcommands(self, tmp_path, capsys):
        root = tmp_path / "cohort"
        cohort = synth.gen_two_class_cohort(1.0, 3, 48, 34, seed=9,
                                            all_networks=True)
        data.write_cohort(cohort, root)

        rc = cli.main([
            "rqa", "--data", str(root), "--network", "cerebellum",
            "--dmax", "6", "--out", str(tmp_path / "rqa.csv"),
        ])
        assert rc == 0
        capsys.readouterr()
        with open(tmp_path / "rqa.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 6 * 18

        rc = cli.main([
            "graph", "--data", str(root), "--network", "default_mode",
            "--out", str(tmp_path / "graphs"),
        ])
        assert rc == 0
        capsys.readouterr()
        assert (tmp_path / "graphs" / "frequency_table.csv").exists()
        adj_files = [f for f in os.listdir(tmp_path / "graphs")
                     if f.startswith("adjacency_")]
        assert len(adj_files) == 6

        rc = cli.main([
            "classify", "--data", str(root), "--features", "eigvec",
            "--network", "default_mode", "--folds", "3", "--trees", "10",
            "--seed", "1", "--out-csv", str(tmp_path / "row.csv"),
        ])
        assert rc == 0
        payload = json.loads(capsys.readouterr().out)
        assert set(payload["confusion"]) == {"tp", "fp", "fn", "tn"}
        with open(tmp_path / "row.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert rows[0]["network"] == "default_mode"
        assert rows[0]["family"] == "leading_eigenvector"
        assert float(rows[0]["accuracy"]) == payload["accuracy"]

    def test_rp_render_subcommand(self, tmp_path, capsys):
        root = tmp_path / "cohort"
        cohort = synth.gen_two_class_cohort(0.5, 1, 48, 34, seed=3,
                                            all_networks=True)
        data.write_cohort(cohort, root)
        rc = cli.main([
            "rp-render", "--data", str(root), "--network", "cerebellum",
            "--size", "32", "--limit", "1", "--out", str(tmp_path / "plots"),
        ])
        assert rc == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["images"] == 18
        files = os.listdir(tmp_path / "plots")
        assert len(files) == 18
        sample = (tmp_path / "plots" / files[0]).read_bytes()
        assert sample.startswith(b"P5\n32 32\n255\n")

    def test_error_emits_json_on_stderr(self, tmp_path, capsys):
        rc = cli.main(["validate", "--data", str(tmp_path / "missing")])
        assert rc == 1
        err = capsys.readouterr().err
        payload = json.loads(err)
        assert payload["error"] in ("FileNotFoundError", "OSError")

    def test_domain_error_reported(self, tmp_path, capsys):
        root = tmp_path / "cohort"
        cohort = synth.gen_two_class_cohort(0.5, 1, 48, 34, seed=3,
                                            all_networks=True)
        data.write_cohort(cohort, root)
        os.remove(root / "sub-000" / "occipital.csv")
        rc = cli.main(["validate", "--data", str(root)])
        assert rc == 1
        payload = json.loads(capsys.readouterr().err)
        assert payload["error"] == "MissingNetworkFile"
