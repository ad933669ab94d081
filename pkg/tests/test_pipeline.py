import json
import os

import numpy as np
import pytest

from cdpmix import checks, pipeline
from cdpmix.cli import main
from cdpmix.errors import ValidationError
from cdpmix.estimation import accumulate_similarity


@pytest.fixture
def tiny_run(tmp_path):
    rng = np.random.default_rng(1)
    data = tmp_path / "tiny.tsv"
    lines = ["id\ta\tb"]
    for i in range(6):
        shift = 0.0 if i < 3 else 3.0
        lines.append(f"it{i}\t{rng.normal() + shift:.4f}\t{rng.normal() + shift:.4f}")
    data.write_text("\n".join(lines) + "\n")
    ann = tmp_path / "ann.tsv"
    ann.write_text("id\tgrp\n" + "\n".join(f"it{i}\tsolo" for i in range(6)) + "\n")
    return {
        "data": str(data),
        "annotations": str(ann),
        "model": {"family": "dp", "concentration": 1.0},
        "prior": {"shape": 1.0, "rate": 1.0, "precision_z": 1.0},
        "design": {"Z": [[1.0], [1.0]]},
        "sweeps": 150, "burn_in": 50, "seed": 11,
        "out": str(tmp_path / "out"),
    }


# -------------------------------------------------------------- data loading

def test_bundled_fixture_has_expected_shape():
    table = pipeline.load_dataset(pipeline.bundled_data_path("rat_cns_synthetic.tsv"))
    assert table.n == 112
    assert table.n_samples == 9
    assert table.columns[0] == "e11"
    assert len(set(table.ids)) == 112


def test_minimal_two_row_file(tmp_path):
    f = tmp_path / "two.tsv"
    f.write_text("id\tx\na\t1.0\nb\t2.5\n")
    table = pipeline.load_dataset(str(f))
    assert table.n == 2 and table.n_samples == 1


def test_single_row_rejected(tmp_path):
    f = tmp_path / "one.tsv"
    f.write_text("id\tx\na\t1.0\n")
    with pytest.raises(ValidationError):
        pipeline.load_dataset(str(f))


def test_ragged_row_names_line(tmp_path):
    f = tmp_path / "ragged.tsv"
    f.write_text("id\tx\ty\na\t1.0\t2.0\nb\t3.0\n")
    with pytest.raises(ValidationError, match="row 3"):
        pipeline.load_dataset(str(f))


def test_non_numeric_cell_names_row_and_column(tmp_path):
    f = tmp_path / "bad.tsv"
    f.write_text("id\tx\ty\na\t1.0\t2.0\nb\t3.0\toops\n")
    with pytest.raises(ValidationError, match="row 3, column 'y'"):
        pipeline.load_dataset(str(f))


def test_missing_cell_is_an_error(tmp_path):
    f = tmp_path / "missing.tsv"
    f.write_text("id\tx\ty\na\t1.0\t\nb\t3.0\t4.0\n")
    with pytest.raises(ValidationError):
        pipeline.load_dataset(str(f))


def test_duplicate_ids_disambiguated_with_warning(tmp_path):
    f = tmp_path / "dup.tsv"
    f.write_text("id\tx\ng\t1.0\ng\t2.0\n")
    with pytest.warns(UserWarning, match="duplicate id"):
        table = pipeline.load_dataset(str(f))
    assert table.ids == ["g", "g_2"]


def test_annotations_must_cover_all_ids(tmp_path):
    f = tmp_path / "ann.tsv"
    f.write_text("id\tgrp\na\tx\n")
    with pytest.raises(ValidationError, match="no annotation"):
        pipeline.load_annotations(str(f), ["a", "b"])


# -------------------------------------------------------------------- design

def test_default_design_rows():
    Z = pipeline.rat_timecourse_design()
    assert Z.shape == (9, 5)
    np.testing.assert_array_equal(Z[1], [1, 13, 0, 0, 0])   # embryonic day 13
    np.testing.assert_array_equal(Z[6], [0, 0, 1, 7, 0])    # postnatal day 7
    np.testing.assert_array_equal(Z[8], [0, 0, 0, 0, 1])    # adult
    design = pipeline.build_design("rat-timecourse", 9)
    np.testing.assert_array_equal(design.Z, Z)


def test_default_design_requires_nine_samples():
    with pytest.raises(ValidationError):
        pipeline.build_design(None, 5)


def test_design_from_csv(tmp_path):
    f = tmp_path / "z.csv"
    f.write_text("1.0,0.0\n0.0,1.0\n")
    design = pipeline.build_design({"Z": str(f)}, 2)
    np.testing.assert_array_equal(design.Z, np.eye(2))


def test_design_dimension_mismatch(tmp_path):
    with pytest.raises(ValidationError):
        pipeline.build_design({"Z": [[1.0], [1.0]]}, 3)


# -------------------------------------------------------------------- config

def test_unknown_preset_and_family_rejected(tiny_run):
    with pytest.raises(ValidationError):
        pipeline.parse_config({"preset": "nope"})
    bad = dict(tiny_run, model={"family": "mystery"})
    with pytest.raises(ValidationError):
        pipeline.parse_config(bad)
    with pytest.raises(ValidationError):
        pipeline.parse_config(dict(tiny_run, model={"family": "dp"}))


def test_prior_dimension_validation(tiny_run):
    bad = dict(tiny_run, prior={"mean_z": [0.0, 0.0]})
    with pytest.raises(ValidationError):
        pipeline.parse_config(bad)


def test_background_preset_builds_two_priors():
    config = pipeline.parse_config({"preset": "wen-rat", "sweeps": 2, "burn_in": 1})
    assert len(config.specs) == 2
    assert config.specs[0].is_background
    assert config.specs[0].n_coeffs == 0          # no X block in this model
    assert config.specs[1].n_coeffs == 5
    assert config.plan.seed == 0
    assert config.dataset.annotations              # bundled class file


# ----------------------------------------------------------------- artifacts

def test_run_emits_all_artifacts(tiny_run):
    config = pipeline.parse_config(tiny_run)
    manifest = pipeline.run_pipeline(config)
    assert manifest["artifacts"] == ["assignments.csv", "cluster_summaries.csv",
                                     "crosstab.csv", "manifest.json",
                                     "similarity.csv", "trace.csv"]
    for name in manifest["artifacts"]:
        assert os.path.exists(os.path.join(tiny_run["out"], name))


def test_same_seed_runs_are_byte_identical(tiny_run, tmp_path):
    first = pipeline.run_pipeline(pipeline.parse_config(tiny_run))
    other_dir = str(tmp_path / "out2")
    pipeline.run_pipeline(pipeline.parse_config(dict(tiny_run, out=other_dir)))
    for name in first["artifacts"]:
        a = open(os.path.join(tiny_run["out"], name), "rb").read()
        b = open(os.path.join(other_dir, name), "rb").read()
        assert a == b, name


def test_manifest_reproduces_run(tiny_run, tmp_path):
    pipeline.run_pipeline(pipeline.parse_config(tiny_run))
    manifest = json.load(open(os.path.join(tiny_run["out"], "manifest.json")))
    redo_dir = str(tmp_path / "redo")
    pipeline.run_pipeline(pipeline.parse_config(manifest["config"], out=redo_dir))
    for name in manifest["artifacts"]:
        a = open(os.path.join(tiny_run["out"], name), "rb").read()
        b = open(os.path.join(redo_dir, name), "rb").read()
        assert a == b, name


def test_trace_round_trip_reproduces_similarity(tiny_run):
    pipeline.run_pipeline(pipeline.parse_config(tiny_run))
    out = tiny_run["out"]
    _, records = pipeline.read_trace(os.path.join(out, "trace.csv"))
    sim = accumulate_similarity([r["labels"] for r in records])
    emitted = pipeline.read_similarity(os.path.join(out, "similarity.csv"))
    assert np.array_equal(sim.matrix, emitted)


def test_single_category_crosstab_lists_cluster_sizes(tiny_run):
    pipeline.run_pipeline(pipeline.parse_config(tiny_run))
    out = tiny_run["out"]
    rows = open(os.path.join(out, "crosstab.csv")).read().strip().splitlines()[1:]
    counts = [int(r.split(",")[-1]) for r in rows]
    assert sum(counts) == 6
    assignments = open(os.path.join(out, "assignments.csv")).read().strip().splitlines()[1:]
    sizes: dict = {}
    for line in assignments:
        sizes[line.split(",")[1]] = sizes.get(line.split(",")[1], 0) + 1
    assert sorted(counts) == sorted(sizes.values())


def test_summarize_recomputes_identically(tiny_run):
    pipeline.run_pipeline(pipeline.parse_config(tiny_run))
    out = tiny_run["out"]
    before = {name: open(os.path.join(out, name), "rb").read()
              for name in ("similarity.csv", "assignments.csv",
                           "cluster_summaries.csv", "crosstab.csv")}
    pipeline.summarize_run(out)
    for name, content in before.items():
        assert open(os.path.join(out, name), "rb").read() == content


def test_multichain_run_merges_traces(tiny_run, tmp_path):
    cfg = dict(tiny_run, out=str(tmp_path / "mc"), chains=2, sweeps=60, burn_in=20)
    manifest = pipeline.run_pipeline(pipeline.parse_config(cfg))
    _, records = pipeline.read_trace(os.path.join(cfg["out"], "trace.csv"))
    assert {r["chain"] for r in records} == {0, 1}
    assert len(manifest["log_posterior"]) == len(records)


def test_unwritable_output_dir_fails_before_sampling(tiny_run):
    cfg = dict(tiny_run, out="/proc/definitely-not-writable")
    with pytest.raises((ValidationError, OSError)):
        pipeline.run_pipeline(pipeline.parse_config(cfg))


# ------------------------------------------------------------------------ CLI

def test_cli_run_and_summarize(tiny_run, tmp_path):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(tiny_run))
    out = str(tmp_path / "cli-out")
    assert main(["run", "--config", str(cfg_path), "--out", out]) == 0
    assert os.path.exists(os.path.join(out, "manifest.json"))
    assert main(["summarize", "--out", out]) == 0


def test_cli_validation_exit_codes(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"model": {"family": "dp", "concentration": 1.0}}))
    assert main(["run", "--config", str(bad)]) == 1          # no data file
    assert main(["summarize", "--out", str(tmp_path / "nope")]) == 1
    assert main(["summarize"]) == 1


def test_cli_verify_rejects_bad_settings(tmp_path):
    cfg = tmp_path / "verify.json"
    cfg.write_text(json.dumps({"no_such_knob": 1}))
    assert main(["verify", "--config", str(cfg)]) == 1


# ------------------------------------------------------------------ checks API

def test_verify_settings_reject_unknown_keys():
    with pytest.raises(ValidationError):
        checks.VerifySettings.from_overrides({"bogus": 3})


def test_negative_concentration_override_raises():
    cfg = checks.VerifySettings.from_overrides({"dp_thetas": [-1.0]})
    with pytest.raises(ValidationError):
        checks.check_eppf_normalization(cfg)


def test_normalization_check_detects_tampered_eppf(monkeypatch):
    from cdpmix import priors

    genuine = priors.log_eppf_dp

    def tampered(p, theta):
        return genuine(p, theta) + 0.01

    monkeypatch.setattr(priors, "log_eppf_dp", tampered)
    result = checks.check_eppf_normalization(checks.VerifySettings())
    assert not result.passed
