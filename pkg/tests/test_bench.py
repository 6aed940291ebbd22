"""Preset catalog, run artifacts and the command line."""

import json
import os

import numpy as np
import pytest

from fekan import bench
from fekan.bench import (
    RunConfig, compare_summaries, load_presets, make_reference, out_root,
    read_records_csv, read_reference_csv_or_hint, reference_path,
    run_experiment, run_single, write_records_csv,
)
from fekan.cli import cli_main


# -- preset catalog ------------------------------------------------------------

def test_every_preset_builds_a_model():
    presets = load_presets()
    assert len(presets) > 40
    for name, cfg in presets.items():
        assert cfg.name == name
        model = bench.build_model(cfg, seed=0)
        assert model.param_count() > 0
        rt = RunConfig.from_dict(cfg.to_dict())
        assert rt.to_dict() == cfg.to_dict()


def test_funfit_pairs_share_protocol():
    presets = load_presets()
    kan, fek = presets["funfit-kan-spline-g15"], presets["funfit-fekan-spline-g15"]
    assert kan.epochs == fek.epochs == 50000
    assert kan.n_train == fek.n_train == 141
    assert kan.widths == [1, 6, 1] and fek.widths == [9, 6, 1]
    assert kan.fmap is None and fek.fmap is not None
    assert fek.feature_map(1).width == 9


def test_expected_preset_families_present():
    names = set(load_presets())
    for must in ("funfit-kan-cheby", "funfit-fekan-cheby",
                 "helm2d-kan-spline", "helm2d-fekan-spline",
                 "helm2d-fekan-spline-rff-s2", "helm2d-fekan-spline-rff-s10",
                 "ac-kan-spline", "ac-fekan-spline",
                 "forget-kan-spline-g3", "forget-fekan-spline-g3",
                 "kg-sep-kan-spline", "kg-sep-fekan-spline",
                 "kg-sep-kan-cheby", "kg-sep-fekan-cheby",
                 "helm3d-sep-kan-spline", "helm3d-sep-fekan-spline",
                 "lorenz-map-kan", "lorenz-map-fekan",
                 "lorenz-pi-kan", "lorenz-pi-fekan",
                 "ntk-funfit-kan-spline", "ntk-funfit-fekan-spline"):
        assert must in names, must


def test_separable_affine_dropped_on_enriched_axes():
    cfg = load_presets()["kg-sep-fekan-spline"]
    model = bench.build_model(cfg, seed=0)
    # the map consumes raw coordinates, so no axis gets normalized under it
    assert model.affines == [None, None, None]
    kan = bench.build_model(load_presets()["kg-sep-kan-spline"], seed=0)
    assert kan.affines == [None, None, (5.0, 5.0)]


# -- paths ----------------------------------------------------------------------

def test_out_root_env_override(monkeypatch, tmp_path):
    monkeypatch.setenv("FEKAN_OUT", str(tmp_path))
    assert out_root() == str(tmp_path)
    monkeypatch.delenv("FEKAN_OUT")
    assert out_root() == os.path.join(os.getcwd(), "runs")


def test_reference_path_env_override(monkeypatch, tmp_path):
    monkeypatch.setenv("FEKAN_REFERENCES", str(tmp_path))
    assert reference_path("allen_cahn") == str(tmp_path / "reference_allen_cahn.csv")


def test_missing_reference_hint_names_the_command(tmp_path):
    with pytest.raises(FileNotFoundError, match="make-reference"):
        read_reference_csv_or_hint(str(tmp_path / "nope.csv"))


def test_make_reference_rejects_other_problems(tmp_path):
    with pytest.raises(ValueError):
        make_reference("helmholtz2d", root=str(tmp_path))


# -- record files -----------------------------------------------------------------

RECS = [
    {"epoch": 100, "loss": 0.5, "l_res": 0.5, "l_bc": 0.0, "l_ic": 0.0,
     "rel_l2": 0.25, "sec_per_iter": 0.001, "diverged": 0},
    {"epoch": 200, "loss": 0.125, "l_res": 0.125, "l_bc": 0.0, "l_ic": 0.0,
     "rel_l2": 0.0625, "sec_per_iter": 0.002, "diverged": 0},
]


def test_records_csv_round_trip(tmp_path):
    path = tmp_path / "records_0.csv"
    write_records_csv(path, RECS)
    back = read_records_csv(path)
    assert back == RECS
    write_records_csv(tmp_path / "again.csv", RECS)
    assert path.read_bytes() == (tmp_path / "again.csv").read_bytes()


def tiny_cfg(**kw):
    from fekan.basis import BasisSpec
    base = dict(name="tiny-funfit", experiment="fit-function",
                basis=BasisSpec.spline(k=2, G=5, lo=0.0, hi=1.0).to_dict(),
                widths=[1, 3, 1], epochs=20, log_every=10, n_train=21,
                seeds=[0, 1])
    base.update(kw)
    return RunConfig(**base)


def strip_timing(records):
    return [{k: v for k, v in r.items() if k != "sec_per_iter"} for r in records]


def test_run_single_is_deterministic():
    cfg = tiny_cfg()
    a = run_single(cfg, seed=0)
    b = run_single(cfg, seed=0)
    assert strip_timing(a["records"]) == strip_timing(b["records"])
    assert a["rel_l2"] == b["rel_l2"]
    c = run_single(cfg, seed=1)
    assert strip_timing(a["records"]) != strip_timing(c["records"])


def test_run_experiment_artifacts_and_stability(tmp_path):
    cfg = tiny_cfg()
    row1, d1 = run_experiment(cfg, out_dir=str(tmp_path / "a"))
    row2, d2 = run_experiment(cfg, out_dir=str(tmp_path / "b"))
    for d in (d1, d2):
        assert os.path.exists(os.path.join(d, "records_0.csv"))
        assert os.path.exists(os.path.join(d, "records_1.csv"))
        assert os.path.exists(os.path.join(d, "summary.json"))
    with open(os.path.join(d1, "summary.json")) as fh:
        s1 = json.load(fh)
    with open(os.path.join(d2, "summary.json")) as fh:
        s2 = json.load(fh)
    s1.pop("timing"), s2.pop("timing")
    assert s1 == s2
    assert s1["label"] == "tiny-funfit"
    assert s1["n_seeds"] == 2 and s1["diverged_count"] == 0
    assert s1["basis"] == "spline"
    assert isinstance(s1["rel_l2_mean"], float)
    assert len(s1["per_seed"]) == 2
    assert row1["params"] == s1["params"]


def test_run_experiment_override_epochs(tmp_path):
    cfg = tiny_cfg()
    row, d = run_experiment(cfg, seeds=[0], overrides={"epochs": 7},
                            out_dir=str(tmp_path))
    recs = read_records_csv(os.path.join(d, "records_0.csv"))
    assert recs[-1]["epoch"] == 7
    assert row["effective_overrides"] == {"epochs": 7}


def test_ntk_run_writes_spectra(tmp_path):
    cfg = tiny_cfg(name="tiny-ntk", experiment="ntk", epochs=10, seeds=[0],
                   extra={"ntk_points": 8, "checkpoints": 3})
    _, d = run_experiment(cfg, out_dir=str(tmp_path))
    for tau in (0, 1, 2):
        p = os.path.join(d, f"spectra_{tau}.csv")
        assert os.path.exists(p)
        with open(p) as fh:
            assert fh.readline().strip() == "tau,index,eigenvalue"
            rows = [line.split(",") for line in fh]
        assert len(rows) == 8
        assert all(int(r[0]) == tau for r in rows)


def test_compare_summaries_table_and_deltas(tmp_path):
    cfg = tiny_cfg()
    _, d1 = run_experiment(cfg, seeds=[0], out_dir=str(tmp_path / "x"))
    _, d2 = run_experiment(cfg, seeds=[0], out_dir=str(tmp_path / "y"))
    text = compare_summaries([os.path.join(d1, "summary.json"),
                              os.path.join(d2, "summary.json")])
    assert "tiny-funfit" in text
    assert "delta rel_l2_mean: +0.000000" in text
    assert "delta diverged: +0" in text


# -- command line -----------------------------------------------------------------

def test_cli_list_presets(capsys):
    assert cli_main(["list-presets"]) == 0
    out = capsys.readouterr().out
    assert "funfit-kan-spline-g15" in out
    assert "fit-function" in out


def test_cli_run_with_overrides(tmp_path, capsys):
    rc = cli_main(["fit-function", "--preset", "funfit-kan-spline-g15",
                   "--epochs", "20", "--seed-list", "0",
                   "--out", str(tmp_path)])
    assert rc == 0
    assert os.path.exists(tmp_path / "records_0.csv")
    assert os.path.exists(tmp_path / "summary.json")
    out = capsys.readouterr().out
    assert "funfit-kan-spline-g15" in out and "rel_l2" in out
    with open(tmp_path / "summary.json") as fh:
        s = json.load(fh)
    assert s["effective_overrides"] == {"epochs": 20}
    assert [p["seed"] for p in s["per_seed"]] == [0]


def test_cli_run_from_config_file(tmp_path, capsys):
    cfg_path = tmp_path / "cfg.json"
    with open(cfg_path, "w") as fh:
        json.dump(tiny_cfg(seeds=[0]).to_dict(), fh)
    rc = cli_main(["fit-function", "--config", str(cfg_path),
                   "--out", str(tmp_path / "run")])
    assert rc == 0
    assert os.path.exists(tmp_path / "run" / "summary.json")
    capsys.readouterr()


def test_cli_seeds_count_expands_range(tmp_path, capsys):
    cfg_path = tmp_path / "cfg.json"
    with open(cfg_path, "w") as fh:
        json.dump(tiny_cfg(seeds=[7]).to_dict(), fh)
    rc = cli_main(["fit-function", "--config", str(cfg_path), "--seeds", "2",
                   "--out", str(tmp_path / "run")])
    assert rc == 0
    assert os.path.exists(tmp_path / "run" / "records_0.csv")
    assert os.path.exists(tmp_path / "run" / "records_1.csv")
    capsys.readouterr()


def test_cli_unknown_preset_lists_options():
    with pytest.raises(SystemExit, match="funfit-kan-spline-g15"):
        cli_main(["fit-function", "--preset", "does-not-exist"])


def test_cli_experiment_mismatch():
    with pytest.raises(SystemExit, match="fit-function"):
        cli_main(["solve-pde", "--preset", "funfit-kan-spline-g15"])


def test_cli_requires_preset_or_config():
    with pytest.raises(SystemExit, match="--preset or --config"):
        cli_main(["fit-function"])


def test_cli_make_reference_bad_problem(tmp_path, capsys):
    rc = cli_main(["make-reference", "--problem", "heat",
                   "--out", str(tmp_path)])
    assert rc == 2
    assert "allen_cahn" in capsys.readouterr().err


def test_cli_make_reference_writes_csv(tmp_path, capsys):
    rc = cli_main(["make-reference", "--problem", "allen_cahn",
                   "--out", str(tmp_path)])
    assert rc == 0
    path = tmp_path / "reference_allen_cahn.csv"
    assert path.exists()
    from fekan.physics import read_reference_csv
    axes, values = read_reference_csv(path)
    assert values.shape == (101, 256)
    assert len(axes[0]) == 101 and len(axes[1]) == 256
    capsys.readouterr()


def test_cli_compare(tmp_path, capsys):
    _, d = run_experiment(tiny_cfg(), seeds=[0], out_dir=str(tmp_path))
    rc = cli_main(["compare", os.path.join(d, "summary.json")])
    assert rc == 0
    out = capsys.readouterr().out
    assert "tiny-funfit" in out and "rel_l2 mean" in out
