import json
import shutil

import numpy as np
import pytest
import yaml

from mdhg.cli import main
from mdhg.config import RunConfig
from mdhg.exceptions import ConfigError
from mdhg.export import read_layer
from mdhg.pipeline import Pipeline, run_pipeline, thread_cap, write_artifacts

from conftest import MINICITY

PER_PERIOD = {
    "zeta.geojson", "z.geojson", "d_sp.geojson",
    "i_access__commute.geojson", "i_access__recreational.geojson",
    "zi_access__commute.geojson", "zi_access__recreational.geojson",
    "sr.geojson", "sr_band.geojson", "recovery_profiles.csv", "comparisons.csv",
    "station_series.csv", "surplus.csv", "trip_tally.json",
}


def run_cli(*args):
    with pytest.raises(SystemExit) as exc:
        main(list(args))
    return exc.value.code


@pytest.fixture(scope="module")
def pipe(tmp_path_factory):
    cfg = RunConfig.from_file(MINICITY / "run.yaml")
    cfg.output_dir = tmp_path_factory.mktemp("pipe") / "out"
    return Pipeline(cfg)


def test_full_artifact_set(minicity_config):
    manifest = run_pipeline(minicity_config)
    out = minicity_config.output_dir
    entries = json.loads(manifest.read_text())["artifacts"]
    paths = {e["path"] for e in entries}
    for period in ("before", "after"):
        assert {f"{period}/{name}" for name in PER_PERIOD} <= paths
    assert "overlays.csv" in paths
    on_disk = {str(p.relative_to(out)) for p in out.rglob("*") if p.is_file()} - {"manifest.json"}
    assert on_disk == paths


def test_zone_universe_is_conserved(minicity_config):
    run_pipeline(minicity_config)
    universes = {frozenset(read_layer(p).zone_ids) for p in minicity_config.output_dir.rglob("*.geojson")}
    assert universes == {frozenset(f"Z{c}{r}" for c in range(3) for r in range(3))}


def test_unserved_and_never_served_markers(pipe):
    assert "Z21" not in pipe.served("before") and "Z21" in pipe.served("after")
    assert pipe.no_service("before") == frozenset({"Z21"})
    assert pipe.never_served == frozenset({"Z22"})
    za = pipe.availability("before")
    dsp = pipe.d_sp("before")
    i = list(za.zone_ids).index("Z21")
    assert np.all(dsp[i] == 1.0)
    others = np.delete(dsp, i, axis=0)
    assert others.min() >= 0 and others.max() <= 1


def test_reruns_are_hash_identical(tmp_path, minicity_config):
    first = json.loads(run_pipeline(minicity_config).read_text())
    minicity_config.output_dir = tmp_path / "again"
    second = json.loads(run_pipeline(minicity_config).read_text())
    assert first == second


def test_thread_count_does_not_change_output(tmp_path, minicity_config, monkeypatch):
    monkeypatch.setenv("EQUITY_THREADS", "1")
    assert thread_cap() == 1
    one = json.loads(run_pipeline(minicity_config).read_text())
    monkeypatch.setenv("EQUITY_THREADS", "4")
    minicity_config.output_dir = tmp_path / "four"
    assert json.loads(run_pipeline(minicity_config).read_text()) == one


def _config_copy(tmp_path, edit):
    dst = tmp_path / "city"
    shutil.copytree(MINICITY, dst)
    raw = yaml.safe_load((dst / "run.yaml").read_text())
    edit(raw)
    (dst / "run.yaml").write_text(yaml.safe_dump(raw))
    return dst / "run.yaml"


def test_missing_trips_file_names_path(tmp_path, capsys):
    cfg = _config_copy(tmp_path, lambda r: r["periods"]["before"].update(trips=["nope.csv"]))
    assert run_cli("run", "--config", str(cfg), "-o", str(tmp_path / "o")) == 1
    assert "nope.csv" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_bad_parameter_is_config_error(tmp_path):
    cfg = _config_copy(tmp_path, lambda r: r["params"].update(threshold_range=[0.3, 1.5]))
    assert run_cli("run", "--config", str(cfg), "-o", str(tmp_path / "o")) == 1
    with pytest.raises(ConfigError):
        RunConfig.from_file(tmp_path / "missing.yaml")


def test_corrupt_zones_are_input_errors(tmp_path, capsys):
    cfg = _config_copy(tmp_path, lambda r: None)
    (cfg.parent / "zones.geojson").write_text('{"type": "FeatureCollection", "features": ['
                                               '{"type": "Feature", "properties": {"zone_id": "A", "parent_id": "P"},'
                                               ' "geometry": {"type": "Point", "coordinates": [-73.9, 40.7]}}]}')
    assert run_cli("run", "--config", str(cfg), "-o", str(tmp_path / "o")) == 2
    assert capsys.readouterr().err.startswith("error: [")
    assert not (tmp_path / "o").exists()


def test_failed_writer_leaves_nothing(tmp_path):
    def boom(path):
        raise RuntimeError("disk on fire")

    out = tmp_path / "o"
    with pytest.raises(RuntimeError):
        write_artifacts({"a.txt": lambda p: p.write_text("x"), "b.txt": boom}, out)
    assert not out.exists()
    assert list(tmp_path.iterdir()) == []


def test_refuses_foreign_directory(tmp_path):
    (tmp_path / "keep.txt").write_text("mine")
    with pytest.raises(ConfigError):
        write_artifacts({"a.txt": lambda p: p.write_text("x")}, tmp_path)
    assert (tmp_path / "keep.txt").read_text() == "mine"


@pytest.mark.parametrize("command,extra", [
    ("ingest", []), ("availability", ["--hour", "8"]), ("metrics", ["--hour", "8", "--category", "commute"]),
    ("recovery", []), ("overlay", []), ("compare", []), ("cluster", ["--hour", "8"]),
])
def test_subcommands(tmp_path, command, extra):
    out = tmp_path / command
    code = run_cli(command, "--config", str(MINICITY / "run.yaml"), "--period", "before", "-o", str(out), *extra)
    assert code == 0
    entries = json.loads((out / "manifest.json").read_text())["artifacts"]
    assert entries


def test_strict_paper_mode_runs(tmp_path):
    assert run_cli("run", "--config", str(MINICITY / "run.yaml"), "--strict-paper", "-o", str(tmp_path / "s")) == 0


def test_diff_command(tmp_path, capsys):
    out = tmp_path / "o"
    assert run_cli("run", "--config", str(MINICITY / "run.yaml"), "-o", str(out)) == 0
    table = tmp_path / "d.csv"
    assert run_cli("diff", str(out / "before/zeta.geojson"), str(out / "after/zeta.geojson"), "-o", str(table)) == 0
    assert table.read_text().startswith("zone_id,hour,before,after,delta,status")
    assert run_cli("diff", str(out / "before/zeta.geojson"), str(tmp_path / "none.csv")) == 2


def test_bad_hour_is_usage_error(tmp_path):
    assert run_cli("availability", "--config", str(MINICITY / "run.yaml"), "--hour", "25", "-o", str(tmp_path)) == 1
