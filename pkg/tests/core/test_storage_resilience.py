"""Artifact store resilience: corrupt, stale and missing stage outputs."""

import json
import tempfile
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from polariton_horizon.core.gpe_engine import FieldHistory
from polariton_horizon.services.storage import (
    ArtifactExistsError,
    ArtifactStore,
    MissingUpstreamArtifact,
)


def test_json_records_carry_the_config_hash():
    with tempfile.TemporaryDirectory() as temp_dir:
        store = ArtifactStore(temp_dir, "abc123")
        store.write_json("bdg", "qnm.json", {"status": "found", "Q": np.float64(12.5),
                                             "omega": complex(0.6, -0.01)})
        record = store.read_json("bdg", "qnm.json")
        assert record["config_hash"] == "abc123"
        assert record["Q"] == 12.5
        assert record["omega"] == [0.6, -0.01]

        other = ArtifactStore(temp_dir, "def456")
        with pytest.raises(MissingUpstreamArtifact) as info:
            other.read_json("bdg", "qnm.json")
        assert info.value.reason == "stale"


def test_corrupted_json_is_backed_up_and_reported():
    with tempfile.TemporaryDirectory() as temp_dir:
        store = ArtifactStore(temp_dir, "abc123")
        store.begin_stage("steady")
        store.finish_stage("steady", [])
        manifest = Path(temp_dir) / "steady" / "manifest.json"
        manifest.write_text('{"stage": json with invalid syntax}')

        with pytest.raises(MissingUpstreamArtifact) as info:
            store.require("steady")
        assert info.value.reason == "corrupt"
        backups = list((Path(temp_dir) / "steady").glob("*.backup.*"))
        assert len(backups) == 1
        assert not store.has_stage("steady")


def test_missing_files_invalidate_a_stage():
    with tempfile.TemporaryDirectory() as temp_dir:
        store = ArtifactStore(temp_dir, "abc123")
        assert not store.has_stage("steady")
        store.begin_stage("steady")
        store.write_text("steady", "note.md", "hello")
        store.finish_stage("steady", ["note.md"])
        assert store.has_stage("steady")

        (Path(temp_dir) / "steady" / "note.md").unlink()
        with pytest.raises(MissingUpstreamArtifact) as info:
            store.require("steady")
        assert info.value.path.endswith("note.md")


def test_stage_inputs_are_checked_transitively():
    with tempfile.TemporaryDirectory() as temp_dir:
        store = ArtifactStore(temp_dir, "abc123")
        for stage, inputs in (("steady", []), ("sweep", ["steady"]), ("fit", ["sweep"])):
            store.begin_stage(stage)
            store.finish_stage(stage, [], inputs=inputs)
        assert store.require("fit")["inputs"] == ["sweep"]

        (Path(temp_dir) / "steady" / "manifest.json").unlink()
        with pytest.raises(MissingUpstreamArtifact) as info:
            store.require("fit")
        assert info.value.stage == "steady"


def test_finished_stages_need_overwrite():
    with tempfile.TemporaryDirectory() as temp_dir:
        store = ArtifactStore(temp_dir, "abc123")
        store.begin_stage("bdg")
        store.write_text("bdg", "modes.csv", "x")
        store.finish_stage("bdg", ["modes.csv"])
        with pytest.raises(ArtifactExistsError):
            store.begin_stage("bdg")

        replacing = ArtifactStore(temp_dir, "abc123", overwrite=True)
        path = replacing.begin_stage("bdg")
        assert not (path / "modes.csv").exists()


def test_tables_keep_their_header():
    with tempfile.TemporaryDirectory() as temp_dir:
        store = ArtifactStore(temp_dir, "abc123")
        rows = [{"omega_meV": 0.41, "abs_HR": 0.12345678901234, "gap_flag": 0},
                {"omega_meV": 0.42, "abs_HR": float("nan"), "gap_flag": 1}]
        store.write_table("sweep", "sweep.csv", rows, header={"units": {"omega": "meV"}})
        frame, header = store.read_table("sweep", "sweep.csv")
        assert header["units"] == {"omega": "meV"}
        assert list(frame.columns) == ["omega_meV", "abs_HR", "gap_flag"]
        assert frame["abs_HR"][0] == pytest.approx(0.123456789012, rel=1e-11)
        assert pd.isna(frame["abs_HR"][1])

        text = (Path(temp_dir) / "sweep" / "sweep.csv").read_text()
        assert text.startswith("# config_hash: abc123\n")


def test_array_checkpoints():
    with tempfile.TemporaryDirectory() as temp_dir:
        store = ArtifactStore(temp_dir, "abc123")
        field = np.exp(1j * np.linspace(0, 1, 16))
        store.write_arrays("dispersion-map", "map_upstream.npz", {"field": field},
                           {"region": "upstream"})
        arrays, meta = store.read_arrays("dispersion-map", "map_upstream.npz")
        np.testing.assert_array_equal(arrays["field"], field)
        assert meta["region"] == "upstream"

        (Path(temp_dir) / "dispersion-map" / "broken.npz").write_bytes(b"not an archive")
        with pytest.raises(MissingUpstreamArtifact):
            store.read_arrays("dispersion-map", "broken.npz")


def test_background_checkpoint_restores_the_state(uniform_background):
    with tempfile.TemporaryDirectory() as temp_dir:
        store = ArtifactStore(temp_dir, "abc123")
        store.save_background("steady", uniform_background, extra={"note": "uniform"})
        restored = store.load_background()
        np.testing.assert_array_equal(restored.psi0, uniform_background.psi0)
        assert restored.grid == uniform_background.grid
        assert restored.pump == uniform_background.pump
        assert restored.horizon_x is None

        _, meta = store.read_arrays("steady", "background.npz")
        assert meta["note"] == "uniform"
        assert json.loads(json.dumps(meta))["units"]["n0"] == "um^-1"


def test_field_history_keeps_its_sampling(uniform_background):
    with tempfile.TemporaryDirectory() as temp_dir:
        store = ArtifactStore(temp_dir, "abc123")
        frames = np.outer(np.arange(1, 5), np.exp(1j * uniform_background.x))
        history = FieldHistory(times=0.5 * np.arange(1, 5), x=uniform_background.x,
                               frames=frames, omega_p=2239.2, dt_record=0.5, kind="noise",
                               metadata={"seed": 7, "record_stride": 25})
        history = history.demodulated(uniform_background)
        store.write_history("dispersion-map", "history_noise.npz", history)

        restored = store.read_history("dispersion-map", "history_noise.npz")
        np.testing.assert_array_equal(restored.frames, history.frames)
        np.testing.assert_array_equal(restored.times, history.times)
        assert restored.dt_record == 0.5
        assert restored.kind == "noise"
        assert restored.metadata["record_stride"] == 25
        assert restored.metadata["demodulated"] is True
        assert restored.metadata["seed"] == 7

        _, meta = store.read_arrays("dispersion-map", "history_noise.npz")
        assert meta["units"]["times"] == "ps"
        assert meta["config_hash"] == "abc123"
        with pytest.raises(MissingUpstreamArtifact) as info:
            ArtifactStore(temp_dir, "def456").read_history("dispersion-map",
                                                          "history_noise.npz")
        assert info.value.reason == "stale"


def test_text_artifacts_carry_the_config_hash():
    with tempfile.TemporaryDirectory() as temp_dir:
        store = ArtifactStore(temp_dir, "abc123")
        store.begin_stage("report")
        svg = '<?xml version="1.0" encoding="utf-8"?>\n<svg></svg>\n'
        store.write_text("report", "fig.svg", svg)
        store.write_text("report", "report.md", "# Report\n")
        store.finish_stage("report", ["fig.svg", "report.md"])

        lines = (Path(temp_dir) / "report" / "fig.svg").read_text().splitlines()
        assert lines[0].startswith("<?xml")
        assert lines[1] == "<!-- config_hash: abc123 -->"
        assert store.read_text("report", "report.md").startswith("<!-- config_hash: abc123 -->")
        assert store.has_stage("report")

        # a figure from another configuration dropped into place
        (Path(temp_dir) / "report" / "fig.svg").write_text(
            '<?xml version="1.0"?>\n<!-- config_hash: def456 -->\n<svg></svg>\n')
        with pytest.raises(MissingUpstreamArtifact) as info:
            store.require("report")
        assert info.value.reason == "stale"

        (Path(temp_dir) / "report" / "report.md").write_text("# Report\n")
        with pytest.raises(MissingUpstreamArtifact):
            store.read_text("report", "report.md")
