"""File storage for stage artifacts: checkpoints, field histories, CSV tables, JSON records."""

import io
import json
import logging
import os
import re
import shutil
import tempfile
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from ..core.gpe_engine import BackgroundState, FieldHistory
from ..models import DefectPotential, PolaritonParams, PumpProfile, SimGrid

logger = logging.getLogger(__name__)

MANIFEST = "manifest.json"
FLOAT_FORMAT = "%.12g"
TEXT_SUFFIXES = (".svg", ".md")
_HASH_STAMP = re.compile(r"<!-- config_hash: ([0-9a-f]+) -->")


class StorageError(Exception):
    """Storage operation error."""
    pass


class MissingUpstreamArtifact(StorageError):
    """A stage input is absent, stale (other config hash) or unreadable."""

    def __init__(self, stage: str, path: Union[str, Path], reason: str = "missing"):
        super().__init__(f"{stage}: {reason} artifact {path}; run the '{stage}' stage first")
        self.stage = stage
        self.path = str(path)
        self.reason = reason


class ArtifactExistsError(StorageError):
    """Stage outputs exist and --overwrite was not given."""

    def __init__(self, path: Union[str, Path]):
        super().__init__(f"{path} already holds results; pass --overwrite to replace them")
        self.path = str(path)


class ArtifactStore:
    """Stage-per-directory artifact storage under one output root.

    Every artifact carries the config hash; a stage counts as complete once
    its manifest is written, and the manifest lists the stages it read.
    """

    def __init__(self, root: Union[str, Path], config_hash: str, overwrite: bool = False):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.config_hash = config_hash
        self.overwrite = overwrite

    def stage_dir(self, stage: str) -> Path:
        path = self.root / stage
        path.mkdir(parents=True, exist_ok=True)
        return path

    # Atomic writes
    def _atomic_write(self, path: Path, payload: Union[str, bytes]) -> None:
        """Write to a temp file in the target directory, then rename over the target."""
        path.parent.mkdir(parents=True, exist_ok=True)
        mode = "wb" if isinstance(payload, bytes) else "w"
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, mode, **({} if mode == "wb" else {"encoding": "utf-8"})) as f:
                f.write(payload)
            os.replace(tmp, path)
        except OSError as e:
            Path(tmp).unlink(missing_ok=True)
            raise StorageError(f"Failed to save {path.name}: {e}")

    # Stage lifecycle
    def begin_stage(self, stage: str) -> Path:
        """Claim a stage directory, refusing to clobber finished results."""
        path = self.root / stage
        if (path / MANIFEST).exists():
            if not self.overwrite:
                raise ArtifactExistsError(path)
            logger.info(f"Overwriting stage '{stage}' in {path}")
            shutil.rmtree(path)
        return self.stage_dir(stage)

    def finish_stage(self, stage: str, files: Iterable[str], inputs: Sequence[str] = ()) -> None:
        manifest = {
            "stage": stage,
            "config_hash": self.config_hash,
            "files": sorted(files),
            "inputs": list(inputs),
            "finished": datetime.now().isoformat(timespec="seconds"),
        }
        self._atomic_write(self.root / stage / MANIFEST, json.dumps(manifest, indent=2))
        logger.info(f"Stage '{stage}' complete: {len(manifest['files'])} file(s)")

    def require(self, stage: str, _seen: Optional[set] = None) -> Dict[str, Any]:
        """Manifest of a finished stage whose own inputs are all still valid."""
        seen = _seen if _seen is not None else set()
        path = self.root / stage / MANIFEST
        if not path.exists():
            raise MissingUpstreamArtifact(stage, path)
        manifest = self._load_json(path, stage)
        if manifest.get("config_hash") != self.config_hash:
            logger.warning(f"Stage '{stage}' was produced by another configuration")
            raise MissingUpstreamArtifact(stage, path, "stale")
        for name in manifest.get("files", []):
            if not (self.root / stage / name).exists():
                raise MissingUpstreamArtifact(stage, self.root / stage / name)
            if name.endswith(TEXT_SUFFIXES):
                self.read_text(stage, name)
        seen.add(stage)
        for upstream in manifest.get("inputs", []):
            if upstream not in seen:
                self.require(upstream, seen)
        return manifest

    def has_stage(self, stage: str) -> bool:
        try:
            self.require(stage)
            return True
        except MissingUpstreamArtifact:
            return False

    # JSON records
    def _load_json(self, file_path: Path, stage: str) -> Dict[str, Any]:
        """Load JSON; corrupt files are backed up and reported as missing."""
        try:
            with open(file_path, "r", encoding="utf-8") as f:
                return json.load(f)
        except json.JSONDecodeError as e:
            logger.warning(f"Corrupted JSON in {file_path.name}: {e}")
            backup = file_path.with_suffix(f".backup.{datetime.now().strftime('%Y%m%d_%H%M%S')}")
            try:
                shutil.copy2(file_path, backup)
                logger.info(f"Backed up corrupted file to: {backup}")
            except OSError as backup_error:
                logger.error(f"Failed to back up {file_path.name}: {backup_error}")
            raise MissingUpstreamArtifact(stage, file_path, "corrupt") from e
        except OSError as e:
            raise MissingUpstreamArtifact(stage, file_path, f"unreadable ({e})") from e

    def write_json(self, stage: str, name: str, data: Dict[str, Any]) -> str:
        record = {"config_hash": self.config_hash, **data}
        self._atomic_write(self.stage_dir(stage) / name,
                           json.dumps(record, indent=2, default=_json_default, sort_keys=True))
        return name

    def read_json(self, stage: str, name: str) -> Dict[str, Any]:
        path = self.root / stage / name
        if not path.exists():
            raise MissingUpstreamArtifact(stage, path)
        record = self._load_json(path, stage)
        if record.get("config_hash") != self.config_hash:
            raise MissingUpstreamArtifact(stage, path, "stale")
        return record

    # CSV tables
    def write_table(self, stage: str, name: str,
                    rows: Union[pd.DataFrame, List[Dict[str, Any]]],
                    header: Optional[Dict[str, Any]] = None) -> str:
        """CSV with a '#' metadata header and 12 significant digits."""
        frame = rows if isinstance(rows, pd.DataFrame) else pd.DataFrame(rows)
        lines = [f"# config_hash: {self.config_hash}"]
        for key, value in (header or {}).items():
            lines.append(f"# {key}: {json.dumps(value, default=_json_default)}")
        body = frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        self._atomic_write(self.stage_dir(stage) / name, "\n".join(lines) + "\n" + body)
        return name

    def read_table(self, stage: str, name: str) -> Tuple[pd.DataFrame, Dict[str, Any]]:
        path = self.root / stage / name
        if not path.exists():
            raise MissingUpstreamArtifact(stage, path)
        header: Dict[str, Any] = {}
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
        body_lines = []
        for line in text.splitlines():
            if line.startswith("# "):
                key, _, value = line[2:].partition(": ")
                try:
                    header[key] = json.loads(value)
                except json.JSONDecodeError:
                    header[key] = value
            else:
                body_lines.append(line)
        if header.get("config_hash") != self.config_hash:
            raise MissingUpstreamArtifact(stage, path, "stale")
        frame = pd.read_csv(io.StringIO("\n".join(body_lines)))
        return frame, header

    # Text (SVG, markdown)
    def write_text(self, stage: str, name: str, text: str) -> str:
        """Write text with the config hash as a leading comment (after any XML declaration)."""
        stamp = f"<!-- config_hash: {self.config_hash} -->"
        if text.startswith("<?xml"):
            declaration, _, rest = text.partition("\n")
            text = f"{declaration}\n{stamp}\n{rest}"
        else:
            text = f"{stamp}\n{text}"
        self._atomic_write(self.stage_dir(stage) / name, text)
        return name

    def read_text(self, stage: str, name: str) -> str:
        path = self.root / stage / name
        if not path.exists():
            raise MissingUpstreamArtifact(stage, path)
        text = path.read_text(encoding="utf-8")
        if _embedded_hash(text) != self.config_hash:
            raise MissingUpstreamArtifact(stage, path, "stale")
        return text

    # Array checkpoints
    def write_arrays(self, stage: str, name: str, arrays: Dict[str, np.ndarray],
                     metadata: Dict[str, Any]) -> str:
        meta = json.dumps({"config_hash": self.config_hash, **metadata}, default=_json_default,
                          sort_keys=True)
        buffer = io.BytesIO()
        np.savez(buffer, __metadata__=np.array(meta), **arrays)
        self._atomic_write(self.stage_dir(stage) / name, buffer.getvalue())
        return name

    def read_arrays(self, stage: str, name: str) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
        path = self.root / stage / name
        if not path.exists():
            raise MissingUpstreamArtifact(stage, path)
        try:
            with np.load(path, allow_pickle=False) as data:
                arrays = {key: data[key] for key in data.files if key != "__metadata__"}
                metadata = json.loads(str(data["__metadata__"]))
        except (OSError, ValueError, KeyError) as e:
            raise MissingUpstreamArtifact(stage, path, f"unreadable ({e})") from e
        if metadata.get("config_hash") != self.config_hash:
            raise MissingUpstreamArtifact(stage, path, "stale")
        return arrays, metadata

    # Recorded field histories
    def write_history(self, stage: str, name: str, history: FieldHistory,
                      extra: Optional[Dict[str, Any]] = None) -> str:
        """δφ(x, t) as a (n_times, n_points) matrix with its sampling in the sidecar."""
        metadata = {
            "units": {"times": "ps", "x": "um", "frames": "um^-1/2", "omega_p": "1/ps"},
            "kind": history.kind,
            "omega_p": history.omega_p,
            "dt_record": history.dt_record,
            "record_stride": history.metadata.get("record_stride"),
            "demodulated": bool(history.metadata.get("demodulated", False)),
            "run": {k: v for k, v in history.metadata.items()
                    if k not in ("record_stride", "demodulated")},
            **(extra or {}),
        }
        return self.write_arrays(stage, name, {"times": history.times, "x": history.x,
                                               "frames": history.frames}, metadata)

    def read_history(self, stage: str, name: str) -> FieldHistory:
        arrays, meta = self.read_arrays(stage, name)
        return FieldHistory(
            times=arrays["times"], x=arrays["x"], frames=arrays["frames"],
            omega_p=meta["omega_p"], dt_record=meta["dt_record"], kind=meta["kind"],
            metadata={**meta.get("run", {}), "record_stride": meta["record_stride"],
                      "demodulated": meta["demodulated"]},
        )

    # Background checkpoint
    def save_background(self, stage: str, background: BackgroundState,
                        extra: Optional[Dict[str, Any]] = None) -> str:
        arrays = {"x": background.x, "psi0": background.psi0, "n0": background.n0,
                  "v0": background.v0, "c_B": background.c_B, "m_det": background.m_det}
        metadata = {
            "units": {"x": "um", "psi0": "um^-1/2", "n0": "um^-1", "v0": "um/ps",
                      "c_B": "um/ps", "m_det": "kg"},
            "grid": background.grid.model_dump(mode="json"),
            "params": background.params.model_dump(mode="json"),
            "pump": background.pump.model_dump(mode="json"),
            "defect": background.defect.model_dump(mode="json"),
            "horizon_x": background.horizon_x,
            "horizon_crossings": background.horizon_crossings,
            "residual": background.residual,
            "t": background.t,
            "margin": background.margin,
            "absorber_strength": background.absorber_strength,
            **(extra or {}),
        }
        return self.write_arrays(stage, "background.npz", arrays, metadata)

    def load_background(self, stage: str = "steady") -> BackgroundState:
        arrays, meta = self.read_arrays(stage, "background.npz")
        return BackgroundState(
            grid=SimGrid(**meta["grid"]), params=PolaritonParams(**meta["params"]),
            pump=PumpProfile(**meta["pump"]), defect=DefectPotential(**meta["defect"]),
            psi0=arrays["psi0"], n0=arrays["n0"], v0=arrays["v0"], c_B=arrays["c_B"],
            m_det=arrays["m_det"], horizon_x=meta["horizon_x"], residual=meta["residual"],
            t=meta["t"], margin=meta["margin"], absorber_strength=meta["absorber_strength"],
            horizon_crossings=meta.get("horizon_crossings", 0),
        )


def _json_default(value: Any) -> Any:
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, complex):
        return [value.real, value.imag]
    if hasattr(value, "model_dump"):
        return value.model_dump(mode="json")
    return str(value)


def _embedded_hash(text: str) -> Optional[str]:
    """Config hash from the comment in the first two lines, if any."""
    for line in text.splitlines()[:2]:
        match = _HASH_STAMP.fullmatch(line.strip())
        if match:
            return match.group(1)
    return None
