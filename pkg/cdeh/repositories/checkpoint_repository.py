"""
cdeh/repositories/checkpoint_repository.py
Checkpoint persistence: manifest.json (names, shapes, dtypes, byte offsets,
counters, scaler, resolved config) + one raw little-endian .bin per network
"""

from __future__ import annotations

import json
import shutil
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple

import numpy as np
from loguru import logger

from cdeh.nn.optim import Adam
from cdeh.nn.params import NetParams
from cdeh.utils.exceptions import ConfigError, StructuralError

MANIFEST = "manifest.json"
EPISODE_PREFIX = "episode-"
DIAGNOSTIC_PREFIX = "diagnostic-"


@dataclass
class Checkpoint:
    networks: Dict[str, Dict[str, np.ndarray]]
    optimizers: Dict[str, Tuple[int, Dict[str, np.ndarray]]]
    meta: Dict[str, Any] = field(default_factory=dict)
    directory: Optional[Path] = None


def _write_arrays(path: Path, arrays: Mapping[str, np.ndarray]) -> List[Dict[str, Any]]:
    entries = []
    offset = 0
    with path.open("wb") as handle:
        for name, array in arrays.items():
            little = np.ascontiguousarray(array, dtype=array.dtype.newbyteorder("<"))
            data = little.tobytes()
            handle.write(data)
            entries.append({
                "name": name,
                "shape": list(array.shape),
                "dtype": array.dtype.name,
                "offset": offset,
                "nbytes": len(data),
            })
            offset += len(data)
    return entries


def _read_arrays(path: Path, entries: List[Dict[str, Any]]) -> Dict[str, np.ndarray]:
    raw = path.read_bytes()
    arrays = {}
    for entry in entries:
        dtype = np.dtype(entry["dtype"]).newbyteorder("<")
        chunk = raw[entry["offset"]:entry["offset"] + entry["nbytes"]]
        if len(chunk) != entry["nbytes"]:
            raise StructuralError(f"{path.name}: array {entry['name']!r} is truncated")
        array = np.frombuffer(chunk, dtype=dtype).reshape(entry["shape"])
        arrays[entry["name"]] = array.astype(np.dtype(entry["dtype"]), copy=True)
    return arrays


class CheckpointRepository:
    def __init__(self, root: Path):
        self.root = Path(root)

    # ===================================================================
    # WRITE
    # ===================================================================

    def episode_dir(self, episode: int) -> Path:
        return self.root / f"{EPISODE_PREFIX}{episode:06d}"

    def diagnostic_dir(self, episode: int) -> Path:
        return self.root / f"{DIAGNOSTIC_PREFIX}{EPISODE_PREFIX}{episode:06d}"

    def save(
        self,
        directory: Path,
        networks: Mapping[str, NetParams],
        optimizers: Mapping[str, Adam],
        meta: Dict[str, Any],
    ) -> Path:
        directory = Path(directory)
        staging = directory.with_name(directory.name + ".partial")
        if staging.exists():
            shutil.rmtree(staging)
        staging.mkdir(parents=True)

        manifest: Dict[str, Any] = {"networks": {}, "optimizers": {}, "meta": meta}
        for name, params in networks.items():
            file_name = f"{name}.bin"
            manifest["networks"][name] = {
                "file": file_name,
                "arrays": _write_arrays(staging / file_name, dict(params.arrays())),
            }
        for name, optimizer in optimizers.items():
            file_name = f"{name}.adam.bin"
            manifest["optimizers"][name] = {
                "file": file_name,
                "t": optimizer.t,
                "arrays": _write_arrays(staging / file_name, optimizer.state_arrays()),
            }
        (staging / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8")

        if directory.exists():
            shutil.rmtree(directory)
        staging.rename(directory)
        logger.debug(f"Checkpoint written to {directory}")
        return directory

    # ===================================================================
    # READ
    # ===================================================================

    def load(self, directory: Path) -> Checkpoint:
        directory = Path(directory)
        manifest_path = directory / MANIFEST
        if not manifest_path.is_file():
            raise ConfigError(f"no checkpoint at {directory}")
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        networks = {
            name: _read_arrays(directory / entry["file"], entry["arrays"])
            for name, entry in manifest["networks"].items()
        }
        optimizers = {
            name: (int(entry["t"]), _read_arrays(directory / entry["file"], entry["arrays"]))
            for name, entry in manifest["optimizers"].items()
        }
        return Checkpoint(networks=networks, optimizers=optimizers, meta=manifest.get("meta", {}), directory=directory)

    def latest(self) -> Optional[Path]:
        """Newest complete periodic/final checkpoint under root, if any"""
        if not self.root.is_dir():
            return None
        candidates = sorted(
            p for p in self.root.iterdir()
            if p.is_dir() and p.name.startswith(EPISODE_PREFIX) and (p / MANIFEST).is_file()
        )
        return candidates[-1] if candidates else None

    def episodes(self) -> List[Path]:
        if not self.root.is_dir():
            return []
        return sorted(p for p in self.root.iterdir() if p.is_dir() and p.name.startswith(EPISODE_PREFIX))

    @staticmethod
    def restore(checkpoint: Checkpoint, networks: Mapping[str, NetParams], optimizers: Mapping[str, Adam]) -> None:
        """Copy checkpoint arrays into live stores; names and shapes must match"""
        missing = set(networks) - set(checkpoint.networks)
        if missing:
            raise StructuralError(f"checkpoint lacks networks {sorted(missing)}")
        for name, params in networks.items():
            params.load_arrays(checkpoint.networks[name])
        for name, optimizer in optimizers.items():
            if name in checkpoint.optimizers:
                t, arrays = checkpoint.optimizers[name]
                optimizer.load_state(t, arrays)
