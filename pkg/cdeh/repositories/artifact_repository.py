"""
cdeh/repositories/artifact_repository.py
CSV tables and JSON sidecar manifests
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import List, Sequence, Type, TypeVar

from pydantic import BaseModel

from cdeh.schemas.records import RunManifest

Row = TypeVar("Row", bound=BaseModel)


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


class ArtifactRepository:
    def __init__(self, root: Path):
        self.root = Path(root)

    def path(self, name: str) -> Path:
        return self.root / name

    def ensure_root(self) -> Path:
        self.root.mkdir(parents=True, exist_ok=True)
        return self.root

    # ===================================================================
    # CSV
    # ===================================================================

    def write_rows(self, name: str, rows: Sequence[BaseModel], model: Type[BaseModel]) -> Path:
        path = self.path(name)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(list(model.model_fields))
            for row in rows:
                writer.writerow([_cell(getattr(row, f)) for f in model.model_fields])
        return path

    def append_rows(self, name: str, rows: Sequence[BaseModel], model: Type[BaseModel]) -> Path:
        path = self.path(name)
        if not path.is_file():
            return self.write_rows(name, rows, model)
        with path.open("a", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            for row in rows:
                writer.writerow([_cell(getattr(row, f)) for f in model.model_fields])
        return path

    def read_rows(self, name: str, model: Type[Row]) -> List[Row]:
        path = self.path(name)
        if not path.is_file():
            return []
        with path.open(newline="", encoding="utf-8") as handle:
            return [
                model.model_validate({k: (v if v != "" else None) for k, v in record.items()})
                for record in csv.DictReader(handle)
            ]

    # ===================================================================
    # MANIFEST
    # ===================================================================

    def write_manifest(self, name: str, manifest: RunManifest) -> Path:
        path = self.path(name)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(manifest.model_dump_json(indent=2), encoding="utf-8")
        return path

    def read_manifest(self, name: str) -> RunManifest:
        return RunManifest.model_validate_json(self.path(name).read_text(encoding="utf-8"))
