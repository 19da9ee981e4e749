"""
cdeh/utils/provenance.py
Build version and config fingerprint stamped on every artifact
"""

from __future__ import annotations

import hashlib
import json
import subprocess
from functools import lru_cache
from pathlib import Path
from typing import Any, Mapping

from cdeh import __version__


@lru_cache()
def build_version() -> str:
    """`git describe` of the source tree, or the package version outside a checkout"""
    try:
        result = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=5,
            check=True,
        )
        described = result.stdout.strip()
        if described:
            return described
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def config_hash(resolved: Mapping[str, Any]) -> str:
    canonical = json.dumps(resolved, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]
