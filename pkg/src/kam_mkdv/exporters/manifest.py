"""
Run manifest: config hash, package versions, subcommand, seed and every output.
"""

import logging
import platform
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import scipy

from .json_exporter import JSONExporter

logger = logging.getLogger(__name__)


class ManifestWriter:
    """Collects the files a run writes and saves manifest.json next to them."""

    def __init__(self, out_dir: str, subcommand: str, config_hash: str, seed: Optional[int] = None):
        self.logger = logging.getLogger(__name__)
        self.out_dir = Path(out_dir)
        self.subcommand = subcommand
        self.config_hash = config_hash
        self.seed = seed
        self.outputs: List[Dict[str, str]] = []
        self.exporter = JSONExporter()

    def path(self, name: str) -> str:
        return str(self.out_dir / name)

    def register(self, path: str, kind: str) -> str:
        self.outputs.append({"path": str(path), "kind": kind})
        return path

    def versions(self) -> Dict[str, str]:
        from .. import __version__
        return {"kam_mkdv": __version__, "python": platform.python_version(),
                "numpy": np.__version__, "scipy": scipy.__version__}

    def to_dict(self, status: str = "") -> Dict[str, Any]:
        return {
            "config_hash": self.config_hash,
            "versions": self.versions(),
            "subcommand": self.subcommand,
            "seed": self.seed,
            "status": status,
            "created": datetime.now(timezone.utc).isoformat(),
            "outputs": list(self.outputs),
        }

    def write(self, status: str = "") -> str:
        path = self.path("manifest.json")
        self.exporter.export(self.to_dict(status), path)
        self.logger.info(f"manifest lists {len(self.outputs)} output(s)")
        return path
