# elapsed/store.py
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Sequence

import numpy as np
from pydantic import BaseModel

from elapsed.grid import DensityState
from elapsed.models import RunManifest

logger = logging.getLogger(__name__)

CSV_FORMAT = "%.17g"


# Run directory with a registry of every emitted file
class OutputStore:
    def __init__(self, root):
        self.root = Path(root)
        self.reset_store()

    def reset_store(self):
        self.root.mkdir(parents=True, exist_ok=True)
        self.files: List[str] = []

    def _register(self, name: str) -> Path:
        path = self.root / name
        path.parent.mkdir(parents=True, exist_ok=True)
        if name not in self.files:
            self.files.append(name)
        return path

    def write_csv(self, name: str, header: Sequence[str], rows) -> Path:
        path = self._register(name)
        table = np.asarray(rows, dtype=float)
        if table.size == 0:
            path.write_text(",".join(header) + "\n")
        else:
            np.savetxt(path, np.atleast_2d(table), delimiter=",", header=",".join(header), comments="", fmt=CSV_FORMAT)
        logger.debug("wrote %s (%d rows)", name, 0 if table.size == 0 else np.atleast_2d(table).shape[0])
        return path

    def write_density(self, name: str, f: DensityState, column: str = "value") -> Path:
        return self.write_csv(name, ["x", column], f.to_columns())

    def write_json(self, name: str, payload: Dict[str, Any]) -> Path:
        path = self._register(name)
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        return path

    def write_records(self, name: str, records: Sequence[BaseModel]) -> Path:
        return self.write_json(name, {"records": [r.model_dump(mode="json") for r in records]})

    def write_manifest(self, manifest: RunManifest) -> Path:
        """Written last; lists every file of the run."""
        manifest.files = sorted(self.files)
        path = self.root / "manifest.json"
        path.write_text(manifest.model_dump_json(indent=2) + "\n")
        logger.info("manifest with %d files written to %s", len(manifest.files), path)
        return path
