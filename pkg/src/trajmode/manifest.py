"""Run manifest: content digests for every stage input and output.

The manifest makes runs auditable and resumable: a stage is skipped only
when its recorded input digests, output digests, and the config hash all
match the current state on disk. No timestamps are stored, so reruns on
identical inputs produce identical manifests.
"""

import hashlib
import json
from pathlib import Path
from typing import Iterable, Optional

from . import __version__

MANIFEST_NAME = "manifest.json"


def file_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def config_hash(config_dict: dict) -> str:
    canon = json.dumps(config_dict, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


class RunManifest:
    def __init__(self, config_digest: str):
        self.data: dict = {
            "tool_version": __version__,
            "config_hash": config_digest,
            "stages": {},
            "counts": {},
            "warnings": [],
        }

    @classmethod
    def load(cls, out_dir: str | Path) -> Optional["RunManifest"]:
        path = Path(out_dir) / MANIFEST_NAME
        if not path.exists():
            return None
        manifest = cls.__new__(cls)
        with open(path, encoding="utf-8") as fh:
            manifest.data = json.load(fh)
        return manifest

    def save(self, out_dir: str | Path) -> None:
        path = Path(out_dir) / MANIFEST_NAME
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.data, fh, sort_keys=True, separators=(",", ":"))
            fh.write("\n")

    def add_warning(self, message: str) -> None:
        if message not in self.data["warnings"]:
            self.data["warnings"].append(message)

    def set_counts(self, counts: dict) -> None:
        self.data["counts"].update(counts)

    def record_stage(
        self, stage: str, inputs: Iterable[str | Path], outputs: Iterable[str | Path]
    ) -> None:
        self.data["stages"][stage] = {
            "inputs": {str(p): file_digest(p) for p in sorted(map(str, inputs))},
            "outputs": {str(p): file_digest(p) for p in sorted(map(str, outputs))},
        }

    def stage_fresh(
        self,
        stage: str,
        inputs: Iterable[str | Path],
        config_digest: str,
    ) -> bool:
        """True when the stage's recorded run still matches reality.

        Inputs are re-digested; recorded outputs must all exist with their
        recorded digests; the config hash must be unchanged.
        """
        if self.data.get("config_hash") != config_digest:
            return False
        entry = self.data["stages"].get(stage)
        if entry is None:
            return False
        current_inputs = {}
        for p in sorted(map(str, inputs)):
            if not Path(p).exists():
                return False
            current_inputs[p] = file_digest(p)
        if entry["inputs"] != current_inputs:
            return False
        for p, digest in entry["outputs"].items():
            if not Path(p).exists() or file_digest(p) != digest:
                return False
        return True
