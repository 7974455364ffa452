"""Run manifests: what was run, with which seeds, producing which bytes."""

from __future__ import annotations

import hashlib
import json
import logging
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path

from pydantic import BaseModel, Field

logger = logging.getLogger(__name__)

PACKAGE = "conductance-lab"
MANIFEST_NAME = "manifest.json"


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def file_digest(path: Path | str) -> str:
    return sha256_hex(Path(path).read_bytes())


def code_version() -> str:
    try:
        return metadata.version(PACKAGE)
    except metadata.PackageNotFoundError:
        return "0+unknown"


class RunManifest(BaseModel):
    """Reproducibility record of one ``run``.

    Everything except ``started`` and ``wall_clock`` is a function of the
    config and the code version.
    """

    experiment: str
    config_hash: str
    config: dict
    code_version: str = Field(default_factory=code_version)
    seeds: list[int] = Field(default_factory=list)
    started: str = Field(default_factory=lambda: datetime.now(timezone.utc).isoformat())
    wall_clock: float = 0.0
    outputs: dict[str, str] = Field(default_factory=dict)

    def record_output(self, path: Path) -> None:
        self.outputs[path.name] = file_digest(path)

    def write(self, directory: Path | str) -> Path:
        path = Path(directory) / MANIFEST_NAME
        path.write_text(json.dumps(self.model_dump(mode="json"), indent=2) + "\n", encoding="utf-8")
        logger.info("Manifest written to %s", path)
        return path

    @classmethod
    def read(cls, directory: Path | str) -> RunManifest:
        return cls.model_validate_json((Path(directory) / MANIFEST_NAME).read_text(encoding="utf-8"))

    def verify(self, directory: Path | str) -> list[str]:
        """Output files whose bytes no longer match the recorded digests."""
        directory = Path(directory)
        return [
            name
            for name, digest in self.outputs.items()
            if not (directory / name).exists() or file_digest(directory / name) != digest
        ]
