"""Run manifests: everything needed to reproduce a CLI invocation."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__


def file_sha256(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass
class RunManifest:
    command: str
    argv: list[str]
    config: dict = field(default_factory=dict)
    master_seed: int | None = None
    input_hashes: dict[str, str] = field(default_factory=dict)
    stage_seconds: dict[str, float] = field(default_factory=dict)
    tool_version: str = __version__
    rng: str = "pcg64"

    def add_input(self, path: str | Path) -> None:
        path = Path(path)
        if path.is_file():
            self.input_hashes[str(path)] = file_sha256(path)

    def write(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = {
            "command": self.command,
            "argv": self.argv,
            "config": self.config,
            "master_seed": self.master_seed,
            "input_hashes": self.input_hashes,
            "stage_seconds": self.stage_seconds,
            "tool_version": self.tool_version,
            "rng": self.rng,
        }
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
