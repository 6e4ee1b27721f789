"""Reproducibility manifests emitted by every pipeline command."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass
class RunManifest:
    """What a command ran with and what it produced.

    `inputs` and `outputs` map paths to SHA-256 checksums; replaying the
    command with the same config and input checksums reproduces the output
    checksums exactly.
    """

    command: str
    config: dict
    seed: int | None
    inputs: dict[str, str]
    outputs: dict[str, str]
    duration_seconds: float

    def to_dict(self) -> dict:
        return asdict(self)

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(self.to_dict(), handle, indent=2, sort_keys=True)
            handle.write("\n")
