"""Run manifests: everything needed to reproduce a command bitwise.

A manifest records the command, the fully resolved config in canonical
string form, the master seed and every derived sub-seed, the package
version, the wall-clock duration, and a SHA-256 inventory of the output
files.  Re-running the same command with `--config manifest.json` must
reproduce every CSV byte for byte.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .. import __version__


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    profile: str
    config: dict
    seed: int
    sub_seeds: dict = field(default_factory=dict)
    version: str = __version__
    wall_clock_s: float = 0.0
    outputs: list = field(default_factory=list)

    def add_outputs(self, out_dir: Path, names):
        for name in names:
            p = Path(out_dir) / name
            self.outputs.append({
                "name": name,
                "bytes": p.stat().st_size,
                "sha256": _sha256(p),
            })

    def write(self, out_dir: Path) -> Path:
        path = Path(out_dir) / "manifest.json"
        payload = {
            "command": self.command,
            "profile": self.profile,
            "config": self.config,
            "seed": self.seed,
            "sub_seeds": self.sub_seeds,
            "version": self.version,
            "wall_clock_s": self.wall_clock_s,
            "outputs": self.outputs,
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path

    @classmethod
    def load(cls, path) -> "RunManifest":
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
        return cls(d["command"], d["profile"], d["config"], d["seed"],
                   d.get("sub_seeds", {}), d.get("version", "?"),
                   d.get("wall_clock_s", 0.0), d.get("outputs", []))
