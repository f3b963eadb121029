"""Workspace layout, stage bookkeeping, and content hashing.

Layout, one directory per object instance:

    <ws>/<object_id>/
        views/       rectified input crops, masks, views.json
        targets/     target cameras + generated images
        asset.gsa    lifted gaussian asset
        report.json  metric report
        stage.json   completed stages, input hashes, flags

Every stage records a hash of its inputs; re-running with unchanged inputs
is a no-op. Nothing here stores wall-clock time: identical inputs must
produce byte-identical trees, that is the whole resumability story.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

from ..errors import MissingFile

STAGE_ORDER = ("harvest", "select", "generate", "lift", "evaluate")


def canonical_json(doc) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def write_json(path, doc) -> None:
    Path(path).write_text(canonical_json(doc) + "\n")


def read_json(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise MissingFile(f"expected file missing: {p}")
    return json.loads(p.read_text())


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_of(*parts) -> str:
    h = hashlib.sha256()
    for part in parts:
        if isinstance(part, str):
            part = part.encode("utf-8")
        h.update(part)
        h.update(b"\x00")
    return h.hexdigest()


def tree_digest(root) -> str:
    """Digest of a directory tree: sorted relative paths + file contents."""
    root = Path(root)
    h = hashlib.sha256()
    if root.is_dir():
        for p in sorted(root.rglob("*")):
            if p.is_file():
                h.update(str(p.relative_to(root)).encode("utf-8"))
                h.update(b"\x00")
                h.update(p.read_bytes())
                h.update(b"\x00")
    return h.hexdigest()


@dataclass
class InstanceDir:
    """Paths and stage state for one object instance."""

    root: Path
    object_id: str

    @property
    def path(self) -> Path:
        return self.root / self.object_id

    @property
    def views_dir(self) -> Path:
        return self.path / "views"

    @property
    def targets_dir(self) -> Path:
        return self.path / "targets"

    @property
    def asset_path(self) -> Path:
        return self.path / "asset.gsa"

    @property
    def report_path(self) -> Path:
        return self.path / "report.json"

    @property
    def stage_path(self) -> Path:
        return self.path / "stage.json"

    def ensure(self) -> None:
        self.views_dir.mkdir(parents=True, exist_ok=True)
        self.targets_dir.mkdir(parents=True, exist_ok=True)

    def read_stage(self) -> dict:
        if self.stage_path.is_file():
            return json.loads(self.stage_path.read_text())
        return {"object_id": self.object_id, "stages": {}, "flags": []}

    def write_stage(self, doc: dict) -> None:
        write_json(self.stage_path, doc)

    def stage_done(self, name: str, input_hash: str) -> bool:
        rec = self.read_stage()["stages"].get(name)
        return bool(rec) and rec.get("hash") == input_hash

    def mark_stage(self, name: str, input_hash: str, **extra) -> None:
        doc = self.read_stage()
        doc["stages"][name] = {"hash": input_hash, **extra}
        self.write_stage(doc)

    def add_flag(self, flag: str) -> None:
        doc = self.read_stage()
        if flag not in doc["flags"]:
            doc["flags"].append(flag)
        self.write_stage(doc)

    @property
    def flags(self) -> list[str]:
        return list(self.read_stage()["flags"])


class Workspace:
    """A batch root holding one InstanceDir per object."""

    def __init__(self, root):
        self.root = Path(root)

    def instance(self, object_id: str) -> InstanceDir:
        return InstanceDir(root=self.root, object_id=object_id)

    def instances(self) -> list[InstanceDir]:
        if not self.root.is_dir():
            return []
        out = []
        for p in sorted(self.root.iterdir()):
            if p.is_dir() and (p / "stage.json").is_file():
                out.append(InstanceDir(root=self.root, object_id=p.name))
        return out

    def digest(self) -> str:
        return tree_digest(self.root)
