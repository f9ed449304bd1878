"""Dataset manifests: which image belongs to which class and split.

File layout (``manifest.txt``)::

    # irislvq-manifest 1
    # notes: free text
    class00/image00.pgm<TAB>0<TAB>train

Paths are relative to the manifest's directory.  A directory laid out as
``root/classNN/imageMM.<ext>`` can be scanned without a manifest.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError

HEADER = "# irislvq-manifest 1"
SPLITS = ("train", "test")
_IMAGE_SUFFIXES = {".pgm", ".png", ".bmp", ".jpg", ".jpeg"}


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    class_id: int
    split: str


@dataclass
class DatasetManifest:
    root: Path
    entries: list[ManifestEntry] = field(default_factory=list)
    notes: str = ""

    def __post_init__(self):
        self.root = Path(self.root)
        self.validate()

    def validate(self) -> None:
        for e in self.entries:
            if e.split not in SPLITS:
                raise DataError(f"{e.path}: unknown split {e.split!r}")
        if not self.entries:
            return
        ids = sorted({e.class_id for e in self.entries})
        if ids != list(range(len(ids))):
            raise DataError(f"class ids must be dense 0..C-1, got {ids[:5]}...")
        train = {e.class_id for e in self.entries if e.split == "train"}
        missing = sorted(set(ids) - train)
        if missing:
            raise DataError(f"classes without training images: {missing}")

    @property
    def num_classes(self) -> int:
        return len({e.class_id for e in self.entries})

    def split(self, name: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == name]

    def resolve(self, entry: ManifestEntry) -> Path:
        return self.root / entry.path

    def save(self, path: str | Path) -> None:
        lines = [HEADER]
        if self.notes:
            lines.append(f"# notes: {self.notes}")
        lines += [f"{e.path}\t{e.class_id}\t{e.split}" for e in self.entries]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "DatasetManifest":
        path = Path(path)
        if path.is_dir():
            candidate = path / "manifest.txt"
            if candidate.exists():
                path = candidate
            else:
                return cls.scan(path)
        entries, notes = [], ""
        for lineno, line in enumerate(path.read_text().splitlines(), 1):
            if line.startswith("# notes:"):
                notes = line[len("# notes:") :].strip()
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DataError(f"{path}:{lineno}: expected 'path<TAB>class<TAB>split'")
            try:
                cid = int(parts[1])
            except ValueError:
                raise DataError(f"{path}:{lineno}: class id {parts[1]!r} is not an integer") from None
            entries.append(ManifestEntry(parts[0], cid, parts[2].strip()))
        return cls(path.parent, entries, notes)

    @classmethod
    def scan(cls, root: str | Path, train_fraction: float = 0.7, seed: int = 0) -> "DatasetManifest":
        """Build a manifest from ``root/<class dir>/<images>`` with a seeded per-class split."""
        root = Path(root)
        class_dirs = sorted(d for d in root.iterdir() if d.is_dir())
        entries = []
        for cid, d in enumerate(class_dirs):
            files = sorted(
                (f for f in d.iterdir() if f.suffix.lower() in _IMAGE_SUFFIXES),
                key=lambda f: [int(t) if t.isdigit() else t for t in re.split(r"(\d+)", f.name)],
            )
            if not files:
                continue
            n_train = max(1, int(math.floor(train_fraction * len(files) + 0.5)))
            order = np.random.default_rng([seed, cid]).permutation(len(files))
            train = set(int(i) for i in order[:n_train])
            for i, f in enumerate(files):
                entries.append(ManifestEntry(f.relative_to(root).as_posix(), cid, "train" if i in train else "test"))
        # re-densify ids in case some directories were empty
        remap = {c: i for i, c in enumerate(sorted({e.class_id for e in entries}))}
        entries = [ManifestEntry(e.path, remap[e.class_id], e.split) for e in entries]
        return cls(root, entries, notes=f"scanned {len(class_dirs)} class directories")
