"""Dataset manifests, deterministic splits, and preprocessing.

Manifest grammar (line-delimited text, UTF-8, tab-separated):

    #%manifest v1
    #%classes<TAB>normal<TAB>pneumonia
    relative/path.png<TAB>normal<TAB>train
    relative/path2.png<TAB>-<TAB>unsplit

Header lines start with ``#%``; ``#`` alone opens a comment.  A record is
``path [label [split]]`` where ``-`` stands for "no label" and the split
defaults to ``unsplit``.  Class ids are the positions in the classes line.
Image paths are resolved against ``root`` (by default the manifest's
directory).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ConfigError

MANIFEST_VERSION = 1
SPLITS = ("train", "val", "test", "unsplit")


@dataclass(frozen=True)
class ManifestRecord:
    path: str
    label: int | None = None
    split: str = "unsplit"


@dataclass
class DatasetManifest:
    records: list[ManifestRecord]
    class_names: list[str]
    root: Path

    def __post_init__(self):
        seen = set()
        for rec in self.records:
            if rec.path in seen:
                raise ConfigError(f"duplicate path in manifest: {rec.path}")
            seen.add(rec.path)
            if rec.label is not None and not 0 <= rec.label < len(self.class_names):
                raise ConfigError(f"label id {rec.label} out of range for {rec.path}")
            if rec.split not in SPLITS:
                raise ConfigError(f"unknown split {rec.split!r} for {rec.path}")

    def __len__(self) -> int:
        return len(self.records)

    def indices(self, split: str | None = None) -> list[int]:
        if split is None:
            return list(range(len(self.records)))
        return [i for i, r in enumerate(self.records) if r.split == split]

    def labels(self) -> np.ndarray:
        """Labels as an int array with -1 for unlabeled records."""
        return np.array([-1 if r.label is None else r.label for r in self.records])


@dataclass
class FoldAssignment:
    fold_of: np.ndarray  # record index -> fold id
    k: int

    def __post_init__(self):
        if self.fold_of.min() < 0 or self.fold_of.max() >= self.k:
            raise ConfigError("fold ids out of range")
        sizes = self.sizes()
        if max(sizes) - min(sizes) > 1:
            raise ConfigError(f"fold sizes must differ by at most 1, got {sizes}")

    def sizes(self) -> list[int]:
        return [int((self.fold_of == f).sum()) for f in range(self.k)]

    def fold_indices(self, fold: int) -> list[int]:
        return [int(i) for i in np.flatnonzero(self.fold_of == fold)]


def load_manifest(path: str | Path) -> DatasetManifest:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"manifest file not found: {path}")
    class_names: list[str] | None = None
    version_seen = False
    records: list[ManifestRecord] = []
    seen_paths: set[str] = set()
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.rstrip("\n")
        if not line.strip():
            continue
        if line.startswith("#%"):
            fields = line[2:].split("\t")
            head = fields[0].strip()
            if head.startswith("manifest"):
                token = head.split()
                if len(token) != 2 or token[1] != f"v{MANIFEST_VERSION}":
                    raise ConfigError(f"{path}:{lineno}: unsupported manifest version {head!r}")
                version_seen = True
            elif head == "classes":
                class_names = [c for c in fields[1:] if c]
            else:
                raise ConfigError(f"{path}:{lineno}: unknown header directive {head!r}")
            continue
        if line.lstrip().startswith("#"):
            continue
        if not version_seen:
            raise ConfigError(f"{path}:{lineno}: missing '#%manifest v{MANIFEST_VERSION}' header")
        fields = line.split("\t")
        if not 1 <= len(fields) <= 3:
            raise ConfigError(f"{path}:{lineno}: expected 1-3 tab-separated fields, got {len(fields)}")
        rec_path = fields[0].strip()
        if not rec_path:
            raise ConfigError(f"{path}:{lineno}: empty path")
        if rec_path in seen_paths:
            raise ConfigError(f"{path}:{lineno}: duplicate path {rec_path!r}")
        seen_paths.add(rec_path)
        label: int | None = None
        if len(fields) >= 2 and fields[1].strip() not in ("", "-"):
            name = fields[1].strip()
            if class_names is None or name not in class_names:
                raise ConfigError(f"{path}:{lineno}: label {name!r} not in the classes header")
            label = class_names.index(name)
        split = "unsplit"
        if len(fields) == 3 and fields[2].strip():
            split = fields[2].strip()
            if split not in SPLITS:
                raise ConfigError(f"{path}:{lineno}: unknown split {split!r}")
        records.append(ManifestRecord(rec_path, label, split))
    return DatasetManifest(records, class_names or [], path.parent)


def write_manifest(manifest: DatasetManifest, path: str | Path) -> Path:
    path = Path(path)
    lines = [f"#%manifest v{MANIFEST_VERSION}"]
    if manifest.class_names:
        lines.append("#%classes\t" + "\t".join(manifest.class_names))
    for rec in manifest.records:
        label = "-" if rec.label is None else manifest.class_names[rec.label]
        lines.append(f"{rec.path}\t{label}\t{rec.split}")
    path.write_text("\n".join(lines) + "\n")
    return path


def _strata(manifest: DatasetManifest) -> list[list[int]]:
    """Record indices grouped by class id (unlabeled records last)."""
    groups: dict[int, list[int]] = {}
    for i, rec in enumerate(manifest.records):
        key = -1 if rec.label is None else rec.label
        groups.setdefault(key, []).append(i)
    keys = sorted(k for k in groups if k >= 0) + ([-1] if -1 in groups else [])
    return [groups[k] for k in keys]


def _apportion(sizes: list[int], total: int) -> list[int]:
    """Largest-remainder apportionment of ``total`` across strata."""
    n = sum(sizes)
    quotas = [total * s / n for s in sizes]
    out = [int(np.floor(q)) for q in quotas]
    remainder = total - sum(out)
    order = sorted(range(len(sizes)), key=lambda i: (-(quotas[i] - out[i]), i))
    for i in order[:remainder]:
        out[i] += 1
    return out


def split_holdout(manifest: DatasetManifest, train_frac: float, val_frac: float,
                  seed: int) -> DatasetManifest:
    """Assign train/val/test splits, stratified by class when labels exist.

    The test fraction is the remainder ``1 - train_frac - val_frac``; global
    split sizes are the rounded fractions of the record count, apportioned
    across classes by largest remainder so per-split class proportions stay
    within one sample of the global ones.
    """
    if not (0 < train_frac < 1 and 0 < val_frac < 1 and train_frac + val_frac <= 1):
        raise ConfigError(f"fractions must be in (0,1) with sum <= 1, got {train_frac}, {val_frac}")
    n = len(manifest.records)
    test_frac = 1.0 - train_frac - val_frac
    n_test = int(round(n * test_frac))
    n_val = int(round(n * val_frac))
    if n_test + n_val > n:
        raise ConfigError("no records left for training after rounding")
    strata = _strata(manifest)
    if any(len(s) < 3 for s in strata) and len(strata) > 1:
        raise ConfigError("a class has fewer samples than the three requested splits")
    sizes = [len(s) for s in strata]
    test_per = _apportion(sizes, n_test)
    val_per = _apportion([s - t for s, t in zip(sizes, test_per)], n_val)

    rng = np.random.default_rng(seed)
    split_of = ["train"] * n
    for stratum, n_t, n_v in zip(strata, test_per, val_per):
        order = [stratum[j] for j in rng.permutation(len(stratum))]
        for i in order[:n_t]:
            split_of[i] = "test"
        for i in order[n_t:n_t + n_v]:
            split_of[i] = "val"
    records = [replace(rec, split=split_of[i]) for i, rec in enumerate(manifest.records)]
    return DatasetManifest(records, list(manifest.class_names), manifest.root)


def split_kfold(manifest: DatasetManifest, k: int, seed: int) -> FoldAssignment:
    """Disjoint, exhaustive, class-stratified folds whose sizes differ by at
    most one; per-class remainders rotate across folds so totals balance."""
    n = len(manifest.records)
    if k < 2:
        raise ConfigError(f"k must be >= 2, got {k}")
    if k > n:
        raise ConfigError(f"k={k} exceeds record count {n}")
    rng = np.random.default_rng(seed)
    fold_of = np.full(n, -1, dtype=np.int64)
    offset = 0
    for stratum in _strata(manifest):
        order = [stratum[j] for j in rng.permutation(len(stratum))]
        q, r = divmod(len(order), k)
        big = {(offset + j) % k for j in range(r)}
        pos = 0
        for fold in range(k):
            size = q + (1 if fold in big else 0)
            for i in order[pos:pos + size]:
                fold_of[i] = fold
            pos += size
        offset = (offset + r) % k
    return FoldAssignment(fold_of, k)


def load_image(path: str | Path, channels: int = 3) -> np.ndarray:
    """Decode an image to float32 (C, H, W) in [0, 1]; 8-bit and 16-bit
    grayscale are normalized by their max representable value and
    replicated to the requested channel count."""
    path = Path(path)
    try:
        img = Image.open(path)
        img.load()
    except (OSError, SyntaxError) as exc:
        raise ConfigError(f"cannot decode image {path}: {exc}") from exc
    if img.mode in ("I", "I;16", "I;16B", "I;16L"):
        arr = np.asarray(img, dtype=np.float64) / 65535.0
        arr = arr[None]
    elif img.mode == "L":
        arr = np.asarray(img, dtype=np.float64)[None] / 255.0
    elif img.mode in ("RGB", "RGBA"):
        arr = np.asarray(img.convert("RGB"), dtype=np.float64).transpose(2, 0, 1) / 255.0
    else:
        arr = np.asarray(img.convert("L"), dtype=np.float64)[None] / 255.0
    arr = np.clip(arr, 0.0, 1.0).astype(np.float32)
    return match_channels(arr, channels)


def match_channels(image: np.ndarray, channels: int) -> np.ndarray:
    """Replicate grayscale to N channels, or reduce to luma for 1 channel."""
    c = image.shape[0]
    if c == channels:
        return image
    if c == 1:
        return np.repeat(image, channels, axis=0)
    if channels == 1:
        weights = np.array([0.299, 0.587, 0.114], dtype=np.float32) if c == 3 else np.full(c, 1.0 / c, np.float32)
        return np.tensordot(weights, image, axes=([0], [0]))[None]
    raise ConfigError(f"cannot adapt {c}-channel image to {channels} channels")


def preprocess_eval(image: np.ndarray, resize_to: int = 256, crop_to: int = 224,
                    channels: int | None = None) -> np.ndarray:
    """Evaluation-time pipeline: exact (possibly anisotropic) square resize,
    then a single center crop; values stay in [0, 1]."""
    from .augment import resize_bilinear

    if image.ndim != 3:
        raise ConfigError(f"expected (C, H, W), got shape {image.shape}")
    x = resize_bilinear(image, resize_to, resize_to)
    off = (resize_to - crop_to) // 2
    x = x[:, off:off + crop_to, off:off + crop_to]
    if channels is not None:
        x = match_channels(x, channels)
    return np.clip(x, 0.0, 1.0).astype(np.float32)
