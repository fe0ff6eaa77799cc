"""Dataset bundles, binary file formats, and paired synthetic data.

All binary formats are little-endian with a 4-byte magic and a u32
version, so a wrong or truncated file fails fast with the byte offset of
the problem instead of producing garbage arrays.

    features  "XMBF" | version u32 | D u32 | N u32 | D*N float32,
              column-major (item after item)
    codes     "XMBC" | version u32 | M u32 | N u32 | N * ceil(M/64)
              uint64 packed words, item-major
    model     "XMBM" | version u32 | layers u32 | per layer:
              out u32 | in u32 | out*in float64 (row-major) | out float64

Labels are a text sidecar: one line per item, whitespace-separated
integer ids, a blank line marking an unlabeled item. Split indices live
in splits.json. A dataset directory ("bundle") holds image_features.bin,
text_features.bin, labels.txt, and optionally splits.json.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .codes import CodeMatrix, normalize_labels, words_per_code
from .encoder import EncoderModel

__all__ = [
    "DatasetBundle",
    "FileFormatError",
    "SynthConfig",
    "default_splits",
    "load_model",
    "read_bundle",
    "read_codes",
    "read_features",
    "read_labels",
    "save_model",
    "synth_generate",
    "write_bundle",
    "write_codes",
    "write_features",
    "write_labels",
]

FEATURES_MAGIC = b"XMBF"
CODES_MAGIC = b"XMBC"
MODEL_MAGIC = b"XMBM"
FORMAT_VERSION = 1

IMAGE_FEATURES_FILE = "image_features.bin"
TEXT_FEATURES_FILE = "text_features.bin"
LABELS_FILE = "labels.txt"
SPLITS_FILE = "splits.json"


class FileFormatError(ValueError):
    """Malformed binary file; carries the byte offset of the defect."""

    def __init__(self, message: str, *, path, offset: int):
        super().__init__(f"{path}: {message} (at byte offset {offset})")
        self.path = str(path)
        self.offset = offset


class _Reader:
    """Sequential cursor over a file's bytes with offset-aware errors."""

    def __init__(self, path):
        self.path = Path(path)
        self.data = self.path.read_bytes()
        self.offset = 0

    def take(self, count: int, what: str) -> bytes:
        end = self.offset + count
        if end > len(self.data):
            raise FileFormatError(
                f"truncated while reading {what}: need {count} bytes, "
                f"have {len(self.data) - self.offset}",
                path=self.path,
                offset=self.offset,
            )
        chunk = self.data[self.offset : end]
        self.offset = end
        return chunk

    def u32(self, what: str) -> int:
        return int(np.frombuffer(self.take(4, what), dtype="<u4")[0])

    def magic(self, expected: bytes):
        got = self.take(len(expected), "magic bytes")
        if got != expected:
            raise FileFormatError(
                f"bad magic {got!r}, expected {expected!r}", path=self.path, offset=0
            )

    def version(self):
        at = self.offset
        got = self.u32("format version")
        if got != FORMAT_VERSION:
            raise FileFormatError(
                f"unsupported format version {got}", path=self.path, offset=at
            )

    def done(self):
        if self.offset != len(self.data):
            raise FileFormatError(
                f"{len(self.data) - self.offset} trailing bytes",
                path=self.path,
                offset=self.offset,
            )


def _header(magic: bytes, *fields: int) -> bytes:
    return magic + np.asarray((FORMAT_VERSION, *fields), dtype="<u4").tobytes()


def write_features(matrix, path):
    """Write a D x N real matrix as a float32 feature file."""
    arr = np.asarray(matrix)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"features must be a nonempty 2-D matrix, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("features must be finite")
    d, n = arr.shape
    payload = np.ascontiguousarray(arr.T, dtype="<f4").tobytes()
    Path(path).write_bytes(_header(FEATURES_MAGIC, d, n) + payload)


def read_features(path) -> np.ndarray:
    """Read a feature file back to its D x N float32 matrix."""
    r = _Reader(path)
    r.magic(FEATURES_MAGIC)
    r.version()
    dims_at = r.offset
    d = r.u32("feature dimension")
    n = r.u32("item count")
    if d < 1 or n < 1:
        raise FileFormatError(
            f"degenerate dimensions D={d}, N={n}", path=r.path, offset=dims_at
        )
    payload_at = r.offset
    raw = r.take(4 * d * n, "feature payload")
    r.done()
    values = np.frombuffer(raw, dtype="<f4").reshape(n, d).T.copy()
    if not np.all(np.isfinite(values)):
        raise FileFormatError(
            "non-finite feature values", path=r.path, offset=payload_at
        )
    return values


def write_codes(codes: CodeMatrix, path):
    """Write a CodeMatrix as a packed code file."""
    payload = np.ascontiguousarray(codes.words, dtype="<u8").tobytes()
    Path(path).write_bytes(_header(CODES_MAGIC, codes.code_len, codes.count) + payload)


def read_codes(path) -> CodeMatrix:
    """Read a packed code file back to a CodeMatrix."""
    r = _Reader(path)
    r.magic(CODES_MAGIC)
    r.version()
    dims_at = r.offset
    m = r.u32("code length")
    n = r.u32("item count")
    if m < 1:
        raise FileFormatError(
            f"degenerate code length M={m}", path=r.path, offset=dims_at
        )
    per_code = words_per_code(m)
    raw = r.take(8 * n * per_code, "code payload")
    r.done()
    words = np.frombuffer(raw, dtype="<u8").reshape(n, per_code)
    try:
        return CodeMatrix(words, m, n)
    except ValueError as exc:
        raise FileFormatError(str(exc), path=r.path, offset=r.offset) from exc


def save_model(model: EncoderModel, path):
    """Serialize an encoder's layers to a model file."""
    parts = [_header(MODEL_MAGIC, len(model.layers))]
    for w, b in model.layers:
        parts.append(np.asarray(w.shape, dtype="<u4").tobytes())
        parts.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_model(path) -> EncoderModel:
    """Deserialize a model file back to an encoder."""
    r = _Reader(path)
    r.magic(MODEL_MAGIC)
    r.version()
    at = r.offset
    n_layers = r.u32("layer count")
    if n_layers < 1:
        raise FileFormatError("model has no layers", path=r.path, offset=at)
    layers = []
    for i in range(n_layers):
        out = r.u32(f"layer {i} output width")
        inp = r.u32(f"layer {i} input width")
        if out < 1 or inp < 1:
            raise FileFormatError(
                f"degenerate layer {i} shape ({out}, {inp})",
                path=r.path,
                offset=r.offset - 8,
            )
        w = np.frombuffer(r.take(8 * out * inp, f"layer {i} weights"), dtype="<f8")
        b = np.frombuffer(r.take(8 * out, f"layer {i} bias"), dtype="<f8")
        layers.append((w.reshape(out, inp).copy(), b.copy()))
    r.done()
    try:
        return EncoderModel(layers)
    except ValueError as exc:
        raise FileFormatError(str(exc), path=r.path, offset=r.offset) from exc


def write_labels(labels, path):
    """Write per-item label ids, one line per item, blank for unlabeled."""
    lines = [" ".join(str(v) for v in ids) for ids in normalize_labels(labels)]
    Path(path).write_text("\n".join(lines) + "\n" if lines else "")


def read_labels(path) -> list:
    """Read a label sidecar back to per-item id tuples."""
    raw = Path(path).read_text()
    if raw == "":
        return []
    if raw.endswith("\n"):
        raw = raw[:-1]
    labels = []
    for lineno, line in enumerate(raw.split("\n"), start=1):
        try:
            labels.append(tuple(sorted({int(tok) for tok in line.split()})))
        except ValueError as exc:
            raise ValueError(f"{path}: bad label ids on line {lineno}") from exc
    return labels


@dataclass
class DatasetBundle:
    """Paired two-modality features with shared labels and optional splits."""

    image_features: np.ndarray
    text_features: np.ndarray
    labels: list
    splits: dict | None = None

    def __post_init__(self):
        self.image_features = np.asarray(self.image_features)
        self.text_features = np.asarray(self.text_features)
        self.labels = normalize_labels(self.labels)
        n = self.count
        if self.text_features.shape[1] != n or len(self.labels) != n:
            raise ValueError(
                f"modality counts differ: images {n}, "
                f"texts {self.text_features.shape[1]}, labels {len(self.labels)}"
            )
        if self.splits is not None:
            self.splits = _checked_splits(self.splits, n)

    @property
    def count(self) -> int:
        return self.image_features.shape[1]

    def subset(self, indices) -> "DatasetBundle":
        idx = np.asarray(indices, dtype=np.int64)
        return DatasetBundle(
            self.image_features[:, idx],
            self.text_features[:, idx],
            [self.labels[i] for i in idx],
        )

    def split(self, name: str) -> "DatasetBundle":
        if self.splits is None or name not in self.splits:
            raise ValueError(f"bundle has no {name!r} split")
        return self.subset(self.splits[name])


def _checked_splits(splits: dict, n: int) -> dict:
    out = {}
    seen = np.zeros(n, dtype=bool)
    for name, idx in splits.items():
        idx = np.asarray(idx, dtype=np.int64)
        if idx.ndim != 1:
            raise ValueError(f"split {name!r} must be a flat index list")
        if idx.size and (idx.min() < 0 or idx.max() >= n):
            raise ValueError(f"split {name!r} has out-of-range indices")
        if np.unique(idx).size != idx.size or seen[idx].any():
            raise ValueError(f"split {name!r} overlaps another split")
        seen[idx] = True
        out[name] = idx
    return out


def write_bundle(bundle: DatasetBundle, directory):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_features(bundle.image_features, directory / IMAGE_FEATURES_FILE)
    write_features(bundle.text_features, directory / TEXT_FEATURES_FILE)
    write_labels(bundle.labels, directory / LABELS_FILE)
    if bundle.splits is not None:
        payload = {k: [int(i) for i in v] for k, v in bundle.splits.items()}
        (directory / SPLITS_FILE).write_text(json.dumps(payload, indent=0) + "\n")


def read_bundle(directory) -> DatasetBundle:
    directory = Path(directory)
    splits = None
    splits_path = directory / SPLITS_FILE
    if splits_path.exists():
        splits = {
            k: np.asarray(v, dtype=np.int64)
            for k, v in json.loads(splits_path.read_text()).items()
        }
    return DatasetBundle(
        read_features(directory / IMAGE_FEATURES_FILE),
        read_features(directory / TEXT_FEATURES_FILE),
        read_labels(directory / LABELS_FILE),
        splits,
    )


@dataclass(frozen=True)
class SynthConfig:
    """Paired Gaussian-cluster generator settings.

    Class means are drawn per modality from N(0, separation^2 I); each
    item samples both modalities around its class means with independent
    N(0, noise^2) perturbations. With probability multi_label_prob an
    item gains a second, uniformly random other class label.
    """

    classes: int = 8
    per_class: int = 250
    image_dim: int = 64
    text_dim: int = 64
    separation: float = 4.0
    noise: float = 1.0
    multi_label_prob: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.classes < 2:
            raise ValueError(f"classes must be >= 2, got {self.classes}")
        if self.per_class < 1:
            raise ValueError(f"per_class must be >= 1, got {self.per_class}")
        if self.image_dim < 1 or self.text_dim < 1:
            raise ValueError("feature dimensions must be >= 1")
        if self.noise <= 0.0:
            raise ValueError(f"noise must be positive, got {self.noise}")
        if self.separation < 0.0:
            raise ValueError(f"separation must be nonnegative, got {self.separation}")
        if not 0.0 <= self.multi_label_prob <= 1.0:
            raise ValueError("multi_label_prob must lie in [0, 1]")


def synth_generate(cfg: SynthConfig) -> DatasetBundle:
    """Generate a paired dataset, items blocked by class, no splits."""
    rng = np.random.default_rng(cfg.seed)
    img_means = rng.normal(0.0, cfg.separation, size=(cfg.classes, cfg.image_dim))
    txt_means = rng.normal(0.0, cfg.separation, size=(cfg.classes, cfg.text_dim))
    n = cfg.classes * cfg.per_class
    X = np.empty((cfg.image_dim, n))
    Y = np.empty((cfg.text_dim, n))
    labels = []
    for c in range(cfg.classes):
        seg = slice(c * cfg.per_class, (c + 1) * cfg.per_class)
        X[:, seg] = img_means[c][:, None] + rng.normal(
            0.0, cfg.noise, size=(cfg.image_dim, cfg.per_class)
        )
        Y[:, seg] = txt_means[c][:, None] + rng.normal(
            0.0, cfg.noise, size=(cfg.text_dim, cfg.per_class)
        )
        extra = rng.random(cfg.per_class) < cfg.multi_label_prob
        for flagged in extra:
            ids = {c}
            if flagged:
                other = int(rng.integers(cfg.classes - 1))
                ids.add(other + 1 if other >= c else other)
            labels.append(tuple(sorted(ids)))
    return DatasetBundle(X, Y, labels)


def default_splits(
    cfg: SynthConfig, query_fraction: float = 0.1, train_fraction: float = 0.45
) -> dict:
    """Disjoint per-class query/train/gallery index split for a synth bundle.

    Items are blocked by class in generation order, so slicing each block
    stratifies the split.
    """
    if not 0.0 < query_fraction < 1.0 or not 0.0 < train_fraction < 1.0:
        raise ValueError("split fractions must lie in (0, 1)")
    n_q = max(1, int(round(query_fraction * cfg.per_class)))
    n_t = max(1, int(round(train_fraction * cfg.per_class)))
    if n_q + n_t >= cfg.per_class:
        raise ValueError(
            f"query+train fractions leave no gallery items "
            f"(per_class={cfg.per_class}, query={n_q}, train={n_t})"
        )
    query, train, gallery = [], [], []
    for c in range(cfg.classes):
        base = c * cfg.per_class
        query.extend(range(base, base + n_q))
        train.extend(range(base + n_q, base + n_q + n_t))
        gallery.extend(range(base + n_q + n_t, base + cfg.per_class))
    return {
        "train": np.asarray(train, dtype=np.int64),
        "query": np.asarray(query, dtype=np.int64),
        "gallery": np.asarray(gallery, dtype=np.int64),
    }
