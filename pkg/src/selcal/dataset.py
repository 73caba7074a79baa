"""In-memory and on-disk representation of precomputed classifier outputs.

A dataset row holds the feature embedding, the raw class logits and the ground
truth label for one instance. Probabilities, predictions and correctness are
derived on demand. The on-disk container (".selc") is a little-endian binary
format: magic "SELC", u32 version, u64 header length, a UTF-8 JSON header, and
three contiguous array sections (embeddings and logits as f32 row-major,
labels as u32) with no padding.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .errors import CorruptionError, FormatError, ValidationError

MAGIC = b"SELC"
VERSION = 1
_SECTIONS = ["embeddings", "logits", "labels"]


@dataclass(frozen=True)
class CalibrationDataset:
    embeddings: np.ndarray  # (n, embed_dim) float32
    logits: np.ndarray      # (n, num_classes) float32
    labels: np.ndarray      # (n,) int64
    name: str = ""

    def __post_init__(self):
        emb = np.ascontiguousarray(self.embeddings, dtype=np.float32)
        log = np.ascontiguousarray(self.logits, dtype=np.float32)
        lab = np.ascontiguousarray(self.labels, dtype=np.int64)
        object.__setattr__(self, "embeddings", emb)
        object.__setattr__(self, "logits", log)
        object.__setattr__(self, "labels", lab)
        if emb.ndim != 2 or log.ndim != 2 or lab.ndim != 1:
            raise ValidationError("embeddings/logits must be 2-D and labels 1-D")
        n = log.shape[0]
        if emb.shape[0] != n or lab.shape[0] != n:
            raise ValidationError(
                f"row counts disagree: embeddings {emb.shape[0]}, "
                f"logits {n}, labels {lab.shape[0]}"
            )
        if log.shape[1] < 2:
            raise ValidationError(f"need num_classes >= 2, got {log.shape[1]}")
        if not np.all(np.isfinite(log)):
            raise ValidationError("logits contain NaN or Inf")
        if n and (lab.min() < 0 or lab.max() >= log.shape[1]):
            raise ValidationError(
                f"labels must lie in [0, {log.shape[1]}), found range "
                f"[{lab.min()}, {lab.max()}]"
            )

    @property
    def n(self) -> int:
        return self.logits.shape[0]

    @property
    def embed_dim(self) -> int:
        return self.embeddings.shape[1]

    @property
    def num_classes(self) -> int:
        return self.logits.shape[1]


@dataclass(frozen=True)
class DerivedOutputs:
    probs: np.ndarray     # (n, K) softmax of logits
    top_conf: np.ndarray  # (n,) max_k probs
    pred: np.ndarray      # (n,) argmax, ties to lowest class index
    correct: np.ndarray   # (n,) 1 where pred == label


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max subtraction for stability."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def derive(d: CalibrationDataset) -> DerivedOutputs:
    probs = softmax(d.logits)
    pred = np.argmax(probs, axis=1)  # np.argmax already breaks ties low
    top_conf = probs[np.arange(d.n), pred]
    correct = (pred == d.labels).astype(np.float64)
    return DerivedOutputs(probs=probs, top_conf=top_conf, pred=pred, correct=correct)


def save_dataset(d: CalibrationDataset, path) -> None:
    header = {
        "n": d.n,
        "embed_dim": d.embed_dim,
        "num_classes": d.num_classes,
        "name": d.name,
        "sections": _SECTIONS,
    }
    hbytes = json.dumps(header).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        f.write(struct.pack("<Q", len(hbytes)))
        f.write(hbytes)
        f.write(d.embeddings.astype("<f4", copy=False).tobytes(order="C"))
        f.write(d.logits.astype("<f4", copy=False).tobytes(order="C"))
        f.write(d.labels.astype("<u4").tobytes(order="C"))


def load_dataset(path) -> CalibrationDataset:
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:4]!r}, expected {MAGIC!r}")
    if len(raw) < 16:
        raise CorruptionError(f"{path}: file too short for fixed header")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported container version {version}")
    (hlen,) = struct.unpack_from("<Q", raw, 8)
    if 16 + hlen > len(raw):
        raise CorruptionError(f"{path}: header length {hlen} exceeds file size")
    try:
        header = json.loads(raw[16 : 16 + hlen].decode("utf-8"))
        n = int(header["n"])
        embed_dim = int(header["embed_dim"])
        num_classes = int(header["num_classes"])
        name = str(header.get("name", ""))
        sections = header["sections"]
    except (ValueError, KeyError, UnicodeDecodeError) as exc:
        raise CorruptionError(f"{path}: malformed JSON header ({exc})") from exc
    if sections != _SECTIONS:
        raise FormatError(f"{path}: unexpected section list {sections}")
    if n < 0 or embed_dim < 0 or num_classes < 2:
        raise ValidationError(
            f"{path}: invalid dims n={n} embed_dim={embed_dim} K={num_classes}"
        )
    off = 16 + hlen
    need = n * embed_dim * 4 + n * num_classes * 4 + n * 4
    if len(raw) - off != need:
        raise CorruptionError(
            f"{path}: payload has {len(raw) - off} bytes, expected {need}"
        )
    emb = np.frombuffer(raw, dtype="<f4", count=n * embed_dim, offset=off)
    off += emb.nbytes
    logits = np.frombuffer(raw, dtype="<f4", count=n * num_classes, offset=off)
    off += logits.nbytes
    labels = np.frombuffer(raw, dtype="<u4", count=n, offset=off)
    return CalibrationDataset(
        embeddings=emb.reshape(n, embed_dim).copy(),
        logits=logits.reshape(n, num_classes).copy(),
        labels=labels.astype(np.int64),
        name=name,
    )


def split(d: CalibrationDataset, fractions, seed: int) -> list[CalibrationDataset]:
    """Deterministic disjoint row split; sizes off by < 1 from n*fraction."""
    fractions = [float(f) for f in fractions]
    if any(f <= 0 for f in fractions):
        raise ValueError(f"fractions must be positive, got {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions must sum to 1, got sum={sum(fractions)!r}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(d.n)
    # largest-remainder apportionment keeps every |size - n*f| < 1
    exact = np.array(fractions) * d.n
    sizes = np.floor(exact).astype(int)
    rem = d.n - sizes.sum()
    order = np.argsort(-(exact - sizes), kind="stable")
    sizes[order[:rem]] += 1
    parts, start = [], 0
    for i, size in enumerate(sizes):
        idx = perm[start : start + size]
        start += size
        parts.append(
            CalibrationDataset(
                embeddings=d.embeddings[idx],
                logits=d.logits[idx],
                labels=d.labels[idx],
                name=f"{d.name}#split{i}" if d.name else f"split{i}",
            )
        )
    return parts


def add_gaussian_noise(d: CalibrationDataset, std: float, seed: int) -> CalibrationDataset:
    """Perturb embeddings with i.i.d. N(0, std^2); logits and labels untouched."""
    if std < 0:
        raise ValueError(f"noise std must be >= 0, got {std}")
    if std == 0:
        return d
    rng = np.random.default_rng(seed)
    noisy = d.embeddings.astype(np.float64) + rng.normal(0.0, std, size=d.embeddings.shape)
    return CalibrationDataset(
        embeddings=noisy.astype(np.float32),
        logits=d.logits,
        labels=d.labels,
        name=d.name,
    )
