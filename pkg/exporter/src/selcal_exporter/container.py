"""Standalone writer for the .selc container.

Byte layout: magic "SELC", u32 LE version 1, u64 LE header length, UTF-8 JSON
header {"n", "embed_dim", "num_classes", "name", "sections"}, then contiguous
sections: embeddings (n x embed_dim f32 LE row-major), logits (n x K f32 LE
row-major), labels (n u32 LE). No padding. Written independently of the
consumer package so the exporter only couples to the documented format.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile

import numpy as np

MAGIC = b"SELC"
VERSION = 1


def write_selc(path, embeddings: np.ndarray, logits: np.ndarray,
               labels: np.ndarray, name: str = "") -> None:
    emb = np.ascontiguousarray(embeddings, dtype="<f4")
    log = np.ascontiguousarray(logits, dtype="<f4")
    lab = np.ascontiguousarray(labels, dtype="<u4")
    n, k = log.shape
    if emb.shape[0] != n or lab.shape != (n,):
        raise ValueError("section row counts disagree")
    header = {
        "n": int(n),
        "embed_dim": int(emb.shape[1]),
        "num_classes": int(k),
        "name": name,
        "sections": ["embeddings", "logits", "labels"],
    }
    hbytes = json.dumps(header).encode("utf-8")
    # atomic write: temp file in the target directory, then rename
    directory = os.path.dirname(os.fspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".selc.tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(MAGIC)
            f.write(struct.pack("<I", VERSION))
            f.write(struct.pack("<Q", len(hbytes)))
            f.write(hbytes)
            f.write(emb.tobytes(order="C"))
            f.write(log.tobytes(order="C"))
            f.write(lab.tobytes(order="C"))
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
