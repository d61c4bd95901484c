"""Binary model files.

Layout (little endian)::

    magic    8 bytes   b"CDFOREST"
    version  u32
    length   u64       payload size in bytes
    digest   32 bytes  SHA-256 of the payload
    payload:
        header_len  u64
        header      UTF-8 JSON: hyperparameters, n, d, per-tree seeds and an
                    array manifest [name, dtype, shape, offset]
        blob        raw array bytes

The file is a pure function of the forest (no timestamps), so refitting
with the same inputs gives a byte-identical file.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct

import numpy as np

from .forest import Forest, ForestHyperparameters
from .tree import Tree

MAGIC = b"CDFOREST"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<8sIQ32s")

_TREE_ARRAYS = (
    ("feature", "<i8"),
    ("threshold", "<f8"),
    ("left", "<i8"),
    ("right", "<i8"),
    ("bootstrap", "<i8"),
    ("leaf_offsets", "<i8"),
    ("leaf_members", "<i8"),
)


class ModelFormatError(ValueError):
    pass


class CorruptModelError(ModelFormatError):
    pass


class ModelVersionError(ModelFormatError):
    pass


def _arrays(forest: Forest):
    yield "responses", forest.responses.astype("<f8")
    for i, t in enumerate(forest.trees):
        for name, dtype in _TREE_ARRAYS:
            yield f"tree{i}.{name}", np.asarray(getattr(t, name)).astype(dtype)


def dumps(forest: Forest) -> bytes:
    manifest = []
    chunks = []
    offset = 0
    for name, arr in _arrays(forest):
        raw = np.ascontiguousarray(arr).tobytes()
        manifest.append([name, arr.dtype.str, list(arr.shape), offset])
        chunks.append(raw)
        offset += len(raw)
    hp = forest.hp
    header = {
        "n": forest.n,
        "d": forest.d,
        "hyperparameters": {
            "n_trees": hp.n_trees,
            "max_features": hp.max_features,
            "min_samples_leaf": hp.min_samples_leaf,
            "seed": hp.seed,
        },
        "trees": [{"seed": t.seed, "stream": t.stream} for t in forest.trees],
        "arrays": manifest,
    }
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    payload = struct.pack("<Q", len(hbytes)) + hbytes + b"".join(chunks)
    digest = hashlib.sha256(payload).digest()
    return _PREFIX.pack(MAGIC, FORMAT_VERSION, len(payload), digest) + payload


def loads(data: bytes) -> Forest:
    if len(data) < _PREFIX.size:
        raise CorruptModelError("model file is truncated (incomplete prefix)")
    magic, version, length, digest = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise CorruptModelError("not a model file (bad magic bytes)")
    if version != FORMAT_VERSION:
        raise ModelVersionError(f"model format version {version} is not supported (expected {FORMAT_VERSION})")
    payload = data[_PREFIX.size:]
    if len(payload) != length:
        raise CorruptModelError(f"model payload is {len(payload)} bytes, header says {length}")
    if hashlib.sha256(payload).digest() != digest:
        raise CorruptModelError("model checksum mismatch")
    try:
        (hlen,) = struct.unpack_from("<Q", payload)
        header = json.loads(payload[8:8 + hlen].decode("utf-8"))
        blob = memoryview(payload)[8 + hlen:]
        arrays = {}
        for name, dtype, shape, off in header["arrays"]:
            dt = np.dtype(dtype)
            count = int(np.prod(shape)) if shape else 1
            arrays[name] = np.frombuffer(blob, dtype=dt, count=count, offset=off).reshape(shape).astype(dt.newbyteorder("="))
        n, d = int(header["n"]), int(header["d"])
        hp = ForestHyperparameters(**header["hyperparameters"])
        trees = []
        for i, meta in enumerate(header["trees"]):
            a = {name: arrays[f"tree{i}.{name}"] for name, _ in _TREE_ARRAYS}
            trees.append(_rebuild_tree(a, d, meta))
        responses = arrays["responses"]
        responses.flags.writeable = False
    except (KeyError, ValueError, TypeError, struct.error) as exc:
        raise CorruptModelError(f"malformed model payload: {exc}") from exc
    return Forest(trees=trees, hp=hp, responses=responses, n=n, d=d)


def _rebuild_tree(a: dict, d: int, meta: dict) -> Tree:
    feature = a["feature"]
    is_leaf = feature < 0
    n_leaves = int(is_leaf.sum())
    leaf_of_node = np.full(feature.shape[0], -1, dtype=np.int64)
    leaf_of_node[is_leaf] = np.arange(n_leaves)
    offsets = a["leaf_offsets"]
    members = a["leaf_members"]
    if offsets.shape[0] != n_leaves + 1:
        raise ValueError("leaf offsets do not match the number of leaves")
    sizes = np.diff(offsets)
    leaf_of_pos = np.repeat(np.arange(n_leaves), sizes)
    boot_total = np.bincount(leaf_of_pos, weights=a["bootstrap"][members], minlength=n_leaves).astype(np.int64)
    arrays = dict(a, leaf_of_node=leaf_of_node, leaf_bootstrap_total=boot_total, leaf_original_count=sizes.astype(np.int64))
    for v in arrays.values():
        v.flags.writeable = False
    return Tree(seed=int(meta["seed"]), stream=int(meta["stream"]), n_features=d, **arrays)


def save_model(forest: Forest, path: str | os.PathLike) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps(forest))


def load_model(path: str | os.PathLike) -> Forest:
    with open(path, "rb") as fh:
        return loads(fh.read())
