"""
Artifact file conventions shared by every stage.

Matrices are stored as flat little-endian float32 files whose row count and
dimension live in the sibling ``meta.json``. Everything lives below a
versioned ``v1/`` directory so formats can evolve.
"""
import hashlib
import json
import logging
from pathlib import Path

import numpy as np

from core.exceptions import DataError, MissingArtifactError

logger = logging.getLogger(__name__)

LAYOUT_VERSION = "v1"
FORMAT_VERSION = 1
MATRIX_DTYPE = "<f4"


def layout_root(output_dir):
    return Path(output_dir) / LAYOUT_VERSION


def file_digest(path):
    sha = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            sha.update(chunk)
    return sha.hexdigest()


def directory_digest(path):
    """Digest over every file below ``path``, in sorted relative-path order."""
    path = Path(path)
    sha = hashlib.sha256()
    for item in sorted(p for p in path.rglob("*") if p.is_file()):
        sha.update(item.relative_to(path).as_posix().encode("utf-8"))
        sha.update(file_digest(item).encode("ascii"))
    return sha.hexdigest()


def artifact_digest(path):
    path = Path(path)
    return directory_digest(path) if path.is_dir() else file_digest(path)


def canonical_json(data):
    return json.dumps(data, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def data_digest(data):
    return hashlib.sha256(canonical_json(data).encode("utf-8")).hexdigest()


def write_json(path, data):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(data, handle, indent=2, sort_keys=True, ensure_ascii=False)
        handle.write("\n")
    return path


def read_json(path, producer):
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(path, producer)
    with open(path, encoding="utf-8") as handle:
        return json.load(handle)


def write_matrix(path, matrix):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.ascontiguousarray(matrix, dtype=MATRIX_DTYPE).tofile(path)
    return path


def read_matrix(path, rows, dim, producer):
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(path, producer)
    flat = np.fromfile(path, dtype=MATRIX_DTYPE)
    if flat.size != rows * dim:
        raise DataError(
            f"{path} holds {flat.size} values, meta.json declares {rows}x{dim}."
        )
    return flat.reshape(rows, dim).astype(np.float64)


def check_format(meta, path):
    if meta.get("format_version") != FORMAT_VERSION:
        raise DataError(
            f"{path} has format version {meta.get('format_version')}, "
            f"expected {FORMAT_VERSION}."
        )
