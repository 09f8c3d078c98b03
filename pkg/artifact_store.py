#!/usr/bin/env python3
"""
Artifact Store

Single-file binary container used for datasets and model checkpoints:

    magic (8 bytes) | version (uint32 LE) | header length (uint64 LE)
    | JSON header (UTF-8) | float64 LE payload | SHA-256 of all preceding bytes

The header lists every array (name, shape) in payload order, next to any
free-form metadata supplied by the caller.
"""

import os
import json
import struct
import hashlib
import logging
import tempfile
from typing import Dict, Any, Tuple, Type

import numpy as np

logger = logging.getLogger(__name__)

_PREFIX = struct.Struct('<8sIQ')
_DIGEST_SIZE = 32


class ArtifactFormatError(ValueError):
    """File is not a readable container of the expected kind."""


class ChecksumError(ArtifactFormatError):
    """Stored checksum does not match the file content (truncated or corrupt)."""


def write_container(path: str, magic: bytes, version: int, metadata: Dict[str, Any],
                    arrays: Dict[str, np.ndarray]) -> str:
    """Write a container atomically; returns the SHA-256 hex digest of the file."""
    if len(magic) != 8:
        raise ValueError("magic must be exactly 8 bytes")
    entries = []
    chunks = []
    for name, array in arrays.items():
        data = np.asarray(array, dtype='<f8', order='C')
        entries.append({'name': name, 'shape': list(data.shape)})
        chunks.append(data.tobytes())

    header = json.dumps({'metadata': metadata, 'arrays': entries},
                        sort_keys=True, separators=(',', ':')).encode('utf-8')
    body = _PREFIX.pack(magic, version, len(header)) + header + b''.join(chunks)
    digest = hashlib.sha256(body)

    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(prefix='.artifact-', dir=directory)
    try:
        with os.fdopen(fd, 'wb') as f:
            f.write(body)
            f.write(digest.digest())
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise
    logger.debug(f"wrote {path} ({len(body) + _DIGEST_SIZE} bytes)")
    return hashlib.sha256(body + digest.digest()).hexdigest()


def read_container(path: str, magic: bytes, version: int,
                   error_cls: Type[ArtifactFormatError] = ArtifactFormatError
                   ) -> Tuple[Dict[str, Any], Dict[str, np.ndarray]]:
    """Read and verify a container; returns (metadata, arrays)."""
    with open(path, 'rb') as f:
        raw = f.read()

    if len(raw) < _PREFIX.size + _DIGEST_SIZE:
        raise ChecksumError(f"{path}: file too short ({len(raw)} bytes)")
    body, stored = raw[:-_DIGEST_SIZE], raw[-_DIGEST_SIZE:]
    found_magic, found_version, header_len = _PREFIX.unpack_from(body)
    if found_magic != magic:
        raise error_cls(f"{path}: unexpected magic {found_magic!r}, expected {magic!r}")
    if hashlib.sha256(body).digest() != stored:
        raise ChecksumError(f"{path}: checksum mismatch")
    if found_version != version:
        raise error_cls(f"{path}: unsupported version {found_version}, expected {version}")

    start = _PREFIX.size
    try:
        header = json.loads(body[start:start + header_len].decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise error_cls(f"{path}: unreadable header: {e}")

    arrays: Dict[str, np.ndarray] = {}
    offset = start + header_len
    for entry in header.get('arrays', []):
        shape = tuple(entry['shape'])
        count = int(np.prod(shape)) if shape else 1
        nbytes = 8 * count
        if offset + nbytes > len(body):
            raise error_cls(f"{path}: payload shorter than declared for '{entry['name']}'")
        arrays[entry['name']] = np.frombuffer(body, dtype='<f8', count=count,
                                              offset=offset).reshape(shape).astype(float)
        offset += nbytes
    if offset != len(body):
        raise error_cls(f"{path}: {len(body) - offset} trailing payload bytes")
    return header.get('metadata', {}), arrays


def file_sha256(path: str) -> str:
    """SHA-256 hex digest of a file, streamed in 1 MiB blocks."""
    digest = hashlib.sha256()
    with open(path, 'rb') as f:
        for block in iter(lambda: f.read(1 << 20), b''):
            digest.update(block)
    return digest.hexdigest()
