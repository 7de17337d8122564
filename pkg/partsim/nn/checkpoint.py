"""
Checkpoint files.

    b'PSCK' | version u8 | manifest length u32 | manifest JSON | float32 data

The manifest lists (name, shape, offset) records in write order plus a sha256
content hash over the record table and the data, and any extra metadata the
caller passes (encoder config, config hash, seed).
"""

import hashlib
import logging

import numpy as np

from partsim.errors import FormatError
from partsim.nn.tensor import Tensor
from partsim.partio import atomic_write, dumps, open_versioned, versioned_prefix

logger = logging.getLogger(__name__)

MAGIC = b'PSCK'
VERSION = 1


def _content_hash(records, payload):
    digest = hashlib.sha256(dumps(records).encode('utf-8'))
    digest.update(payload)
    return digest.hexdigest()


def pack_checkpoint(tensors: dict, extra=None):
    """Serialize named tensors; returns (bytes, content hash)."""
    records, chunks, offset = [], [], 0
    for name, value in tensors.items():
        array = np.ascontiguousarray(value.data if isinstance(value, Tensor) else value, dtype='<f4')
        records.append({'name': name, 'shape': list(array.shape), 'offset': offset})
        chunks.append(array.tobytes())
        offset += array.size
    payload = b''.join(chunks)
    content_hash = _content_hash(records, payload)
    manifest = dict(extra or {}, records=records, sha256=content_hash)
    return versioned_prefix(MAGIC, VERSION, manifest) + payload, content_hash


def save_checkpoint(path, tensors: dict, extra=None):
    data, content_hash = pack_checkpoint(tensors, extra)
    atomic_write(path, data)
    logger.info(f'checkpoint {path} ({len(tensors)} tensors, sha256 {content_hash[:12]})')
    return content_hash


def load_checkpoint(path):
    """Returns (dict name -> float32 array in stored order, manifest)."""
    reader, manifest = open_versioned(path, MAGIC, VERSION)
    records = manifest.get('records')
    if not isinstance(records, list):
        raise FormatError(path, 'manifest has no record table')
    payload = reader.data[reader.pos:]
    if _content_hash(records, payload) != manifest.get('sha256'):
        raise FormatError(path, 'content hash mismatch')
    tensors = {}
    for record in records:
        tensors[record['name']] = reader.floats(tuple(record['shape']))
    reader.finish()
    return tensors, manifest
