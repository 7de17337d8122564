"""
File input/output: part JSONL, JSON documents and atomic writes.
"""

import hashlib
import json
import logging
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from partsim.errors import FormatError, GeometryError, StorageError
from partsim.models import BRepPart

logger = logging.getLogger(__name__)


def atomic_write(path, data: bytes):
    """Write `data` to a sibling temporary file, then rename it over `path`."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(prefix=f'.{path.name}.', dir=path.parent)
        try:
            with os.fdopen(fd, 'wb') as fh:
                fh.write(data)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as e:
        raise StorageError(f'cannot write {path}: {e}')


def read_bytes(path):
    try:
        return Path(path).read_bytes()
    except OSError as e:
        raise StorageError(f'cannot read {path}: {e}')


def dumps(obj):
    """Canonical JSON text (sorted keys) used for every written document."""
    return json.dumps(obj, sort_keys=True, ensure_ascii=False)


def json_digest(obj):
    """sha256 of the canonical JSON text of `obj`."""
    return hashlib.sha256(dumps(obj).encode('utf-8')).hexdigest()


def file_digest(path):
    return hashlib.sha256(read_bytes(path)).hexdigest()


def write_json(path, obj):
    atomic_write(path, (json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + '\n').encode('utf-8'))


def read_json(path):
    text = read_bytes(path).decode('utf-8')
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise FormatError(path, f'invalid JSON: {e.msg}', line=e.lineno)


def write_jsonl(path, rows):
    atomic_write(path, ''.join(dumps(row) + '\n' for row in rows).encode('utf-8'))


def read_jsonl(path):
    rows = []
    for number, line in enumerate(read_bytes(path).decode('utf-8').splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rows.append((number, json.loads(line)))
        except json.JSONDecodeError as e:
            raise FormatError(path, f'invalid JSON: {e.msg}', line=number)
    return rows


def write_parts(path, parts):
    write_jsonl(path, [part.to_dict() for part in parts])
    logger.info(f'wrote {len(parts)} parts to {path}')


def read_parts(path):
    """Parse a parts JSONL file; errors name the offending line."""
    parts, seen = [], set()
    for number, row in read_jsonl(path):
        try:
            part = BRepPart.from_dict(row)
        except (GeometryError, KeyError, TypeError, ValueError) as e:
            raise FormatError(path, f'invalid part: {e}', line=number)
        if part.id in seen:
            raise FormatError(path, f'duplicate part id {part.id}', line=number)
        seen.add(part.id)
        parts.append(part)
    return parts


# -- versioned binary files ---------------------------------------------------

_U32 = struct.Struct('<I')


def pack_u32(value):
    return _U32.pack(value)


def versioned_prefix(magic: bytes, version: int, meta: dict):
    """Magic, version byte and length-prefixed JSON metadata block."""
    blob = dumps(meta).encode('utf-8')
    return magic + bytes([version]) + _U32.pack(len(blob)) + blob


class BinaryReader:
    """Cursor over a file's bytes; every short read is a FormatError."""

    def __init__(self, path, data):
        self.path, self.data, self.pos = path, data, 0

    def take(self, n):
        if self.pos + n > len(self.data):
            raise FormatError(self.path, f'truncated file at byte {self.pos}')
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self):
        return _U32.unpack(self.take(4))[0]

    def json(self):
        try:
            return json.loads(self.take(self.u32()).decode('utf-8'))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise FormatError(self.path, f'corrupt JSON block: {e}')

    def floats(self, shape):
        count = int(np.prod(shape, dtype=np.int64))
        return np.frombuffer(self.take(4 * count), dtype='<f4').reshape(shape).astype(np.float32)

    def finish(self):
        if self.pos != len(self.data):
            raise FormatError(self.path, f'{len(self.data) - self.pos} trailing bytes')


def open_versioned(path, magic: bytes, version: int):
    """Check magic and version of a binary file; returns (reader, meta)."""
    reader = BinaryReader(path, read_bytes(path))
    if reader.take(len(magic)) != magic:
        raise FormatError(path, f'not a {magic.decode()} file')
    found = reader.take(1)[0]
    if found != version:
        raise FormatError(path, f'unsupported format version {found} (expected {version})')
    return reader, reader.json()
