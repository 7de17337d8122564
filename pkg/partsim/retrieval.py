"""
Exact embedding index, kNN queries and assembly retrieval by part votes.

Index file (little-endian):
    b'PSIX' | version u8 | meta length u32 | meta JSON (count, dim, ...)
    | id table length u32 | id table JSON | float32 matrix [count x dim]
"""

import logging
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from partsim.errors import BuildError, ContractError, FormatError, QueryError
from partsim.partio import atomic_write, dumps, open_versioned, pack_u32, read_json, versioned_prefix

logger = logging.getLogger(__name__)

MAGIC = b'PSIX'
VERSION = 1
METRICS = ('cosine', 'l2')
_CHUNK = 16384


@dataclass(frozen=True, eq=False)
class EmbeddingIndex:
    """Immutable exact index over float32 vectors with precomputed norms."""
    ids: tuple
    vectors: np.ndarray
    norms: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        positions = {part_id: i for i, part_id in enumerate(self.ids)}
        order = np.argsort(np.array(self.ids, dtype=object), kind='stable')
        rank = np.empty(len(self.ids), dtype=np.int64)
        rank[order] = np.arange(len(self.ids))
        object.__setattr__(self, '_positions', positions)
        object.__setattr__(self, '_rank', rank)

    def __len__(self):
        return len(self.ids)

    def __contains__(self, part_id):
        return part_id in self._positions

    def __repr__(self):
        return f'<EmbeddingIndex M={len(self)} D={self.dim}>'

    @property
    def dim(self):
        return int(self.vectors.shape[1])

    def vector(self, part_id):
        if part_id not in self._positions:
            raise QueryError(f'part {part_id} is not in the index')
        return self.vectors[self._positions[part_id]]

    def scores(self, z_q, metric='cosine'):
        """Score of every stored vector against z_q (float64, higher is closer)."""
        q = np.asarray(z_q, dtype=np.float64).reshape(-1)
        if q.shape[0] != self.dim:
            raise QueryError(f'query dim {q.shape[0]} does not match index dim {self.dim}')
        if metric not in METRICS:
            raise QueryError(f'metric must be one of {METRICS}, got {metric!r}')
        out = np.empty(len(self), dtype=np.float64)
        if metric == 'cosine':
            q_norm = np.linalg.norm(q)
            if not q_norm > 0:
                raise QueryError('cosine query with a zero vector')
            for start in range(0, len(self), _CHUNK):
                block = self.vectors[start:start + _CHUNK].astype(np.float64)
                out[start:start + _CHUNK] = (block @ q) / (self.norms[start:start + _CHUNK] * q_norm)
        else:
            for start in range(0, len(self), _CHUNK):
                block = self.vectors[start:start + _CHUNK].astype(np.float64)
                out[start:start + _CHUNK] = -np.linalg.norm(block - q, axis=1)
        return out


@dataclass(frozen=True)
class QueryResult:
    """Ranked (part id, score) pairs, scores non-increasing."""
    items: tuple
    query_id: str = None

    @property
    def ids(self):
        return [part_id for part_id, _ in self.items]

    @property
    def scores(self):
        return [score for _, score in self.items]

    def __len__(self):
        return len(self.items)


def _norms(vectors):
    norms = np.empty(len(vectors), dtype=np.float64)
    for start in range(0, len(vectors), _CHUNK):
        block = vectors[start:start + _CHUNK].astype(np.float64)
        norms[start:start + _CHUNK] = np.sqrt(np.einsum('ij,ij->i', block, block))
    return norms


def _make_index(ids, vectors, meta):
    vectors = np.ascontiguousarray(vectors, dtype=np.float32)
    vectors.setflags(write=False)
    norms = _norms(vectors)
    norms.setflags(write=False)
    return EmbeddingIndex(ids=tuple(ids), vectors=vectors, norms=norms, meta=dict(meta or {}))


def build_index(embeddings, meta=None) -> EmbeddingIndex:
    """Index a {part id: vector} map (or (id, vector) pairs) in the given order."""
    items = list(embeddings.items()) if isinstance(embeddings, dict) else list(embeddings)
    if not items:
        raise BuildError('cannot build an empty index')
    ids = [str(part_id) for part_id, _ in items]
    if len(set(ids)) != len(ids):
        raise BuildError('duplicate part ids in embeddings')
    dim = len(np.asarray(items[0][1]).reshape(-1))
    matrix = np.empty((len(items), dim), dtype=np.float32)
    for row, (part_id, vector) in enumerate(items):
        vector = np.asarray(vector).reshape(-1)
        if vector.shape[0] != dim:
            raise BuildError(f'part {part_id}: dim {vector.shape[0]} differs from {dim}')
        matrix[row] = vector
    if not np.all(np.isfinite(matrix)):
        raise BuildError('embeddings contain non-finite values')
    index = _make_index(ids, matrix, meta)
    zero = np.flatnonzero(index.norms == 0)
    if zero.size:
        raise BuildError(f'part {ids[zero[0]]} has a zero embedding')
    logger.debug(f'built index M={len(index)} D={dim}')
    return index


def query(index: EmbeddingIndex, z_q, k, exclude_id=None, metric='cosine') -> QueryResult:
    """Exact top-k; equal scores are ordered by ascending part id."""
    if not 1 <= k <= len(index):
        raise QueryError(f'k must lie in [1, {len(index)}], got {k}')
    scores = index.scores(z_q, metric)
    candidates = np.arange(len(index))
    if exclude_id is not None and exclude_id in index:
        candidates = candidates[candidates != index._positions[exclude_id]]
    k = min(k, len(candidates))
    if k == 0:
        return QueryResult(items=(), query_id=exclude_id)
    candidate_scores = scores[candidates]
    if k < len(candidates):
        threshold = np.partition(candidate_scores, len(candidates) - k)[len(candidates) - k]
        keep = candidate_scores >= threshold
        candidates, candidate_scores = candidates[keep], candidate_scores[keep]
    order = np.lexsort((index._rank[candidates], -candidate_scores))[:k]
    items = tuple((index.ids[candidates[i]], float(candidate_scores[i])) for i in order)
    return QueryResult(items=items, query_id=exclude_id)


def save_index(path, index: EmbeddingIndex):
    """Write the index atomically; readers see the old or the new file."""
    meta = dict(index.meta, count=len(index), dim=index.dim)
    ids = dumps(list(index.ids)).encode('utf-8')
    data = versioned_prefix(MAGIC, VERSION, meta) + pack_u32(len(ids)) + ids + index.vectors.astype('<f4').tobytes()
    atomic_write(path, data)
    logger.info(f'wrote index {path} (M={len(index)}, D={index.dim})')


def load_index(path) -> EmbeddingIndex:
    reader, meta = open_versioned(path, MAGIC, VERSION)
    try:
        count, dim = int(meta['count']), int(meta['dim'])
    except (KeyError, TypeError, ValueError):
        raise FormatError(path, 'index header lacks count and dim')
    ids = reader.json()
    if not isinstance(ids, list) or len(ids) != count:
        raise FormatError(path, f'id table does not hold {count} ids')
    vectors = reader.floats((count, dim))
    reader.finish()
    extra = {k: v for k, v in meta.items() if k not in ('count', 'dim')}
    return _make_index([str(i) for i in ids], vectors, extra)


# -- assemblies ---------------------------------------------------------------

@dataclass(frozen=True)
class AssemblyRecord:
    id: str
    parts: tuple

    def __post_init__(self):
        object.__setattr__(self, 'parts', tuple(self.parts))
        if not self.parts:
            raise ContractError(f'assembly {self.id} has no member parts')


def load_assemblies(path):
    """Read memberships: {assembly id: [part ids]} or [{"id", "parts"}]."""
    data = read_json(path)
    try:
        if isinstance(data, dict):
            return [AssemblyRecord(id=str(k), parts=tuple(v)) for k, v in data.items()]
        return [AssemblyRecord(id=str(row['id']), parts=tuple(row['parts'])) for row in data]
    except (KeyError, TypeError) as e:
        raise FormatError(path, f'invalid assembly record: {e}')


def assembly_query(query_assembly: AssemblyRecord, index: EmbeddingIndex, memberships, k_parts, k_out,
                   metric='cosine'):
    """Rank assemblies by how often their parts are retrieved for the query's parts.

    Each query member retrieves its top `k_parts` neighbours (itself
    excluded); every retrieved part votes for each assembly that contains it.
    Returns [(assembly id, votes)] by votes descending, then id ascending,
    without the query assembly.
    """
    if not memberships:
        return []
    for part_id in query_assembly.parts:
        if part_id not in index:
            raise QueryError(f'assembly {query_assembly.id}: member part {part_id} is not in the index')
    owners = defaultdict(list)
    for record in memberships:
        for part_id in dict.fromkeys(record.parts):
            owners[part_id].append(record.id)
    votes = defaultdict(int)
    for part_id in query_assembly.parts:
        k = min(k_parts, len(index) - 1)
        if k < 1:
            continue
        for hit in query(index, index.vector(part_id), k, exclude_id=part_id, metric=metric).ids:
            for assembly_id in owners.get(hit, ()):
                votes[assembly_id] += 1
    votes.pop(query_assembly.id, None)
    ranked = sorted(votes.items(), key=lambda item: (-item[1], item[0]))
    return ranked[:k_out]
