"""
Ranking metrics over graded relevance labels.

Labels are per query: {candidate id: grade} with grades
similar=2, partially similar=1, dissimilar=0.
"""

import logging
import math
from enum import IntEnum

import numpy as np

from partsim.errors import ContractError, QueryError
from partsim.retrieval import query

logger = logging.getLogger(__name__)

DEFAULT_KS = (5, 10)
DEFAULT_DEPTH = 100


class Relevance(IntEnum):
    DISSIMILAR = 0
    PARTIAL = 1
    SIMILAR = 2


def _ranked_grades(result, labels, k):
    if k <= 0:
        raise ContractError(f'k must be positive, got {k}')
    grades = []
    for part_id in result.ids[:k]:
        if part_id not in labels:
            raise ContractError(f'no relevance label for candidate {part_id}')
        grades.append(int(labels[part_id]))
    return grades


def recall_at_k(result, labels, k, threshold=Relevance.SIMILAR):
    """Relevant hits in the top k over min(k, relevant items in the pool).

    Only grades >= `threshold` count as relevant; 0.0 when the pool holds none.
    """
    grades = _ranked_grades(result, labels, k)
    relevant = sum(1 for grade in labels.values() if grade >= threshold)
    if relevant == 0:
        return 0.0
    hits = sum(1 for grade in grades if grade >= threshold)
    return hits / min(k, relevant)


def _dcg(grades):
    return sum((2.0 ** grade - 1.0) / math.log2(i + 2) for i, grade in enumerate(grades))


def ndcg_at_k(result, labels, k):
    """Exponential-gain DCG@k normalised by the ideal ordering of the labeled pool."""
    grades = _ranked_grades(result, labels, k)
    ideal = _dcg(sorted((int(g) for g in labels.values()), reverse=True)[:k])
    if ideal == 0:
        return 0.0
    return _dcg(grades) / ideal


def family_relevance(families, query_id):
    """Synthetic labels: same family is similar, anything else dissimilar."""
    if query_id not in families:
        raise ContractError(f'no family label for part {query_id}')
    family = families[query_id]
    return {part_id: int(Relevance.SIMILAR if other == family else Relevance.DISSIMILAR)
            for part_id, other in families.items() if part_id != query_id}


def graded_labels(labels, ids):
    """{query: {candidate: grade}} from either family labels or graded labels.

    Family labels are restricted to `ids` so every pool matches the corpus.
    """
    values = list(labels.values())
    if values and all(isinstance(v, dict) for v in values):
        return {q: {c: int(g) for c, g in row.items() if c != q} for q, row in labels.items()}
    ids = set(ids)
    families = {p: f for p, f in labels.items() if p in ids}
    return {q: family_relevance(families, q) for q in families}


def sample_queries(ids, count, seed):
    """`count` query ids drawn without replacement, in index order."""
    ids = list(ids)
    if count is None or count >= len(ids):
        return ids
    picked = np.random.default_rng(seed).choice(len(ids), size=count, replace=False)
    return [ids[i] for i in sorted(picked)]


def evaluate(index, labels, ks=DEFAULT_KS, queries=None, depth=DEFAULT_DEPTH, metric='cosine'):
    """Per-query and mean Recall@k (similar-only and similar-or-partial) and NDCG@k.

    `labels` maps query id to {candidate id: grade} (see graded_labels) and
    must cover the top max(ks) candidates retrieved for each query.
    """
    if not ks or min(ks) <= 0:
        raise ContractError(f'K values must be positive, got {list(ks)}')
    queries = list(queries if queries is not None else [q for q in index.ids if q in labels])
    if not queries:
        raise ContractError('no labeled queries in the index')
    depth = min(max(depth, max(ks)), len(index) - 1)
    if depth < 1:
        raise QueryError('evaluation needs at least 2 indexed parts')
    rows = []
    for query_id in queries:
        if query_id not in labels:
            raise ContractError(f'query {query_id} has no relevance labels')
        pool = labels[query_id]
        result = query(index, index.vector(query_id), depth, exclude_id=query_id, metric=metric)
        row = {'query': query_id}
        for k in ks:
            row[f'recall@{k}'] = recall_at_k(result, pool, k)
            row[f'recall_partial@{k}'] = recall_at_k(result, pool, k, threshold=Relevance.PARTIAL)
            row[f'ndcg@{k}'] = ndcg_at_k(result, pool, k)
        rows.append(row)
    names = [name for name in rows[0] if name != 'query']
    mean = {name: float(np.mean([row[name] for row in rows])) for name in names}
    headline = ', '.join(f'{name}={value:.4f}' for name, value in mean.items() if not name.startswith('recall_partial'))
    logger.info(f'evaluation over {len(rows)} queries: {headline}')
    return {'queries': len(rows), 'ks': list(ks), 'depth': depth, 'metric': metric, 'mean': mean, 'per_query': rows}
