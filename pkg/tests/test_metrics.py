import math

import numpy as np
import pytest

from partsim.errors import ContractError
from partsim.metrics import (Relevance, evaluate, family_relevance, graded_labels, ndcg_at_k, recall_at_k,
                             sample_queries)
from partsim.retrieval import QueryResult, build_index


def ranked(*ids):
    return QueryResult(items=tuple((part_id, 1.0 - 0.01 * i) for i, part_id in enumerate(ids)))


def reference_ndcg(grades, pool, k):
    dcg = 0.0
    for position, grade in enumerate(grades[:k], start=1):
        dcg += (2 ** grade - 1) / math.log2(position + 1)
    ideal = 0.0
    for position, grade in enumerate(sorted(pool, reverse=True)[:k], start=1):
        ideal += (2 ** grade - 1) / math.log2(position + 1)
    return dcg / ideal if ideal else 0.0


def reference_recall(grades, pool, k, threshold):
    relevant = [grade for grade in pool if grade >= threshold]
    if not relevant:
        return 0.0
    hits = [grade for grade in grades[:k] if grade >= threshold]
    return len(hits) / min(k, len(relevant))


def test_partial_before_similar_scores_about_0797():
    labels = {'p': Relevance.PARTIAL, 's': Relevance.SIMILAR}
    assert ndcg_at_k(ranked('p', 's'), labels, 2) == pytest.approx(0.797, abs=1e-3)
    assert ndcg_at_k(ranked('s', 'p'), labels, 2) == pytest.approx(1.0)


def test_recall_counts_only_relevant_grades():
    labels = {'a': 2, 'b': 0, 'c': 2, 'd': 1, 'e': 2}
    result = ranked('a', 'b', 'd', 'c', 'e')
    assert recall_at_k(result, labels, 2) == pytest.approx(1 / 2)
    assert recall_at_k(result, labels, 4) == pytest.approx(2 / 3)
    assert recall_at_k(result, labels, 3, threshold=Relevance.PARTIAL) == pytest.approx(2 / 3)
    assert recall_at_k(ranked('b'), {'b': 0}, 1) == 0.0


def test_metrics_need_labels_and_positive_k():
    with pytest.raises(ContractError):
        recall_at_k(ranked('a'), {'a': 2}, 0)
    with pytest.raises(ContractError):
        ndcg_at_k(ranked('a', 'x'), {'a': 2}, 2)


def test_ndcg_matches_reference_on_random_rankings():
    rng = np.random.default_rng(17)
    for _ in range(100):
        size = int(rng.integers(1, 30))
        ids = [f'c{i}' for i in range(size)]
        grades = {part_id: int(g) for part_id, g in zip(ids, rng.integers(0, 3, size))}
        order = list(rng.permutation(ids))
        k = int(rng.integers(1, size + 1))
        expected = reference_ndcg([grades[i] for i in order], list(grades.values()), k)
        assert ndcg_at_k(ranked(*order), grades, k) == expected
        assert 0.0 <= expected <= 1.0


def test_recall_matches_reference_on_random_rankings():
    rng = np.random.default_rng(23)
    for _ in range(100):
        size = int(rng.integers(1, 30))
        ids = [f'c{i}' for i in range(size)]
        grades = {part_id: int(g) for part_id, g in zip(ids, rng.integers(0, 3, size))}
        order = list(rng.permutation(ids))
        k = int(rng.integers(1, size + 1))
        threshold = int(rng.integers(1, 3))
        expected = reference_recall([grades[i] for i in order], list(grades.values()), k, threshold)
        assert recall_at_k(ranked(*order), grades, k, threshold=threshold) == pytest.approx(expected)
        assert 0.0 <= expected <= 1.0


def test_family_relevance_excludes_the_query():
    families = {'a': 'x', 'b': 'x', 'c': 'y'}
    assert family_relevance(families, 'a') == {'b': 2, 'c': 0}
    with pytest.raises(ContractError):
        family_relevance(families, 'z')


def test_graded_labels_from_families_or_grades():
    families = {'a': 'x', 'b': 'x', 'c': 'y', 'gone': 'x'}
    assert graded_labels(families, ['a', 'b', 'c']) == {'a': {'b': 2, 'c': 0}, 'b': {'a': 2, 'c': 0},
                                                        'c': {'a': 0, 'b': 0}}
    grades = {'a': {'a': 2, 'b': 1}, 'b': {'a': 0}}
    assert graded_labels(grades, ['a', 'b']) == {'a': {'b': 1}, 'b': {'a': 0}}


def test_sample_queries_is_seeded():
    ids = [f'p{i}' for i in range(50)]
    picked = sample_queries(ids, 10, seed=4)
    assert picked == sample_queries(ids, 10, seed=4)
    assert len(set(picked)) == 10
    assert picked == [i for i in ids if i in picked]
    assert sample_queries(ids, None, 0) == ids


@pytest.fixture
def three_query_index():
    return build_index({
        'q1': [1.0, 0.0], 'q2': [0.0, 1.0], 'q3': [-1.0, 0.0],
        'a': [1.0, 0.2], 'b': [0.2, 1.0], 'c': [-1.0, -0.3],
    })


def test_evaluate_hand_computed(three_query_index):
    # q1 ranks a, b, q2, ...; q2 ranks b, a, q1, ...; q3 ranks c, ...
    others = ['q1', 'q2', 'q3', 'a', 'b', 'c']
    labels = {q: {p: 0 for p in others if p != q} for q in ('q1', 'q2', 'q3')}
    labels['q1'].update(a=2, b=1)
    labels['q2'].update(a=1, b=2)
    labels['q3'].update(a=2)
    report = evaluate(three_query_index, labels, ks=(1, 2))
    rows = {row['query']: row for row in report['per_query']}
    assert rows['q1']['recall@1'] == 1.0 and rows['q1']['ndcg@2'] == pytest.approx(1.0)
    assert rows['q2']['recall@1'] == 1.0 and rows['q2']['recall_partial@2'] == 1.0
    assert rows['q3']['recall@1'] == 0.0 and rows['q3']['ndcg@2'] == 0.0
    assert report['mean']['recall@1'] == pytest.approx(2 / 3)
    assert report['depth'] == 5
    assert report['queries'] == 3


def test_evaluate_with_family_labels(three_query_index):
    families = {'q1': 'right', 'a': 'right', 'q2': 'up', 'b': 'up', 'q3': 'left', 'c': 'left'}
    report = evaluate(three_query_index, graded_labels(families, three_query_index.ids), ks=(1,))
    assert report['mean']['recall@1'] == 1.0
    assert report['mean']['ndcg@1'] == 1.0
    assert report['queries'] == 6
