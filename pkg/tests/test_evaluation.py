import numpy as np
import pytest

from sgir.catalog import build_catalog
from sgir.errors import UnknownImageError
from sgir.evaluation import (
    dedup_scenes,
    evaluate,
    node_drop_experiment,
    reports_table,
)
from sgir.query import query_from_scene, sample_partial_query
from sgir.scoring import image_probabilities
from sgir.synthetic import clustered_scenes, random_scenes


@pytest.fixture(scope="module")
def eval_corpus(schema, table):
    scenes = random_scenes(20, schema, seed=13, min_objects=2, max_objects=5)
    return scenes, build_catalog(scenes, schema, table)


def test_metrics_on_hand_built_ranks(schema, table, unit_params, eval_corpus):
    # self-queries rank gold first, so every metric is exactly 1
    scenes, catalog = eval_corpus
    eval_set = [(query_from_scene(s, schema, table), s.image_id) for s in scenes[:5]]
    report = evaluate(catalog, eval_set, unit_params)
    assert report.top1_accuracy == 1.0
    assert report.recall_at_k == {1: 1.0, 5: 1.0, 10: 1.0}
    assert report.mean_reciprocal_rank == 1.0
    assert report.num_queries == 5


def test_rates_are_multiples_of_one_over_n(schema, table, unit_params, eval_corpus):
    scenes, catalog = eval_corpus
    eval_set = [
        (sample_partial_query(scenes[i], 0.4, 0.4, i, schema, table), scenes[i].image_id)
        for i in range(10)
    ]
    report = evaluate(catalog, eval_set, unit_params)
    for value in [report.top1_accuracy, *report.recall_at_k.values()]:
        assert (value * 10) == pytest.approx(round(value * 10), abs=1e-12)
    assert 0.0 < report.mean_reciprocal_rank <= 1.0
    assert report.recall_at_k[1] <= report.recall_at_k[5] <= report.recall_at_k[10]


def test_metrics_match_brute_recomputation(schema, table, unit_params, eval_corpus):
    scenes, catalog = eval_corpus
    eval_set = [
        (sample_partial_query(scenes[i], 0.5, 0.4, 7 * i, schema, table), scenes[i].image_id)
        for i in range(8)
    ]
    report = evaluate(catalog, eval_set, unit_params)
    ranks = []
    for query, gold in eval_set:
        ranking = image_probabilities(query, catalog, unit_params).ranking
        ranks.append(ranking.index(gold) + 1)
    n = len(ranks)
    assert report.top1_accuracy == sum(1 for r in ranks if r == 1) / n
    assert report.mean_reciprocal_rank == pytest.approx(sum(1 / r for r in ranks) / n)
    for k in (1, 5, 10):
        assert report.recall_at_k[k] == sum(1 for r in ranks if r <= k) / n


def test_threaded_matches_sequential(schema, table, unit_params, eval_corpus):
    scenes, catalog = eval_corpus
    eval_set = [
        (sample_partial_query(scenes[i], 0.3, 0.3, i, schema, table), scenes[i].image_id)
        for i in range(10)
    ]
    seq = evaluate(catalog, eval_set, unit_params, threads=1)
    par = evaluate(catalog, eval_set, unit_params, threads=4)
    assert seq.to_dict(include_timing=False) == par.to_dict(include_timing=False)


def test_evaluate_rejects_empty_set(unit_params, eval_corpus):
    _, catalog = eval_corpus
    with pytest.raises(ValueError):
        evaluate(catalog, [], unit_params)


def test_evaluate_unknown_gold(schema, table, unit_params, eval_corpus):
    scenes, catalog = eval_corpus
    query = query_from_scene(scenes[0], schema, table)
    with pytest.raises(UnknownImageError):
        evaluate(catalog, [(query, 10**6)], unit_params)


def test_dedup_scenes(schema):
    scenes = random_scenes(5, schema, seed=3)
    doubled = list(scenes) + [scenes[1], scenes[3]]
    kept, removed = dedup_scenes(doubled)
    assert removed == 2
    assert [s.image_id for s in kept] == [s.image_id for s in scenes]


def test_node_drop_zero_fraction_is_perfect(schema, table, unit_params):
    scenes = clustered_scenes(40, schema, seed=17)
    catalog = build_catalog(scenes, schema, table)
    reports = node_drop_experiment(
        catalog, scenes, [0.0], 30, 5, unit_params, schema, table
    )
    assert reports[0].top1_accuracy == 1.0
    assert reports[0].drop_fraction == 0.0


def test_node_drop_accuracy_is_nonincreasing(schema, table, unit_params):
    scenes = clustered_scenes(120, schema, seed=21)
    catalog = build_catalog(scenes, schema, table)
    reports = node_drop_experiment(
        catalog, scenes, [0.0, 0.2, 0.3], 300, 9, unit_params, schema, table
    )
    accs = [r.top1_accuracy for r in reports]
    assert accs[0] >= accs[1] >= accs[2]
    assert accs[2] < 1.0  # dropping 2 of 7 nodes must produce some ambiguity


def test_node_drop_is_deterministic(schema, table, unit_params, eval_corpus):
    scenes, catalog = eval_corpus
    a = node_drop_experiment(catalog, scenes, [0.2], 15, 3, unit_params, schema, table)
    b = node_drop_experiment(catalog, scenes, [0.2], 15, 3, unit_params, schema, table)
    assert a[0].to_dict(include_timing=False) == b[0].to_dict(include_timing=False)


def test_node_drop_rejects_bad_fraction(schema, table, unit_params, eval_corpus):
    scenes, catalog = eval_corpus
    with pytest.raises(ValueError):
        node_drop_experiment(catalog, scenes, [1.0], 5, 0, unit_params, schema, table)


def test_node_drop_reports_duplicates(schema, table, unit_params):
    scenes = random_scenes(10, schema, seed=31)
    corpus = list(scenes) + [scenes[0]]
    catalog = build_catalog(scenes, schema, table)
    reports = node_drop_experiment(
        catalog, corpus, [0.0], 5, 1, unit_params, schema, table
    )
    assert reports[0].duplicates_removed == 1


def test_reports_table_shape(schema, table, unit_params, eval_corpus):
    scenes, catalog = eval_corpus
    reports = node_drop_experiment(
        catalog, scenes, [0.0, 0.2], 5, 2, unit_params, schema, table
    )
    text = reports_table(reports)
    lines = text.strip().split("\n")
    assert len(lines) == 3
    assert lines[0].startswith("drop_fraction")


def test_to_dict_timing_flag(schema, table, unit_params, eval_corpus):
    scenes, catalog = eval_corpus
    eval_set = [(query_from_scene(scenes[0], schema, table), scenes[0].image_id)]
    report = evaluate(catalog, eval_set, unit_params)
    assert "mean_wall_time_s" in report.to_dict()
    assert "mean_wall_time_s" not in report.to_dict(include_timing=False)
