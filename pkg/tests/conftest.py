import pytest

from sgir import CLEVR_SCHEMA, EmbeddingTable, ScoringParams, build_catalog
from sgir.synthetic import random_scenes


@pytest.fixture(scope="session")
def schema():
    return CLEVR_SCHEMA


@pytest.fixture(scope="session")
def table(schema):
    return EmbeddingTable.from_schema(schema, 16, 7)


@pytest.fixture(scope="session")
def small_scenes(schema):
    return random_scenes(8, schema, seed=3, min_objects=2, max_objects=5)


@pytest.fixture(scope="session")
def small_catalog(small_scenes, schema, table):
    return build_catalog(small_scenes, schema, table)


@pytest.fixture
def unit_params(schema):
    return ScoringParams.initial(schema.num_attributes)
