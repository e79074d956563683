import numpy as np
import pytest

from fsym.tables import CountTable, ProbTable, TableShape


@pytest.fixture
def rng():
    return np.random.default_rng(20260808)


def random_prob_table(rng, shape: TableShape, concentration: float = 1.0) -> ProbTable:
    return ProbTable(shape, rng.dirichlet(np.full(shape.n_cells, concentration)))


def random_count_table(rng, shape: TableShape, n: int = 500) -> CountTable:
    probs = rng.dirichlet(np.ones(shape.n_cells))
    return CountTable(shape, rng.multinomial(n, probs))
