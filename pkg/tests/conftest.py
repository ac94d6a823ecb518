import numpy as np
import pytest

from procopt import data, forest
from procopt.env import SurrogateGrid

EXPERT_MATRIX = [
    [1, 3, 5, 5],
    [1 / 3, 1, 3, 3],
    [1 / 5, 1 / 3, 1, 2],
    [1 / 5, 1 / 3, 1 / 2, 1],
]


@pytest.fixture(scope="session")
def ozon():
    return data.ozonation_schema()


@pytest.fixture(scope="session")
def small_grid(ozon):
    """Cheap surrogates (10-tree forests on 200 noisy rows) over the ozonation grid."""
    ds = data.synth_generate(ozon, 200, seed=5)
    hp = forest.ForestHyperParams(n_estimators=10)
    models = [forest.fit_forest(ds.inputs, ds.target(i), hp, seed=i, criterion_name=c)
              for i, c in enumerate(ozon.criteria)]
    return SurrogateGrid(ozon, models)


@pytest.fixture
def expert_matrix():
    return np.array(EXPERT_MATRIX, dtype=float)


BENCH_SEED = 0


@pytest.fixture(scope="session")
def bench(ozon):
    """The CLI's default surrogate recipe at master seed 0.

    500 synthetic rows at default noise, 75/25 split, 100-tree forests with
    default hyperparameters, expert-matrix weights. Returns (grid, weights, test split).
    """
    from procopt import ahp, seeding

    ds = data.synth_generate(ozon, 500, None, seeding.derive_seed(BENCH_SEED, seeding.SYNTH))
    train, test = data.split(ds, 0.75, seeding.derive_seed(BENCH_SEED, seeding.SPLIT))
    hp = forest.ForestHyperParams()
    models = [forest.fit_forest(train.inputs, train.target(i), hp,
                                seeding.derive_seed(BENCH_SEED, seeding.FOREST, i),
                                criterion_name=c)
              for i, c in enumerate(ozon.criteria)]
    weights = ahp.derive_weights(np.array(EXPERT_MATRIX, dtype=float)).weights
    return SurrogateGrid(ozon, models), weights, models, test


ACCEPTANCE: list[str] = []


def record(number: int, title: str, ok: bool, detail: str) -> bool:
    ACCEPTANCE.append(f"criterion {number} [{'PASS' if ok else 'FAIL'}] {title}: {detail}")
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
