import pytest

from schwarzlab.decomposition import build_decomposition
from schwarzlab.diagnostics import DenseModel
from schwarzlab.operators import LocalSolverBundle
from schwarzlab.poisson_fem import build_grid

# reference configurations: (dim, cells_per_side, blocks_per_side, overlap_layers)
R1 = (1, 32, 4, 2)
R2 = (2, 16, 2, 1)

ACCEPTANCE_LINES = []


def make_bundle(dim, cells, blocks, layers, **kw):
    grid = build_grid(dim, cells)
    return LocalSolverBundle(grid, build_decomposition(grid, blocks, layers), **kw)


@pytest.fixture(scope="session")
def r1_model():
    return DenseModel(make_bundle(*R1))


@pytest.fixture(scope="session")
def r2_model():
    return DenseModel(make_bundle(*R2))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
