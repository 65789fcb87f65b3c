import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from schwarzlab.errors import DofOutOfRange, NotOnBoundary, TooCoarse
from schwarzlab.poisson_fem import (DofMap, assemble_stiffness, boundary_mass, build_grid, global_stiffness,
                                    interpolate, load_vector, region_boundary)


@pytest.mark.parametrize("dim,n,nodes,elements,free", [(1, 8, 9, 8, 7), (2, 4, 25, 32, 9), (2, 16, 289, 512, 225)])
def test_counts(dim, n, nodes, elements, free):
    g = build_grid(dim, n)
    assert (g.n_nodes, g.n_elements, g.n_free) == (nodes, elements, free)
    assert len(g.free_dofs) == (n - 1) ** dim


def test_too_coarse():
    with pytest.raises(TooCoarse):
        build_grid(1, 3)


def test_1d_stiffness_stencil():
    A = global_stiffness(build_grid(1, 4)).toarray()
    assert np.allclose(A, [[8, -4, 0], [-4, 8, -4], [0, -4, 8]])


def test_single_element_stiffness():
    g = build_grid(1, 4)
    d = DofMap([1], g.n_nodes)
    K = assemble_stiffness(g, [0], d, d).dense()
    assert np.allclose(K, [[4.0]])


def test_2d_stiffness_is_five_point_stencil():
    n = 6
    A = global_stiffness(build_grid(2, n)).toarray()
    m = n - 1
    T = 2 * np.eye(m) - np.eye(m, k=1) - np.eye(m, k=-1)
    five = np.kron(np.eye(m), T) + np.kron(T, np.eye(m))  # h^2 scaling cancels in 2D
    assert np.allclose(A, five)


def test_neumann_row_sums_vanish():
    g = build_grid(2, 2 * 2)
    K = assemble_stiffness(g, np.arange(g.n_elements), g.all_dofs, g.all_dofs).dense()
    assert np.allclose(K.sum(axis=1), 0.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 2), st.integers(4, 9), st.integers(0, 2 ** 31 - 1))
def test_partial_stiffness_symmetric_psd(dim, n, seed):
    g = build_grid(dim, n)
    rng = np.random.default_rng(seed)
    elems = np.flatnonzero(rng.random(g.n_elements) < 0.5)
    K = assemble_stiffness(g, elems, g.all_dofs, g.all_dofs).dense()
    assert np.allclose(K, K.T)
    assert np.allclose(K.sum(axis=1), 0.0, atol=1e-12)
    assert np.linalg.eigvalsh(K).min() >= -1e-10


def test_region_additivity():
    g = build_grid(2, 8)
    rng = np.random.default_rng(0)
    mask = rng.random(g.n_elements) < 0.4
    a = assemble_stiffness(g, np.flatnonzero(mask)).matrix
    b = assemble_stiffness(g, np.flatnonzero(~mask)).matrix
    assert np.allclose((a + b).toarray(), global_stiffness(g).toarray())


def test_boundary_mass_1d_points():
    g = build_grid(1, 8)
    elems = np.arange(2, 6)
    bnd = np.unique(region_boundary(g, elems)[0])
    M = boundary_mass(g, elems, bnd, DofMap(np.arange(2, 7), g.n_nodes)).dense()
    assert np.count_nonzero(np.diag(M)) == 2
    assert np.allclose(np.diag(M)[[0, -1]], 1.0)


def test_boundary_mass_2d_perimeter():
    g = build_grid(2, 8)
    mask = np.zeros((8, 8), dtype=bool)
    mask[2:6, 2:6] = True  # square of side 0.5
    elems = g.cell_elements(mask)
    bnd = np.unique(region_boundary(g, elems)[0])
    M = boundary_mass(g, elems, bnd, g.all_dofs).dense()
    assert np.isclose(np.trace(M), 2.0)
    bubble = np.zeros(g.n_nodes)
    ni = g.node_index
    inside = np.all((ni > 2) & (ni < 6), axis=1)
    bubble[inside] = 1.0
    assert bubble @ M @ bubble == 0.0


def test_boundary_mass_rejects_interior_node():
    g = build_grid(1, 8)
    with pytest.raises(NotOnBoundary):
        boundary_mass(g, np.arange(2, 6), [4])


def test_dof_map_range_and_roundtrip():
    with pytest.raises(DofOutOfRange):
        DofMap([0, 99], 10)
    d = DofMap([3, 1, 4], 6)
    v = np.arange(6.0)
    assert np.allclose(d.restrict(v), [3, 1, 4])
    assert np.allclose(d.prolong(d.restrict(v)), [0, 1, 0, 3, 4, 0])


def test_load_vector_integrates_constant():
    for dim in (1, 2):
        g = build_grid(dim, 8)
        f = load_vector(g, 1.0, g.all_dofs)
        assert np.isclose(f.sum(), 1.0)


def test_energy_of_interpolant_converges():
    # a(u_h, u_h) -> int |grad u|^2 = pi^2 / 2 for u = sin(pi x) in 1D
    errs = []
    for n in (8, 16, 32):
        g = build_grid(1, n)
        u = interpolate(g, lambda x: np.sin(np.pi * x[:, 0]))
        errs.append(abs(u @ global_stiffness(g) @ u - np.pi ** 2 / 2))
    assert errs[0] > errs[1] > errs[2]
