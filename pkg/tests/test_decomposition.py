import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from schwarzlab.decomposition import build_cut_functions, build_decomposition, restriction_ops
from schwarzlab.errors import IndivisibleBlocks, OverlapTooLarge
from schwarzlab.poisson_fem import build_grid


def od_of(dim, n, nb, layers):
    return build_decomposition(build_grid(dim, n), nb, layers)


def brute_force_neighbors(od):
    """Neighbours from shared elements, by set intersection."""
    sets = [set(s.elements.tolist()) for s in od.subdomains]
    return [tuple(k for k in range(len(sets)) if sets[l] & sets[k]) for l in range(len(sets))]


def test_1d_element_counts_and_nu():
    od = od_of(1, 16, 4, 1)
    assert [s.elements.size for s in od.subdomains] == [5, 6, 6, 5]
    assert od.nu == 3
    assert list(od.neighbors) == brute_force_neighbors(od)


def test_single_block_rejected():
    with pytest.raises(OverlapTooLarge):
        od_of(1, 8, 1, 1)


def test_indivisible_blocks():
    with pytest.raises(IndivisibleBlocks):
        od_of(1, 10, 4, 1)


def test_2d_corner_overlap_nu():
    od = od_of(2, 8, 2, 1)
    assert od.nu == 4
    assert list(od.neighbors) == brute_force_neighbors(od)


def test_one_layer_cut_gradient():
    # 1D: max |grad eta| = 1/delta exactly
    assert np.isclose(build_cut_functions(od_of(1, 16, 4, 1)).gradient_constant, 1.0)
    # 2D: the Chebyshev-distance profile is steeper across the diagonal of corner cells
    assert np.isclose(build_cut_functions(od_of(2, 8, 2, 1)).gradient_constant, np.sqrt(2.0))


def test_two_layer_eta_profile():
    od = od_of(1, 16, 4, 2)
    eta = build_cut_functions(od).eta[1]  # D = [4h, 8h]
    expected = np.zeros(17)
    expected[2:11] = [0, 0.5, 1, 1, 1, 1, 1, 0.5, 0]
    assert np.allclose(eta, expected)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 2), st.sampled_from([8, 12, 16]), st.sampled_from([2, 3, 4]), st.integers(1, 3))
def test_cover_invariants(dim, n, nb, layers):
    assume(n % nb == 0)
    try:
        od = od_of(dim, n, nb, layers)
    except OverlapTooLarge:
        return
    g = od.grid
    # cores partition the elements; overlapping subdomains cover them
    core = np.zeros(g.n_elements, dtype=int)
    for s in od.subdomains:
        core[s.core_elements] += 1
        assert set(s.overlap_elements) == set(s.elements) - set(s.core_elements)
        assert not np.isin(s.local_nodes, g.boundary_nodes).any()
    assert np.all(core == 1)
    assert np.all(od.element_multiplicity() >= 1)
    # neighbour relation symmetric, includes self
    for l, nb_l in enumerate(od.neighbors):
        assert l in nb_l
        assert all(l in od.neighbors[k] for k in nb_l)
    assert list(od.neighbors) == brute_force_neighbors(od)
    cuts = build_cut_functions(od)
    free = g.free_nodes
    assert np.allclose(cuts.chi[:, free].sum(axis=0), 1.0, atol=1e-14)
    assert np.all((cuts.eta >= 0) & (cuts.eta <= 1))
    for s in od.subdomains:
        outside = np.setdiff1d(free, s.interior_nodes)
        assert np.all(cuts.eta[s.index, outside] == 0.0)


def test_restriction_identities():
    od = od_of(1, 16, 4, 1)
    ops = restriction_ops(od)
    for El in ops.E_blocks:
        assert np.allclose((El.T @ El).toarray(), np.eye(El.shape[1]))
    assert np.allclose(ops.R @ np.ones(ops.R.shape[1]), 1.0)
    chi = build_cut_functions(od).chi
    n = ops.E.shape[0]
    S = sum(El.toarray() @ np.diag(chi[s.index, s.interior_nodes]) @ El.toarray().T
            for El, s in zip(ops.E_blocks, od.subdomains))
    assert np.allclose(S, np.eye(n))
    assert ops.embed_g().shape == (ops.n_hat, ops.n_g)
