import numpy as np
import pytest

from mixed_msgfem.decomposition import build_decomposition, pou_gradient_bound
from mixed_msgfem.mesh import build_cartesian_mesh, region_boundary_split


@pytest.fixture(scope="module")
def dec100():
    return build_decomposition(build_cartesian_mesh(100, 100), m=4, ell=2, overlap=2)


def test_interior_subdomain_sizes(dec100):
    i = 1 * 4 + 1
    assert dec100.omega0[i].n_cells == 25 * 25
    assert dec100.omega[i].n_cells == 29 * 29
    assert dec100.omega_star[i].n_cells == 33 * 33
    # corner subdomains are clipped by the domain
    assert dec100.omega[0].n_cells == 27 * 27


def test_partition_and_nesting(dec100):
    cover = np.zeros(dec100.mesh.n_cells, dtype=int)
    for w0, w, ws in zip(dec100.omega0, dec100.omega, dec100.omega_star):
        cover[w0.cells] += 1
        assert w.contains(w0) and ws.contains(w)
    assert np.all(cover == 1)
    k, ks = dec100.overlap_counts()
    assert k <= 4 and ks <= 4


def test_pou_sums_to_one_and_is_supported(dec100):
    mesh = dec100.mesh
    assert np.allclose(dec100.pou.sum(axis=0), 1.0, atol=1e-14)
    assert dec100.pou.min() >= 0
    for chi, w in zip(dec100.pou, dec100.omega):
        outside = np.setdiff1d(np.arange(mesh.n_nodes), w.nodes)
        assert np.all(chi[outside] == 0)
        # vanishes on the part of the subdomain boundary inside the domain
        _, inner = region_boundary_split(mesh, w)
        assert np.all(chi[np.unique(mesh.edge_nodes[inner])] == 0)


def test_gradient_bound():
    assert pou_gradient_bound(build_decomposition(build_cartesian_mesh(16, 16), 1, 1)) == 0
    g = []
    for n in (32, 64):
        mesh = build_cartesian_mesh(n, n)
        g.append(pou_gradient_bound(build_decomposition(mesh, 4, 2, overlap=n // 16)))
        h = 1 / n
        # ramp over 2*overlap layers, so about 1/(4h) at overlap 2 scale; within a factor 2
        w = 2 * (n // 16) * h
        assert 0.5 / w <= g[-1] <= 2 / w
    # doubling the overlap layers with the mesh keeps the bound ~ fixed
    assert 0.5 <= g[1] / g[0] <= 2
    mesh = build_cartesian_mesh(64, 64)
    g2 = pou_gradient_bound(build_decomposition(mesh, 4, 2, overlap=2))
    g4 = pou_gradient_bound(build_decomposition(mesh, 4, 2, overlap=4))
    assert 1.5 <= g2 / g4 <= 2.5


@pytest.mark.parametrize("m,ell,overlap", [(3, 1, 1), (0, 1, 1), (4, 0, 1), (4, 1, 0)])
def test_invalid_parameters(m, ell, overlap):
    with pytest.raises(ValueError):
        build_decomposition(build_cartesian_mesh(16, 16), m, ell, overlap)
