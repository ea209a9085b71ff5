import mpmath as mp
import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from warpspec.eigen import (EigenSolveError, clusters, eigenpairs_by_index, eigenpairs_in_window,
                            eigenvalues_by_index, lowest_eigenpairs, sturm_count)
from warpspec.operator import GridPolicy, OperatorPencil, SectorProblem, assemble, make_grid


def _random_pencil(rng, n, weighted=True):
    diag = rng.standard_normal(n) * 3
    off = rng.standard_normal(n - 1)
    weight = rng.uniform(0.5, 2.0, n) if weighted else np.ones(n)
    return OperatorPencil.from_matrices(diag, off, weight)


def _dense(pencil):
    return scipy.linalg.eigh(*pencil.dense(), eigvals_only=True)


def test_two_by_two():
    pairs = lowest_eigenpairs(OperatorPencil.from_matrices([2.0, 2.0], [1.0]), 2)
    assert [p.lam for p in pairs] == [1.0, 3.0]
    assert all(p.residual < 1e-15 for p in pairs)


def test_one_by_one():
    (p,) = lowest_eigenpairs(OperatorPencil.from_matrices([6.0], [], [2.0]), 1)
    assert p.lam == pytest.approx(3.0, rel=1e-15)
    assert p.vector[0] ** 2 * 2.0 == pytest.approx(1.0)


@pytest.mark.parametrize("seed", range(5))
def test_random_vs_dense(seed):
    rng = np.random.default_rng(seed)
    pen = _random_pencil(rng, 50)
    lam = np.array([p.lam for p in lowest_eigenpairs(pen, 50)])
    ref = _dense(pen)
    assert np.max(np.abs(lam - ref) / np.maximum(np.abs(ref), 1.0)) <= 1e-12


@given(st.integers(0, 2**32 - 1), st.integers(2, 120), st.booleans())
@settings(max_examples=30, deadline=None)
def test_random_lowest(seed, n, weighted):
    rng = np.random.default_rng(seed)
    pen = _random_pencil(rng, n, weighted)
    k = min(n, 6)
    pairs = lowest_eigenpairs(pen, k)
    lam = np.array([p.lam for p in pairs])
    ref = _dense(pen)[:k]
    scale = max(np.max(np.abs(_dense(pen))), 1.0)
    assert np.all(np.diff(lam) >= 0)
    assert np.max(np.abs(lam - ref)) <= 1e-12 * scale
    V = np.array([p.vector for p in pairs])
    gram = V @ np.diag(pen.weight) @ V.T
    assert np.allclose(gram, np.eye(k), atol=1e-10)


def test_clusters_vs_dense():
    # exact multiplicities from a block-diagonal pencil (decoupled copies)
    base = np.array([2.0, 5.0, 9.0, 14.0])
    diag = np.concatenate([base, base, base + 0.5])
    off = np.zeros(len(diag) - 1)
    pen = OperatorPencil.from_matrices(diag, off)
    pairs = lowest_eigenpairs(pen, len(diag))
    lam = np.array([p.lam for p in pairs])
    assert np.allclose(lam, np.sort(diag), rtol=1e-12, atol=0)
    groups = clusters(pairs)
    assert sorted(len(g) for g in groups.values()) == [2, 2, 2, 2]
    V = np.array([p.vector for p in pairs])
    assert np.allclose(V @ V.T, np.eye(len(diag)), atol=1e-10)


def test_near_cluster_orthogonality():
    # mirror-symmetric wells of the hyperbolic mu = 4 pi^2 sector give pairs split below 1e-14
    from warpspec.fiber import circle_spectrum
    from warpspec.operator import WarpedFamily
    from warpspec.profiles import ExponentData, make_sqrt_profile
    fam = WarpedFamily(make_sqrt_profile(), ExponentData(-1, 1, 1), circle_spectrum(), 1.0)
    pen = SectorProblem(fam, 4 * np.pi**2, GridPolicy(n_min=201)).pencil(0.05)
    pairs = lowest_eigenpairs(pen, 6)
    ref = _dense(pen)[:6]
    assert np.allclose([p.lam for p in pairs], ref, rtol=1e-12)
    assert len(clusters(pairs)) >= 2
    V = np.array([p.vector for p in pairs])
    assert np.allclose(V @ np.diag(pen.weight) @ V.T, np.eye(6), atol=1e-10)


def test_flat_three(flat_family):
    grid = make_grid(flat_family.T, 1.0, GridPolicy(n_min=4001))
    lam = [p.lam for p in lowest_eigenpairs(assemble(flat_family, 0.0, 1.0, grid), 3)]
    assert np.allclose(lam, [1, 4, 9], rtol=1e-5)


def test_sturm_monotone_and_total():
    rng = np.random.default_rng(7)
    pen = _random_pencil(rng, 40)
    ref = _dense(pen)
    xs = np.linspace(ref[0] - 1, ref[-1] + 1, 301)
    counts = [sturm_count(pen, x) for x in xs]
    assert np.all(np.diff(counts) >= 0)
    assert counts[0] == 0 and counts[-1] == 40
    for x in xs[::17]:
        assert sturm_count(pen, x) == int(np.sum(ref < x))


def test_window_and_index_agree():
    rng = np.random.default_rng(3)
    pen = _random_pencil(rng, 60)
    ref = _dense(pen)
    lo, hi = 0.5 * (ref[9] + ref[10]), 0.5 * (ref[19] + ref[20])
    pairs = eigenpairs_in_window(pen, lo, hi)
    assert [p.index for p in pairs] == list(range(10, 20))
    assert np.allclose([p.lam for p in pairs], ref[10:20], rtol=1e-12)
    raw = eigenvalues_by_index(pen, 10, 19)
    assert np.allclose(raw, ref[10:20], rtol=1e-10)
    assert eigenpairs_in_window(pen, ref[-1] + 1, ref[-1] + 2) == []
    with pytest.raises(EigenSolveError, match="WINDOW_TOO_LARGE"):
        eigenpairs_in_window(pen, ref[0] - 1, ref[-1] + 1, max_count=5)


def _mp_eigenvalue(pencil, j, hi, dps=40, iters=110):
    # bisection on the exact inertia of A - x B in extended precision
    mp.mp.dps = dps
    d = [mp.mpf(float(x)) for x in pencil.diag]
    e2 = [mp.mpf(float(x)) ** 2 for x in pencil.off]
    w = [mp.mpf(float(x)) for x in pencil.weight]

    def count(x):
        q = d[0] - x * w[0]
        c = int(q < 0)
        for i in range(1, len(d)):
            q = (d[i] - x * w[i]) - e2[i - 1] / q
            c += int(q < 0)
        return c

    lo, hi = mp.mpf(0), mp.mpf(hi)
    for _ in range(iters):
        mid = (lo + hi) / 2
        if count(mid) > j:
            hi = mid
        else:
            lo = mid
    return float(lo)


def test_hyperbolic_vs_extended_precision(hyperbolic_family):
    # rho^2 spans four decades here, so dense LAPACK is only good to ~1e-9; compare
    # against exact inertia counts instead
    pen = SectorProblem(hyperbolic_family, 0.0, GridPolicy(n_min=301)).pencil(0.01)
    pairs = lowest_eigenpairs(pen, 4)
    for p in pairs:
        ref = _mp_eigenvalue(pen, p.index, hi=10.0)
        assert abs(p.lam - ref) / ref <= 1e-12


def test_shift_handles_negative_spectrum():
    pen = OperatorPencil.from_matrices([-50.0, -49.0, 3.0], [0.1, 0.2])
    lam = [p.lam for p in lowest_eigenpairs(pen, 3)]
    assert np.allclose(lam, _dense(pen), rtol=1e-13)


def test_argument_validation():
    pen = OperatorPencil.from_matrices([1.0, 2.0], [0.0])
    with pytest.raises(ValueError):
        lowest_eigenpairs(pen, 0)
    with pytest.raises(ValueError):
        lowest_eigenpairs(pen, 3)
    with pytest.raises(ValueError):
        eigenpairs_by_index(pen, 0, 1, tol=0.0)
    with pytest.raises(ValueError):
        sturm_count(OperatorPencil.from_matrices([1.0], [], [-1.0]), 0.0)
