import numpy as np
import pytest

from cfgraph.errors import NotPositiveDefinite, ValidationError, WidthMismatch
from cfgraph.numerics import (GramTree, assemble_stats, column_whiten, gaussian_kernel,
                              gaussian_kernel_blocks, gram_downdate, krr_fit, krr_predict,
                              median_pairwise_distance, ridge_solve, rff_map, solve_stats)

rng0 = np.random.default_rng


def ridge_gradient(H, Y, W, alpha):
    return H.T @ (H @ W - Y) + alpha * W


def test_ridge_optimality_gradient():
    rng = rng0(0)
    H, Y = rng.standard_normal((200, 12)), rng.standard_normal((200, 3))
    W, _ = ridge_solve(H, Y, 0.3)
    assert np.abs(ridge_gradient(H, Y, W, 0.3)).max() <= 1e-8


def test_ridge_examples():
    W, _ = ridge_solve(np.eye(4), np.eye(4), 1.0)
    assert np.allclose(W, 0.5 * np.eye(4), atol=1e-15)
    rng = rng0(1)
    H, Y = rng.standard_normal((20, 5)), rng.standard_normal((20, 3))
    W, _ = ridge_solve(H, Y, 0.1)
    assert np.allclose(W, np.linalg.inv(H.T @ H + 0.1 * np.eye(5)) @ H.T @ Y, atol=1e-12)
    W, st = ridge_solve(H, Y, 1e9)
    assert np.abs(W).max() <= np.abs(st.b).max() / 1e9 * 5


def test_ridge_errors():
    with pytest.raises(ValidationError):
        ridge_solve(np.ones((3, 2)), np.ones((3, 1)), 0.0)
    with pytest.raises(WidthMismatch):
        ridge_solve(np.ones((3, 2)), np.ones((4, 1)), 1.0)
    st = assemble_stats(np.ones((3, 2)), np.ones((3, 1)), 1.0)
    st.G[0, 0] = -10.0
    with pytest.raises(NotPositiveDefinite):
        solve_stats(st)


def test_downdate_identity_and_round_trip():
    rng = rng0(2)
    H, Y = rng.standard_normal((50, 6)), rng.standard_normal((50, 2))
    st = assemble_stats(H, Y, 1.0)
    same = gram_downdate(st, H[:5], Y[:5], H[:5], Y[:5])
    assert np.array_equal(same.G, st.G) and np.array_equal(same.b, st.b)
    removed = gram_downdate(st, H[7], Y[7])
    back = gram_downdate(removed, np.zeros((0, 6)), np.zeros((0, 2)))
    back = _add_row(back, H[7], Y[7])
    rel = max(np.abs(back.G - st.G).max() / np.abs(st.G).max(),
              np.abs(back.b - st.b).max() / np.abs(st.b).max())
    assert rel <= 1e-12


def _add_row(st, h, y):
    st = st.copy()
    st.G += np.outer(h, h)
    st.b += np.outer(h, y)
    return st


def test_downdate_matches_resolve():
    rng = rng0(3)
    H, Y = rng.standard_normal((50, 6)), rng.standard_normal((50, 2))
    st = assemble_stats(H, Y, 0.5)
    idx = np.array([1, 9, 20, 33, 48])
    H2, Y2 = H.copy(), Y.copy()
    H2[idx] = rng.standard_normal((5, 6))
    Y2[idx] = rng.standard_normal((5, 2))
    up = gram_downdate(st, H[idx], Y[idx], H2[idx], Y2[idx])
    W_ref, _ = ridge_solve(H2, Y2, 0.5)
    assert np.abs(solve_stats(up) - W_ref).max() <= 1e-10


def test_gram_tree_update_equals_build():
    rng = rng0(4)
    n = 97
    H, Y = rng.standard_normal((n, 5)), rng.standard_normal((n, 3))
    tr = rng.random(n) < 0.6
    tree = GramTree.build(H, Y, tr, leaf_size=8)
    st = tree.stats(1.0)
    assert np.allclose(st.G, H[tr].T @ H[tr], atol=1e-12)
    H2, tr2 = H.copy(), tr.copy()
    changed = np.array([3, 40, 41, 96])
    H2[changed] = rng.standard_normal((4, 5))
    tr2[40] = not tr2[40]
    t2 = tree.copy()
    t2.update(H2, Y, tr2, changed)
    fresh = GramTree.build(H2, Y, tr2, leaf_size=8)
    assert np.array_equal(t2.G[1], fresh.G[1]) and np.array_equal(t2.b[1], fresh.b[1])
    # the original tree is untouched by updates on a copy
    assert np.array_equal(tree.G[1], st.G)


def test_gaussian_kernel_examples():
    a = np.array([[0.0, 0.0], [1.0, 1.0]])
    K = gaussian_kernel(a, a, 1.0)
    assert K[0, 0] == 1.0
    assert K[0, 1] == pytest.approx(np.exp(-1.0))
    rng = rng0(5)
    A, B = rng.standard_normal((150, 4)), rng.standard_normal((120, 4))
    full = gaussian_kernel(A, B, 0.7, chunk=10**6)
    assert np.array_equal(gaussian_kernel(A, B, 0.7, chunk=17), full)
    assert sum(len(b) for _, b in gaussian_kernel_blocks(A, B, 0.7, 40)) == 150


def test_krr_examples():
    head = krr_fit(np.array([[1.0, 2.0]]), np.array([[3.0]]), 1.0, 0.5)
    assert head.dual[0, 0] == pytest.approx(3.0 / 1.5)
    rng = rng0(6)
    h, Y = rng.standard_normal((30, 3)), rng.standard_normal((30, 2))
    head = krr_fit(h, Y, 1.3, 0.1)
    K = gaussian_kernel(h, h, 1.3)
    assert np.allclose(head.dual, np.linalg.inv(K + 0.1 * np.eye(30)) @ Y, atol=1e-10)
    q = rng.standard_normal((80, 3))
    assert np.allclose(krr_predict(head, q, chunk=7), gaussian_kernel(q, h, 1.3) @ head.dual, atol=1e-12)
    far = krr_predict(head, np.full((1, 3), 1e6))
    assert np.abs(far).max() == 0.0


def test_krr_interpolation_limit():
    rng = rng0(7)
    h, Y = rng.standard_normal((25, 4)), rng.standard_normal((25, 2))
    lp = 1e-8
    head = krr_fit(h, Y, 1.0, lp)
    K = gaussian_kernel(h, h, 1.0)
    assert np.abs(K @ head.dual - Y).max() <= 10 * lp * np.abs(head.dual).max()
    assert np.allclose(krr_predict(head, h[:3]), Y[:3], atol=1e-6)


def test_rff_approximation_and_determinism():
    rng = rng0(8)
    x, y = rng.standard_normal((100, 5)) * 0.5, rng.standard_normal((100, 5)) * 0.5
    sigma = 1.5
    zx = rff_map(x, 4096, sigma, seed=3)
    zy = rff_map(y, 4096, sigma, seed=3)
    approx = (zx * zy).sum(1)
    exact = np.exp(-((x - y) ** 2).sum(1) / (2 * sigma ** 2))
    assert np.abs(approx - exact).mean() <= 0.05
    assert np.allclose((zx * zx).sum(1), 1.0, atol=1e-12)
    assert np.array_equal(rff_map(x, 64, sigma, 3), rff_map(x, 64, sigma, 3))


def test_column_whiten():
    rng = rng0(9)
    M = rng.standard_normal((40, 3)) * 3 + 1
    M[:, 1] = 2.0
    out = column_whiten(M, np.arange(40))
    assert not out[:, 1].any()
    assert np.allclose(out[:, [0, 2]].mean(0), 0, atol=1e-10)
    assert np.allclose(out[:, [0, 2]].std(0), 1, atol=1e-10)
    # shifted test population: train-only statistics leave it offset, all-row ones do not
    M2 = np.vstack([rng.standard_normal((50, 2)), rng.standard_normal((50, 2)) + 4.0])
    tr = np.arange(50)
    assert column_whiten(M2, tr)[50:].mean() > 2.0
    assert abs(column_whiten(M2, np.arange(100)).mean()) < 1e-10


def test_median_distance_positive():
    assert median_pairwise_distance(np.zeros((5, 2))) == 1.0
    assert median_pairwise_distance(np.array([[0.0], [3.0]])) == 3.0


def test_deterministic_reruns():
    rng = rng0(10)
    H, Y = rng.standard_normal((300, 8)), rng.standard_normal((300, 3))
    tr = rng.random(300) < 0.5
    a = GramTree.build(H, Y, tr, 16).stats(1.0)
    b = GramTree.build(H, Y, tr, 16).stats(1.0)
    assert np.array_equal(solve_stats(a), solve_stats(b))
    ka, kb = krr_fit(H[:50], Y[:50], 1.0, 0.1), krr_fit(H[:50], Y[:50], 1.0, 0.1)
    assert np.array_equal(ka.dual, kb.dual)
