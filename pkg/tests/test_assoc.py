import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmwtrack.assoc import (
    H_POS,
    AssocConfig,
    distance_2d,
    distance_3d,
    gate_2d,
    gate_3d,
    gate_threshold,
    init_messages,
    radial_row,
    spa_iterate,
)
from mmwtrack.detector import Measurement


def make_meas(z, R=None, v_r=0.0, var_v=0.01, theta=0.0):
    R = np.eye(2) * 0.04 if R is None else R
    z = np.asarray(z, dtype=float)
    return Measurement(z=z, R=R, v_r=v_r, var_v=var_v, theta=theta, r=float(np.hypot(*z)))


PRED = (np.array([1.0, 0.5, 10.0, -1.0]), np.diag([0.05, 0.2, 0.05, 0.2]))


def enumerate_marginals(beta0, xi0):
    """Exact association marginals by summing over every one-to-one assignment."""
    K, H = beta0.shape[0], xi0.shape[0]
    beta = np.zeros((K, H + 1))
    xi = np.zeros((H, K + 1))
    options = [[0] + [h + 1 for h in range(H) if beta0[k, h + 1] > 0] for k in range(K)]
    for a in itertools.product(*options):
        used = [h for h in a if h > 0]
        if len(used) != len(set(used)):
            continue
        w = np.prod([beta0[k, a[k]] for k in range(K)])
        owner = {h - 1: k for k, h in enumerate(a) if h > 0}
        for h in range(H):
            w *= xi0[h, owner[h] + 1] if h in owner else xi0[h, 0]
        for k in range(K):
            beta[k, a[k]] += w
        for h in range(H):
            xi[h, owner[h] + 1 if h in owner else 0] += w
    z = beta[0].sum() if K else xi[0].sum()
    return beta / z, xi / z


def random_instance(rng, K, H, density=0.7):
    gates = rng.random((K, H)) < density
    beta0 = np.zeros((K, H + 1))
    beta0[:, 0] = rng.uniform(0.05, 0.5, K)
    beta0[:, 1:] = np.where(gates, rng.uniform(0.01, 3.0, (K, H)), 0.0)
    xi0 = np.zeros((H, K + 1))
    xi0[:, 0] = rng.uniform(0.05, 2.0, H)
    xi0[:, 1:] = gates.T.astype(float)
    return beta0, xi0, gates


def is_forest(gates):
    """A bipartite gate graph is cycle-free iff edges = nodes - components."""
    K, H = gates.shape
    parent = list(range(K + H))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for k, h in zip(*np.nonzero(gates)):
        a, b = find(k), find(K + h)
        if a == b:
            return False
        parent[a] = b
    return True


# ---------------------------------------------------------------- gates


def test_gate_thresholds():
    assert gate_threshold(0.95, 2) == pytest.approx(5.9915, abs=1e-4)
    assert gate_threshold(0.95, 3) == pytest.approx(7.8147, abs=1e-4)


def test_gate_2d_accepts_prediction():
    m = make_meas(H_POS @ PRED[0])
    assert distance_2d(m, PRED) == pytest.approx(0.0, abs=1e-15)
    assert gate_2d(m, PRED, 0.95)


def test_gate_2d_monte_carlo_fraction():
    rng = np.random.default_rng(0)
    R = np.array([[0.04, 0.01], [0.01, 0.09]])
    S = H_POS @ PRED[1] @ H_POS.T + R
    L = np.linalg.cholesky(S)
    n = 4000
    inside = sum(
        gate_2d(make_meas(H_POS @ PRED[0] + L @ rng.standard_normal(2), R), PRED, 0.95)
        for _ in range(n)
    )
    assert abs(inside / n - 0.95) <= 0.03


def test_gate_3d_accepts_prediction():
    th = math.atan2(PRED[0][0], PRED[0][2])
    v = radial_row(th) @ PRED[0]
    m = make_meas(H_POS @ PRED[0], v_r=v, theta=th)
    assert gate_3d(m, PRED, th, 0.95)


def test_gate_3d_rejects_velocity_mismatch():
    th = math.atan2(PRED[0][0], PRED[0][2])
    v = radial_row(th) @ PRED[0]
    m = make_meas(H_POS @ PRED[0] + 0.1, v_r=v + 5.0, theta=th)
    assert gate_2d(m, PRED, 0.95)
    assert not gate_3d(m, PRED, th, 0.95)


def test_singular_innovation_raises():
    pred = (np.zeros(4), np.zeros((4, 4)))
    m = make_meas([0.0, 1.0], R=np.zeros((2, 2)))
    with pytest.raises(ValueError):
        gate_2d(m, pred, 0.95)
    with pytest.raises(ValueError):
        gate_3d(make_meas([0.0, 1.0], R=np.zeros((2, 2)), var_v=0.0), pred, 0.0, 0.95)


@settings(max_examples=100, deadline=None)
@given(
    dx=st.floats(-2, 2), dy=st.floats(-2, 2), dv=st.floats(-3, 3),
    th=st.floats(-1.2, 1.2), pg=st.floats(0.5, 0.999), shrink=st.floats(0.01, 0.99),
)
def test_gate_monotonicity(dx, dy, dv, th, pg, shrink):
    z = H_POS @ PRED[0] + np.array([dx, dy])
    m = make_meas(z, v_r=radial_row(th) @ PRED[0] + dv)
    if gate_3d(m, PRED, th, 0.95):
        assert distance_2d(m, PRED) <= gate_threshold(0.95, 3)
    small = pg * shrink
    assert not gate_2d(m, PRED, small) or gate_2d(m, PRED, pg)
    assert not gate_3d(m, PRED, th, small) or gate_3d(m, PRED, th, pg)
    assert distance_3d(m, PRED, th) >= distance_2d(m, PRED) - 1e-9


# ---------------------------------------------------------------- messages


def test_init_without_measurements():
    cfg = AssocConfig(gate_mode="2d")
    beta0, xi0, gates = init_messages([PRED, PRED], [], cfg)
    np.testing.assert_allclose(beta0, [[0.1], [0.1]], rtol=1e-12)
    assert xi0.shape == (0, 3) and gates.shape == (2, 0)


def test_init_peak_likelihood():
    cfg = AssocConfig(gate_mode="2d", p_d=0.9)
    R = np.array([[0.04, 0.0], [0.0, 0.02]])
    m = make_meas(H_POS @ PRED[0], R)
    beta0, xi0, _ = init_messages([PRED], [m], cfg)
    S = H_POS @ PRED[1] @ H_POS.T + R
    assert beta0[0, 1] == pytest.approx(0.9 / (2 * math.pi * math.sqrt(np.linalg.det(S))), rel=1e-12)
    assert beta0[0, 0] == pytest.approx(0.1)
    assert xi0[0, 1] == 1.0 and xi0[0, 0] == pytest.approx(cfg.mu_c * cfg.f_c)


def test_init_outside_gate_is_zero():
    cfg = AssocConfig(gate_mode="2d")
    m = make_meas(H_POS @ PRED[0] + 20.0)
    beta0, xi0, gates = init_messages([PRED], [m], cfg)
    assert not gates[0, 0] and beta0[0, 1] == 0.0 and xi0[0, 1] == 0.0


def test_init_3d_needs_azimuth():
    with pytest.raises(ValueError):
        init_messages([PRED], [make_meas([1.0, 10.0])], AssocConfig(gate_mode="3d"))


# ---------------------------------------------------------------- SPA


def test_single_pair_closed_form():
    p_d, f, clutter = 0.9, 1.7, 4 / 3600
    beta0 = np.array([[1 - p_d, p_d * f]])
    xi0 = np.array([[clutter, 1.0]])
    res = spa_iterate(beta0, xi0, 10)
    expected = p_d * f / (p_d * f + (1 - p_d) * clutter)
    assert res.beta[0, 1] == pytest.approx(expected, abs=1e-12)


def test_empty_sides():
    res = spa_iterate(np.full((2, 1), 0.1), np.zeros((0, 3)), 10)
    np.testing.assert_array_equal(res.beta, np.ones((2, 1)))
    res = spa_iterate(np.zeros((0, 3)), np.full((2, 1), 0.5), 10)
    np.testing.assert_array_equal(res.xi, np.ones((2, 1)))


def test_missed_detection_mass_required():
    with pytest.raises(ValueError):
        spa_iterate(np.array([[0.0, 1.0]]), np.array([[0.1, 1.0]]), 10)


def test_clutter_mass_required():
    # without a clutter hypothesis the lone pairing message divides by zero
    with pytest.raises(ValueError):
        spa_iterate(np.array([[0.1, 1.0]]), np.array([[0.0, 1.0]]), 10)


def test_two_by_two_tree_exact():
    rng = np.random.default_rng(1)
    for _ in range(20):
        beta0, xi0, _ = random_instance(rng, 2, 2, density=1.0)
        # drop one edge: the 2x2 graph becomes a path, where BP is exact
        beta0[1, 2] = 0.0
        xi0[1, 2] = 0.0
        res = spa_iterate(beta0, xi0, 10)
        eb, ex = enumerate_marginals(beta0, xi0)
        np.testing.assert_allclose(res.beta, eb, atol=1e-6)
        np.testing.assert_allclose(res.xi, ex, atol=1e-6)


def generic_bp(beta0, xi0, n_iter):
    """Textbook BP over the full (a_k, b_h) factor graph with pairwise
    consistency factors; an independent route to the same messages.
    Starts from measurement messages that rule out every pairing, which is
    the all-zero v that makes the first track message beta0[k, h] / beta0[k, 0]."""
    K, H = beta0.shape[0], xi0.shape[0]
    psi = {}
    for k in range(K):
        for h in range(H):
            a = np.arange(H + 1)[:, None] == h + 1
            b = np.arange(K + 1)[None, :] == k + 1
            psi[k, h] = (a == b).astype(float)
    to_a = {e: (np.arange(H + 1) != e[1] + 1).astype(float) for e in psi}

    def track_side(to_a):
        out = {}
        for k, h in psi:
            bel = beta0[k] * np.prod([to_a[k, j] for j in range(H) if j != h], axis=0)
            msg = psi[k, h].T @ bel
            out[k, h] = msg / msg.sum()
        return out

    def meas_side(to_b):
        out = {}
        for k, h in psi:
            bel = xi0[h] * np.prod([to_b[i, h] for i in range(K) if i != k], axis=0)
            msg = psi[k, h] @ bel
            out[k, h] = msg / msg.sum()
        return out

    to_b = track_side(to_a)
    for _ in range(n_iter):
        to_a = meas_side(to_b)
        to_b = track_side(to_a)
    beta = np.array([beta0[k] * np.prod([to_a[k, h] for h in range(H)], axis=0) for k in range(K)])
    return beta / beta.sum(axis=1, keepdims=True)


def test_matches_generic_belief_propagation():
    rng = np.random.default_rng(2)
    for K, H in [(2, 2), (2, 3), (3, 3), (3, 2)]:
        for _ in range(5):
            beta0, xi0, _ = random_instance(rng, K, H, density=1.0)
            for n in (1, 3, 10):
                np.testing.assert_allclose(
                    spa_iterate(beta0, xi0, n).beta, generic_bp(beta0, xi0, n), atol=1e-12
                )


def test_tree_problems_match_enumeration():
    rng = np.random.default_rng(3)
    checked = 0
    for K in range(1, 5):
        for H in range(1, 5):
            for _ in range(10):
                beta0, xi0, gates = random_instance(rng, K, H)
                if not is_forest(gates):
                    continue
                res = spa_iterate(beta0, xi0, 10)
                eb, ex = enumerate_marginals(beta0, xi0)
                np.testing.assert_allclose(res.beta, eb, atol=1e-4)
                np.testing.assert_allclose(res.xi, ex, atol=1e-4)
                checked += 1
    assert checked > 50


def test_loopy_problems_close_to_enumeration():
    # BP on a graph with cycles is approximate and errs most on ambiguous
    # permutations; the typical case is asserted tight, the worst case loose
    rng = np.random.default_rng(4)
    errs = []
    for K in range(2, 4):
        for H in range(2, 4):
            for _ in range(50):
                beta0, xi0, _ = random_instance(rng, K, H, density=1.0)
                res = spa_iterate(beta0, xi0, 10)
                eb, _ = enumerate_marginals(beta0, xi0)
                errs.append(np.max(np.abs(res.beta - eb)))
    errs = np.array(errs)
    assert np.median(errs) < 0.05
    assert errs.max() < 0.5


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 4), st.integers(0, 4), st.integers(0, 2**31 - 1))
def test_rows_normalized(K, H, seed):
    beta0, xi0, _ = random_instance(np.random.default_rng(seed), K, H)
    res = spa_iterate(beta0, xi0, 10)
    np.testing.assert_allclose(res.beta.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(res.xi.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(res.beta[:, 1:][beta0[:, 1:] == 0] == 0)


def test_row_scaling_invariance():
    rng = np.random.default_rng(6)
    beta0, xi0, _ = random_instance(rng, 3, 3, density=1.0)
    scaled = beta0.copy()
    scaled[1] *= 37.0
    a = spa_iterate(beta0, xi0, 10)
    b = spa_iterate(scaled, xi0, 10)
    np.testing.assert_allclose(a.beta, b.beta, atol=1e-12)


def test_early_exit():
    rng = np.random.default_rng(5)
    beta0, xi0, _ = random_instance(rng, 2, 3, density=1.0)
    res = spa_iterate(beta0, xi0, 200, tol=1e-8)
    assert res.iterations < 200
    full = spa_iterate(beta0, xi0, 200)
    np.testing.assert_allclose(res.beta, full.beta, atol=1e-6)


@pytest.mark.parametrize(
    "kw",
    [dict(p_d=1.0), dict(p_g=0.0), dict(n_iter=0), dict(gate_mode="4d"), dict(mu_c=0.0), dict(f_c=0.0)],
)
def test_config_validation(kw):
    with pytest.raises(ValueError):
        AssocConfig(**kw)
