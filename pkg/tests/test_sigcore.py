import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import toeplitz_dense
from ssanc.errors import InsufficientDataError, NotPositiveDefiniteError
from ssanc.sigcore import (
    Component,
    Covariance,
    Fir,
    MultichannelSignal,
    OperatorKind,
    Signal,
    build_constraint_operator,
    build_secondary_operator,
    estimate_covariance,
    fir_convolve,
    lambda_max,
    selection_vector,
    solve_spd,
)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


# -- containers ------------------------------------------------------------
def test_signal_rejects_bad_rate_and_nonfinite():
    with pytest.raises(ValueError):
        Signal([1.0, 2.0], 0)
    with pytest.raises(ValueError):
        Signal([1.0, np.nan], 8000)
    s = Signal([1.0, 2.0], 8000)
    with pytest.raises(ValueError):
        s.samples[0] = 3.0
    assert s.energy == 5.0


def test_multichannel_from_signals_checks_lengths():
    a = Signal(np.ones(4), 8000)
    b = Signal(np.zeros(4), 8000)
    m = MultichannelSignal.from_signals([a, b], Component.SPEECH)
    assert m.n_channels == 2 and m.n_samples == 4
    assert m.component is Component.SPEECH
    with pytest.raises(ValueError):
        MultichannelSignal.from_signals([a, Signal(np.zeros(3), 8000)])
    with pytest.raises(ValueError):
        MultichannelSignal.from_signals([a, Signal(np.zeros(4), 16000)])


def test_fir_lags_and_taps():
    f = Fir([1.0, 2.0, 3.0, 4.0], anticausal_len=1)
    assert f.causal_len == 3 and not f.is_causal
    assert list(f.lags) == [-1, 0, 1, 2]
    assert f.tap(-1) == 1.0 and f.tap(2) == 4.0 and f.tap(5) == 0.0
    with pytest.raises(ValueError):
        Fir([1.0], anticausal_len=1)


# -- fir_convolve ----------------------------------------------------------
def _double_sum(x, h):
    out = np.zeros(len(x) + len(h) - 1)
    for n in range(len(out)):
        for k in range(len(h)):
            if 0 <= n - k < len(x):
                out[n] += h[k] * x[n - k]
    return out


def test_fir_convolve_examples():
    assert np.array_equal(fir_convolve(Signal([1, 0, 0], 8000), Fir([1.0])).samples, [1, 0, 0])
    assert np.array_equal(fir_convolve(Signal(np.zeros(4), 8000), Fir([0.3, -2.0])).samples, np.zeros(5))
    y = fir_convolve(Signal([1, 2], 8000), Fir([3.0, 4.0])).samples
    assert np.array_equal(y, [3, 10, 8])
    assert np.array_equal(y, _double_sum([1, 2], [3, 4]))


def test_fir_convolve_empty_signal():
    with pytest.raises(ValueError, match="empty signal"):
        fir_convolve(Signal([], 8000), Fir([1.0]))


def test_fir_convolve_anticausal_alignment():
    # lag -2 tap: y(n) = x(n + 2); output index m is time m - L_a
    f = Fir([1.0, 0.0, 0.0], anticausal_len=2)
    x = np.arange(1.0, 6.0)
    y = fir_convolve(Signal(x, 8000), f).samples
    times = np.arange(len(y)) - f.anticausal_len
    assert np.array_equal(y[times >= 0][:3], x[2:])


@given(
    arrays(float, st.integers(1, 30), elements=finite),
    arrays(float, st.integers(1, 6), elements=finite),
    finite,
    finite,
)
def test_fir_convolve_linearity(x, taps, a, b):
    y = np.cos(np.arange(len(x)))
    f = Fir(taps)
    lhs = fir_convolve(Signal(a * x + b * y, 8000), f).samples
    rhs = a * fir_convolve(Signal(x, 8000), f).samples + b * fir_convolve(Signal(y, 8000), f).samples
    assert np.allclose(lhs, rhs, rtol=0, atol=1e-12 * max(1.0, np.abs(rhs).max()))


@given(arrays(float, st.integers(1, 20), elements=finite), arrays(float, st.integers(1, 5), elements=finite))
def test_fir_convolve_matches_double_sum(x, taps):
    y = fir_convolve(Signal(x, 8000), Fir(taps)).samples
    assert np.allclose(y, _double_sum(x, taps), atol=1e-9)


# -- operators ---------------------------------------------------------------
def test_secondary_operator_unit_path():
    op = build_secondary_operator(Fir([1.0]), 3, 1)
    assert op.kind is OperatorKind.SECONDARY_PATH
    assert np.array_equal(op.densify(), np.eye(6))


def test_secondary_operator_two_taps():
    op = build_secondary_operator(Fir([1.0, 1.0]), 2, 1)
    assert op.shape == (6, 4)
    assert np.array_equal(op.block_dense(0), [[1, 0], [1, 1], [0, 1]])
    dense = op.densify()
    assert np.array_equal(dense[3:, 2:], [[1, 0], [1, 1], [0, 1]])
    assert np.array_equal(dense[:3, 2:], np.zeros((3, 2)))


def test_secondary_operator_full_scale_sizes():
    op = build_secondary_operator(Fir(np.r_[1.0, np.zeros(279)]), 600, 4)
    assert op.conv_len == 879
    assert op.shape == (5 * 879, 5 * 600)


def test_secondary_operator_rejects_anticausal():
    with pytest.raises(ValueError, match="secondary path must be causal"):
        build_secondary_operator(Fir([0.5, 1.0], anticausal_len=1), 4, 1)


def test_constraint_operator_reference_pulse():
    L_a, L_h, L = 2, 3, 4
    pulse = Fir(np.eye(L_a + L_h)[L_a], anticausal_len=L_a)
    op = build_constraint_operator([pulse], L)
    block = op.densify()
    assert block.shape == (L_a + L_h + L - 1, L)
    assert np.array_equal(block[L_a : L_a + L], np.eye(L))
    assert not block[:L_a].any() and not block[L_a + L :].any()


def test_constraint_operator_full_scale_rows():
    reirs = [Fir(np.zeros(284), anticausal_len=22) for _ in range(5)]
    op = build_constraint_operator(reirs, 879)
    assert op.shape == (1162, 5 * 879)


def test_constraint_operator_two_tap_by_hand():
    a, b = 0.7, -1.3
    op = build_constraint_operator([Fir([a, b], anticausal_len=1)], 3)
    expected = np.array([[a, 0, 0], [b, a, 0], [0, b, a], [0, 0, b]])
    assert np.array_equal(op.densify(), expected)


def test_constraint_operator_rejects_mixed_supports():
    with pytest.raises(ValueError):
        build_constraint_operator([Fir([1.0, 0.0], anticausal_len=1), Fir([1.0, 0.0])], 3)


@given(
    K=st.integers(0, 2),
    L_w=st.integers(1, 8),
    L_g=st.integers(1, 4),
    L_a=st.integers(0, 3),
    L_h=st.integers(1, 4),
    seed=st.integers(0, 2**31 - 1),
)
def test_operators_match_dense(K, L_w, L_g, L_a, L_h, seed):
    rng = np.random.default_rng(seed)
    g = rng.standard_normal(L_g)
    g_op = build_secondary_operator(Fir(g), L_w, K)
    L = g_op.conv_len
    assert L == L_g + L_w - 1
    G = np.zeros(((K + 1) * L, (K + 1) * L_w))
    for k in range(K + 1):
        G[k * L : (k + 1) * L, k * L_w : (k + 1) * L_w] = toeplitz_dense(g, L_w)
    reirs = [Fir(rng.standard_normal(L_a + L_h), anticausal_len=L_a) for _ in range(K + 1)]
    h_op = build_constraint_operator(reirs, L)
    H = np.hstack([toeplitz_dense(h.taps, L) for h in reirs])
    assert np.allclose(g_op.densify(), G, atol=0) and np.allclose(h_op.densify(), H, atol=0)
    v = rng.standard_normal((K + 1) * L_w)
    z = rng.standard_normal((K + 1) * L)
    r = rng.standard_normal(H.shape[0])
    assert np.allclose(g_op.matvec(v), G @ v, rtol=0, atol=1e-12 * max(1, np.abs(G @ v).max()))
    assert np.allclose(g_op.rmatvec(z), G.T @ z, rtol=0, atol=1e-12 * max(1, np.abs(G.T @ z).max()))
    assert np.allclose(h_op.matvec(z), H @ z, rtol=0, atol=1e-12 * max(1, np.abs(H @ z).max()))
    assert np.allclose(h_op.rmatvec(r), H.T @ r, rtol=0, atol=1e-12 * max(1, np.abs(H.T @ r).max()))


@given(K=st.integers(0, 4), L=st.integers(1, 10), L_a=st.integers(0, 5), L_h=st.integers(1, 5), data=st.data())
def test_selection_vector_structure(K, L, L_a, L_h, data):
    delta = data.draw(st.integers(0, L_h + L - 2))
    sel = selection_vector(K, L, L_a, L_h, delta)
    assert sel.q.shape == ((K + 1) * L,) and sel.q.sum() == 1.0 and sel.q[K * L] == 1.0
    assert sel.target.shape == (L_a + L_h + L - 1,)
    assert np.count_nonzero(sel.target) == 1 and sel.target[L_a + delta] == 1.0
    assert sel.delay_index == L_a + delta


# -- covariance ----------------------------------------------------------------
def _naive_cov(x, L):
    C, N = x.shape
    T = N - L + 1
    acc = np.zeros((C * L, C * L))
    for n in range(L - 1, N):
        v = np.concatenate([x[k, n - L + 1 : n + 1][::-1] for k in range(C)])
        acc += np.outer(v, v)
    return acc / T


def test_covariance_matches_frame_loop(rng):
    x = rng.standard_normal((3, 60))
    est = estimate_covariance(x, 5)
    assert est.frame_count == 56 and est.n_channels == 3 and est.L == 5
    assert np.allclose(est.matrix, _naive_cov(x, 5), atol=1e-13)


def test_covariance_white_is_identity(rng):
    est = estimate_covariance(rng.standard_normal((1, 100_000)), 2)
    assert np.allclose(est.matrix, np.eye(2), atol=0.05)


def test_covariance_zero_and_sinusoid():
    assert not estimate_covariance(np.zeros((2, 40)), 3).matrix.any()
    w = 0.3
    x = np.sin(w * np.arange(20000))[None]
    # analytic: 1/2 [[1, cos w], [cos w, 1]], eigenvalues (1 -+ cos w) / 2
    est2 = estimate_covariance(x, 2)
    assert np.allclose(est2.matrix, 0.5 * np.array([[1, np.cos(w)], [np.cos(w), 1]]), atol=1e-3)
    assert np.allclose(np.linalg.eigvalsh(est2.matrix), [(1 - np.cos(w)) / 2, (1 + np.cos(w)) / 2], atol=1e-3)
    # a real sinusoid spans two dimensions, so a longer delay line is rank deficient
    ev = np.linalg.eigvalsh(estimate_covariance(x, 3).matrix)
    assert ev[0] <= 1e-10 * ev[-1]


def test_covariance_insufficient_data():
    with pytest.raises(InsufficientDataError, match="insufficient data"):
        estimate_covariance(np.ones((1, 5)), 3)


@given(C=st.integers(1, 3), L=st.integers(1, 6), seed=st.integers(0, 2**31 - 1), scale=st.floats(1e-3, 1e3))
def test_covariance_symmetric_psd(C, L, seed, scale):
    x = scale * np.random.default_rng(seed).standard_normal((C, 4 * L + 7))
    m = estimate_covariance(x, L).matrix
    assert np.array_equal(m, m.T)
    ev = np.linalg.eigvalsh(m)
    assert ev[0] >= -1e-9 * ev[-1]


def test_covariance_type_rejects_asymmetric():
    with pytest.raises(ValueError):
        Covariance(np.array([[1.0, 0.5], [0.0, 1.0]]), n_channels=1)


# -- lambda_max / solve_spd -----------------------------------------------------
def test_lambda_max_examples(rng):
    assert lambda_max(np.diag([1.0, 2.0, 3.0])) == pytest.approx(3.0, rel=1e-6)
    for n in (1, 4, 17):
        assert lambda_max(np.eye(n)) == pytest.approx(1.0, rel=1e-12)
    a = rng.standard_normal((10, 10))
    m = a.T @ a
    assert lambda_max(m) == pytest.approx(np.linalg.eigvalsh(m)[-1], rel=1e-6)


def test_lambda_max_rejects_asymmetric():
    with pytest.raises(ValueError):
        lambda_max(np.array([[1.0, 1.0], [0.0, 1.0]]))


@given(seed=st.integers(0, 2**31 - 1))
def test_lambda_max_of_gtphig_nonnegative(seed):
    rng = np.random.default_rng(seed)
    g_op = build_secondary_operator(Fir(rng.standard_normal(3)), 4, 1)
    phi = estimate_covariance(rng.standard_normal((2, 40)), g_op.conv_len).matrix
    G = g_op.densify()
    m = G.T @ phi @ G
    assert lambda_max(0.5 * (m + m.T)) >= 0.0


def test_solve_spd_examples(rng):
    b = rng.standard_normal(5)
    assert np.allclose(solve_spd(np.eye(5), b), b)
    assert np.allclose(solve_spd(np.diag([2.0, 4.0]), np.array([2.0, 4.0])), [1.0, 1.0])
    a = rng.standard_normal((20, 20))
    a = a @ a.T + 20 * np.eye(20)
    b = rng.standard_normal(20)
    x = solve_spd(a, b)
    assert np.linalg.norm(a @ x - b) <= 1e-8 * np.linalg.norm(b)


def test_solve_spd_not_pd():
    with pytest.raises(NotPositiveDefiniteError, match="increase regularization"):
        solve_spd(np.diag([1.0, -1.0]), np.ones(2))
