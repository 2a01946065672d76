import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dcmsim.errors import IndefiniteCovarianceError, ValidationError
from dcmsim.noise import (
    RngStream,
    build_noise_model,
    empirical_cross_variation,
    sample_increment_block,
    sample_increments,
    zero_noise,
)

from conftest import rand_c


def test_uncorrelated_factor():
    g = 0.7
    m = build_noise_model([[g]], [[g]], [[0]])
    np.testing.assert_allclose(m.jointFactor, np.diag([np.sqrt(g)] * 2), atol=1e-15)


def test_perfect_correlation_rank_one():
    m = build_noise_model([[1]], [[1]], [[1]])
    f = m.jointFactor
    assert np.linalg.matrix_rank(f, tol=1e-8) == 1
    assert np.linalg.norm(f @ f.conj().T - m.joint) < 1e-10


def test_indefinite_names_block():
    with pytest.raises(IndefiniteCovarianceError, match="sigmaAB"):
        build_noise_model([[1]], [[1]], [[2]])
    with pytest.raises(IndefiniteCovarianceError, match="sigmaAA"):
        build_noise_model([[-1]], [[1]], [[0]])


def test_shape_and_kind_errors():
    with pytest.raises(ValidationError):
        build_noise_model([[1]], [[1]], [[0, 0]])
    with pytest.raises(ValidationError):
        build_noise_model([[1]], [[1]], [[0.1j]], kind="real")
    with pytest.raises(ValidationError):
        build_noise_model([[1]], [[1]], [[0]], kind="pink")
    m = build_noise_model([[1]], [[1]], [[0.3j]], kind="circular")
    assert np.linalg.norm(m.jointFactor @ m.jointFactor.conj().T - m.joint) < 1e-12


def test_zero_noise_increments():
    m = zero_noise(2, 1)
    assert m.is_zero
    dwa, dwb = sample_increments(m, 0.01, RngStream(3))
    assert not np.any(dwa) and not np.any(dwb)
    assert dwa.shape == (2,) and dwb.shape == (1,)


def test_sample_variance_oracle():
    m = build_noise_model([[1.0]], [[0.0]], [[0.0]])
    dt, n = 0.01, 100_000
    dw = sample_increment_block(m, dt, RngStream(5), n)[:, 0]
    sq = np.abs(dw) ** 2
    assert abs(sq.mean() - dt) < 5 * sq.std(ddof=1) / np.sqrt(n)


def test_reproducible_and_block_equals_sequential():
    m = build_noise_model([[0.5, 0.1], [0.1, 0.4]], [[0.3]], [[0.2], [0.05]])
    a = sample_increment_block(m, 1e-3, RngStream(9, 4), 50)
    b = sample_increment_block(m, 1e-3, RngStream(9, 4), 50)
    np.testing.assert_array_equal(a, b)
    s = RngStream(9, 4)
    seq = np.array([np.concatenate(sample_increments(m, 1e-3, s)) for _ in range(50)])
    np.testing.assert_array_equal(a, seq)


def test_circular_moments():
    m = build_noise_model([[1.0]], [[1.0]], [[0.4 + 0.3j]], kind="circular")
    dw = sample_increment_block(m, 1.0, RngStream(2), 200_000)
    cov = dw.T @ dw.conj() / len(dw)
    pcov = dw.T @ dw / len(dw)
    assert np.abs(cov - m.joint).max() < 0.02
    assert np.abs(pcov).max() < 0.02
    np.testing.assert_array_equal(m.gamma, 0)


def test_real_gamma_is_sigma_ab():
    m = build_noise_model([[1.0]], [[1.0]], [[0.4]])
    np.testing.assert_allclose(m.gamma, [[0.4]], atol=1e-15)


def test_cross_variation_oracles():
    m = build_noise_model([[1.0]], [[1.0]], [[0.5]])
    est, se = empirical_cross_variation(m, 1e-3, 1_000_000, RngStream(11), return_se=True)
    assert abs(est[0, 0] - 0.5) <= 3 * se[0, 0]
    z = build_noise_model([[1.0]], [[1.0]], [[0.0]])
    est, se = empirical_cross_variation(z, 1e-3, 100_000, RngStream(12), return_se=True)
    assert abs(est[0, 0]) <= 3 * se[0, 0]
    one = empirical_cross_variation(m, 1e-3, 1, RngStream(13))
    dw = sample_increment_block(m, 1e-3, RngStream(13), 1)[0]
    np.testing.assert_allclose(one[0, 0], dw[0] * np.conj(dw[1]) / 1e-3)


def test_sqrt_dt_scaling():
    m = build_noise_model([[1.0]], [[0.0]], [[0.0]])
    n = 100_000
    v1 = np.abs(sample_increment_block(m, 1e-2, RngStream(1), n)[:, 0]) ** 2
    v2 = np.abs(sample_increment_block(m, 4e-2, RngStream(2), n)[:, 0]) ** 2
    ratio = v2.mean() / v1.mean()
    se = ratio * np.sqrt((v1.std() / v1.mean()) ** 2 + (v2.std() / v2.mean()) ** 2) / np.sqrt(n)
    assert abs(ratio - 4) <= 3 * se


def test_stream_independence():
    m = build_noise_model([[1.0]], [[0.0]], [[0.0]])
    n = 100_000
    a = sample_increment_block(m, 1.0, RngStream(1, 0), n)[:, 0]
    b = sample_increment_block(m, 1.0, RngStream(1, 1), n)[:, 0]
    prod = a * b.conj()
    assert abs(prod.mean()) <= 3 * prod.std() / np.sqrt(n)
    assert not np.array_equal(a, sample_increment_block(m, 1.0, RngStream(2, 0), n)[:, 0])


def test_purpose_streams_differ():
    a = RngStream(1, 0).standard_normal(4)
    b = RngStream(1, 0, RngStream.INITIAL).standard_normal(4)
    assert not np.array_equal(a, b)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 3), st.integers(0, 3), st.integers(1, 4), st.integers(0, 2**32 - 1), st.booleans())
def test_factor_reconstruction(nA, nB, rank, seed, circular):
    rng = np.random.default_rng(seed)
    n = nA + nB
    g = rand_c(rng, n, rank) if circular else rng.normal(size=(n, rank))
    joint = g @ g.conj().T
    m = build_noise_model(joint[:nA, :nA], joint[nA:, nA:], joint[:nA, nA:], "circular" if circular else "real")
    f = m.jointFactor
    assert np.linalg.norm(f @ f.conj().T - m.joint) <= 1e-10 * (1 + np.linalg.norm(m.joint))
