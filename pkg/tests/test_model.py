import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ampse import model
from ampse.model import (EmpiricalDistribution, InvalidDimension, InvalidPrior, NoiseSpec, Prior,
                         SensingMatrix, build_instance, make_rng, random_instance,
                         sample_sensing_matrix, sample_signal, sample_symmetric_matrix)


def test_scalar_matrix_has_unit_variance_entry():
    A = sample_sensing_matrix(1, 1, seed=3)
    assert A.entries.shape == (1, 1)
    draws = np.array([sample_sensing_matrix(1, 1, seed=s).entries[0, 0] for s in range(4000)])
    assert abs(draws.var() - 1.0) < 0.1


def test_matrix_column_norms():
    A = sample_sensing_matrix(500, 1000, seed=0).entries
    col = (A**2).sum(axis=0).mean()
    assert 0.95 <= col <= 1.05


def test_matrix_entry_statistics():
    n, N = 400, 500
    A = sample_sensing_matrix(n, N, seed=11).entries
    assert abs(A.mean()) < 4 / np.sqrt(n * N / n)
    assert abs(A.var() * n - 1) < 0.05
    assert A.flags.c_contiguous and not A.flags.writeable


def test_matrix_reproducible():
    a = sample_sensing_matrix(30, 40, seed=5, replicate=2).entries
    b = sample_sensing_matrix(30, 40, seed=5, replicate=2).entries
    c = sample_sensing_matrix(30, 40, seed=5, replicate=3).entries
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


@pytest.mark.parametrize("n,N", [(0, 5), (5, 0), (-1, 2)])
def test_zero_dimension_rejected(n, N):
    with pytest.raises(InvalidDimension):
        sample_sensing_matrix(n, N, seed=0)


def test_streams_keyed_by_purpose():
    a = make_rng(1, 0, model.MATRIX).standard_normal(5)
    b = make_rng(1, 0, model.SIGNAL).standard_normal(5)
    assert not np.array_equal(a, b)


def test_point_mass_signal_is_zero():
    x = sample_signal(Prior.discrete([(0.0, 1.0)]), 100, seed=0)
    assert np.all(x == 0)


def test_antipodal_signal():
    x = sample_signal(Prior.antipodal(), 10**5, seed=1)
    assert abs(x.mean()) <= 0.02
    assert np.mean(x**2) == 1.0


def test_three_point_sparsity():
    N = 10**5
    x = sample_signal(Prior.three_point(0.1), N, seed=2)
    frac = np.mean(x != 0)
    assert abs(frac - 0.1) <= 3 * np.sqrt(0.1 * 0.9 / N)


@pytest.mark.parametrize("prior", [Prior.three_point(0.2, 2.0, k=3), Prior.gaussian(2.0, k=3),
                                   Prior.antipodal(k=3)])
def test_empirical_moments_converge(prior):
    N = 10**5
    x = sample_signal(prior, N, seed=4)
    emp = EmpiricalDistribution(x, k=prior.k)
    for p in range(1, 2 * prior.k - 1):
        se = np.std(np.abs(x) ** p) / np.sqrt(N)
        assert abs(emp.moment(p) - prior.moment(p)) <= 5 * se + 1e-15


def test_prior_probabilities_validated():
    with pytest.raises(InvalidPrior):
        Prior.discrete([(0.0, 0.5), (1.0, 0.4)])
    with pytest.raises(InvalidPrior):
        Prior.discrete([(0.0, 1.1), (1.0, -0.1)])


def test_three_point_atoms():
    p = Prior.three_point(0.1)
    assert sorted(p.atoms) == [(-1.0, 0.05), (0.0, 0.9), (1.0, 0.05)]
    assert p.second_moment == pytest.approx(0.1, abs=1e-15)


def test_empirical_moment_definition():
    v = np.array([1.0, -2.0, 3.0])
    emp = EmpiricalDistribution(v, k=3)
    assert emp.moment(2) == pytest.approx(14 / 3)
    assert set(emp.moments) == {1, 2, 3, 4}


def test_zero_signal_zero_noise():
    A = sample_sensing_matrix(10, 20, seed=0)
    inst = build_instance(A, np.zeros(20), NoiseSpec.gaussian(0.0), seed=0)
    assert np.all(inst.y == 0)


def test_noiseless_observation():
    A = sample_sensing_matrix(10, 20, seed=0)
    x0 = sample_signal(Prior.three_point(0.3), 20, seed=0)
    inst = build_instance(A, x0, NoiseSpec.gaussian(0.0), seed=0)
    assert np.array_equal(inst.y, A.entries @ x0)


def test_scalar_model():
    A = SensingMatrix(np.array([[2.0]]))
    inst = build_instance(A, [3.0], NoiseSpec.gaussian(1.0), seed=0, w=[0.5])
    assert inst.y[0] == 2.0 * 3.0 + 0.5
    assert inst.delta == 1.0


def test_dimension_mismatch():
    A = sample_sensing_matrix(3, 4, seed=0)
    with pytest.raises(InvalidDimension):
        build_instance(A, np.zeros(3), NoiseSpec.gaussian(0.1), seed=0)
    with pytest.raises(InvalidDimension):
        build_instance(A, np.zeros(4), NoiseSpec.gaussian(0.1), seed=0, w=np.zeros(4))


@settings(max_examples=25, deadline=None)
@given(n=st.integers(1, 40), N=st.integers(1, 40), seed=st.integers(0, 2**32),
       sigma2=st.floats(0, 4))
def test_observation_model_exact(n, N, seed, sigma2):
    inst = random_instance(n, N, Prior.three_point(0.2), NoiseSpec.gaussian(sigma2), seed)
    Ax = inst.A.entries @ inst.x0
    assert np.array_equal(inst.y, Ax + inst.w)
    scale = np.abs(Ax) + np.abs(inst.w) + 1.0
    assert np.all(np.abs(inst.y - Ax - inst.w) <= 4 * np.finfo(float).eps * scale)
    assert inst.delta == n / N


def test_symmetric_matrix_exactly_symmetric():
    N = 300
    G = sample_symmetric_matrix(N, seed=1)
    assert np.max(np.abs(G - G.T)) == 0
    off = G[np.triu_indices(N, 1)]
    # off-diagonal entries are N(0, 1/N); 5 sd of the variance estimate
    assert abs(off.var() * N - 1.0) < 5 * np.sqrt(2 / off.size)


def test_discrete_noise():
    noise = NoiseSpec("discrete", atoms=((-1.0, 0.5), (1.0, 0.5)))
    assert noise.sigma2 == 1.0
    w = noise.sample(100, make_rng(0))
    assert set(np.unique(w)) <= {-1.0, 1.0}
