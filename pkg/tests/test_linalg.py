import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pointer_sim.errors import CapacityError, ValidationError
from pointer_sim.linalg import (
    DensityMatrix,
    Operator,
    StateVector,
    hermitian_propagator,
    inner_product,
    partial_trace,
    pure_density,
    tensor_product,
)

from conftest import random_hermitian, random_state


def index_sum_partial_trace(psi, n, d):
    """ρ_ij = Σ_k Ψ_ik Ψ*_jk with explicit loops."""
    rho = np.zeros((n, n), dtype=complex)
    for i in range(n):
        for j in range(n):
            for k in range(d):
                rho[i, j] += psi[i * d + k] * np.conj(psi[j * d + k])
    return rho


def test_kron_identity():
    out = tensor_product(Operator.identity(2), Operator.identity(2))
    assert np.array_equal(out.data, np.eye(4))
    assert out.dims == (2, 2)


def test_kron_diagonal():
    out = tensor_product(Operator(np.diag([1, -1])), Operator.identity(2))
    assert np.array_equal(out.data, np.diag([1, 1, -1, -1]))


def test_kron_action(rng):
    a = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    b = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    x, y = rng.normal(size=2) + 0j, rng.normal(size=3) + 0j
    xy = np.array([x[i] * y[k] for i in range(2) for k in range(3)])
    ax, by = a @ x, b @ y
    expected = np.array([ax[i] * by[k] for i in range(2) for k in range(3)])
    got = tensor_product(Operator(a), Operator(b)).data @ xy
    assert np.max(np.abs(got - expected)) <= 1e-12


def test_kron_associative(rng):
    ops = [Operator(rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))) for n in (2, 3, 2)]
    left = tensor_product(tensor_product(ops[0], ops[1]), ops[2])
    right = tensor_product(ops[0], tensor_product(ops[1], ops[2]))
    assert np.max(np.abs(left.data - right.data)) <= 1e-12
    assert left.dims == right.dims == (2, 3, 2)


def test_kron_capacity(monkeypatch):
    monkeypatch.setenv("POINTER_SIM_MAX_DIM", "8")
    tensor_product(Operator.identity(2), Operator.identity(4))
    with pytest.raises(CapacityError):
        tensor_product(Operator.identity(4), Operator.identity(4))


def test_propagator_zero():
    u = hermitian_propagator(Operator(np.zeros((3, 3))), 1.7)
    assert np.allclose(u.data, np.eye(3), atol=1e-15)


def test_propagator_diagonal():
    u = hermitian_propagator(Operator(np.diag([1.0, -1.0])), np.pi)
    assert np.max(np.abs(u.data + np.eye(2))) <= 1e-12


def test_propagator_unitary_and_inverse(rng):
    h = Operator(random_hermitian(rng, 4))
    u = hermitian_propagator(h, 0.83, hbar=0.7)
    back = hermitian_propagator(h, -0.83, hbar=0.7)
    assert np.max(np.abs(u.data.conj().T @ u.data - np.eye(4))) <= 1e-10
    assert np.max(np.abs(u.data @ back.data - np.eye(4))) <= 1e-10


def test_propagator_rejects_non_hermitian():
    with pytest.raises(ValidationError):
        hermitian_propagator(Operator([[0, 1], [0, 0]]), 1.0)


def test_partial_trace_product_state(rng):
    phi, eps = random_state(rng, 2), random_state(rng, 3)
    rho = pure_density(StateVector(np.kron(phi, eps), (2, 3)))
    red = partial_trace(rho, (2, 3), 0)
    assert np.max(np.abs(red.data - np.outer(phi, phi.conj()))) <= 1e-12
    red_env = partial_trace(rho, (2, 3), 1)
    assert np.max(np.abs(red_env.data - np.outer(eps, eps.conj()))) <= 1e-12


def test_partial_trace_bell():
    bell = StateVector(np.array([1, 0, 0, 1]) / np.sqrt(2), (2, 2))
    red = partial_trace(pure_density(bell), (2, 2), 0)
    assert np.max(np.abs(red.data - np.eye(2) / 2)) <= 1e-15


def test_partial_trace_index_sum(rng):
    psi = random_state(rng, 6)
    red = partial_trace(pure_density(StateVector(psi, (2, 3))), (2, 3), 0)
    assert np.max(np.abs(red.data - index_sum_partial_trace(psi, 2, 3))) <= 1e-12


def test_partial_trace_three_parties(rng):
    psi = random_state(rng, 12)
    rho = pure_density(StateVector(psi, (2, 3, 2)))
    kept = partial_trace(rho, (2, 3, 2), [0, 2]).data
    t = psi.reshape(2, 3, 2)
    oracle = np.einsum("ajb,cjd->abcd", t, t.conj()).reshape(4, 4)
    assert np.allclose(kept, oracle, atol=1e-13)


def test_partial_trace_bad_dims(rng):
    rho = pure_density(StateVector(random_state(rng, 6), (6,)))
    with pytest.raises(ValidationError):
        partial_trace(rho, (2, 2), 0)


def test_inner_product_rules(rng):
    a = StateVector(random_state(rng, 3), (3,))
    assert abs(inner_product(a, a) - 1) <= 1e-12
    e0, e1 = StateVector([1, 0], (2,)), StateVector([0, 1], (2,))
    assert inner_product(e0, e1) == 0
    gamma = 0.37
    b = StateVector(np.exp(1j * gamma) * a.data, (3,))
    assert abs(inner_product(a, b) - np.exp(1j * gamma)) <= 1e-12
    with pytest.raises(ValidationError):
        inner_product(a, e0)


def test_state_validation():
    with pytest.raises(ValidationError):
        StateVector([0.5, 0], (2,))
    with pytest.raises(ValidationError):
        StateVector([1, 0, 0], (2,))
    with pytest.raises(ValidationError):
        StateVector([np.nan, 0], (2,))


def test_density_validation():
    with pytest.raises(ValidationError):
        DensityMatrix(np.diag([0.7, 0.7]))
    with pytest.raises(ValidationError):
        DensityMatrix(np.diag([1.2, -0.2]))


def test_values_are_immutable(rng):
    s = StateVector(random_state(rng, 2), (2,))
    with pytest.raises(ValueError):
        s.data[0] = 0


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), dt=st.floats(-5, 5), hbar=st.floats(0.1, 3))
def test_propagation_conserves_norm(seed, dt, hbar):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 7))
    u = hermitian_propagator(Operator(random_hermitian(rng, n)), dt, hbar)
    assert np.max(np.abs(u.data.conj().T @ u.data - np.eye(n))) <= 1e-10
    psi = random_state(rng, n)
    assert abs(np.linalg.norm(u.data @ psi) - 1) <= 1e-9


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_partial_trace_is_a_density(seed):
    rng = np.random.default_rng(seed)
    n, d = int(rng.integers(1, 4)), int(rng.integers(1, 5))
    psi = random_state(rng, n * d)
    red = partial_trace(pure_density(StateVector(psi, (n, d))), (n, d), 0)
    assert abs(np.trace(red.data) - 1) <= 1e-10
    assert np.linalg.eigvalsh(red.data).min() >= -1e-10
