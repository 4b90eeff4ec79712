import math

import numpy as np
import pytest

from pointer_sim.branches import make_theta_state
from pointer_sim.errors import CapacityError
from pointer_sim.linalg import Operator, StateVector, hermitian_propagator, kron_states
from pointer_sim.model import TimeGrid, build_total_hamiltonian, scenario_from_dict
from pointer_sim.propagators import (
    evolve_exact,
    evolve_mean_field,
    evolve_subsystem,
    mean_field_error,
)

from conftest import fix_grid, phase_doc, phase_scenario, random_hermitian, random_non_demolition_doc, random_state


def rk4(h, psi0, t_total, n, hbar=1.0):
    def f(psi):
        return -1j * (h @ psi) / hbar

    dt = t_total / n
    psi = psi0.astype(complex)
    for _ in range(n):
        k1 = f(psi)
        k2 = f(psi + 0.5 * dt * k1)
        k3 = f(psi + 0.5 * dt * k2)
        k4 = f(psi + dt * k3)
        psi = psi + dt * (k1 + 2 * k2 + 2 * k3 + k4) / 6
    return psi


def richardson_rk4(h, psi0, t_total, n, hbar=1.0):
    coarse = rk4(h, psi0, t_total, n, hbar)
    fine = rk4(h, psi0, t_total, 2 * n, hbar)
    return (16 * fine - coarse) / 15


def test_subsystem_free():
    psi = StateVector([0.6, 0.8j], (2,))
    states = evolve_subsystem(psi, Operator(np.zeros((2, 2))), TimeGrid(0, 3, 7))
    assert np.allclose(states, psi.data[None, :], atol=0)


def test_subsystem_eigenstate_phase():
    grid = TimeGrid(0, 4, 16)
    states = evolve_subsystem(StateVector([1, 0], (2,)), Operator(np.diag([0.5, -0.5])), grid)
    assert np.max(np.abs(states[:, 0] - np.exp(-0.5j * grid.times))) <= 1e-14
    assert np.all(states[:, 1] == 0)


def test_subsystem_against_rk4(rng):
    h = random_hermitian(rng, 4)
    psi0 = random_state(rng, 4)
    grid = TimeGrid(0.0, 1.3, 1)
    ours = evolve_subsystem(StateVector(psi0, (4,)), Operator(h), grid, hbar=0.8)[-1]
    oracle = richardson_rk4(h, psi0, 1.3, 400, hbar=0.8)
    assert np.max(np.abs(ours - oracle)) <= 1e-8


def test_mean_field_pointer_action_is_linear():
    s = phase_scenario(t_end=3.0, steps=30)
    b = evolve_mean_field(0.0, s)
    assert np.max(np.abs(b.action.values - s.time_grid.times)) <= 1e-12
    assert b.action.values[0] == 0


def test_mean_field_quarter_cancels():
    b = evolve_mean_field(math.pi / 4, phase_scenario(t_end=3.0, steps=30))
    assert np.max(np.abs(b.action.values)) <= 1e-12


def test_branch_state_factorization(rng):
    s = scenario_from_dict(fix_grid(random_non_demolition_doc(rng, d=3), 2.0))
    b = evolve_mean_field(0.7, s)
    for k in (0, 17, len(b.times) - 1):
        expected = np.kron(b.system_states[k], b.environment_states[k]) * np.exp(-1j * b.action.values[k] / s.hbar)
        assert np.max(np.abs(b.states[k] - expected)) <= 1e-9
    assert np.max(np.abs(np.linalg.norm(b.states, axis=1) - 1)) <= 1e-9


def test_bath_action_grid_refinement(rng):
    doc = fix_grid(random_non_demolition_doc(rng, d=4, steps=2000), 3.0)
    coarse = evolve_mean_field(0.6, scenario_from_dict(doc)).action.values[-1]
    doc["time_grid"]["steps"] = 20000
    fine = evolve_mean_field(0.6, scenario_from_dict(doc)).action.values[-1]
    assert abs(coarse - fine) <= 1e-6 * abs(fine)


def test_action_additivity(rng):
    doc = fix_grid(random_non_demolition_doc(rng, d=3, steps=300), 3.0)
    s = scenario_from_dict(doc)
    full = evolve_mean_field(0.4, s)
    k1 = 100
    t1 = full.times[k1]
    doc2 = dict(doc)
    doc2["time_grid"] = {"t0": float(t1), "t_end": doc["time_grid"]["t_end"], "steps": 200}
    doc2["system"] = dict(doc["system"], initial_state=[[z.real, z.imag] for z in full.system_states[k1]])
    doc2["environment"] = dict(doc["environment"], initial_state=[[z.real, z.imag] for z in full.environment_states[k1]])
    s2 = scenario_from_dict(doc2)
    tail = evolve_mean_field(0.4, s2, s2.initial_system)
    assert abs(full.action.values[-1] - (full.action.values[k1] + tail.action.values[-1])) <= 1e-10


def test_gauge_invariance_of_action(rng):
    s = scenario_from_dict(fix_grid(random_non_demolition_doc(rng, d=2), 2.0))
    psi = make_theta_state(0.9, s)
    rotated = StateVector(np.exp(1.234j) * psi.data, (2,))
    a = evolve_mean_field(0.9, s, psi).action.values
    b = evolve_mean_field(0.9, s, rotated).action.values
    assert np.max(np.abs(a - b)) <= 1e-12


def test_relative_phase_in_pointer_basis_leaves_action(rng):
    s = scenario_from_dict(fix_grid(random_non_demolition_doc(rng, d=2), 2.0))
    up, down = s.pointer_basis
    th = 0.9
    plain = StateVector(math.cos(th) * up + math.sin(th) * down, (2,))
    phased = StateVector(np.exp(0.3j) * math.cos(th) * up + np.exp(-1.1j) * math.sin(th) * down, (2,))
    a = evolve_mean_field(th, s, plain).action.values
    b = evolve_mean_field(th, s, phased).action.values
    assert np.max(np.abs(a - b)) <= 1e-12


def test_exact_factorizes_without_coupling(rng):
    doc = fix_grid(random_non_demolition_doc(rng, d=3), 2.0)
    doc["interaction"]["coupling"] = 0.0
    s = scenario_from_dict(doc)
    exact = evolve_exact(kron_states(s.initial_system, s.initial_environment), s)
    sys = evolve_subsystem(s.initial_system, s.system_hamiltonian, s.time_grid, s.hbar)
    env = evolve_subsystem(s.initial_environment, s.environment_hamiltonian, s.time_grid, s.hbar)
    prod = np.einsum("ti,tk->tik", sys, env).reshape(len(s.time_grid.times), -1)
    assert np.max(np.abs(exact.states - prod)) <= 1e-10


def test_exact_bath_norm():
    doc = phase_doc(g=0.2)
    doc["environment"] = {"qubits": 3, "field_x": 0.9, "initial_state": "plus"}
    doc["interaction"] = {
        "mode": "bath",
        "system_operator": [[1, 0], [0, -1]],
        "environment_operator": {"z_couplings": [1.0, 0.5, 0.7]},
        "coupling": 0.2,
    }
    s = scenario_from_dict(doc)
    psi0 = kron_states(make_theta_state(0.5, s), s.initial_environment)
    exact = evolve_exact(psi0, s)
    assert np.max(np.abs(np.linalg.norm(exact.states, axis=1) - 1)) <= 1e-10


def test_exact_energy_is_conserved(rng):
    s = scenario_from_dict(fix_grid(random_non_demolition_doc(rng, d=3), 4.0))
    exact = evolve_exact(kron_states(s.initial_system, s.initial_environment), s)
    h = build_total_hamiltonian(s, s.time_grid.t0).data
    energy = np.real(np.einsum("ti,ij,tj->t", exact.states.conj(), h, exact.states))
    assert np.ptp(energy) <= 1e-9


def test_exact_piecewise_matches_composed_propagators():
    doc = phase_doc(t_end=3.0, steps=6)
    doc["interaction"]["coupling"] = [[0.0, 0.5], [1.25, 2.0]]  # switch inside a step
    s = scenario_from_dict(doc)
    psi0 = kron_states(make_theta_state(0.6, s), s.initial_environment)
    exact = evolve_exact(psi0, s)
    h1 = build_total_hamiltonian(s, 0.1)
    h2 = build_total_hamiltonian(s, 2.0)
    u = hermitian_propagator(h2, 3.0 - 1.25).data @ hermitian_propagator(h1, 1.25).data
    assert np.max(np.abs(exact.states[-1] - u @ psi0.data)) <= 1e-12


def test_piecewise_action_exact_in_phase_mode():
    doc = phase_doc(t_end=3.0, steps=6)
    doc["interaction"]["coupling"] = [[0.0, 0.5], [1.25, 2.0]]
    b = evolve_mean_field(0.0, scenario_from_dict(doc))
    assert b.action.values[-1] == pytest.approx(0.5 * 1.25 + 2.0 * 1.75, abs=1e-12)


def test_exact_capacity(monkeypatch):
    s = phase_scenario()
    psi0 = kron_states(s.initial_system, s.initial_environment)
    monkeypatch.setenv("POINTER_SIM_MAX_DIM", "1")
    with pytest.raises(CapacityError):
        evolve_exact(psi0, s)


def test_mean_field_error_zero_without_coupling(rng):
    doc = fix_grid(random_non_demolition_doc(rng, d=3), 2.0)
    doc["interaction"]["coupling"] = 0.0
    assert np.max(mean_field_error(0.8, scenario_from_dict(doc))) <= 1e-10


@pytest.mark.parametrize("theta", [0.0, math.pi / 2])
def test_mean_field_error_pointer_branches_phase_mode(rng, theta):
    s = scenario_from_dict(fix_grid(random_non_demolition_doc(rng, mode="phase"), 3.0))
    assert np.max(mean_field_error(theta, s)) <= 1e-9


def test_mean_field_error_generic_theta_phase_mode(rng):
    """Phase mode is exact only on the pointer branches.

    For a general θ the exact state keeps per-component phases
    e^{-i g a_up τ/ħ}, e^{-i g a_down τ/ħ} while the branch carries the single
    averaged phase, so 1 − err = |cos²θ e^{-i g a_up τ/ħ} + sin²θ e^{-i g a_down τ/ħ}|.
    """
    s = scenario_from_dict(fix_grid(random_non_demolition_doc(rng, mode="phase"), 3.0))
    theta = 0.6
    up, down = s.pointer_basis
    a = s.interaction.system_operator.data
    a_up, a_down = np.real(np.vdot(up, a @ up)), np.real(np.vdot(down, a @ down))
    g = s.interaction.coupling(0.0)
    tau = s.time_grid.times - s.time_grid.t0
    closed = np.abs(
        math.cos(theta) ** 2 * np.exp(-1j * g * a_up * tau / s.hbar)
        + math.sin(theta) ** 2 * np.exp(-1j * g * a_down * tau / s.hbar)
    )
    assert np.max(np.abs((1 - mean_field_error(theta, s)) - closed)) <= 1e-10
