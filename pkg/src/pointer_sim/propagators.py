"""Time evolution: free subsystems, mean-field branches, exact total system."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .linalg import Operator, StateVector, check_capacity, eigh_hermitian
from .model import Scenario, TimeGrid, build_total_hamiltonian


@dataclass(frozen=True)
class ActionRecord:
    """Accumulated action Λ(t) on a time grid (same units as hbar, unwrapped)."""

    times: np.ndarray
    values: np.ndarray

    def at(self, t: float) -> float:
        return float(self.values[node_index(self.times, t)])

    def rate(self) -> float:
        """Least-squares slope dΛ/dt."""
        return float(np.polyfit(self.times, self.values, 1)[0])


@dataclass(frozen=True)
class BranchTrajectory:
    """Mean-field branch |φ_θ(t)⟩|ε(t)⟩ e^{-iΛ_θ(t)/ħ}.

    ``states`` has shape (n_times, 2·d); ``system_states`` (n_times, 2) and
    ``environment_states`` (n_times, d) are the unphased factors.
    """

    theta: float
    times: np.ndarray
    states: np.ndarray
    action: ActionRecord
    system_states: np.ndarray
    environment_states: np.ndarray
    dims: tuple[int, int]

    def state(self, k: int) -> StateVector:
        return StateVector(self.states[k], self.dims)


@dataclass(frozen=True)
class ExactTrajectory:
    times: np.ndarray
    states: np.ndarray
    dims: tuple[int, ...]

    def state(self, k: int) -> StateVector:
        return StateVector(self.states[k], self.dims)


def node_index(times: np.ndarray, t: float) -> int:
    """Index of the grid node at ``t``; raises if ``t`` is not a node."""
    k = int(np.argmin(np.abs(times - t)))
    scale = max(1.0, abs(times[-1]), abs(times[0]))
    if abs(times[k] - t) > 1e-9 * scale:
        raise ValidationError(f"t={t} is not a grid node")
    return k


def _evolve_eig(evals, evecs, psi0: np.ndarray, elapsed: np.ndarray, hbar: float) -> np.ndarray:
    """States exp(-i h τ/ħ) psi0 for each τ in ``elapsed``; psi0 may be batched (..., n)."""
    coeffs = psi0 @ evecs.conj()
    phases = np.exp(-1j * np.multiply.outer(elapsed, evals) / hbar)
    # (..., n) x (t, n) -> (..., t, n) in the eigenbasis, then back
    return (coeffs[..., None, :] * phases) @ evecs.T


def evolve_subsystem(psi0: StateVector, h: Operator, grid: TimeGrid, hbar: float = 1.0) -> np.ndarray:
    """Free Schrödinger evolution of one subsystem; returns (n_times, n) amplitudes."""
    if h.dim != psi0.dim:
        raise ValidationError(f"state dimension {psi0.dim} != operator dimension {h.dim}")
    evals, evecs = eigh_hermitian(h)
    times = grid.times
    return _evolve_eig(evals, evecs, psi0.data, times - times[0], hbar)


def _coupling_integrals(s: Scenario, times: np.ndarray) -> np.ndarray:
    c = s.interaction.coupling
    if c.is_constant:
        return c.values[0] * np.diff(times)
    return np.array([c.integral(a, b) for a, b in zip(times[:-1], times[1:])])


def mean_field_batch(system0: np.ndarray, s: Scenario):
    """Mean-field evolution for a batch of initial system states.

    Returns ``(system, environment, action)`` with shapes (m, n_t, 2),
    (n_t, d) and (m, n_t). Λ is accumulated with the trapezoid rule on the
    interaction expectation; g(t) is integrated exactly per step so that
    piecewise-constant switching introduces no extra error.
    """
    system0 = np.atleast_2d(np.asarray(system0, dtype=complex))
    times = s.time_grid.times
    elapsed = times - times[0]
    sys_ev = np.linalg.eigh(s.system_hamiltonian.data)
    env_ev = np.linalg.eigh(s.environment_hamiltonian.data)
    system = _evolve_eig(*sys_ev, system0, elapsed, s.hbar)
    env = _evolve_eig(*env_ev, s.initial_environment.data, elapsed, s.hbar)

    a = s.coupled_system_operator
    b = s.interaction.environment_operator.data
    a_mean = np.real(np.einsum("mti,ij,mtj->mt", system.conj(), a, system))
    b_mean = np.real(np.einsum("ti,ij,tj->t", env.conj(), b, env))
    energy = a_mean * b_mean
    increments = _coupling_integrals(s, times) * 0.5 * (energy[:, 1:] + energy[:, :-1])
    action = np.concatenate([np.zeros((energy.shape[0], 1)), np.cumsum(increments, axis=1)], axis=1)
    return system, env, action


def assemble_branch(theta: float, s: Scenario, system, env, action) -> BranchTrajectory:
    times = s.time_grid.times
    phase = np.exp(-1j * action / s.hbar)
    states = np.einsum("ti,tk->tik", system, env).reshape(len(times), -1) * phase[:, None]
    return BranchTrajectory(
        theta=float(theta),
        times=times,
        states=states,
        action=ActionRecord(times, action),
        system_states=system,
        environment_states=env,
        dims=s.dims,
    )


def evolve_mean_field(theta: float, s: Scenario, system_state: StateVector | None = None) -> BranchTrajectory:
    """Mean-field branch started from |φ_θ(t0)⟩|ε(t0)⟩.

    ``system_state`` overrides the θ-state (used for arbitrary initial states
    carrying the relative phases α, β).
    """
    from .branches import make_theta_state

    if system_state is None:
        system_state = make_theta_state(theta, s)
    system, env, action = mean_field_batch(system_state.data, s)
    return assemble_branch(theta, s, system[0], env, action[0])


def _segments(s: Scenario) -> list[tuple[float, float]]:
    grid = s.time_grid
    edges = [grid.t0, *s.interaction.coupling.breakpoints(grid.t0, grid.t_end), grid.t_end]
    return list(zip(edges, edges[1:]))


def evolve_exact(phi0_total: StateVector, s: Scenario) -> ExactTrajectory:
    """Full unitary evolution under the total Hamiltonian.

    The Hamiltonian is constant between coupling breakpoints, so each segment
    is propagated exactly by eigendecomposition.
    """
    check_capacity(phi0_total.dim)
    if phi0_total.dim != 2 * s.env_dim:
        raise ValidationError(f"state dimension {phi0_total.dim} != {2 * s.env_dim}")
    times = s.time_grid.times
    out = np.empty((len(times), phi0_total.dim), dtype=complex)
    psi = phi0_total.data
    done = 0
    for lo, hi in _segments(s):
        h = build_total_hamiltonian(s, 0.5 * (lo + hi))
        evals, evecs = eigh_hermitian(h)
        last = hi == s.time_grid.t_end
        mask = (times >= lo) & ((times <= hi) if last else (times < hi))
        mask[:done] = False
        idx = np.flatnonzero(mask)
        if idx.size:
            out[idx] = _evolve_eig(evals, evecs, psi, times[idx] - lo, s.hbar)
            done = idx[-1] + 1
        psi = _evolve_eig(evals, evecs, psi, np.array([hi - lo]), s.hbar)[0]
    return ExactTrajectory(times, out, s.dims)


def mean_field_error(theta: float, s: Scenario, system_state: StateVector | None = None) -> np.ndarray:
    """1 − |⟨Φ_exact(t)|Φ_mf(t)⟩| from the same initial product state."""
    branch = evolve_mean_field(theta, s, system_state)
    exact = evolve_exact(StateVector(branch.states[0], s.dims), s)
    overlap = np.abs(np.einsum("ti,ti->t", exact.states.conj(), branch.states))
    return 1.0 - overlap
