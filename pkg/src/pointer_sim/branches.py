"""The θ-family of mean-field branches and pointer selection by stationary phase.

For the two-level apparatus every branch starts from

    |φ_θ⟩ = cos θ |up⟩ + sin θ |down⟩,   θ ∈ [0, π/2],

and, in the non-demolition case, carries the action

    Λ_θ(t) = cos²θ Λ_up(t) + sin²θ Λ_down(t).

A general solution is the continuum superposition (2/π)∫ C_θ |Φ_θ(t)⟩ dθ.
Once |Λ_up − Λ_down| ≫ ħ the θ-integral is dominated by the stationary
points of Λ_θ, which sit at θ = 0 and θ = π/2: the pointer states.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.integrate import trapezoid
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from .errors import DegeneracyError, ResolutionError, ValidationError
from .linalg import StateVector
from .model import HALF_PI, Scenario, ThetaProfile, TimeGrid, required_nodes, resolve_theta_profile
from .propagators import (
    ActionRecord,
    BranchTrajectory,
    assemble_branch,
    mean_field_batch,
    node_index,
)

MAX_NODE_PHASE = math.pi / 4


def make_theta_state(theta: float, s: Scenario) -> StateVector:
    """cos θ |up⟩ + sin θ |down⟩ in the computational basis."""
    if not (-1e-15 <= theta <= HALF_PI + 1e-15):
        raise ValidationError(f"theta {theta} outside [0, pi/2]")
    up, down = s.pointer_basis
    return StateVector(math.cos(theta) * up + math.sin(theta) * down, (2,))


def theta_of_state(state: StateVector, s: Scenario) -> float:
    """θ such that |⟨up|ψ⟩| = cos θ; relative phases are dropped."""
    up, down = s.pointer_basis
    return math.atan2(abs(np.vdot(down, state.data)), abs(np.vdot(up, state.data)))


@dataclass(frozen=True)
class BranchFamily:
    """Branches evaluated at every profile node, stored as arrays.

    system_states: (n_nodes, n_times, 2); environment_states: (n_times, d),
    shared by all branches; actions: (n_nodes, n_times).
    """

    scenario: Scenario
    profile: ThetaProfile
    times: np.ndarray
    system_states: np.ndarray
    environment_states: np.ndarray
    actions: np.ndarray
    up: BranchTrajectory
    down: BranchTrajectory

    @property
    def thetas(self) -> np.ndarray:
        return self.profile.nodes

    @property
    def lambda_up(self) -> ActionRecord:
        return self.up.action

    @property
    def lambda_down(self) -> ActionRecord:
        return self.down.action

    @property
    def hbar(self) -> float:
        return self.scenario.hbar

    def branch(self, i: int) -> BranchTrajectory:
        return assemble_branch(
            self.thetas[i], self.scenario, self.system_states[i], self.environment_states, self.actions[i]
        )

    @property
    def branches(self) -> list[BranchTrajectory]:
        return [self.branch(i) for i in range(len(self.thetas))]

    def index(self, t: float) -> int:
        return node_index(self.times, t)


def pointer_branches(s: Scenario) -> tuple[BranchTrajectory, BranchTrajectory]:
    up, down = s.pointer_basis
    system, env, action = mean_field_batch(np.stack([up, down]), s)
    return (
        assemble_branch(0.0, s, system[0], env, action[0]),
        assemble_branch(HALF_PI, s, system[1], env, action[1]),
    )


def build_branch_family(s: Scenario, profile: ThetaProfile | None = None) -> BranchFamily:
    """Evolve one mean-field branch per profile node.

    Without an explicit profile the scenario's θ spec is resolved, sizing the
    node count from the largest |Λ_up − Λ_down| on the grid.
    """
    up, down = pointer_branches(s)
    if profile is None:
        spread = float(np.max(np.abs(up.action.values - down.action.values)))
        profile = resolve_theta_profile(s.theta_profile, spread, s.hbar)
    b_up, b_down = s.pointer_basis
    initial = np.cos(profile.nodes)[:, None] * b_up + np.sin(profile.nodes)[:, None] * b_down
    system, env, action = mean_field_batch(initial, s)
    return BranchFamily(s, profile, s.time_grid.times, system, env, action, up, down)


def pointer_family(s: Scenario) -> BranchFamily:
    """Family holding only the θ = 0 and θ = π/2 branches.

    Enough for r(t), τ and the stationary-phase state; not a converged
    quadrature, so :func:`superpose_branches` on it is meaningless for
    continuous profiles.
    """
    spec = s.theta_profile
    if spec.kind != "discrete":
        spec = replace(spec, quadrature="trapezoid", nodes=2)
    return build_branch_family(s, resolve_theta_profile(spec))


def action_mixing_check(family: BranchFamily, t: float) -> float:
    """max_θ |Λ_θ(t) − (cos²θ Λ_up(t) + sin²θ Λ_down(t))|."""
    k = family.index(t)
    th = family.thetas
    mixed = np.cos(th) ** 2 * family.lambda_up.values[k] + np.sin(th) ** 2 * family.lambda_down.values[k]
    return float(np.max(np.abs(family.actions[:, k] - mixed)))


@dataclass(frozen=True)
class Superposition:
    """Unnormalized continuum superposition and its norm.

    ``system`` is the unnormalized system factor; the environment factor is
    common to all branches, so ``vector = system ⊗ ε(t)``.
    """

    vector: np.ndarray
    norm: float
    system: np.ndarray
    dims: tuple[int, int]

    @property
    def state(self) -> StateVector:
        return StateVector.normalized(self.vector, self.dims)


def check_resolution(family: BranchFamily, k: int) -> None:
    th_actions = family.actions[:, k]
    # explicit branches are summed exactly; there is no integral to resolve
    if th_actions.size < 2 or family.profile.quadrature == "discrete":
        return
    jump = float(np.max(np.abs(np.diff(th_actions)))) / family.hbar
    if jump > MAX_NODE_PHASE:
        spread = abs(family.lambda_up.values[k] - family.lambda_down.values[k])
        suggested = max(required_nodes(spread, family.hbar), math.ceil(len(th_actions) * jump / MAX_NODE_PHASE) + 1)
        raise ResolutionError(
            f"phase changes by {jump:.3g} rad between adjacent theta nodes at t={family.times[k]:.6g}",
            suggested,
        )


def superpose_branches(family: BranchFamily, t: float) -> Superposition:
    """(2/π) Σ_k w_k C_k |Φ_θk(t)⟩ under the profile's quadrature."""
    k = family.index(t)
    check_resolution(family, k)
    p = family.profile
    coeff = (2 / math.pi) * p.quad_weights * p.amplitudes * np.exp(-1j * family.actions[:, k] / family.hbar)
    system = coeff @ family.system_states[:, k, :]
    vector = np.kron(system, family.environment_states[k])
    return Superposition(vector, float(np.linalg.norm(vector)), system, family.scenario.dims)


@dataclass(frozen=True)
class StationaryPoint:
    theta: float
    lambda_second: float
    amplitude: complex
    prefactor: complex
    half_prefactor: complex
    conjugate_prefactor: complex


@dataclass(frozen=True)
class StationaryPointReport:
    """Stationary points of θ ↦ Λ_θ(t).

    ``prefactor`` = C·sqrt(2πħ/(iΛ″)) is the Fresnel factor consistent with
    branch phases e^{-iΛ/ħ}; its principal-branch phase is e^{-iπ/4·sign Λ″}.
    ``conjugate_prefactor`` = C·sqrt(2πiħ/Λ″) has the same magnitude and the
    conjugate phase. ``half_prefactor`` is the endpoint (half-Gaussian) value.
    """

    time: float
    points: tuple[StationaryPoint, ...]
    sign_convention: str = "C*sqrt(2*pi*hbar/(1j*lambda_second)), principal branch"


def _prefactors(amp: complex, lpp: float, hbar: float) -> tuple[complex, complex, complex]:
    full = amp * cmath.sqrt(2 * math.pi * hbar / (1j * lpp))
    conjugate = amp * cmath.sqrt(2j * math.pi * hbar / lpp)
    return full, 0.5 * full, conjugate


def stationary_points(family: BranchFamily, t: float) -> StationaryPointReport:
    """Analytic stationary points of the mixing law: θ* = 0 and θ* = π/2."""
    k = family.index(t)
    lam_up = family.lambda_up.values[k]
    lam_down = family.lambda_down.values[k]
    if abs(lam_up - lam_down) < 10 * family.hbar * np.finfo(float).eps:
        raise DegeneracyError(f"Λ_up == Λ_down at t={t}; no pointer selection possible")
    points = []
    for theta, lpp in ((0.0, 2 * (lam_down - lam_up)), (HALF_PI, 2 * (lam_up - lam_down))):
        amp = family.profile.amplitude(theta)
        full, half, conj = _prefactors(amp, lpp, family.hbar)
        points.append(StationaryPoint(theta, float(lpp), amp, full, half, conj))
    return StationaryPointReport(float(family.times[k]), tuple(points))


def numeric_stationary_points(family: BranchFamily, t: float, tol: float = 1e-8) -> list[float]:
    """Stationary points located from the sampled branch actions.

    A cubic spline through Λ_θ(t) over the nodes is differentiated; interior
    roots are bracketed on a fine grid and refined with Brent's method.
    Endpoints count when the derivative there is negligible relative to the
    action spread. Works for perturbed scenarios where the mixing law fails.
    """
    k = family.index(t)
    th = family.thetas
    if th.size < 4:
        raise ValidationError("need at least 4 theta nodes for a numeric search")
    spline = CubicSpline(th, family.actions[:, k])
    slope = spline.derivative()
    spread = max(float(np.ptp(family.actions[:, k])), family.hbar)
    grid = np.linspace(0.0, HALF_PI, 16 * th.size + 1)
    vals = slope(grid)
    found = []
    for edge, v in ((0.0, vals[0]), (HALF_PI, vals[-1])):
        if abs(v) <= 1e-6 * spread:
            found.append(edge)
    for a, b, va, vb in zip(grid[:-1], grid[1:], vals[:-1], vals[1:]):
        if va == 0.0 and 0.0 < a < HALF_PI:
            found.append(float(a))
        elif va * vb < 0:
            found.append(float(brentq(slope, a, b, xtol=tol)))
    # a spline root next to an accepted endpoint is the same stationary point
    merged: list[float] = []
    step = grid[1] - grid[0]
    for x in sorted(found, key=lambda v: (v not in (0.0, HALF_PI), v)):
        if all(abs(x - y) > step for y in merged):
            merged.append(x)
    return sorted(merged)


def saddle_point_state(family: BranchFamily, t: float, weight: str = "full") -> StateVector:
    """Stationary-phase approximation C̃_0|up,ε_up⟩ + C̃_{π/2}|down,ε_down⟩, normalized.

    ``weight='half'`` uses the endpoint half-Gaussian prefactors; after
    normalization both conventions give the same state when |C_0| = |C_{π/2}|.
    """
    try:
        raw = saddle_point_vector(family, t, weight)
    except DegeneracyError:
        raw = _single_pointer_limit(family, t)
        if raw is None:
            raise
    norm = np.linalg.norm(raw)
    if norm == 0:
        raise DegeneracyError("profile carries no weight at the stationary points")
    return StateVector(raw / norm, family.scenario.dims)


def _single_pointer_limit(family: BranchFamily, t: float) -> np.ndarray | None:
    """Branch state when only one pointer carries weight.

    The normalized stationary-phase state then does not depend on Λ″, so it
    stays defined where the actions are degenerate.
    """
    amp_up, amp_down = family.profile.amplitude(0.0), family.profile.amplitude(HALF_PI)
    k = family.index(t)
    if amp_up != 0 and amp_down == 0:
        return amp_up * family.up.states[k]
    if amp_down != 0 and amp_up == 0:
        return amp_down * family.down.states[k]
    return None


def saddle_point_vector(family: BranchFamily, t: float, weight: str = "full") -> np.ndarray:
    """Unnormalized two-term stationary-phase vector."""
    if weight not in ("full", "half"):
        raise ValidationError(f"weight must be 'full' or 'half', got {weight!r}")
    report = stationary_points(family, t)
    k = family.index(t)
    out = np.zeros(2 * family.scenario.env_dim, dtype=complex)
    for point, branch in zip(report.points, (family.up, family.down)):
        c = point.prefactor if weight == "full" else point.half_prefactor
        out += c * branch.states[k]
    return out


def time_orthogonality(a: BranchTrajectory, b: BranchTrajectory, window: TimeGrid) -> complex:
    """Window average (1/T)∫⟨Φ_a(t)|Φ_b(t)⟩dt by the trapezoid rule."""
    idx = _window_nodes(a, b, window)
    times = a.times[idx]
    overlap = np.einsum("ti,ti->t", a.states[idx].conj(), b.states[idx])
    return complex(trapezoid(overlap, times) / (times[-1] - times[0]))


def orthogonality_convergence(a: BranchTrajectory, b: BranchTrajectory, window: TimeGrid) -> dict[str, complex]:
    """Averages over the full window and its first half (a Cauchy check)."""
    full = time_orthogonality(a, b, window)
    idx = _window_nodes(a, b, window)
    mid = a.times[idx[0] + (len(idx) - 1) // 2]
    half = time_orthogonality(a, b, TimeGrid(window.t0, float(mid), 1))
    return {"full": full, "half": half, "difference": full - half}


def _window_nodes(a: BranchTrajectory, b: BranchTrajectory, window: TimeGrid) -> np.ndarray:
    if a.times.shape != b.times.shape or np.any(np.abs(a.times - b.times) > 1e-12):
        raise ValidationError("trajectories do not share a time grid")
    lo = node_index(a.times, window.t0) if window.t0 >= a.times[0] - 1e-12 else None
    hi = node_index(a.times, window.t_end) if window.t_end <= a.times[-1] + 1e-12 else None
    if lo is None or hi is None:
        raise ValidationError(
            f"window [{window.t0}, {window.t_end}] outside trajectory range "
            f"[{a.times[0]}, {a.times[-1]}]"
        )
    if hi - lo < 1:
        raise ValidationError("window must contain at least two grid nodes")
    return np.arange(lo, hi + 1)
