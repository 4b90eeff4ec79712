"""Decoherence observables: reduced density, r(t), time averages, τ, fidelity."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .branches import BranchFamily, saddle_point_vector
from .errors import DegeneracyError, UnsupportedProfileError, ValidationError
from .linalg import DensityMatrix, StateVector, partial_trace, pure_density
from .model import Scenario

HALF_CROSSING = 0.5


def reduced_density(state: StateVector, s: Scenario) -> DensityMatrix:
    """ρ_SA = Tr_env |Φ⟩⟨Φ| on the two-level system."""
    if state.dims != s.dims:
        raise ValidationError(f"state dims {state.dims} do not match scenario {s.dims}")
    return partial_trace(pure_density(state), state.dims, 0)


def reduced_density_fast(psi: np.ndarray, dims: tuple[int, int]) -> np.ndarray:
    """Same as :func:`reduced_density` for raw amplitudes, via reshape (no d²×d² matrix)."""
    m = np.asarray(psi).reshape(dims)
    return m @ m.conj().T


def pointer_coherence(rho: np.ndarray, s: Scenario) -> complex:
    """⟨up|ρ|down⟩."""
    up, down = s.pointer_basis
    return complex(np.vdot(up, rho @ down))


def decoherence_factor(family: BranchFamily, t: float) -> complex:
    """r(t) = ⟨ε_up(t)|ε_down(t)⟩ = exp(i(Λ_up − Λ_down)/ħ)."""
    k = family.index(t)
    delta = family.lambda_up.values[k] - family.lambda_down.values[k]
    return complex(np.exp(1j * delta / family.hbar))


def decoherence_factors(family: BranchFamily) -> np.ndarray:
    delta = family.lambda_up.values - family.lambda_down.values
    return np.exp(1j * delta / family.hbar)


def time_average(values, times) -> np.ndarray:
    """Running average A(T) = (1/(T − t0)) ∫_{t0}^T v dt (trapezoid); A(t0) = v(t0)."""
    values = np.asarray(values)
    times = np.asarray(times, dtype=float)
    if values.shape != times.shape or times.size < 2:
        raise ValidationError("need aligned arrays with at least 2 nodes")
    if np.any(np.diff(times) <= 0):
        raise ValidationError("times must be strictly ascending")
    integral = cumulative_trapezoid(values, times, initial=0)
    out = np.empty_like(integral, dtype=np.result_type(values, float))
    out[0] = values[0]
    out[1:] = integral[1:] / (times[1:] - times[0])
    return out


def first_crossing(times: np.ndarray, magnitude: np.ndarray, threshold: float) -> float:
    """First time ``magnitude`` drops to ``threshold``, linearly interpolated; inf if never."""
    below = np.flatnonzero(magnitude <= threshold)
    if below.size == 0:
        return math.inf
    j = int(below[0])
    if j == 0:
        return float(times[0])
    m0, m1 = magnitude[j - 1], magnitude[j]
    frac = (m0 - threshold) / (m0 - m1)
    return float(times[j - 1] + frac * (times[j] - times[j - 1]))


def action_rates(family: BranchFamily) -> tuple[float, float]:
    return family.lambda_up.rate(), family.lambda_down.rate()


def decoherence_time(family: BranchFamily, threshold: float = HALF_CROSSING) -> tuple[float, float]:
    """(ħ/|λ_up − λ_down|, first T with |running average of r| ≤ threshold)."""
    if not family.scenario.interaction.coupling.is_constant:
        raise UnsupportedProfileError("decoherence time needs a constant coupling")
    lam_up, lam_down = action_rates(family)
    diff = abs(lam_up - lam_down)
    if diff <= 1e-12 * max(1.0, abs(lam_up), abs(lam_down)):
        raise DegeneracyError("up and down action rates coincide")
    avg = np.abs(time_average(decoherence_factors(family), family.times))
    return family.hbar / diff, first_crossing(family.times, avg, threshold)


@dataclass(frozen=True)
class DecoherenceReport:
    times: np.ndarray
    coherence_magnitude: np.ndarray
    decoherence_factor: np.ndarray
    time_averaged_factor: np.ndarray
    tau_estimate: float
    tau_measured: float
    tau_single_rate: float
    rates: tuple[float, float]


def decoherence_report(family: BranchFamily, coherence=None, threshold: float = HALF_CROSSING) -> DecoherenceReport:
    """Bundle r(t), its running average and both τ values.

    ``coherence`` is an optional array of |ρ_up,down(t)|; by default it is
    taken from the normalized stationary-phase state at each node (NaN where
    the actions are still degenerate).

    ``tau_single_rate`` is ħ/max(|λ_up|, |λ_down|), the single-energy form of
    the estimate, reported next to the rate-difference form.
    """
    r = decoherence_factors(family)
    avg = time_average(r, family.times)
    rates = action_rates(family)
    try:
        tau_est, tau_meas = decoherence_time(family, threshold)
    except (UnsupportedProfileError, DegeneracyError):
        tau_est = tau_meas = math.nan
    top = max(abs(rates[0]), abs(rates[1]))
    tau_single = family.hbar / top if top > 0 else math.inf
    if coherence is None:
        coherence = saddle_coherence(family)
    return DecoherenceReport(family.times, np.asarray(coherence), r, avg, tau_est, tau_meas, tau_single, rates)


def saddle_coherence(family: BranchFamily) -> np.ndarray:
    out = np.full(family.times.size, np.nan)
    dims = family.scenario.dims
    for k, t in enumerate(family.times):
        try:
            vec = saddle_point_vector(family, t)
        except DegeneracyError:
            continue
        norm = np.linalg.norm(vec)
        if norm == 0:
            continue
        out[k] = abs(pointer_coherence(reduced_density_fast(vec / norm, dims), family.scenario))
    return out


def fidelity(a: StateVector, b: StateVector, normalize: bool = False) -> float:
    """|⟨a|b⟩|, symmetric and global-phase invariant."""
    if a.dims != b.dims:
        raise ValidationError(f"dimension mismatch {a.dims} vs {b.dims}")
    va, vb = a.data, b.data
    if normalize:
        va, vb = va / np.linalg.norm(va), vb / np.linalg.norm(vb)
    return float(min(1.0, abs(np.vdot(va, vb))))
