"""Scenario description: Hamiltonians, interaction, coupling, grids, theta profiles.

A scenario couples a two-level system (the apparatus) to an environment of
dimension ``d`` through

    H(t) = h_sys ⊗ 1 + 1 ⊗ h_env + g(t) · (A + eps_od · X) ⊗ B

where ``A`` is diagonal in the eigenbasis {|up⟩, |down⟩} of ``h_sys``, ``X``
is the flip operator |up⟩⟨down| + |down⟩⟨up| in that same basis and ``B`` is
the identity in phase mode.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Mapping

import numpy as np
import yaml

from .errors import DegeneracyError, ValidationError
from .linalg import (
    HERMITIAN_TOL,
    NORM_TOL,
    Operator,
    StateVector,
    check_capacity,
    tensor_product,
)

HALF_PI = 0.5 * math.pi
NON_DEMOLITION_TOL = 1e-12
PROFILE_NORM_TOL = 1e-8
MIN_THETA_NODES = 64
NODES_PER_ACTION = 8

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)


@dataclass(frozen=True)
class Coupling:
    """Piecewise-constant coupling ``g(t)``.

    ``starts[i]`` is the time from which ``values[i]`` applies; ``g`` is zero
    before the first start. A constant coupling has a single piece starting
    at ``-inf``.
    """

    starts: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.starts) != len(self.values) or not self.starts:
            raise ValidationError("coupling needs matching, non-empty starts/values")
        if any(b <= a for a, b in zip(self.starts, self.starts[1:])):
            raise ValidationError("coupling segment starts must be strictly ascending")
        if not all(math.isfinite(v) for v in self.values):
            raise ValidationError("coupling values must be finite")

    @classmethod
    def constant(cls, value: float) -> "Coupling":
        return cls((-math.inf,), (float(value),))

    @property
    def is_constant(self) -> bool:
        return len(self.values) == 1 and self.starts[0] == -math.inf

    def __call__(self, t: float) -> float:
        idx = np.searchsorted(self.starts, t, side="right") - 1
        return 0.0 if idx < 0 else self.values[idx]

    def breakpoints(self, a: float, b: float) -> list[float]:
        """Segment starts strictly inside ``(a, b)``."""
        return [s for s in self.starts if a < s < b]

    def integral(self, a: float, b: float) -> float:
        edges = [a, *self.breakpoints(a, b), b]
        return sum(self(0.5 * (lo + hi)) * (hi - lo) for lo, hi in zip(edges, edges[1:]))

    def scaled(self, factor: float) -> "Coupling":
        return Coupling(self.starts, tuple(factor * v for v in self.values))


@dataclass(frozen=True)
class TimeGrid:
    t0: float
    t_end: float
    steps: int

    def __post_init__(self):
        if not (math.isfinite(self.t0) and math.isfinite(self.t_end)):
            raise ValidationError("time bounds must be finite", "time_grid")
        if self.t_end <= self.t0:
            raise ValidationError("t_end must exceed t0", "time_grid.t_end")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValidationError("steps must be a positive integer", "time_grid.steps")

    @property
    def dt(self) -> float:
        return (self.t_end - self.t0) / self.steps

    @property
    def times(self) -> np.ndarray:
        return np.linspace(self.t0, self.t_end, int(self.steps) + 1)


@dataclass(frozen=True)
class ThetaSpec:
    """How to build the branch weights C_θ.

    kind:
        ``uniform``   constant C_θ
        ``gaussian``  bump centred at ``center`` with width ``width``
        ``discrete``  explicit branches ``thetas`` with amplitudes ``amplitudes``;
                      the continuum measure then reduces to Σ_θ |C_θ|² = 1
    ``nodes=None`` selects the automatic node count.
    """

    kind: str = "uniform"
    quadrature: str = "gauss-legendre"
    nodes: int | None = None
    center: float = math.pi / 4
    width: float = 0.2
    thetas: tuple[float, ...] = ()
    amplitudes: tuple[complex, ...] = ()

    def __post_init__(self):
        if self.kind not in ("uniform", "gaussian", "discrete"):
            raise ValidationError(f"unknown kind {self.kind!r}", "theta_profile.kind")
        if self.kind == "discrete":
            if not self.thetas or len(self.thetas) != len(self.amplitudes):
                raise ValidationError(
                    "discrete profile needs matching thetas and amplitudes", "theta_profile.thetas"
                )
            for t in self.thetas:
                if not (-1e-15 <= t <= HALF_PI + 1e-15):
                    raise ValidationError(f"theta {t} outside [0, pi/2]", "theta_profile.thetas")
            if any(b <= a for a, b in zip(self.thetas, self.thetas[1:])):
                raise ValidationError("thetas must be ascending", "theta_profile.thetas")
            total = sum(abs(c) ** 2 for c in self.amplitudes)
            if abs(total - 1.0) > PROFILE_NORM_TOL:
                raise ValidationError(
                    f"sum |C|^2 = {total:.12g}, expected 1", "theta_profile.amplitudes"
                )
        elif self.quadrature not in ("gauss-legendre", "trapezoid"):
            raise ValidationError(
                f"unknown quadrature {self.quadrature!r}", "theta_profile.quadrature"
            )
        if self.nodes is not None and (int(self.nodes) != self.nodes or self.nodes < 2):
            raise ValidationError("nodes must be an integer >= 2", "theta_profile.nodes")
        if self.kind == "gaussian" and not self.width > 0:
            raise ValidationError("width must be positive", "theta_profile.width")

    def shape(self, theta) -> np.ndarray:
        """Unnormalized amplitude at ``theta`` (continuous kinds only)."""
        theta = np.asarray(theta, dtype=float)
        if self.kind == "uniform":
            return np.ones_like(theta, dtype=complex)
        if self.kind == "gaussian":
            return np.exp(-0.5 * ((theta - self.center) / self.width) ** 2).astype(complex)
        raise ValueError("discrete profiles have no continuous shape")


@dataclass(frozen=True)
class ThetaProfile:
    """Resolved quadrature: nodes, amplitudes C_θ and quadrature weights.

    The superposition is ``(2/π) Σ_k quad_weights[k] · amplitudes[k] · |Φ_θk⟩``
    and the normalization ``(2/π) Σ_k quad_weights[k] |amplitudes[k]|² = 1``.
    Discrete profiles use quad weight π/2 per branch, which turns both into
    plain sums.
    """

    nodes: np.ndarray
    amplitudes: np.ndarray
    quad_weights: np.ndarray
    quadrature: str
    spec: ThetaSpec
    scale: float = 1.0

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if np.any(nodes < -1e-15) or np.any(nodes > HALF_PI + 1e-15):
            raise ValidationError("theta nodes outside [0, pi/2]", "theta_profile")
        if np.any(np.diff(nodes) <= 0):
            raise ValidationError("theta nodes must be ascending", "theta_profile")
        err = abs(self.norm() - 1.0)
        if err > PROFILE_NORM_TOL:
            raise ValidationError(f"profile normalization off by {err:.3g}", "theta_profile")

    def norm(self) -> float:
        return float(
            (2 / math.pi) * np.sum(self.quad_weights * np.abs(self.amplitudes) ** 2)
        )

    def amplitude(self, theta: float) -> complex:
        """C_θ at an arbitrary angle (zero off-node for discrete profiles)."""
        if self.spec.kind == "discrete":
            hit = np.flatnonzero(np.abs(self.nodes - theta) <= 1e-12)
            return complex(self.amplitudes[hit[0]]) if hit.size else 0j
        return complex(self.scale * self.spec.shape(theta))


def required_nodes(delta_lambda_max: float, hbar: float) -> int:
    return max(MIN_THETA_NODES, math.ceil(NODES_PER_ACTION * abs(delta_lambda_max) / hbar))


def resolve_theta_profile(spec: ThetaSpec, delta_lambda_max: float = 0.0, hbar: float = 1.0) -> ThetaProfile:
    """Build concrete nodes/weights; node count follows the phase budget if unset."""
    if spec.kind == "discrete":
        nodes = np.asarray(spec.thetas, dtype=float)
        amps = np.asarray(spec.amplitudes, dtype=complex)
        return ThetaProfile(nodes, amps, np.full(nodes.size, HALF_PI), "discrete", spec)

    n = spec.nodes or required_nodes(delta_lambda_max, hbar)
    if spec.quadrature == "gauss-legendre":
        x, w = np.polynomial.legendre.leggauss(n)
        nodes = (x + 1.0) * (math.pi / 4)
        quad = w * (math.pi / 4)
    else:
        nodes = np.linspace(0.0, HALF_PI, n)
        quad = np.full(n, HALF_PI / (n - 1))
        quad[[0, -1]] *= 0.5
    raw = spec.shape(nodes)
    raw_norm = (2 / math.pi) * np.sum(quad * np.abs(raw) ** 2)
    scale = 1.0 / math.sqrt(raw_norm)
    return ThetaProfile(nodes, raw * scale, quad, spec.quadrature, spec, scale)


@dataclass(frozen=True)
class InteractionSpec:
    mode: str
    system_operator: Operator
    environment_operator: Operator
    coupling: Coupling
    off_diagonal: float = 0.0

    def __post_init__(self):
        if self.mode not in ("phase", "bath"):
            raise ValidationError(f"unknown mode {self.mode!r}", "interaction.mode")
        if self.system_operator.dim != 2:
            raise ValidationError("system operator must be 2x2", "interaction.system_operator")
        for name in ("system_operator", "environment_operator"):
            if not getattr(self, name).is_hermitian:
                raise ValidationError("operator is not Hermitian", f"interaction.{name}")
        if self.mode == "phase":
            eye = np.eye(self.environment_operator.dim)
            if np.max(np.abs(self.environment_operator.data - eye)) > HERMITIAN_TOL:
                raise ValidationError(
                    "phase mode requires the identity", "interaction.environment_operator"
                )
        if not (math.isfinite(self.off_diagonal) and self.off_diagonal >= 0):
            raise ValidationError("must be a finite non-negative number", "interaction.off_diagonal")


@dataclass(frozen=True)
class Scenario:
    system_hamiltonian: Operator
    environment_hamiltonian: Operator
    interaction: InteractionSpec
    time_grid: TimeGrid
    initial_system: StateVector
    initial_environment: StateVector
    theta_profile: ThetaSpec = field(default_factory=ThetaSpec)
    hbar: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.hbar) and self.hbar > 0):
            raise ValidationError("hbar must be positive", "hbar")
        if self.system_hamiltonian.dim != 2:
            raise ValidationError("system Hamiltonian must be 2x2", "system.hamiltonian")
        if not self.system_hamiltonian.is_hermitian:
            raise ValidationError("not Hermitian", "system.hamiltonian")
        if not self.environment_hamiltonian.is_hermitian:
            raise ValidationError("not Hermitian", "environment.hamiltonian")
        d = self.environment_hamiltonian.dim
        if self.interaction.environment_operator.dim != d:
            raise ValidationError(
                f"dimension {self.interaction.environment_operator.dim} != environment dimension {d}",
                "interaction.environment_operator",
            )
        if self.initial_system.dim != 2:
            raise ValidationError("initial system state must have 2 entries", "system.initial_state")
        if self.initial_environment.dim != d:
            raise ValidationError(
                f"initial environment state must have {d} entries", "environment.initial_state"
            )
        check_capacity(2 * d)

    @property
    def env_dim(self) -> int:
        return self.environment_hamiltonian.dim

    @property
    def dims(self) -> tuple[int, int]:
        return (2, self.env_dim)

    @cached_property
    def pointer_basis(self) -> tuple[np.ndarray, np.ndarray]:
        """(|up⟩, |down⟩): eigenvectors of h_sys, descending eigenvalue.

        Each vector's first nonzero component is made real positive.
        """
        evals, evecs = np.linalg.eigh(self.system_hamiltonian.data)
        if abs(evals[1] - evals[0]) <= 1e-12 * max(1.0, abs(evals).max()):
            raise DegeneracyError("system Hamiltonian is degenerate; up/down basis is ambiguous")
        basis = []
        for col in (1, 0):
            v = evecs[:, col]
            pivot = v[np.flatnonzero(np.abs(v) > 1e-12)[0]]
            v = v * (abs(pivot) / pivot)
            v.setflags(write=False)
            basis.append(v)
        return basis[0], basis[1]

    @cached_property
    def pointer_energies(self) -> tuple[float, float]:
        up, down = self.pointer_basis
        h = self.system_hamiltonian.data
        return float(np.real(np.vdot(up, h @ up))), float(np.real(np.vdot(down, h @ down)))

    @cached_property
    def flip_operator(self) -> np.ndarray:
        up, down = self.pointer_basis
        return np.outer(up, down.conj()) + np.outer(down, up.conj())

    @cached_property
    def coupled_system_operator(self) -> np.ndarray:
        """A + eps_od · X, the system factor multiplying g(t) ⊗ B."""
        return self.interaction.system_operator.data + self.interaction.off_diagonal * self.flip_operator


def build_total_hamiltonian(s: Scenario, t: float) -> Operator:
    """Full Hamiltonian at time ``t`` on system ⊗ environment."""
    d = s.env_dim
    eye_s, eye_e = Operator.identity(2), Operator.identity(d)
    h = tensor_product(s.system_hamiltonian, eye_e).data + tensor_product(eye_s, s.environment_hamiltonian).data
    g = s.interaction.coupling(t)
    if g != 0.0:
        h = h + g * np.kron(s.coupled_system_operator, s.interaction.environment_operator.data)
    op = Operator(h, s.dims)
    if not op.is_hermitian:
        raise ValidationError("total Hamiltonian is not Hermitian")
    return op


@dataclass(frozen=True)
class NonDemolitionReport:
    commutator_norm: float
    offdiag_up_down: float
    offdiag_down_up: float
    tolerance: float = NON_DEMOLITION_TOL

    @property
    def passed(self) -> bool:
        return max(self.commutator_norm, self.offdiag_up_down, self.offdiag_down_up) <= self.tolerance

    def as_dict(self) -> dict[str, Any]:
        return {
            "commutator_norm": self.commutator_norm,
            "offdiag_up_down": self.offdiag_up_down,
            "offdiag_down_up": self.offdiag_down_up,
            "tolerance": self.tolerance,
            "passed": self.passed,
        }


def validate_non_demolition(s: Scenario) -> NonDemolitionReport:
    """Check [h_sys, V] = 0 and the vanishing up/down elements of V.

    V(t) = g(t) ⟨ε(t)|B|ε(t)⟩ (A + eps_od X) is the field the environment
    exerts on the system; residuals are maxima over the time grid.
    """
    times = s.time_grid.times
    evals, evecs = np.linalg.eigh(s.environment_hamiltonian.data)
    coeffs = evecs.conj().T @ s.initial_environment.data
    env = (evecs[None, :, :] * np.exp(-1j * np.outer(times - times[0], evals) / s.hbar)[:, None, :]) @ coeffs
    b = s.interaction.environment_operator.data
    b_mean = np.real(np.einsum("ti,ij,tj->t", env.conj(), b, env))
    g = np.array([s.interaction.coupling(t) for t in times])
    scale = np.max(np.abs(g * b_mean))

    a = s.coupled_system_operator
    h = s.system_hamiltonian.data
    up, down = s.pointer_basis
    comm = float(scale * np.max(np.abs(h @ a - a @ h)))
    ud = float(scale * abs(np.vdot(up, a @ down)))
    du = float(scale * abs(np.vdot(down, a @ up)))
    return NonDemolitionReport(comm, ud, du)


# --------------------------------------------------------------------------
# Scenario documents
# --------------------------------------------------------------------------

def _complex(value, path: str) -> complex:
    if isinstance(value, bool):
        raise ValidationError("expected a number or [re, im] pair", path)
    if isinstance(value, (int, float)):
        return complex(float(value), 0.0)
    if isinstance(value, (list, tuple)) and len(value) == 2 and all(
        isinstance(x, (int, float)) and not isinstance(x, bool) for x in value
    ):
        return complex(float(value[0]), float(value[1]))
    raise ValidationError("expected a number or [re, im] pair", path)


def _matrix(value, path: str, dim: int | None = None) -> np.ndarray:
    if not isinstance(value, list) or not value or not all(isinstance(r, list) for r in value):
        raise ValidationError("expected a matrix (list of rows)", path)
    n = len(value)
    if any(len(r) != n for r in value):
        raise ValidationError("matrix must be square", path)
    if dim is not None and n != dim:
        raise ValidationError(f"expected a {dim}x{dim} matrix, got {n}x{n}", path)
    return np.array(
        [[_complex(x, f"{path}[{i}][{j}]") for j, x in enumerate(row)] for i, row in enumerate(value)]
    )


def _vector(value, path: str, dim: int) -> np.ndarray:
    if not isinstance(value, list):
        raise ValidationError("expected a list of amplitudes", path)
    if len(value) != dim:
        raise ValidationError(f"expected {dim} amplitudes, got {len(value)}", path)
    return np.array([_complex(x, f"{path}[{i}]") for i, x in enumerate(value)])


def _hermitian(value, path: str, dim: int | None = None) -> Operator:
    op = Operator(_matrix(value, path, dim))
    if not op.is_hermitian:
        raise ValidationError("matrix is not Hermitian", path)
    return op


def _state(value, path: str, dim: int, qubits: int | None = None) -> StateVector:
    if isinstance(value, str) and qubits is not None:
        if value == "zero":
            data = np.zeros(dim, dtype=complex)
            data[0] = 1.0
        elif value == "plus":
            data = np.full(dim, 1.0 / math.sqrt(dim), dtype=complex)
        else:
            raise ValidationError(f"unknown named state {value!r} (use zero or plus)", path)
        return StateVector(data, (dim,))
    data = _vector(value, path, dim)
    norm = float(np.linalg.norm(data))
    if abs(norm - 1.0) > NORM_TOL:
        raise ValidationError(f"state is not normalized (norm={norm:.12g})", path)
    return StateVector(data, (dim,))


def _number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError("expected a number", path)
    value = float(value)
    if not math.isfinite(value):
        raise ValidationError("expected a finite number", path)
    return value


def _keys(section, path: str, allowed: set[str], required: set[str] = frozenset()) -> dict:
    if not isinstance(section, Mapping):
        raise ValidationError("expected a mapping", path)
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise ValidationError(f"unknown key(s) {unknown}", path)
    missing = sorted(required - set(section))
    if missing:
        raise ValidationError(f"missing key(s) {missing}", path)
    return dict(section)


def _per_qubit(value, path: str, k: int) -> np.ndarray:
    if isinstance(value, list):
        if len(value) != k:
            raise ValidationError(f"expected {k} values", path)
        return np.array([_number(v, f"{path}[{i}]") for i, v in enumerate(value)])
    return np.full(k, _number(value, path))


def qubit_sum(coefficients: np.ndarray, pauli: np.ndarray) -> np.ndarray:
    """Σ_k c_k · pauli acting on qubit k of an n-qubit register."""
    k = len(coefficients)
    out = np.zeros((2**k, 2**k), dtype=complex)
    for i, c in enumerate(coefficients):
        if c:
            term = np.kron(np.kron(np.eye(2**i), pauli), np.eye(2 ** (k - i - 1)))
            out += c * term
    return out


def _environment(doc: dict) -> tuple[Operator, int | None]:
    env = _keys(
        doc, "environment", {"hamiltonian", "qubits", "field_x", "field_z", "dim", "initial_state"}
    )
    if "hamiltonian" in env:
        for key in ("qubits", "field_x", "field_z"):
            if key in env:
                raise ValidationError("cannot combine with an explicit hamiltonian", f"environment.{key}")
        h = _hermitian(env["hamiltonian"], "environment.hamiltonian")
        if "dim" in env and env["dim"] != h.dim:
            raise ValidationError("dim disagrees with hamiltonian size", "environment.dim")
        return h, None
    if "qubits" in env:
        k = env["qubits"]
        if isinstance(k, bool) or not isinstance(k, int) or k < 1:
            raise ValidationError("expected a positive integer", "environment.qubits")
        check_capacity(2 * 2**k)
        hx = _per_qubit(env.get("field_x", 0.0), "environment.field_x", k)
        hz = _per_qubit(env.get("field_z", 0.0), "environment.field_z", k)
        return Operator(qubit_sum(hx, PAULI_X) + qubit_sum(hz, PAULI_Z)), k
    dim = env.get("dim", 1)
    if isinstance(dim, bool) or not isinstance(dim, int) or dim < 1:
        raise ValidationError("expected a positive integer", "environment.dim")
    return Operator(np.zeros((dim, dim))), None


def _coupling(value, path: str) -> Coupling:
    if isinstance(value, list):
        if not value:
            raise ValidationError("empty coupling schedule", path)
        starts, values = [], []
        for i, piece in enumerate(value):
            if not isinstance(piece, list) or len(piece) != 2:
                raise ValidationError("expected [t_start, value]", f"{path}[{i}]")
            starts.append(_number(piece[0], f"{path}[{i}][0]"))
            values.append(_number(piece[1], f"{path}[{i}][1]"))
        try:
            return Coupling(tuple(starts), tuple(values))
        except ValidationError as exc:
            raise ValidationError(str(exc), path) from None
    return Coupling.constant(_number(value, path))


def _theta_spec(doc) -> ThetaSpec:
    path = "theta_profile"
    d = _keys(
        doc, path, {"kind", "quadrature", "nodes", "center", "width", "thetas", "amplitudes"}
    )
    kwargs: dict[str, Any] = {}
    for key in ("kind", "quadrature"):
        if key in d:
            if not isinstance(d[key], str):
                raise ValidationError("expected a string", f"{path}.{key}")
            kwargs[key] = d[key]
    if d.get("nodes") not in (None, "auto"):
        n = d["nodes"]
        if isinstance(n, bool) or not isinstance(n, int):
            raise ValidationError("expected an integer or 'auto'", f"{path}.nodes")
        kwargs["nodes"] = n
    for key in ("center", "width"):
        if key in d:
            kwargs[key] = _number(d[key], f"{path}.{key}")
    if "thetas" in d:
        if not isinstance(d["thetas"], list):
            raise ValidationError("expected a list", f"{path}.thetas")
        thetas = tuple(_number(x, f"{path}.thetas[{i}]") for i, x in enumerate(d["thetas"]))
        for i, t in enumerate(thetas):
            if not 0.0 <= t <= HALF_PI + 1e-15:
                raise ValidationError(f"theta {t} outside [0, pi/2]", f"{path}.thetas[{i}]")
        kwargs["thetas"] = tuple(min(t, HALF_PI) for t in thetas)
    if "amplitudes" in d:
        if not isinstance(d["amplitudes"], list):
            raise ValidationError("expected a list", f"{path}.amplitudes")
        kwargs["amplitudes"] = tuple(
            _complex(x, f"{path}.amplitudes[{i}]") for i, x in enumerate(d["amplitudes"])
        )
    return ThetaSpec(**kwargs)


TOP_LEVEL_KEYS = {"hbar", "system", "environment", "interaction", "time_grid", "theta_profile"}


def scenario_from_dict(doc: Mapping) -> Scenario:
    """Validate a parsed scenario document and build a :class:`Scenario`."""
    doc = _keys(doc, "<root>", TOP_LEVEL_KEYS, {"system", "interaction", "time_grid"})
    hbar = _number(doc.get("hbar", 1.0), "hbar")
    if hbar <= 0:
        raise ValidationError("must be positive", "hbar")

    sysd = _keys(doc["system"], "system", {"hamiltonian", "initial_state"}, {"hamiltonian"})
    h_sys = _hermitian(sysd["hamiltonian"], "system.hamiltonian", 2)
    psi_sys = _state(sysd.get("initial_state", [1, 0]), "system.initial_state", 2)

    envd = doc.get("environment", {"dim": 1})
    h_env, qubits = _environment(envd)
    d = h_env.dim
    default_env = "zero" if qubits is not None else [1] + [0] * (d - 1)
    psi_env = _state(envd.get("initial_state", default_env), "environment.initial_state", d, qubits)

    intd = _keys(
        doc["interaction"],
        "interaction",
        {"mode", "system_operator", "environment_operator", "coupling", "off_diagonal"},
        {"mode", "system_operator"},
    )
    mode = intd["mode"]
    if mode not in ("phase", "bath"):
        raise ValidationError(f"unknown mode {mode!r} (phase or bath)", "interaction.mode")
    a_op = _hermitian(intd["system_operator"], "interaction.system_operator", 2)
    if mode == "phase":
        if "environment_operator" in intd:
            raise ValidationError("phase mode uses the identity; omit this key", "interaction.environment_operator")
        b_op = Operator.identity(d)
    else:
        if "environment_operator" not in intd:
            raise ValidationError("bath mode requires an environment operator", "interaction.environment_operator")
        raw = intd["environment_operator"]
        if isinstance(raw, Mapping):
            bd = _keys(raw, "interaction.environment_operator", {"z_couplings"}, {"z_couplings"})
            if qubits is None:
                raise ValidationError(
                    "z_couplings needs a qubit environment", "interaction.environment_operator"
                )
            gz = _per_qubit(bd["z_couplings"], "interaction.environment_operator.z_couplings", qubits)
            b_op = Operator(qubit_sum(gz, PAULI_Z))
        else:
            b_op = _hermitian(raw, "interaction.environment_operator", d)
    coupling = _coupling(intd.get("coupling", 1.0), "interaction.coupling")
    eps = _number(intd.get("off_diagonal", 0.0), "interaction.off_diagonal")
    if eps < 0:
        raise ValidationError("must be non-negative", "interaction.off_diagonal")
    interaction = InteractionSpec(mode, a_op, b_op, coupling, eps)

    gd = _keys(doc["time_grid"], "time_grid", {"t0", "t_end", "steps"}, {"t_end", "steps"})
    steps = gd["steps"]
    if isinstance(steps, bool) or not isinstance(steps, int):
        raise ValidationError("expected an integer", "time_grid.steps")
    grid = TimeGrid(_number(gd.get("t0", 0.0), "time_grid.t0"), _number(gd["t_end"], "time_grid.t_end"), steps)

    theta = _theta_spec(doc.get("theta_profile", {}))
    return Scenario(h_sys, h_env, interaction, grid, psi_sys, psi_env, theta, hbar)


def load_scenario(text: str) -> Scenario:
    """Parse a YAML scenario document."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ValidationError(f"malformed document: {exc}", "<root>") from None
    if not isinstance(doc, Mapping):
        raise ValidationError("document must be a mapping", "<root>")
    return scenario_from_dict(doc)


def _pairs(arr: np.ndarray):
    if arr.ndim == 1:
        return [[float(z.real), float(z.imag)] for z in arr]
    return [_pairs(row) for row in arr]


def scenario_to_dict(s: Scenario) -> dict[str, Any]:
    """Canonical document for ``s``: every matrix and state written out explicitly."""
    spec = s.theta_profile
    theta: dict[str, Any] = {"kind": spec.kind, "quadrature": spec.quadrature,
                             "nodes": spec.nodes if spec.nodes is not None else "auto"}
    if spec.kind == "gaussian":
        theta.update(center=spec.center, width=spec.width)
    if spec.kind == "discrete":
        theta.update(thetas=list(spec.thetas), amplitudes=_pairs(np.asarray(spec.amplitudes)))
    c = s.interaction.coupling
    coupling: Any = c.values[0] if c.is_constant else [[a, v] for a, v in zip(c.starts, c.values)]
    interaction: dict[str, Any] = {
        "mode": s.interaction.mode,
        "system_operator": _pairs(s.interaction.system_operator.data),
        "coupling": coupling,
        "off_diagonal": s.interaction.off_diagonal,
    }
    if s.interaction.mode == "bath":
        interaction["environment_operator"] = _pairs(s.interaction.environment_operator.data)
    return {
        "hbar": s.hbar,
        "system": {
            "hamiltonian": _pairs(s.system_hamiltonian.data),
            "initial_state": _pairs(s.initial_system.data),
        },
        "environment": {
            "hamiltonian": _pairs(s.environment_hamiltonian.data),
            "initial_state": _pairs(s.initial_environment.data),
        },
        "interaction": interaction,
        "time_grid": {"t0": s.time_grid.t0, "t_end": s.time_grid.t_end, "steps": s.time_grid.steps},
        "theta_profile": theta,
    }


def dump_scenario(s: Scenario) -> str:
    return yaml.safe_dump(scenario_to_dict(s), sort_keys=False, default_flow_style=None)


def scenarios_equal(a: Scenario, b: Scenario) -> bool:
    return scenario_to_dict(a) == scenario_to_dict(b)
