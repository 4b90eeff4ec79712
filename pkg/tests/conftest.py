import math
from pathlib import Path

import numpy as np
import pytest

from pointer_sim.model import scenario_from_dict

ROOT = Path(__file__).resolve().parents[1]
SCENARIOS = ROOT / "scenarios"
GOLDEN = ["phase_minimal", "bath_3qubit", "perturbed"]

_ACCEPTANCE: list[str] = []


def record(criterion: int, passed: bool, detail: str) -> None:
    _ACCEPTANCE.append(f"[criterion {criterion}] {'PASS' if passed else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)


def pairs(arr):
    arr = np.asarray(arr, dtype=complex)
    if arr.ndim == 1:
        return [[float(z.real), float(z.imag)] for z in arr]
    return [pairs(row) for row in arr]


def phase_doc(g=1.0, t_end=2.0, steps=200, h_sys=(0.5, -0.5), a=(1.0, -1.0), **extra):
    doc = {
        "hbar": 1.0,
        "system": {"hamiltonian": [[h_sys[0], 0], [0, h_sys[1]]], "initial_state": [1, 0]},
        "environment": {"dim": 1},
        "interaction": {"mode": "phase", "system_operator": [[a[0], 0], [0, a[1]]], "coupling": g},
        "time_grid": {"t0": 0.0, "t_end": t_end, "steps": steps},
    }
    for key, value in extra.items():
        doc[key] = value
    return doc


def phase_scenario(**kw):
    return scenario_from_dict(phase_doc(**kw))


def random_unitary(rng, n):
    z = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_hermitian(rng, n, scale=1.0):
    z = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return scale * 0.5 * (z + z.conj().T)


def random_state(rng, n):
    v = rng.normal(size=n) + 1j * rng.normal(size=n)
    return v / np.linalg.norm(v)


def random_non_demolition_doc(rng, mode="bath", d=None, steps=200, t_end=3.0):
    """Random scenario with A diagonal in the eigenbasis of a random h_sys."""
    u = random_unitary(rng, 2)
    e = np.sort(rng.uniform(-1, 1, 2))
    while e[1] - e[0] < 0.1:
        e = np.sort(rng.uniform(-1, 1, 2))
    h_sys = u @ np.diag(e) @ u.conj().T
    a = u @ np.diag(rng.uniform(-1.5, 1.5, 2)) @ u.conj().T
    d = d or int(rng.integers(1, 5))
    interaction = {
        "mode": mode,
        "system_operator": pairs(0.5 * (a + a.conj().T)),
        "coupling": float(rng.uniform(0.2, 2.0)),
    }
    if mode == "bath":
        interaction["environment_operator"] = pairs(random_hermitian(rng, d))
    return {
        "hbar": float(rng.uniform(0.5, 2.0)),
        "system": {"hamiltonian": pairs(0.5 * (h_sys + h_sys.conj().T)), "initial_state": pairs(random_state(rng, 2))},
        "environment": {"hamiltonian": pairs(random_hermitian(rng, d)), "initial_state": pairs(random_state(rng, d))},
        "interaction": interaction,
        "time_grid": {"t0": float(rng.uniform(-1, 1)), "t_end": 0.0, "steps": steps},
    }


def fix_grid(doc, t_end_offset):
    doc["time_grid"]["t_end"] = doc["time_grid"]["t0"] + t_end_offset
    return doc


@pytest.fixture
def rng():
    return np.random.default_rng(20261017)


@pytest.fixture
def phase():
    return phase_scenario()


QUARTER_PI = math.pi / 4
