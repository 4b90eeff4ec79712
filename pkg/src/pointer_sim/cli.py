"""Command-line front end.

    pointer-sim <command> --scenario PATH --out DIR [--set key=value]... [--workers N]

Commands: run, branches, saddle-compare, orthogonality, decoherence, sweep,
validate. Data files are written atomically and are byte-identical for
identical inputs.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import itertools
import json
import math
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np
import yaml

from . import __version__
from .branches import (
    build_branch_family,
    numeric_stationary_points,
    pointer_family,
    saddle_point_state,
    saddle_point_vector,
    stationary_points,
    superpose_branches,
    theta_of_state,
    time_orthogonality,
    action_mixing_check,
)
from .errors import (
    CapacityError,
    DegeneracyError,
    PointerSimError,
    ResolutionError,
    UnsupportedProfileError,
    ValidationError,
)
from .linalg import kron_states
from .metrics import (
    decoherence_report,
    pointer_coherence,
    reduced_density_fast,
)
from .model import HALF_PI, Scenario, TimeGrid, scenario_from_dict, validate_non_demolition
from .propagators import evolve_exact, evolve_mean_field

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_CAPACITY = 3
EXIT_RESOLUTION = 4
EXIT_SWEEP_FAILED = 5

PRE_ASYMPTOTIC_ACTION = 1.0


# --------------------------------------------------------------------------
# documents and overrides
# --------------------------------------------------------------------------

def parse_value(text: str) -> Any:
    return yaml.safe_load(text)


def apply_override(doc: dict, key: str, value: Any) -> None:
    """Set a dotted path; the parent must already exist."""
    parts = key.split(".")
    node: Any = doc
    for i, part in enumerate(parts[:-1]):
        node = _step(node, part, ".".join(parts[: i + 1]))
    last = parts[-1]
    if isinstance(node, list):
        idx = _list_index(node, last, key)
        node[idx] = value
    elif isinstance(node, dict):
        node[last] = value
    else:
        raise ValidationError("override parent is not a mapping", key)


def _step(node, part, path):
    if isinstance(node, dict):
        if part not in node:
            raise ValidationError("no such section in the scenario document", path)
        return node[part]
    if isinstance(node, list):
        return node[_list_index(node, part, path)]
    raise ValidationError("cannot descend into a scalar", path)


def _list_index(node: list, part: str, path: str) -> int:
    try:
        idx = int(part)
    except ValueError:
        raise ValidationError("expected a list index", path) from None
    if not -len(node) <= idx < len(node):
        raise ValidationError("list index out of range", path)
    return idx


def parse_assignment(text: str) -> tuple[str, Any]:
    if "=" not in text:
        raise ValidationError(f"expected key=value, got {text!r}", "--set")
    key, raw = text.split("=", 1)
    return key.strip(), parse_value(raw)


def read_document(path: str | os.PathLike) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ValidationError(f"cannot read scenario: {exc.strerror}", str(path)) from None
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ValidationError(f"malformed document: {exc}", str(path)) from None
    if not isinstance(doc, dict):
        raise ValidationError("document must be a mapping", str(path))
    return doc


def document_hash(doc: dict) -> str:
    canonical = json.dumps(doc, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode()).hexdigest()


# --------------------------------------------------------------------------
# output
# --------------------------------------------------------------------------

def fmt(value: Any) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def csv_text(columns: Sequence[str], rows: Sequence[Sequence[Any]], schema: str) -> str:
    buf = io.StringIO()
    buf.write(f"# schema {schema}: " + ",".join(columns) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    return buf.getvalue()


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, (complex, np.complexfloating)):
        return [_jsonable(value.real), _jsonable(value.imag)]
    return value


def json_text(payload: dict) -> str:
    return json.dumps(_jsonable(payload), sort_keys=True, indent=2) + "\n"


def write_outputs(out_dir: Path, files: dict[str, str]) -> None:
    """Write every file via temp-then-rename; nothing is written if staging fails."""
    out_dir.mkdir(parents=True, exist_ok=True)
    staged = []
    try:
        for name, text in files.items():
            fd, tmp = tempfile.mkstemp(dir=out_dir, prefix=f".{name}.", suffix=".tmp")
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
            staged.append((tmp, out_dir / name))
    except BaseException:
        for tmp, _ in staged:
            os.unlink(tmp)
        raise
    for tmp, final in staged:
        os.replace(tmp, final)


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

class Context:
    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.doc = read_document(args.scenario)
        for item in args.set or []:
            key, value = parse_assignment(item)
            apply_override(self.doc, key, value)
        self.scenario = scenario_from_dict(self.doc)
        self.out = Path(args.out) if args.out else None

    def metadata(self) -> dict:
        return {
            "version": __version__,
            "command": self.args.command,
            "input_sha256": document_hash(self.doc),
            "overrides": list(self.args.set or []),
            "seed": self.args.seed,
        }


def cmd_run(ctx: Context) -> dict[str, str]:
    s = ctx.scenario
    theta = theta_of_state(s.initial_system, s)
    branch = evolve_mean_field(theta, s, s.initial_system)
    fam = pointer_family(s)
    exact = evolve_exact(kron_states(s.initial_system, s.initial_environment), s)
    overlap = np.abs(np.einsum("ti,ti->t", exact.states.conj(), branch.states))
    mf_err = 1.0 - overlap
    norms = np.linalg.norm(exact.states, axis=1)

    dim = exact.states.shape[1]
    columns = ["t", "lambda_up", "lambda_down", "lambda_branch"]
    for i in range(dim):
        columns += [f"re_psi_{i}", f"im_psi_{i}"]
    columns += ["norm", "mean_field_error"]
    rows = []
    for k, t in enumerate(exact.times):
        row = [t, fam.lambda_up.values[k], fam.lambda_down.values[k], branch.action.values[k]]
        for z in exact.states[k]:
            row += [z.real, z.imag]
        row += [norms[k], mf_err[k]]
        rows.append(row)
    summary = {
        "metadata": ctx.metadata(),
        "theta_initial": theta,
        "final": {
            "t": exact.times[-1],
            "lambda_up": fam.lambda_up.values[-1],
            "lambda_down": fam.lambda_down.values[-1],
            "lambda_branch": branch.action.values[-1],
        },
        "norm_max_deviation": float(np.max(np.abs(norms - 1.0))),
        "mean_field_error_max": float(np.max(mf_err)),
        "mean_field_error": mf_err.tolist(),
        "non_demolition": validate_non_demolition(s).as_dict(),
    }
    return {"timeseries.csv": csv_text(columns, rows, "timeseries"), "summary.json": json_text(summary)}


def cmd_branches(ctx: Context) -> dict[str, str]:
    s = ctx.scenario
    fam = build_branch_family(s)
    residuals = [action_mixing_check(fam, t) for t in fam.times]
    k = -1
    th = fam.thetas
    lam = fam.actions[:, k]
    mixed = np.cos(th) ** 2 * fam.lambda_up.values[k] + np.sin(th) ** 2 * fam.lambda_down.values[k]
    rows = [
        [th[i], fam.profile.amplitudes[i].real, fam.profile.amplitudes[i].imag,
         fam.profile.quad_weights[i], lam[i], mixed[i], abs(lam[i] - mixed[i])]
        for i in range(th.size)
    ]
    columns = ["theta", "re_c", "im_c", "quad_weight", "lambda_final", "lambda_mixing_law", "residual"]
    summary: dict[str, Any] = {
        "metadata": ctx.metadata(),
        "nodes": int(th.size),
        "quadrature": fam.profile.quadrature,
        "mixing_residual_max": float(max(residuals)),
        "non_demolition": validate_non_demolition(s).as_dict(),
    }
    try:
        report = stationary_points(fam, fam.times[-1])
        summary["stationary_points"] = [
            {"theta": p.theta, "lambda_second": p.lambda_second, "prefactor": p.prefactor,
             "half_prefactor": p.half_prefactor, "conjugate_prefactor": p.conjugate_prefactor}
            for p in report.points
        ]
        summary["sign_convention"] = report.sign_convention
    except DegeneracyError as exc:
        summary["stationary_points"] = str(exc)
    if th.size >= 4:
        summary["numeric_stationary_points"] = numeric_stationary_points(fam, fam.times[-1])
    return {"branches.csv": csv_text(columns, rows, "branches"), "summary.json": json_text(summary)}


def _weights(system: np.ndarray, s: Scenario) -> tuple[float, float]:
    up, down = s.pointer_basis
    norm2 = float(np.vdot(system, system).real)
    return abs(np.vdot(up, system)) ** 2 / norm2, abs(np.vdot(down, system)) ** 2 / norm2


def saddle_rows(s: Scenario, fam=None) -> list[list[Any]]:
    fam = fam or build_branch_family(s)
    d = s.env_dim
    rows = []
    for k, t in enumerate(fam.times):
        delta = (fam.lambda_up.values[k] - fam.lambda_down.values[k]) / s.hbar
        sup = superpose_branches(fam, t)
        wq_up, wq_down = _weights(sup.system, s)
        regime = "pre-asymptotic" if abs(delta) < PRE_ASYMPTOTIC_ACTION else "asymptotic"
        ratio = math.nan
        try:
            raw = saddle_point_vector(fam, t)
            if np.any(raw):
                ratio = sup.norm / np.linalg.norm(raw)
        except DegeneracyError:
            pass
        try:
            state = saddle_point_state(fam, t).data
        except DegeneracyError:
            state = None
        if state is None:
            fid = ws_up = ws_down = math.nan
        else:
            fid = abs(np.vdot(sup.vector, state)) / sup.norm
            ws_up, ws_down = _weights(state.reshape(2, d) @ np.conj(fam.environment_states[k]), s)
        rows.append([t, delta, fid, ratio, wq_up, ws_up, wq_down, ws_down, regime])
    return rows


SADDLE_COLUMNS = [
    "t", "delta_lambda_over_hbar", "fidelity", "norm_ratio",
    "weight_up_quadrature", "weight_up_saddle", "weight_down_quadrature", "weight_down_saddle", "regime",
]


def cmd_saddle_compare(ctx: Context) -> dict[str, str]:
    rows = saddle_rows(ctx.scenario)
    fids = [r[2] for r in rows if r[-1] == "asymptotic" and not math.isnan(r[2])]
    summary = {
        "metadata": ctx.metadata(),
        "rows": len(rows),
        "final_fidelity": rows[-1][2],
        "min_asymptotic_fidelity": min(fids) if fids else None,
    }
    return {"saddle_vs_quadrature.csv": csv_text(SADDLE_COLUMNS, rows, "saddle_vs_quadrature"),
            "summary.json": json_text(summary)}


def parse_angle(text: str) -> float:
    """Float or a simple multiple of pi such as ``pi/4`` or ``3*pi/8``."""
    t = text.strip().replace(" ", "")
    if "pi" not in t:
        return float(t)
    num, _, den = t.partition("/")
    factor = num.replace("pi", "").rstrip("*") or "1"
    value = float(factor) * math.pi
    return value / float(den) if den else value


DEFAULT_PAIRS = ((0.0, HALF_PI), (0.0, math.pi / 4), (math.pi / 4, HALF_PI), (0.0, math.pi / 3))


def orthogonality_rows(s: Scenario, pairs, windows=None) -> list[list[Any]]:
    times = s.time_grid.times
    if windows is None:
        windows = [times[max(1, round(j * (len(times) - 1) / 8))] - times[0] for j in range(1, 9)]
    fam = pointer_family(s)
    constant = s.interaction.coupling.is_constant and validate_non_demolition(s).passed
    lam_up, lam_down = fam.lambda_up.rate(), fam.lambda_down.rate()
    rows = []
    cache = {}
    for a, b in pairs:
        for th in (a, b):
            if th not in cache:
                cache[th] = evolve_mean_field(th, s)
        ba, bb = cache[a], cache[b]
        for T in windows:
            k = int(np.argmin(np.abs(times - (times[0] + T))))
            if k == 0:
                raise ValidationError(f"window {T} shorter than one time step", "--window")
            T_node = times[k] - times[0]
            avg = time_orthogonality(ba, bb, TimeGrid(times[0], times[k], 1))
            inst = abs(np.vdot(ba.states[k], bb.states[k]))
            if constant:
                rate = (math.cos(a) ** 2 - math.cos(b) ** 2) * (lam_up - lam_down)
                x = rate * T_node / (2 * s.hbar)
                pred = abs(math.cos(a - b)) * (abs(math.sin(x) / x) if x != 0 else 1.0)
            else:
                pred = math.nan
            rows.append([a, b, T_node, inst, abs(avg), pred, abs(abs(avg) - pred)])
    return rows


ORTHO_COLUMNS = ["theta", "theta_prime", "window_T", "instantaneous_overlap", "running_average",
                 "sinc_prediction", "abs_difference"]


def cmd_orthogonality(ctx: Context) -> dict[str, str]:
    pairs = DEFAULT_PAIRS
    if ctx.args.pair:
        pairs = []
        for item in ctx.args.pair:
            parts = item.split(",")
            if len(parts) != 2:
                raise ValidationError(f"expected theta,theta_prime got {item!r}", "--pair")
            pairs.append((parse_angle(parts[0]), parse_angle(parts[1])))
    windows = [float(w) for w in ctx.args.window] if ctx.args.window else None
    rows = orthogonality_rows(ctx.scenario, pairs, windows)
    summary = {"metadata": ctx.metadata(), "rows": len(rows),
               "max_abs_difference": max((r[-1] for r in rows if not math.isnan(r[-1])), default=None)}
    return {"overlap.csv": csv_text(ORTHO_COLUMNS, rows, "overlap"), "summary.json": json_text(summary)}


def cmd_decoherence(ctx: Context) -> dict[str, str]:
    s = ctx.scenario
    fam = pointer_family(s)
    rep = decoherence_report(fam)
    exact = evolve_exact(kron_states(s.initial_system, s.initial_environment), s)
    exact_coh = [abs(pointer_coherence(reduced_density_fast(psi, s.dims), s)) for psi in exact.states]
    rows = [
        [t, r.real, r.imag, abs(r), a.real, a.imag, abs(a), c, e]
        for t, r, a, c, e in zip(rep.times, rep.decoherence_factor, rep.time_averaged_factor,
                                 rep.coherence_magnitude, exact_coh)
    ]
    columns = ["t", "re_r", "im_r", "abs_r", "re_avg_r", "im_avg_r", "abs_avg_r",
               "coherence_saddle", "coherence_exact"]
    ratio = rep.tau_measured / rep.tau_estimate if rep.tau_estimate else math.nan
    summary = {
        "metadata": ctx.metadata(),
        "tau_estimate": rep.tau_estimate,
        "tau_measured": rep.tau_measured,
        "tau_single_rate": rep.tau_single_rate,
        "tau_ratio": ratio,
        "rates": list(rep.rates),
        "constant_coupling": s.interaction.coupling.is_constant,
    }
    return {"decoherence.csv": csv_text(columns, rows, "decoherence"), "summary.json": json_text(summary)}


def sweep_point(doc: dict) -> dict[str, Any]:
    """Evaluate one sweep grid point; errors are captured, never raised."""
    out: dict[str, Any] = {"status": "ok", "tau_estimate": math.nan, "tau_measured": math.nan,
                           "mean_field_error_max": math.nan, "saddle_fidelity_final": math.nan,
                           "delta_lambda_final": math.nan}
    try:
        s = scenario_from_dict(doc)
        theta = theta_of_state(s.initial_system, s)
        branch = evolve_mean_field(theta, s, s.initial_system)
        exact = evolve_exact(kron_states(s.initial_system, s.initial_environment), s)
        out["mean_field_error_max"] = float(
            np.max(1.0 - np.abs(np.einsum("ti,ti->t", exact.states.conj(), branch.states)))
        )
        fam = build_branch_family(s)
        rep = decoherence_report(fam, coherence=np.zeros(fam.times.size))
        out["tau_estimate"], out["tau_measured"] = rep.tau_estimate, rep.tau_measured
        t_end = fam.times[-1]
        out["delta_lambda_final"] = (fam.lambda_up.values[-1] - fam.lambda_down.values[-1]) / s.hbar
        sup = superpose_branches(fam, t_end)
        raw = saddle_point_vector(fam, t_end)
        out["saddle_fidelity_final"] = abs(np.vdot(sup.vector, raw)) / (sup.norm * np.linalg.norm(raw))
    except (PointerSimError, ValueError) as exc:
        out["status"] = f"error: {type(exc).__name__}: {exc}"
    return out


def cmd_sweep(ctx: Context) -> dict[str, str]:
    axes = []
    for item in ctx.args.grid or []:
        if "=" not in item:
            raise ValidationError(f"expected key=v1,v2,... got {item!r}", "--grid")
        key, raw = item.split("=", 1)
        values = [parse_value(v) for v in raw.split(",") if v.strip()]
        if not values:
            raise ValidationError("empty value list", f"--grid {key}")
        axes.append((key.strip(), values))
    if not axes:
        raise ValidationError("sweep needs at least one --grid axis", "--grid")

    points = list(itertools.product(*[vals for _, vals in axes]))
    docs = []
    for combo in points:
        doc = copy.deepcopy(ctx.doc)
        for (key, _), value in zip(axes, combo):
            apply_override(doc, key, value)
        docs.append(doc)

    workers = max(1, int(ctx.args.workers or 1))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(sweep_point, docs))
    else:
        results = [sweep_point(doc) for doc in docs]

    keys = ["tau_estimate", "tau_measured", "mean_field_error_max", "saddle_fidelity_final", "delta_lambda_final"]
    columns = ["index", *[k for k, _ in axes], "status", *keys]
    rows = []
    for i, (combo, res) in enumerate(zip(points, results)):
        rows.append([i, *[v if isinstance(v, str) else json.dumps(v) for v in combo], res["status"],
                     *[res[k] for k in keys]])
    ok = sum(r["status"] == "ok" for r in results)
    summary = {"metadata": ctx.metadata(), "points": len(points), "succeeded": ok,
               "axes": {k: v for k, v in axes}}
    files = {"sweep.csv": csv_text(columns, rows, "sweep"), "summary.json": json_text(summary)}
    if ok == 0:
        raise SweepFailed(files)
    return files


class SweepFailed(Exception):
    def __init__(self, files: dict[str, str]):
        self.files = files
        super().__init__("every sweep point failed")


def cmd_validate(ctx: Context) -> dict[str, str]:
    report = validate_non_demolition(ctx.scenario)
    payload = {"metadata": ctx.metadata(), "valid": True, "non_demolition": report.as_dict()}
    print(json_text(payload), end="")
    return {"validation.json": json_text(payload)} if ctx.out else {}


COMMANDS: dict[str, Callable[[Context], dict[str, str]]] = {
    "run": cmd_run,
    "branches": cmd_branches,
    "saddle-compare": cmd_saddle_compare,
    "orthogonality": cmd_orthogonality,
    "decoherence": cmd_decoherence,
    "sweep": cmd_sweep,
    "validate": cmd_validate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pointer-sim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--scenario", required=True, help="scenario YAML document")
        p.add_argument("--out", required=(name != "validate"), help="output directory")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a document field")
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--seed", type=int, default=0, help="recorded in metadata")
        if name == "orthogonality":
            p.add_argument("--pair", action="append", metavar="THETA,THETA2", help="e.g. 0,pi/4")
            p.add_argument("--window", action="append", metavar="T", help="averaging window length")
        if name == "sweep":
            p.add_argument("--grid", action="append", metavar="KEY=V1,V2", help="sweep axis")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        ctx = Context(args)
        files = COMMANDS[args.command](ctx)
    except SweepFailed as exc:
        write_outputs(Path(args.out), exc.files)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SWEEP_FAILED
    except ResolutionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RESOLUTION
    except CapacityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except (ValidationError, DegeneracyError, UnsupportedProfileError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    if files:
        write_outputs(ctx.out, files)
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
