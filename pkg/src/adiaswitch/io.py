"""JSON file formats for matrices, problems and propagator dumps.

A matrix is ``{"dim": d, "entries": [[re, im], ...]}`` with ``d * d``
pairs in row-major order.  Floats use the shortest repr that round-trips
(at most 17 significant digits), so a load/save cycle is exact.
"""

from __future__ import annotations

import json
import math
import re
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import AdiaswitchError, ParseError, ProblemLoad
from .operators import PerturbationProblem, make_problem, validate_hermitian

PROBLEM_KEYS = {"h0", "v", "groundEnergy", "degeneracy", "gapFloor", "name", "description"}


def _fmt(x: float) -> float:
    x = float(x)
    if not math.isfinite(x):
        raise ValueError("non-finite values cannot be serialized")
    return x


def matrix_to_dict(m) -> dict:
    m = np.asarray(m, dtype=complex)
    return {
        "dim": int(m.shape[0]),
        "entries": [[_fmt(float(z.real)), _fmt(float(z.imag))] for z in m.reshape(-1)],
    }


def matrix_from_dict(data) -> np.ndarray:
    if not isinstance(data, dict) or "dim" not in data or "entries" not in data:
        raise ParseError("a matrix needs 'dim' and 'entries'")
    dim = data["dim"]
    entries = data["entries"]
    if not isinstance(dim, int) or dim < 1:
        raise ParseError(f"invalid dim {dim!r}")
    if not isinstance(entries, list) or len(entries) != dim * dim:
        raise ParseError(f"expected {dim * dim} entries for dim {dim}, got {len(entries) if isinstance(entries, list) else entries!r}")
    try:
        arr = np.array(
            [complex(float(re), float(im)) for re, im in entries], dtype=complex
        )
    except (TypeError, ValueError) as exc:
        raise ParseError(f"entries must be [re, im] pairs: {exc}") from None
    if not np.all(np.isfinite(arr)):
        raise ParseError("entries must be finite")
    return arr.reshape(dim, dim)


_PAIR = re.compile(r"\[\s*(-?[0-9][0-9.eE+-]*)\s*,\s*(-?[0-9][0-9.eE+-]*)\s*\]")


def to_json_text(obj) -> str:
    """Indented JSON with each ``[re, im]`` pair kept on one line."""
    text = json.dumps(obj, indent=1, allow_nan=False)
    return _PAIR.sub(r"[\1, \2]", text) + "\n"


def _write_json(path, obj) -> None:
    Path(path).write_text(to_json_text(obj))


def problem_from_dict(data) -> PerturbationProblem:
    if not isinstance(data, dict):
        raise ParseError("a problem file must hold a JSON object")
    unknown = set(data) - PROBLEM_KEYS
    if unknown:
        raise ParseError(f"unknown problem keys: {sorted(unknown)}")
    for key in ("h0", "v"):
        if key not in data:
            raise ParseError(f"missing {key!r}")
    h0 = validate_hermitian(matrix_from_dict(data["h0"]))
    v = validate_hermitian(matrix_from_dict(data["v"]))
    kwargs = {}
    if data.get("groundEnergy") is not None:
        kwargs["ground_energy"] = float(data["groundEnergy"])
    if data.get("degeneracy") is not None:
        kwargs["degeneracy"] = int(data["degeneracy"])
    if data.get("gapFloor") is not None:
        kwargs["gap_floor"] = float(data["gapFloor"])
    return make_problem(h0, v, **kwargs)


def problem_to_dict(problem: PerturbationProblem) -> dict:
    return {
        "h0": matrix_to_dict(problem.h0.entries),
        "v": matrix_to_dict(problem.v.entries),
        "groundEnergy": _fmt(problem.ground_energy),
        "degeneracy": problem.degeneracy,
        "gapFloor": _fmt(problem.gap_floor),
    }


def load_problem(path) -> PerturbationProblem:
    """Read and validate a problem file.

    Malformed content raises :class:`ParseError`; Hermiticity and degeneracy
    violations propagate with their own types.
    """
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ProblemLoad(f"cannot read {path}: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from None
    return problem_from_dict(data)


def save_problem(problem: PerturbationProblem, path) -> None:
    _write_json(path, problem_to_dict(problem))


def shipped_problems() -> list[str]:
    root = resources.files("adiaswitch") / "problems"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def shipped_problem_path(name: str) -> Path:
    path = Path(str(resources.files("adiaswitch") / "problems" / f"{name}.json"))
    if not path.exists():
        raise ProblemLoad(f"no shipped problem named {name!r}; have {shipped_problems()}")
    return path


def load_shipped(name: str) -> PerturbationProblem:
    return load_problem(shipped_problem_path(name))


def dump_propagator(result, path) -> None:
    data = {"metadata": result.metadata(), "matrix": matrix_to_dict(result.unitary)}
    _write_json(path, data)


def load_propagator(path) -> tuple[dict, np.ndarray]:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read propagator dump {path}: {exc}") from None
    return data.get("metadata", {}), matrix_from_dict(data.get("matrix"))


def write_json(path, obj) -> None:
    """Write ``obj`` as JSON; numpy values are converted and NaN becomes null."""
    _write_json(path, _plain(obj))


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, complex):
        return [_plain(obj.real), _plain(obj.imag)]
    if isinstance(obj, AdiaswitchError):
        return f"{type(obj).__name__}: {obj}"
    return obj
