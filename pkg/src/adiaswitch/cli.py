"""Command-line scenario runner.

``adiaswitch run --config scenario.json [--out DIR]`` executes one experiment
and writes ``report.json`` plus CSV tables; ``adiaswitch validate --problem
FILE`` loads a problem and certifies its spectral hypotheses.  Exit status is
0 on pass, 1 when the experiment ran but its check failed, 2 on bad input.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .degeneracy import build_initial_basis, expansion_check, second_order_lift
from .errors import (
    AdiaswitchError,
    ConfigParse,
    DegeneracyMismatch,
    ExperimentFailure,
    NonSquare,
    AsymmetryTooLarge,
    ParseError,
    ProblemLoad,
)
from .gml import (
    gap_diagnostics,
    geometric_eigenstate,
    gml_ratio,
    gml_sweep,
    multistep_gml,
    phase_free_distance,
)
from .io import load_problem, shipped_problem_path, write_json
from .operators import check_assumptions
from .switching import profile_from_config

log = logging.getLogger("adiaswitch")

CONFIG_KEYS = {"problem", "profile", "experiment", "parameters", "outputDir"}

# allowed parameters and their defaults, per experiment
EXPERIMENTS = {
    "assumptions": {"lamStar": 0.01},
    "basis": {"lift": None, "groupTol": 1e-10, "lambdas": None, "minSlope": 1.9},
    "geometric": {"j": 0, "residualTol": 1e-5, "truncationTol": 1e-8},
    "gml": {"j": 0, "epsilon": 0.1, "kind": "full", "tol": 1e-6, "residualTol": 1e-2},
    "sweep": {
        "j": 0,
        "epsilons": [0.4, 0.2, 0.1, 0.05, 0.025],
        "kind": "full",
        "tol": 1e-6,
        "adiabaticErrors": False,
        "minSlope": 0.33,
    },
    "multistep": {
        "j": 0,
        "breakpoints": [0.0, 0.5, 1.0],
        "epsilon": 0.05,
        "kind": "full",
        "tol": 1e-6,
        "residualTol": 1e-2,
    },
    "gaps": {"tStart": -10.0, "tEnd": 0.0, "points": 201},
    "divergence-demo": {
        "j": 0,
        "psi": None,
        "epsilons": [0.1, 0.05, 0.025, 0.0125],
        "threshold": 0.1,
    },
}


@dataclass
class ScenarioConfig:
    problem_path: Path
    profile: dict
    experiment: str
    parameters: dict
    output_dir: Path
    provenance: dict = field(default_factory=dict)


def parse_config(data: dict, base: Path, out_override=None) -> ScenarioConfig:
    if not isinstance(data, dict):
        raise ConfigParse("scenario config must be a JSON object")
    unknown = set(data) - CONFIG_KEYS
    if unknown:
        raise ConfigParse(f"unknown config keys: {sorted(unknown)}")
    for key in ("problem", "experiment"):
        if key not in data:
            raise ConfigParse(f"missing {key!r}")
    exp = data["experiment"]
    if exp not in EXPERIMENTS:
        raise ConfigParse(f"unknown experiment {exp!r}; choose from {sorted(EXPERIMENTS)}")
    params = data.get("parameters", {}) or {}
    if not isinstance(params, dict):
        raise ConfigParse("parameters must be an object")
    extra = set(params) - set(EXPERIMENTS[exp])
    if extra:
        raise ConfigParse(f"unknown parameters for {exp}: {sorted(extra)}")
    merged = dict(EXPERIMENTS[exp])
    merged.update(params)
    provenance = {k: ("config" if k in params else "default") for k in merged}
    _validate_parameters(exp, merged)

    problem = str(data["problem"])
    if problem.startswith("shipped:"):
        problem_path = shipped_problem_path(problem.split(":", 1)[1])
    else:
        problem_path = Path(problem)
        if not problem_path.is_absolute():
            problem_path = base / problem_path
    profile = data.get("profile", {"kind": "exponential"})
    try:
        profile_from_config(profile)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigParse(f"bad profile: {exc}") from None
    out = out_override or data.get("outputDir") or "adiaswitch-out"
    out = Path(out)
    if not out.is_absolute() and out_override is None:
        out = base / out
    return ScenarioConfig(problem_path, profile, exp, merged, out, provenance)


def _validate_parameters(exp: str, p: dict) -> None:
    def eps_list(key, minimum):
        vals = p[key]
        if not isinstance(vals, list) or len(vals) < minimum:
            raise ConfigParse(f"{key} needs at least {minimum} values")
        if any(not isinstance(x, (int, float)) or x <= 0 for x in vals):
            raise ConfigParse(f"{key} must be positive numbers")
        if any(b >= a for a, b in zip(vals, vals[1:])):
            raise ConfigParse(f"{key} must be strictly decreasing")

    if exp in ("sweep", "divergence-demo"):
        eps_list("epsilons", 4)
    if "kind" in p and p["kind"] not in ("full", "adiabatic"):
        raise ConfigParse("kind must be 'full' or 'adiabatic'")
    if "epsilon" in p and not (isinstance(p["epsilon"], (int, float)) and p["epsilon"] > 0):
        raise ConfigParse("epsilon must be positive")
    if "j" in p and (not isinstance(p["j"], int) or p["j"] < 0):
        raise ConfigParse("j must be a non-negative integer")
    if exp == "multistep":
        bp = p["breakpoints"]
        if not isinstance(bp, list) or len(bp) < 2 or bp[0] != 0 or bp[-1] != 1:
            raise ConfigParse("breakpoints must run from 0 to 1")
        if any(b <= a for a, b in zip(bp, bp[1:])):
            raise ConfigParse("breakpoints must increase strictly")
    if exp == "gaps" and not (p["tStart"] < p["tEnd"] <= 0 and int(p["points"]) >= 2):
        raise ConfigParse("gaps needs tStart < tEnd <= 0 and at least 2 points")


def _basis(problem, tol=1e-10, lift=None):
    basis = build_initial_basis(problem, tol)
    if lift is None:
        lift = basis.residual_degeneracy
    if lift:
        basis = second_order_lift(problem, basis, tol)
    return basis


def _check_label(problem, j):
    if j >= problem.degeneracy:
        raise ConfigParse(f"label {j} out of range for degeneracy {problem.degeneracy}")


def _dense_eigvec(problem, j):
    w, q = np.linalg.eigh(problem.hamiltonian(1.0))
    return q[:, problem.offset + j]


def run_experiment(cfg: ScenarioConfig, problem, profile) -> tuple[bool, dict]:
    p = cfg.parameters
    out = cfg.output_dir
    exp = cfg.experiment
    if "j" in p:
        _check_label(problem, p["j"])

    if exp == "assumptions":
        rep = check_assumptions(problem, profile=profile, lam_star=p["lamStar"])
        summary = rep.as_dict()
        summary["gap_estimate"] = rep.min_global_gap
        return rep.passed, summary

    if exp == "basis":
        basis = _basis(problem, p["groupTol"], p["lift"])
        lams = p["lambdas"] or list(np.geomspace(1e-3, 5e-2, 8))
        series = expansion_check(problem, basis, lams)
        series.to_csv(out / "series.csv")
        slopes = series.first_slopes
        ok = bool(np.all(slopes >= p["minSlope"]) or "first-order residuals vanish identically" in series.notes)
        return ok, {
            "first_shifts": basis.first_shifts,
            "second_shifts": basis.second_shifts,
            "residual_groups": [list(g) for g in basis.residual_groups],
            "lifted": basis.lifted,
            "first_slopes": slopes,
            "second_slopes": series.second_slopes,
            "notes": list(series.notes),
        }

    if exp == "geometric":
        basis = _basis(problem)
        vec, energy = geometric_eigenstate(problem, profile, basis, p["j"], tol=p["truncationTol"])
        from .gml import eigen_residual

        res, _ = eigen_residual(problem.hamiltonian(1.0), vec)
        ref = _dense_eigvec(problem, p["j"])
        overlap = abs(np.vdot(ref, vec)) / np.linalg.norm(vec)
        return res <= p["residualTol"], {
            "energy": energy,
            "eigen_residual": res,
            "overlap_with_dense_eigenvector": overlap,
        }

    if exp == "gml":
        basis = _basis(problem)
        o = gml_ratio(problem, profile, basis, p["j"], p["epsilon"], p["kind"], tol=p["tol"])
        return o.eigen_residual <= p["residualTol"], o.summary()

    if exp == "sweep":
        basis = _basis(problem)
        rec = gml_sweep(
            problem, profile, basis, p["j"], p["epsilons"], kind=p["kind"], tol=p["tol"],
            adiabatic_errors=p["adiabaticErrors"],
        )
        rec.to_csv(out / "sweep.csv")
        ok = rec.deltas_decreasing and not rec.errors
        if p["adiabaticErrors"]:
            ok = ok and rec.fitted_slope >= p["minSlope"]
        summary = rec.summary()
        summary["final_eigen_residual"] = rec.outcomes[-1].eigen_residual if rec.outcomes[-1] else None
        rec.write_json(out / "sweep.json", {"passed": ok})
        return ok, summary

    if exp == "multistep":
        basis = _basis(problem)
        o = multistep_gml(problem, profile, basis, p["j"], p["breakpoints"], p["epsilon"], p["kind"], tol=p["tol"])
        summary = o.summary()
        summary["stage_denominators_abs"] = [abs(d) for d in o.stage_denominators]
        return o.eigen_residual <= p["residualTol"], summary

    if exp == "gaps":
        t = np.linspace(p["tStart"], p["tEnd"], int(p["points"]))
        table = gap_diagnostics(problem, profile, t)
        table.to_csv(out / "gaps.csv")
        return True, table.summary()

    if exp == "divergence-demo":
        basis = _basis(problem)
        if p["psi"] is None:
            psi = basis.vectors.sum(axis=1)
        else:
            psi = np.array([complex(a, b) for a, b in p["psi"]])
        psi = psi / np.linalg.norm(psi)
        generic = gml_sweep(problem, profile, basis, p["j"], p["epsilons"], psi=psi)
        eigen = gml_sweep(problem, profile, basis, p["j"], p["epsilons"])
        generic.to_csv(out / "generic.csv")
        eigen.to_csv(out / "eigenvector.csv")
        floor = float(np.nanmin(generic.cauchy_deltas))
        no_limit = floor >= p["threshold"]
        converging = bool(eigen.deltas_decreasing or np.nanmax(eigen.cauchy_deltas) < 1e-8)
        verdict = "no-limit" if no_limit else "inconclusive"
        return no_limit and converging, {
            "verdict": verdict,
            "generic_min_delta": floor,
            "generic_deltas": generic.cauchy_deltas,
            "eigenvector_deltas": eigen.cauchy_deltas,
            "eigenvector_converges": converging,
            "phase_free_spread": [
                phase_free_distance(a.state, b.state)
                for a, b in zip(generic.outcomes[:-1], generic.outcomes[1:])
            ],
        }

    raise ConfigParse(f"unknown experiment {exp!r}")  # pragma: no cover


def run_scenario(cfg: ScenarioConfig) -> tuple[int, dict]:
    """Run one scenario; returns the exit status and the written report."""
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    report = {
        "version": __version__,
        "experiment": cfg.experiment,
        "problem": str(cfg.problem_path),
        "profile": cfg.profile,
        "parameters": cfg.parameters,
        "tolerances": {k: {"value": v, "source": cfg.provenance.get(k)} for k, v in cfg.parameters.items()},
    }
    try:
        problem = load_problem(cfg.problem_path)
        profile = profile_from_config(cfg.profile)
    except (ParseError, ProblemLoad, DegeneracyMismatch, NonSquare, AsymmetryTooLarge) as exc:
        report.update(passed=False, status="input-error", error=f"{type(exc).__name__}: {exc}")
        write_json(cfg.output_dir / "report.json", report)
        return 2, report
    try:
        passed, summary = run_experiment(cfg, problem, profile)
    except ConfigParse as exc:
        report.update(passed=False, status="input-error", error=f"ConfigParse: {exc}")
        write_json(cfg.output_dir / "report.json", report)
        return 2, report
    except AdiaswitchError as exc:
        failure = ExperimentFailure(f"{type(exc).__name__}: {exc}")
        report.update(passed=False, status="experiment-failure", error=str(failure))
        write_json(cfg.output_dir / "report.json", report)
        return 1, report
    report.update(passed=bool(passed), status="pass" if passed else "fail", summary=summary)
    write_json(cfg.output_dir / "report.json", report)
    return (0 if passed else 1), report


def _cmd_run(args) -> int:
    path = Path(args.config)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 2
    except json.JSONDecodeError as exc:
        print(f"error: config is not valid JSON: {exc}", file=sys.stderr)
        return 2
    try:
        cfg = parse_config(data, path.parent, Path(args.out) if args.out else None)
    except (ConfigParse, ProblemLoad) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    log.info("running %s on %s", cfg.experiment, cfg.problem_path)
    status, report = run_scenario(cfg)
    verdict = report.get("status")
    print(f"{cfg.experiment}: {verdict} (report in {cfg.output_dir / 'report.json'})")
    if report.get("error"):
        print(report["error"], file=sys.stderr)
    return status


def _cmd_validate(args) -> int:
    try:
        problem = load_problem(args.problem)
    except (ParseError, ProblemLoad, DegeneracyMismatch, NonSquare, AsymmetryTooLarge) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    rep = check_assumptions(problem)
    summary = {
        "dim": problem.dim,
        "ground_energy": problem.ground_energy,
        "degeneracy": problem.degeneracy,
        **rep.as_dict(),
    }
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_json(out / "validate.json", summary)
    for key in ("dim", "ground_energy", "degeneracy", "min_global_gap", "passed"):
        value = summary.get(key)
        print(f"{key}: {value:.6g}" if isinstance(value, float) and not math.isnan(value) else f"{key}: {value}")
    return 0 if rep.passed else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adiaswitch", description=__doc__.splitlines()[0])
    parser.add_argument("--verbose", action="store_true", help="log progress to stderr")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a scenario config")
    run.add_argument("--config", required=True)
    run.add_argument("--out", help="output directory (overrides outputDir)")
    val = sub.add_parser("validate", help="load a problem file and check its hypotheses")
    val.add_argument("--problem", required=True)
    val.add_argument("--out", help="also write validate.json here")
    for p in (run, val):
        p.add_argument("--verbose", action="store_true", default=argparse.SUPPRESS)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(name)s: %(message)s",
    )
    if args.command == "run":
        return _cmd_run(args)
    return _cmd_validate(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
