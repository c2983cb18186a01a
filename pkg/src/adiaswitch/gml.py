"""Gell-Mann--Low ratios and the studies built on them."""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import AdiaswitchError, StageConditionViolated, VanishingDenominator
from .operators import HermitianOperator, PerturbationProblem, spectral_frame, spectral_norm
from .propagation import DEFAULT_DLAM, Kind, evolve_from_past, kato_evolve
from .switching import truncation_time

DENOMINATOR_FLOOR = 1e-8
CONDITION_MARGIN = 1e-6
WORKERS_ENV = "ADIASWITCH_WORKERS"


@dataclass(frozen=True, eq=False)
class GmlOutcome:
    state: np.ndarray
    denominator: complex
    epsilon: float | None
    eigen_residual: float
    rayleigh_energy: float
    condition_norm: float
    kind: str = "full"
    degenerate: bool = False
    cauchy_delta: float = 0.0
    stage_denominators: tuple = ()

    @property
    def unit_state(self) -> np.ndarray:
        return self.state / np.linalg.norm(self.state)

    def summary(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "kind": self.kind,
            "denominator_abs": abs(self.denominator),
            "eigen_residual": self.eigen_residual,
            "rayleigh_energy": self.rayleigh_energy,
            "condition_norm": self.condition_norm,
            "degenerate": self.degenerate,
            "truncation_cauchy_delta": self.cauchy_delta,
        }


def eigen_residual(h, vec) -> tuple[float, float]:
    """Relative eigen-residual of ``vec`` for ``h`` and its Rayleigh quotient."""
    h = np.asarray(h)
    vec = np.asarray(vec, dtype=complex)
    nrm = np.linalg.norm(vec)
    if nrm == 0:
        raise ValueError("zero vector has no Rayleigh quotient")
    x = vec / nrm
    hx = h @ x
    energy = float(np.real(x.conj() @ hx))
    return float(np.linalg.norm(hx - energy * x)), energy


def phase_free_distance(a, b) -> float:
    """``min_theta || a/|a| - exp(i theta) b/|b| ||``."""
    a = np.asarray(a) / np.linalg.norm(a)
    b = np.asarray(b) / np.linalg.norm(b)
    return math.sqrt(max(0.0, 2.0 - 2.0 * abs(np.vdot(a, b))))


def align_phase(vec, reference) -> np.ndarray:
    """Unit vector along ``vec`` rotated so its overlap with ``reference`` is real positive."""
    vec = np.asarray(vec, dtype=complex)
    vec = vec / np.linalg.norm(vec)
    ov = np.vdot(reference, vec)
    if abs(ov) < 1e-12:
        return vec
    return vec * (abs(ov) / ov)


def target_projector(problem: PerturbationProblem, j: int, lam: float = 1.0) -> np.ndarray:
    """Projector of tracked label ``j`` at ``lam`` (its cluster when unresolved)."""
    return spectral_frame(problem, lam).level_projector(j)


def check_ratio_condition(problem, basis, j: int, margin: float = CONDITION_MARGIN) -> tuple[bool, float]:
    """Distance between the start projector of label ``j`` and its target at ``lam = 1``.

    When the label sits in an unresolved cluster at ``lam = 1`` the target is
    the line through the cluster component of ``phi_j0``.
    """
    phi = basis.vectors[:, j]
    frame = spectral_frame(problem, 1.0)
    target = frame.level_projector(j)
    if len(frame.groups[frame.group_of(j)]) > 1:
        x = target @ phi
        nx = np.linalg.norm(x)
        if nx < 1e-14:
            return False, 1.0
        target = np.outer(x, x.conj()) / nx**2
    norm = spectral_norm(np.outer(phi, phi.conj()) - target)
    return norm < 1.0 - margin, norm


def geometric_eigenstate(problem, profile, basis, j: int, tol: float = 1e-8,
                         step: float = 0.01, dlam: float = DEFAULT_DLAM):
    """Kato transport of ``phi_j0`` from the truncated past to ``t = 0``.

    Returns ``(vector, rayleigh_energy)``; the vector lies in the eigenspace
    of ``H0 + V`` reached by label ``j``.
    """
    t0 = truncation_time(profile, tol)
    res = kato_evolve(problem, profile, t0, 0.0, step=step, dlam=dlam)
    vec = res.unitary @ basis.vectors[:, j]
    _, energy = eigen_residual(problem.hamiltonian(1.0), vec)
    return vec, energy


def _ratio(problem, profile, psi, ref, eps, kind, tol, floor, condition_norm, step=None, backend=None):
    past = evolve_from_past(problem, profile, eps, kind, tol=tol, step=step, backend=backend)
    image = past.unitary @ psi
    den = complex(np.vdot(ref, image))
    if abs(den) < floor:
        raise VanishingDenominator(
            f"|<ref|U psi>| = {abs(den):.3g} is below the floor {floor:.1g}", denominator=den
        )
    state = image / den
    res, energy = eigen_residual(problem.hamiltonian(1.0), state)
    return GmlOutcome(
        state=state,
        denominator=den,
        epsilon=eps,
        eigen_residual=res,
        rayleigh_energy=energy,
        condition_norm=condition_norm,
        kind=Kind(kind).value,
        cauchy_delta=past.cauchy_delta,
    )


def gml_ratio(problem, profile, basis, j: int, eps: float, kind="full", tol: float = 1e-6,
              floor: float = DENOMINATOR_FLOOR, psi=None, step=None, backend=None) -> GmlOutcome:
    """``U_int(0, -inf) psi / <psi | U_int(0, -inf) psi>`` with ``psi = phi_j0`` by default.

    Raises :class:`VanishingDenominator` below ``floor``.
    """
    _, norm = check_ratio_condition(problem, basis, j)
    psi = basis.vectors[:, j] if psi is None else np.asarray(psi, dtype=complex)
    return _ratio(problem, profile, psi, psi, eps, kind, tol, floor, norm, step, backend)


def permanent_degeneracy_ratio(problem, profile, psi, phi_ref, eps: float, kind="full",
                               tol: float = 1e-6, floor: float = DENOMINATOR_FLOOR,
                               step=None, backend=None) -> GmlOutcome:
    """Ratio normalized against a fixed reference state instead of ``psi``.

    A vanishing denominator is reported as an outcome flagged ``degenerate``
    rather than raised.
    """
    psi = np.asarray(psi, dtype=complex)
    phi_ref = np.asarray(phi_ref, dtype=complex)
    unit = psi / np.linalg.norm(psi)
    # how far psi sits from the tracked eigenspaces of H0 + V
    cond = float(np.linalg.norm(unit - spectral_frame(problem, 1.0).tracked_projector() @ unit))
    try:
        return _ratio(problem, profile, psi, phi_ref, eps, kind, tol, floor, cond, step, backend)
    except VanishingDenominator as exc:
        return GmlOutcome(
            state=np.full_like(psi, np.nan),
            denominator=exc.denominator,
            epsilon=eps,
            eigen_residual=math.nan,
            rayleigh_energy=math.nan,
            condition_norm=cond,
            kind=Kind(kind).value,
            degenerate=True,
        )


# -- sweeps ---------------------------------------------------------------------

def _worker_count() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def fit_slope(x, y) -> float:
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    keep = np.isfinite(y) & (y > 0)
    if keep.sum() < 2:
        return math.nan
    return float(np.polyfit(np.log(x[keep]), np.log(y[keep]), 1)[0])


@dataclass(frozen=True, eq=False)
class SweepRecord:
    epsilons: tuple
    outcomes: tuple
    cauchy_deltas: np.ndarray
    adiabatic_errors: np.ndarray | None
    fitted_slope: float
    errors: dict = field(default_factory=dict)

    @property
    def deltas_decreasing(self) -> bool:
        d = self.cauchy_deltas
        return bool(np.all(np.isfinite(d)) and np.all(np.diff(d) < 0))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["epsilon", "denominator_abs", "eigen_residual", "cauchy_delta", "adiabatic_error"])
            for i, eps in enumerate(self.epsilons):
                o = self.outcomes[i]
                row = [
                    eps,
                    abs(o.denominator) if o is not None else math.nan,
                    o.eigen_residual if o is not None else math.nan,
                    self.cauchy_deltas[i - 1] if i > 0 else math.nan,
                    self.adiabatic_errors[i] if self.adiabatic_errors is not None else math.nan,
                ]
                out.writerow([f"{x:.17g}" for x in row])

    def summary(self) -> dict:
        return {
            "epsilons": list(self.epsilons),
            "cauchy_deltas": [float(x) for x in self.cauchy_deltas],
            "adiabatic_errors": None if self.adiabatic_errors is None else [float(x) for x in self.adiabatic_errors],
            "fitted_slope": self.fitted_slope,
            "deltas_decreasing": self.deltas_decreasing,
            "errors": {str(k): v for k, v in self.errors.items()},
        }

    def write_json(self, path, extra: dict | None = None) -> None:
        data = self.summary()
        if extra:
            data.update(extra)
        with open(path, "w") as fh:
            json.dump(data, fh, indent=2)


def _adiabatic_error(problem, profile, eps, tol, step, backend):
    full = evolve_from_past(problem, profile, eps, Kind.FULL, tol=tol, step=step, backend=backend)
    adia = evolve_from_past(problem, profile, eps, Kind.ADIABATIC, tol=tol, step=step, backend=backend)
    return spectral_norm(full.unitary - adia.unitary)


def gml_sweep(problem, profile, basis, j: int, eps_list, kind="full", psi=None, reference=None,
              adiabatic_errors: bool = False, tol: float = 1e-6, floor: float = DENOMINATOR_FLOOR,
              workers: int | None = None, backend=None) -> SweepRecord:
    """Ratios over a strictly decreasing list of epsilons.

    Consecutive states are compared after a phase alignment against
    ``reference`` (the geometric eigenstate for the default initial vector,
    the initial vector itself otherwise).  Failures of single entries are
    collected in ``errors`` and leave NaN in the derived columns.
    """
    eps_list = tuple(float(e) for e in eps_list)
    if len(eps_list) < 4:
        raise ValueError("a sweep needs at least 4 epsilons")
    if any(e <= 0 for e in eps_list) or np.any(np.diff(eps_list) >= 0):
        raise ValueError("epsilons must be positive and strictly decreasing")
    if reference is None:
        reference = geometric_eigenstate(problem, profile, basis, j)[0] if psi is None else psi
    reference = np.asarray(reference, dtype=complex)

    def one(eps):
        try:
            out = gml_ratio(problem, profile, basis, j, eps, kind, tol, floor, psi, backend=backend)
            err = _adiabatic_error(problem, profile, eps, tol, None, backend) if adiabatic_errors else None
            return out, err, None
        except AdiaswitchError as exc:
            return None, None, f"{type(exc).__name__}: {exc}"

    workers = workers or _worker_count()
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(one, eps_list))
    else:
        results = [one(e) for e in eps_list]

    outcomes = tuple(r[0] for r in results)
    errors = {eps: r[2] for eps, r in zip(eps_list, results) if r[2] is not None}
    aligned = [None if o is None else align_phase(o.state, reference) for o in outcomes]
    deltas = np.array([
        np.linalg.norm(a - b) if a is not None and b is not None else math.nan
        for a, b in zip(aligned[:-1], aligned[1:])
    ])
    adia = None
    if adiabatic_errors:
        adia = np.array([math.nan if r[1] is None else r[1] for r in results])
        slope = fit_slope(eps_list, adia)
    else:
        slope = fit_slope(eps_list[1:], deltas)
    return SweepRecord(eps_list, outcomes, deltas, adia, slope, errors)


# -- multistep switching ------------------------------------------------------------

def stage_problem(problem: PerturbationProblem, lam_a: float, lam_b: float) -> PerturbationProblem:
    """The pair ``(H0 + lam_a V, (lam_b - lam_a) V)`` with the same tracked block."""
    h0 = HermitianOperator(problem.hamiltonian(lam_a))
    v = HermitianOperator((lam_b - lam_a) * problem.v.entries)
    w, q = np.linalg.eigh(h0.entries)
    frame = q[:, problem.tracked_slice]
    return replace(
        problem,
        h0=h0,
        v=v,
        ground_energy=float(w[problem.tracked_slice].mean()),
        p0=frame @ frame.conj().T,
        frame=frame,
        h0_eigenvalues=w,
        h0_eigenvectors=q,
    )


def multistep_gml(problem, profile, basis, j: int, breakpoints, eps: float, kind="full",
                  tol: float = 1e-6, floor: float = DENOMINATOR_FLOOR,
                  margin: float = CONDITION_MARGIN, backend=None) -> GmlOutcome:
    """Switch on ``V`` through the stages ``[lam_k, lam_k+1]`` one after another.

    Each stage applies the ratio construction to the previous stage's
    normalized output, with that state in its own denominator.
    """
    lams = [float(x) for x in breakpoints]
    if len(lams) < 2 or lams[0] != 0.0 or lams[-1] != 1.0 or np.any(np.diff(lams) <= 0):
        raise ValueError("breakpoints must increase strictly from 0 to 1")
    projs = [target_projector(problem, j, lam) for lam in lams]
    projs[0] = np.outer(basis.vectors[:, j], basis.vectors[:, j].conj())
    for k in range(len(lams) - 1):
        d = spectral_norm(projs[k + 1] - projs[k])
        if d >= 1.0 - margin:
            raise StageConditionViolated(
                f"projector moves by {d:.6g} over stage [{lams[k]}, {lams[k + 1]}]"
            )
    psi = basis.vectors[:, j].astype(complex)
    dens = []
    worst_delta = 0.0
    state = psi
    for a, b in zip(lams[:-1], lams[1:]):
        sp = problem if a == 0.0 and b == 1.0 else stage_problem(problem, a, b)
        past = evolve_from_past(sp, profile, eps, kind, tol=tol, backend=backend)
        image = past.unitary @ psi
        den = complex(np.vdot(psi, image))
        dens.append(den)
        worst_delta = max(worst_delta, past.cauchy_delta)
        if abs(den) < floor:
            raise VanishingDenominator(
                f"stage [{a}, {b}] denominator {abs(den):.3g} below floor", denominator=den
            )
        state = image / den
        psi = state / np.linalg.norm(state)
    res, energy = eigen_residual(problem.hamiltonian(1.0), state)
    cond = spectral_norm(projs[-1] - projs[0])
    return GmlOutcome(
        state=state,
        denominator=dens[-1],
        epsilon=eps,
        eigen_residual=res,
        rayleigh_energy=energy,
        condition_norm=cond,
        kind=Kind(kind).value,
        cauchy_delta=worst_delta,
        stage_denominators=tuple(dens),
    )


# -- gap diagnostics ------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GapTable:
    times: np.ndarray
    switching: np.ndarray
    local_gaps: np.ndarray
    global_gaps: np.ndarray
    alpha_min: float
    alpha_max: float
    splitting: bool

    def rows(self):
        n = self.local_gaps.shape[1]
        for i, t in enumerate(self.times):
            for j in range(n):
                f = self.switching[i]
                yield (t, j, self.local_gaps[i, j], self.global_gaps[i], self.local_gaps[i, j] / f)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["t", "label", "local_gap", "global_gap", "ratio"])
            for t, j, d, g, r in self.rows():
                out.writerow([f"{t:.17g}", j, f"{d:.17g}", f"{g:.17g}", f"{r:.17g}"])

    def summary(self) -> dict:
        return {"alpha_min": self.alpha_min, "alpha_max": self.alpha_max, "splitting": self.splitting}


def gap_diagnostics(problem, profile, t_grid) -> GapTable:
    """Local gaps inside the tracked block and the gap to the rest, against ``f(t)``.

    The local gap of label ``j`` is the distance to the nearest other
    tracked level (for one tracked level, to the rest of the spectrum).
    """
    t = np.asarray(t_grid, float)
    f = profile.evaluate(t)[0]
    if np.any(f <= 0):
        raise ValueError("the switching function must be positive on the grid")
    sl = problem.tracked_slice
    n = problem.degeneracy
    w = np.linalg.eigvalsh(problem.h0.entries[None] + f[:, None, None] * problem.v.entries[None])
    tracked = w[:, sl]
    rest = np.concatenate([w[:, : sl.start], w[:, sl.stop:]], axis=1)
    glob = (
        np.abs(tracked[:, :, None] - rest[:, None, :]).min(axis=(1, 2))
        if rest.shape[1] else np.full(len(t), np.inf)
    )
    if n > 1:
        diff = np.abs(tracked[:, :, None] - tracked[:, None, :])
        diff[:, np.arange(n), np.arange(n)] = np.inf
        local = diff.min(axis=2)
    else:
        local = glob[:, None].copy()
    ratio = local / f[:, None]
    noise = 100 * problem.noise_floor()
    return GapTable(
        times=t,
        switching=f,
        local_gaps=local,
        global_gaps=glob,
        alpha_min=float(ratio.min()),
        alpha_max=float(ratio.max()),
        splitting=bool(np.all(local > noise)),
    )
