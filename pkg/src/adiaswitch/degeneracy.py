"""Initial basis of the degenerate eigenspace and the low orders of the
Rayleigh--Schrodinger hierarchy around it.

Conventions: ``basis.vectors[:, j]`` is the zeroth-order vector of label
``j``; ``cross_coefficients[j, k]`` is the coefficient of ``vectors[:, k]``
in the first-order correction of label ``j`` (NaN when undetermined).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import NoDegenerateGroup, TrackingFailure, UndefinedCrossCoefficients
from .operators import (
    PerturbationProblem,
    reduced_resolvent,
    reduced_resolvent_apply,
    spectral_frame,
    spectral_norm,
)

DEFAULT_GROUP_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class InitialBasis:
    vectors: np.ndarray
    first_shifts: np.ndarray
    residual_groups: tuple
    cross_coefficients: np.ndarray
    second_shifts: np.ndarray | None = None
    first_groups: tuple = ()
    lifted: bool = False

    @property
    def size(self) -> int:
        return self.vectors.shape[1]

    @property
    def residual_degeneracy(self) -> bool:
        return any(len(g) > 1 for g in self.residual_groups)

    def vector(self, j: int) -> np.ndarray:
        return self.vectors[:, j]


def _fix_gauge(vec: np.ndarray) -> np.ndarray:
    """Rotate so the first largest-magnitude component is real positive."""
    mag = np.abs(vec)
    idx = int(np.nonzero(mag >= mag.max() - 1e-12)[0][0])
    return vec * (abs(vec[idx]) / vec[idx])


def _group(values: np.ndarray, tol_abs: float) -> list[tuple]:
    groups = [[0]]
    for i in range(1, len(values)):
        if values[i] - values[i - 1] <= tol_abs:
            groups[-1].append(i)
        else:
            groups.append([i])
    return [tuple(g) for g in groups]


def _canonical_order(vectors: np.ndarray, frame: np.ndarray, members) -> list[int]:
    """Order an unresolved cluster by its overlap pattern with the natural frame."""
    def key(j):
        ov = np.abs(frame.conj().T @ vectors[:, j])
        return tuple(-np.round(ov, 12))

    return sorted(members, key=key)


def _coupling(problem: PerturbationProblem, vectors: np.ndarray, power: int = 1) -> np.ndarray:
    """``<phi_k| V (R0 V)^power |phi_j>`` as matrix ``[k, j]``."""
    v = problem.v.entries
    x = v @ vectors
    for _ in range(power):
        x = v @ reduced_resolvent_apply(problem, x)
    return vectors.conj().T @ x


def _first_order_crossings(alpha, w, first_groups, n):
    c = np.full((n, n), np.nan, dtype=complex)
    label = {j: g for g, members in enumerate(first_groups) for j in members}
    for j in range(n):
        c[j, j] = 0.0
        for k in range(n):
            if k != j and label[j] != label[k]:
                c[j, k] = -w[k, j] / (alpha[j] - alpha[k])
    return c


def build_initial_basis(problem: PerturbationProblem, tol: float = DEFAULT_GROUP_TOL) -> InitialBasis:
    """Eigenbasis of the perturbation restricted to the degenerate eigenspace.

    Vectors are sorted by ascending first-order shift; shifts closer than
    ``tol * max(diameter, ||V||)`` are grouped as unresolved.
    """
    frame = problem.frame
    m = frame.conj().T @ problem.v.entries @ frame
    m = 0.5 * (m + m.conj().T)
    alpha, u = np.linalg.eigh(m)
    vectors = frame @ u
    scale = max(float(alpha.max() - alpha.min()), problem.v.norm())
    groups = _group(alpha, tol * scale)

    order = []
    for g in groups:
        order.extend(_canonical_order(vectors, frame, g) if len(g) > 1 else g)
    vectors = vectors[:, order]
    alpha = alpha[order]
    vectors = np.column_stack([_fix_gauge(vectors[:, j]) for j in range(vectors.shape[1])])

    w = _coupling(problem, vectors)
    n = vectors.shape[1]
    return InitialBasis(
        vectors=vectors,
        first_shifts=alpha.astype(float),
        residual_groups=tuple(groups),
        cross_coefficients=_first_order_crossings(alpha, w, groups, n),
        first_groups=tuple(groups),
    )


def second_order_lift(
    problem: PerturbationProblem, basis: InitialBasis, tol: float = DEFAULT_GROUP_TOL
) -> InitialBasis:
    """Resolve first-order ties with the second-order coupling ``V R0 V``.

    Inside each tied group the vectors are replaced by eigenvectors of
    ``<phi_k|V R0 V|phi_j>``; the second-order shifts are minus its
    eigenvalues.  Cross coefficients between groups come from the
    second-order solvability condition, those inside a group that the lift
    split come from the third-order one.  Ties that survive stay flagged.
    """
    if not any(len(g) > 1 for g in basis.first_groups):
        raise NoDegenerateGroup("all first-order shifts are distinct; nothing to lift")
    vectors = basis.vectors.copy()
    n = basis.size
    alpha = basis.first_shifts
    w_full = _coupling(problem, vectors)
    e2 = np.real(-np.diag(w_full)).copy()
    scale = max(spectral_norm(w_full), 1e-300)
    residual = []
    for g in basis.first_groups:
        idx = list(g)
        if len(idx) == 1:
            residual.append(g)
            continue
        sub = w_full[np.ix_(idx, idx)]
        sub = 0.5 * (sub + sub.conj().T)
        vals, u = np.linalg.eigh(sub)
        order = np.argsort(-vals, kind="stable")
        vectors[:, idx] = vectors[:, idx] @ u[:, order]
        shifts = -vals[order]
        e2[idx] = shifts
        for sub_g in _group(shifts, tol * scale):
            members = [idx[s] for s in sub_g]
            if len(members) > 1:
                members = _canonical_order(vectors, problem.frame, members)
                vectors[:, sorted(members)] = vectors[:, members]
            residual.append(tuple(sorted(members)))
    vectors = np.column_stack([_fix_gauge(vectors[:, j]) for j in range(n)])
    residual.sort()

    w = _coupling(problem, vectors)
    c = _first_order_crossings(alpha, w, basis.first_groups, n)
    w3 = _coupling(problem, vectors, power=2)
    r2 = reduced_resolvent(problem)
    w_r2 = vectors.conj().T @ problem.v.entries @ r2 @ r2 @ problem.v.entries @ vectors
    first_label = {j: gi for gi, members in enumerate(basis.first_groups) for j in members}
    final_label = {j: gi for gi, members in enumerate(residual) for j in members}
    for j in range(n):
        outside = [l for l in range(n) if first_label[l] != first_label[j]]
        for k in range(n):
            if k == j or first_label[k] != first_label[j] or final_label[k] == final_label[j]:
                continue
            num = w3[k, j] - alpha[j] * w_r2[k, j] - sum(c[j, l] * w[k, l] for l in outside)
            c[j, k] = num / (e2[j] - e2[k])

    return replace(
        basis,
        vectors=vectors,
        residual_groups=tuple(residual),
        cross_coefficients=c,
        second_shifts=e2,
        lifted=True,
    )


def first_order_vector(problem: PerturbationProblem, basis: InitialBasis, j: int) -> np.ndarray:
    """First-order correction in the gauge ``<phi_j0, phi_j(lam)> = 1``."""
    if problem.v.norm() == 0.0:
        # constant family: every basis vector is an exact eigenvector for all lam
        return np.zeros(problem.dim, dtype=complex)
    c = basis.cross_coefficients[j]
    others = [k for k in range(basis.size) if k != j]
    if np.any(np.isnan(c[others])):
        raise UndefinedCrossCoefficients(
            f"label {j} sits in an unresolved group; its first-order vector is not determined"
        )
    phi = basis.vectors
    out = -reduced_resolvent_apply(problem, problem.v.entries @ phi[:, j])
    for k in others:
        out = out + c[k] * phi[:, k]
    return out


def _loglog_slope(x, y) -> float:
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    keep = y > 0
    if keep.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(x[keep]), np.log(y[keep]), 1)[0])


@dataclass(frozen=True, eq=False)
class SeriesReport:
    lambdas: np.ndarray
    energies: np.ndarray
    first_residuals: np.ndarray
    first_slopes: np.ndarray
    second_residuals: np.ndarray | None = None
    second_slopes: np.ndarray | None = None
    projector_errors: np.ndarray | None = None
    projector_slopes: np.ndarray | None = None
    notes: tuple = field(default=())

    def to_csv(self, path) -> None:
        n = self.energies.shape[1]
        header = ["lambda"] + [f"E_{j}" for j in range(n)] + [f"residual_{j}" for j in range(n)]
        if self.second_residuals is not None:
            header += [f"residual2_{j}" for j in range(n)]
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(header)
            for i, lam in enumerate(self.lambdas):
                row = [lam, *self.energies[i], *self.first_residuals[i]]
                if self.second_residuals is not None:
                    row += list(self.second_residuals[i])
                out.writerow([f"{x:.17g}" for x in row])


def _match_levels(frame, basis) -> None:
    """Raise unless label j of ``frame`` is the level closest to basis vector j."""
    q = frame.eigenvectors[:, list(frame.tracked)]
    overlap = np.abs(basis.vectors.conj().T @ q) ** 2
    for g in basis.residual_groups:
        g = list(g)
        if np.any(overlap[np.ix_(g, g)].sum(axis=0) < 0.5):
            raise TrackingFailure(f"levels {g} drifted away from their zeroth-order vectors")
    singles = [g[0] for g in basis.residual_groups if len(g) == 1]
    if len(singles) > 1:
        sub = overlap[np.ix_(singles, singles)]
        rows, cols = linear_sum_assignment(-sub)
        if np.any(rows != cols):
            raise TrackingFailure("ambiguous matching between levels and basis vectors")


def expansion_check(problem: PerturbationProblem, basis: InitialBasis, lam_grid) -> SeriesReport:
    lams = np.asarray(lam_grid, float)
    if len(lams) < 5 or lams.min() <= 0 or lams.max() > 0.1:
        raise ValueError("lam_grid needs at least 5 points inside (0, 0.1]")
    n = basis.size
    e0 = problem.ground_energy
    e1 = basis.first_shifts
    e2 = basis.second_shifts

    corrections = []
    for j in range(n):
        try:
            corrections.append(first_order_vector(problem, basis, j))
        except UndefinedCrossCoefficients:
            corrections.append(None)

    energies = np.empty((len(lams), n))
    r1 = np.empty_like(energies)
    r2 = np.empty_like(energies) if e2 is not None else None
    perr = np.full_like(energies, np.nan)
    for i, lam in enumerate(lams):
        fr = spectral_frame(problem, lam)
        _match_levels(fr, basis)
        energies[i] = fr.tracked_values
        r1[i] = np.abs(energies[i] - e0 - lam * e1)
        if r2 is not None:
            r2[i] = np.abs(energies[i] - e0 - lam * e1 - lam**2 * e2)
        for j, corr in enumerate(corrections):
            if corr is None or len(fr.groups[fr.group_of(j)]) > 1:
                continue
            approx = basis.vectors[:, j] + lam * corr
            approx = approx / np.linalg.norm(approx)
            perr[i, j] = spectral_norm(fr.level_projector(j) - np.outer(approx, approx.conj()))

    notes = []
    if r1.max() < 1e-12:
        notes.append("first-order residuals vanish identically")
    have_proj = not np.all(np.isnan(perr))
    return SeriesReport(
        lambdas=lams,
        energies=energies,
        first_residuals=r1,
        first_slopes=np.array([_loglog_slope(lams, r1[:, j]) for j in range(n)]),
        second_residuals=r2,
        second_slopes=None if r2 is None else np.array([_loglog_slope(lams, r2[:, j]) for j in range(n)]),
        projector_errors=perr if have_proj else None,
        projector_slopes=(
            np.array([_loglog_slope(lams, perr[:, j]) for j in range(n)]) if have_proj else None
        ),
        notes=tuple(notes),
    )
