"""Dense Hermitian operator algebra for the pair (H0, V).

Everything here works on small dense complex matrices.  Projectors, never
eigenvectors, are the primary objects: eigenvector phases are not fixed by
the eigensolver, while spectral projectors are.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import (
    AsymmetryTooLarge,
    ClusterAmbiguity,
    DegeneracyMismatch,
    GapViolation,
    NonSquare,
    NotAProjector,
)

DEFAULT_CLUSTER_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class HermitianOperator:
    """A dense self-adjoint matrix.

    ``defect`` is the relative asymmetry ``max|M - M^H| / max|M|`` of the raw
    input before symmetrization.
    """

    entries: np.ndarray
    defect: float = 0.0

    def __post_init__(self):
        arr = np.array(self.entries, dtype=complex)
        arr.setflags(write=False)
        object.__setattr__(self, "entries", arr)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.entries
        return self.entries.astype(dtype)

    def norm(self) -> float:
        return spectral_norm(self.entries)


def validate_hermitian(raw, tol: float = 1e-8) -> HermitianOperator:
    m = np.asarray(raw, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
        raise NonSquare(f"expected a square matrix, got shape {m.shape}")
    scale = np.abs(m).max()
    defect = float(np.abs(m - m.conj().T).max() / scale) if scale > 0 else 0.0
    if defect > tol:
        raise AsymmetryTooLarge(f"relative asymmetry {defect:.3g} exceeds {tol:.1g}")
    return HermitianOperator(0.5 * (m + m.conj().T), defect)


def spectral_norm(a) -> float:
    a = np.asarray(a)
    if a.size == 0:
        return 0.0
    return float(np.linalg.norm(a, 2))


def _clusters(values: np.ndarray, tol_abs: float) -> list[list[int]]:
    """Chain-cluster sorted ``values``: neighbours closer than ``tol_abs`` merge."""
    groups = [[0]]
    for i in range(1, len(values)):
        if values[i] - values[i - 1] <= tol_abs:
            groups[-1].append(i)
        else:
            groups.append([i])
    return groups


def _diameter(values: np.ndarray) -> float:
    return float(values.max() - values.min()) if len(values) else 0.0


@dataclass(frozen=True, eq=False)
class PerturbationProblem:
    """The pair (H0, V) with the degenerate level of H0 being switched.

    ``frame`` holds an orthonormal basis (columns) of the degenerate
    eigenspace; ``offset`` is the number of H0 eigenvalues strictly below it.
    Under the global gap condition the tracked levels of ``H0 + lam V`` are
    always the sorted eigenvalues ``offset .. offset + degeneracy - 1``.
    """

    h0: HermitianOperator
    v: HermitianOperator
    ground_energy: float
    degeneracy: int
    p0: np.ndarray
    gap_floor: float
    frame: np.ndarray = field(repr=False)
    offset: int = 0
    h0_eigenvalues: np.ndarray = field(default=None, repr=False)
    h0_eigenvectors: np.ndarray = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return self.h0.dim

    @property
    def tracked_slice(self) -> slice:
        return slice(self.offset, self.offset + self.degeneracy)

    def hamiltonian(self, lam: float) -> np.ndarray:
        return self.h0.entries + lam * self.v.entries

    def max_norm(self) -> float:
        """Upper bound of ``||H0 + lam V||`` over lam in [0, 1] (convexity)."""
        return max(self.h0.norm(), spectral_norm(self.hamiltonian(1.0)))

    def noise_floor(self) -> float:
        """Rough absolute accuracy of a dense eigensolve on this family."""
        return self.dim * np.finfo(float).eps * max(self.max_norm(), 1e-300)


def make_problem(
    h0,
    v,
    ground_energy: float | None = None,
    degeneracy: int | None = None,
    gap_floor: float = 1e-6,
    cluster_tol: float = DEFAULT_CLUSTER_TOL,
) -> PerturbationProblem:
    """Build a problem, identifying the degenerate level of ``h0``.

    Without ``ground_energy`` the lowest eigenvalue cluster of ``h0`` is used.
    A declared ``degeneracy`` must equal the detected cluster size.
    """
    h0 = h0 if isinstance(h0, HermitianOperator) else validate_hermitian(h0)
    v = v if isinstance(v, HermitianOperator) else validate_hermitian(v)
    if h0.dim != v.dim:
        raise NonSquare(f"h0 is {h0.dim}x{h0.dim} but v is {v.dim}x{v.dim}")
    w, q = np.linalg.eigh(h0.entries)
    tol_abs = cluster_tol * max(_diameter(w), np.abs(w).max())
    groups = _clusters(w, tol_abs)
    if ground_energy is None:
        members = groups[0]
    else:
        dist = [abs(w[g].mean() - ground_energy) for g in groups]
        best = int(np.argmin(dist))
        if dist[best] > max(tol_abs, 1e-8 * max(1.0, abs(ground_energy))):
            raise DegeneracyMismatch(f"h0 has no eigenvalue at {ground_energy!r}")
        members = groups[best]
    if degeneracy is not None and degeneracy != len(members):
        raise DegeneracyMismatch(
            f"declared degeneracy {degeneracy} but the eigenvalue cluster has size {len(members)}"
        )
    frame = q[:, members]
    p0 = frame @ frame.conj().T
    e0 = float(w[members].mean()) if ground_energy is None else float(ground_energy)
    return PerturbationProblem(
        h0=h0,
        v=v,
        ground_energy=e0,
        degeneracy=len(members),
        p0=p0,
        gap_floor=float(gap_floor),
        frame=frame,
        offset=members[0],
        h0_eigenvalues=w,
        h0_eigenvectors=q,
    )


@dataclass(frozen=True, eq=False)
class SpectralFrame:
    """Spectral data of ``H0 + lam V``.

    ``tracked`` lists, in label order, the positions in ``eigenvalues`` of the
    levels continuously connected to the degenerate level.  ``groups``
    partitions the labels into clusters of numerically coincident
    eigenvalues; ``projectors`` holds one projector per group followed by the
    projector onto the rest of the spectrum.
    """

    parameter: float
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    tracked: tuple
    groups: tuple
    projectors: tuple
    global_gap: float
    local_gaps: np.ndarray

    @property
    def tracked_values(self) -> np.ndarray:
        return self.eigenvalues[list(self.tracked)]

    @property
    def rest_values(self) -> np.ndarray:
        mask = np.ones(len(self.eigenvalues), bool)
        mask[list(self.tracked)] = False
        return self.eigenvalues[mask]

    @property
    def rest_projector(self) -> np.ndarray:
        return self.projectors[-1]

    def group_of(self, j: int) -> int:
        for g, members in enumerate(self.groups):
            if j in members:
                return g
        raise IndexError(j)

    def level_projector(self, j: int) -> np.ndarray:
        """Projector of tracked label ``j`` (its whole cluster if unresolved)."""
        return self.projectors[self.group_of(j)]

    def tracked_projector(self) -> np.ndarray:
        return sum(self.projectors[:-1])


def spectral_frame(
    problem: PerturbationProblem,
    lam: float,
    cluster_tol: float = DEFAULT_CLUSTER_TOL,
    previous: SpectralFrame | None = None,
) -> SpectralFrame:
    """Eigen-decompose ``H0 + lam V`` and identify the tracked levels.

    With ``previous`` the tracked set is the one with maximal trace overlap
    with the previous tracked projector and labels follow maximal overlap with
    the previous level projectors.  Without it, the tracked levels are the
    contiguous block sitting at ``problem.offset`` and labels ascend with
    energy, which is what continuity forces when the global gap never closes.
    """
    if cluster_tol <= 0:
        raise ValueError("cluster_tol must be positive")
    w, q = np.linalg.eigh(problem.hamiltonian(lam))
    n = problem.degeneracy
    tol_abs = cluster_tol * _diameter(w)

    if previous is None:
        tracked = list(range(problem.offset, problem.offset + n))
    else:
        ref = previous.tracked_projector()
        overlap = np.real(np.einsum("ik,ij,jk->k", q.conj(), ref, q))
        order = np.argsort(-overlap, kind="stable")
        if n < len(w) and overlap[order[n - 1]] - overlap[order[n]] < 1e-6:
            raise ClusterAmbiguity(f"cannot separate the tracked levels at lam={lam}")
        chosen = sorted(order[:n], key=lambda i: w[i])
        if all(len(g) == 1 for g in previous.groups):
            cost = np.empty((n, n))
            for a in range(n):
                pa = previous.level_projector(a)
                for b, idx in enumerate(chosen):
                    cost[a, b] = -np.real(q[:, idx].conj() @ pa @ q[:, idx])
            _, cols = linear_sum_assignment(cost)
            tracked = [chosen[c] for c in cols]
        else:
            tracked = chosen

    rest = [i for i in range(len(w)) if i not in tracked]
    tvals = w[tracked]
    gap = float(np.abs(tvals[:, None] - w[rest][None, :]).min()) if rest else np.inf
    if rest and gap <= tol_abs:
        raise GapViolation(f"global gap vanishes at lam={lam}")

    # cluster labels by value, keeping label order inside each cluster
    by_value = np.argsort(tvals, kind="stable")
    groups = []
    for chunk in _clusters(tvals[by_value], tol_abs):
        groups.append(tuple(sorted(int(by_value[c]) for c in chunk)))
    groups.sort()

    projectors = []
    for g in groups:
        vecs = q[:, [tracked[j] for j in g]]
        projectors.append(vecs @ vecs.conj().T)
    rvecs = q[:, rest]
    projectors.append(rvecs @ rvecs.conj().T)

    local = np.empty(n)
    for j, idx in enumerate(tracked):
        others = np.delete(w, idx)
        local[j] = np.abs(others - w[idx]).min() if len(others) else np.inf

    return SpectralFrame(
        parameter=float(lam),
        eigenvalues=w,
        eigenvectors=q,
        tracked=tuple(int(i) for i in tracked),
        groups=tuple(groups),
        projectors=tuple(projectors),
        global_gap=gap,
        local_gaps=local,
    )


def track_frames(problem, lams, cluster_tol=DEFAULT_CLUSTER_TOL) -> list[SpectralFrame]:
    """Frames along an increasing grid, each matched to its predecessor."""
    frames = []
    prev = None
    for lam in lams:
        prev = spectral_frame(problem, lam, cluster_tol, previous=prev)
        frames.append(prev)
    return frames


@dataclass(frozen=True)
class AssumptionReport:
    grid: tuple
    degenerate_level_ok: bool
    detected_degeneracy: int
    min_global_gap: float
    gap_floor: float
    global_gap_ok: bool
    restricted_spectrum: tuple
    restricted_min_spacing: float
    restricted_nondegenerate: bool
    lam_star: float
    min_tracked_spacing: float
    splitting_ok: bool
    profile_report: object = None

    @property
    def passed(self) -> bool:
        ok = self.degenerate_level_ok and self.global_gap_ok and self.splitting_ok
        if self.profile_report is not None:
            ok = ok and self.profile_report.passed
        return ok

    def as_dict(self) -> dict:
        out = {
            "grid_points": len(self.grid),
            "grid_min": min(self.grid),
            "grid_max": max(self.grid),
            "assumption1_degenerate_level": self.degenerate_level_ok,
            "detected_degeneracy": self.detected_degeneracy,
            "assumption2_min_global_gap": self.min_global_gap,
            "assumption2_gap_floor": self.gap_floor,
            "assumption2_ok": self.global_gap_ok,
            "restricted_spectrum": list(self.restricted_spectrum),
            "restricted_min_spacing": self.restricted_min_spacing,
            "assumption3_restricted_nondegenerate": self.restricted_nondegenerate,
            "assumption3_lam_star": self.lam_star,
            "assumption3_min_tracked_spacing": self.min_tracked_spacing,
            "assumption3_ok": self.splitting_ok,
            "passed": self.passed,
        }
        if self.profile_report is not None:
            out["profile"] = self.profile_report.as_dict()
        return out


def check_assumptions(
    problem: PerturbationProblem,
    lam_grid=None,
    profile=None,
    lam_star: float = 0.01,
    cluster_tol: float = DEFAULT_CLUSTER_TOL,
) -> AssumptionReport:
    """Grid certification of the spectral hypotheses.

    Nothing is raised for a failing hypothesis; the report carries the flags.
    """
    grid = np.linspace(0.0, 1.0, 101) if lam_grid is None else np.sort(np.asarray(lam_grid, float))
    if grid[0] > 0 or grid[-1] < 1 or np.diff(grid).max(initial=0) > 0.01 + 1e-12:
        raise ValueError("lam_grid must cover [0, 1] with spacing <= 0.01")

    w0 = problem.h0_eigenvalues
    tol0 = cluster_tol * max(_diameter(w0), np.abs(w0).max())
    detected = int(np.sum(np.abs(w0 - problem.ground_energy) <= max(tol0, 1e-12)))
    a1 = detected == problem.degeneracy

    n, sl = problem.degeneracy, problem.tracked_slice
    gaps, spacings = [], []
    for lam in grid:
        w = np.linalg.eigvalsh(problem.hamiltonian(lam))
        t = w[sl]
        rest = np.concatenate([w[: sl.start], w[sl.stop:]])
        gaps.append(np.abs(t[:, None] - rest[None, :]).min() if len(rest) else np.inf)
        if lam >= lam_star and n > 1:
            spacings.append(np.diff(t).min())
    min_gap = float(min(gaps))

    restricted = np.linalg.eigvalsh(problem.frame.conj().T @ problem.v.entries @ problem.frame)
    rspacing = float(np.diff(restricted).min()) if n > 1 else np.inf
    rscale = max(_diameter(restricted), problem.v.norm())
    nondeg = n == 1 or rspacing > cluster_tol * rscale
    min_spacing = float(min(spacings)) if spacings else np.inf
    tol_split = cluster_tol * max(problem.max_norm(), 1e-300)

    report = None
    if profile is not None:
        from .switching import certify_profile

        report = certify_profile(profile)

    return AssumptionReport(
        grid=tuple(float(x) for x in grid),
        degenerate_level_ok=a1,
        detected_degeneracy=detected,
        min_global_gap=min_gap,
        gap_floor=problem.gap_floor,
        global_gap_ok=min_gap >= problem.gap_floor,
        restricted_spectrum=tuple(float(x) for x in restricted),
        restricted_min_spacing=rspacing,
        restricted_nondegenerate=bool(nondeg),
        lam_star=lam_star,
        min_tracked_spacing=min_spacing,
        splitting_ok=bool(nondeg and min_spacing > tol_split),
        profile_report=report,
    )


def reduced_resolvent(problem: PerturbationProblem) -> np.ndarray:
    """Matrix of ``(1 - P0) (H0 - E0)^{-1} (1 - P0)`` built in the H0 eigenbasis."""
    w, q = problem.h0_eigenvalues, problem.h0_eigenvectors
    inv = np.zeros(len(w))
    mask = np.ones(len(w), bool)
    mask[problem.tracked_slice] = False
    inv[mask] = 1.0 / (w[mask] - problem.ground_energy)
    return (q * inv) @ q.conj().T


def reduced_resolvent_apply(problem: PerturbationProblem, w) -> np.ndarray:
    w = np.asarray(w, dtype=complex)
    if not np.all(np.isfinite(w)):
        raise ValueError("vector must be finite")
    evals, q = problem.h0_eigenvalues, problem.h0_eigenvectors
    coeffs = q.conj().T @ w
    inv = np.zeros(len(evals))
    mask = np.ones(len(evals), bool)
    mask[problem.tracked_slice] = False
    inv[mask] = 1.0 / (evals[mask] - problem.ground_energy)
    if coeffs.ndim == 1:
        return q @ (inv * coeffs)
    return q @ (inv[:, None] * coeffs)


def is_projector(p, tol: float = 1e-8) -> bool:
    p = np.asarray(p, dtype=complex)
    if p.ndim != 2 or p.shape[0] != p.shape[1]:
        return False
    return bool(
        np.abs(p - p.conj().T).max(initial=0) <= tol and np.abs(p @ p - p).max(initial=0) <= tol
    )


def projector_distance(p, q, tol: float = 1e-8) -> float:
    """Spectral norm ``||P - Q||`` of two orthogonal projectors."""
    p = np.asarray(p, dtype=complex)
    q = np.asarray(q, dtype=complex)
    if not is_projector(p, tol) or not is_projector(q, tol):
        raise NotAProjector("both arguments must be Hermitian idempotents")
    return spectral_norm(p - q)


def rank_one(vec) -> np.ndarray:
    vec = np.asarray(vec, dtype=complex)
    vec = vec / np.linalg.norm(vec)
    return np.outer(vec, vec.conj())
