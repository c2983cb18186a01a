"""Full, adiabatic and Kato (geometric) unitary evolutions.

All times are macroscopic (``t = eps * s``).  The full evolution solves
``i eps dU/dt = H(t) U`` with ``H(t) = H0 + f(t) V``, the adiabatic one adds
``i eps K(t)`` to the Hamiltonian and the Kato evolution solves
``dA/dt = K(t) A``, where ``K = -1/2 sum_j [P_j, dP_j/dt]`` runs over the
tracked projectors and the projector onto the rest of the spectrum.

Each integration is a fixed-step classical RK4 on the right-multiplicative
ODE followed by a polar (Newton--Schulz) re-unitarization after every step.
The per-step work happens in :mod:`adiaswitch.kernels`; this module samples
the generator on the step grid and hands it over in chunks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import IntegrationFailure, NotConverged, StepTooCoarse, TrackingFailure
from .kernels import get_kernel
from .operators import HermitianOperator, PerturbationProblem, spectral_norm
from .switching import SwitchingProfile, truncation_time

DEFAULT_DLAM = 1e-4
DEFAULT_KATO_STEP = 0.01
STEP_FACTOR = 0.05
MAX_STEP_FACTOR = 0.1
CHUNK = 2048
# tracked levels closer than this many eigensolver noise units are treated as one block
RESOLVE_FACTOR = 100.0


class Kind(str, Enum):
    FULL = "full"
    ADIABATIC = "adiabatic"
    KATO = "kato"


@dataclass(frozen=True, eq=False)
class PropagatorResult:
    unitary: np.ndarray
    t_start: float
    t_end: float
    epsilon: float | None
    step_count: int
    step: float
    unitarity_defect: float
    pre_defect: float
    kind: Kind
    picture: str = "schrodinger"

    def metadata(self) -> dict:
        return {
            "kind": self.kind.value,
            "picture": self.picture,
            "epsilon": self.epsilon,
            "t_start": self.t_start,
            "t_end": self.t_end,
            "step": self.step,
            "step_count": self.step_count,
            "unitarity_defect": self.unitarity_defect,
            "pre_defect": self.pre_defect,
        }


@dataclass(frozen=True, eq=False)
class GeneratorSample:
    t: float
    h: HermitianOperator
    k: np.ndarray
    local_gaps: np.ndarray
    bound_ratio: float


def unitarity_defect(u) -> float:
    u = np.asarray(u)
    return spectral_norm(u.conj().T @ u - np.eye(u.shape[0]))


# -- generator sampling ------------------------------------------------------

def _eigh_family(problem: PerturbationProblem, lams: np.ndarray):
    h0, v = problem.h0.entries, problem.v.entries
    if not (np.iscomplexobj(h0) and np.abs(h0.imag).max() > 0) and not (
        np.abs(v.imag).max() > 0
    ):
        h = h0.real[None] + lams[:, None, None] * v.real[None]
    else:
        h = h0[None] + lams[:, None, None] * v[None]
    return np.linalg.eigh(h)


def _stencils(lams: np.ndarray, dlam: float):
    """Finite-difference nodes and weights for d/dlam at each lam in [0, 1]."""
    m = len(lams)
    nodes = np.empty((m, 3))
    weights = np.zeros((m, 3))
    central = (lams >= 2 * dlam) & (lams + dlam <= 1.0)
    forward = ~central & (lams + 2 * dlam <= 1.0)
    backward = ~central & ~forward
    nodes[central] = np.stack([lams - dlam, lams + dlam, lams], 1)[central]
    weights[central] = [-0.5 / dlam, 0.5 / dlam, 0.0]
    nodes[forward] = np.stack([lams, lams + dlam, lams + 2 * dlam], 1)[forward]
    weights[forward] = [-1.5 / dlam, 2.0 / dlam, -0.5 / dlam]
    nodes[backward] = np.stack([lams - 2 * dlam, lams - dlam, lams], 1)[backward]
    weights[backward] = [0.5 / dlam, -2.0 / dlam, 1.5 / dlam]
    return nodes, weights


def _level_projectors(vecs: np.ndarray, sl: slice) -> np.ndarray:
    t = vecs[:, :, sl]
    return np.einsum("mik,mjk->mkij", t, t.conj())


def kato_generator_lambda(problem: PerturbationProblem, lams, dlam: float = DEFAULT_DLAM):
    """Sample ``K~(lam) = -1/2 sum_j [P_j, dP_j/dlam]`` on an array of lam.

    Returns ``(K, tracked_energies)`` with shapes ``(m, d, d)`` and ``(m, N)``.
    Projector derivatives are central (one-sided near the ends of [0, 1])
    finite differences of the tracked eigenprojectors.  Tracked levels that
    are numerically unresolved at lam enter as one block.
    """
    lams = np.atleast_1d(np.asarray(lams, float))
    m, d, n = len(lams), problem.dim, problem.degeneracy
    sl = problem.tracked_slice
    evals, vecs = _eigh_family(problem, lams)
    noise = problem.noise_floor()
    threshold = RESOLVE_FACTOR * noise

    tracked = evals[:, sl]
    rest = np.concatenate([evals[:, : sl.start], evals[:, sl.stop:]], axis=1)
    if rest.shape[1]:
        gaps = np.minimum(
            np.abs(rest[:, :, None] - tracked[:, None, :]).min(axis=(1, 2)), np.inf
        )
        if np.any(gaps <= threshold):
            bad = float(lams[np.argmin(gaps)])
            raise TrackingFailure(f"tracked block merges with the rest of the spectrum at lam={bad}")

    # same-group membership of tracked labels at each lam
    link = np.diff(tracked, axis=1) <= threshold
    ids = np.concatenate([np.zeros((m, 1), int), np.cumsum(~link, axis=1)], axis=1)
    member = (ids[:, :, None] == ids[:, None, :]).astype(float)
    group_size = member.sum(axis=2)

    nodes, weights = _stencils(lams, dlam)
    _, node_vecs = _eigh_family(problem, nodes.reshape(-1))
    node_proj = _level_projectors(node_vecs, sl).reshape(m, 3, n, d, d)
    dp = np.einsum("mk,mkjab->mjab", weights, node_proj)
    proj = _level_projectors(vecs, sl)

    gproj = np.einsum("mjk,mkab->mjab", member, proj)
    gdp = np.einsum("mjk,mkab->mjab", member, dp)
    comm = gproj @ gdp - gdp @ gproj
    k = -0.5 * np.einsum("mj,mjab->mab", 1.0 / group_size, comm)
    prest = np.eye(d)[None] - proj.sum(axis=1)
    dprest = -dp.sum(axis=1)
    k -= 0.5 * (prest @ dprest - dprest @ prest)
    return k, tracked


def kato_generator_samples(problem, profile: SwitchingProfile, times, dlam=DEFAULT_DLAM):
    """``K(t) = f'(t) K~(f(t))`` on an array of times, plus tracked energies."""
    times = np.atleast_1d(np.asarray(times, float))
    f, fp, _ = profile.evaluate(times)
    f = np.clip(f, 0.0, 1.0)
    d = problem.dim
    k = np.zeros((len(times), d, d), dtype=complex)
    active = fp > 0
    energies = np.empty((len(times), problem.degeneracy))
    if np.any(active):
        kt, en = kato_generator_lambda(problem, f[active], dlam)
        k[active] = fp[active][:, None, None] * kt
        energies[active] = en
    if np.any(~active):
        w = np.linalg.eigvalsh(problem.h0.entries[None] + f[~active][:, None, None] * problem.v.entries[None])
        energies[~active] = w[:, problem.tracked_slice]
    return k, energies


def kato_generator(problem, profile, t: float, dlam: float = DEFAULT_DLAM) -> GeneratorSample:
    f, fp, _ = profile.evaluate(t)
    k, _ = kato_generator_samples(problem, profile, [t], dlam)
    k = k[0]
    h = problem.hamiltonian(float(f))
    w = np.linalg.eigvalsh(h)
    sl = problem.tracked_slice
    local = np.array(
        [np.abs(np.delete(w, i) - w[i]).min() if len(w) > 1 else np.inf for i in range(sl.start, sl.stop)]
    )
    ratio = spectral_norm(k) / float(fp) if fp > 0 else float("nan")
    return GeneratorSample(t=float(t), h=HermitianOperator(h), k=k, local_gaps=local, bound_ratio=ratio)


# -- integration driver -------------------------------------------------------

def _integrate(sample, t0: float, t1: float, step: float, dim: int, backend=None):
    kernel = get_kernel(backend)
    u = np.eye(dim, dtype=complex)
    if t1 == t0:
        return u, 0, 0.0, 0.0
    n = max(1, int(math.ceil((t1 - t0) / step - 1e-9)))
    h = (t1 - t0) / n
    worst = 0.0
    for start in range(0, n, CHUNK):
        m = min(CHUNK, n - start)
        ts = t0 + h * (start + 0.5 * np.arange(2 * m + 1))
        gen = np.ascontiguousarray(sample(ts), dtype=complex)
        worst = max(worst, kernel(gen, u, h))
        if not np.isfinite(worst) or worst > 1e-2:
            raise IntegrationFailure(f"unitarity lost near t={ts[-1]:.6g} (defect {worst:.3g})")
    return u, n, h, worst


def _check_interval(t0, t1):
    if t0 > t1:
        raise ValueError("expected t0 <= t1")
    if t1 > 0:
        raise ValueError("switching times must be <= 0")


def default_step(problem: PerturbationProblem, eps: float) -> float:
    return STEP_FACTOR * eps / problem.max_norm()


def _resolve_step(problem, eps, step):
    if eps <= 0:
        raise ValueError("eps must be positive")
    limit = MAX_STEP_FACTOR * eps / problem.max_norm()
    if step is None:
        return default_step(problem, eps)
    if step > limit * (1 + 1e-12):
        raise StepTooCoarse(f"step {step:.3g} does not resolve the fast phase (max {limit:.3g})")
    return step


def kato_evolve(problem, profile, s0: float, s1: float, step: float = DEFAULT_KATO_STEP,
                dlam: float = DEFAULT_DLAM, backend=None) -> PropagatorResult:
    _check_interval(s0, s1)
    u, n, h, worst = _integrate(
        lambda ts: kato_generator_samples(problem, profile, ts, dlam)[0], s0, s1, step, problem.dim, backend
    )
    return PropagatorResult(u, s0, s1, None, n, h, unitarity_defect(u), worst, Kind.KATO)


def _schrodinger_sampler(problem, profile, eps, with_k, dlam):
    h0, v = problem.h0.entries, problem.v.entries

    def sample(ts):
        f = profile.evaluate(ts)[0]
        g = (-1j / eps) * (h0[None] + f[:, None, None] * v[None])
        if with_k:
            g = g + kato_generator_samples(problem, profile, ts, dlam)[0]
        return g

    return sample


def _interaction_sampler(problem, profile, eps, with_k, dlam):
    """Generator of the interaction-picture propagator, in the H0 eigenbasis."""
    w, q = problem.h0_eigenvalues, problem.h0_eigenvectors
    vt = q.conj().T @ problem.v.entries @ q
    spread = w[:, None] - w[None, :]

    def sample(ts):
        f = profile.evaluate(ts)[0]
        inner = (-1j / eps) * f[:, None, None] * vt[None]
        if with_k:
            k = kato_generator_samples(problem, profile, ts, dlam)[0]
            inner = inner + q.conj().T[None] @ k @ q[None]
        return inner * np.exp(1j * ts[:, None, None] * spread[None] / eps)

    return sample


def _evolve(problem, profile, eps, t0, t1, step, picture, with_k, dlam, backend):
    _check_interval(t0, t1)
    step = _resolve_step(problem, eps, step)
    if picture == "schrodinger":
        sampler = _schrodinger_sampler(problem, profile, eps, with_k, dlam)
    elif picture == "interaction":
        sampler = _interaction_sampler(problem, profile, eps, with_k, dlam)
    else:
        raise ValueError(f"unknown picture {picture!r}")
    u, n, h, worst = _integrate(sampler, t0, t1, step, problem.dim, backend)
    if picture == "interaction":
        q = problem.h0_eigenvectors
        u = q @ u @ q.conj().T
    kind = Kind.ADIABATIC if with_k else Kind.FULL
    return PropagatorResult(u, t0, t1, eps, n, h, unitarity_defect(u), worst, kind, picture)


def full_evolve(problem, profile, eps: float, t0: float, t1: float, step: float | None = None,
                picture: str = "schrodinger", backend=None) -> PropagatorResult:
    """Propagator of ``i eps dU/dt = (H0 + f(t) V) U`` from ``t0`` to ``t1``.

    ``picture="interaction"`` integrates the interaction-picture propagator
    directly, which keeps the free ``H0`` phase out of the integration error.
    """
    return _evolve(problem, profile, eps, t0, t1, step, picture, False, DEFAULT_DLAM, backend)


def adiabatic_evolve(problem, profile, eps: float, t0: float, t1: float, step: float | None = None,
                     dlam: float = DEFAULT_DLAM, picture: str = "schrodinger", backend=None) -> PropagatorResult:
    """Propagator of ``i eps dU/dt = (H(t) + i eps K(t)) U``."""
    return _evolve(problem, profile, eps, t0, t1, step, picture, True, dlam, backend)


def free_phase(h0: HermitianOperator | np.ndarray, t: float, eps: float) -> np.ndarray:
    """``exp(i t H0 / eps)`` through the eigenbasis of ``H0``."""
    h0 = np.asarray(h0)
    w, q = np.linalg.eigh(h0)
    return (q * np.exp(1j * t * w / eps)) @ q.conj().T


def interaction_picture(result: PropagatorResult, h0) -> np.ndarray:
    if result.epsilon is None:
        raise ValueError("the Kato evolution carries no epsilon")
    if result.picture != "schrodinger":
        raise ValueError("propagator is already in the interaction picture")
    eps = result.epsilon
    return free_phase(h0, result.t_end, eps) @ result.unitary @ free_phase(h0, -result.t_start, eps)


@dataclass(frozen=True, eq=False)
class PastEvolution:
    """Interaction-picture propagator from the truncated remote past to 0."""

    unitary: np.ndarray
    t0: float
    cauchy_delta: float
    kind: Kind
    epsilon: float
    result: PropagatorResult


def evolve_from_past(problem, profile, eps: float, kind: Kind | str = Kind.FULL, tol: float = 1e-6,
                     step: float | None = None, dlam: float = DEFAULT_DLAM, backend=None) -> PastEvolution:
    """``U_int(0, t0)`` with ``t0`` the truncation time for ``tol * eps``.

    The start is pushed back by half the window (not past the support of a
    compactly supported profile) and the change of the propagator is recorded
    as ``cauchy_delta``; above ``10 * tol`` the truncation is rejected.
    """
    kind = Kind(kind)
    if kind is Kind.KATO:
        raise ValueError("use kato_evolve for the geometric evolution")
    with_k = kind is Kind.ADIABATIC
    t0 = truncation_time(profile, tol * eps)
    main = _evolve(problem, profile, eps, t0, 0.0, step, "interaction", with_k, dlam, backend)
    earlier = max(t0 - abs(t0) / 2, profile.support_start)
    if earlier < t0:
        seg = _evolve(problem, profile, eps, earlier, t0, step, "interaction", with_k, dlam, backend)
        delta = spectral_norm(seg.unitary - np.eye(problem.dim))
    else:
        delta = 0.0
    if delta > 10 * tol:
        raise NotConverged(f"truncated past not converged: Cauchy difference {delta:.3g} > {10 * tol:.3g}")
    return PastEvolution(main.unitary, t0, delta, kind, eps, main)
