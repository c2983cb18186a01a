import math
from dataclasses import replace

import numpy as np
import pytest
from scipy.integrate import simpson
from scipy.linalg import expm

from adiaswitch.errors import NotConverged, StepTooCoarse
from adiaswitch.operators import make_problem, spectral_frame, spectral_norm
from adiaswitch.propagation import (
    Kind,
    adiabatic_evolve,
    default_step,
    evolve_from_past,
    free_phase,
    full_evolve,
    interaction_picture,
    kato_evolve,
    kato_generator,
    kato_generator_lambda,
)
from adiaswitch.switching import Exponential, SmoothBump, truncation_time

EXP = Exponential()


def tracked_energy_integral(problem, profile, t0, t1, n=20001):
    ts = np.linspace(t0, t1, n)
    f = profile.evaluate(ts)[0]
    w = np.linalg.eigvalsh(problem.h0.entries[None] + f[:, None, None] * problem.v.entries[None])
    return simpson(w[:, problem.tracked_slice], x=ts, axis=0)


class TestFull:
    def test_free_evolution_is_matrix_exponential(self, free_problem):
        eps = 0.2
        exact = expm(-1j * free_problem.h0.entries * 1.5 / eps)
        r = full_evolve(free_problem, EXP, eps, -2.0, -0.5)
        assert np.abs(r.unitary - exact).max() < 1e-5
        fine = full_evolve(free_problem, EXP, eps, -2.0, -0.5, step=default_step(free_problem, eps) / 8)
        assert np.abs(fine.unitary - exact).max() < 1e-8
        assert r.kind is Kind.FULL and r.epsilon == eps

    def test_empty_interval(self, canonical):
        r = full_evolve(canonical, EXP, 0.1, -1.0, -1.0)
        assert np.array_equal(r.unitary, np.eye(4)) and r.step_count == 0

    def test_coarse_step_rejected(self, canonical):
        limit = 0.1 * 0.1 / canonical.max_norm()
        with pytest.raises(StepTooCoarse):
            full_evolve(canonical, EXP, 0.1, -1.0, 0.0, step=1.5 * limit)
        full_evolve(canonical, EXP, 0.1, -0.01, 0.0, step=limit)

    def test_interval_validation(self, canonical):
        with pytest.raises(ValueError):
            full_evolve(canonical, EXP, 0.1, 0.0, -1.0)
        with pytest.raises(ValueError):
            full_evolve(canonical, EXP, 0.1, -1.0, 0.5)
        with pytest.raises(ValueError):
            full_evolve(canonical, EXP, 0.0, -1.0, 0.0)

    def test_step_halving_and_order(self, canonical):
        h = default_step(canonical, 0.1)
        runs = [full_evolve(canonical, EXP, 0.1, -1.0, 0.0, step=h / k) for k in (1, 2, 4)]
        for r in runs:
            assert r.unitarity_defect <= 1e-8 and r.pre_defect <= 1e-6
        e1 = np.abs(runs[0].unitary - runs[1].unitary).max()
        e2 = np.abs(runs[1].unitary - runs[2].unitary).max()
        assert e1 <= 1e-6
        assert e1 / e2 >= 8

    def test_step_halving_interaction_picture(self, canonical):
        h = default_step(canonical, 0.1)
        t0 = math.log(1e-7)
        a = full_evolve(canonical, EXP, 0.1, t0, 0.0, step=h, picture="interaction")
        b = full_evolve(canonical, EXP, 0.1, t0, 0.0, step=h / 2, picture="interaction")
        assert np.abs(a.unitary - b.unitary).max() <= 1e-6

    def test_pictures_agree(self, canonical):
        s = full_evolve(canonical, EXP, 0.2, -2.0, 0.0, step=default_step(canonical, 0.2) / 4)
        i = full_evolve(canonical, EXP, 0.2, -2.0, 0.0, picture="interaction")
        assert np.abs(interaction_picture(s, canonical.h0) - i.unitary).max() < 1e-6

    def test_unknown_picture(self, canonical):
        with pytest.raises(ValueError):
            full_evolve(canonical, EXP, 0.1, -1.0, 0.0, picture="heisenberg")


class TestComposition:
    # grids chosen so both routes take the same steps
    def test_full(self, canonical):
        h = 0.0015
        a = full_evolve(canonical, EXP, 0.1, -3.0, -1.5, step=h).unitary
        b = full_evolve(canonical, EXP, 0.1, -1.5, 0.0, step=h).unitary
        c = full_evolve(canonical, EXP, 0.1, -3.0, 0.0, step=h).unitary
        assert np.abs(b @ a - c).max() <= 1e-7

    def test_adiabatic(self, canonical):
        h = 0.0015
        a = adiabatic_evolve(canonical, EXP, 0.1, -3.0, -1.5, step=h).unitary
        b = adiabatic_evolve(canonical, EXP, 0.1, -1.5, 0.0, step=h).unitary
        c = adiabatic_evolve(canonical, EXP, 0.1, -3.0, 0.0, step=h).unitary
        assert np.abs(b @ a - c).max() <= 1e-7

    def test_kato(self, canonical):
        a = kato_evolve(canonical, EXP, -6.0, -2.0, step=0.01).unitary
        b = kato_evolve(canonical, EXP, -2.0, 0.0, step=0.01).unitary
        c = kato_evolve(canonical, EXP, -6.0, 0.0, step=0.01).unitary
        assert np.abs(b @ a - c).max() <= 1e-7


class TestKato:
    def test_trivial_cases(self, canonical, free_problem):
        assert np.array_equal(kato_evolve(canonical, EXP, -1.0, -1.0).unitary, np.eye(4))
        assert np.abs(kato_evolve(free_problem, EXP, -5.0, 0.0).unitary - np.eye(4)).max() < 1e-14

    def test_intertwining_from_truncated_past(self, canonical):
        s0 = truncation_time(EXP, 1e-8)
        r = kato_evolve(canonical, EXP, s0, 0.0)
        assert r.unitarity_defect <= 1e-8
        start = spectral_frame(canonical, EXP.evaluate(s0)[0])
        end = spectral_frame(canonical, 1.0)
        for j in range(2):
            moved = r.unitary @ start.level_projector(j) @ r.unitary.conj().T
            assert spectral_norm(moved - end.level_projector(j)) <= 1e-6

    def test_step_order(self, canonical):
        us = [kato_evolve(canonical, EXP, -3.0, 0.0, step=s).unitary for s in (0.1, 0.05, 0.025)]
        e1 = np.abs(us[0] - us[1]).max()
        e2 = np.abs(us[1] - us[2]).max()
        assert e1 / e2 >= 8


class TestGenerator:
    def test_vanishes_for_constant_projectors(self, free_problem, commuting_problem):
        for p in (free_problem, commuting_problem):
            for t in (-3.0, -0.5, 0.0):
                assert np.abs(kato_generator(p, EXP, t).k).max() < 1e-12

    def test_anti_hermitian_and_bounded(self, canonical):
        ratios = []
        for t in np.linspace(-12, 0, 25):
            s = kato_generator(canonical, EXP, t)
            assert np.abs(s.k + s.k.conj().T).max() <= 1e-9
            ratios.append(s.bound_ratio)
        ratios = np.array(ratios)
        assert np.all(np.isfinite(ratios))
        # ||K|| / f' stays within a fixed band over twelve decades of f
        assert ratios.max() < 10 and ratios.max() / max(ratios.min(), 1e-300) < 100

    def test_richardson_in_dlam(self, canonical):
        lams = np.array([0.0, 0.3, 0.7, 1.0])
        coarse, _ = kato_generator_lambda(canonical, lams, 1e-3)
        fine, _ = kato_generator_lambda(canonical, lams, 1e-4)
        assert np.abs(coarse - fine).max() < 1e-5

    def test_local_gaps(self, canonical):
        s = kato_generator(canonical, EXP, 0.0)
        w = np.linalg.eigvalsh(canonical.hamiltonian(1.0))
        assert s.local_gaps[0] == pytest.approx(w[1] - w[0])
        assert s.local_gaps[1] == pytest.approx(min(w[1] - w[0], w[2] - w[1]))


class TestAdiabatic:
    def test_free_problem_matches_full(self, free_problem):
        a = adiabatic_evolve(free_problem, EXP, 0.1, -2.0, 0.0).unitary
        b = full_evolve(free_problem, EXP, 0.1, -2.0, 0.0).unitary
        assert np.abs(a - b).max() < 1e-12

    def test_intertwining(self, canonical):
        eps, t0 = 0.1, -8.0
        r = adiabatic_evolve(canonical, EXP, eps, t0, 0.0)
        assert r.kind is Kind.ADIABATIC and r.unitarity_defect <= 1e-8
        start = spectral_frame(canonical, EXP.evaluate(t0)[0])
        end = spectral_frame(canonical, 1.0)
        for j in range(2):
            moved = r.unitary @ start.level_projector(j) @ r.unitary.conj().T
            assert spectral_norm(moved - end.level_projector(j)) <= 1e-6

    def test_phase_relation(self, canonical):
        eps, t0 = 0.1, -6.0
        ua = adiabatic_evolve(canonical, EXP, eps, t0, 0.0).unitary
        a = kato_evolve(canonical, EXP, t0, 0.0, step=0.002).unitary
        start = spectral_frame(canonical, EXP.evaluate(t0)[0])
        integrals = tracked_energy_integral(canonical, EXP, t0, 0.0)
        for j in range(2):
            p = start.level_projector(j)
            phase = np.exp(-1j * integrals[j] / eps)
            assert np.abs(ua @ p - phase * a @ p).max() <= 1e-5

    def test_commuting_case_diagonal_phases(self, commuting_problem):
        eps, t0 = 0.1, -4.0
        step = default_step(commuting_problem, eps) / 4
        u = adiabatic_evolve(commuting_problem, EXP, eps, t0, 0.0, step=step).unitary
        mass = 1.0 - math.exp(t0)
        e0 = np.diag(commuting_problem.h0.entries).real
        v = np.diag(commuting_problem.v.entries).real
        expected = np.diag(np.exp(-1j * (e0 * (0.0 - t0) + v * mass) / eps))
        assert np.abs(u - expected).max() < 1e-6


class TestInteractionPicture:
    def test_free_problem_gives_identity(self, free_problem):
        r = full_evolve(free_problem, EXP, 0.1, -2.0, 0.0)
        exact = replace(r, unitary=expm(-2j * free_problem.h0.entries / 0.1))
        assert np.abs(interaction_picture(exact, free_problem.h0) - np.eye(4)).max() < 1e-12
        assert np.abs(interaction_picture(r, free_problem.h0) - np.eye(4)).max() < 1e-5

    def test_zero_times_leave_unitary_unchanged(self, canonical):
        r = full_evolve(canonical, EXP, 0.1, 0.0, 0.0)
        assert np.array_equal(interaction_picture(r, canonical.h0), r.unitary)

    def test_canonical_unitary(self, canonical):
        r = full_evolve(canonical, EXP, 0.1, -2.0, 0.0)
        u = interaction_picture(r, canonical.h0)
        assert np.abs(u.conj().T @ u - np.eye(4)).max() <= 1e-8

    def test_rejects_kato_and_interaction_results(self, canonical):
        with pytest.raises(ValueError):
            interaction_picture(kato_evolve(canonical, EXP, -1.0, 0.0), canonical.h0)
        r = full_evolve(canonical, EXP, 0.1, -1.0, 0.0, picture="interaction")
        with pytest.raises(ValueError):
            interaction_picture(r, canonical.h0)

    def test_free_phase(self):
        h0 = np.diag([0.0, 1.0])
        assert np.allclose(free_phase(h0, 0.5, 0.25), np.diag([1.0, np.exp(2j)]))


class TestFromPast:
    def test_free_problem(self, free_problem):
        past = evolve_from_past(free_problem, EXP, 0.1, "full")
        assert np.abs(past.unitary - np.eye(4)).max() < 1e-12
        assert past.cauchy_delta < 1e-12

    def test_canonical_cauchy(self, canonical):
        past = evolve_from_past(canonical, EXP, 0.25, "full", tol=1e-6)
        assert past.cauchy_delta <= 1e-5
        assert past.t0 == pytest.approx(math.log(0.25e-6))
        assert past.result.unitarity_defect <= 1e-8

    def test_bump_starts_at_support(self, canonical):
        past = evolve_from_past(canonical, SmoothBump(-3.0), 0.1, "adiabatic")
        assert past.t0 == -3.0 and past.cauchy_delta == 0.0

    def test_not_converged(self, canonical):
        # the neglected tail scales like tol * ||V||, so a strong V overshoots 10 * tol
        strong = make_problem(canonical.h0.entries, 30 * canonical.v.entries)
        with pytest.raises(NotConverged):
            evolve_from_past(strong, EXP, 0.25, "full", tol=1e-4)

    def test_kato_kind_rejected(self, canonical):
        with pytest.raises(ValueError):
            evolve_from_past(canonical, EXP, 0.1, "kato")

    def test_strongly_coupled_problem(self):
        p = make_problem(np.diag([0.0, 0.0, 1.0]), 0.3 * np.array([[1, 1, 1], [1, -1, 1], [1, 1, 0.5]]))
        past = evolve_from_past(p, EXP, 0.2, "adiabatic")
        assert np.abs(past.unitary.conj().T @ past.unitary - np.eye(3)).max() <= 1e-8
