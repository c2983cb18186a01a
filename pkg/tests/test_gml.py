import json
import math

import numpy as np
import pytest

from adiaswitch.degeneracy import build_initial_basis
from adiaswitch.errors import StageConditionViolated, VanishingDenominator
from adiaswitch.gml import (
    align_phase,
    check_ratio_condition,
    eigen_residual,
    gap_diagnostics,
    geometric_eigenstate,
    gml_ratio,
    gml_sweep,
    multistep_gml,
    permanent_degeneracy_ratio,
    phase_free_distance,
    stage_problem,
)
from adiaswitch.io import load_shipped
from adiaswitch.operators import make_problem, spectral_frame
from adiaswitch.propagation import kato_evolve
from adiaswitch.switching import Exponential, SmoothBump, truncation_time

EXP = Exponential()
SQRT125 = math.sqrt(1.25)


def rotated_problem(theta):
    """Nondegenerate 2-level family whose ground vector ends at angle theta from e1."""
    c, s = math.cos(theta), math.sin(theta)
    r = np.array([[c, -s], [s, c]])
    h1 = r @ np.diag([-1.0, 1.5]) @ r.T
    return make_problem(np.diag([0.0, 1.0]), h1 - np.diag([0.0, 1.0]))


@pytest.fixture(scope="module")
def canonical_sweep(canonical, canonical_basis):
    return gml_sweep(canonical, EXP, canonical_basis, 0, [0.4, 0.2, 0.1, 0.05])


class TestHelpers:
    def test_eigen_residual(self):
        h = np.diag([1.0, 2.0])
        assert eigen_residual(h, [3.0, 0.0]) == (0.0, 1.0)
        res, energy = eigen_residual(h, [1.0, 1.0])
        assert energy == pytest.approx(1.5) and res == pytest.approx(0.5)
        with pytest.raises(ValueError):
            eigen_residual(h, [0.0, 0.0])

    def test_phase_tools(self):
        a = np.array([1.0, 1j]) / math.sqrt(2)
        b = np.exp(0.7j) * a * 3
        assert phase_free_distance(a, b) < 1e-15
        aligned = align_phase(b, a)
        assert np.allclose(aligned, a)


class TestGeometricEigenstate:
    def test_free_problem(self, free_problem):
        b = build_initial_basis(free_problem)
        vec, energy = geometric_eigenstate(free_problem, EXP, b, 0)
        assert np.allclose(vec, b.vectors[:, 0], atol=1e-12) and energy == pytest.approx(0.0, abs=1e-14)

    def test_commuting_problem(self, commuting_problem):
        b = build_initial_basis(commuting_problem)
        vec, energy = geometric_eigenstate(commuting_problem, EXP, b, 1)
        assert np.allclose(vec, b.vectors[:, 1], atol=1e-12)
        assert energy == pytest.approx(0.3)

    def test_canonical(self, canonical, canonical_basis):
        w, q = np.linalg.eigh(canonical.hamiltonian(1.0))
        for j in range(2):
            vec, energy = geometric_eigenstate(canonical, EXP, canonical_basis, j)
            assert eigen_residual(canonical.hamiltonian(1.0), vec)[0] <= 1e-5
            assert abs(np.vdot(q[:, j], vec)) >= 0.99999
            assert energy == pytest.approx(w[j], abs=1e-8)

    def test_one_dimensional_identity(self, canonical, canonical_basis):
        a = kato_evolve(canonical, EXP, truncation_time(EXP, 1e-8), 0.0).unitary
        end = spectral_frame(canonical, 1.0)
        for j in range(2):
            psi = canonical_basis.vectors[:, j]
            lhs = np.vdot(psi, a.conj().T @ psi) * (a @ psi)
            assert np.abs(lhs - end.level_projector(j) @ psi).max() <= 1e-5


class TestRatio:
    def test_free_problem(self, free_problem):
        b = build_initial_basis(free_problem)
        o = gml_ratio(free_problem, EXP, b, 1, 0.1)
        assert np.allclose(o.state, b.vectors[:, 1], atol=1e-12)
        assert o.eigen_residual < 1e-12 and o.condition_norm < 1e-12

    @pytest.mark.parametrize("eps", [0.2, 0.05])
    def test_toy_eigenvector(self, toy, eps):
        e1 = np.array([1.0, 0.0])
        o = gml_ratio(toy, EXP, build_initial_basis(toy), 0, eps, psi=e1)
        assert np.abs(o.state - e1).max() < 1e-9
        # the denominator carries the phase exp(-i/eps) of the full switching
        assert o.denominator == pytest.approx(np.exp(-1j / eps), abs=1e-5)

    @pytest.mark.parametrize("eps", [0.2, 0.05])
    def test_toy_generic_state(self, toy, eps):
        psi = np.array([1.0, 1.0]) / math.sqrt(2)
        o = gml_ratio(toy, EXP, build_initial_basis(toy), 0, eps, psi=psi)
        image = np.array([np.exp(-1j / eps), np.exp(1j / eps)]) * psi
        expected = image / np.vdot(psi, image)
        assert np.abs(o.state - expected).max() < 1e-5

    def test_scaling_equivariance(self, canonical, canonical_basis):
        phi = canonical_basis.vectors[:, 0]
        a = gml_ratio(canonical, EXP, canonical_basis, 0, 0.2)
        b = gml_ratio(canonical, EXP, canonical_basis, 0, 0.2, psi=(2.5 - 1.5j) * phi)
        assert b.eigen_residual == pytest.approx(a.eigen_residual, abs=1e-10)
        assert b.rayleigh_energy == pytest.approx(a.rayleigh_energy, abs=1e-10)

    def test_adiabatic_kind_is_epsilon_independent(self, canonical, canonical_basis):
        geo, _ = geometric_eigenstate(canonical, EXP, canonical_basis, 1)
        for eps in (0.4, 0.1):
            o = gml_ratio(canonical, EXP, canonical_basis, 1, eps, kind="adiabatic")
            assert phase_free_distance(o.state, geo) <= 1e-6

    def test_full_approaches_adiabatic(self, canonical, canonical_basis):
        gaps = []
        for eps in (0.4, 0.2, 0.1):
            full = gml_ratio(canonical, EXP, canonical_basis, 0, eps)
            adia = gml_ratio(canonical, EXP, canonical_basis, 0, eps, kind="adiabatic")
            gaps.append(phase_free_distance(full.state, adia.state))
        assert gaps[0] > gaps[1] > gaps[2]

    def test_vanishing_denominator(self, free_problem):
        b = build_initial_basis(free_problem)
        with pytest.raises(VanishingDenominator) as info:
            gml_ratio(free_problem, EXP, b, 0, 0.1, psi=np.eye(4)[2] * 1e-9)
        assert abs(info.value.denominator) < 1e-8


class TestCondition:
    def test_trivial(self, free_problem, commuting_problem):
        for p in (free_problem, commuting_problem):
            ok, norm = check_ratio_condition(p, build_initial_basis(p), 0)
            assert ok and norm < 1e-12

    @pytest.mark.parametrize("theta", [0.3, 0.9, 1.3])
    def test_rotation_angle(self, theta):
        p = rotated_problem(theta)
        ok, norm = check_ratio_condition(p, build_initial_basis(p), 0)
        assert ok and norm == pytest.approx(math.sin(theta), abs=1e-12)

    def test_right_angle_fails(self):
        p = load_shipped("large_rotation")
        ok, norm = check_ratio_condition(p, build_initial_basis(p), 0)
        assert not ok and norm == pytest.approx(1.0, abs=1e-12)


class TestSweep:
    def test_canonical_deltas(self, canonical_sweep):
        assert canonical_sweep.deltas_decreasing
        assert not canonical_sweep.errors

    def test_residuals_non_increasing(self, canonical_sweep):
        res = [o.eigen_residual for o in canonical_sweep.outcomes]
        for a, b in zip(res[:-1], res[1:]):
            assert b <= 1.1 * a

    def test_free_problem(self, free_problem):
        rec = gml_sweep(free_problem, EXP, build_initial_basis(free_problem), 0, [0.4, 0.2, 0.1, 0.05])
        assert np.all(rec.cauchy_deltas < 1e-12)

    def test_validation(self, canonical, canonical_basis):
        with pytest.raises(ValueError):
            gml_sweep(canonical, EXP, canonical_basis, 0, [0.4, 0.2, 0.1])
        with pytest.raises(ValueError):
            gml_sweep(canonical, EXP, canonical_basis, 0, [0.4, 0.2, 0.2, 0.1])

    def test_errors_recorded(self, free_problem):
        b = build_initial_basis(free_problem)
        rec = gml_sweep(free_problem, EXP, b, 0, [0.4, 0.2, 0.1, 0.05], psi=np.eye(4)[2] * 1e-9,
                        reference=np.eye(4)[2])
        assert len(rec.errors) == 4 and np.all(np.isnan(rec.cauchy_deltas))
        assert not rec.deltas_decreasing

    def test_outputs(self, canonical_sweep, tmp_path):
        canonical_sweep.to_csv(tmp_path / "sweep.csv")
        lines = (tmp_path / "sweep.csv").read_text().splitlines()
        assert lines[0] == "epsilon,denominator_abs,eigen_residual,cauchy_delta,adiabatic_error"
        assert len(lines) == 5
        canonical_sweep.write_json(tmp_path / "sweep.json", {"note": "x"})
        data = json.loads((tmp_path / "sweep.json").read_text())
        assert data["deltas_decreasing"] and data["note"] == "x"

    def test_threaded_matches_serial(self, toy, monkeypatch):
        b = build_initial_basis(toy)
        psi = np.array([1.0, 1.0]) / math.sqrt(2)
        eps = [0.2, 0.1, 0.05, 0.025]
        serial = gml_sweep(toy, EXP, b, 0, eps, psi=psi, workers=1)
        monkeypatch.setenv("ADIASWITCH_WORKERS", "3")
        threaded = gml_sweep(toy, EXP, b, 0, eps, psi=psi)
        assert np.array_equal(serial.cauchy_deltas, threaded.cauchy_deltas)


class TestMultistep:
    def test_single_stage_agrees(self, canonical, canonical_basis):
        one = gml_ratio(canonical, EXP, canonical_basis, 0, 0.2)
        ms = multistep_gml(canonical, EXP, canonical_basis, 0, [0.0, 1.0], 0.2)
        assert np.abs(one.state - ms.state).max() < 1e-12

    def test_two_stages_no_worse(self, canonical, canonical_basis):
        eps = 0.1
        one = gml_ratio(canonical, EXP, canonical_basis, 0, eps)
        two = multistep_gml(canonical, EXP, canonical_basis, 0, [0.0, 0.5, 1.0], eps)
        assert len(two.stage_denominators) == 2
        assert two.eigen_residual <= 2 * one.eigen_residual

    def test_stage_problem(self, canonical):
        sp = stage_problem(canonical, 0.25, 0.75)
        assert np.allclose(sp.hamiltonian(1.0), canonical.hamiltonian(0.75))
        assert np.allclose(sp.hamiltonian(0.0), canonical.hamiltonian(0.25))
        assert sp.tracked_slice == canonical.tracked_slice

    def test_breakpoint_validation(self, canonical, canonical_basis):
        for bad in ([0.0], [0.1, 1.0], [0.0, 0.6, 0.4, 1.0], [0.0, 0.9]):
            with pytest.raises(ValueError):
                multistep_gml(canonical, EXP, canonical_basis, 0, bad, 0.1)

    def test_stage_condition(self):
        p = load_shipped("large_rotation")
        with pytest.raises(StageConditionViolated):
            multistep_gml(p, EXP, build_initial_basis(p), 0, [0.0, 1.0], 0.1)

    def test_rescue_adiabatic_kind(self):
        p = load_shipped("large_rotation")
        b = build_initial_basis(p)
        o = multistep_gml(p, EXP, b, 0, [0.0, 0.5, 1.0], 0.1, kind="adiabatic")
        assert o.eigen_residual <= 1e-5
        assert min(abs(d) for d in o.stage_denominators) > 0.5


class TestPermanentDegeneracy:
    def test_reduces_to_ratio(self, canonical, canonical_basis):
        phi = canonical_basis.vectors[:, 1]
        a = gml_ratio(canonical, EXP, canonical_basis, 1, 0.2)
        b = permanent_degeneracy_ratio(canonical, EXP, phi, phi, 0.2)
        assert np.abs(a.state - b.state).max() < 1e-14

    def test_free_problem(self, free_problem):
        psi = np.array([0.6, 0.8j, 0.0, 0.0])
        ref = np.array([1.0, 0.0, 0.0, 0.0])
        o = permanent_degeneracy_ratio(free_problem, EXP, psi, ref, 0.1)
        assert np.allclose(o.state, psi / 0.6, atol=1e-10)
        assert o.eigen_residual < 1e-12

    def test_orthogonal_reference_flags(self, free_problem):
        o = permanent_degeneracy_ratio(free_problem, EXP, np.eye(4)[0], np.eye(4)[1], 0.1)
        assert o.degenerate and np.all(np.isnan(o.state))

    def test_rank_two_block(self):
        p = load_shipped("permanent")
        assert build_initial_basis(p).residual_groups == ((0, 1),)
        psi = 0.6 * np.eye(6)[0] + 0.8 * np.eye(6)[3]
        # a compactly supported switch keeps the O(eps) nonadiabatic leakage small
        o = permanent_degeneracy_ratio(p, SmoothBump(-8.0), psi, np.eye(6)[0], 0.05)
        assert not o.degenerate
        assert o.eigen_residual <= 1e-4
        proj = spectral_frame(p, 1.0).tracked_projector()
        u = o.unit_state
        assert np.linalg.norm(u - proj @ u) <= 1e-4


class TestGaps:
    def test_canonical_ratio_band(self, canonical):
        t = np.log(np.geomspace(1e-4, 0.05, 30))
        table = gap_diagnostics(canonical, EXP, t)
        split = 2 * SQRT125
        assert 0.9 * split <= table.alpha_min <= table.alpha_max <= 1.1 * split
        assert table.splitting

    def test_free_problem(self, free_problem):
        table = gap_diagnostics(free_problem, EXP, np.linspace(-3, 0, 7))
        assert np.all(table.local_gaps == 0) and not table.splitting

    def test_global_gap_at_zero(self, canonical, tmp_path):
        table = gap_diagnostics(canonical, EXP, [-1.0, 0.0])
        assert table.global_gaps[-1] == pytest.approx(spectral_frame(canonical, 1.0).global_gap)
        table.to_csv(tmp_path / "gaps.csv")
        assert len((tmp_path / "gaps.csv").read_text().splitlines()) == 5

    def test_requires_positive_switching(self, canonical):
        with pytest.raises(ValueError):
            gap_diagnostics(canonical, SmoothBump(-1.0), [-2.0, 0.0])
