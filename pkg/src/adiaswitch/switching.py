"""Switching functions f: (-inf, 0] -> [0, 1] with first and second derivatives."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson
from scipy.interpolate import CubicSpline

from .errors import PositiveTime


class SwitchingProfile:
    """Base class; subclasses implement :meth:`evaluate` on arrays."""

    kind = "abstract"
    support_start = -math.inf

    def evaluate(self, tau):
        raise NotImplementedError

    def __call__(self, tau):
        return self.evaluate(tau)[0]

    def to_config(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Exponential(SwitchingProfile):
    kind = "exponential"

    def evaluate(self, tau):
        e = np.exp(np.asarray(tau, float))
        return e, e, e

    def to_config(self):
        return {"kind": "exponential"}


@dataclass(frozen=True)
class SmoothBump(SwitchingProfile):
    """Quintic smoothstep ramp on ``[rf, 0]``, identically zero to its left."""

    rf: float = -1.0
    kind = "bump"

    def __post_init__(self):
        if not self.rf < 0:
            raise ValueError("support endpoint rf must be negative")

    @property
    def support_start(self):
        return self.rf

    def evaluate(self, tau):
        tau = np.asarray(tau, float)
        width = -self.rf
        x = np.clip((tau - self.rf) / width, 0.0, 1.0)
        f = x**3 * (10 - 15 * x + 6 * x**2)
        fp = 30 * x**2 * (1 - x) ** 2 / width
        fpp = 60 * x * (1 - x) * (1 - 2 * x) / width**2
        return f, fp, fpp

    def to_config(self):
        return {"kind": "bump", "rf": self.rf}


@dataclass(frozen=True, eq=False)
class Tabulated(SwitchingProfile):
    """Cubic-spline profile through user samples.

    Left of the table the profile continues as an exponential tail matching
    value and slope at the first node (or zero if the first value is zero).
    """

    tau: tuple
    values: tuple
    kind = "table"
    _spline: CubicSpline = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        t = np.asarray(self.tau, float)
        y = np.asarray(self.values, float)
        if t.ndim != 1 or t.shape != y.shape or len(t) < 4:
            raise ValueError("table needs matching tau/f arrays with at least 4 points")
        if np.any(np.diff(t) <= 0):
            raise ValueError("tau must be strictly increasing")
        if t[-1] > 0:
            raise PositiveTime("table extends past tau = 0")
        object.__setattr__(self, "tau", tuple(t))
        object.__setattr__(self, "values", tuple(y))
        object.__setattr__(self, "_spline", CubicSpline(t, y))

    def _tail_rate(self):
        f0 = self.values[0]
        fp0 = float(self._spline(self.tau[0], 1))
        return fp0 / f0 if f0 > 0 and fp0 > 0 else None

    def evaluate(self, tau):
        tau = np.asarray(tau, float)
        t0 = self.tau[0]
        inside = np.clip(tau, t0, 0.0)
        f = self._spline(inside)
        fp = self._spline(inside, 1)
        fpp = self._spline(inside, 2)
        left = tau < t0
        if np.any(left):
            rate = self._tail_rate()
            if rate is None:
                tail = np.zeros_like(tau)
                rate = 0.0
            else:
                tail = self.values[0] * np.exp(rate * (tau - t0))
            f = np.where(left, tail, f)
            fp = np.where(left, rate * tail, fp)
            fpp = np.where(left, rate**2 * tail, fpp)
        return f, fp, fpp

    def to_config(self):
        return {"kind": "table", "tau": list(self.tau), "f": list(self.values)}


def profile_from_config(cfg: dict) -> SwitchingProfile:
    kind = cfg.get("kind")
    if kind == "exponential":
        return Exponential()
    if kind == "bump":
        return SmoothBump(float(cfg.get("rf", -1.0)))
    if kind == "table":
        return Tabulated(tuple(cfg["tau"]), tuple(cfg["f"]))
    raise ValueError(f"unknown profile kind {kind!r}")


def eval_profile(p: SwitchingProfile, tau: float) -> tuple[float, float, float]:
    if tau > 0:
        raise PositiveTime(f"switching time must be <= 0, got {tau}")
    f, fp, fpp = p.evaluate(tau)
    return float(f), float(fp), float(fpp)


@dataclass(frozen=True)
class ProfileReport:
    monotone: bool
    bounded: bool
    ends_at_one: bool
    integral_f: float
    integral_abs_fpp: float
    integral_fp_squared: float
    grid: tuple = field(repr=False)

    @property
    def integrals_finite(self) -> bool:
        return all(
            math.isfinite(x)
            for x in (self.integral_f, self.integral_abs_fpp, self.integral_fp_squared)
        )

    @property
    def passed(self) -> bool:
        return self.monotone and self.bounded and self.ends_at_one and self.integrals_finite

    def as_dict(self) -> dict:
        return {
            "monotone": self.monotone,
            "bounded": self.bounded,
            "ends_at_one": self.ends_at_one,
            "integral_f": self.integral_f,
            "integral_abs_fpp": self.integral_abs_fpp,
            "integral_fp_squared": self.integral_fp_squared,
            "passed": self.passed,
        }


def default_grid(p: SwitchingProfile, n: int = 4001) -> np.ndarray:
    start = p.support_start if math.isfinite(p.support_start) else -40.0
    if isinstance(p, Tabulated):
        start = min(p.tau[0], -40.0) if p._tail_rate() else p.tau[0]
    return np.linspace(start, 0.0, n)


def certify_profile(p: SwitchingProfile, grid=None, tol: float = 1e-12) -> ProfileReport:
    """Numerical witnesses for monotonicity, f(0) = 1 and integrability."""
    grid = default_grid(p) if grid is None else np.asarray(grid, float)
    if np.any(np.diff(grid) < 0) or grid[-1] > 0:
        raise ValueError("grid must be sorted and lie in (-inf, 0]")
    f, fp, fpp = p.evaluate(grid)
    # a spline can dip between nodes, so also test the values themselves
    monotone = bool(np.all(fp >= -tol) and np.all(np.diff(f) >= -tol))
    if isinstance(p, Tabulated):
        monotone = monotone and bool(np.all(np.diff(p.values) >= 0))
    bounded = bool(np.all(f >= -tol) and np.all(f <= 1 + tol))
    ends = abs(p.evaluate(0.0)[0] - 1.0) <= 1e-12
    return ProfileReport(
        monotone=monotone,
        bounded=bounded,
        ends_at_one=bool(ends),
        integral_f=float(simpson(np.abs(f), x=grid)),
        integral_abs_fpp=float(simpson(np.abs(fpp), x=grid)),
        integral_fp_squared=float(simpson(fp**2, x=grid)),
        grid=tuple(grid),
    )


def truncation_time(p: SwitchingProfile, tol: float) -> float:
    """Largest tau0 <= 0 with the integral of f over (-inf, tau0] at most ``tol``."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    if isinstance(p, Exponential):
        return min(0.0, math.log(tol))
    if math.isfinite(p.support_start):
        return float(p.support_start)
    if isinstance(p, Tabulated):
        rate = p._tail_rate()
        t = np.asarray(p.tau)
        f = np.asarray(p.values)
        tail = f[0] / rate if rate else 0.0
        if tail >= tol and rate:
            # inside the exponential tail: f0/rate * exp(rate (tau - t0)) = tol
            return float(t[0] + math.log(tol * rate / f[0]) / rate)
        fine = np.linspace(t[0], 0.0, 20 * len(t))
        vals = p(fine)
        cum = tail + np.concatenate(
            [[0.0], np.cumsum(0.5 * (vals[1:] + vals[:-1]) * np.diff(fine))]
        )
        ok = np.nonzero(cum <= tol)[0]
        return float(fine[ok[-1]]) if len(ok) else float(t[0])
    raise TypeError(f"no truncation rule for {type(p).__name__}")
