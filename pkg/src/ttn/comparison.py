"""Scalar and planar comparison ODE systems with closed forms where known.

These are the extremal dynamics of the differential inequalities that control
the PDE diagnostics: the inequalities are integrated as equalities, and PDE
trajectories are checked one-sidedly against them.  The constants multiplying
the superlinear terms come from embedding arguments and are not quantified;
the defaults below were calibrated once against fine-step reference runs and
then frozen.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

# calibrated against fine-step deterministic reference runs (see tests)
C_FKPP_DEFAULT = 2.0
C_KSE_DEFAULT = 1.0


class ComparisonError(ValueError):
    pass


@dataclass(frozen=True)
class ComparisonState:
    """Mean-type variable x and nonnegative fluctuation energy y."""

    x: float
    y: float

    def __post_init__(self):
        if self.y < 0:
            raise ComparisonError("fluctuation energy must be nonnegative")


def _rk4(f: Callable, state: np.ndarray, dt: float) -> np.ndarray:
    k1 = f(state)
    k2 = f(state + 0.5 * dt * k1)
    k3 = f(state + 0.5 * dt * k2)
    k4 = f(state + dt * k3)
    return state + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def fkpp_system_step(s: ComparisonState, lam: float, C: float,
                     dt: float) -> ComparisonState:
    """x' = y + x^2 - x, y' = (-lam + 4x) y + C y^3 (equality version)."""
    if dt <= 0:
        raise ComparisonError("dt must be positive")

    def f(v):
        x, y = v
        y = max(y, 0.0)
        return np.array([y + x * x - x, (-lam + 4 * x) * y + C * y ** 3])

    x, y = _rk4(f, np.array([s.x, s.y]), dt)
    return ComparisonState(x, max(y, 0.0))


def kse_system_step(s: ComparisonState, lam: float, C: float,
                    dt: float) -> ComparisonState:
    """x' = y, y' = -lam y + C y^2 (equality version)."""
    if dt <= 0:
        raise ComparisonError("dt must be positive")

    def f(v):
        x, y = v
        y = max(y, 0.0)
        return np.array([y, -lam * y + C * y * y])

    x, y = _rk4(f, np.array([s.x, s.y]), dt)
    return ComparisonState(x, max(y, 0.0))


def mean_zero_comparison_step(x: float, lam_nu: float, C2: float,
                              beta_tilde: float, dt: float) -> float:
    """One step of x' = -lam_nu x + C2 (1 + x^{beta_tilde/2}), kept >= 0."""
    if dt <= 0:
        raise ComparisonError("dt must be positive")
    if x < 0:
        raise ComparisonError("x must be nonnegative")

    def f(v):
        xv = max(float(v[0]), 0.0)
        return np.array([-lam_nu * xv + C2 * (1.0 + xv ** (beta_tilde / 2.0))])

    out = _rk4(f, np.array([x]), dt)
    return max(float(out[0]), 0.0)


def riccati_blowup(y0: float):
    """Closed form of y' = y^2 - y: y(t) = [1 - (1 - 1/y0) e^t]^{-1}.

    Returns (solution, t0) with t0 = log(y0/(y0 - 1)) for y0 > 1 and
    t0 = None otherwise (global solutions for 0 < y0 <= 1).
    """
    if y0 <= 0:
        raise ComparisonError("initial value must be positive")

    def solution(t):
        return 1.0 / (1.0 - (1.0 - 1.0 / y0) * np.exp(t))

    t0 = float(np.log(y0 / (y0 - 1.0))) if y0 > 1.0 else None
    return solution, t0


# -- PDE trajectory checks ----------------------------------------------------

@dataclass
class ResidualRow:
    t: float
    channel: str
    lhs: float
    rhs: float
    violated: bool


@dataclass
class ResidualReport:
    system: str
    rows: list
    eps_tol: float

    def violation_fraction(self, channel: str) -> float:
        rows = [r for r in self.rows if r.channel == channel]
        if not rows:
            raise ComparisonError(f"no rows for channel {channel!r}")
        return sum(r.violated for r in rows) / len(rows)

    def max_equality_residual(self, channel: str) -> float:
        rows = [r for r in self.rows if r.channel == channel]
        return max(abs(r.lhs - r.rhs) for r in rows)

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("t,channel,lhs,rhs,violated\n")
            for r in self.rows:
                fh.write(f"{r.t:.17g},{r.channel},{r.lhs:.17g},{r.rhs:.17g},"
                         f"{int(r.violated)}\n")


def check_pde_inequality(traj, system: str, lam: float, C: float,
                         eps_tol: float = 1e-3) -> ResidualReport:
    """Centered-difference residuals of a recorded trajectory against the
    comparison system.

    fkpp: x = mean(u), y = ||u - mean||_L2^2; the x-equation is an equality
    (checked two-sidedly), the y-inequality one-sided.  kse: x = |mean(u)|,
    y = ||grad u||_L2^2; both checks one-sided.
    """
    t = np.asarray(traj.times, dtype=float)
    if len(t) < 3:
        raise ComparisonError("trajectory too short for centered differences")
    rows = []
    if system == "fkpp":
        x = np.asarray(traj.mean, dtype=float)
        y = np.maximum(np.asarray(traj.l2) ** 2 - x ** 2, 0.0)
        dx = (x[2:] - x[:-2]) / (t[2:] - t[:-2])
        dy = (y[2:] - y[:-2]) / (t[2:] - t[:-2])
        xm, ym, tm = x[1:-1], y[1:-1], t[1:-1]
        for i in range(len(tm)):
            rhs = ym[i] + xm[i] ** 2 - xm[i]
            rows.append(ResidualRow(tm[i], "x", dx[i], rhs,
                                    abs(dx[i] - rhs) > eps_tol))
            rhs = (-lam + 4 * xm[i]) * ym[i] + C * ym[i] ** 3
            rows.append(ResidualRow(tm[i], "y", dy[i], rhs,
                                    dy[i] > rhs + eps_tol))
    elif system == "kse":
        x = np.abs(np.asarray(traj.mean, dtype=float))
        y = np.asarray(traj.grad_l2_sq, dtype=float)
        dx = (x[2:] - x[:-2]) / (t[2:] - t[:-2])
        dy = (y[2:] - y[:-2]) / (t[2:] - t[:-2])
        ym, tm = y[1:-1], t[1:-1]
        for i in range(len(tm)):
            rows.append(ResidualRow(tm[i], "x", dx[i], ym[i],
                                    dx[i] > ym[i] + eps_tol))
            rhs = -lam * ym[i] + C * ym[i] ** 2
            rows.append(ResidualRow(tm[i], "y", dy[i], rhs,
                                    dy[i] > rhs + eps_tol))
    else:
        raise ComparisonError(f"unknown comparison system {system!r}")
    return ResidualReport(system, rows, eps_tol)
