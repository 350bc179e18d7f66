"""Comparison-ODE tests: closed forms, stepper order, box invariance, and
one-sided checks of PDE trajectories against the extremal systems."""

import numpy as np
import pytest

import ttn.comparison as tc
import ttn.models as tm
from ttn.comparison import (ComparisonError, ComparisonState, check_pde_inequality,
                            fkpp_system_step, kse_system_step,
                            mean_zero_comparison_step, riccati_blowup)
from ttn.integrate import SolverConfig, run
from ttn.models import ModelSpec
from ttn.spectral import SpectralField

PI2 = np.pi ** 2


def integrate_fkpp(state, lam, C, dt, T):
    s = state
    xs, ys = [s.x], [s.y]
    for _ in range(int(round(T / dt))):
        s = fkpp_system_step(s, lam, C, dt)
        xs.append(s.x)
        ys.append(s.y)
    return np.array(xs), np.array(ys)


# -- equilibria and invariance ------------------------------------------------

def test_fkpp_equilibria():
    for x0 in (0.0, 1.0):
        s = ComparisonState(x0, 0.0)
        for _ in range(100):
            s = fkpp_system_step(s, lam=3.0, C=1.0, dt=0.05)
        assert s.x == pytest.approx(x0, abs=1e-12)
        assert s.y == 0.0


def test_fkpp_case_one_box_invariance():
    # lam at the sufficient value 4 + C (sigma0+1)^2 + 2 sigma0/(1-m0) with
    # the implementation's own constant keeps (x, y) inside
    # [0, 1] x [0, sigma0 + eps], eps = (1-m0)/2
    m0, sigma0 = 0.5, 0.1
    C = tc.C_FKPP_DEFAULT
    lam = 4 + C * (sigma0 + 1) ** 2 + 2 * sigma0 / (1 - m0)
    xs, ys = integrate_fkpp(ComparisonState(m0, sigma0), lam, C, 1e-3, 10.0)
    eps = (1 - m0) / 2
    assert xs.max() <= 1.0 and xs.min() >= 0.0
    assert ys.max() <= sigma0 + 1e-12
    assert ys.max() <= sigma0 + eps


def test_steppers_preserve_nonnegative_y():
    s = ComparisonState(0.2, 1e-8)
    for _ in range(2000):
        s = fkpp_system_step(s, lam=50.0, C=1.0, dt=1e-2)
        assert s.y >= 0.0
    s = ComparisonState(0.0, 1e-8)
    for _ in range(2000):
        s = kse_system_step(s, lam=80.0, C=1.0, dt=1e-2)
        assert s.y >= 0.0


def test_rk4_fourth_order_richardson():
    lam, C, T = 2.0, 1.0, 1.0
    finals = []
    for dt in (1e-2, 5e-3, 2.5e-3):
        xs, ys = integrate_fkpp(ComparisonState(0.4, 0.3), lam, C, dt, T)
        finals.append(np.array([xs[-1], ys[-1]]))
    e1 = np.max(np.abs(finals[0] - finals[1]))
    e2 = np.max(np.abs(finals[1] - finals[2]))
    assert 10 < e1 / e2 < 22        # ~2^4


# -- kse system ---------------------------------------------------------------

def test_kse_zero_fluctuation_freezes_x():
    s = ComparisonState(0.7, 0.0)
    for _ in range(50):
        s = kse_system_step(s, lam=5.0, C=1.0, dt=0.01)
    assert s.x == pytest.approx(0.7, abs=1e-13)
    assert s.y == 0.0


def test_kse_matches_bernoulli_closed_form():
    lam, C, y0 = 5.0, 1.0, 2.0
    s = ComparisonState(0.0, y0)
    dt, T = 1e-4, 1.0
    for _ in range(int(T / dt)):
        s = kse_system_step(s, lam, C, dt)
    y_exact = lam * y0 * np.exp(-lam * T) / (lam - C * y0 * (1 - np.exp(-lam * T)))
    assert s.y == pytest.approx(y_exact, rel=1e-8)
    # x converges to x0 + integral of y, bounded
    assert s.x < y0 / (lam - C * y0) + 1e-6


def test_kse_logistic_divergence_without_damping():
    # lam = 0, C = 1: y' = y^2 blows at t = 1/y0 = 0.5
    s = ComparisonState(0.0, 2.0)
    dt = 1e-5
    blown = False
    for n in range(int(0.52 / dt)):
        s = kse_system_step(s, 0.0, 1.0, dt)
        t = (n + 1) * dt
        if t <= 0.49:
            assert s.y == pytest.approx(1.0 / (0.5 - t), rel=1e-4)
        if s.y > 1e6 or not np.isfinite(s.y):
            blown = True
            break
    assert blown
    assert abs(t - 0.5) < 0.01


# -- riccati ------------------------------------------------------------------

def test_riccati_blowup_times():
    sol, t0 = riccati_blowup(2.0)
    assert t0 == pytest.approx(np.log(2.0), rel=1e-14)
    sol, t0 = riccati_blowup(1.2)
    assert t0 == pytest.approx(np.log(6.0), rel=1e-14)


def test_riccati_fixed_point_and_decay():
    sol, t0 = riccati_blowup(1.0)
    assert t0 is None
    assert sol(5.0) == pytest.approx(1.0, rel=1e-14)
    sol, t0 = riccati_blowup(0.5)
    assert t0 is None
    assert sol(20.0) < 1e-7


def test_riccati_closed_form_satisfies_ode():
    sol, t0 = riccati_blowup(2.0)
    h = 1e-6
    for t in np.linspace(0, 0.9 * t0, 50):
        dy = (sol(t + h) - sol(t - h)) / (2 * h)
        assert abs(dy - (sol(t) ** 2 - sol(t))) < 1e-6 * max(1, sol(t) ** 2)


def test_riccati_rejects_nonpositive():
    with pytest.raises(ComparisonError):
        riccati_blowup(0.0)
    with pytest.raises(ComparisonError):
        riccati_blowup(-1.0)


# -- mean-zero comparison -----------------------------------------------------

def test_mean_zero_pure_decay_exact():
    lam, dt, T = 3.0, 1e-3, 1.0
    x = 2.0
    for _ in range(int(T / dt)):
        x = mean_zero_comparison_step(x, lam, 0.0, 3.0, dt)
    assert x == pytest.approx(2.0 * np.exp(-lam * T), rel=1e-10)


def test_mean_zero_large_damping_stays_bounded():
    lam_nu, C2, beta = 500.0, 1.0, 3.0
    x = 4.0
    xs = [x]
    for _ in range(5000):
        x = mean_zero_comparison_step(x, lam_nu, C2, beta, 1e-3)
        xs.append(x)
    # decreasing toward the equilibrium root of lam x = C2 (1 + x^{3/2})
    assert max(xs) == xs[0]
    assert xs[-1] < 0.01


def test_mean_zero_nondecreasing_without_damping():
    x = 0.5
    prev = x
    for _ in range(100):
        x = mean_zero_comparison_step(x, 0.0, 1.0, 3.0, 1e-3)
        assert x >= prev
        prev = x


# -- PDE trajectory checks ----------------------------------------------------

def test_check_fkpp_constant_solution_equality_residual():
    model = ModelSpec(tm.FISHER_KPP, d=2)
    residuals = []
    for dt in (2e-3, 1e-3):
        cfg = SolverConfig(N=4, dt=dt, T=0.5, nu=0.0, record_every=1)
        traj = run(SpectralField.constant(2, 4, 0.5), model, cfg)
        report = check_pde_inequality(traj, "fkpp", lam=0.0,
                                      C=tc.C_FKPP_DEFAULT, eps_tol=1e-2)
        residuals.append(report.max_equality_residual("x"))
    assert residuals[1] < 0.75 * residuals[0]       # O(dt)


def test_check_zero_trajectory_all_pass():
    model = ModelSpec(tm.FISHER_KPP, d=2)
    cfg = SolverConfig(N=4, dt=1e-3, T=0.05, nu=1.0, record_every=1)
    traj = run(SpectralField.zeros(2, 4), model, cfg)
    report = check_pde_inequality(traj, "fkpp", lam=8 * PI2,
                                  C=tc.C_FKPP_DEFAULT, eps_tol=1e-3)
    assert report.violation_fraction("x") == 0.0
    assert report.violation_fraction("y") == 0.0


def test_check_fkpp_run_no_y_violations():
    model = ModelSpec(tm.FISHER_KPP, d=2)
    rng = np.random.default_rng(21)
    fluct = SpectralField.random_real(2, 8, rng, 3, 1.0)
    u0 = SpectralField(2, 8, fluct.coeffs + SpectralField.constant(2, 8, 0.5).coeffs)
    nu = 2.0
    cfg = SolverConfig(N=8, dt=1e-4, T=0.05, nu=nu, record_every=10)
    traj = run(u0, model, cfg)
    report = check_pde_inequality(traj, "fkpp", lam=8 * PI2 * nu,
                                  C=tc.C_FKPP_DEFAULT, eps_tol=1e-3)
    assert report.violation_fraction("y") == 0.0


def test_check_kse_run_no_violations_large_nu():
    model = ModelSpec(tm.KURAMOTO_SIVASHINSKY, d=2)
    u0 = SpectralField.random_real(2, 8, np.random.default_rng(31), 2, 0.5,
                                   zero_mean=False)
    nu = 3.0
    cfg = SolverConfig(N=8, dt=5e-6, T=0.005, nu=nu, record_every=10)
    traj = run(u0, model, cfg)
    report = check_pde_inequality(traj, "kse", lam=8 * PI2 * (nu - 1),
                                  C=tc.C_KSE_DEFAULT, eps_tol=1e-3)
    assert report.violation_fraction("x") == 0.0
    assert report.violation_fraction("y") == 0.0


def test_residual_report_csv(tmp_path):
    model = ModelSpec(tm.FISHER_KPP, d=2)
    cfg = SolverConfig(N=4, dt=1e-3, T=0.01, nu=0.0, record_every=1)
    traj = run(SpectralField.constant(2, 4, 0.5), model, cfg)
    report = check_pde_inequality(traj, "fkpp", lam=0.0, C=1.0)
    path = tmp_path / "resid.csv"
    report.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,channel,lhs,rhs,violated"
    assert len(lines) == 1 + len(report.rows)


def test_unknown_system_rejected():
    model = ModelSpec(tm.FISHER_KPP, d=2)
    cfg = SolverConfig(N=4, dt=1e-3, T=0.01, nu=0.0, record_every=1)
    traj = run(SpectralField.constant(2, 4, 0.5), model, cfg)
    with pytest.raises(ComparisonError, match="unknown"):
        check_pde_inequality(traj, "heat", lam=1.0, C=1.0)
