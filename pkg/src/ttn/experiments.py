"""Seeded Monte Carlo studies: scaling limit, delayed blow-up, relaxation
enhancement, and the spread-noise triviality regime.

Every study is a pure function of its plan: per-path seeds are derived as
base_seed + path_index (shared across grid cells, so the nu-trend is read off
common random numbers), paths are embarrassingly parallel, and the worker
count changes wall time only, never output bytes.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from multiprocessing import get_context
from typing import Optional

import numpy as np

from . import models as tm
from . import noise as tn
from . import spectral as sp
from .integrate import NoiseSetup, SolverConfig, run
from .models import ModelSpec
from .spectral import SpectralField


class PlanError(ValueError):
    pass


# -- initial data recipes -----------------------------------------------------

@dataclass(frozen=True)
class ConstantIC:
    value: float

    def __str__(self):
        return f"constant {self.value:.17g}"


@dataclass(frozen=True)
class ConstantPlusModeIC:
    value: float
    k: tuple
    amplitude: float

    def __str__(self):
        ks = ",".join(str(c) for c in self.k)
        return f"constant_plus_mode {self.value:.17g} ({ks}) {self.amplitude:.17g}"


@dataclass(frozen=True)
class RandomTrigIC:
    seed: int
    amplitude: float
    band: int

    def __str__(self):
        return f"random_trig {self.seed} {self.amplitude:.17g} {self.band}"


def parse_ic(text: str):
    """Parse an initial-data recipe: 'constant c',
    'constant_plus_mode c (k1,k2[,k3]) a', or 'random_trig seed amp band'."""
    parts = [p for p in text.split() if p]
    if not parts:
        raise PlanError("empty initial-data recipe")
    name = parts[0]
    try:
        if name == "constant" and len(parts) == 2:
            return ConstantIC(float(parts[1]))
        if name == "constant_plus_mode" and len(parts) == 4:
            k = tuple(int(c) for c in parts[2].strip("()").split(","))
            return ConstantPlusModeIC(float(parts[1]), k, float(parts[3]))
        if name == "random_trig" and len(parts) == 4:
            return RandomTrigIC(int(parts[1]), float(parts[2]), int(parts[3]))
    except ValueError as exc:
        raise PlanError(f"bad initial-data recipe {text!r}: {exc}") from None
    raise PlanError(f"unknown initial-data recipe {text!r}")


def build_initial_field(recipe, d: int, N: int) -> SpectralField:
    if isinstance(recipe, ConstantIC):
        return SpectralField.constant(d, N, recipe.value)
    if isinstance(recipe, ConstantPlusModeIC):
        u = SpectralField.constant(d, N, recipe.value)
        k = tuple(recipe.k)
        if len(k) != d:
            raise PlanError("mode dimension does not match the model")
        M = 2 * N + 1
        u.coeffs[(0,) + tuple(c % M for c in k)] += recipe.amplitude
        u.coeffs[(0,) + tuple((-c) % M for c in k)] += recipe.amplitude
        return u
    if isinstance(recipe, RandomTrigIC):
        rng = np.random.default_rng(recipe.seed)
        return SpectralField.random_real(d, N, rng, recipe.band,
                                         recipe.amplitude)
    raise PlanError(f"unknown recipe object {recipe!r}")


# -- plans and tables ---------------------------------------------------------

@dataclass(frozen=True)
class StudyPlan:
    """One Monte Carlo study: model, solver settings, initial data recipe,
    nu grid, theta family over a band list, path count, base seed."""

    model: ModelSpec
    solver: SolverConfig
    ic: object
    nu_grid: tuple
    theta_family: str
    theta_bands: tuple
    paths: int
    base_seed: int
    basis_K: Optional[int] = None
    success_delta: Optional[float] = None

    def __post_init__(self):
        if self.paths < 1:
            raise PlanError("path count must be >= 1")
        if self.theta_family not in ("shell", "flat"):
            raise PlanError("theta family must be 'shell' or 'flat'")
        if not self.theta_bands:
            raise PlanError("at least one theta band is required")
        if max(self.theta_bands) > self.solver.N:
            raise PlanError("theta band exceeds the spectral cutoff")
        if not self.nu_grid:
            raise PlanError("empty nu grid")
        object.__setattr__(self, "nu_grid", tuple(float(v) for v in self.nu_grid))
        object.__setattr__(self, "theta_bands",
                           tuple(int(b) for b in self.theta_bands))

    @property
    def K(self) -> int:
        return self.basis_K if self.basis_K is not None else max(self.theta_bands)

    def meta(self) -> dict:
        s = self.solver
        return {
            "model": self.model.kind, "d": self.model.d,
            "alpha": self.model.alpha, "lambda": self.model.lam,
            "chi": self.model.chi, "u0": str(self.ic),
            "N": s.N, "dt": s.dt, "T": s.T, "record_every": s.record_every,
            "blowup_threshold": "" if s.blowup_threshold is None else s.blowup_threshold,
            "cutoff_R": s.cutoff.R if s.cutoff else "",
            "cutoff_delta": s.cutoff.delta if s.cutoff else "",
            "nu_grid": " ".join(f"{v:.17g}" for v in self.nu_grid),
            "theta_family": self.theta_family,
            "theta_bands": " ".join(str(b) for b in self.theta_bands),
            "basis_K": self.K, "paths": self.paths,
            "base_seed": self.base_seed,
            "success_delta": "" if self.success_delta is None else self.success_delta,
        }


@dataclass
class Table:
    columns: tuple
    rows: list
    meta: dict

    def column(self, name: str) -> list:
        j = self.columns.index(name)
        return [row[j] for row in self.rows]

    def write_csv(self, path) -> None:
        with open(path, "w") as fh:
            for key, val in self.meta.items():
                fh.write(f"# {key} = {val}\n")
            fh.write(",".join(self.columns) + "\n")
            for row in self.rows:
                fh.write(",".join(_fmt(v) for v in row) + "\n")


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def wilson_interval(successes: int, n: int, z: float = 1.96):
    """Wilson score interval for a binomial proportion; robust for small n."""
    if n < 1:
        raise PlanError("need at least one trial")
    p = successes / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return max(0.0, center - half), min(1.0, center + half)


# -- path workers (top-level for pickling) ------------------------------------

_SCALING_REF = None


def _set_scaling_ref(times, fields):
    global _SCALING_REF
    _SCALING_REF = (times, fields)


def _make_noise(plan: StudyPlan, band: int, seed: int) -> NoiseSetup:
    basis = tn.build_basis(plan.model.d, plan.K)
    if plan.theta_family == "shell":
        theta = tn.theta_shell(basis, band)
    else:
        theta = tn.theta_flat(basis, band)
    return NoiseSetup(basis, theta, tn.NoiseDriver(seed, basis))


def _blowup_worker(args):
    plan, nu, band, seed = args
    cfg = replace(plan.solver, nu=nu)
    u0 = build_initial_field(plan.ic, plan.model.d, cfg.N)
    noise = _make_noise(plan, band, seed) if nu > 0 else None
    traj = run(u0, plan.model, cfg, noise)
    return traj.blowup, traj.tau


def _relaxation_worker(args):
    plan, nu, band, seed = args
    cfg = replace(plan.solver, nu=nu)
    u0 = _unit_zero_mean(build_initial_field(plan.ic, plan.model.d, cfg.N))
    noise = _make_noise(plan, band, seed) if nu > 0 else None
    traj = run(u0, plan.model, cfg, noise)
    return float(traj.l2[-1])


def _triviality_worker(args):
    plan, nu, band, seed = args
    cfg = replace(plan.solver, nu=nu)
    u0 = build_initial_field(plan.ic, plan.model.d, cfg.N)
    noise = _make_noise(plan, band, seed)
    d = plan.model.d
    modes = [(1,) + (0,) * (d - 1), (0, 1) + (0,) * (d - 2)]
    traj = run(u0, plan.model, cfg, noise, track_modes=modes)
    return tuple(traj.mode_integral_sup[m] for m in modes)


def _scaling_worker(args):
    plan, nu, band, seed = args
    cfg = replace(plan.solver, nu=nu)
    u0 = build_initial_field(plan.ic, plan.model.d, cfg.N)
    noise = _make_noise(plan, band, seed)
    traj = run(u0, plan.model, cfg, noise, store_fields=True)
    ref_times, ref_fields = _SCALING_REF
    times = np.array([t for t, _ in traj.fields])
    if len(times) != len(ref_times) or np.max(np.abs(times - ref_times)) > 1e-12:
        raise PlanError("stochastic path lost the reference record grid")
    dist_sq = np.array([np.sum(np.abs(f - g) ** 2)
                        for (_, f), g in zip(traj.fields, ref_fields)])
    return float(np.sqrt(np.trapezoid(dist_sq, times)))


def _map_paths(worker, arg_list, threads: int):
    if threads <= 1:
        return [worker(a) for a in arg_list]
    ctx = get_context("spawn")
    init, initargs = _POOL_INIT.get(worker, (None, ()))
    with ProcessPoolExecutor(max_workers=threads, mp_context=ctx,
                             initializer=init, initargs=initargs) as pool:
        return list(pool.map(worker, arg_list, chunksize=1))


_POOL_INIT: dict = {}


# -- studies ------------------------------------------------------------------

def scaling_limit_study(plan: StudyPlan, threads: int = 1) -> Table:
    """Distance in L2(0,T;L2) between stochastic paths and the deterministic
    limit run, per theta band; shrinking ||theta||_linf should shrink it."""
    if plan.theta_family != "shell":
        raise PlanError("the scaling study uses the normalized shell family")
    if plan.solver.cutoff is None:
        raise PlanError("the scaling study runs the cut-off dynamics")
    rows = []
    for nu in plan.nu_grid:
        cfg = replace(plan.solver, nu=nu)
        u0 = build_initial_field(plan.ic, plan.model.d, cfg.N)
        det = run(u0, plan.model, cfg, store_fields=True)
        ref_times = np.array([t for t, _ in det.fields])
        ref_fields = [f for _, f in det.fields]
        _set_scaling_ref(ref_times, ref_fields)
        _POOL_INIT[_scaling_worker] = (_set_scaling_ref, (ref_times, ref_fields))
        for band in plan.theta_bands:
            args = [(plan, nu, band, plan.base_seed + j)
                    for j in range(plan.paths)]
            dists = np.array(_map_paths(_scaling_worker, args, threads))
            se = (float(dists.std(ddof=1)) / math.sqrt(len(dists))
                  if len(dists) > 1 else 0.0)
            basis = tn.build_basis(plan.model.d, plan.K)
            linf = tn.theta_shell(basis, band).linf()
            rows.append((nu, band, linf, float(dists.mean()), se, plan.paths))
    return Table(("nu", "theta_band", "theta_linf", "mean_dist", "stderr",
                  "paths"), rows, plan.meta() | {"study": "scaling-limit"})


def delayed_blowup_mc(plan: StudyPlan, threads: int = 1) -> Table:
    """Survival fractions P(tau >= T) per (nu, band) with Wilson intervals,
    the mean blow-up time among exploded paths, and the noise-free baseline."""
    if plan.solver.cutoff is not None:
        raise PlanError("blow-up statistics need the cut-off disabled")
    cfg0 = replace(plan.solver, nu=0.0)
    u0 = build_initial_field(plan.ic, plan.model.d, cfg0.N)
    det = run(u0, plan.model, cfg0)
    det_tau = det.tau if det.blowup else None
    rows = []
    for nu in plan.nu_grid:
        for band in plan.theta_bands:
            args = [(plan, nu, band, plan.base_seed + j)
                    for j in range(plan.paths)]
            outcomes = _map_paths(_blowup_worker, args, threads)
            taus = [tau for blown, tau in outcomes if blown]
            survived = sum(1 for blown, _ in outcomes if not blown)
            lo, hi = wilson_interval(survived, plan.paths)
            mean_tau = float(np.mean(taus)) if taus else None
            rows.append((nu, band, plan.paths, survived,
                         survived / plan.paths, lo, hi, mean_tau, det_tau))
    return Table(("nu", "theta_band", "paths", "survived", "survival_frac",
                  "wilson_lo", "wilson_hi", "mean_tau_blowup", "det_tau"),
                 rows, plan.meta() | {"study": "delayed-blowup"})


def relaxation_enhancing_study(plan: StudyPlan, threads: int = 1) -> Table:
    """Empirical probability that the advected heat flow lands within delta of
    its spatial mean by time T, against the enhanced deterministic benchmark
    exp(-4 pi^2 (1+nu) T)."""
    if plan.model.kind != tm.LINEAR or plan.model.alpha != 1.0:
        raise PlanError("relaxation concerns the plain advected heat flow")
    if plan.success_delta is None or plan.success_delta <= 0:
        raise PlanError("success_delta must be a positive radius")
    delta = plan.success_delta
    rows = []
    for nu in plan.nu_grid:
        benchmark = math.exp(-4 * math.pi ** 2 * (1 + nu) * plan.solver.T)
        for band in plan.theta_bands:
            args = [(plan, nu, band, plan.base_seed + j)
                    for j in range(plan.paths)]
            finals = _map_paths(_relaxation_worker, args, threads)
            hits = sum(1 for v in finals if v < delta)
            lo, hi = wilson_interval(hits, plan.paths)
            rows.append((nu, band, plan.paths, hits, hits / plan.paths,
                         lo, hi, benchmark))
    return Table(("nu", "theta_band", "paths", "successes", "success_frac",
                  "wilson_lo", "wilson_hi", "det_benchmark"),
                 rows, plan.meta() | {"study": "relaxation",
                                      "success_delta": delta})


def triviality_study(plan: StudyPlan, threads: int = 1) -> Table:
    """Expected sup of time-integrated low modes under unnormalised flat
    weights; the column should fall off like 1/lambda_N as the band grows."""
    if plan.theta_family != "flat":
        raise PlanError("the triviality study uses the flat family")
    rows = []
    for nu in plan.nu_grid:
        for band in plan.theta_bands:
            basis = tn.build_basis(plan.model.d, plan.K)
            l2sq = tn.theta_flat(basis, band).l2_sq()
            lam_N = 4 * math.pi ** 2 * (1 + nu * l2sq)
            args = [(plan, nu, band, plan.base_seed + j)
                    for j in range(plan.paths)]
            sups = np.array(_map_paths(_triviality_worker, args, threads))
            m1, m2 = float(sups[:, 0].mean()), float(sups[:, 1].mean())
            rows.append((nu, band, l2sq, lam_N, m1, m2, 0.5 * (m1 + m2),
                         plan.paths))
    return Table(("nu", "theta_band", "theta_l2_sq", "lambda_N",
                  "int_mode_10", "int_mode_01", "mode_integral", "paths"),
                 rows, plan.meta() | {"study": "triviality"})


def _unit_zero_mean(u: SpectralField) -> SpectralField:
    c = u.coeffs.copy()
    c[(0,) + (0,) * u.dim] = 0.0
    norm = float(np.sqrt(np.sum(np.abs(c) ** 2)))
    if norm > 0:
        c /= norm
    return SpectralField(u.dim, u.cutoff, c)
