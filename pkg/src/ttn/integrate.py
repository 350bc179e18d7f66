"""Time stepping for the deterministic limit PDE and the Ito-form SPDE.

One step is a Lie split: an explicit Euler(-Maruyama) substep for the
(cut-off) drift and the transport noise, both evaluated at the step's input
state, followed by an exact exponential substep for the linear symbol
(4 pi^2 |k|^2)^alpha + 4 pi^2 nu_eff |k|^2.  The Stratonovich-to-Ito
correction nu ||theta||^2 Laplacian enters only through this linear symbol,
never as a separate discrete term; it is exactly the isotropic Laplacian
because of the frame identity certified in ttn.noise.

Blow-up is data, not an error: a run ends early with the crossing time once
the L2 norm exceeds the configured threshold or a coefficient stops being
finite.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import models as tm
from . import spectral as sp
from .models import CutoffSpec, DriftKernel, ModelSpec, g_ramp
from .noise import NoiseBasis, NoiseDriver, ThetaSequence, TransportPlan, dimension_factor
from .spectral import SpectralField

logger = logging.getLogger(__name__)

DEFAULT_DIAG_DELTA = 0.1


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    """Numerical parameters of a single run.

    nu is both the noise intensity of the stochastic dynamics and the extra
    viscosity of the deterministic limit equation.  blowup_threshold defaults
    to 1e6 * max(1, ||u0||_L2) at run start.
    """

    N: int
    dt: float
    T: float
    nu: float = 0.0
    cutoff: Optional[CutoffSpec] = None
    blowup_threshold: Optional[float] = None
    record_every: int = 1

    def __post_init__(self):
        if self.N < 2:
            raise ConfigError("spectral cutoff N must be >= 2")
        if self.dt <= 0 or self.T <= 0:
            raise ConfigError("dt and T must be positive")
        if self.nu < 0:
            raise ConfigError("nu must be nonnegative")
        if self.record_every < 1:
            raise ConfigError("record_every must be >= 1")


@dataclass(frozen=True)
class NoiseSetup:
    basis: NoiseBasis
    theta: ThetaSequence
    driver: NoiseDriver


@dataclass
class Trajectory:
    """Recorded diagnostics of one run plus the blow-up verdict."""

    times: np.ndarray
    l2: np.ndarray
    h_minus_delta: np.ndarray
    grad_l2_sq: np.ndarray
    mean: np.ndarray
    g_R: np.ndarray
    bracket_pred: np.ndarray
    bracket_real: np.ndarray
    blowup: bool
    tau: Optional[float]
    final_field: Optional[SpectralField] = None
    meta: dict = field(default_factory=dict)
    mode_integral_sup: Optional[dict] = None
    fields: Optional[list] = None

    COLUMNS = ("t", "l2", "h_minus_delta", "grad_l2_sq", "mean", "g_R",
               "bracket_pred", "bracket_real")

    def rows(self):
        data = (self.times, self.l2, self.h_minus_delta, self.grad_l2_sq,
                self.mean, self.g_R, self.bracket_pred, self.bracket_real)
        for vals in zip(*data):
            yield vals

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(",".join(self.COLUMNS) + "\n")
            for vals in self.rows():
                fh.write(",".join(f"{v:.17g}" for v in vals) + "\n")

    def write_metadata(self, path) -> None:
        with open(path, "w") as fh:
            for key, val in self.meta.items():
                fh.write(f"{key} = {val}\n")


def load_trajectory_csv(path) -> Trajectory:
    """Read back a trajectory CSV written by Trajectory.to_csv."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if tuple(header) != Trajectory.COLUMNS:
            raise ConfigError(f"{path} is not a trajectory CSV")
        data = np.array([[float(v) for v in line.split(",")]
                         for line in fh if line.strip()])
    if data.size == 0:
        raise ConfigError(f"{path} carries no rows")
    cols = {name: data[:, j] for j, name in enumerate(Trajectory.COLUMNS)}
    return Trajectory(times=cols["t"], l2=cols["l2"],
                      h_minus_delta=cols["h_minus_delta"],
                      grad_l2_sq=cols["grad_l2_sq"], mean=cols["mean"],
                      g_R=cols["g_R"], bracket_pred=cols["bracket_pred"],
                      bracket_real=cols["bracket_real"], blowup=False, tau=None)


def noise_cfl_limit(cfg: SolverConfig, theta: ThetaSequence, d: int) -> float:
    """Advisory step bound dt <~ 1/(nu (2 pi N sqrt(C_d))^2 ||theta||_linf^2 d)."""
    rate = (cfg.nu * (2 * np.pi * cfg.N) ** 2 * dimension_factor(d)
            * theta.linf() ** 2 * d)
    return np.inf if rate == 0 else 1.0 / rate


class _RunContext:
    """Per-run precomputed multipliers, kernels, and noise machinery."""

    def __init__(self, model: ModelSpec, cfg: SolverConfig,
                 noise: Optional[NoiseSetup]):
        self.model, self.cfg, self.noise = model, cfg, noise
        d, N = model.d, cfg.N
        ksq = sp.ksq_grid(d, N).astype(float)
        self.grad_sym = 4.0 * np.pi ** 2 * ksq
        delta = cfg.cutoff.delta if cfg.cutoff else DEFAULT_DIAG_DELTA
        self.hdelta_sym = (1.0 + 4.0 * np.pi ** 2 * ksq) ** (-delta)
        self.kernel = DriftKernel(model, N)
        if noise is not None:
            theta = noise.theta
            self.nu_eff = cfg.nu if theta.normalized else cfg.nu * theta.l2_sq()
            self.plan = TransportPlan(noise.basis, theta, N)
            limit = noise_cfl_limit(cfg, theta, d)
            if cfg.dt > limit:
                logger.warning(
                    "dt=%.3g exceeds the advisory transport-noise step bound "
                    "%.3g; expect reduced weak accuracy", cfg.dt, limit)
        else:
            self.nu_eff = cfg.nu
            self.plan = None
        lam = (4.0 * np.pi ** 2 * ksq) ** model.alpha \
            + 4.0 * np.pi ** 2 * self.nu_eff * ksq
        self.decay = np.exp(-lam * cfg.dt)
        self.zero_idx = (0,) * d

    def g_value(self, c: np.ndarray) -> float:
        if self.cfg.cutoff is None:
            return 1.0
        norm = float(np.sqrt(np.sum(self.hdelta_sym * np.abs(c) ** 2)))
        return g_ramp(norm, self.cfg.cutoff.R)

    def gradsq(self, c: np.ndarray) -> float:
        return float(np.sum(self.grad_sym * np.abs(c) ** 2))

    def step(self, c: np.ndarray, accum: Optional[dict] = None) -> np.ndarray:
        """One full step on raw scalar coefficients (drift, noise, linear)."""
        g = self.g_value(c)
        if self.kernel.is_zero:
            new = c
        else:
            new = c + (self.cfg.dt * g) * self.kernel(c)
        if self.plan is not None:
            incr = self.noise.driver.sample_increments(self.cfg.dt)
            dM = self.plan.apply_raw(c, incr.values, self.cfg.nu)
            if accum is not None:
                accum["bracket_real"] += float(np.sum(np.abs(dM) ** 2))
                accum["bracket_pred"] += (2.0 * self.nu_eff * self.cfg.dt
                                          * self.gradsq(c))
            new = new + dM
        new = new * self.decay
        if self.model.kind == tm.KELLER_SEGEL:
            if abs(new[self.zero_idx]) > tm.MEAN_TOL:
                raise tm.ModelError("chemotaxis deviation field grew a mean")
            new[self.zero_idx] = 0.0
        return new


def step_deterministic(u: SpectralField, model: ModelSpec,
                       cfg: SolverConfig) -> SpectralField:
    """One Lie-split step of the deterministic (limit) dynamics."""
    _check_state(u, model, cfg)
    ctx = _RunContext(model, cfg, None)
    return SpectralField(u.dim, u.cutoff, ctx.step(u.coeffs[0]))


def step_stochastic(u: SpectralField, model: ModelSpec, cfg: SolverConfig,
                    basis: NoiseBasis, theta: ThetaSequence,
                    driver: NoiseDriver) -> SpectralField:
    """One Euler-Maruyama step of the Ito-form dynamics; drift and noise are
    both evaluated at the input state, Hermitian symmetry is restored exactly
    after the noise increment."""
    _check_state(u, model, cfg)
    ctx = _RunContext(model, cfg, NoiseSetup(basis, theta, driver))
    return SpectralField(u.dim, u.cutoff, ctx.step(u.coeffs[0]))


def _check_state(u: SpectralField, model: ModelSpec, cfg: SolverConfig) -> None:
    if not u.is_scalar:
        raise ConfigError("the evolved field is scalar")
    if u.dim != model.d:
        raise ConfigError("model/field dimension mismatch")
    if u.cutoff != cfg.N:
        raise ConfigError("field cutoff differs from solver N")
    if not u.is_finite():
        raise sp.FieldError("field corrupted")


def run(u0: SpectralField, model: ModelSpec, cfg: SolverConfig,
        noise: Optional[NoiseSetup] = None, store_fields: bool = False,
        track_modes: Optional[list] = None) -> Trajectory:
    """Step until t >= T or blow-up, recording diagnostics.

    Blow-up is declared at the first recorded time whose L2 norm exceeds the
    threshold or carries a non-finite coefficient; tau is that time.  With
    `store_fields`, coefficient snapshots are kept at every record time; with
    `track_modes`, running sups of |int_0^t c_k ds| are accumulated per step.
    """
    _check_state(u0, model, cfg)
    if model.kind == tm.KELLER_SEGEL and abs(sp.mean(u0)) > tm.MEAN_TOL:
        raise tm.ModelError("chemotaxis runs evolve the zero-mean deviation")
    ctx = _RunContext(model, cfg, noise)
    c = u0.coeffs[0].copy()
    if model.kind == tm.KELLER_SEGEL:
        c[ctx.zero_idx] = 0.0

    B = cfg.blowup_threshold
    if B is None:
        B = 1e6 * max(1.0, float(np.sqrt(np.sum(np.abs(c) ** 2))))
    n_steps = max(1, int(round(cfg.T / cfg.dt)))

    times, l2s, hds, grads, means, gs = [], [], [], [], [], []
    preds, reals = [], []
    accum = {"bracket_pred": 0.0, "bracket_real": 0.0}
    mode_idx = {}
    mode_sup = {}
    mode_int = {}
    if track_modes:
        M = 2 * cfg.N + 1
        for k in track_modes:
            key = tuple(int(x) for x in k)
            mode_idx[key] = tuple(x % M for x in key)
            mode_sup[key] = 0.0
            mode_int[key] = 0.0 + 0.0j
    fields = [] if store_fields else None
    blowup, tau = False, None

    def record(t):
        l2 = float(np.sqrt(np.sum(np.abs(c) ** 2)))
        times.append(t)
        l2s.append(l2)
        hds.append(float(np.sqrt(np.sum(ctx.hdelta_sym * np.abs(c) ** 2))))
        grads.append(ctx.gradsq(c))
        means.append(float(c[ctx.zero_idx].real))
        gs.append(ctx.g_value(c))
        preds.append(accum["bracket_pred"])
        reals.append(accum["bracket_real"])
        if store_fields:
            fields.append((t, c.copy()))
        return l2

    record(0.0)
    with np.errstate(over="ignore", invalid="ignore", under="ignore"):
        for n in range(1, n_steps + 1):
            c = ctx.step(c, accum)
            t = n * cfg.dt
            if track_modes:
                for key, idx in mode_idx.items():
                    mode_int[key] += c[idx] * cfg.dt
                    mode_sup[key] = max(mode_sup[key], abs(mode_int[key]))
            if n % cfg.record_every == 0 or n == n_steps:
                l2 = record(t)
                if not np.isfinite(l2) or l2 > B:
                    blowup, tau = True, t
                    break

    traj = Trajectory(
        times=np.array(times), l2=np.array(l2s), h_minus_delta=np.array(hds),
        grad_l2_sq=np.array(grads), mean=np.array(means), g_R=np.array(gs),
        bracket_pred=np.array(preds), bracket_real=np.array(reals),
        blowup=blowup, tau=tau,
        final_field=SpectralField(model.d, cfg.N, c[np.newaxis].copy()),
        mode_integral_sup=mode_sup if track_modes else None,
        fields=fields,
    )
    traj.meta = {
        "model": model.kind, "d": model.d, "alpha": model.alpha,
        "lambda": model.lam, "chi": model.chi,
        "N": cfg.N, "dt": cfg.dt, "T": cfg.T, "nu": cfg.nu,
        "record_every": cfg.record_every, "blowup_threshold": B,
        "cutoff_R": cfg.cutoff.R if cfg.cutoff else "",
        "cutoff_delta": cfg.cutoff.delta if cfg.cutoff else "",
        "noise": "none" if noise is None else "transport",
        "noise_seed": noise.driver.seed if noise else "",
        "theta_l2_sq": noise.theta.l2_sq() if noise else "",
        "theta_linf": noise.theta.linf() if noise else "",
        "blowup": blowup, "tau": "" if tau is None else tau,
    }
    return traj
