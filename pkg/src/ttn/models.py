"""Drift nonlinearities, the norm cut-off, and growth/monotonicity probes.

Three concrete models plus a linear (F = 0) one used by the pure-advection
studies:

  keller_segel          alpha=1, F(u) = -chi div[u grad_inv(u)] + chi*lam*u,
                        evolving the zero-mean deviation of the density from
                        its conserved mean lam
  fisher_kpp            alpha=1, F(u) = u^2 - u
  kuramoto_sivashinsky  alpha=2, F(u) = -Lap(u) - |grad u|^2 / 2
  linear                F = 0, alpha configurable

All quadratic products are evaluated alias-free; cubic pairings use a grid
fine enough that the triple products are exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import fft as _fft

from . import spectral as sp
from .spectral import FieldError, PadPlan, SpectralField

KELLER_SEGEL = "keller_segel"
FISHER_KPP = "fisher_kpp"
KURAMOTO_SIVASHINSKY = "kuramoto_sivashinsky"
LINEAR = "linear"

MODEL_KINDS = (KELLER_SEGEL, FISHER_KPP, KURAMOTO_SIVASHINSKY, LINEAR)

_FIXED_ALPHA = {KELLER_SEGEL: 1.0, FISHER_KPP: 1.0, KURAMOTO_SIVASHINSKY: 2.0}

MEAN_TOL = 1e-10


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    """Which drift to use, in which dimension, with which parameters.

    lam is the conserved density mean of the chemotaxis model (ignored by the
    others); chi > 0 scales its quadratic and linear transport parts.  alpha
    is fixed by the model kind except for `linear`.
    """

    kind: str
    d: int = 2
    lam: float = 0.0
    chi: float = 1.0
    linear_alpha: float = 1.0

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ModelError(f"unknown model kind {self.kind!r}")
        if self.d not in (2, 3):
            raise ModelError("dimension must be 2 or 3")
        if self.chi <= 0:
            raise ModelError("chi must be positive")
        if self.kind == LINEAR and self.linear_alpha < 1:
            raise ModelError("alpha must be >= 1")

    @property
    def alpha(self) -> float:
        return _FIXED_ALPHA.get(self.kind, self.linear_alpha)


@dataclass(frozen=True)
class CutoffSpec:
    """Lipschitz cut-off of the drift by the H^{-delta} norm: radius R,
    negative Sobolev index delta."""

    R: float
    delta: float = 0.1

    def __post_init__(self):
        if self.R <= 0:
            raise ModelError("cut-off radius must be positive")
        if not 0 < self.delta <= 1:
            raise ModelError("delta must lie in (0, 1]")


def g_ramp(x: float, R: float) -> float:
    """1 on [0, R], linear ramp down to 0 on [R, R+1], 0 beyond; Lipschitz-1."""
    if x <= R:
        return 1.0
    if x >= R + 1.0:
        return 0.0
    return R + 1.0 - x


def cutoff_value(spec: CutoffSpec, u: SpectralField) -> float:
    return g_ramp(sp.sobolev_norm(u, -spec.delta), spec.R)


@dataclass(frozen=True)
class HypothesisParams:
    """Exponents of the continuity/growth/monotonicity bounds on F."""

    eta: float
    beta1: float
    beta2: float
    gamma2: float
    beta3: float
    gamma3: float
    kappa: float

    def __post_init__(self):
        vals = [self.eta, self.beta1, self.beta2, self.gamma2, self.beta3,
                self.gamma3, self.kappa]
        if any(v < 0 for v in vals):
            raise ModelError("exponents must be nonnegative")
        if not self.gamma2 < 2:
            raise ModelError("gamma2 must be < 2")
        if not self.gamma3 < 2:
            raise ModelError("gamma3 must be < 2")
        if self.beta3 + self.gamma3 < 2:
            raise ModelError("beta3 + gamma3 must be >= 2")
        if self.gamma3 + self.kappa > 2:
            raise ModelError("gamma3 + kappa must be <= 2")


_HYPOTHESIS_DEFAULTS = {
    FISHER_KPP: HypothesisParams(eta=0.5, beta1=1.0, beta2=1.5, gamma2=1.5,
                                 beta3=1.0, gamma3=1.0, kappa=1.0),
    KELLER_SEGEL: HypothesisParams(eta=0.25, beta1=1.0, beta2=1.5, gamma2=1.5,
                                   beta3=1.0, gamma3=1.0, kappa=1.0),
    KURAMOTO_SIVASHINSKY: HypothesisParams(eta=1.0, beta1=1.0, beta2=11 / 8,
                                           gamma2=13 / 8, beta3=5 / 4,
                                           gamma3=3 / 4, kappa=1.0),
}


def default_hypothesis_params(kind: str) -> HypothesisParams:
    try:
        return _HYPOTHESIS_DEFAULTS[kind]
    except KeyError:
        raise ModelError(f"no hypothesis exponents for model {kind!r}")


# -- drift kernels ------------------------------------------------------------

class DriftKernel:
    """Raw-array evaluation of F for one (model, d, N); reused every step."""

    def __init__(self, model: ModelSpec, N: int):
        self.model = model
        self.d, self.N = model.d, N
        d = model.d
        self.is_zero = model.kind == LINEAR
        if self.is_zero:
            return
        self.plan = PadPlan(d, N, sp.product_pad_size(N))
        ks = sp.wavevector_grid(d, N)
        ksq = sp.ksq_grid(d, N).astype(float)
        if model.kind == KELLER_SEGEL:
            safe = np.where(ksq == 0, 1.0, ksq)
            self.invgrad_mult = np.stack(
                [np.where(ksq == 0, 0.0, 1j * k / (2.0 * np.pi * safe))
                 for k in ks])
            self.div_mult = np.stack([2j * np.pi * k for k in ks])
        elif model.kind == KURAMOTO_SIVASHINSKY:
            self.grad_mult = np.stack([2j * np.pi * k for k in ks])
            self.neg_lap = 4.0 * np.pi ** 2 * ksq

    def __call__(self, c: np.ndarray) -> np.ndarray:
        kind = self.model.kind
        if kind == FISHER_KPP:
            vals = self.plan.to_grid(c[np.newaxis])
            out = self.plan.from_grid(vals * vals)[0] - c
        elif kind == KELLER_SEGEL:
            w = self.invgrad_mult * c
            uvals = self.plan.to_grid(c[np.newaxis])
            wvals = self.plan.to_grid(w)
            p = self.plan.from_grid(uvals * wvals)
            div = np.sum(self.div_mult * p, axis=0)
            out = self.model.chi * (-div + self.model.lam * c)
        elif kind == KURAMOTO_SIVASHINSKY:
            gvals = self.plan.to_grid(self.grad_mult * c)
            sq = np.sum(gvals * gvals, axis=0, keepdims=True)
            out = self.neg_lap * c - 0.5 * self.plan.from_grid(sq)[0]
        else:
            return np.zeros_like(c)
        return sp.hermitian_symmetrize(out, self.d)


def evaluate_F(model: ModelSpec, u: SpectralField) -> SpectralField:
    """Drift nonlinearity F(u); real in, real out, products dealiased."""
    _check_input(model, u)
    kernel = DriftKernel(model, u.cutoff)
    return SpectralField(u.dim, u.cutoff, kernel(u.coeffs[0]))


def _check_input(model: ModelSpec, u: SpectralField) -> None:
    if not u.is_scalar:
        raise ModelError("drift acts on scalar fields")
    if model.d != u.dim:
        raise ModelError("model/field dimension mismatch")
    if not u.is_finite():
        raise FieldError("field corrupted")
    if model.kind == KELLER_SEGEL and abs(sp.mean(u)) > MEAN_TOL:
        raise ModelError("chemotaxis deviation field must have zero mean")


# -- pairings -----------------------------------------------------------------

def _cubic_plan(d: int, N: int) -> PadPlan:
    # triple products reach 3N; P >= 3N+1 makes their spatial mean exact
    return PadPlan(d, N, _fft.next_fast_len(3 * N + 1))


def _integral_u_cubed(u: SpectralField) -> float:
    plan = _cubic_plan(u.dim, u.cutoff)
    vals = plan.to_grid(u.coeffs)[0]
    return float(np.mean(vals ** 3).real)


def pairing_F_u(model: ModelSpec, u: SpectralField) -> float:
    """<F(u), u>_L2, with cubic terms integrated on a cubic-safe grid."""
    _check_input(model, u)
    l2sq = sp.l2_norm(u) ** 2
    kind = model.kind
    if kind == FISHER_KPP:
        return _integral_u_cubed(u) - l2sq
    if kind == KELLER_SEGEL:
        # <-chi div[u grad_inv u], u> = chi/2 int u^3 for zero-mean u
        return model.chi * (0.5 * _integral_u_cubed(u) + model.lam * l2sq)
    if kind == KURAMOTO_SIVASHINSKY:
        grad = sp.gradient(u)
        plan = _cubic_plan(u.dim, u.cutoff)
        gvals = plan.to_grid(grad.coeffs)
        uvals = plan.to_grid(u.coeffs)[0]
        cubic = float(np.mean(uvals * np.sum(gvals ** 2, axis=0)).real)
        return sp.l2_norm(grad) ** 2 - 0.5 * cubic
    return 0.0


# -- hypothesis probes --------------------------------------------------------

@dataclass
class ProbeRow:
    hypothesis: str
    ensemble_id: str
    ratio: float


@dataclass
class ProbeReport:
    rows: list

    def max_ratio(self, hypothesis: str) -> float:
        vals = [r.ratio for r in self.rows if r.hypothesis == hypothesis]
        if not vals:
            raise ModelError(f"no rows for hypothesis {hypothesis!r}")
        return max(vals)

    def summary_rows(self):
        out = []
        for hyp in ("H1", "H2", "H3"):
            rows = [r for r in self.rows if r.hypothesis == hyp]
            best = max(rows, key=lambda r: r.ratio)
            out.append(ProbeRow(hyp, best.ensemble_id, best.ratio))
        return out

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("hypothesis,ensemble_id,max_ratio\n")
            for row in self.summary_rows():
                fh.write(f"{row.hypothesis},{row.ensemble_id},{row.ratio:.17g}\n")


def hypothesis_probe(model: ModelSpec, params: HypothesisParams,
                     ensemble: list) -> ProbeReport:
    """Ratio diagnostics for the continuity (H1), growth (H2) and local
    monotonicity (H3) bounds; the implicit constants are unknown, so a finite
    max ratio is the check rather than a hard threshold."""
    if not ensemble:
        raise ModelError("empty ensemble")
    alpha = model.alpha
    rows = []
    fields = []
    for j, u in enumerate(ensemble):
        F = evaluate_F(model, u)
        l2 = sp.l2_norm(u)
        ha = sp.sobolev_norm(u, alpha)
        fields.append((u, F, ha))
        h1 = sp.sobolev_norm(F, -alpha) / ((1 + l2 ** params.beta1) * (1 + ha))
        h2 = abs(pairing_F_u(model, u)) / ((1 + l2 ** params.beta2)
                                           * (1 + ha ** params.gamma2))
        rows.append(ProbeRow("H1", str(j), h1))
        rows.append(ProbeRow("H2", str(j), h2))
    for a in range(len(fields)):
        for b in range(a + 1, len(fields)):
            u, Fu, hu = fields[a]
            v, Fv, hv = fields[b]
            diff = SpectralField(u.dim, u.cutoff, u.coeffs - v.coeffs)
            dF = SpectralField(u.dim, u.cutoff, Fu.coeffs - Fv.coeffs)
            num = abs(sp.spectral_inner(diff, dF))
            dl2 = sp.l2_norm(diff)
            dha = sp.sobolev_norm(diff, alpha)
            if dl2 == 0:
                continue
            den = (dl2 ** params.beta3 * dha ** params.gamma3
                   * (1 + hu ** params.kappa + hv ** params.kappa))
            rows.append(ProbeRow("H3", f"{a}:{b}", num / den))
    return ProbeReport(rows)
