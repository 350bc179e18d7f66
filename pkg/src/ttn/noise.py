"""Transport-noise ingredients: divergence-free mode frames, weight sequences,
and the seeded complex Brownian driver.

The noise velocity field is sum_{k,i} theta_k a_{k,i} exp(2*pi*i k.x) W^{k,i}
with a_{k,i} an orthonormal basis of k-perp, a_{-k,i} = a_{k,i}, and complex
Brownian motions obeying conj(W^{k,i}) = W^{-k,i} with bracket
[W^{k,i}, W^{l,j}]_t = 2t delta_{k,-l} delta_{ij}.  For weights invariant
under the signed permutations of the lattice,

    sum_{k,i} theta_k^2 a_{k,i} (x) a_{k,i} = ((d-1)/d) ||theta||_l2^2 I_d,

which is why the Ito correction of the Stratonovich transport term is exactly
an isotropic Laplacian.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .spectral import (FieldError, PadPlan, SpectralField, hermitian_symmetrize,
                       product_pad_size, wavevector_grid)


class NoiseError(ValueError):
    """Raised for inconsistent noise configurations."""


def dimension_factor(d: int) -> float:
    """C_d = d/(d-1), normalising the frame sum to the identity matrix."""
    return d / (d - 1)


def _positive_modes(d: int, K: int) -> np.ndarray:
    """Modes with 0 < max|k_i| <= K whose first nonzero component is positive,
    in lexicographic order."""
    axes = np.arange(-K, K + 1)
    grids = np.meshgrid(*([axes] * d), indexing="ij")
    modes = np.stack([g.ravel() for g in grids], axis=1)
    keep = []
    for k in modes:
        if not k.any():
            continue
        first = k[np.nonzero(k)[0][0]]
        if first > 0:
            keep.append(k)
    out = np.array(sorted(map(tuple, keep)), dtype=np.int64)
    return out


def _frame(k: np.ndarray) -> np.ndarray:
    """Orthonormal basis of k-perp, shape (d-1, d).

    d=2: the rotation (-k2, k1)/|k|.  d=3: a1 = (k x e)/|k x e| with e the
    coordinate direction most orthogonal to k (ties to the lowest index),
    a2 = (k/|k|) x a1.
    """
    d = len(k)
    if d == 2:
        norm = np.sqrt(float(k[0] ** 2 + k[1] ** 2))
        return np.array([[-k[1] / norm, k[0] / norm]])
    scores = np.abs(k)
    e = np.zeros(3)
    e[int(np.argmin(scores))] = 1.0
    a1 = np.cross(k.astype(float), e)
    a1 /= np.linalg.norm(a1)
    khat = k / np.linalg.norm(k.astype(float))
    a2 = np.cross(khat, a1)
    a2 /= np.linalg.norm(a2)
    return np.stack([a1, a2])


@dataclass(frozen=True)
class NoiseBasis:
    """Frames a_{k,i} of k-perp for every mode 0 < max|k_i| <= K."""

    dim: int
    K: int
    s_plus: np.ndarray          # (npos, d) int, lexicographic
    frames: np.ndarray          # (npos, d-1, d) float, copied to -k

    @property
    def npos(self) -> int:
        return self.s_plus.shape[0]

    def support(self):
        """All supported modes, k and -k, as tuples."""
        for k in self.s_plus:
            yield tuple(int(c) for c in k)
        for k in self.s_plus:
            yield tuple(-int(c) for c in k)

    def index_of(self, k) -> int:
        """Index into s_plus of k or -k; raises for unsupported modes."""
        key = tuple(int(c) for c in k)
        table = self._index_table()
        if key in table:
            return table[key]
        raise NoiseError(f"mode {key} not in the noise basis")

    def _index_table(self) -> dict:
        if not hasattr(self, "_table"):
            table = {}
            for idx, k in enumerate(self.s_plus):
                table[tuple(int(c) for c in k)] = idx
                table[tuple(-int(c) for c in k)] = idx
            object.__setattr__(self, "_table", table)
        return self._table

    def is_positive(self, k) -> bool:
        k = tuple(int(c) for c in k)
        first = next(c for c in k if c != 0)
        return first > 0

    def frame(self, k, i: int) -> np.ndarray:
        """a_{k,i}; identical for k and -k."""
        return self.frames[self.index_of(k), i]


def build_basis(d: int, K: int) -> NoiseBasis:
    """Deterministic frames for all modes 0 < max|k_i| <= K."""
    if d not in (2, 3):
        raise NoiseError("dimension must be 2 or 3")
    if K < 1:
        raise NoiseError("band K must be >= 1")
    s_plus = _positive_modes(d, K)
    frames = np.stack([_frame(k) for k in s_plus])
    return NoiseBasis(d, K, s_plus, frames)


# -- weight sequences ---------------------------------------------------------

def _lattice_orbit(k) -> tuple:
    """Canonical label of the signed-permutation orbit of k."""
    return tuple(sorted(abs(int(c)) for c in k))


@dataclass(frozen=True)
class ThetaSequence:
    """Nonnegative weights theta_k on a finite, symmetric mode set.

    Weights must be constant on signed-permutation orbits of the lattice
    (which contains the k -> -k symmetry); this is the symmetry the key
    identity needs.
    """

    dim: int
    support: np.ndarray         # (n, d) int, all +-k present
    values: np.ndarray          # (n,) float >= 0
    normalized: bool = field(default=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if np.any(~np.isfinite(vals)) or np.any(vals < 0):
            raise NoiseError("theta weights must be finite and nonnegative")
        orbit_value: dict = {}
        index: dict = {}
        for k, v in zip(self.support, vals):
            key = tuple(int(c) for c in k)
            index[key] = float(v)
            orb = _lattice_orbit(key)
            if orb in orbit_value and abs(orbit_value[orb] - v) > 1e-12:
                raise NoiseError(f"theta breaks lattice symmetry on orbit {orb}")
            orbit_value.setdefault(orb, float(v))
        for key in list(index):
            neg = tuple(-c for c in key)
            if neg not in index:
                raise NoiseError("theta support not closed under k -> -k")
        if self.normalized and abs(self.l2_sq() - 1.0) > 1e-12:
            raise NoiseError("theta flagged normalized but ||theta||_l2 != 1")
        object.__setattr__(self, "_index", index)

    def value(self, k) -> float:
        return self._index.get(tuple(int(c) for c in k), 0.0)

    def l2_sq(self) -> float:
        return float(np.sum(np.asarray(self.values, dtype=float) ** 2))

    def linf(self) -> float:
        return float(np.max(self.values)) if len(self.values) else 0.0

    def items(self):
        for k, v in zip(self.support, self.values):
            yield tuple(int(c) for c in k), float(v)


def _band_support(basis: NoiseBasis, N: int) -> np.ndarray:
    if N < 1:
        raise NoiseError("theta band must be >= 1")
    if N > basis.K:
        raise NoiseError("theta band exceeds the basis band")
    rows = [k for k in basis.support() if max(abs(c) for c in k) <= N]
    if not rows:
        raise NoiseError("empty theta support")
    return np.array(sorted(rows), dtype=np.int64)


def theta_shell(basis: NoiseBasis, N: int) -> ThetaSequence:
    """l2-normalised uniform weights on 0 < max|k_i| <= N; the l-infinity
    norm (#support)^{-1/2} shrinks as the band grows."""
    support = _band_support(basis, N)
    c = 1.0 / np.sqrt(len(support))
    return ThetaSequence(basis.dim, support, np.full(len(support), c),
                         normalized=True)


def theta_flat(basis: NoiseBasis, N: int) -> ThetaSequence:
    """Unnormalised unit weights on the band: ||theta||_linf = 1 while
    ||theta||_l2^2 grows with the mode count."""
    support = _band_support(basis, N)
    return ThetaSequence(basis.dim, support, np.ones(len(support)))


def theta_to_csv(theta: ThetaSequence, path) -> None:
    with open(path, "w") as fh:
        for k, v in sorted(theta.items()):
            fh.write(",".join(str(c) for c in k) + f",{v:.17g}\n")


def theta_from_csv(path, d: int, normalized: bool = False) -> ThetaSequence:
    rows, vals = [], []
    with open(path) as fh:
        for line in fh:
            parts = line.strip().split(",")
            if len(parts) != d + 1:
                raise NoiseError(f"expected {d + 1} columns, got {len(parts)}")
            rows.append([int(c) for c in parts[:d]])
            vals.append(float(parts[d]))
    return ThetaSequence(d, np.array(rows, dtype=np.int64), np.array(vals),
                         normalized=normalized)


# -- Brownian driver ----------------------------------------------------------

class Increments:
    """One step of complex Brownian increments; conjugate-paired across +-k.

    Entries for k in S_+ are xi + i*zeta with independent N(0, dt) parts;
    the entry for (-k, i) is always the complex conjugate.
    """

    def __init__(self, basis: NoiseBasis, values: np.ndarray):
        self.basis = basis
        self.values = values            # (npos, d-1) complex

    def __getitem__(self, pair):
        k, i = pair
        idx = self.basis.index_of(k)
        val = self.values[idx, i]
        return val if self.basis.is_positive(k) else np.conj(val)

    def items(self):
        for idx, k in enumerate(self.basis.s_plus):
            for i in range(self.basis.dim - 1):
                kt = tuple(int(c) for c in k)
                yield (kt, i), self.values[idx, i]
                yield (tuple(-c for c in kt), i), np.conj(self.values[idx, i])


class NoiseDriver:
    """Seeded generator of increment sets; one driver per trajectory."""

    def __init__(self, seed: int, basis: NoiseBasis):
        self.seed = int(seed)
        self.basis = basis
        self._rng = np.random.default_rng(self.seed)

    def sample_increments(self, dt: float) -> Increments:
        if dt <= 0:
            raise NoiseError("dt must be positive")
        shape = (self.basis.npos, self.basis.dim - 1)
        draws = self._rng.normal(size=shape + (2,)) * np.sqrt(dt)
        return Increments(self.basis, draws[..., 0] + 1j * draws[..., 1])


# -- transport operator -------------------------------------------------------

class TransportPlan:
    """Precomputed machinery to apply the transport term to mode cubes.

    Builds the random velocity field V = sum theta_k a_{k,i} W^{k,i} e_k in
    spectral form and multiplies it with grad(u) on a padded grid sized so
    every retained mode of V.grad(u) is exact; modes pushed outside the cube
    are discarded (Galerkin projection).
    """

    def __init__(self, basis: NoiseBasis, theta: ThetaSequence, cutoff: int):
        if theta.dim != basis.dim:
            raise NoiseError("basis/theta dimension mismatch")
        basis_support = set(basis.support())
        for k, v in theta.items():
            if v > 0 and k not in basis_support:
                raise NoiseError("basis/theta support mismatch")
        d = basis.dim
        self.d, self.N = d, cutoff
        # active positive modes with a positive weight
        act_idx = [i for i, k in enumerate(basis.s_plus)
                   if theta.value(k) > 0]
        self.active = np.array(act_idx, dtype=np.int64)
        self.frames = basis.frames[self.active]            # (na, d-1, d)
        self.theta_vals = np.array([theta.value(basis.s_plus[i])
                                    for i in act_idx])
        kpos = basis.s_plus[self.active]
        self.K = int(np.max(np.abs(kpos))) if len(kpos) else 1
        MV = 2 * self.K + 1
        self.MV = MV
        flat_pos = np.zeros(len(kpos), dtype=np.int64)
        flat_neg = np.zeros(len(kpos), dtype=np.int64)
        for row, k in enumerate(kpos):
            pos = tuple(int(c) % MV for c in k)
            neg = tuple((-int(c)) % MV for c in k)
            flat_pos[row] = np.ravel_multi_index(pos, (MV,) * d)
            flat_neg[row] = np.ravel_multi_index(neg, (MV,) * d)
        self.flat_pos, self.flat_neg = flat_pos, flat_neg
        P = product_pad_size(cutoff, band1=self.K, band2=cutoff)
        self.plan_v = PadPlan(d, self.K, P)
        self.plan_u = PadPlan(d, cutoff, P)
        self.grad_mult = [2j * np.pi * k
                          for k in wavevector_grid(d, cutoff)]

    def velocity_modes(self, values: np.ndarray) -> np.ndarray:
        """Spectral coefficients of V from one increment set."""
        vp = np.einsum("pi,pij->pj", values[self.active], self.frames)
        vp = vp * self.theta_vals[:, None]
        vhat = np.zeros((self.d,) + (self.MV,) * self.d, dtype=np.complex128)
        flat = vhat.reshape(self.d, -1)
        for j in range(self.d):
            flat[j, self.flat_pos] = vp[:, j]
            flat[j, self.flat_neg] = np.conj(vp[:, j])
        return vhat

    def apply_raw(self, coeffs: np.ndarray, values: np.ndarray,
                  nu: float) -> np.ndarray:
        """sqrt(C_d nu) * Pi_N (V . grad u) for scalar mode-cube coeffs."""
        vhat = self.velocity_modes(values)
        vvals = self.plan_v.to_grid(vhat)
        grad = np.stack([g * coeffs for g in self.grad_mult])
        gvals = self.plan_u.to_grid(grad)
        wvals = np.sum(vvals * gvals, axis=0, keepdims=True)
        out = self.plan_u.from_grid(wvals)[0]
        out *= np.sqrt(dimension_factor(self.d) * nu)
        # a_{k,i}.k = 0 makes the spatial mean of the transport term exactly
        # zero; enforce it against FFT roundoff.
        out[(0,) * self.d] = 0.0
        return hermitian_symmetrize(out, self.d)


def apply_transport(u: SpectralField, basis: NoiseBasis, theta: ThetaSequence,
                    incr, nu: float) -> SpectralField:
    """sqrt(C_d nu) sum_{k,i} theta_k (sigma_{k,i} . grad u) dW^{k,i}.

    `incr` is an Increments set or a mapping {(k, i): complex} for k in S_+;
    the conjugate entries for -k are implicit.  The result is exactly
    Hermitian-symmetric.
    """
    if not u.is_scalar:
        raise FieldError("transport acts on scalar fields")
    if not u.is_finite():
        raise FieldError("field corrupted")
    plan = TransportPlan(basis, theta, u.cutoff)
    if isinstance(incr, Increments):
        values = incr.values
    else:
        values = np.zeros((basis.npos, basis.dim - 1), dtype=np.complex128)
        for (k, i), val in incr.items():
            idx = basis.index_of(k)
            if basis.is_positive(k):
                values[idx, i] = val
            else:
                values[idx, i] = np.conj(val)
    out = plan.apply_raw(u.coeffs[0], values, nu)
    return SpectralField(u.dim, u.cutoff, out)


def key_identity_matrix(basis: NoiseBasis, theta: ThetaSequence) -> np.ndarray:
    """sum_{k,i} theta_k^2 a_{k,i} (x) a_{k,i}; equals
    ((d-1)/d) ||theta||_l2^2 I_d for lattice-symmetric weights."""
    d = basis.dim
    out = np.zeros((d, d))
    for idx, k in enumerate(basis.s_plus):
        t2 = theta.value(k) ** 2
        if t2 == 0:
            continue
        for i in range(d - 1):
            a = basis.frames[idx, i]
            out += 2.0 * t2 * np.outer(a, a)   # k and -k share the frame
    return out
