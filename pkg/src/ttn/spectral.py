"""Fourier representation of periodic fields on the unit torus.

Fields live on T^d = R^d/Z^d with the convention e_k(x) = exp(2*pi*i k.x),
so Parseval reads ||u||_L2^2 = sum_k |c_k|^2 and the Laplacian eigenvalue at
wavevector k is -4*pi^2*|k|^2.  A field keeps every mode in the cube
max_i |k_i| <= N, stored in FFT frequency order [0..N, -N..-1] along each
spatial axis.  Quadratic nonlinearities are always evaluated on a zero-padded
grid large enough that every retained mode is alias-free.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Iterable

import numpy as np
from scipy import fft as _fft

HERMITIAN_TOL = 1e-12

SNAPSHOT_MAGIC = b"TTNF"
SNAPSHOT_VERSION = 1


class FieldError(ValueError):
    """Raised for corrupted or inconsistent spectral fields."""


@dataclass(frozen=True)
class Wavevector:
    """Integer lattice frequency k in Z^d, d in {2, 3}."""

    components: tuple[int, ...]

    def __post_init__(self):
        if len(self.components) not in (2, 3):
            raise ValueError("wavevector dimension must be 2 or 3")
        if not all(isinstance(c, (int, np.integer)) for c in self.components):
            raise ValueError("wavevector components must be integers")
        object.__setattr__(self, "components", tuple(int(c) for c in self.components))

    @property
    def dim(self) -> int:
        return len(self.components)

    @property
    def norm_sq(self) -> int:
        # exact integer arithmetic
        return sum(c * c for c in self.components)

    def __iter__(self):
        return iter(self.components)

    def __neg__(self) -> "Wavevector":
        return Wavevector(tuple(-c for c in self.components))


def freq_axis(N: int) -> np.ndarray:
    """Integer frequencies [0..N, -N..-1] of a (2N+1)-point axis."""
    M = 2 * N + 1
    return np.fft.fftfreq(M, d=1.0 / M).astype(np.int64)


def wavevector_grid(d: int, N: int) -> list[np.ndarray]:
    """Per-axis integer frequency arrays broadcast over the mode cube."""
    f = freq_axis(N)
    return list(np.meshgrid(*([f] * d), indexing="ij"))


def ksq_grid(d: int, N: int) -> np.ndarray:
    ks = wavevector_grid(d, N)
    return sum(k * k for k in ks)


def conj_reflect(coeffs: np.ndarray, d: int) -> np.ndarray:
    """conj(c_{-k}) arranged on the same index grid as c_k."""
    axes = tuple(range(coeffs.ndim - d, coeffs.ndim))
    out = coeffs
    for ax in axes:
        out = np.flip(out, axis=ax)
    return np.conj(np.roll(out, shift=(1,) * d, axis=axes))


def hermitian_defect(coeffs: np.ndarray, d: int) -> float:
    return float(np.max(np.abs(coeffs - conj_reflect(coeffs, d))))


def hermitian_symmetrize(coeffs: np.ndarray, d: int) -> np.ndarray:
    return 0.5 * (coeffs + conj_reflect(coeffs, d))


@dataclass(frozen=True)
class SpectralField:
    """Truncated Fourier coefficients of a scalar or vector field on T^d.

    coeffs has shape (component_count, 2N+1, ..., 2N+1); component_count is 1
    for scalars and d for vector fields.  Instances are immutable from the
    caller's side; all operations below are pure functions returning new
    fields.
    """

    dim: int
    cutoff: int
    coeffs: np.ndarray

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise FieldError("dimension must be 2 or 3")
        if self.cutoff < 0:
            raise FieldError("cutoff must be nonnegative")
        M = 2 * self.cutoff + 1
        expected = (M,) * self.dim
        c = np.asarray(self.coeffs, dtype=np.complex128)
        if c.shape == expected:
            c = c[np.newaxis, ...]
        if c.ndim != self.dim + 1 or c.shape[1:] != expected:
            raise FieldError(f"coefficient array must have shape (ncomp,)+{expected}")
        if c.shape[0] not in (1, self.dim):
            raise FieldError("component_count must be 1 or d")
        object.__setattr__(self, "coeffs", c)

    @property
    def component_count(self) -> int:
        return self.coeffs.shape[0]

    @property
    def is_scalar(self) -> bool:
        return self.component_count == 1

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.coeffs)))

    def mode(self, k: Iterable[int], component: int = 0) -> complex:
        """Coefficient c_k of one component."""
        k = tuple(int(c) for c in k)
        if len(k) != self.dim or any(abs(c) > self.cutoff for c in k):
            raise FieldError(f"mode {k} outside the resolved cube")
        M = 2 * self.cutoff + 1
        idx = tuple(c % M for c in k)
        return complex(self.coeffs[(component,) + idx])

    # -- constructors -------------------------------------------------------

    @staticmethod
    def zeros(d: int, N: int, ncomp: int = 1) -> "SpectralField":
        M = 2 * N + 1
        return SpectralField(d, N, np.zeros((ncomp,) + (M,) * d, dtype=np.complex128))

    @staticmethod
    def constant(d: int, N: int, value: float) -> "SpectralField":
        u = SpectralField.zeros(d, N)
        u.coeffs[(0,) + (0,) * d] = value
        return u

    @staticmethod
    def from_modes(d: int, N: int, modes: dict) -> "SpectralField":
        """Scalar field with prescribed coefficients {k-tuple: amplitude}."""
        u = SpectralField.zeros(d, N)
        M = 2 * N + 1
        for k, amp in modes.items():
            k = tuple(int(c) for c in k)
            if len(k) != d or any(abs(c) > N for c in k):
                raise FieldError(f"mode {k} outside the resolved cube")
            u.coeffs[(0,) + tuple(c % M for c in k)] = amp
        return u

    @staticmethod
    def random_real(d: int, N: int, rng: np.random.Generator, band: int,
                    amplitude: float, zero_mean: bool = True) -> "SpectralField":
        """Random real scalar field supported on 0 < max|k_i| <= band,
        rescaled so that its L2 norm equals `amplitude` exactly."""
        if band > N:
            raise FieldError("band exceeds cutoff")
        M = 2 * N + 1
        c = np.zeros((M,) * d, dtype=np.complex128)
        # draw on the half lattice, mirror by conjugation
        for k in _half_lattice(d, band):
            z = complex(rng.normal(), rng.normal())
            c[tuple(ki % M for ki in k)] = z
            c[tuple((-ki) % M for ki in k)] = np.conj(z)
        if not zero_mean:
            c[(0,) * d] = rng.normal()
        norm = np.sqrt(np.sum(np.abs(c) ** 2))
        if norm > 0:
            c *= amplitude / norm
        return SpectralField(d, N, c)


def _half_lattice(d: int, band: int):
    """Modes with 0 < max|k_i| <= band whose first nonzero component is > 0."""
    rng = range(-band, band + 1)
    out = []
    if d == 2:
        it = ((a, b) for a in rng for b in rng)
    else:
        it = ((a, b, c) for a in rng for b in rng for c in rng)
    for k in it:
        if all(c == 0 for c in k):
            continue
        first = next(c for c in k if c != 0)
        if first > 0:
            out.append(k)
    return out


def _require_finite(u: SpectralField) -> None:
    if not u.is_finite():
        raise FieldError("field corrupted")


def is_real_field(u: SpectralField, tol: float = HERMITIAN_TOL) -> bool:
    scale = max(1.0, float(np.max(np.abs(u.coeffs))) if u.is_finite() else 1.0)
    return u.is_finite() and hermitian_defect(u.coeffs, u.dim) <= tol * scale


def _require_real(u: SpectralField) -> None:
    _require_finite(u)
    if not is_real_field(u):
        raise FieldError("violated Hermitian symmetry")


# -- norms and diagnostics --------------------------------------------------

def sobolev_symbol(d: int, N: int, s: float) -> np.ndarray:
    """(1 + 4*pi^2*|k|^2)^s over the mode cube."""
    return (1.0 + 4.0 * np.pi ** 2 * ksq_grid(d, N)) ** s


def sobolev_norm(u: SpectralField, s: float) -> float:
    """Nonhomogeneous H^s norm; s = 0 is the L2 norm."""
    _require_finite(u)
    sym = sobolev_symbol(u.dim, u.cutoff, s)
    return float(np.sqrt(np.sum(sym * np.abs(u.coeffs) ** 2)))


def l2_norm(u: SpectralField) -> float:
    _require_finite(u)
    return float(np.sqrt(np.sum(np.abs(u.coeffs) ** 2)))


def mean(u: SpectralField) -> float:
    """Spatial average of a real scalar field (the k = 0 coefficient)."""
    if not u.is_scalar:
        raise FieldError("mean is defined for scalar fields")
    _require_real(u)
    c0 = u.coeffs[(0,) + (0,) * u.dim]
    if abs(c0.imag) > HERMITIAN_TOL * max(1.0, abs(c0.real)):
        raise FieldError("violated Hermitian symmetry")
    return float(c0.real)


def spectral_inner(u: SpectralField, v: SpectralField) -> float:
    """L2 inner product <u, v>; real for real fields."""
    _check_compatible(u, v)
    if u.component_count != v.component_count:
        raise FieldError("component mismatch in inner product")
    val = np.sum(u.coeffs * np.conj(v.coeffs))
    return float(val.real)


# -- linear spectral operators ----------------------------------------------

def apply_fractional_laplacian(u: SpectralField, alpha: float) -> SpectralField:
    """(-Laplacian)^alpha u, diagonal multiplier (4*pi^2*|k|^2)^alpha."""
    if alpha < 1:
        raise FieldError("alpha must be >= 1")
    _require_finite(u)
    mult = (4.0 * np.pi ** 2 * ksq_grid(u.dim, u.cutoff).astype(float)) ** alpha
    return SpectralField(u.dim, u.cutoff, u.coeffs * mult)


def gradient(u: SpectralField) -> SpectralField:
    """Gradient of a scalar field, returned as a d-component vector field."""
    if not u.is_scalar:
        raise FieldError("gradient expects a scalar field")
    _require_finite(u)
    ks = wavevector_grid(u.dim, u.cutoff)
    comps = [2j * np.pi * k * u.coeffs[0] for k in ks]
    return SpectralField(u.dim, u.cutoff, np.stack(comps))


def divergence(v: SpectralField) -> SpectralField:
    if v.component_count != v.dim:
        raise FieldError("divergence expects a d-component vector field")
    _require_finite(v)
    ks = wavevector_grid(v.dim, v.cutoff)
    out = sum(2j * np.pi * k * v.coeffs[j] for j, k in enumerate(ks))
    return SpectralField(v.dim, v.cutoff, out[np.newaxis, ...])


def inverse_gradient(f: SpectralField) -> SpectralField:
    """grad (-Laplacian)^{-1} (f - mean f): coefficient i*k/(2*pi*|k|^2) c_k.

    Satisfies -div(inverse_gradient(f)) = f - mean(f) exactly in spectral
    arithmetic.
    """
    if not f.is_scalar:
        raise FieldError("inverse_gradient expects a scalar field")
    _require_finite(f)
    ksq = ksq_grid(f.dim, f.cutoff).astype(float)
    safe = np.where(ksq == 0, 1.0, ksq)
    ks = wavevector_grid(f.dim, f.cutoff)
    comps = []
    for k in ks:
        comp = 1j * k / (2.0 * np.pi * safe) * f.coeffs[0]
        comps.append(np.where(ksq == 0, 0.0, comp))
    return SpectralField(f.dim, f.cutoff, np.stack(comps))


def project(u: SpectralField, M: int) -> SpectralField:
    """Zero every mode with max_i |k_i| > M; idempotent, L2-contractive."""
    if not 0 <= M <= u.cutoff:
        raise FieldError("projection band must satisfy 0 <= M <= N")
    _require_finite(u)
    ks = wavevector_grid(u.dim, u.cutoff)
    keep = np.ones_like(ks[0], dtype=bool)
    for k in ks:
        keep &= np.abs(k) <= M
    return SpectralField(u.dim, u.cutoff, u.coeffs * keep)


def translate(u: SpectralField, shift) -> SpectralField:
    """u(. - shift): multiply c_k by exp(2*pi*i k.shift)."""
    _require_finite(u)
    ks = wavevector_grid(u.dim, u.cutoff)
    phase = np.exp(2j * np.pi * sum(k * s for k, s in zip(ks, shift)))
    return SpectralField(u.dim, u.cutoff, u.coeffs * phase)


# -- dealiased products ------------------------------------------------------

class PadPlan:
    """Zero-padding plan between the mode cube (cutoff N) and a P^d grid.

    P >= b1 + b2 + N + 1 makes the product of fields band-limited to b1 and
    b2 exact on every retained mode (no aliasing back into the cube).
    """

    def __init__(self, d: int, N: int, P: int):
        if P < 2 * N + 1:
            raise ValueError("padded grid too small")
        self.d, self.N, self.P = d, N, P
        idx = np.concatenate([np.arange(0, N + 1), np.arange(P - N, P)])
        self._idx = idx

    def to_grid(self, coeffs: np.ndarray) -> np.ndarray:
        """Physical values on the P^d collocation grid."""
        ncomp = coeffs.shape[0]
        big = np.zeros((ncomp,) + (self.P,) * self.d, dtype=np.complex128)
        sel = np.ix_(np.arange(ncomp), *([self._idx] * self.d))
        big[sel] = coeffs
        axes = tuple(range(1, self.d + 1))
        return _fft.ifftn(big, axes=axes) * float(self.P ** self.d)

    def from_grid(self, values: np.ndarray) -> np.ndarray:
        """Mode-cube coefficients of grid values (retained band only)."""
        axes = tuple(range(1, values.ndim))
        hat = _fft.fftn(values, axes=axes) / float(self.P ** self.d)
        ncomp = values.shape[0]
        sel = np.ix_(np.arange(ncomp), *([self._idx] * self.d))
        return np.ascontiguousarray(hat[sel])


def product_pad_size(N: int, band1: int | None = None, band2: int | None = None) -> int:
    b1 = N if band1 is None else band1
    b2 = N if band2 is None else band2
    return _fft.next_fast_len(b1 + b2 + N + 1)


def _check_compatible(u: SpectralField, v: SpectralField) -> None:
    if u.dim != v.dim or u.cutoff != v.cutoff:
        raise FieldError("dimension/cutoff mismatch")
    _require_finite(u)
    _require_finite(v)


def dealiased_product(u: SpectralField, v: SpectralField) -> SpectralField:
    """Pointwise product restricted to the cube, alias-free on retained modes.

    scalar*scalar -> scalar; scalar*vector (either order) -> vector with
    componentwise products.
    """
    _check_compatible(u, v)
    if not (u.is_scalar or v.is_scalar):
        raise FieldError("use dealiased_dot for vector-vector products")
    plan = PadPlan(u.dim, u.cutoff, product_pad_size(u.cutoff))
    prod = plan.to_grid(u.coeffs) * plan.to_grid(v.coeffs)
    return SpectralField(u.dim, u.cutoff, plan.from_grid(prod))


def dealiased_dot(u: SpectralField, v: SpectralField) -> SpectralField:
    """Pointwise dot product of two vector fields, alias-free scalar result."""
    _check_compatible(u, v)
    if u.component_count != v.component_count:
        raise FieldError("component mismatch")
    plan = PadPlan(u.dim, u.cutoff, product_pad_size(u.cutoff))
    prod = np.sum(plan.to_grid(u.coeffs) * plan.to_grid(v.coeffs), axis=0,
                  keepdims=True)
    return SpectralField(u.dim, u.cutoff, plan.from_grid(prod))


# -- binary snapshots --------------------------------------------------------

def save_field(u: SpectralField, path) -> None:
    """Write a field snapshot: magic 'TTNF', u32 version/d/N/ncomp, then
    (re, im) float64 pairs row-major over the k-lattice with each axis
    ordered -N..N."""
    _require_finite(u)
    centered = np.fft.fftshift(u.coeffs, axes=tuple(range(1, u.dim + 1)))
    with open(path, "wb") as fh:
        fh.write(SNAPSHOT_MAGIC)
        fh.write(struct.pack("<4I", SNAPSHOT_VERSION, u.dim, u.cutoff,
                             u.component_count))
        fh.write(np.ascontiguousarray(centered).astype("<c16").tobytes())


def load_field(path) -> SpectralField:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != SNAPSHOT_MAGIC:
            raise FieldError("not a field snapshot")
        version, d, N, ncomp = struct.unpack("<4I", fh.read(16))
        if version != SNAPSHOT_VERSION:
            raise FieldError(f"unsupported snapshot version {version}")
        M = 2 * N + 1
        count = ncomp * M ** d
        raw = np.frombuffer(fh.read(16 * count), dtype="<c16", count=count)
    centered = raw.reshape((ncomp,) + (M,) * d).astype(np.complex128)
    coeffs = np.fft.ifftshift(centered, axes=tuple(range(1, d + 1)))
    return SpectralField(d, N, coeffs)
