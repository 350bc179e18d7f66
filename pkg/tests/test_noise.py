"""Unit tests for the noise ingredients: frames, weights, driver, transport."""

import numpy as np
import pytest

import ttn.noise as tn
import ttn.spectral as sp
from ttn.noise import NoiseError
from ttn.spectral import SpectralField


# -- frames -------------------------------------------------------------------

def test_frame_d2_rotation_rule():
    basis = tn.build_basis(2, 2)
    a = basis.frame((1, 0), 0)
    assert np.allclose(a, [0.0, 1.0])
    a = basis.frame((0, 1), 0)
    assert np.allclose(a, [-1.0, 0.0])


def test_frame_d3_axis_mode_spans_perp_plane():
    basis = tn.build_basis(3, 1)
    a1 = basis.frame((0, 0, 1), 0)
    a2 = basis.frame((0, 0, 1), 1)
    for a in (a1, a2):
        assert abs(a[2]) < 1e-14          # orthogonal to k: lies in xy-plane
        assert np.linalg.norm(a) == pytest.approx(1.0, abs=1e-14)
    assert abs(np.dot(a1, a2)) < 1e-14


@pytest.mark.parametrize("d,K", [(2, 3), (3, 2)])
def test_frames_orthonormal_and_divergence_free(d, K):
    basis = tn.build_basis(d, K)
    for idx, k in enumerate(basis.s_plus):
        for i in range(d - 1):
            a = basis.frames[idx, i]
            assert abs(np.dot(a, k)) < 1e-14
            assert np.linalg.norm(a) == pytest.approx(1.0, abs=1e-14)
        if d == 3:
            assert abs(np.dot(basis.frames[idx, 0], basis.frames[idx, 1])) < 1e-14


def test_frames_copied_to_negative_modes():
    basis = tn.build_basis(2, 2)
    for k in basis.s_plus:
        kt = tuple(int(c) for c in k)
        neg = tuple(-c for c in kt)
        assert np.array_equal(basis.frame(kt, 0), basis.frame(neg, 0))


def test_build_basis_deterministic():
    b1 = tn.build_basis(3, 2)
    b2 = tn.build_basis(3, 2)
    assert np.array_equal(b1.s_plus, b2.s_plus)
    assert np.array_equal(b1.frames, b2.frames)


# -- weights ------------------------------------------------------------------

def test_theta_shell_band_one_count():
    basis = tn.build_basis(2, 4)
    theta = tn.theta_shell(basis, 1)
    # 8 lattice points with max|k_i| = 1, each weight 1/sqrt(8)
    assert len(theta.values) == 8
    assert np.allclose(theta.values, 1 / np.sqrt(8))
    assert theta.l2_sq() == pytest.approx(1.0, abs=1e-14)


def test_theta_shell_linf_strictly_decreasing():
    basis = tn.build_basis(2, 6)
    linfs = [tn.theta_shell(basis, N).linf() for N in (1, 2, 4, 6)]
    assert all(a > b for a, b in zip(linfs, linfs[1:]))
    for N in (1, 2, 4, 6):
        assert tn.theta_shell(basis, N).l2_sq() == pytest.approx(1.0, abs=1e-12)


def test_theta_flat_norms():
    basis = tn.build_basis(2, 4)
    theta = tn.theta_flat(basis, 1)
    assert theta.l2_sq() == pytest.approx(8.0)
    for N in (1, 2, 4):
        assert tn.theta_flat(basis, N).linf() == 1.0


def test_theta_lattice_symmetry_enforced():
    support = np.array([[1, 0], [-1, 0], [0, 1], [0, -1]])
    with pytest.raises(NoiseError, match="symmetry"):
        tn.ThetaSequence(2, support, np.array([1.0, 1.0, 2.0, 2.0]))


def test_theta_support_must_pair_negatives():
    support = np.array([[1, 0]])
    with pytest.raises(NoiseError, match="closed"):
        tn.ThetaSequence(2, support, np.array([1.0]))


def test_theta_band_exceeding_basis_rejected():
    basis = tn.build_basis(2, 2)
    with pytest.raises(NoiseError, match="band"):
        tn.theta_shell(basis, 3)


def test_theta_csv_roundtrip(tmp_path):
    basis = tn.build_basis(3, 1)
    theta = tn.theta_shell(basis, 1)
    path = tmp_path / "theta.csv"
    tn.theta_to_csv(theta, path)
    back = tn.theta_from_csv(path, 3, normalized=True)
    for k, v in theta.items():
        assert back.value(k) == pytest.approx(v, rel=1e-15)


# -- driver -------------------------------------------------------------------

def test_driver_reproducible_bitwise():
    basis = tn.build_basis(2, 2)
    d1 = tn.NoiseDriver(123, basis)
    d2 = tn.NoiseDriver(123, basis)
    for _ in range(5):
        a = d1.sample_increments(0.01).values
        b = d2.sample_increments(0.01).values
        assert np.array_equal(a, b)


def test_increments_conjugate_pairing():
    basis = tn.build_basis(2, 1)
    incr = tn.NoiseDriver(7, basis).sample_increments(0.1)
    for k in [(1, 0), (0, 1), (1, 1)]:
        neg = tuple(-c for c in k)
        assert incr[(neg, 0)] == np.conj(incr[(k, 0)])


def test_covariation_moments():
    basis = tn.build_basis(2, 1)
    driver = tn.NoiseDriver(42, basis)
    dt = 0.01
    n = 20000
    draws = np.array([driver.sample_increments(dt).values[0, 0]
                      for _ in range(n)])
    # E[dW dW-bar] = 2 dt, with var(|dW|^2) = 4 dt^2
    prod = np.abs(draws) ** 2
    se = prod.std(ddof=1) / np.sqrt(n)
    assert abs(prod.mean() - 2 * dt) < 3 * se
    # E[(dW)^2] = 0 in both real and imaginary parts
    sq = draws ** 2
    for part in (sq.real, sq.imag):
        assert abs(part.mean()) < 3 * part.std(ddof=1) / np.sqrt(n)


def test_distinct_pairs_uncorrelated():
    basis = tn.build_basis(2, 1)
    driver = tn.NoiseDriver(9, basis)
    n = 20000
    vals = np.array([driver.sample_increments(0.01).values[:2, 0]
                     for _ in range(n)])
    prod = vals[:, 0] * np.conj(vals[:, 1])
    for part in (prod.real, prod.imag):
        assert abs(part.mean()) < 3 * part.std(ddof=1) / np.sqrt(n)


# -- key identity -------------------------------------------------------------

def test_key_identity_shell_d2():
    basis = tn.build_basis(2, 4)
    mat = tn.key_identity_matrix(basis, tn.theta_shell(basis, 1))
    assert np.max(np.abs(mat - 0.5 * np.eye(2))) < 1e-12


def test_key_identity_shell_d3():
    basis = tn.build_basis(3, 2)
    mat = tn.key_identity_matrix(basis, tn.theta_shell(basis, 2))
    assert np.max(np.abs(mat - (2.0 / 3.0) * np.eye(3))) < 1e-12


def test_key_identity_flat_unnormalized():
    for d, K in ((2, 3), (3, 2)):
        basis = tn.build_basis(d, K)
        theta = tn.theta_flat(basis, K)
        mat = tn.key_identity_matrix(basis, theta)
        target = (d - 1) / d * theta.l2_sq() * np.eye(d)
        assert np.max(np.abs(mat - target)) < 1e-12 * theta.l2_sq()


# -- transport ----------------------------------------------------------------

def transport_quadrature_oracle(u, basis, theta, values, nu, P=64):
    """Brute-force physical-space transport: evaluate V and grad(u) by direct
    mode sums on a P^2 grid, multiply pointwise, project back by quadrature."""
    d, N = u.dim, u.cutoff
    xs = np.arange(P) / P
    X = np.meshgrid(*([xs] * d), indexing="ij")

    def wave(k):
        return np.exp(2j * np.pi * sum(ki * x for ki, x in zip(k, X)))

    V = np.zeros((d,) + (P,) * d, dtype=np.complex128)
    for idx, k in enumerate(basis.s_plus):
        kt = tuple(int(c) for c in k)
        for i in range(d - 1):
            a = basis.frames[idx, i]
            w = values[idx, i]
            V += theta.value(kt) * np.multiply.outer(a, wave(kt)) * w
            V += theta.value(kt) * np.multiply.outer(a, wave(tuple(-c for c in kt))) * np.conj(w)
    G = np.zeros_like(V)
    M = 2 * N + 1
    for midx in np.ndindex(*(M,) * d):
        k = tuple(i if i <= N else i - M for i in midx)
        c = u.coeffs[(0,) + midx]
        if c == 0:
            continue
        G += np.multiply.outer(2j * np.pi * np.array(k), wave(k)) * c
    W = np.sum(V * G, axis=0)
    out = SpectralField.zeros(d, N)
    for midx in np.ndindex(*(M,) * d):
        k = tuple(i if i <= N else i - M for i in midx)
        out.coeffs[(0,) + midx] = np.mean(W * np.conj(wave(k)))
    out = SpectralField(d, N, out.coeffs * np.sqrt(tn.dimension_factor(d) * nu))
    return out


def test_transport_single_pair_mode_shift():
    # u = e_m + e_{-m}, one active increment pair (k, i) with dW = 1 gives
    # sqrt(C_d nu) theta_k 2 pi i (a.m) (e_{m+k} + e_{m-k} - e_{-m+k} - e_{-m-k})
    basis = tn.build_basis(2, 1)
    theta = tn.theta_shell(basis, 1)
    u = SpectralField.from_modes(2, 4, {(1, 0): 1, (-1, 0): 1})
    k, i = (0, 1), 0
    out = tn.apply_transport(u, basis, theta, {(k, i): 1.0}, nu=2.0)
    a = basis.frame(k, i)
    coef = np.sqrt(tn.dimension_factor(2) * 2.0) * theta.value(k) \
        * 2j * np.pi * np.dot(a, (1, 0))
    assert out.mode((1, 1)) == pytest.approx(coef, rel=1e-12)
    assert out.mode((1, -1)) == pytest.approx(coef, rel=1e-12)
    assert out.mode((-1, 1)) == pytest.approx(-coef, rel=1e-12)
    assert out.mode((-1, -1)) == pytest.approx(-coef, rel=1e-12)
    assert out.mode((0, 0)) == 0
    assert out.mode((1, 0)) == pytest.approx(0.0, abs=1e-14)


def test_transport_constant_field_is_zero():
    basis = tn.build_basis(2, 2)
    theta = tn.theta_shell(basis, 2)
    incr = tn.NoiseDriver(3, basis).sample_increments(0.01)
    out = tn.apply_transport(SpectralField.constant(2, 4, 3.0), basis, theta,
                             incr, nu=1.0)
    assert np.max(np.abs(out.coeffs)) == 0.0


def test_transport_matches_quadrature_oracle_and_energy_neutral():
    rng = np.random.default_rng(17)
    basis = tn.build_basis(2, 2)
    theta = tn.theta_shell(basis, 2)
    u = SpectralField.random_real(2, 3, rng, 3, 1.3)
    # arbitrary real increment values, conjugate-paired implicitly
    values = rng.normal(size=(basis.npos, 1)).astype(complex)
    out = tn.apply_transport(u, basis, theta, tn.Increments(basis, values), 1.5)
    oracle = transport_quadrature_oracle(u, basis, theta, values, 1.5)
    assert np.max(np.abs(out.coeffs - oracle.coeffs)) < 1e-10
    # divergence-free advection puts no energy into the resolved band
    assert abs(sp.spectral_inner(out, u)) < 1e-10
    assert abs(sp.spectral_inner(oracle, u)) < 1e-10


def test_transport_output_exactly_hermitian():
    basis = tn.build_basis(2, 3)
    theta = tn.theta_shell(basis, 3)
    driver = tn.NoiseDriver(5, basis)
    u = SpectralField.random_real(2, 6, np.random.default_rng(8), 6, 2.0)
    out = tn.apply_transport(u, basis, theta, driver.sample_increments(1e-3), 1.0)
    assert sp.hermitian_defect(out.coeffs, 2) == 0.0


def test_transport_preserves_mean_exactly():
    basis = tn.build_basis(2, 2)
    theta = tn.theta_shell(basis, 2)
    driver = tn.NoiseDriver(11, basis)
    u = SpectralField.random_real(2, 5, np.random.default_rng(4), 4, 1.0,
                                  zero_mean=False)
    out = tn.apply_transport(u, basis, theta, driver.sample_increments(1e-2), 3.0)
    assert out.mode((0, 0)) == 0


def test_transport_rejects_mismatched_theta():
    basis = tn.build_basis(2, 1)
    big = tn.build_basis(2, 3)
    theta = tn.theta_shell(big, 3)
    u = SpectralField.random_real(2, 4, np.random.default_rng(0), 3, 1.0)
    incr = tn.NoiseDriver(0, basis).sample_increments(0.1)
    with pytest.raises(NoiseError, match="mismatch"):
        tn.apply_transport(u, basis, theta, incr, 1.0)
