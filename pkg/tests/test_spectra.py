import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chiral_bands import (BandSet, InvalidInput, InvalidParameter, SumCutoff, band_structure, eig,
                          helix_lattice, polarization_frame, spin_expectation, zero_spin_basis)
from chiral_bands.dipole import CouplingMode
from chiral_bands.spectra import (degenerate_clusters, diagonalize, fix_phase, k_grid, mirror_residuals,
                                  reflection_residuals, track)
from chiral_bands.errors import RefineGrid

A, R0 = 0.175, 0.05


def random_hermitian(rng, n):
    m = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return (m + m.conj().T) / 2


def test_diagonalize_hermitian(rng):
    h = random_hermitian(rng, 6)
    values, vecs = diagonalize(h, True)
    assert np.allclose(h @ vecs, vecs * values)
    assert np.all(np.diff(values.real) >= 0)
    assert np.allclose(vecs.conj().T @ vecs, np.eye(6))


def test_diagonalize_general(rng):
    h = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
    values, vecs = diagonalize(h, False)
    assert np.allclose(h @ vecs, vecs * values)
    assert np.allclose(np.linalg.norm(vecs, axis=0), 1)


def test_phase_convention(rng):
    v = fix_phase(rng.normal(size=(4, 3)) + 1j * rng.normal(size=(4, 3)))
    idx = np.argmax(np.abs(v), axis=0)
    pivots = v[idx, np.arange(3)]
    assert np.allclose(pivots.imag, 0) and np.all(pivots.real > 0)


def test_degenerate_cluster_resolved_by_spin():
    # two spin-mixed degenerate states: eigh alone would return arbitrary combinations
    h = np.diag([1.0, 1.0, 2.0, 3.0]).astype(complex)
    u = np.eye(4, dtype=complex)
    u[:2, :2] = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
    values, vecs = diagonalize(u @ h @ u.conj().T, True)
    spins = [spin_expectation(vecs[:, i]) for i in range(4)]
    assert np.allclose(sorted(np.abs(spins[:2])), [1, 1])


def test_degenerate_clusters():
    sl = degenerate_clusters(np.array([0.0, 1e-12, 1.0, 2.0, 2.0, 2.0]))
    assert [(s.start, s.stop) for s in sl] == [(0, 2), (2, 3), (3, 6)]


@given(st.integers(min_value=1, max_value=5), st.integers(min_value=0, max_value=2**31))
@settings(max_examples=40, deadline=None)
def test_zero_spin_basis_equalizes_spin(m, seed):
    rng = np.random.default_rng(seed)
    dim = 8
    vecs = rng.normal(size=(dim, m)) + 1j * rng.normal(size=(dim, m))
    basis = zero_spin_basis(vecs)
    q, _ = np.linalg.qr(vecs)
    mean = np.trace(q.conj().T @ (np.tile([1, -1], dim // 2)[:, None] * q)).real / m
    assert np.allclose(basis.conj().T @ basis, np.eye(m))
    # same subspace
    assert np.allclose(q @ q.conj().T @ basis, basis)
    assert np.allclose([spin_expectation(basis[:, i]) for i in range(m)], mean, atol=1e-12)


def test_spin_expectation():
    assert spin_expectation([1, 0, 0, 0]) == 1.0
    assert spin_expectation([0, 1, 0, 0]) == -1.0
    assert np.isclose(spin_expectation([1, 1j, 0, 0]), 0)
    with pytest.raises(InvalidParameter):
        spin_expectation([1, 0, 0])
    with pytest.raises(InvalidParameter):
        spin_expectation([0, 0])


def test_eig_pairs(rng):
    h = random_hermitian(rng, 4)
    pairs = eig(h)
    for p in pairs:
        assert np.allclose(h @ p.vector, p.value * p.vector)


def test_k_grid():
    k = k_grid(A, 5)
    assert np.isclose(k[0], -np.pi / A) and np.isclose(k[-1], np.pi / A)
    with pytest.raises(InvalidParameter):
        k_grid(A, 2)


def test_tracking_follows_crossing():
    # two bands crossing linearly with orthogonal fixed eigenvectors
    k = np.linspace(-1, 1, 21)
    values = np.stack([np.sort([x, -x]) for x in k]).astype(complex)
    vecs = np.empty((21, 2, 2), dtype=complex)
    for i, x in enumerate(k):
        vecs[i] = np.eye(2) if x >= 0 else np.eye(2)[:, ::-1]
    # state e0 carries energy +x
    values_tracked, _, worst = track(values, vecs, k)
    assert np.allclose(values_tracked[:, 0].real, k)
    assert worst == 1.0


def test_tracking_refuses_jump():
    k = np.linspace(0, 1, 3)
    vecs = np.array([np.eye(2), np.eye(2), np.array([[1, 1], [1, -1]]) / np.sqrt(2)], dtype=complex)
    with pytest.raises(RefineGrid):
        track(np.zeros((3, 2), complex), vecs, k, floor=0.9)


@pytest.fixture(scope="module")
def bands_z():
    lat = helix_lattice(3, R0, A)
    return band_structure(lat, polarization_frame([0, 0, 1]), 201, SumCutoff(2000), "hermitian")


def test_band_structure_shapes(bands_z):
    assert bands_z.energies.shape == (201, 6)
    assert bands_z.vectors.shape == (201, 6, 6)
    assert bands_z.spin.shape == (201, 6)
    assert bands_z.mode is CouplingMode.HERMITIAN


def test_velocity_matches_finite_difference(bands_z):
    v = bands_z.velocity()
    e = bands_z.energies.real
    dk = bands_z.k[1] - bands_z.k[0]
    assert np.allclose(v[1:-1], (e[2:] - e[:-2]) / (2 * dk))
    # the endpoint states are the same states, possibly under other labels
    perm = bands_z.wrap_permutation()
    assert np.allclose(v[-1][perm], v[0])


def test_helicity_is_sign_of_spin_times_velocity(bands_z):
    eta = bands_z.helicity()
    prod = bands_z.spin * bands_z.velocity()
    mask = np.abs(prod) > 1e-10
    assert np.array_equal(eta[mask], np.sign(prod[mask]).astype(int))
    assert np.all(eta[~mask] == 0)


def test_reflection_residuals_detect_antisymmetry(bands_z):
    de, ds = reflection_residuals(bands_z, -1.0)
    assert de < 1e-6 and ds < 1e-6
    _, ds_sym = reflection_residuals(bands_z, +1.0)
    assert ds_sym > 1e-3


def test_mirror_residuals_self_vs_flipped(bands_z):
    flipped = BandSet(bands_z.k, bands_z.energies, bands_z.vectors, -bands_z.spin, bands_z.mode, bands_z.period)
    de, ds, dv = mirror_residuals(bands_z, flipped)
    assert de == 0 and ds == 0 and dv == 0


def test_residuals_need_symmetric_grid(bands_z):
    shifted = BandSet(bands_z.k + 0.1, bands_z.energies, bands_z.vectors, bands_z.spin, bands_z.mode, A)
    with pytest.raises(InvalidInput):
        reflection_residuals(shifted, -1.0)


def test_sorted_view_orders_by_real_part(bands_z):
    e, v, s = bands_z.sorted_view()
    assert np.all(np.diff(e.real, axis=1) >= 0)
    assert v.shape == bands_z.vectors.shape
