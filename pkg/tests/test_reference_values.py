"""Reference values and closed-form properties, one small case each."""

import json

import numpy as np
import pytest
from oracles import cesaro_bloch, green_textbook

from chiral_bands import (Manifold, NotASymmetry, SumCutoff, apply_orthogonal, azimuthal_phase,
                          band_structure, build_operator, chi_cross, chi_same, coupling, get_model,
                          helix_lattice, helix_relative, polarization_frame, prism_lattice,
                          green_tensor, realspace_hamiltonian, reflection, rotation, spin_expectation, spin_flip_cylindrical,
                          symmetry_residual, wilson_loop, zak_grid, zak_phase)
from chiral_bands.cli import main
from chiral_bands.config import build, resolve
from chiral_bands.spectra import diagonalize, match_states
from chiral_bands.topology import overlap_matrix

A, R0 = 0.175, 0.05
CUT = SumCutoff(2000)


# geometry

def test_helix_reference_sites():
    lat = helix_lattice(3, R0, A)
    assert np.allclose(lat.basis[0], [0.05, 0, 0])
    assert np.isclose(lat.basis[1, 2], 0.175 / 3)


def test_zero_radius_chain():
    lat = helix_lattice(1, 0.0, 0.2)
    assert np.allclose(lat.basis, 0)
    assert np.allclose(lat.site(1, 3), [0, 0, 0.6])


def test_relative_reference_values():
    lat = helix_lattice(3, R0, A)
    assert np.allclose(helix_relative(lat, 2, 2, 0), 0)
    assert np.allclose(helix_relative(lat, 2, 2, 1), [0, 0, A])
    prism = prism_lattice(R0, A)
    assert np.isclose(helix_relative(prism, 2, 3, 0)[2], 0)
    assert np.isclose(helix_relative(prism, 2, 1, 0)[2], A / 2)


def test_prism_mirror_permutes_2_and_3():
    prism = prism_lattice(R0, A)
    image = reflection([0, 1, 0])(prism.basis)
    assert np.allclose(image[0], prism.basis[0])
    assert np.allclose(image[1], prism.basis[2]) and np.allclose(image[2], prism.basis[1])


def test_reflection_yz_maps_right_helix_to_left():
    right, left = helix_lattice(3, R0, A), helix_lattice(3, R0, A, "left")
    image = apply_orthogonal(reflection([1, 0, 0]), right)
    # the mirror image is the left helix turned by pi about its own axis
    turned = apply_orthogonal(rotation([0, 0, 1], np.pi), left)
    assert np.allclose(image.basis, turned.basis, atol=1e-15)
    assert np.allclose(image.axis, left.axis)


def test_circular_vector_reference():
    f = polarization_frame([0, 0, 1], [1, 0, 0])
    assert np.allclose(f.eps_up, np.array([1, 1j, 0]) / np.sqrt(2))
    assert abs(np.vdot(f.eps_up, f.eps_down)) < 1e-15
    assert azimuthal_phase(f.d1, f) == 0.0


# dipole

def test_im_green_short_distance_limit():
    g = green_textbook(np.array([1e-4, 0, 0]))
    assert np.allclose(g.imag, 2 * np.pi / (6 * np.pi) * np.eye(3), atol=1e-6)
    # -2 Im of the self-coupling element reproduces Gamma_0 = 1
    assert np.isclose(3 * 2 * np.pi / (6 * np.pi), 1.0)


def test_far_field_at_k0r_20():
    x = 20.0
    r = np.array([0, 0, x / (2 * np.pi)])
    g = green_tensor(r)
    far = np.exp(1j * x) / (4 * np.pi * r[2])
    # transverse: far field up to 1/x corrections
    assert abs(g[0, 0] / far - 1) < 1.5 / x
    # longitudinal: the leading surviving term is the -2i/x near-field piece
    assert np.isclose(abs(g[2, 2] / far), abs(-2j / x + 2 / x**2), rtol=1e-12)
    assert abs(g[2, 2]) < 0.11 * abs(g[0, 0])


def test_same_spin_couplings_equal(rng):
    for _ in range(50):
        frame = polarization_frame(rng.normal(size=3))
        r = rng.normal(size=3)
        assert np.isclose(coupling(r, frame, "up", "up"), coupling(r, frame, "down", "down"), rtol=1e-12)


def test_spin_flip_zero_for_equal_cylindrical_coords():
    assert spin_flip_cylindrical(0.3, 0.3, 1.1, 1.1, 0.5) == 0


def test_spin_flip_helix_structure():
    a, r0 = A, R0
    vals = []
    for phi_i, phi_j in [(0.3, 1.0), (1.3, 2.0), (-2.0, -1.3)]:
        d = phi_j - phi_i
        r = np.sqrt((2 * r0 * np.sin(d / 2)) ** 2 + 0.04)
        f = spin_flip_cylindrical(r0, r0, phi_i, phi_j, r)
        vals.append(f / (np.sin(d / 2) ** 2 * np.exp(-1j * (phi_i + phi_j))))
    assert np.allclose(vals, vals[0], rtol=1e-12)


def test_spin_flip_mirror(rng):
    for _ in range(20):
        rho, phi, r = rng.uniform(0.1, 1, 2), rng.uniform(-3, 3, 2), rng.uniform(0.5, 2)
        a = spin_flip_cylindrical(rho[0], rho[1], -phi[0], -phi[1], r)
        b = spin_flip_cylindrical(rho[0], rho[1], phi[0], phi[1], r, reverse=True)
        assert np.isclose(a, b)


def test_single_site_hamiltonian():
    frame = polarization_frame([0, 0, 1])
    assert np.allclose(realspace_hamiltonian([[0, 0, 0]], frame, "hermitian"), 0)
    assert np.allclose(realspace_hamiltonian([[0, 0, 0]], frame, "full"), -0.5j * np.eye(2))


def test_pair_along_q_is_spin_diagonal():
    h = realspace_hamiltonian([[0, 0, 0], [0, 0, 0.3]], polarization_frame([0, 0, 1]), "full")
    assert np.allclose(h[0, 3], 0) and np.allclose(h[1, 2], 0)


# bloch

def test_chain_along_q_spin_flip_zero():
    chain = helix_lattice(1, 0.0, 0.2)
    frame = polarization_frame([0, 0, 1])
    assert abs(chi_same(chain, frame, 0.0, 1, "up", "down", CUT)) < 1e-15
    h = get_model(chain, frame, "full", CUT).matrices(np.linspace(-15, 15, 7))
    assert np.allclose(h[:, 0, 1], 0) and np.allclose(h[:, 0, 0], h[:, 1, 1])


def test_ungauged_phase_exact():
    lat = helix_lattice(3, R0, A)
    frame = polarization_frame([0, 0, 1])
    k = 4.2
    g = chi_cross(lat, frame, k, 3, 1, "up", "down", CUT)
    u = chi_cross(lat, frame, k, 3, 1, "up", "down", CUT, gauged=False)
    assert np.isclose(u, g * np.exp(-1j * k * 2 * A / 3), rtol=1e-14)


@pytest.mark.parametrize("mode", ["hermitian", "full"])
def test_converged_sum_matches_4001_cell_oracle(mode, rng):
    lat = helix_lattice(3, R0, A)
    frame = polarization_frame([0, 0, 1])
    for k in rng.uniform(-np.pi / A, np.pi / A, 3):
        ref = cesaro_bloch(lat.basis, lat.period, lat.axis, frame.d1, frame.d2, k, 2000, mode == "hermitian")
        assert np.abs(get_model(lat, frame, mode, CUT).matrices([k])[0] - ref).max() < 1e-4


# spectra

def test_eigen_reference_cases(rng):
    values, vecs = diagonalize(np.diag([2.0, -1.0]).astype(complex), True)
    assert np.allclose(values, [-1, 2]) and np.allclose(np.abs(vecs), [[0, 1], [1, 0]])
    h = get_model(helix_lattice(3, R0, A), polarization_frame([0, 0, 1]), "full", CUT).matrices([1.3])[0]
    values, _ = diagonalize(h, False)
    assert np.isclose(values.sum(), np.trace(h), atol=1e-9)
    hh = get_model(helix_lattice(3, R0, A), polarization_frame([0, 0, 1]), "hermitian", CUT).matrices([1.3])[0]
    assert np.abs(diagonalize(hh, True)[0].imag).max() < 1e-9


def test_spin_reference_states():
    assert spin_expectation([0, 1, 0, 1]) == -1.0
    assert spin_expectation(np.array([1, 1, 0, 0]) / np.sqrt(2)) == 0.0


def test_chain_bands_are_spin_polarized():
    bands = band_structure(helix_lattice(1, 0.0, 0.2), polarization_frame([0, 0, 1]), 41, CUT, "full")
    assert np.allclose(bands.energies[:, 0], bands.energies[:, 1])
    assert np.allclose(np.sort(bands.spin, axis=1), [[-1, 1]] * 41)


@pytest.fixture(scope="module")
def fig3_bands():
    s = build(resolve({}, "fig3"))
    return band_structure(s.lattice, s.frame, 201, CUT, "hermitian")


def _mirror_pairs(bands):
    nk = bands.k.size
    for i in range(nk):
        j = nk - 1 - i
        yield i, j, match_states(bands.energies[i], bands.spin[i], bands.energies[j], bands.spin[j], -1.0)


def test_velocity_odd_and_nonzero(fig3_bands):
    v = fig3_bands.velocity()
    for i, j, perm in _mirror_pairs(fig3_bands):
        assert np.allclose(v[i], -v[j][perm], atol=1e-6)
    interior = (np.abs(fig3_bands.k) < 0.9 * np.pi / A) & (np.abs(fig3_bands.k) > 0.1 * np.pi / A)
    assert np.all(np.abs(v[interior]).max(axis=0) > 1e-3)


def test_helicity_symmetric(fig3_bands):
    eta = fig3_bands.helicity()
    prod = fig3_bands.spin * fig3_bands.velocity()
    for i, j, perm in _mirror_pairs(fig3_bands):
        defined = (np.abs(prod[i]) > 1e-8) & (np.abs(prod[j][perm]) > 1e-8)
        assert np.array_equal(eta[i][defined], eta[j][perm][defined])


def test_flat_zero_spin_band():
    from chiral_bands import BandSet
    from chiral_bands.dipole import CouplingMode
    k = np.linspace(-1, 1, 11)
    bs = BandSet(k, np.zeros((11, 1), complex), np.ones((11, 2, 1), complex) / np.sqrt(2), np.zeros((11, 1)),
                 CouplingMode.FULL, 2.0)
    assert np.allclose(bs.velocity(), 0)
    assert np.all(bs.helicity() == 0)


# symmetry

def test_no_spin_inversion_on_z_helix():
    s = build(resolve({}, "fig3"))
    for kind in ("W_mirror", "W_rotoreflection"):
        with pytest.raises(NotASymmetry):
            build_operator(kind, s.lattice, s.frame)
    import itertools
    for perm in itertools.permutations(range(3)):
        v = np.eye(3)[list(perm)]
        op = build_operator("custom", s.lattice, s.frame, V=v, spin_action="flip")
        assert symmetry_residual(op, s.lattice, s.frame, 8, CUT, "hermitian") > 1e-2


def test_anti_parity_full_mode_fig3():
    s = build(resolve({}, "fig3"))
    op = build_operator("anti_parity", s.lattice, s.frame)
    assert symmetry_residual(op, s.lattice, s.frame, 16, CUT, "full") < 1e-6


# topology

def test_overlap_reference(rng):
    u = np.linalg.qr(rng.normal(size=(6, 3)) + 1j * rng.normal(size=(6, 3)))[0]
    assert np.allclose(overlap_matrix(u, u), np.eye(3))
    th = rng.uniform(0, 2 * np.pi, 3)
    assert np.allclose(overlap_matrix(u, u * np.exp(1j * th)), np.diag(np.exp(1j * th)))


def test_overlap_first_order_in_dk():
    # SSH spinor (1, e^{i theta(k)})/sqrt(2) has <u|d_k u> = i theta'/2
    v, w = 0.4, 1.0
    u = lambda k: np.array([1, np.exp(1j * np.angle(v + w * np.exp(1j * k)))]) / np.sqrt(2)
    k = 0.3
    h = 1e-6
    dtheta = (np.angle(v + w * np.exp(1j * (k + h))) - np.angle(v + w * np.exp(1j * (k - h)))) / (2 * h)
    errs = []
    for dk in (1e-2, 5e-3):
        m = overlap_matrix(u(k), u(k + dk))[0, 0]
        errs.append(abs(m - (1 + 0.5j * dtheta * dk)))
    assert errs[1] < errs[0] / 3


def test_constant_vectors_give_identity():
    k = np.linspace(-1, 1, 11)
    vecs = np.tile(np.eye(4)[:, :2], (11, 1, 1)).astype(complex)
    assert np.allclose(wilson_loop(Manifold((0, 1), k, vecs, vecs, 1.0)), np.eye(2))


@pytest.fixture(scope="module")
def fig4_grids():
    s = build(resolve({}, "fig4"))
    return [zak_grid(s.lattice, s.frame, n, CUT, "hermitian") for n in (201, 801)]


def test_single_band_modulus_refines_to_one(fig4_grids):
    coarse, fine = (abs(np.linalg.det(wilson_loop(g.manifold((0,))))) for g in fig4_grids)
    assert coarse <= fine <= 1 + 1e-12


def test_zak_additivity(fig4_grids):
    g = fig4_grids[1]
    parts = zak_phase(g.manifold((0,))).phase + zak_phase(g.manifold((1,))).phase
    union = zak_phase(g.manifold((0, 1))).phase
    assert abs(np.angle(np.exp(1j * (parts - union)))) < 1e-9


# cli

def test_fig3_and_fig6_presets_end_to_end(tmp_path):
    for preset in ("fig3", "fig6_qx"):
        cfg = tmp_path / f"{preset}.json"
        cfg.write_text(json.dumps({"preset": preset, "grids": {"band_points": 51, "zak_points": 801}}))
        out = tmp_path / preset
        assert main(["run", str(cfg), "--out", str(out)]) == 0
        sym = json.loads((out / "symmetry.json").read_text())
        rows = (out / "bands_full.csv").read_text().splitlines()[1:]
        assert len(rows) == 6 * 51
        spins = np.array([float(r.split(",")[4]) for r in rows])
        assert np.all(np.abs(spins) <= 1)
        if preset == "fig3":
            assert sym["verdict"] == "truly_chiral"
        else:
            assert sym["verdict"] == "achiral"
            assert np.abs(spins).max() < 1e-8
