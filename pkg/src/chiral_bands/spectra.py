"""
Diagonalization over k-grids, band tracking, spin textures and helicity.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.optimize import linear_sum_assignment

from .bloch import BlochMatrix, SumCutoff, get_model
from .dipole import CouplingMode
from .errors import InvalidInput, InvalidParameter, NumericalFailure, RefineGrid
from .geometry import LatticeSpec, PolarizationFrame

DEGENERACY_TOL = 1e-9
OVERLAP_FLOOR = 0.5
HELICITY_FLOOR = 1e-10


@dataclass(frozen=True, eq=False)
class EigenPair:
    value: complex
    vector: np.ndarray


def spin_operator(dim: int) -> np.ndarray:
    """Diagonal of S_z = 1 (x) sigma_z for a 2N-dimensional space."""
    return np.tile([1.0, -1.0], dim // 2)


def spin_expectation(v) -> float:
    """<v|S_z|v> for a unit-norm vector in (site, spin) ordering."""
    v = np.asarray(v, dtype=complex).reshape(-1)
    if v.size % 2:
        raise InvalidParameter("vector length must be even")
    norm2 = np.vdot(v, v).real
    if norm2 < 1e-28:
        raise InvalidParameter("zero vector has no spin")
    sz = spin_operator(v.size)
    return float(np.clip(np.sum(sz * np.abs(v) ** 2) / norm2, -1.0, 1.0))


def fix_phase(vecs: np.ndarray) -> np.ndarray:
    """Normalize columns and make each column's largest component real positive."""
    vecs = vecs / np.linalg.norm(vecs, axis=0, keepdims=True)
    idx = np.argmax(np.abs(vecs) - 1e-12 * np.arange(vecs.shape[0])[:, None], axis=0)
    pivots = vecs[idx, np.arange(vecs.shape[1])]
    return vecs * (np.abs(pivots) / pivots)[None, :]


def _sort_order(values: np.ndarray) -> np.ndarray:
    return np.lexsort((values.imag, values.real))


def degenerate_clusters(values: np.ndarray, tol: float = DEGENERACY_TOL) -> List[slice]:
    """Slices of consecutive (sorted) eigenvalues closer than tol * max(1, |e|)."""
    n = values.size
    out, start = [], 0
    while start < n:
        stop = start + 1
        while stop < n and abs(values[stop] - values[stop - 1]) < tol * max(1.0, abs(values[start])):
            stop += 1
        out.append(slice(start, stop))
        start = stop
    return out


def _resolve_degenerate(values, vecs, sz):
    """Rotate each degenerate cluster onto S_z eigenstates (definite-spin basis)."""
    for sl in degenerate_clusters(values):
        if sl.stop - sl.start > 1:
            q, _ = np.linalg.qr(vecs[:, sl])
            proj = q.conj().T @ (sz[:, None] * q)
            _, rot = np.linalg.eigh(proj)
            vecs[:, sl] = q @ rot
    return vecs


def zero_spin_basis(vecs: np.ndarray) -> np.ndarray:
    """Orthonormal basis of span(vecs) whose states all carry <S_z> = tr(S_z)/M.

    The projected S_z is diagonalized and its eigenvectors are mixed with a
    discrete Fourier matrix, which equalizes the diagonal. For a traceless
    projection (the case forced by a spin-reversing symmetry) every state of
    the new basis has zero spin.
    """
    vecs = np.asarray(vecs, dtype=complex)
    if vecs.ndim == 1:
        vecs = vecs[:, None]
    q, _ = np.linalg.qr(vecs)
    sz = spin_operator(q.shape[0])
    _, rot = np.linalg.eigh(q.conj().T @ (sz[:, None] * q))
    m = q.shape[1]
    dft = np.exp(2j * np.pi * np.outer(np.arange(m), np.arange(m)) / m) / np.sqrt(m)
    return q @ rot @ dft


def diagonalize(h: np.ndarray, hermitian: bool):
    """Eigenvalues sorted by (Re, Im), unit right eigenvectors with fixed phase."""
    if not np.all(np.isfinite(h)):
        raise NumericalFailure("non-finite Bloch matrix entries")
    try:
        if hermitian:
            values, vecs = np.linalg.eigh(0.5 * (h + h.conj().T))
            values = values.astype(complex)
        else:
            values, vecs = np.linalg.eig(h)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"eigensolver did not converge: {exc}",
                               {"norm": float(np.linalg.norm(h))}) from exc
    order = _sort_order(values)
    values, vecs = values[order], vecs[:, order]
    vecs = _resolve_degenerate(values, vecs, spin_operator(h.shape[0]))
    vecs = fix_phase(vecs)
    hnorm = max(np.linalg.norm(h, 2), 1e-300)
    resid = np.linalg.norm(h @ vecs - vecs * values[None, :], axis=0).max()
    if resid > 1e-9 * hnorm:
        raise NumericalFailure("eigen-residual above 1e-9 ||h||",
                               {"residual": float(resid), "norm": float(hnorm)})
    return values, vecs


def eig(h) -> List[EigenPair]:
    """All eigenpairs of a Bloch matrix (or plain square array)."""
    if isinstance(h, BlochMatrix):
        mat, herm = h.matrix, h.mode is CouplingMode.HERMITIAN
    else:
        mat = np.asarray(h, dtype=complex)
        herm = bool(np.allclose(mat, mat.conj().T, rtol=0, atol=1e-14 * max(np.abs(mat).max(), 1)))
    values, vecs = diagonalize(mat, herm)
    return [EigenPair(complex(values[i]), vecs[:, i]) for i in range(values.size)]


def k_grid(period: float, grid_size: int) -> np.ndarray:
    """Symmetric grid over [-pi/a, pi/a]; the two endpoints are the same point."""
    if grid_size < 3:
        raise InvalidParameter("grid_size must be at least 3")
    return np.linspace(-np.pi / period, np.pi / period, grid_size)


def _assign(prev: np.ndarray, cur: np.ndarray):
    overlap = np.abs(prev.conj().T @ cur)
    rows, cols = linear_sum_assignment(-overlap)
    perm = np.empty_like(cols)
    perm[rows] = cols
    return perm, overlap[rows, cols][np.argsort(rows)]


@dataclass(eq=False)
class BandSet:
    """Tracked bands on a k-grid.

    ``energies`` (nk, nb) complex, ``vectors`` (nk, 2N, nb), ``spin`` (nk, nb).
    Band n is continuous in k by maximal eigenvector overlap.
    """

    k: np.ndarray
    energies: np.ndarray
    vectors: np.ndarray
    spin: np.ndarray
    mode: CouplingMode
    period: float
    min_overlap: float = 1.0
    meta: dict = field(default_factory=dict)

    @property
    def n_bands(self) -> int:
        return self.energies.shape[1]

    def wrap_permutation(self) -> np.ndarray:
        """perm[n]: band at the last grid point equal to band n at the first."""
        perm, _ = _assign(self.vectors[-1], self.vectors[0])
        inv = np.empty_like(perm)
        inv[perm] = np.arange(perm.size)
        return inv

    def velocity(self) -> np.ndarray:
        return np.column_stack([group_velocity(self, n) for n in range(self.n_bands)])

    def helicity(self) -> np.ndarray:
        return np.column_stack([helicity(self, n) for n in range(self.n_bands)])

    def sorted_view(self):
        """Energies/vectors/spin reordered by Re energy at each k."""
        order = np.argsort(self.energies.real, axis=1, kind="stable")
        rows = np.arange(self.k.size)[:, None]
        return (self.energies[rows, order], self.vectors[rows, :, order].transpose(0, 2, 1),
                self.spin[rows, order])


def track(values: np.ndarray, vecs: np.ndarray, k: np.ndarray, floor: float = OVERLAP_FLOOR):
    """Reorder bands so each column is continuous by maximal overlap."""
    values, vecs = values.copy(), vecs.copy()
    worst = 1.0
    for i in range(1, k.size):
        perm, ov = _assign(vecs[i - 1], vecs[i])
        values[i] = values[i][perm]
        vecs[i] = vecs[i][:, perm]
        low = float(ov.min())
        worst = min(worst, low)
        if low < floor:
            raise RefineGrid(f"band tracking overlap {low:.3f} below {floor} between "
                             f"k={k[i - 1]:.6g} and k={k[i]:.6g}; refine the grid",
                             interval=(float(k[i - 1]), float(k[i])), overlap=low)
    return values, vecs, worst


def diagonalize_grid(hs: np.ndarray, hermitian: bool, threads: int = 1):
    def work(chunk):
        out = [diagonalize(h, hermitian) for h in chunk]
        return np.array([o[0] for o in out]), np.array([o[1] for o in out])

    if threads <= 1 or len(hs) < 2 * threads:
        return work(hs)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(work, np.array_split(hs, threads)))
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def band_structure(lattice: LatticeSpec, frame: PolarizationFrame, grid_size: int = 501,
                   cutoff: Optional[SumCutoff] = None, mode="full", threads: int = 1,
                   track_bands: bool = True) -> BandSet:
    mode = CouplingMode.parse(mode)
    ks = k_grid(lattice.period, grid_size)
    model = get_model(lattice, frame, mode, cutoff)
    hs = model.matrices(ks, threads=threads)
    herm = mode is CouplingMode.HERMITIAN
    values, vecs = diagonalize_grid(hs, herm, threads)
    worst = 1.0
    if track_bands:
        values, vecs, worst = track(values, vecs, ks)
    sz = spin_operator(lattice.dim)
    spin = np.clip(np.einsum("s,ksn->kn", sz, np.abs(vecs) ** 2), -1.0, 1.0)
    return BandSet(ks, values, vecs, spin, mode, lattice.period, worst)


def group_velocity(bands: BandSet, n: int) -> np.ndarray:
    """Central differences of Re energy of band n on the periodic grid."""
    if bands.k.size < 3:
        raise InvalidInput("group velocity needs at least 3 k-points")
    if not 0 <= n < bands.n_bands:
        raise InvalidInput(f"band index {n} out of range")
    e = bands.energies[:, n].real
    dk = bands.k[1] - bands.k[0]
    v = np.empty_like(e)
    v[1:-1] = (e[2:] - e[:-2]) / (2 * dk)
    # the endpoints are the same k; the band may arrive there under another label
    perm = bands.wrap_permutation()
    inv = np.argsort(perm)
    re = bands.energies.real
    v[0] = (e[1] - re[-2, perm[n]]) / (2 * dk)
    v[-1] = (re[1, inv[n]] - e[-2]) / (2 * dk)
    return v


def helicity(bands: BandSet, n: int) -> np.ndarray:
    """sign(<S_z> v); 0 marks points where |<S_z> v| < 1e-10 (undefined)."""
    prod = bands.spin[:, n] * group_velocity(bands, n)
    return np.where(np.abs(prod) < HELICITY_FLOOR, 0, np.sign(prod)).astype(int)


def match_states(e1: np.ndarray, s1: np.ndarray, e2: np.ndarray, s2: np.ndarray,
                 spin_sign: float) -> np.ndarray:
    """Pair states of two spectra by energy, breaking degenerate ties by spin.

    Returns perm with state i of the first spectrum matched to perm[i].
    """
    cost = np.abs(e1[:, None] - e2[None, :]) + 1e-3 * np.abs(s1[:, None] - spin_sign * s2[None, :])
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty_like(cols)
    perm[rows] = cols
    return perm


def reflection_residuals(bands: BandSet, spin_sign: float):
    """Max |e_n(k) - e_n(-k)| and |s_n(k) - spin_sign * s_n(-k)| over the grid.

    spin_sign = -1 tests antisymmetric spin textures, +1 symmetric ones.
    States at k and -k are paired by energy.
    """
    nk = bands.k.size
    if not np.allclose(bands.k, -bands.k[::-1], atol=1e-12 * np.abs(bands.k).max()):
        raise InvalidInput("k-grid is not symmetric about 0")
    de, ds = 0.0, 0.0
    for i in range(nk):
        j = nk - 1 - i
        perm = match_states(bands.energies[i], bands.spin[i], bands.energies[j], bands.spin[j], spin_sign)
        de = max(de, float(np.abs(bands.energies[i] - bands.energies[j][perm]).max()))
        ds = max(ds, float(np.abs(bands.spin[i] - spin_sign * bands.spin[j][perm]).max()))
    return de, ds


def mirror_residuals(a: BandSet, b: BandSet):
    """Compare two band sets pointwise in k: energy mismatch and spin + spin' mismatch."""
    if a.k.shape != b.k.shape:
        raise InvalidInput("band sets use different grids")
    va, vb = a.velocity(), b.velocity()
    de = ds = dv = 0.0
    for i in range(a.k.size):
        perm = match_states(a.energies[i], a.spin[i], b.energies[i], b.spin[i], -1.0)
        de = max(de, float(np.abs(a.energies[i] - b.energies[i][perm]).max()))
        ds = max(ds, float(np.abs(a.spin[i] + b.spin[i][perm]).max()))
        dv = max(dv, float(np.abs(va[i] - vb[i][perm]).max()))
    return de, ds, dv
