"""
Wilson loops and Zak phases of isolated band manifolds.

Manifolds are groups of bands, ordered by Re energy, separated from the rest
of the spectrum by a gap larger than ``gap_floor`` at every k. The periodic
gauge is imposed by reusing the eigenvectors of the first grid point at the
last one (h is periodic after the basis gauge fix).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .bloch import SumCutoff, get_model
from .dipole import CouplingMode
from .errors import InvalidInput, ManifoldNotIsolated
from .geometry import LatticeSpec, PolarizationFrame
from .spectra import diagonalize_grid, k_grid

QUANT_TOL = 1e-2
GAP_FLOOR = 1e-3


@dataclass(eq=False)
class Manifold:
    bands: tuple
    k: np.ndarray
    vectors: np.ndarray  # (nk, 2N, M), periodic gauge: vectors[0] == vectors[-1]
    left: Optional[np.ndarray] = None  # biorthogonal partners, same shape
    min_gap: float = np.inf


@dataclass
class ZakResult:
    phase: float
    quantization: str
    grid_size: int
    convergence_delta: float
    converged: bool
    bands: tuple = ()
    convention: str = "right"
    min_gap: float = float("nan")
    modulus: float = float("nan")

    def to_dict(self) -> dict:
        return {
            "bands": [int(b) + 1 for b in self.bands],
            "phase": self.phase,
            "quantization": self.quantization,
            "grid_size": self.grid_size,
            "convergence_delta": self.convergence_delta,
            "converged": self.converged,
            "convention": self.convention,
            "min_gap": self.min_gap,
            "wilson_det_modulus": self.modulus,
        }


def overlap_matrix(u_a: np.ndarray, u_b: np.ndarray) -> np.ndarray:
    """M_mn = <u_m(k_a)|u_n(k_b)> for column-stacked vector sets."""
    u_a, u_b = np.asarray(u_a), np.asarray(u_b)
    if u_a.ndim == 1:
        u_a = u_a[:, None]
    if u_b.ndim == 1:
        u_b = u_b[:, None]
    if u_a.shape != u_b.shape:
        raise InvalidInput(f"overlap of mismatched sets {u_a.shape} vs {u_b.shape}")
    return u_a.conj().T @ u_b


def wilson_loop(manifold: Manifold, biorthogonal: bool = False) -> np.ndarray:
    """Ordered product of overlap matrices around the closed loop."""
    if manifold.min_gap <= 0:
        raise ManifoldNotIsolated("manifold touches the rest of the spectrum")
    vecs = manifold.vectors
    bra = manifold.left if biorthogonal else vecs
    if bra is None:
        raise InvalidInput("biorthogonal loop requested but no left vectors stored")
    if not np.allclose(vecs[0], vecs[-1]):
        raise InvalidInput("vectors are not in the periodic gauge")
    if not biorthogonal and vecs.shape[2] > 1:
        # right vectors of a non-Hermitian manifold need not be orthogonal;
        # the loop is taken over an orthonormal frame of the same subspace
        vecs = np.linalg.qr(vecs)[0]
        bra = vecs
    w = np.eye(vecs.shape[2], dtype=complex)
    for i in range(vecs.shape[0] - 1):
        w = w @ overlap_matrix(bra[i], vecs[i + 1])
    return w


def classify_phase(phase: float, quant_tol: float = QUANT_TOL) -> str:
    if abs(phase) < quant_tol:
        return "zero"
    if abs(abs(phase) - np.pi) < quant_tol:
        return "pi"
    return "unquantized"


def _wrap(x: float) -> float:
    """Map to (-pi, pi]."""
    y = (x + np.pi) % (2 * np.pi) - np.pi
    return np.pi if y <= -np.pi else float(y)


def _phase_of(w: np.ndarray) -> float:
    return _wrap(-np.angle(np.linalg.det(w)))


def subsample(manifold: Manifold, step: int = 2) -> Manifold:
    k = manifold.k[::step]
    if (manifold.k.size - 1) % step:
        raise InvalidInput("grid size incompatible with subsampling")
    left = manifold.left[::step] if manifold.left is not None else None
    return Manifold(manifold.bands, k, manifold.vectors[::step], left, manifold.min_gap)


def zak_phase(manifold: Manifold, quant_tol: float = QUANT_TOL, biorthogonal: bool = False) -> ZakResult:
    """-Im ln det W on the full grid, checked against the half grid."""
    w = wilson_loop(manifold, biorthogonal)
    phase = _phase_of(w)
    coarse = _phase_of(wilson_loop(subsample(manifold), biorthogonal))
    delta = abs(_wrap(phase - coarse))
    return ZakResult(
        phase=phase,
        quantization=classify_phase(phase, quant_tol),
        grid_size=int(manifold.k.size),
        convergence_delta=float(delta),
        converged=bool(delta <= quant_tol),
        bands=tuple(manifold.bands),
        convention="biorthogonal" if biorthogonal else "right",
        min_gap=float(manifold.min_gap),
        modulus=float(abs(np.linalg.det(w))),
    )


@dataclass(eq=False)
class ZakGrid:
    """Eigen-data on the closed Zak grid, sorted by Re energy at each k."""

    k: np.ndarray
    energies: np.ndarray
    vectors: np.ndarray
    left: np.ndarray
    mode: CouplingMode
    model: Optional[object] = None
    _refined: Optional[np.ndarray] = field(default=None, repr=False)

    def grid_gaps(self) -> np.ndarray:
        """Minimum over grid points of Re(e_{n+1} - e_n), n = 0..2N-2."""
        re = self.energies.real
        return (re[:, 1:] - re[:, :-1]).min(axis=0)

    def gaps(self) -> np.ndarray:
        """Grid gaps with each minimum refined by zooming in between grid points.

        Near the light line bands can approach much closer than any fixed grid
        resolves, so isolation is decided on the refined values.
        """
        if self.model is None:
            return self.grid_gaps()
        if self._refined is None:
            self._refined = np.array([self._refine_gap(n) for n in range(self.energies.shape[1] - 1)])
        return self._refined

    def _refine_gap(self, n: int, zooms: int = 6, points: int = 41) -> float:
        re = self.energies.real
        d = re[:, n + 1] - re[:, n]
        best = float(d.min())
        dk = self.k[1] - self.k[0]
        # a few lowest local minima, since the grid minimum may not be the true one
        interior = np.r_[True, d[1:] <= d[:-1]] & np.r_[d[:-1] <= d[1:], True]
        cands = np.flatnonzero(interior)
        cands = cands[np.argsort(d[cands])][:4]
        hermitian = self.mode is CouplingMode.HERMITIAN
        for i in cands:
            lo, hi = self.k[i] - dk, self.k[i] + dk
            for _ in range(zooms):
                ks = np.linspace(lo, hi, points)
                hs = self.model.matrices(ks)
                ev = np.linalg.eigvalsh(hs) if hermitian else np.linalg.eigvals(hs)
                ev = np.sort(np.real(ev), axis=1)
                g = ev[:, n + 1] - ev[:, n]
                j = int(g.argmin())
                best = min(best, float(g[j]))
                step = (hi - lo) / (points - 1)
                lo, hi = ks[j] - step, ks[j] + step
        return best

    def manifold(self, bands: Sequence[int]) -> Manifold:
        bands = tuple(sorted(int(b) for b in bands))
        nb = self.energies.shape[1]
        if not bands or bands != tuple(range(bands[0], bands[-1] + 1)) or bands[-1] >= nb or bands[0] < 0:
            raise InvalidInput(f"manifold must be a contiguous band range within 0..{nb - 1}")
        gaps = self.gaps()
        gap = np.inf
        if bands[0] > 0:
            gap = min(gap, float(gaps[bands[0] - 1]))
        if bands[-1] < nb - 1:
            gap = min(gap, float(gaps[bands[-1]]))
        sl = slice(bands[0], bands[-1] + 1)
        return Manifold(bands, self.k, self.vectors[:, :, sl], self.left[:, :, sl], gap)

    def isolated_manifolds(self, gap_floor: float = GAP_FLOOR) -> List[Manifold]:
        """Split the spectrum at every gap above gap_floor (the full set is excluded)."""
        cuts = [n + 1 for n, g in enumerate(self.gaps()) if g > gap_floor]
        if not cuts:
            return []
        edges = [0] + cuts + [self.energies.shape[1]]
        return [self.manifold(range(lo, hi)) for lo, hi in zip(edges[:-1], edges[1:])]


def zak_grid(lattice: LatticeSpec, frame: PolarizationFrame, grid_size: int = 2001,
             cutoff: Optional[SumCutoff] = None, mode="full", threads: int = 1) -> ZakGrid:
    if grid_size < 5 or grid_size % 2 == 0:
        raise InvalidInput("Zak grid size must be odd and at least 5 so it can be halved")
    mode = CouplingMode.parse(mode)
    ks = k_grid(lattice.period, grid_size)
    model = get_model(lattice, frame, mode, cutoff)
    hs = model.matrices(ks, threads=threads)
    values, vecs = diagonalize_grid(hs, mode is CouplingMode.HERMITIAN, threads)
    order = np.argsort(values.real, axis=1, kind="stable")
    rows = np.arange(ks.size)[:, None]
    values = values[rows, order]
    vecs = np.take_along_axis(vecs, order[:, None, :], axis=2)
    vecs[-1] = vecs[0]
    values[-1] = values[0]
    left = np.linalg.inv(vecs).conj().transpose(0, 2, 1)
    return ZakGrid(ks, values, vecs, left, mode, model)


def zak_phases(lattice: LatticeSpec, frame: PolarizationFrame, grid_size: int = 2001,
               cutoff: Optional[SumCutoff] = None, mode="full", gap_floor: float = GAP_FLOOR,
               quant_tol: float = QUANT_TOL, biorthogonal: bool = False,
               manifolds: Optional[Sequence[Sequence[int]]] = None, threads: int = 1) -> List[ZakResult]:
    """Zak phases of every isolated manifold (or of the given 0-based band ranges)."""
    grid = zak_grid(lattice, frame, grid_size, cutoff, mode, threads)
    if manifolds is None:
        mans = grid.isolated_manifolds(gap_floor)
    else:
        mans = [grid.manifold(m) for m in manifolds]
    return [zak_phase(m, quant_tol, biorthogonal) for m in mans]
