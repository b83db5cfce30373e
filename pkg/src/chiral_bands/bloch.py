"""
Gauge-fixed Bloch Hamiltonians from lattice sums over Bravais vectors.

    h_{mu s, nu s'}(k) = omega_0 delta + PREFACTOR * sum_l exp(-i k a l) G_{ss'}(a l e + n_mu - n_nu)

with the l = 0 term dropped on the diagonal blocks (mu = nu). The basis-vector
phase exp(-i k . n_mu nu) is gauged away so that h(k + 2 pi/a) = h(k).

The 1/r far field makes the sums conditionally convergent. Terms are summed
directly for |l| <= L in pairs (+l, -l) of increasing |l|; the remainder is
added with an Euler-Abel transform of the oscillatory tail, which needs only
a handful of extra terms because exp(i k0 r) factors out exactly. Setting
``tail="none"`` gives the plain truncated sum.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from .dipole import GAMMA0, K0, PREFACTOR, CouplingMode, green_envelope, project
from .errors import InvalidParameter
from .geometry import LatticeSpec, PolarizationFrame

EULER_TERMS = 12
K_BLOCK = 64  # k-points per evaluation block, fixed so results ignore the thread count


@dataclass(frozen=True)
class SumCutoff:
    max_cells: int = 2000
    tolerance: float = 1e-5
    tail: str = "euler"

    def __post_init__(self):
        if not isinstance(self.max_cells, (int, np.integer)) or self.max_cells < 1:
            raise InvalidParameter(f"max_cells must be a positive integer, got {self.max_cells!r}")
        if not self.tolerance > 0:
            raise InvalidParameter(f"tolerance must be positive, got {self.tolerance!r}")
        if self.tail not in ("euler", "none"):
            raise InvalidParameter(f"tail must be 'euler' or 'none', got {self.tail!r}")

    def doubled(self) -> "SumCutoff":
        return SumCutoff(2 * self.max_cells, self.tolerance, self.tail)


@dataclass(frozen=True, eq=False)
class BlochMatrix:
    k: float
    matrix: np.ndarray
    mode: CouplingMode
    cutoff: SumCutoff

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def _blocks_to_matrix(blocks: np.ndarray) -> np.ndarray:
    """(..., N, N, 2, 2) -> (..., 2N, 2N) with (mu, sigma) ordering."""
    n = blocks.shape[-3]
    lead = blocks.shape[:-4]
    return np.moveaxis(blocks, -2, -3).reshape(*lead, 2 * n, 2 * n)


class BlochModel:
    """Precomputed real-space couplings for one (lattice, frame, mode, cutoff).

    Building the model evaluates the Green's tensor once for every Bravais
    vector; evaluating h(k) afterwards is a phase-weighted reduction.
    """

    def __init__(self, lattice: LatticeSpec, frame: PolarizationFrame, mode="full",
                 cutoff: Optional[SumCutoff] = None, k0: float = K0, omega0: float = 0.0):
        self.lattice = lattice
        self.frame = frame
        self.mode = CouplingMode.parse(mode)
        self.cutoff = cutoff or SumCutoff()
        self.k0 = float(k0)
        self.omega0 = float(omega0)
        self.period = lattice.period
        self.n = lattice.n_sublattices
        self.dim = 2 * self.n

        a, axis, L = self.period, lattice.axis, self.cutoff.max_cells
        nvec = lattice.basis[:, None, :] - lattice.basis[None, :, :]
        self._nvec = nvec
        same = np.eye(self.n, dtype=bool)

        # cross-sublattice l = 0 term
        b0 = np.zeros((self.n, self.n, 2, 2), dtype=complex)
        if self.n > 1:
            b0[~same] = self._blocks(nvec[~same])
        self._b0 = _blocks_to_matrix(b0)

        m = np.arange(1, L + 1)
        self._direct = {}
        for side in (1, -1):
            sep = side * a * m[:, None, None, None] * axis + nvec[None]
            self._direct[side] = _blocks_to_matrix(self._blocks(sep))

        self._tail = {}
        if self.cutoff.tail == "euler":
            m_tail = np.arange(L + 1, L + 2 + EULER_TERMS)
            comps = [(1.0, 1.0)] if self.mode is CouplingMode.FULL else [(1.0, 0.5), (-1.0, 0.5)]
            for side in (1, -1):
                for s, weight in comps:
                    g = self._smooth_tail(side, s, m_tail)
                    diffs = [g[0]]
                    cur = g
                    for _ in range(EULER_TERMS):
                        cur = np.diff(cur, axis=0)
                        diffs.append(cur[0])
                    diffs = np.array(diffs)
                    norms = np.sqrt(np.sum(np.abs(diffs) ** 2, axis=(1, 2)))
                    self._tail[(side, s)] = (weight, diffs, norms)

    def _blocks(self, sep: np.ndarray) -> np.ndarray:
        env, dist = green_envelope(sep, self.k0)
        g = np.exp(1j * self.k0 * dist)[..., None, None] * env
        if self.mode is CouplingMode.HERMITIAN:
            g = g.real
        return project(g, self.frame)

    def _smooth_tail(self, side: int, s: float, m: np.ndarray) -> np.ndarray:
        """exp(-i s k0 a m) * G_s(side a m e + n), a slowly varying sequence in m."""
        a, axis = self.period, self.lattice.axis
        nvec = self._nvec
        sep = side * a * m[:, None, None, None] * axis + nvec[None]
        env, dist = green_envelope(sep, s * self.k0)
        along = side * (nvec @ axis)
        excess = (2 * a * m[:, None, None] * along + np.sum(nvec**2, axis=-1)) / (dist + a * m[:, None, None])
        g = np.exp(1j * s * self.k0 * excess)[..., None, None] * env
        return _blocks_to_matrix(project(g, self.frame))

    def _tail_sum(self, ks: np.ndarray) -> np.ndarray:
        a, L = self.period, self.cutoff.max_cells
        m0 = L + 1
        out = np.zeros((ks.size, self.dim, self.dim), dtype=complex)
        for (side, s), (weight, diffs, norms) in self._tail.items():
            theta = (s * self.k0 - side * ks) * a
            z = np.exp(1j * theta)
            one_minus = 1 - z
            ok = np.abs(one_minus) > 1e-9
            w = np.where(ok, z / np.where(ok, one_minus, 1), 0)
            powers = np.abs(w)[:, None] ** np.arange(EULER_TERMS + 1)[None, :]
            terms = powers * norms[None, :]
            pstar = np.argmin(terms, axis=1)
            nterms = np.where(pstar == EULER_TERMS, EULER_TERMS + 1, np.maximum(pstar, 1))
            coef = w[:, None] ** np.arange(EULER_TERMS + 1)[None, :]
            coef = np.where(np.arange(EULER_TERMS + 1)[None, :] < nterms[:, None], coef, 0)
            lead = np.where(ok, np.exp(1j * theta * m0) / np.where(ok, one_minus, 1), 0)
            out += weight * np.einsum("k,kp,pij->kij", lead, coef, diffs)
        return out

    def _evaluate_chunk(self, ks: np.ndarray, include_tail: bool = True) -> np.ndarray:
        a = self.period
        m = np.arange(1, self.cutoff.max_cells + 1)
        ph = np.exp(-1j * np.outer(ks, a * m))
        flat = (ph @ self._direct[1].reshape(m.size, -1) + ph.conj() @ self._direct[-1].reshape(m.size, -1))
        acc = flat.reshape(ks.size, self.dim, self.dim) + self._b0
        if include_tail and self._tail:
            acc += self._tail_sum(ks)
        h = PREFACTOR * acc
        if self.mode is CouplingMode.HERMITIAN:
            # the tail transform amplifies rounding near the light line
            h = 0.5 * (h + h.conj().transpose(0, 2, 1))
        diag = self.omega0 - (0.5j * GAMMA0 if self.mode is CouplingMode.FULL else 0.0)
        h[:, np.arange(self.dim), np.arange(self.dim)] += diag
        return h

    def matrices(self, ks: Sequence[float], threads: int = 1) -> np.ndarray:
        """Bloch matrices for an array of k, shape (nk, 2N, 2N).

        The grid is cut into blocks of K_BLOCK points whatever ``threads`` is,
        so the values are bit-identical for every thread count.
        """
        ks = np.atleast_1d(np.asarray(ks, dtype=float))
        blocks = [ks[i:i + K_BLOCK] for i in range(0, ks.size, K_BLOCK)]
        if threads <= 1 or len(blocks) < 2:
            parts = [self._evaluate_chunk(b) for b in blocks]
        else:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                parts = list(pool.map(self._evaluate_chunk, blocks))
        return np.concatenate(parts, axis=0)

    def __call__(self, k: float) -> BlochMatrix:
        return BlochMatrix(float(k), self.matrices([k])[0], self.mode, self.cutoff)


def _frame_key(frame: PolarizationFrame):
    return (frame.d1.tobytes(), frame.d2.tobytes(), frame.q.tobytes())


def _lattice_key(lattice: LatticeSpec):
    return (lattice.period, lattice.basis.tobytes(), lattice.basis.shape, lattice.axis.tobytes())


@lru_cache(maxsize=32)
def _cached_model(lkey, fkey, mode, cutoff, k0, omega0, _lattice_ref, _frame_ref):
    return BlochModel(_lattice_ref.obj, _frame_ref.obj, mode, cutoff, k0, omega0)


class _Ref:
    """Carries an object through lru_cache without making it part of the key."""

    def __init__(self, obj):
        self.obj = obj

    def __hash__(self):
        return 0

    def __eq__(self, other):
        return isinstance(other, _Ref)


def get_model(lattice: LatticeSpec, frame: PolarizationFrame, mode="full",
              cutoff: Optional[SumCutoff] = None, k0: float = K0, omega0: float = 0.0) -> BlochModel:
    cutoff = cutoff or SumCutoff()
    return _cached_model(_lattice_key(lattice), _frame_key(frame), CouplingMode.parse(mode),
                         cutoff, float(k0), float(omega0), _Ref(lattice), _Ref(frame))


def bloch_hamiltonian(lattice: LatticeSpec, frame: PolarizationFrame, k: float,
                      cutoff: Optional[SumCutoff] = None, mode="full") -> BlochMatrix:
    return get_model(lattice, frame, mode, cutoff)(k)


def _entry(lattice, frame, k, mu, nu, sigma, sigma_p, cutoff, mode):
    from .dipole import _spin_index

    n = lattice.n_sublattices
    for idx in (mu, nu):
        if not (isinstance(idx, (int, np.integer)) and 1 <= idx <= n):
            raise InvalidParameter(f"sublattice index {idx!r} outside 1..{n}")
    s, t = _spin_index(sigma), _spin_index(sigma_p)
    model = get_model(lattice, frame, mode, cutoff)
    h = model.matrices([k])[0]
    i, j = 2 * (mu - 1) + s, 2 * (nu - 1) + t
    value = h[i, j]
    if i == j:
        value -= model.omega0 - (0.5j * GAMMA0 if model.mode is CouplingMode.FULL else 0.0)
    return complex(value)


def chi_same(lattice: LatticeSpec, frame: PolarizationFrame, k: float, mu: int, sigma, sigma_p,
             cutoff: Optional[SumCutoff] = None, mode="full") -> complex:
    """Same-sublattice lattice sum (l != 0), including the -3/2 prefactor."""
    return _entry(lattice, frame, k, mu, mu, sigma, sigma_p, cutoff, mode)


def chi_cross(lattice: LatticeSpec, frame: PolarizationFrame, k: float, mu: int, nu: int,
              sigma, sigma_p, cutoff: Optional[SumCutoff] = None, mode="full",
              gauged: bool = True) -> complex:
    """Cross-sublattice lattice sum. ``gauged=False`` restores exp(-i k . n_mu nu)."""
    if mu == nu:
        raise InvalidParameter("chi_cross requires mu != nu")
    value = _entry(lattice, frame, k, mu, nu, sigma, sigma_p, cutoff, mode)
    if not gauged:
        n_mn = lattice.basis[mu - 1] - lattice.basis[nu - 1]
        value *= np.exp(-1j * k * (n_mn @ lattice.axis))
    return value


def certificate_ks(period: float, n_samples: int = 8) -> np.ndarray:
    """Cell-centred sample points of the Brillouin zone."""
    return -np.pi / period + (np.arange(n_samples) + 0.5) * 2 * np.pi / (period * n_samples)


def convergence_certificate(lattice: LatticeSpec, frame: PolarizationFrame, mode="full",
                            cutoff: Optional[SumCutoff] = None, n_samples: int = 8) -> dict:
    """Compare h(k) at cutoff L and 2L on sampled k.

    Relative change is taken entrywise against max(|h_ij|, 1e-12 * max|h|).
    """
    cutoff = cutoff or SumCutoff()
    ks = certificate_ks(lattice.period, n_samples)
    h1 = get_model(lattice, frame, mode, cutoff).matrices(ks)
    h2 = get_model(lattice, frame, mode, cutoff.doubled()).matrices(ks)
    scale = np.maximum(np.abs(h2), 1e-12 * np.max(np.abs(h2)))
    rel = np.abs(h2 - h1) / scale
    per_k = rel.reshape(ks.size, -1).max(axis=1)
    worst = float(per_k.max())
    return {
        "mode": CouplingMode.parse(mode).value,
        "max_cells": cutoff.max_cells,
        "tail": cutoff.tail,
        "tolerance": cutoff.tolerance,
        "k_samples": ks.tolist(),
        "max_relative_change": per_k.tolist(),
        "worst": worst,
        "certified": bool(worst < cutoff.tolerance),
    }
