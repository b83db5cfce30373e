"""
Symmetry operators on the Bloch space and chirality classification.

A geometric candidate is an orthogonal map R (plus the translation that
sends sublattice 1 onto some sublattice) which keeps both the quantization
axis q and the periodicity axis as lines. Its action on the pseudospin is
u = eps^dag R eps: diagonal when R preserves the circular sense about q,
off-diagonal when it reverses it. If the affine map permutes the basis up
to whole-cell shifts c_nu, the Bloch representation is

    U(k)[(pi(nu), tau), (nu, sigma)] = exp(-i s k a c_nu) u[tau, sigma],

with s = +1 (k -> k) or -1 (k -> -k), and the symmetry condition reads
U(k) h(k) U(k)^dag = h(s k).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from itertools import product
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .bloch import SumCutoff, certificate_ks, get_model
from .dipole import CouplingMode
from .errors import InvalidParameter, NotASymmetry
from .geometry import (LatticeSpec, OrthogonalOp, PolarizationFrame, reflection,
                       reflection_through_q_plane, rotation)
from .spectra import band_structure

MATCH_TOL = 1e-9
UNITARY_TOL = 1e-12
RESIDUAL_TOL = 1e-6
SPIN_FLOOR = 1e-3
NOISE_FLOOR = 1e-6

W_KINDS = ("W_mirror", "W_rotoreflection")
KINDS = W_KINDS + ("parity", "anti_parity", "unitary", "time_reversal", "custom")
# k -> -k operations that move sites between cells; in the periodic gauge they
# relate h(k) and h(-k) but do not pin the Zak phase to 0 or pi
SHIFTED = {"parity": "parity_shifted", "anti_parity": "anti_parity_shifted"}


@dataclass(frozen=True, eq=False)
class SymmetryOperator:
    """Unitary (or antiunitary, for T) operator on the 2N-dimensional Bloch space.

    ``matrix`` is the representation at k = 0. ``cell_shift`` holds the whole
    cells each sublattice is moved by; they make the representation k-dependent.
    """

    name: str
    matrix: np.ndarray
    k_action: str  # "k" or "-k"
    antiunitary: bool
    spin_action: str  # "preserve" or "flip"
    permutation: Optional[np.ndarray] = None
    cell_shift: Optional[np.ndarray] = None
    period: float = 1.0
    orthogonal: Optional[np.ndarray] = None
    translation: Optional[np.ndarray] = None

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise InvalidParameter("operator matrix must be square")
        if np.abs(m.conj().T @ m - np.eye(m.shape[0])).max() > UNITARY_TOL:
            raise InvalidParameter("operator matrix is not unitary")
        if self.k_action not in ("k", "-k"):
            raise InvalidParameter(f"k_action must be 'k' or '-k', got {self.k_action!r}")
        if self.spin_action not in ("preserve", "flip"):
            raise InvalidParameter(f"spin_action must be 'preserve' or 'flip', got {self.spin_action!r}")
        object.__setattr__(self, "matrix", m)

    @property
    def k_sign(self) -> int:
        return 1 if self.k_action == "k" else -1

    @property
    def cell_local(self) -> bool:
        """True when no site leaves its cell, so the representation is k-independent."""
        return self.cell_shift is None or not np.any(self.cell_shift)

    @property
    def is_w_class(self) -> bool:
        return self.k_action == "k" and self.spin_action == "flip" and not self.antiunitary

    def matrix_at(self, k: float) -> np.ndarray:
        if self.cell_shift is None or not np.any(self.cell_shift):
            return self.matrix
        # column (nu, sigma) carries the phase of sublattice nu's cell shift
        phases = np.exp(-1j * self.k_sign * k * self.period * self.cell_shift)
        return self.matrix * np.repeat(phases, 2)[None, :]

    def to_dict(self) -> dict:
        out = {
            "name": self.name,
            "k_action": self.k_action,
            "antiunitary": self.antiunitary,
            "spin_action": self.spin_action,
            "matrix_re": np.round(self.matrix.real, 15).tolist(),
            "matrix_im": np.round(self.matrix.imag, 15).tolist(),
        }
        if self.permutation is not None:
            out["permutation"] = [int(p) + 1 for p in self.permutation]
            out["cell_shift"] = [int(c) for c in self.cell_shift]
        if self.orthogonal is not None:
            out["orthogonal"] = np.round(self.orthogonal, 15).tolist()
            out["translation"] = np.round(self.translation, 15).tolist()
        return out


def _normalize_phase(m: np.ndarray) -> np.ndarray:
    """Fix the global phase: largest entry of the first column real positive."""
    col = m[:, 0]
    idx = int(np.argmax(np.abs(col) - 1e-12 * np.arange(col.size)))
    ph = col[idx] / abs(col[idx])
    out = m / ph
    out[np.abs(out) < 1e-15] = 0.0
    out.real[np.abs(out.real) < 1e-15] = 0.0
    out.imag[np.abs(out.imag) < 1e-15] = 0.0
    return out


def spin_representation(r: np.ndarray, frame: PolarizationFrame) -> np.ndarray:
    """u[tau, sigma] = eps_tau^dag R eps_sigma; unitary iff R maps q to +-q."""
    eps = frame.eps
    return eps.conj().T @ r @ eps


def spin_action_of(r: np.ndarray, frame: PolarizationFrame) -> str:
    proj = float(frame.q @ r @ frame.q)
    if abs(abs(proj) - 1) > MATCH_TOL:
        raise NotASymmetry("orthogonal map does not keep the quantization axis", distance=1 - abs(proj))
    return "preserve" if np.linalg.det(r) * proj > 0 else "flip"


def _family(r: np.ndarray, lattice: LatticeSpec, frame: PolarizationFrame) -> str:
    k_sign = float(lattice.axis @ r @ lattice.axis)
    spin = spin_action_of(r, frame)
    det = np.linalg.det(r)
    if k_sign > 0:
        if spin == "flip":
            return "W_mirror" if det < 0 else "W_rotoreflection"
        return "unitary"
    return "anti_parity" if spin == "flip" else "parity"


@dataclass(frozen=True)
class Match:
    permutation: np.ndarray
    cell_shift: np.ndarray
    translation: np.ndarray
    distance: float


def match_affine(lattice: LatticeSpec, r: np.ndarray, tol: float = MATCH_TOL) -> Tuple[Optional[Match], float]:
    """Find x -> R x + t permuting the basis up to whole cells.

    Every choice of image for sublattice 1 is tried; among valid maps the one
    with the fewest cell shifts wins. Returns (match or None, best distance).
    """
    basis, a, axis = lattice.basis, lattice.period, lattice.axis
    if abs(abs(axis @ r @ axis) - 1) > tol:
        return None, float(abs(abs(axis @ r @ axis) - 1))
    image = basis @ r.T
    best, best_dist = None, np.inf
    n = lattice.n_sublattices
    for target in range(n):
        t = basis[target] - image[0]
        moved = image + t
        d = moved[:, None, :] - basis[None, :, :]
        along = d @ axis / a
        cells = np.round(along)
        perp = d - (d @ axis)[..., None] * axis
        err = np.sqrt(np.sum(perp**2, axis=-1) + ((along - cells) * a) ** 2)
        perm = err.argmin(axis=1)
        dist = float(err[np.arange(n), perm].max())
        if np.unique(perm).size != n:
            dist = max(dist, float(np.sort(err, axis=1)[:, 1].min()))
        if dist <= tol * max(1.0, a):
            shift = cells[np.arange(n), perm].astype(int)
            cand = Match(perm, shift, t, dist)
            if best is None or np.abs(shift).sum() < np.abs(best.cell_shift).sum():
                best = cand
        best_dist = min(best_dist, dist)
    return best, best_dist


def operator_from_match(name: str, r: np.ndarray, match: Match, lattice: LatticeSpec,
                        frame: PolarizationFrame) -> SymmetryOperator:
    n = lattice.n_sublattices
    u = spin_representation(r, frame)
    v = np.zeros((n, n))
    v[match.permutation, np.arange(n)] = 1.0
    m = _normalize_phase(np.kron(v, u))
    if name in SHIFTED and np.any(match.cell_shift):
        name = SHIFTED[name]
    k_sign = float(lattice.axis @ r @ lattice.axis)
    return SymmetryOperator(
        name=name, matrix=m, k_action="k" if k_sign > 0 else "-k", antiunitary=False,
        spin_action=spin_action_of(r, frame), permutation=match.permutation,
        cell_shift=match.cell_shift, period=lattice.period, orthogonal=r,
        translation=match.translation,
    )


def _dedupe(angles, period):
    out = []
    for a in angles:
        a = float(np.mod(a, period))
        if all(min(abs(a - b), period - abs(a - b)) > 1e-9 for b in out):
            out.append(a)
    return sorted(out)


def _plane_azimuths(lattice: LatticeSpec, frame: PolarizationFrame) -> List[float]:
    """Azimuths of in-plane projections of basis difference vectors."""
    out = []
    b = lattice.basis
    for i, j in product(range(b.shape[0]), repeat=2):
        d = b[i] - b[j]
        x, y = d @ frame.d1, d @ frame.d2
        if np.hypot(x, y) > 1e-12:
            out.append(float(np.arctan2(y, x)))
    return out


def candidate_orthogonals(lattice: LatticeSpec, frame: PolarizationFrame) -> List[np.ndarray]:
    """Orthogonal maps keeping q and the periodicity axis as lines.

    When q is not parallel to the axis the set is finite (sign flips in the
    frame spanned by q and the axis). When it is parallel, the O(2) x Z2
    family is sampled at angles built from the basis geometry.
    """
    q, axis = frame.q, lattice.axis
    cands = []
    if abs(abs(q @ axis) - 1) > 1e-9:
        e2 = axis - (axis @ q) * q
        e2 /= np.linalg.norm(e2)
        e = np.column_stack([q, e2, np.cross(q, e2)])
        for signs in product((1.0, -1.0), repeat=3):
            r = e @ np.diag(signs) @ e.T
            if abs(abs(axis @ r @ axis) - 1) < 1e-9 and np.abs(r @ axis - (axis @ r @ axis) * axis).max() < 1e-9:
                cands.append(r)
        return cands
    az = _plane_azimuths(lattice, frame)
    half = [0.0, np.pi / 2] + [(x + y) / 2 for x in az for y in az] + [(x + y) / 2 + np.pi / 2 for x in az for y in az]
    full = [0.0, np.pi / 2, np.pi, 3 * np.pi / 2] + [y - x for x in az for y in az]
    for alpha in _dedupe(full, 2 * np.pi):
        rot = rotation(q, alpha).matrix
        cands.append(rot)
        cands.append(reflection(q).matrix @ rot)
    for alpha in _dedupe(half, np.pi):
        cands.append(reflection_through_q_plane(frame, alpha).matrix)
        in_plane = np.cos(alpha) * frame.d1 + np.sin(alpha) * frame.d2
        cands.append(rotation(in_plane, np.pi).matrix)
    return cands


def find_symmetries(lattice: LatticeSpec, frame: PolarizationFrame,
                    include_identity: bool = False) -> List[SymmetryOperator]:
    """All sampled geometric symmetries, classified by family."""
    ops, seen = [], []
    for r in candidate_orthogonals(lattice, frame):
        if not include_identity and np.allclose(r, np.eye(3), atol=1e-12):
            continue
        match, _ = match_affine(lattice, r)
        if match is None:
            continue
        op = operator_from_match(_family(r, lattice, frame), r, match, lattice, frame)
        key = (op.name, op.matrix.round(9).tobytes(), tuple(op.cell_shift))
        if key not in seen:
            seen.append(key)
            ops.append(op)
    return ops


def time_reversal(lattice: LatticeSpec) -> SymmetryOperator:
    """T = K S_x with S_x = 1 (x) sigma_x."""
    sx = np.kron(np.eye(lattice.n_sublattices), np.array([[0.0, 1.0], [1.0, 0.0]]))
    return SymmetryOperator("time_reversal", sx, "-k", True, "flip", period=lattice.period)


def build_operator(kind: str, lattice: LatticeSpec, frame: PolarizationFrame,
                   V=None, spin_action: str = "flip", k_action: str = "k") -> SymmetryOperator:
    """Build one operator of the requested kind.

    Geometric kinds search the candidate set and return the member of that
    family that permutes the basis (fewest cell shifts first). Parity and
    anti-parity must act inside the unit cell (no cell shifts). ``custom``
    wraps a user-supplied sublattice unitary V as V (x) sigma_x or V (x) 1.
    """
    if kind not in KINDS:
        raise InvalidParameter(f"unknown operator kind {kind!r}; expected one of {KINDS}")
    if kind == "time_reversal":
        return time_reversal(lattice)
    if kind == "custom":
        if V is None:
            raise InvalidParameter("custom operator needs a sublattice matrix V")
        v = np.asarray(V, dtype=complex)
        if v.shape != (lattice.n_sublattices,) * 2:
            raise InvalidParameter("V must be N x N")
        s = np.array([[0, 1], [1, 0]]) if spin_action == "flip" else np.eye(2)
        return SymmetryOperator("custom", np.kron(v, s), k_action, False, spin_action,
                                period=lattice.period)
    best = None
    best_dist = np.inf
    for r in candidate_orthogonals(lattice, frame):
        if _family(r, lattice, frame) != kind:
            continue
        match, dist = match_affine(lattice, r)
        if match is not None and kind in SHIFTED and np.any(match.cell_shift):
            best_dist = min(best_dist, dist)
            continue
        if match is not None:
            op = operator_from_match(kind, r, match, lattice, frame)
            if best is None or np.abs(op.cell_shift).sum() < np.abs(best.cell_shift).sum():
                best = op
        best_dist = min(best_dist, dist)
    if best is None:
        raise NotASymmetry(f"no {kind} candidate maps the basis onto itself "
                           f"(closest permutation distance {best_dist:.3g})", distance=float(best_dist))
    return best


def symmetry_residual(op: SymmetryOperator, lattice: LatticeSpec, frame: PolarizationFrame,
                      k_samples=16, cutoff: Optional[SumCutoff] = None, mode="full") -> float:
    """max_k ||U h(k) U^dag - h(k')||_2 / ||h(k)||_2, or the T analogue."""
    ks = certificate_ks(lattice.period, k_samples) if np.isscalar(k_samples) else np.asarray(k_samples, float)
    model = get_model(lattice, frame, CouplingMode.parse(mode), cutoff)
    hs = model.matrices(ks)
    hs_image = model.matrices(op.k_sign * ks)
    worst = 0.0
    for k, h, h2 in zip(ks, hs, hs_image):
        u = op.matrix_at(k)
        src = h.conj() if op.antiunitary else h
        diff = u @ src @ u.conj().T - h2
        worst = max(worst, float(np.linalg.norm(diff, 2) / max(np.linalg.norm(h, 2), 1e-300)))
    return worst


class Verdict(str, Enum):
    ACHIRAL = "achiral"
    TRULY_CHIRAL = "truly_chiral"
    FALSELY_CHIRAL = "falsely_chiral"
    INDETERMINATE = "indeterminate"


@dataclass
class ClassificationSettings:
    tol: float = RESIDUAL_TOL
    spin_floor: float = SPIN_FLOOR
    noise_floor: float = NOISE_FLOOR
    grid_size: int = 501
    k_samples: int = 16
    cutoff: Optional[SumCutoff] = None
    threads: int = 1


@dataclass
class ChiralityVerdict:
    verdict: Verdict
    evidence: List[Tuple[str, float, str]] = field(default_factory=list)
    max_spin: Dict[str, float] = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict.value,
            "evidence": [{"operator": n, "residual": r, "mode": m} for n, r, m in self.evidence],
            "max_abs_spin": dict(self.max_spin),
            "diagnostics": self.diagnostics,
        }


def classify_chirality(lattice: LatticeSpec, frame: PolarizationFrame,
                       settings: Optional[ClassificationSettings] = None,
                       max_spin: Optional[Dict[str, float]] = None) -> ChiralityVerdict:
    """Decide achiral / truly chiral / falsely chiral.

    Achiral needs a W-class operator with residual below tol in both modes.
    Otherwise the hermitian spin texture decides: nonzero means truly chiral,
    vanishing (while the full texture is nonzero) means falsely chiral.
    Precomputed spin maxima per mode can be passed to skip the band sweeps.
    """
    s = settings or ClassificationSettings()
    evidence = []
    w_found = []
    for op in find_symmetries(lattice, frame):
        if not op.is_w_class:
            continue
        res = {m: symmetry_residual(op, lattice, frame, s.k_samples, s.cutoff, m) for m in ("hermitian", "full")}
        for m, r in res.items():
            evidence.append((op.name, r, m))
        if max(res.values()) < s.tol:
            w_found.append(op.name)
    spins = dict(max_spin or {})
    for m in ("hermitian", "full"):
        if m not in spins:
            bands = band_structure(lattice, frame, s.grid_size, s.cutoff, m, s.threads, track_bands=False)
            spins[m] = float(np.abs(bands.spin).max())
    diag = {"w_symmetries": w_found, "spin_floor": s.spin_floor, "noise_floor": s.noise_floor}
    if w_found:
        return ChiralityVerdict(Verdict.ACHIRAL, evidence, spins, diag)
    herm, full = spins["hermitian"], spins["full"]
    if herm > s.spin_floor:
        return ChiralityVerdict(Verdict.TRULY_CHIRAL, evidence, spins, diag)
    if herm < s.noise_floor and full > s.spin_floor:
        return ChiralityVerdict(Verdict.FALSELY_CHIRAL, evidence, spins, diag)
    diag["reason"] = ("spin textures between noise floor and spin floor"
                      if max(herm, full) >= s.noise_floor else
                      "no spin texture in either mode but no W-class symmetry found")
    return ChiralityVerdict(Verdict.INDETERMINATE, evidence, spins, diag)
