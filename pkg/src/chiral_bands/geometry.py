"""
Quasi-1D lattice geometries, polarization frames and orthogonal maps.

All lengths are in units of the transition wavelength (lambda_0 = 1).
Sublattices are indexed 1..N in the public API and 0..N-1 internally.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import DegenerateReference, InvalidParameter, UndefinedPhase

X_HAT = np.array([1.0, 0.0, 0.0])
Y_HAT = np.array([0.0, 1.0, 0.0])
Z_HAT = np.array([0.0, 0.0, 1.0])

_UNIT_TOL = 1e-12


def as_vec3(v, name="vector") -> np.ndarray:
    arr = np.asarray(v, dtype=float).reshape(-1)
    if arr.shape != (3,) or not np.all(np.isfinite(arr)):
        raise InvalidParameter(f"{name} must be a finite 3-vector, got {v!r}")
    return arr


def unit(v, name="vector") -> np.ndarray:
    arr = as_vec3(v, name)
    norm = np.linalg.norm(arr)
    if norm < 1e-14:
        raise InvalidParameter(f"{name} must be nonzero")
    return arr / norm


def azimuth_vector(angle: float) -> np.ndarray:
    """Unit vector in the x-y plane at the given azimuth from +x."""
    return np.array([np.cos(angle), np.sin(angle), 0.0])


def anti_inversion_azimuth(n_sublattices: int) -> float:
    """Azimuth of the two-fold axis bisecting sublattices 1 and N of a helix."""
    return np.pi * (n_sublattices - 1) / n_sublattices


@dataclass(frozen=True, eq=False)
class LatticeSpec:
    """Geometry of a quasi-1D non-Bravais lattice.

    ``basis`` has shape (N, 3) and holds the positions of the N sublattices
    inside the reference cell. Bravais vectors are ``period * l * axis``.
    """

    period: float
    basis: np.ndarray
    axis: np.ndarray = field(default_factory=lambda: Z_HAT.copy())
    quantization_axis: np.ndarray = field(default_factory=lambda: Z_HAT.copy())
    handedness: Optional[str] = None
    kind: str = "custom"

    def __post_init__(self):
        basis = np.atleast_2d(np.asarray(self.basis, dtype=float))
        if basis.ndim != 2 or basis.shape[1] != 3 or basis.shape[0] < 1:
            raise InvalidParameter("basis must be a non-empty (N, 3) array")
        if not np.all(np.isfinite(basis)):
            raise InvalidParameter("basis must be finite")
        if not (np.isfinite(self.period) and self.period > 0):
            raise InvalidParameter(f"period must be positive, got {self.period}")
        axis = unit(self.axis, "axis")
        q = unit(self.quantization_axis, "quantization_axis")
        along = basis @ axis
        if along.max() - along.min() >= self.period * (1 + 1e-12):
            raise InvalidParameter("basis vectors must lie within one period along the axis")
        basis.setflags(write=False)
        axis.setflags(write=False)
        q.setflags(write=False)
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "axis", axis)
        object.__setattr__(self, "quantization_axis", q)
        object.__setattr__(self, "period", float(self.period))

    @property
    def n_sublattices(self) -> int:
        return self.basis.shape[0]

    @property
    def dim(self) -> int:
        """Size of the Bloch matrix, 2N."""
        return 2 * self.n_sublattices

    def site(self, mu: int, cell: int = 0) -> np.ndarray:
        """Position of sublattice ``mu`` (1-based) in cell ``cell``."""
        _check_index(mu, self.n_sublattices)
        return self.basis[mu - 1] + self.period * cell * self.axis

    def positions(self, cells: Sequence[int]) -> np.ndarray:
        """Site positions for the given cells, ordered (cell, sublattice)."""
        cells = np.asarray(cells, dtype=float)
        pos = cells[:, None, None] * self.period * self.axis + self.basis[None, :, :]
        return pos.reshape(-1, 3)

    def with_quantization_axis(self, q) -> "LatticeSpec":
        return replace(self, quantization_axis=unit(q, "quantization_axis"))

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "period": self.period,
            "basis": self.basis.tolist(),
            "axis": self.axis.tolist(),
            "quantization_axis": self.quantization_axis.tolist(),
            "handedness": self.handedness,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LatticeSpec":
        return cls(
            period=data["period"],
            basis=np.asarray(data["basis"], dtype=float),
            axis=data.get("axis", Z_HAT),
            quantization_axis=data.get("quantization_axis", Z_HAT),
            handedness=data.get("handedness"),
            kind=data.get("kind", "custom"),
        )


def _check_index(mu, n):
    if not (isinstance(mu, (int, np.integer)) and 1 <= mu <= n):
        raise InvalidParameter(f"sublattice index {mu!r} outside 1..{n}")


def _helix_angles(n: int, handedness: str) -> np.ndarray:
    if handedness not in ("left", "right"):
        raise InvalidParameter(f"handedness must be 'left' or 'right', got {handedness!r}")
    phi = 2 * np.pi * np.arange(n) / n
    return phi if handedness == "right" else -phi


def helix_lattice(n_sublattices: int, radius: float, period: float,
                  handedness: str = "right", quantization_axis=Z_HAT) -> LatticeSpec:
    """Circular helix along z with N emitters per turn.

    Sublattice 1 sits on the +x axis; sublattice mu has azimuth
    2 pi (mu - 1)/N (negated for a left-handed helix) and height
    period * (mu - 1)/N.
    """
    if not isinstance(n_sublattices, (int, np.integer)) or n_sublattices < 1:
        raise InvalidParameter(f"sublattice count must be a positive integer, got {n_sublattices!r}")
    if not (np.isfinite(radius) and radius >= 0):
        raise InvalidParameter(f"radius must be non-negative, got {radius}")
    if not (np.isfinite(period) and period > 0):
        raise InvalidParameter(f"period must be positive, got {period}")
    phi = _helix_angles(n_sublattices, handedness)
    heights = period * np.arange(n_sublattices) / n_sublattices
    basis = np.column_stack([radius * np.cos(phi), radius * np.sin(phi), heights])
    return LatticeSpec(period=period, basis=basis, quantization_axis=quantization_axis,
                       handedness=handedness, kind="helix")


def helix_relative(lattice: LatticeSpec, mu: int, nu: int, cell: int) -> np.ndarray:
    """Closed-form separation r_(cell, mu) - r_(0, nu) on a helix lattice.

    Uses the product-to-sum form of the cosine/sine differences; angles are
    measured from sublattice 1 so the sum argument carries a (mu + nu - 2).
    """
    n = lattice.n_sublattices
    _check_index(mu, n)
    _check_index(nu, n)
    if lattice.kind not in ("helix", "prism"):
        raise InvalidParameter("closed-form separations exist only for helix and prism lattices")
    r0 = float(np.hypot(*lattice.basis[0, :2]))
    a = lattice.period
    diff = np.sin((mu - nu) * np.pi / n)
    total = (mu + nu - 2) * np.pi / n
    x = -2 * r0 * diff * np.sin(total)
    y = 2 * r0 * diff * np.cos(total)
    if lattice.handedness == "left":
        y = -y
    if lattice.kind == "prism":
        z = _prism_offset(mu, nu, a) + a * cell
    else:
        z = (mu - nu) * a / n + a * cell
    return np.array([x, y, z])


def _prism_offset(mu: int, nu: int, a: float) -> float:
    if mu == nu or (mu in (2, 3) and nu in (2, 3)):
        return 0.0
    return a / 2 if mu > nu else -a / 2


def prism_lattice(radius: float, period: float, n_sublattices: int = 3,
                  quantization_axis=X_HAT) -> LatticeSpec:
    """Oblique triangular prism inscribed in a cylinder of the given radius.

    Sublattice 1 sits at height 0 on +x; sublattices 2 and 3 sit half a
    period higher at azimuths +-2 pi/3, so the x-z plane is a mirror plane.
    """
    if n_sublattices != 3:
        raise InvalidParameter("the triangular prism has exactly 3 sublattices")
    if not (np.isfinite(radius) and radius > 0):
        raise InvalidParameter(f"radius must be positive, got {radius}")
    if not (np.isfinite(period) and period > 0):
        raise InvalidParameter(f"period must be positive, got {period}")
    phi = 2 * np.pi * np.arange(3) / 3
    heights = np.array([0.0, period / 2, period / 2])
    basis = np.column_stack([radius * np.cos(phi), radius * np.sin(phi), heights])
    return LatticeSpec(period=period, basis=basis, quantization_axis=quantization_axis,
                       kind="prism")


@dataclass(frozen=True, eq=False)
class PolarizationFrame:
    """Right-handed triad (d1, d2, q) with circular polarization vectors."""

    d1: np.ndarray
    d2: np.ndarray
    q: np.ndarray

    @property
    def eps_up(self) -> np.ndarray:
        return (self.d1 + 1j * self.d2) / np.sqrt(2)

    @property
    def eps_down(self) -> np.ndarray:
        return (self.d1 - 1j * self.d2) / np.sqrt(2)

    @property
    def eps(self) -> np.ndarray:
        """Columns are (eps_up, eps_down); shape (3, 2)."""
        return np.column_stack([self.eps_up, self.eps_down])

    def matrix(self) -> np.ndarray:
        """Rows d1, d2, q: maps lab coordinates to frame coordinates."""
        return np.vstack([self.d1, self.d2, self.q])


def polarization_frame(q, reference=None) -> PolarizationFrame:
    """Deterministic orthonormal frame around the quantization axis ``q``.

    With a reference, d1 is its normalized projection onto the polarization
    plane. Without one, d1 = z x q normalized, falling back to +x when q is
    (anti)parallel to z.
    """
    q = as_vec3(q, "quantization axis")
    norm = np.linalg.norm(q)
    if norm < 1e-14:
        raise InvalidParameter("quantization axis must be nonzero")
    q = q / norm
    if reference is not None:
        ref = as_vec3(reference, "reference")
        proj = ref - (ref @ q) * q
        pnorm = np.linalg.norm(proj)
        if pnorm < 1e-9 * max(np.linalg.norm(ref), 1e-300):
            raise DegenerateReference("frame reference is parallel to the quantization axis")
        d1 = proj / pnorm
    else:
        c = np.cross(Z_HAT, q)
        d1 = c / np.linalg.norm(c) if np.linalg.norm(c) > 1e-9 else X_HAT.copy()
        d1 = d1 - (d1 @ q) * q
        d1 /= np.linalg.norm(d1)
    d2 = np.cross(q, d1)
    return PolarizationFrame(d1=d1, d2=d2, q=q)


def azimuthal_phase(r, frame: PolarizationFrame) -> float:
    """Azimuth of ``r`` in the polarization plane, in (-pi, pi]."""
    r = as_vec3(r, "r")
    x, y = r @ frame.d1, r @ frame.d2
    if np.hypot(x, y) < 1e-14:
        raise UndefinedPhase("point lies on the quantization axis")
    phi = np.arctan2(y, x)
    return np.pi if phi <= -np.pi else float(phi)


@dataclass(frozen=True, eq=False)
class OrthogonalOp:
    matrix: np.ndarray
    kind: str = "custom"

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (3, 3):
            raise InvalidParameter("orthogonal operator must be 3x3")
        if np.max(np.abs(m.T @ m - np.eye(3))) > 1e-12:
            raise InvalidParameter("matrix is not orthogonal")
        object.__setattr__(self, "matrix", m)

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.matrix))

    def __call__(self, r) -> np.ndarray:
        return np.asarray(r, dtype=float) @ self.matrix.T

    def __matmul__(self, other: "OrthogonalOp") -> "OrthogonalOp":
        return OrthogonalOp(self.matrix @ other.matrix, "custom")


def rotation(axis, angle: float) -> OrthogonalOp:
    """Proper rotation by ``angle`` about ``axis`` (Rodrigues)."""
    u = unit(axis, "rotation axis")
    k = np.array([[0, -u[2], u[1]], [u[2], 0, -u[0]], [-u[1], u[0], 0]])
    m = np.eye(3) + np.sin(angle) * k + (1 - np.cos(angle)) * (k @ k)
    return OrthogonalOp(_clean(m), "rotation")


def reflection(normal) -> OrthogonalOp:
    """Reflection through the plane through the origin with the given normal."""
    n = unit(normal, "plane normal")
    return OrthogonalOp(_clean(np.eye(3) - 2 * np.outer(n, n)), "reflection")


def rotation_about_q(frame: PolarizationFrame, alpha: float) -> OrthogonalOp:
    return OrthogonalOp(rotation(frame.q, alpha).matrix, "rotation_about_q")


def reflection_through_q_plane(frame: PolarizationFrame, alpha: float) -> OrthogonalOp:
    """Reflection through the plane containing q at angle alpha from d1."""
    local = np.array([[np.cos(2 * alpha), np.sin(2 * alpha), 0.0],
                      [np.sin(2 * alpha), -np.cos(2 * alpha), 0.0],
                      [0.0, 0.0, 1.0]])
    f = frame.matrix()
    return OrthogonalOp(_clean(f.T @ local @ f), "reflection_through_q_plane")


def rotation_in_plane_axis(frame: PolarizationFrame, beta: float) -> OrthogonalOp:
    """Rotation by beta about d1."""
    return OrthogonalOp(rotation(frame.d1, beta).matrix, "rotation_in_plane_axis")


def inversion() -> OrthogonalOp:
    return OrthogonalOp(-np.eye(3), "inversion")


def _clean(m):
    m = np.array(m, dtype=float)
    # re-orthonormalize away the trig round-off
    u, _, vt = np.linalg.svd(m)
    return u @ vt


def apply_orthogonal(op: OrthogonalOp, lattice: LatticeSpec) -> LatticeSpec:
    """Transform basis and periodicity axis; the quantization axis stays fixed."""
    if not isinstance(op, OrthogonalOp):
        op = OrthogonalOp(np.asarray(op))
    return replace(lattice, basis=op(lattice.basis), axis=op(lattice.axis),
                   kind="custom", handedness=None)
