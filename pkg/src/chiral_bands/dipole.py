"""
Free-space dyadic Green's tensor and polarization-projected couplings.

Natural units throughout: lambda_0 = 1 (so k0 = 2 pi), Gamma_0 = 1 and
omega_0 = 0. The projected coupling ``eps_s^dag . G . eps_s'`` is the bare
quantity; the -3/2 lambda_0 Gamma_0 prefactor is applied only when a
Hamiltonian is assembled.
"""

from __future__ import annotations

from enum import Enum
from typing import Sequence

import numpy as np

from .errors import InvalidParameter, SingularSeparation
from .geometry import PolarizationFrame

K0 = 2 * np.pi
LAMBDA0 = 1.0
GAMMA0 = 1.0
PREFACTOR = -1.5 * LAMBDA0 * GAMMA0

UP, DOWN = 0, 1
_SEP_TOL = 1e-12


class CouplingMode(str, Enum):
    HERMITIAN = "hermitian"
    FULL = "full"

    @classmethod
    def parse(cls, value) -> "CouplingMode":
        if isinstance(value, cls):
            return value
        aliases = {"hermitian_only": cls.HERMITIAN, "full_nonhermitian": cls.FULL}
        if value in aliases:
            return aliases[value]
        try:
            return cls(value)
        except ValueError:
            raise InvalidParameter(f"unknown coupling mode {value!r}") from None


def _spin_index(s) -> int:
    if s in (UP, "up", "↑", "+"):
        return UP
    if s in (DOWN, "down", "↓", "-"):
        return DOWN
    raise InvalidParameter(f"spin must be 'up' or 'down', got {s!r}")


def green_envelope(r, k0: float = K0):
    """Green's tensor with the e^{i k0 |r|} factor stripped off.

    Returns ``(envelope, dist)`` with envelope of shape (..., 3, 3), so that
    G(r) = exp(1j * k0 * dist) * envelope. Keeping the phase separate lets
    the lattice sums factor out the oscillation exactly.
    """
    r = np.asarray(r, dtype=float)
    dist = np.linalg.norm(r, axis=-1)
    if np.any(dist < _SEP_TOL):
        raise SingularSeparation("Green's tensor evaluated at zero separation")
    kr = k0 * dist
    rhat = r / dist[..., None]
    pre = 1.0 / (4 * np.pi * k0**2 * dist**3)
    a = (kr**2 + 1j * kr - 1) * pre
    b = (kr**2 + 3j * kr - 3) * pre
    outer = rhat[..., :, None] * rhat[..., None, :]
    env = a[..., None, None] * np.eye(3) - b[..., None, None] * outer
    return env, dist


def green_tensor(r, k0: float = K0) -> np.ndarray:
    """Free-space dyadic Green's tensor G(r, omega_0); vectorized over r."""
    env, dist = green_envelope(r, k0)
    return np.exp(1j * k0 * dist)[..., None, None] * env


def project(tensor, frame: PolarizationFrame) -> np.ndarray:
    """2x2 spin blocks eps_s^dag . T . eps_s' for tensors of shape (..., 3, 3)."""
    eps = frame.eps
    return np.einsum("is,...ij,jt->...st", eps.conj(), tensor, eps)


def coupling(r, frame: PolarizationFrame, sigma, sigma_p, k0: float = K0) -> complex:
    """Bare projection eps_sigma^dag . G(r) . eps_sigma'."""
    s, t = _spin_index(sigma), _spin_index(sigma_p)
    return complex(project(green_tensor(r, k0), frame)[s, t])


def coupling_blocks(r, frame: PolarizationFrame, mode, k0: float = K0) -> np.ndarray:
    """Projected 2x2 blocks for each separation, Re G in hermitian mode."""
    mode = CouplingMode.parse(mode)
    g = green_tensor(r, k0)
    if mode is CouplingMode.HERMITIAN:
        g = g.real
    return project(g, frame)


def spin_flip_cylindrical(rho_i: float, rho_j: float, phi_i: float, phi_j: float,
                          r_ij: float, k0: float = K0, reverse: bool = False) -> complex:
    """Closed-form up->down amplitude in cylindrical coordinates about q.

    Includes the -3/2 lambda_0 Gamma_0 factor, i.e. this is the Hamiltonian
    matrix element. ``reverse=True`` gives the down->up amplitude by
    negating both azimuths.
    """
    if not (r_ij > 0):
        raise InvalidParameter(f"separation must be positive, got {r_ij}")
    if reverse:
        phi_i, phi_j = -phi_i, -phi_j
    kr = k0 * r_ij
    pre = 3 * LAMBDA0 * GAMMA0 / (16 * np.pi * k0**2 * r_ij**5)
    geom = np.exp(-2j * (phi_i + phi_j)) * (np.exp(1j * phi_j) * rho_i - np.exp(1j * phi_i) * rho_j) ** 2
    radial = np.exp(1j * kr) * (-3 + kr**2 + 3j * kr)
    return complex(pre * geom * radial)


def realspace_hamiltonian(positions: Sequence, frame: PolarizationFrame, mode,
                          k0: float = K0, omega0: float = 0.0) -> np.ndarray:
    """Dense 2N x 2N single-excitation Hamiltonian, index (site, spin), spin fastest.

    Hermitian mode uses the coherent couplings built from Re G; full mode
    adds the dissipative part, giving omega0 - i Gamma_0/2 on the diagonal.
    """
    mode = CouplingMode.parse(mode)
    pos = np.atleast_2d(np.asarray(positions, dtype=float))
    n = pos.shape[0]
    h = np.zeros((n, 2, n, 2), dtype=complex)
    if n > 1:
        i, j = np.where(~np.eye(n, dtype=bool))
        sep = pos[i] - pos[j]
        if np.any(np.linalg.norm(sep, axis=-1) < _SEP_TOL):
            raise SingularSeparation("coincident emitter positions")
        h[i, :, j, :] = PREFACTOR * coupling_blocks(sep, frame, mode, k0)
    diag = omega0 - (0.5j * GAMMA0 if mode is CouplingMode.FULL else 0.0)
    h = h.reshape(2 * n, 2 * n)
    h[np.diag_indices(2 * n)] += diag
    return h
