"""Band structures, spin textures, symmetries and Zak phases of chains of
dipole-coupled V-type emitters."""

__version__ = "0.1.0"

from .bloch import (BlochMatrix, BlochModel, SumCutoff, bloch_hamiltonian, chi_cross, chi_same,
                    convergence_certificate, get_model)
from .dipole import (GAMMA0, K0, LAMBDA0, CouplingMode, coupling, coupling_blocks, green_tensor,
                     realspace_hamiltonian, spin_flip_cylindrical)
from .errors import (ChiralBandsError, DegenerateReference, InvalidInput, InvalidParameter,
                     ManifoldNotIsolated, NotASymmetry, NumericalFailure, RefineGrid,
                     SingularSeparation, TopologyUnconverged, UndefinedPhase)
from .geometry import (LatticeSpec, OrthogonalOp, PolarizationFrame, anti_inversion_azimuth,
                       apply_orthogonal, azimuth_vector, azimuthal_phase, helix_lattice,
                       helix_relative, inversion, polarization_frame, prism_lattice, reflection,
                       reflection_through_q_plane, rotation, rotation_about_q,
                       rotation_in_plane_axis)
from .spectra import (BandSet, band_structure, eig, group_velocity, helicity, spin_expectation,
                      spin_operator, zero_spin_basis)
from .symmetry import (ChiralityVerdict, ClassificationSettings, SymmetryOperator, Verdict,
                       build_operator, classify_chirality, find_symmetries, symmetry_residual,
                       time_reversal)
from .topology import (Manifold, ZakResult, overlap_matrix, wilson_loop, zak_grid, zak_phase,
                       zak_phases)
