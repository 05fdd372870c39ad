"""Schwarz domain decomposition for the 2D time-harmonic Navier equations.

Fourier convergence-factor analysis (:mod:`.symbols`), P1 finite elements
(:mod:`.fem`), overlapping decompositions with RAS/ORAS (:mod:`.dd`) and
sparse/Krylov solvers (:mod:`.solvers`).
"""
from .dd import (CoordinateBisection, Decomposition, GridPartition, SchwarzPreconditioner,
                 apply_preconditioner, build_pou, grow_overlap, partition_elements, stationary_iterate)
from .errors import (ConfigError, DomainError, ElastoSchwarzError, FactorizationError, PartitionError,
                     RootNotFoundError, SingularPointError, SingularTransmissionError, UsageError)
from .fem import (AssembledSystem, BoundaryCondition, NavierDiscretization, PlaneWave, VectorP1Space,
                  assemble_local_oras, assemble_navier, plane_wave)
from .history import ConvergenceHistory
from .mesh import TriangleMesh, build_rect_mesh, read_mesh, write_mesh
from .solvers import KrylovConfig, factorize, gmres
from .symbols import (ElasticMedium, delta_star, find_kstar, mode_roots, optimal_symbols, rho_classical,
                      rho_general, rho_taylor_closed, scan_rho, taylor_symbols, wave_speeds)

__version__ = "0.1.0"
