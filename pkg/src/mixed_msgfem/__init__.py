"""Mixed multiscale spectral GFEM for 2D Darcy flow on RT0/P0 fine meshes."""
from .mesh import CellRegion, FineMesh, build_cartesian_mesh, region_boundary_split
from .fem import CoefficientField, assemble_augmented, assemble_div, assemble_load, assemble_mass
from .saddle import (EigenProblem, IncompatibleDataError, NumericalError, SaddleProblem,
                     SingularSystemError, solve_generalized_eig, solve_saddle)
from .decomposition import Decomposition, build_decomposition, pou_gradient_bound
from .local_basis import build_all_local_bases, build_local_basis
from .coarse import (FineOperators, assemble_coarse_spaces, compute_errors, estimate_infsup,
                     fine_solve, solve_gfem)
from .fields import (RasterField, example1_exact, example1_source, generate_highcontrast, load_raster,
                     save_raster, wells_source)
from .experiment import Experiment, RunConfig, ablate_enrichment, run, sweep

__version__ = "0.1.0"
