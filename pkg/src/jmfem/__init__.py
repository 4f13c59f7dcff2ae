"""Johnson-Mercier mixed finite elements for plane linear elasticity.

The package solves the Hellinger-Reissner mixed formulation with the
composite Johnson-Mercier stress element and discontinuous linear
displacements, postprocesses the displacement to a continuous quadratic
field, and estimates the error with the hypercircle estimator and its
incompressible-robust variant. Adaptive refinement uses newest vertex
bisection.
"""
from types import ModuleType as _ModuleType

from .assembly import IncompatibleLoadError, SaddleSystem, assemble
from .benchmarks import (BENCHMARKS, Benchmark, hole_benchmark, hole_exact, lshape_benchmark,
                         lshape_exact, make_benchmark, manufactured_smooth)
from .estimate import (ErrorReport, HypercircleTerms, energy_norm, estimate, hypercircle_local,
                       hypercircle_terms, incompressible_local, oscillation_f, oscillation_g)
from .mesh import (BoundaryTag, MacroMesh, generate_lshape, generate_plate_with_hole,
                   generate_unit_square, locate_points, read_mesh, refine, refine_uniform,
                   split_mesh, write_mesh)
from .postprocess import enhance_local, oswald_average, postprocess
from .solve import MixedSolution, SingularSystemError, SolverConvergenceError, solve_saddle
from .spaces import JMSpace, build_jm_basis, projected_load, projected_traction
from .study import (StudyConfig, StudyError, emit_table, load_config, mark, run_adaptive,
                    run_study, run_uniform)
from .tensors import (Material, SymTensor2, compliance_apply, elasticity_apply, energy_density,
                      lame_from_engineering)

__version__ = "0.1.0"

__all__ = [name for name, obj in list(globals().items())
           if not name.startswith("_") and not isinstance(obj, _ModuleType)]
