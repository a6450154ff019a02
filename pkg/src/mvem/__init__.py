"""Mixed virtual elements for anisotropic diffusion on polygonal meshes."""

from .assembly import (
    GlobalSystem,
    SingularSystemError,
    Solution,
    assemble_global,
    condition_number,
    divergence_defect,
    solve_direct,
)
from .bases import RankDeficiencyError
from .config import ConfigError, parse_config
from .estimator import MixedVEM
from .local import (
    DofiDofi,
    DofVariant,
    DRecipe,
    EdgeNormalDRecipe,
    SingularGramError,
    element_context,
    local_operators,
    parse_stabilization,
)
from .mesh import (
    BoundaryLabel,
    MeshError,
    PolygonalMesh,
    build_agglomerated_concave,
    build_cartesian,
    build_sine_distorted,
    compute_geometry,
    validate_mesh,
)
from .problems import ProblemSpec, SingularFieldError, builtin_problem, manufactured, stabilization_catalog
from .study import RunConfig, RunReport, compute_errors, convergence_rate, run_convergence_study

__version__ = "0.1.0"

__all__ = [
    "BoundaryLabel", "ConfigError", "DRecipe", "DofVariant", "DofiDofi", "EdgeNormalDRecipe", "GlobalSystem",
    "MeshError", "MixedVEM", "PolygonalMesh", "ProblemSpec", "RankDeficiencyError", "RunConfig", "RunReport",
    "SingularFieldError", "SingularGramError", "SingularSystemError", "Solution", "assemble_global",
    "build_agglomerated_concave", "build_cartesian", "build_sine_distorted", "builtin_problem", "compute_errors",
    "compute_geometry", "condition_number", "convergence_rate", "divergence_defect", "element_context",
    "local_operators", "manufactured", "parse_config", "parse_stabilization", "run_convergence_study",
    "solve_direct", "stabilization_catalog", "validate_mesh",
]
