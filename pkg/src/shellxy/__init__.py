"""Discrete XY spin model on triangulated closed surfaces."""

from .energy import (
    EnergyBreakdown,
    ambient_dirichlet_energy,
    extrinsic_energy,
    renormalized_remainder,
    xy_energy,
    xy_gradient,
)
from .field import (
    DiscreteField,
    FrameField,
    build_frames,
    hedgehog_ansatz,
    interpolant_eval,
    realize,
    restrict_smooth,
)
from .mesh import (
    HypothesisReport,
    Triangulation,
    discrete_ball,
    gen_cubed_sphere,
    gen_grid_mesh,
    gen_icosphere,
    gen_torus_mesh,
    gen_uv_sphere,
    validate_hypotheses,
)
from .minimize import (
    SolveOptions,
    SolveTrace,
    annulus_minimizer,
    core_energy,
    minimize,
    minimize_dirichlet,
)
from .renormalized import RenormalizedEstimate, estimate_renormalized
from .surface import GraphBump, Sphere, Surface, TangentBasis, Torus, make_surface
from .vorticity import (
    DefectSet,
    VorticityReport,
    detect_defects,
    mu_hat,
    region_vorticity_check,
    triangle_winding,
    triangle_windings,
)

__version__ = "0.1.0"
