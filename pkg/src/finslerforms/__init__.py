"""Numerical Cartan-connection calculus and harmonic horizontal forms on
the sphere bundle of a Finsler manifold."""

from .connection import (
    ConnectionAtPoint,
    LocalTower,
    TensorField,
    cartan_coefficients,
    delta_derivative,
    h_covariant_derivative,
    nabla_0,
    nonlinear_connection,
    spray,
    v_covariant_derivative,
)
from .curvature import (
    CurvatureAtPoint,
    curvature_at_point,
    flag_curvature_tensor,
    hh_curvature,
    hv_curvature,
    ricci_identity_residual,
    ricci_trace,
    vv_curvature,
)
from .forms import (
    AssociatedForm,
    HorizontalForm,
    associate_one_form,
    bochner_scalar,
    energy_identity_residuals,
    horizontal_codifferential,
    horizontal_differential,
    horizontal_laplacian,
    is_h_harmonic,
    laplacian_expansion,
    pointwise_inner,
    weitzenbock_residual,
)
from .jets import Jet, JetRequest, fd_partial, partial
from .metric import ChartSpec, FinslerStructure, SpherePoint, TensorValue
from .quadrature import (
    QuadratureGrid,
    VolumeDensity,
    adjointness_defect,
    bochner_integral,
    divergence_integral_check,
    global_inner_product,
    integrate_scalar,
    volume_density,
)

__version__ = "0.1.0"
