"""Light rays of standard stationary spacetimes as geodesics of Fermat, Randers and Zermelo metrics."""
from .errors import (
    ConfigurationError,
    DegeneracyError,
    DomainError,
    EscapeError,
    FermatRaysError,
    InvariantViolation,
    StiffnessError,
)
from .geometry import (
    ChartManifold,
    RiemannMetric,
    ScalarField,
    VectorField,
    christoffel,
    euclidean,
    field_from_expressions,
    flow,
    manifold_from_name,
    rotation_field,
    round_metric,
    sphere,
    torus,
)
from .finsler import (
    ComparabilityEstimate,
    FinslerMetric,
    RandersData,
    ReversibilityReport,
    SampledCurve,
    StationaryData,
    ZermeloData,
    co_randers_eval,
    comparability_constants,
    fermat_from_stationary,
    finsler_energy,
    finsler_length,
    fundamental_tensor,
    legendre_check,
    period_lower_bound,
    randers_to_zermelo,
    reversibility,
    stationary_from_zermelo,
    zermelo_from_stationary,
    zermelo_to_randers,
)
from .geodesics import (
    ClosedGeodesic,
    GeodesicPath,
    HomothetyData,
    SearchResult,
    classify_distinct,
    detect_multiplicity,
    find_closed_geodesics,
    geodesic_spray,
    homothety,
    integrate_geodesic,
    integrate_geodesics,
    katok_data,
    katok_experiment,
    katok_stationary,
    robles_geodesic,
)
from .spacetime import (
    LightRay,
    PeriodicRayReport,
    StationarySpacetime,
    fermat_correspondence_check,
    null_geodesic,
    t_periodic_rays,
    time_component,
)
from .documents import convert_document, load_document

__version__ = "0.1.0"
