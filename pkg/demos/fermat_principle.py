"""Light rays project onto Fermat geodesics.

A null geodesic of the spacetime is integrated in full, its spatial track
is reparametrized by Fermat arclength and compared with the Fermat geodesic
from the same initial direction.  The arrival time increment equals the
Fermat length.
"""
import numpy as np

from fermat_rays import (
    RiemannMetric,
    ScalarField,
    StationaryData,
    StationarySpacetime,
    VectorField,
    fermat_correspondence_check,
    katok_stationary,
    torus,
)
from fermat_rays.suite import sample_tangent

T = torus(2)
cases = {
    "torus, constant delta": StationaryData(RiemannMetric.euclidean(T), ScalarField.constant(T, 2.0),
                                            VectorField.constant(T, [0.4, -0.3])),
    "Katok sphere": katok_stationary(1 / np.sqrt(2) - 0.3),
}
rng = np.random.default_rng(0)
for name, data in cases.items():
    st = StationarySpacetime(data)
    x, v, c = sample_tangent(data.manifold, rng, 5)
    reps = [fermat_correspondence_check(st, x[i], v[i], 6.0, int(c[i])) for i in range(5)]
    print(f"{name}: sup distance {max(r.sup_distance for r in reps):.1e}, "
          f"time increment error {max(r.increment_error for r in reps):.1e}, "
          f"null drift {max(r.null_drift for r in reps):.1e}")
