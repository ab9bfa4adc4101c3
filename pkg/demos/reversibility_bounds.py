"""Reversibility of Fermat metrics and the period bound it implies.

The closed form from the maximal ratio |delta|_0 / sqrt(beta) is compared
with a direct maximization of F(-v) over the indicatrix.
"""
from fermat_rays import RiemannMetric, ScalarField, StationaryData, VectorField, katok_stationary, reversibility, torus
from fermat_rays.finsler import period_bound_from_phi

T = torus(2)
examples = {
    "static torus": StationaryData(RiemannMetric.euclidean(T), ScalarField.constant(T, 1.0), VectorField.zero(T)),
    "|delta| = 3, beta = 16": StationaryData(RiemannMetric.euclidean(T), ScalarField.constant(T, 16.0),
                                             VectorField.constant(T, [3.0, 0.0])),
    "Katok sphere": katok_stationary(0.40710678118654746),
}
for name, data in examples.items():
    rep = reversibility(data)
    print(f"{name:24s} phi={rep.phi:.6f} lambda={rep.lambda_:.8f} numeric={rep.numeric_lambda:.8f} "
          f"bound={float(period_bound_from_phi(rep.phi)):.8f}")
