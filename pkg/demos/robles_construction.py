"""Zermelo geodesics for a Killing wind from Riemannian geodesics and the wind flow.

Each point of a great circle, traversed at unit speed, is carried along the
rotation flow for the elapsed time; the result is compared with direct
integration of the Finsler spray.
"""
import numpy as np

from fermat_rays import homothety, integrate_geodesic, katok_data, robles_geodesic

z = katok_data(0.3)
hom = homothety(z.g, z.W)
print(f"sigma = {hom.sigma:.1e}, residual = {hom.validity_residual:.1e}")
F, S = z.metric(), z.manifold
x0, v0 = np.array([0.4, -0.2]), np.array([0.3, 1.0])
p = robles_geodesic(z, hom, x0, v0, 8.0)
q = integrate_geodesic(F, x0, v0 / F(x0, v0), 8.0, 0, 1e-12)
xq, _, cq = q.at(p.s)
gap = np.linalg.norm(S.to_ambient(p.x, p.chart) - S.to_ambient(xq, cq), axis=1)
print(f"sup distance to direct integration: {gap.max():.1e}")
print(f"max |F - 1| along the construction: {np.max(np.abs(F(p.x, p.v, p.chart) - 1)):.1e}")
