"""Closed geodesics of the Katok sphere and the t-periodic light rays above them.

With an irrational wind parameter only the two equator orientations close
up; their lengths 2 pi / (1 +- a) are compared with the period lower bound
computed from the reversibility of the associated stationary spacetime.
"""
import numpy as np

from fermat_rays import StationarySpacetime, katok_experiment, katok_stationary, period_lower_bound, t_periodic_rays

alpha = 1 / np.sqrt(2) - 0.3
rep = katok_experiment(alpha, n_starts=500, seed=0)
print(f"alpha = {alpha:.6f}: {rep.count} closed geodesics in {rep.runtime_s:.1f}s")
for L, e in zip(rep.lengths, rep.expected_lengths):
    print(f"  length {L:.10f}  expected {e:.10f}")

st = katok_stationary(alpha)
rays, _ = t_periodic_rays(StationarySpacetime(st), n_starts=500, seed=0)
print("t-periodic ray periods:", [round(r.period, 10) for r in rays])
print(f"period lower bound: {period_lower_bound(st):.10f}")

# the reversible limit has a continuum of great circles
print("alpha = 0 continuum suspected:", katok_experiment(0.0, n_starts=64, seed=0).continuum_suspected)
