"""
Discontinuous target on the square
==================================

The target state jumps between the four quadrants and the control bounds
become active on large regions.  No closed-form solution is known, so the
estimator is the only measure of accuracy.
"""

from pathlib import Path

import numpy as np

from afem_ocp import StopRule, fit_slope, run_adaptive
from afem_ocp.harness import example2
from afem_ocp.harness.reports import RunConfig, write_reports

ex = example2()
run = run_adaptive(ex.prob, ex.initial_mesh(), 0.5, StopRule(max_dofs=5000))

#%%
# Estimator decay and the share of elements marked per step.

for r in run.records:
    print(f"{r.iter:3d} {r.n_dofs:6d} eta {r.eta_total:.3e} marked {r.marked:5d}")
print("eta slope:", round(fit_slope(run.records, y="eta_total", window=6), 3))

#%%
# Where did the mesh concentrate?  The state vanishes on the boundary while
# the target is +-10 in two quadrants, so boundary layers form there and the
# smallest elements gather in the corners (1, 1) and (-1, -1).

m = run.mesh
small = m.diameters < np.quantile(m.diameters, 0.1)
c = m.centroids[small]
print("mean sup-norm distance from the origin, smallest tenth vs all elements:",
      np.abs(c).max(axis=1).mean().round(3), np.abs(m.centroids).max(axis=1).mean().round(3))
print("smallest tenth in the +-10 quadrants:", np.mean(c[:, 0] * c[:, 1] > 0).round(3))

#%%
# The bounds that are active at the final control.

u = run.solution.control_at()
print("share of quadrature points at the lower bound:", np.mean(u <= ex.prob.a).round(3))
print("share at the upper bound:", np.mean(u >= ex.prob.b).round(3))

files = write_reports(run.records, RunConfig("2", 0.5, out=Path("demo_out") / "quadrant"))
print("wrote", files["csv"], files["svg"])
