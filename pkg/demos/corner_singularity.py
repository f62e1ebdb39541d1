"""
Adaptive versus uniform refinement at a reentrant corner
=========================================================

The three-quarter disk has an opening angle of 3 pi / 2, so the optimal state
behaves like ``r^(2/3)`` near the origin.  Uniform refinement loses the
optimal rate there; bulk marking recovers it.
"""

from pathlib import Path

from afem_ocp import StopRule, fit_slope, run_adaptive
from afem_ocp.harness import example1
from afem_ocp.harness.reports import SvgSeries, write_svg

out = Path("demo_out")
out.mkdir(exist_ok=True)
ex = example1()

#%%
# Both runs share the problem data and a DOF budget.

budget = StopRule(max_dofs=8000)
adaptive = run_adaptive(ex.prob, ex.initial_mesh(), 0.4, budget)
uniform = run_adaptive(ex.prob, ex.initial_mesh(), 0.4, budget, mode="uniform")

for name, run in (("adaptive", adaptive), ("uniform", uniform)):
    window = min(6, len(run.records))
    print(f"{name:9s} {len(run.records):3d} steps, {run.records[-1].n_dofs:6d} dofs, "
          f"slope {fit_slope(run.records, window=window):.3f}")

#%%
# The estimator tracks the error closely on the adaptive sequence.

for r in adaptive.records[::4]:
    print(f"{r.n_dofs:6d}  err {r.err_yp:.3e}  eta {r.eta_total:.3e}  "
          f"ratio {r.err_yp / r.eta_total:.3f}")

#%%
# A log-log picture of both error curves.

series = [SvgSeries(name, [r.n_dofs for r in run.records], [r.err_yp for r in run.records],
                    color)
          for name, run, color in (("adaptive", adaptive, "#1f77b4"),
                                   ("uniform", uniform, "#d62728"))]
print("wrote", write_svg(series, out / "corner_singularity.svg", title="three-quarter disk"))
