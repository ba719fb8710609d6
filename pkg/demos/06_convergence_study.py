"""Exact spectrum, cluster matching, rate fits and SVG figures.

Direct eigensolves on each level are matched against the exact eigenvalues
``l(l+1)`` with multiplicity ``2l+1`` and the errors are fitted to
``C DoF^-r``.
"""

from _common import output_dir
from surfeig import Hierarchy, make_fibonacci_sphere, sphere_spectrum
from surfeig.eigensolver import lowest_eigenpairs
from surfeig.plotting import Figure, Series
from surfeig.validation import cluster_error, fit_rate, match_spectrum

out = output_dir("convergence")
h = Hierarchy.build(make_fibonacci_sphere(54), 5)
exact = sphere_spectrum(5)
values = [lowest_eigenpairs(f, 16, level=k).values for k, f in enumerate(h.forms)]

fig = Figure("eigenvalue error", "DoF", "error", logx=True, logy=True)
for lam in (2.0, 6.0, 12.0):
    errors = [cluster_error(v, lam) for v in values]
    fit = fit_rate(list(zip(h.dofs, errors)))
    print(f"lambda = {lam:g}: errors " + ", ".join(f"{e:.2e}" for e in errors)
          + f"  rate {fit.rate:.4f}")
    fig.add(Series(f"lambda = {lam:g}", h.dofs, errors, line=True))
fig.save(out / "convergence.svg")

for c in match_spectrum(values[-1], exact).clusters:
    print(f"cluster {c.value:g}: {c.count}/{c.multiplicity} matched, "
          f"max relative error {c.max_rel_error:.2e}")
print("figure written to", out / "convergence.svg")
