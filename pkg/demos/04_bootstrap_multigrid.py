"""Bootstrap multigrid: enriched coarse spaces, windows and a shifted target.

Every V-cycle enriches the coarse space with the current fine approximations,
solves the enriched pencil and relaxes the selected pairs.  A window of
enrichment vectors around a target keeps a whole cluster resolved, a single
vector stagnates, and a shift selects an interior eigenvalue.
"""

import numpy as np

from surfeig import (BmgConfig, EnrichmentPolicy, Hierarchy, SourceMethod, bfmg,
                     bmg_init, bmg_vcycle, make_fibonacci_sphere, sphere_spectrum)
from surfeig.validation import cluster_error, fit_rate, match_spectrum

h = Hierarchy.build(make_fibonacci_sphere(54), 5)
exact = sphere_spectrum(9)


def rates(values, targets):
    return {t: fit_rate([(d, cluster_error(v, t)) for d, v in zip(h.dofs[1:], values)],
                        skip_coarsest=False).rate for t in targets}


for method in (SourceMethod("direct"), SourceMethod("gauss_seidel", 1)):
    res = bfmg(h, BmgConfig(0.0, EnrichmentPolicy.near_shift(20, np.inf), method))
    r = rates(res.level_values, (2.0, 6.0, 12.0))
    print(f"BFMG {str(method):>16}: " + "  ".join(f"{k:g}: {v:.4f}" for k, v in r.items()))

# one vector versus a window for the 37th eigenvalue (cluster at 42)
for name, policy in (("single", EnrichmentPolicy.fixed([36])),
                     ("window", EnrichmentPolicy.window(36, 12))):
    state = bmg_init(h.truncated(3), BmgConfig(0.0, policy))
    trace = []
    for k in (1, 2):
        bmg_vcycle(state, k)
        trace.append(state.eigs.absolute[36])
    print(f"{name:>6} enrichment, 37th value: " + " -> ".join(f"{v:.2f}" for v in trace))

# interior target 20 from the shift 32 with the averaging shift update
res = bfmg(h, BmgConfig(32.0, EnrichmentPolicy.near_shift(20, np.inf),
                        shift_update="average"))
print(f"shifted BFMG: rate at 20 = {rates(res.level_values, (20.0,))[20.0]:.4f}, "
      f"final shift {res.state.shift:.3f}")
print("finest-level clusters matched:",
      {k: v for k, v in match_spectrum(res.eigs.absolute, exact).counts().items() if v})
