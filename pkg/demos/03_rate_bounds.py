"""Rate bounds: where the achievable and converse curves meet, and where
they leave a gap.

Two grids are printed (the same data the CLI's `sweep` subcommand emits as
CSV): the optimal two-source rate versus the gap since privacy was ON, and
the symmetric three-source inner/outer rates versus the self-loop
probability, which split below 1/3 and agree above it.

Run:  python demos/03_rate_bounds.py
"""

import numpy as np

from onoffpir import MarkovModel, PrivacyPattern, bounds_over_horizon
from onoffpir.bounds import symmetric_bound_grid, two_source_rate_grid

print("Two sources: optimal rate by switching-probability sum and gap")
grid = two_source_rate_grid([0.2, 0.4, 0.7, 1.0], max_gap=6)
sums = sorted({s for s, _, _ in grid})
print("  gap " + "".join(f"  sum={s:<6}" for s in sums))
for gap in range(7):
    row = [rate for s in sums for (s2, g, rate) in grid if s2 == s and g == gap]
    print(f"   {gap}  " + "".join(f"  {r:.4f}  " for r in row))
print("At sum 1 requests are independent: one ON download, then free.\n")

print("Symmetric three-source chain: achievable vs converse rate")
print("  alpha   achievable  converse")
for alpha, inner, outer in symmetric_bound_grid(3, np.linspace(0, 1, 11)):
    marker = "  <- gap" if abs(inner - outer) > 1e-12 else ""
    print(f"  {alpha:.2f}    {inner:.4f}      {outer:.4f}{marker}")
print("Below alpha = 1/3 the likelihood ordering flips and a gap opens;")
print("whether it can be closed is open for more than two sources.\n")

print("History-averaged bounds under an intermittent pattern 101000:")
model = MarkovModel(3, [[0.1, 0.3, 0.6], [0.5, 0.4, 0.1], [0.2, 0.5, 0.3]],
                    [1 / 3, 1 / 3, 1 / 3])
rows = bounds_over_horizon(model, PrivacyPattern.from_string("101000"), 5,
                           with_lp=True)
print("  t  ON  outer2   outer1   lp_opt   inner")
for r in rows:
    print(f"  {r.t}  {int(r.f_on)}   {r.outer2:.4f}   {r.outer1:.4f}"
          f"   {r.lp_opt:.4f}   {r.inner:.4f}")
print("\nEvery row satisfies outer2 <= outer1 <= lp_opt <= inner.")
