"""Two news sources, one privacy toggle.

A user watches videos from a left-leaning source (0) and a right-leaning
source (1), and the next request tends to stick with the current source.
Privacy is ON at t=0 and OFF afterwards.  Asking directly at t=1 would leak
the protected t=0 request through the correlation, so the scheme randomizes
between asking directly and downloading both -- with probabilities carefully
tied to both requests.

Run:  python demos/01_two_source_walkthrough.py
"""

import numpy as np

from onoffpir import (MarkovModel, PrivacyPattern, bounds_over_horizon,
                      exact_rate_n2, policy_n2_table)

alpha = beta = 0.2
model = MarkovModel.two_state(alpha, beta)

print("Sticky two-state request chain (switch probability 0.2):")
print(model.p, end="\n\n")

print("Per-(pivot, request) query probabilities right after an ON step")
print("rows: (pivot, request) = (0,0), (0,1), (1,0), (1,1);"
      " columns: ask {0}, ask {1}, ask both")
table = policy_n2_table(alpha, beta)
print(np.round(table, 4), end="\n\n")

print("Sanity: each query's total probability is the same whichever source")
print("was wanted while privacy was ON -- the server learns nothing:")
p = model.p
for col, name in enumerate(("{0}", "{1}", "{0,1}")):
    given_piv0 = sum(p[0, x] * table[x][col] for x in (0, 1))
    given_piv1 = sum(p[1, x] * table[2 + x][col] for x in (0, 1))
    print(f"  P(Q={name} | pivot=0) = {given_piv0:.4f}   "
          f"P(Q={name} | pivot=1) = {given_piv1:.4f}")
print()

cost = sum(0.5 * p[u, x] * (table[2 * u + x] @ [1, 1, 2])
           for u in (0, 1) for x in (0, 1))
print(f"Expected download at t=1: {cost:.3f} messages, rate {1 / cost:.4f}")
print("Downloading both every step would only achieve rate 0.5.\n")

print("The advantage fades as the gap since the ON step grows:")
for gap in range(0, 8):
    print(f"  gap {gap}: optimal rate {exact_rate_n2(alpha, beta, gap).rate:.6f}")
print()

print("Per-step bounds along the pattern 1000000 (exact enumeration):")
rows = bounds_over_horizon(model, PrivacyPattern.from_string("1000000"), 6)
print("  t  ON  converse  achieved")
for r in rows:
    print(f"  {r.t}  {int(r.f_on)}   {r.outer1:.5f}   {r.inner:.5f}")
print("\nConverse and achieved cost coincide at every step: for two sources")
print("the constructed scheme is exactly optimal.")
