"""Building a query scheme for three correlated sources, step by step.

The construction sorts each source's likelihoods over the possible pivot
requests, accumulates the level sums, picks a per-source budget between the
last level that fits below one and the next, and then routes the remaining
likelihood mass through an auxiliary matrix into multi-source queries.  The
result is a sparse joint law p(query, request | pivot) that is decodable,
pivot-independent, and as cheap as the level increments allow.

Run:  python demos/02_three_source_scheme.py
"""

import numpy as np

from onoffpir import (ConditionalLaw, audit_distribution,
                      build_query_distribution, min_expected_query_size,
                      order_stats, project_to_sets)

law = ConditionalLaw(3, np.array([
    [0.1, 0.3, 0.6],
    [0.5, 0.4, 0.1],
    [0.2, 0.5, 0.3],
]))
print("Conditional law p(request | pivot):")
print(law.table, end="\n\n")

stats = order_stats(law)
print("Pivot orderings per request (ascending likelihood):")
print(stats.orderings)
print(f"level sums    {stats.lambdas}")
print(f"increments    {stats.thetas}")
print(f"threshold     {stats.sigma}")
print(f"budget vector {stats.deltas}", end="\n\n")

dist = build_query_distribution(law, stats)
print("Constructed joint law (query counts, request, pivot) -> probability:")
for z, x, u, p in dist.entry_tuples():
    members = "{" + ",".join(str(i) for i, c in enumerate(z) if c) + "}"
    print(f"  q={members:9s} x={x} pivot={u}  p={p:.3f}")
print()

ez = dist.expected_multiset_cardinality()
ey = project_to_sets(dist).expected_set_cardinality()
floor = min_expected_query_size(law)
print(f"expected query size: {ey:.4f} messages "
      f"(multiset layer {ez:.4f}, converse floor {floor:.4f})")
print(f"achieved rate 1/{ez:.2f} = {1 / ez:.4f} -- optimal here, since the"
      " floor matches.\n")

report = audit_distribution(dist, law, stats)
print("Audit:", report.to_json())
