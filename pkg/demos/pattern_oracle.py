"""Compare a pattern-marked equation with brute-force counts over small maps.

Run with ``python demos/pattern_oracle.py [max_interior_edges]``.
"""
import sys

from singpert.maps import enumerate_near_triangulations, occurrence_distribution, self_intersections, wheel
from singpert.maps.equation import PatternSpec, build_pattern_equation
from singpert.solver import solve_dde

I = int(sys.argv[1]) if len(sys.argv) > 1 else 12
maps = list(enumerate_near_triangulations(I).all_maps())
print(f"{len(maps)} rooted near-triangulations with at most {I} interior edges")

for v in (4, 7):
    p = wheel(v)
    overlaps = sum(bool(self_intersections(p, m)) for m in maps)
    print(f"wheel({v}): {overlaps} maps where two occurrences share an interior edge")

p = wheel(7)
spec = PatternSpec.from_map(p)
mdl = build_pattern_equation(spec)
N = I // 3
s = solve_dde(mdl, N, "symbolic", ucap=mdl.k * N + I + 1)
dist = occurrence_distribution(p, maps)
bad = 0
for (j, n), cell in sorted(dist.items()):
    row = [s.coefficient(n, j, k) for k in range(max(cell) + 1)]
    want = [cell.get(k, 0) for k in range(max(cell) + 1)]
    bad += row != want
    if max(cell) > 0:
        print(f"  u^{j} z^{n}: equation {row}  maps {want}")
print("mismatching cells:", bad)
