"""Independent brute-force references used by the test-suite."""
import itertools
import math

from mlptopo.complex import betti_bruteforce


def betti_curve_mismatches(filtration, diagram, dims=(0, 1)):
    """Compare diagram-derived Betti numbers with dense ranks at every critical value."""
    bad = []
    for t in sorted({v for _, v in filtration.entries}):
        cx = filtration.complex_at(t)
        for p in dims:
            expected = betti_bruteforce(cx, p)
            got = diagram.betti_at(t, p)
            if expected != got:
                bad.append((t, p, expected, got))
    return bad


def _pair_cost(a, b):
    a_inf, b_inf = math.isinf(a[1]), math.isinf(b[1])
    if a_inf and b_inf:
        return abs(a[0] - b[0])
    if a_inf or b_inf:
        return math.inf
    return max(abs(a[0] - b[0]), abs(a[1] - b[1]))


def _diag_cost(a):
    return math.inf if math.isinf(a[1]) else (a[1] - a[0]) / 2.0


def bottleneck_exhaustive(a, b):
    """Minimum over every partial matching; unmatched points go to the diagonal."""
    best = math.inf
    n, m = len(a), len(b)
    for k in range(min(n, m) + 1):
        for left in itertools.combinations(range(n), k):
            for right in itertools.permutations(range(m), k):
                cost = 0.0
                for i, j in zip(left, right):
                    cost = max(cost, _pair_cost(a[i], b[j]))
                for i in set(range(n)) - set(left):
                    cost = max(cost, _diag_cost(a[i]))
                for j in set(range(m)) - set(right):
                    cost = max(cost, _diag_cost(b[j]))
                best = min(best, cost)
    return best
