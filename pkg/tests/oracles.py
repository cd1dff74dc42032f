"""Independent reference solvers used by the tests.

None of these share code with the package's solvers.

* Grid search for the uplink and downlink min-max problems.  Capacity is
  split into 100 units of 0.01*C and handed out greedily (each unit to the
  flow whose objective it helps most); for min-max of monotone per-flow
  terms this greedy is optimal on the grid, which ``enumerate_grid`` checks
  by brute force on small cases.  Two further passes repeat the search on a
  100x finer grid inside a one-unit box around the previous answer, so the
  oracle's own discretisation error drops far below the 1% comparison band.
* An LP-based max-min certificate: for every flow, maximise its rate while
  every flow that is not richer keeps at least its rate.  A max-min fair
  vector admits no improvement.
"""
from __future__ import annotations

import heapq
import itertools
import math

import numpy as np
from scipy.optimize import linprog


def uplink_objective(w, x):
    return max(wi / xi if xi > 0 else math.inf for wi, xi in zip(w, x))


def downlink_objective(L, p, x, dt):
    return max((li + xi * dt) / pi for li, xi, pi in zip(L, x, p))


def _greedy_uplink(w, base, unit, units):
    """Hand ``units`` of size ``unit`` on top of ``base``; each goes to the flow with the worst w/x."""
    x = list(base)
    heap = [(-(wi / xi) if xi > 0 else -math.inf, i) for i, (wi, xi) in enumerate(zip(w, x))]
    heapq.heapify(heap)
    for _ in range(units):
        _, i = heapq.heappop(heap)
        x[i] += unit
        heapq.heappush(heap, (-(w[i] / x[i]), i))
    return x


def _greedy_downlink(L, p, dt, base, unit, units):
    """Each unit goes to the flow whose drain time after receiving it is smallest."""
    x = list(base)
    heap = [((L[i] + (x[i] + unit) * dt) / p[i], i) for i in range(len(x))]
    heapq.heapify(heap)
    for _ in range(units):
        _, i = heapq.heappop(heap)
        x[i] += unit
        heapq.heappush(heap, ((L[i] + (x[i] + unit) * dt) / p[i], i))
    return x


def _refine(solve, C, levels, units=100):
    unit = C / units
    x = solve([0.0] * solve.n, unit, units)
    for _ in range(levels):
        # keep one coarse unit of slack below each flow, then re-spend it finely
        base = [max(0.0, xi - unit) for xi in x]
        spare = C - math.fsum(base)
        fine = unit / units
        n_units = int(round(spare / fine))
        x = solve(base, fine, n_units)
        unit = fine
    return x


def grid_uplink(w, C, levels=2):
    def solve(base, unit, units):
        return _greedy_uplink(w, base, unit, units)
    solve.n = len(w)
    x = _refine(solve, C, levels)
    return uplink_objective(w, x), x


def grid_downlink(L, p, C, dt, levels=2):
    def solve(base, unit, units):
        return _greedy_downlink(L, p, dt, base, unit, units)
    solve.n = len(L)
    x = _refine(solve, C, levels)
    return downlink_objective(L, p, x, dt), x


def enumerate_grid(objective, n, C, units):
    """Brute-force minimum of ``objective`` over all splits of ``units`` grid units."""
    best = math.inf
    for cut in itertools.combinations(range(units + n - 1), n - 1):
        parts, prev = [], -1
        for c in cut + (units + n - 1,):
            parts.append(c - prev - 1)
            prev = c
        best = min(best, objective([k * C / units for k in parts]))
    return best


def maxmin_violations(x, link_flows, capacities, demands, tol=1e-7):
    """Flows whose rate some feasible vector raises without lowering any poorer flow."""
    flows = sorted(x)
    idx = {f: i for i, f in enumerate(flows)}
    n = len(flows)
    A, b = [], []
    for l, fs in link_flows.items():
        row = np.zeros(n)
        for f in fs:
            row[idx[f]] = 1.0
        A.append(row)
        b.append(capacities[l])
    bad = []
    for f in flows:
        bounds = []
        for g in flows:
            lo = x[g] if (g != f and x[g] <= x[f] + tol) else 0.0
            hi = demands[g] if math.isfinite(demands[g]) else None
            if hi is not None and lo > hi:
                lo = hi
            bounds.append((lo, hi))
        c = np.zeros(n)
        c[idx[f]] = -1.0
        r = linprog(c, A_ub=np.array(A) if A else None, b_ub=np.array(b) if b else None,
                    bounds=bounds, method="highs")
        if r.status == 0 and -r.fun > x[f] + tol * max(1.0, x[f]):
            bad.append((f, x[f], -r.fun))
    return bad


def pairwise_moves(x, link_flows, capacities, demands, tol=1e-7):
    """Single-flow raises and pairwise transfers that would improve a max-min vector.

    Flow f can be raised alone if none of its links is full, or by taking from
    one richer flow g that crosses every full link of f.
    """
    routes = {}
    for l, fs in link_flows.items():
        for f in fs:
            routes.setdefault(f, []).append(l)
    load = {l: sum(x[f] for f in fs) for l, fs in link_flows.items()}
    moves = []
    for f in sorted(x):
        if x[f] >= demands[f] - tol:
            continue
        full = [l for l in routes.get(f, []) if load[l] >= capacities[l] - tol]
        if not full:
            moves.append((f, None))
            continue
        for g in sorted(x):
            if g != f and x[g] > x[f] + tol and all(g in link_flows[l] for l in full):
                moves.append((f, g))
    return moves
