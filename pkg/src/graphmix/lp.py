"""Exact rational simplex for the fractional covering LP.

Solves ``min sum(x) s.t. sum_{S ∋ v} x_S >= 1, x >= 0`` through its packing
dual ``max sum(y) s.t. sum_{v in S} y_v <= 1, y >= 0``, whose slack basis is
feasible at y = 0. Bland's rule guarantees termination. The primal optimum is
read off the reduced costs of the slack columns, and both solutions are checked
exactly before returning.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Sequence

from .errors import GraphmixError


class LPError(GraphmixError):
    pass


def solve_covering_lp(
    n: int, sets: Sequence[Sequence[int]]
) -> tuple[Fraction, list[Fraction], list[Fraction]]:
    """Return ``(value, x, y)``: optimal cover weights per set and the dual packing."""
    m = len(sets)
    covered = {v for s in sets for v in s}
    if covered != set(range(n)):
        raise LPError("the sets do not cover every vertex; covering LP is infeasible")
    zero, one = Fraction(0), Fraction(1)
    width = n + m
    rows = []
    for i, s in enumerate(sets):
        row = [zero] * (width + 1)
        for v in s:
            row[v] = one
        row[n + i] = one
        row[width] = one
        rows.append(row)
    obj = [-one] * n + [zero] * m + [zero]
    basis = [n + i for i in range(m)]

    while True:
        enter = next((j for j in range(width) if obj[j] < 0), None)
        if enter is None:
            break
        best, leave = None, None
        for i, row in enumerate(rows):
            a = row[enter]
            if a > 0:
                ratio = row[width] / a
                if best is None or ratio < best or (ratio == best and basis[i] < basis[leave]):
                    best, leave = ratio, i
        if leave is None:
            raise LPError("packing LP unbounded; input is malformed")
        prow = rows[leave]
        piv = prow[enter]
        if piv != 1:
            prow = [a / piv for a in prow]
            rows[leave] = prow
        nz = [j for j, a in enumerate(prow) if a]
        for i, row in enumerate(rows):
            if i != leave:
                f = row[enter]
                if f:
                    for j in nz:
                        row[j] -= f * prow[j]
        f = obj[enter]
        for j in nz:
            obj[j] -= f * prow[j]
        basis[leave] = enter

    value = obj[width]
    x = [obj[n + i] for i in range(m)]
    y = [zero] * n
    for i, b in enumerate(basis):
        if b < n:
            y[b] = rows[i][width]

    # exact optimality certificate
    if any(xi < 0 for xi in x) or any(yi < 0 for yi in y):
        raise LPError("negative component in LP solution")
    cover = [zero] * n
    for xi, s in zip(x, sets):
        for v in s:
            cover[v] += xi
    if any(c < 1 for c in cover):
        raise LPError("primal solution is not a cover")
    if any(sum(y[v] for v in s) > 1 for s in sets):
        raise LPError("dual solution infeasible")
    if sum(x) != value or sum(y) != value:
        raise LPError("duality gap is nonzero")
    return value, x, y
