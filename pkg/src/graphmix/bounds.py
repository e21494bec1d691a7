"""Closed-form generalization and concentration bounds for graph-mixing data.

Every evaluator takes the weight sum ``W`` of a certified d-stable fractional
partition in place of the (generally intractable) fractional d-chromatic
number; the bounds hold for any valid partition. ``INFINITE`` phi values
propagate and disqualify a d when minimizing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping

from .errors import ParameterError
from .mixing import INFINITE, MixingProfile, phi_value


def _check_common(n, delta, W=1.0, phi=0.0):
    if n < 1:
        raise ParameterError(f"n must be >= 1, got {n}")
    if not 0 < delta < 1:
        raise ParameterError(f"delta must lie in (0, 1), got {delta}")
    if not W >= 1:
        raise ParameterError(f"weight sum must be >= 1, got {W}")
    if not phi >= 0:
        raise ParameterError(f"phi must be non-negative, got {phi}")


@dataclass
class BoundReport:
    kind: str
    inputs: dict[str, Any]
    value: float
    d: int | None = None
    table: list[dict[str, Any]] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        def enc(x):
            return "inf" if isinstance(x, float) and math.isinf(x) else x

        return {
            "kind": self.kind,
            "inputs": {k: enc(v) for k, v in self.inputs.items()},
            "value": enc(self.value),
            "d": self.d,
            "table": [{k: enc(v) for k, v in row.items()} for row in self.table],
        }


def concentration_bound(n: int, delta: float, Delta: float, phi_d: float, W: float) -> float:
    """High-probability upper bound on the mean of a centered graph-mixing field.

    ``phi_d + sqrt(Delta^2 W log(1/delta) / (2n))``.
    """
    _check_common(n, delta, W, phi_d)
    if not Delta > 0:
        raise ParameterError(f"Delta must be positive, got {Delta}")
    if phi_d == INFINITE:
        return INFINITE
    return phi_d + Delta * math.sqrt(W * math.log(1 / delta) / (2 * n))


def best_concentration_bound(
    n: int,
    delta: float,
    Delta: float,
    profile: MixingProfile,
    weight_sums: Mapping[int, float],
) -> BoundReport:
    """Minimize the concentration bound over the candidate d in ``weight_sums``.

    Ties go to the smaller d. When every candidate has infinite phi the
    report's value is INFINITE and ``d`` is None.
    """
    table = []
    best_value, best_d = INFINITE, None
    for d in sorted(weight_sums):
        W = float(weight_sums[d])
        phi = phi_value(profile, d)
        value = concentration_bound(n, delta, Delta, phi, W)
        table.append({"d": d, "W": W, "phi": phi, "value": value})
        if value < best_value:
            best_value, best_d = value, d
    inputs = {"n": n, "delta": delta, "Delta": Delta, "profile": profile.kind}
    return BoundReport("concentration", inputs, best_value, best_d, table)


def tail_probability(n: int, Delta: float, W: float, phi_d: float, t: float) -> float:
    """``P(mean >= t) <= exp(-(2n/W) (t - phi_d)^2 / Delta^2)`` for t > phi_d."""
    if n < 1 or not Delta > 0 or not W >= 1:
        raise ParameterError("need n >= 1, Delta > 0, W >= 1")
    if phi_d == INFINITE or not t > phi_d:
        raise ParameterError(f"tail bound only holds for t > phi_d (t={t}, phi_d={phi_d})")
    return math.exp(-(2 * n / W) * (t - phi_d) ** 2 / (Delta * Delta))


def pacbayes_bound_iid(n: int, delta: float, KL: float) -> float:
    """Excess over the empirical loss: ``sqrt((3 KL + 9)/n) + sqrt(log(1/delta)/(2n))``."""
    _check_common(n, delta)
    if not KL >= 0:
        raise ParameterError(f"KL must be non-negative, got {KL}")
    if KL == INFINITE:
        return INFINITE
    return math.sqrt((3 * KL + 9) / n) + math.sqrt(math.log(1 / delta) / (2 * n))


def pacbayes_bound_graph(n: int, delta: float, KL: float, phi_d: float, W: float) -> float:
    """Excess over the empirical loss for graph-mixing data.

    ``phi_d + (sqrt(3 KL + 9) + sqrt(log(1/delta) / 2)) sqrt(W / n)``; with
    W = 1 and phi_d = 0 this is exactly :func:`pacbayes_bound_iid`.
    """
    _check_common(n, delta, W, phi_d)
    if not KL >= 0:
        raise ParameterError(f"KL must be non-negative, got {KL}")
    if phi_d == INFINITE or KL == INFINITE:
        return INFINITE
    return phi_d + math.sqrt((3 * KL + 9) * W / n) + math.sqrt(W * math.log(1 / delta) / (2 * n))


def tune_d_geometric(C: float, tau: float, n: int) -> int:
    """``ceil(tau * log(C n))`` clamped to [1, n]."""
    if C <= 0 or tau <= 0 or n < 1:
        raise ParameterError("need C > 0, tau > 0, n >= 1")
    x = tau * math.log(C * n)
    nearest = round(x)
    d = nearest if abs(x - nearest) < 1e-9 else math.ceil(x)
    return int(min(max(d, 1), n))
