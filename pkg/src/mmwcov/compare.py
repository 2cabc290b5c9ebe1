"""Scheme comparison through the minimum allowable efficiency.

For coverage level ``p`` let ``R_A^{-1}(p)`` be the largest rate that
scheme A delivers with probability at least ``p`` at unit efficiency. Then

    O_{A,B}(p) = R_B^{-1}(p) / R_A^{-1}(p)

is the smallest efficiency factor at which A still matches B.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .analytic.coverage import CoverageCurve
from .netgeom import NetworkParams

__all__ = [
    "SchemeComparison",
    "invert_coverage",
    "min_allowable_efficiency",
    "power_normalized_params",
    "compare_curves",
    "DEFAULT_PERCENTILES",
    "SM_REDUCED_N_UE",
    "horizontal_gap",
]

DEFAULT_PERCENTILES = (0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95)
SM_REDUCED_N_UE = 7


def _log_scale(curve: CoverageCurve) -> bool:
    unit = curve.meta.get("threshold_unit")
    if unit is not None:
        return unit != "dB"
    return bool(np.all(curve.thresholds >= 0))


def invert_coverage(curve: CoverageCurve, p: float, floor: float | None = None) -> float:
    """Largest threshold whose coverage is at least ``p``.

    Interpolation between knots is linear in the coverage value and
    logarithmic in the threshold (dB thresholds are already logarithmic).

    Parameters
    ----------
    floor : float, optional
        Returned when ``p`` exceeds the largest coverage on the curve. Rate
        curves use 0: a rate that is zero with probability above ``1 - p``
        has a zero ``p``-quantile.

    Raises
    ------
    ValueError
        If ``p`` lies outside the curve's range and no floor applies.
    """
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    th = curve.thresholds
    v = np.minimum.accumulate(curve.values)
    if p > v[0]:
        if floor is not None:
            return float(floor)
        raise ValueError(f"coverage {p} above the curve maximum {v[0]:.6g}")
    if p < v[-1]:
        raise ValueError(f"coverage {p} below the curve minimum {v[-1]:.6g}; extend the grid")
    i = int(np.flatnonzero(v >= p)[-1])
    if i == th.size - 1 or v[i] == p:
        return float(th[i])
    x0, x1 = th[i], th[i + 1]
    frac = (v[i] - p) / (v[i] - v[i + 1])
    if _log_scale(curve) and x0 > 0:
        return float(math.exp(math.log(x0) + frac * (math.log(x1) - math.log(x0))))
    return float(x0 + frac * (x1 - x0))


def min_allowable_efficiency(curve_a: CoverageCurve, curve_b: CoverageCurve, p: float,
                             floor: float | None = None) -> float:
    """``O_{A,B}(p)``; both curves must be computed at unit efficiency."""
    ra = invert_coverage(curve_a, p, floor)
    rb = invert_coverage(curve_b, p, floor)
    if ra == 0:
        return math.inf if rb > 0 else 1.0
    return rb / ra


def power_normalized_params(params: NetworkParams, nu: float | None = None,
                            scheme: str = "SU", n_ue_sm: int = SM_REDUCED_N_UE) -> NetworkParams:
    """Comparand parameters at equal power consumption per unit area.

    SU-BF gets ``nu`` times the BS density and one user per slot. SM keeps
    the density and uses ``n_ue_sm`` UE antennas to pay for its extra UE
    RF chains.
    """
    nu = params.nu if nu is None else nu
    if nu < 1:
        raise ValueError("nu must be at least 1")
    if scheme == "SU":
        return params.with_(lambda_bs=params.lambda_bs * nu, u_max=1)
    if scheme == "SM":
        return params.with_(n_ue=n_ue_sm, u_max=1)
    raise ValueError(f"unknown scheme {scheme!r}")


@dataclass(frozen=True)
class SchemeComparison:
    """Minimum allowable efficiencies of scheme A against scheme B."""

    scheme_a: str
    scheme_b: str
    percentiles: tuple
    o_values: np.ndarray
    rate_inverses_a: np.ndarray
    rate_inverses_b: np.ndarray
    meta: dict = field(default_factory=dict)

    def rows(self):
        for p, o, ra, rb in zip(self.percentiles, self.o_values, self.rate_inverses_a,
                                self.rate_inverses_b):
            yield dict(p=p, o=o, rate_a=ra, rate_b=rb)


def compare_curves(curve_a: CoverageCurve, curve_b: CoverageCurve, names=("A", "B"),
                   percentiles=DEFAULT_PERCENTILES, floor: float | None = 0.0) -> SchemeComparison:
    """Tabulate ``O_{A,B}(p)`` over coverage levels.

    Levels outside either curve's range give ``nan``.
    """
    ra, rb, o = [], [], []
    for p in percentiles:
        try:
            a = invert_coverage(curve_a, p, floor)
            b = invert_coverage(curve_b, p, floor)
        except ValueError:
            a = b = math.nan
        ra.append(a)
        rb.append(b)
        if math.isnan(a):
            o.append(math.nan)
        else:
            o.append(math.inf if a == 0 and b > 0 else (1.0 if a == 0 else b / a))
    return SchemeComparison(names[0], names[1], tuple(percentiles), np.array(o),
                            np.array(ra), np.array(rb))


def horizontal_gap(curve_a: CoverageCurve, curve_b: CoverageCurve, p: float) -> float:
    """Threshold of ``curve_a`` minus that of ``curve_b`` at coverage ``p``.

    For dB curves this is the horizontal shift in dB between the two.
    """
    return invert_coverage(curve_a, p) - invert_coverage(curve_b, p)
