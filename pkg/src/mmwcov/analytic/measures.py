"""Intensity measures of the LOS and NLOS propagation processes.

Points of the BS process are mapped to their propagation loss
``t = ||y||^alpha / S`` (linear, including the 1 m reference loss). Both
resulting processes are Poisson on the half line with mean measure
``lambda * M_j(t)`` on ``[0, t)``. The measures below are per unit BS
density, so one object serves a whole density sweep.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from ..netgeom import NetworkParams
from ..numerics import QuadratureSpec, integrate_semi_infinite

__all__ = ["PropagationMeasures", "build_measures"]

_LN10 = math.log(10.0)


def _logq(x):
    return special.log_ndtr(-x)


@dataclass(frozen=True)
class _Branch:
    alpha: float
    sigma: float
    delta: float
    a: float
    c: float
    log_dalpha: float


class PropagationMeasures:
    """Callable measures ``M_L``, ``M_N`` and their derivatives.

    Parameters
    ----------
    params : NetworkParams
        Only propagation fields are used; the BS density enters the
        density-dependent quantities as an explicit argument.
    """

    def __init__(self, params: NetworkParams):
        self.params = params
        self.p = params.p_los
        self.D = params.D
        self.m = -0.1 * params.beta_db * _LN10
        self.los = self._branch(params.alpha_los, params.xi_los)
        self.nlos = self._branch(params.alpha_nlos, params.xi_nlos)

    def _branch(self, alpha, xi):
        sigma = 0.1 * xi * _LN10
        return _Branch(alpha, sigma, 2.0 / alpha, 2.0 * sigma / alpha,
                       2.0 * sigma ** 2 / alpha ** 2 + 2.0 * self.m / alpha,
                       alpha * math.log(self.D))

    def upsilon(self, t, branch: _Branch):
        """``(ln(D^alpha / t) - m) / sigma``."""
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore"):
            return (branch.log_dalpha - np.log(t) - self.m) / branch.sigma

    def _power_term(self, t, b: _Branch, ups):
        # t^delta e^c Q(a - Upsilon), computed in the log domain
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore"):
            return np.exp(b.delta * np.log(t) + b.c + _logq(b.a - ups))

    @staticmethod
    def _q(x):
        return 0.5 * special.erfc(x / math.sqrt(2.0))

    def M_L(self, t):
        b = self.los
        ups = self.upsilon(t, b)
        return math.pi * self.p * (self.D ** 2 * self._q(ups) + self._power_term(t, b, ups))

    def M_N(self, t):
        b = self.nlos
        t = np.asarray(t, dtype=float)
        ups = self.upsilon(t, b)
        with np.errstate(divide="ignore"):
            pw = np.exp(b.delta * np.log(t) + b.c)
        return (-math.pi * self.p * self.D ** 2 * self._q(ups)
                + math.pi * pw * (1.0 - self.p * self._q(b.a - ups)))

    def M(self, t):
        return self.M_L(t) + self.M_N(t)

    def dM_L(self, t):
        """Derivative of ``M_L``; the Gaussian density terms cancel exactly."""
        b = self.los
        t = np.asarray(t, dtype=float)
        ups = self.upsilon(t, b)
        with np.errstate(divide="ignore"):
            return math.pi * self.p * b.delta * np.exp(
                (b.delta - 1.0) * np.log(t) + b.c + _logq(b.a - ups))

    def dM_N(self, t):
        b = self.nlos
        t = np.asarray(t, dtype=float)
        ups = self.upsilon(t, b)
        with np.errstate(divide="ignore"):
            pw = np.exp((b.delta - 1.0) * np.log(t) + b.c)
        return math.pi * b.delta * pw * (1.0 - self.p * self._q(b.a - ups))

    def dM(self, t):
        return self.dM_L(t) + self.dM_N(t)

    # density-dependent quantities --------------------------------------
    def los_total(self) -> float:
        """``M_L(inf) = pi p_LOS D^2``."""
        return math.pi * self.p * self.D ** 2

    def B_L(self, lam: float) -> float:
        return -math.expm1(-lam * self.los_total())

    def B_N(self, lam: float) -> float:
        return 1.0

    def f_L(self, t, lam: float):
        """Density of the smallest LOS loss given that one exists."""
        return lam * self.dM_L(t) * np.exp(-lam * self.M_L(t)) / self.B_L(lam)

    def f_N(self, t, lam: float):
        return lam * self.dM_N(t) * np.exp(-lam * self.M_N(t))

    def association_density(self, t, lam: float, los: bool):
        """``B_j f_j(t) exp(-lam M_other(t))``: density of serving loss ``t`` in state j."""
        d = self.dM_L(t) if los else self.dM_N(t)
        return lam * d * np.exp(-lam * self.M(t))

    def A_L(self, lam: float, spec: QuadratureSpec | None = None) -> float:
        """Probability that the serving BS is LOS."""
        return self._assoc(lam, True, spec)

    def A_N(self, lam: float, spec: QuadratureSpec | None = None) -> float:
        return self._assoc(lam, False, spec)

    def _assoc(self, lam, los, spec):
        scale = self.typical_loss(lam)
        return integrate_semi_infinite(lambda t: self.association_density(t, lam, los),
                                       0.0, spec, scale=scale)

    def typical_loss(self, lam: float) -> float:
        """Loss at which ``lam * M(t) = 1``, a natural integration scale."""
        lo, hi = 0.0, 80.0
        for _ in range(100):
            mid = 0.5 * (lo + hi)
            if lam * self.M(math.exp(mid)) < 1.0:
                lo = mid
            else:
                hi = mid
        return math.exp(0.5 * (lo + hi))

    def log_range(self, lam_min: float, lam_max: float | None = None,
                  low: float = 1e-16, high: float = 60.0):
        """Log-loss interval carrying the serving-loss mass.

        Lower end where ``lam_max * M`` falls below ``low``; upper end where
        ``lam_min * M`` exceeds ``high``.
        """
        lam_max = lam_min if lam_max is None else lam_max

        def solve(lam, target):
            lo, hi = -80.0, 120.0
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                if lam * self.M(math.exp(mid)) < target:
                    lo = mid
                else:
                    hi = mid
            return 0.5 * (lo + hi)

        return solve(lam_max, low), solve(lam_min, high)

    def nlos_tail_start(self, n_sigma: float = 9.0) -> float:
        """Log loss beyond which ``M'_L`` and the NLOS correction vanish.

        Past this point ``M'_N(t) = pi delta e^c t^(delta-1)`` to double
        precision.
        """
        vals = []
        for b in (self.los, self.nlos):
            # Q(a - Upsilon) below ~1e-19 needs a - Upsilon > n_sigma
            vals.append(b.log_dalpha - self.m + b.sigma * (b.a + n_sigma))
        return max(vals)


def build_measures(params: NetworkParams) -> PropagationMeasures:
    return PropagationMeasures(params)
