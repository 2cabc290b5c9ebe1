"""Laplace functional of out-of-cell interference.

All forms share one primitive. For a Poisson process on the loss axis with
derivative ``M'`` of its mean measure (per unit BS density),

    I_eta(l; c) = int_l^inf M'(t) * (1 - (1 + c l / t)^(-eta)) dt

is the contribution of the interferers beyond the serving loss ``l`` when
each of them hits the typical user with a Gamma-like fading of order
``eta``. The exact single-path functional and both multipath bounds are
weighted sums of ``exp(-lambda * I)`` exponents over beam-collision
configurations. The argument ``c`` collects ``s * G`` divided by ``l``
and the configuration dependent gain; inside the coverage integrals ``s``
is proportional to ``l``, which makes ``c`` independent of ``l``.
"""

from __future__ import annotations

import itertools
import math
import warnings
from collections import defaultdict
from dataclasses import dataclass

import numpy as np
from scipy import signal, special

from ..channel import virtual_angle_pmf
from ..netgeom import NetworkParams
from ..numerics import LogGrid, QuadratureSpec, integrate_semi_infinite
from .load import load_pmfs
from .measures import PropagationMeasures

__all__ = [
    "KernelComponent",
    "single_path_components",
    "lower_bound_components",
    "upper_bound_components",
    "KernelTable",
    "kernel_integral",
    "interference_laplace_single_path",
    "interference_laplace_bounds",
    "DEFAULT_COMBINATION_CAP",
]

DEFAULT_COMBINATION_CAP = 200_000
_PRUNE = 1e-13


@dataclass(frozen=True)
class KernelComponent:
    """One term ``weight * I_eta(l; kappa * scale)`` of an exponent.

    ``measure`` is ``"L"``, ``"N"`` or ``"all"``. ``kappa`` is ``s G / l``.
    """

    measure: str
    eta: int
    scale: float
    weight: float


def _merge(items):
    acc = defaultdict(float)
    for measure, eta, scale, w in items:
        acc[(measure, eta, round(scale, 14))] += w
    total = sum(acc.values())
    return [KernelComponent(m, e, s, w) for (m, e, s), w in sorted(acc.items())
            if w > _PRUNE * max(total, 1e-300)]


def _interferer_load(params: NetworkParams, lam: float):
    return load_pmfs(params.lambda_ue / lam, params.u_max).u_pmf


def single_path_components(params: NetworkParams, lam: float | None = None,
                           equiprobable: bool | None = None):
    """Exponent terms of the exact single-path functional.

    An interferer serving ``n`` users whose beams collide ``k`` times with
    the beam of its path towards the typical user radiates with gain
    ``k + (n - k) rho_BS^2``, reduced by ``rho_UE^2`` unless the path also
    arrives in the typical user's receive beam.
    """
    lam = params.lambda_bs if lam is None else lam
    if equiprobable is None:
        equiprobable = params.equiprobable_angles
    if equiprobable:
        qb = np.full(params.n_bs, 1.0 / params.n_bs)
        qu = np.full(params.n_ue, 1.0 / params.n_ue)
    else:
        qb, qu = virtual_angle_pmf(params.n_bs), virtual_angle_pmf(params.n_ue)
    c2 = float(np.sum(qu ** 2))
    rb, ru = params.rho_bs ** 2, params.rho_ue ** 2
    pt = _interferer_load(params, lam)
    items = []
    for n in range(1, params.u_max + 1):
        for k in range(n + 1):
            pk = math.comb(n, k) * float(np.sum(qb ** (k + 1) * (1.0 - qb) ** (n - k)))
            chi = k + (n - k) * rb
            w = pt[n] * pk
            if chi > 0:
                items.append(("all", 1, chi / n, w * c2))
                if ru > 0:
                    items.append(("all", 1, ru * chi / n, w * (1.0 - c2)))
    return _merge(items)


def upper_bound_components(params: NetworkParams, lam: float | None = None):
    """Every active interferer seen through both sidelobes."""
    lam = params.lambda_bs if lam is None else lam
    active = 1.0 - _interferer_load(params, lam)[0]
    g = params.rho_bs ** 2 * params.rho_ue ** 2
    if g == 0:
        return []
    return [KernelComponent("all", 1, g, active)]


def _psi_terms(e, n, nb, nu, rb, ru):
    """Distinct gains ``S`` of the lower bound and their probabilities."""
    pb = [math.comb(e, j) * (1 / nb) ** j * (1 - 1 / nb) ** (e - j) for j in range(e + 1)]
    pu = [math.comb(e, m) * (1 / nu) ** m * (1 - 1 / nu) ** (e - m) for m in range(e + 1)]
    out = defaultdict(float)
    # the gain only depends on the multiset of per-user hit counts
    for combo in itertools.combinations_with_replacement(range(e + 1), n):
        counts = np.bincount(combo, minlength=e + 1)
        mult = math.factorial(n)
        for c in counts:
            mult //= math.factorial(int(c))
        p_combo = mult * math.prod(pb[j] for j in combo)
        cover = [sum(1 for j in combo if j >= path) for path in range(1, e + 1)]
        for m in range(e + 1):
            s = sum((n * rb + cover[path - 1] * (1 - rb)) * (ru + (1 - ru) * (path <= m))
                    for path in range(1, e + 1))
            out[round(s, 14)] += p_combo * pu[m]
    return out


def lower_bound_components(params: NetworkParams, lam: float | None = None,
                           cap: int = DEFAULT_COMBINATION_CAP):
    """Cauchy-Schwarz lower bound with uniform virtual angles.

    LOS and NLOS interferers enter with their own path counts. If the
    number of beam configurations exceeds ``cap`` the all-ones gain bound
    is returned instead, with a warning.
    """
    lam = params.lambda_bs if lam is None else lam
    pt = _interferer_load(params, lam)
    size = max(math.comb(params.u_max + e, e) * (e + 1)
               for e in (params.eta_los, params.eta_nlos))
    if size > cap:
        warnings.warn("lower bound configuration count exceeds the cap; "
                      "using unit beam gains", stacklevel=2)
        return [KernelComponent("all", 1, 1.0, 1.0 - pt[0])]
    rb, ru = params.rho_bs ** 2, params.rho_ue ** 2
    items = []
    for measure, e in (("L", params.eta_los), ("N", params.eta_nlos)):
        for n in range(1, params.u_max + 1):
            for s, w in _psi_terms(e, n, params.n_bs, params.n_ue, rb, ru).items():
                if s > 0:
                    items.append((measure, e, s / (e * n), pt[n] * w))
    return _merge(items)


def kernel_integral(dM, l: float, c: float, eta: int,
                    spec: QuadratureSpec | None = None) -> float:
    """Adaptive-quadrature evaluation of ``I_eta(l; c)`` for one measure."""
    def f(t):
        t = l + t
        return dM(t) * -np.expm1(-eta * np.log1p(c * l / t))
    return integrate_semi_infinite(f, 0.0, spec, scale=max(l, 1e-300) * max(c, 1.0))


def _exponent_direct(meas, comps, l, kappa, spec):
    total = 0.0
    for comp in comps:
        dm = {"L": meas.dM_L, "N": meas.dM_N, "all": meas.dM}[comp.measure]
        total += comp.weight * kernel_integral(dm, l, kappa * comp.scale, comp.eta, spec)
    return total


def interference_laplace_single_path(s: float, l: float, params: NetworkParams,
                                     spec: QuadratureSpec | None = None) -> float:
    """Exact single-path functional ``E[exp(-s I) | serving loss l]``.

    Evaluated with adaptive quadrature; the vectorised coverage engine uses
    :class:`KernelTable` instead.
    """
    if s < 0 or not l > 0:
        raise ValueError("need s >= 0 and l > 0")
    if s == 0:
        return 1.0
    meas = PropagationMeasures(params)
    comps = single_path_components(params)
    kappa = s * params.array_gain / l
    return math.exp(-params.lambda_bs * _exponent_direct(meas, comps, l, kappa, spec))


def interference_laplace_bounds(s: float, l: float, params: NetworkParams,
                                spec: QuadratureSpec | None = None):
    """``(lower, upper)`` bounds of the multipath functional."""
    if s < 0 or not l > 0:
        raise ValueError("need s >= 0 and l > 0")
    if s == 0:
        return 1.0, 1.0
    meas = PropagationMeasures(params)
    kappa = s * params.array_gain / l
    lam = params.lambda_bs
    lo = math.exp(-lam * _exponent_direct(meas, lower_bound_components(params), l, kappa, spec))
    hi = math.exp(-lam * _exponent_direct(meas, upper_bound_components(params), l, kappa, spec))
    return lo, hi


class KernelTable:
    """``I_eta(l; c)`` on a log-loss grid, tabulated over ``ln c``.

    The integral over ``t >= l`` is a correlation along the uniform
    ``ln t`` grid and is computed for all ``l`` at once with FFTs, using
    fourth-order end corrections. Beyond the grid end only the NLOS power
    law survives and the remainder is added in closed form through the
    incomplete beta function. Values for arbitrary ``c`` come from
    four-point Lagrange interpolation in ``ln c``.

    Parameters
    ----------
    grid : LogGrid
        Grid of the loss axis; its last node is the tail start.
    dM : ndarray
        ``M'`` on the grid (per unit density).
    eta : int
        Fading order of the kernel.
    outer : slice
        Grid nodes at which the table is needed as a function of ``l``.
    tail : tuple or None
        ``(delta, coefficient)`` with ``M'(t) = coefficient * t^(delta-1)``
        beyond the grid, or ``None`` if nothing remains there.
    """

    def __init__(self, grid: LogGrid, dM, eta: int, outer: slice, tail=None,
                 step: float = 0.05):
        self.grid = grid
        self.eta = eta
        self.outer = outer
        self.step = step
        self.tail = tail
        n = len(grid)
        w = np.ones(n)
        w[:3] = LogGrid._END
        w[-3:] = LogGrid._END[::-1]
        self._fw = dM * grid.t * w
        self._x_outer = grid.x[outer]
        self._lo = self._hi = None
        self._table = None

    def _kernel(self, logc):
        u = self.grid.h * np.arange(len(self.grid))
        z = np.exp(logc[:, None] - u[None, :])
        k = -np.expm1(-self.eta * np.log1p(z))
        k[:, :3] *= LogGrid._END[None, :]
        return k

    def _build(self, lo, hi):
        nodes = lo + self.step * np.arange(int(math.ceil((hi - lo) / self.step)) + 1)
        rows = []
        n = len(self.grid)
        start = self.outer.start or 0
        stop = self.outer.stop if self.outer.stop is not None else n
        for chunk in np.array_split(nodes, max(1, len(nodes) // 64)):
            k = self._kernel(chunk)
            full = signal.fftconvolve(self._fw[None, :], k[:, ::-1], mode="full", axes=1)
            corr = full[:, n - 1:2 * n - 1]
            part = self.grid.h * corr[:, start:stop]
            if self.tail is not None:
                part = part + self._tail(chunk)
            rows.append(part)
        self._nodes = nodes
        self._table = np.vstack(rows)
        self._lo, self._hi = nodes[0], nodes[-1]

    def _tail(self, logc):
        delta, coef = self.tail
        t_end = self.grid.t[-1]
        a = np.exp(logc[:, None] + self._x_outer[None, :])
        z = a / t_end
        v = z / (1.0 + z)
        acc = np.zeros_like(a)
        for k in range(self.eta):
            acc += special.beta(1.0 - delta, delta + k) * special.betainc(1.0 - delta, delta + k, v)
        return coef * a ** delta * acc

    def ensure(self, logc_min, logc_max):
        pad = 4 * self.step
        if self._table is None or logc_min < self._lo + pad or logc_max > self._hi - pad:
            lo = logc_min - 1.0 if self._lo is None else min(self._lo, logc_min - 1.0)
            hi = logc_max + 1.0 if self._hi is None else max(self._hi, logc_max + 1.0)
            self._build(lo, hi)

    def __call__(self, c):
        """Rows ``I_eta(l; c_i)`` for every outer node ``l``."""
        logc = np.log(np.atleast_1d(np.asarray(c, dtype=float)))
        self.ensure(logc.min(), logc.max())
        pos = (logc - self._lo) / self.step
        i = np.clip(np.floor(pos).astype(int), 1, len(self._nodes) - 3)
        f = pos - i
        w = np.stack([-f * (f - 1) * (f - 2) / 6, (f + 1) * (f - 1) * (f - 2) / 2,
                      -(f + 1) * f * (f - 2) / 2, (f + 1) * f * (f - 1) / 6])
        tab = self._table
        return (w[0][:, None] * tab[i - 1] + w[1][:, None] * tab[i]
                + w[2][:, None] * tab[i + 1] + w[3][:, None] * tab[i + 2])
