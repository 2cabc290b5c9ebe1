"""SNR, SINR and rate coverage of the typical user.

The serving loss ``l`` of state ``j`` has density
``lambda M'_j(l) exp(-lambda M(l))``. Given ``l``, the served beam survives
zero forcing with probability ``zeta(eta_j, U)`` and then carries the
largest of ``eta_j`` unit exponential path gains, split over ``eta_j`` paths
and ``U`` users. The SNR tail is therefore an alternating binomial sum of
exponentials in ``l``; with interference each term picks up the Laplace
functional of the out-of-cell interference at ``s = eta_j tau n U l / G``.

Integrals over ``l`` run on a uniform grid in ``ln l``. The grid and the
interference tables are per unit BS density, so a single engine serves a
whole density sweep.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from ..netgeom import NetworkParams
from ..numerics import LogGrid, QuadratureSpec, integrate_semi_infinite
from .laplace import (KernelTable, lower_bound_components, single_path_components,
                      upper_bound_components)
from .load import load_pmfs, n_terms
from .measures import PropagationMeasures
from .zf import zf_success_prob

__all__ = [
    "CoverageCurve",
    "CoverageEngine",
    "engine_for",
    "snr_coverage",
    "snr_coverage_avg",
    "sinr_coverage",
    "rate_coverage",
    "sinr_curve",
    "rate_curve",
    "LAPLACE_MODES",
    "TRUNCATION_TOL",
]

LAPLACE_MODES = ("none", "single", "lower", "upper")
TRUNCATION_TOL = 1e-6
_C_FLOOR = math.exp(-35.0)


@dataclass(frozen=True)
class CoverageCurve:
    """Coverage values on a threshold grid, with provenance.

    ``thresholds`` are in dB for SINR curves and in bit/s for rate curves.
    ``ci_low`` and ``ci_high`` are set for simulated curves only.
    """

    thresholds: np.ndarray
    values: np.ndarray
    meta: dict = field(default_factory=dict)
    ci_low: np.ndarray | None = None
    ci_high: np.ndarray | None = None

    def __post_init__(self):
        th = np.asarray(self.thresholds, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if th.shape != v.shape or th.ndim != 1:
            raise ValueError("thresholds and values must be 1-d of equal length")
        if np.any(np.diff(th) < 0):
            raise ValueError("thresholds must be sorted ascending")
        if np.any((v < -1e-12) | (v > 1 + 1e-12)):
            raise ValueError("coverage values must lie in [0, 1]")
        object.__setattr__(self, "thresholds", th)
        object.__setattr__(self, "values", np.clip(v, 0.0, 1.0))

    def is_monotone(self, tol: float = 1e-9) -> bool:
        return bool(np.all(np.diff(self.values) <= tol))


class CoverageEngine:
    """Vectorised evaluation of the coverage integrals.

    Parameters
    ----------
    params : NetworkParams
        Network configuration; ``params.lambda_bs`` is the default density.
    lambdas : sequence of float, optional
        Densities the grid must support. Defaults to ``params.lambda_bs``.
    step : float
        Grid spacing in ``ln l``.
    zeta_method : {"exact", "prop1"}
        Evaluation of the ZF success probability.
    """

    def __init__(self, params: NetworkParams, lambdas=None, step: float = 0.05,
                 zeta_method: str = "exact"):
        self.params = params
        self.meas = PropagationMeasures(params)
        if self.meas.nlos.delta >= 1.0:
            raise ValueError("the NLOS path-loss exponent must exceed 2")
        lams = np.atleast_1d(params.lambda_bs if lambdas is None else lambdas).astype(float)
        self.lam_range = (float(lams.min()), float(lams.max()))
        lo, hi = self.meas.log_range(self.lam_range[0], self.lam_range[1], low=1e-13, high=45.0)
        end = max(hi + 1.0, self.meas.nlos_tail_start())
        self.grid = LogGrid(lo, end, step)
        n_outer = min(len(self.grid), int(math.ceil((hi - lo) / step)) + 1)
        self.outer = slice(0, n_outer)
        t = self.grid.t
        self._dm = {"L": self.meas.dM_L(t), "N": self.meas.dM_N(t)}
        self._dm["all"] = self._dm["L"] + self._dm["N"]
        to = t[self.outer]
        self.l = to
        self.M = self.meas.M(to)
        self.zeta_method = zeta_method
        self._tables = {}
        self._zeta = {}
        nl = self.meas.nlos
        self._tail = (nl.delta, math.pi * nl.delta * math.exp(nl.c))

    # building blocks ---------------------------------------------------
    def check_density(self, lam):
        lo, hi = self.lam_range
        if not (lo * (1 - 1e-9) <= lam <= hi * (1 + 1e-9)):
            raise ValueError(f"density {lam} outside the engine range {self.lam_range}")

    def zeta(self, eta: int, U: int) -> float:
        key = (eta, U)
        if key not in self._zeta:
            self._zeta[key] = zf_success_prob(eta, U, self.params, method=self.zeta_method)
        return self._zeta[key]

    def table(self, measure: str, eta: int) -> KernelTable:
        key = (measure, eta)
        if key not in self._tables:
            tail = None if measure == "L" else self._tail
            self._tables[key] = KernelTable(self.grid, self._dm[measure], eta, self.outer, tail)
        return self._tables[key]

    def components(self, mode: str, lam: float):
        if mode == "single":
            return single_path_components(self.params, lam)
        if mode == "lower":
            return lower_bound_components(self.params, lam)
        if mode == "upper":
            return upper_bound_components(self.params, lam)
        raise ValueError(f"unknown Laplace mode {mode!r}")

    def exponent(self, kappa, comps):
        """``sum_k w_k I(l; kappa * scale_k)`` per unit density.

        Returns an array of shape ``(len(kappa), n_outer)``.
        """
        kappa = np.atleast_1d(np.asarray(kappa, dtype=float))
        out = np.zeros((kappa.size, self.l.size))
        for comp in comps:
            c = kappa * comp.scale
            small = c < _C_FLOOR
            tab = self.table(comp.measure, comp.eta)
            vals = np.zeros_like(out)
            big = ~small & (c > 0)
            if big.any():
                vals[big] = tab(c[big])
            if (small & (c > 0)).any():
                # the kernel is linear in c far below the table
                ref = tab(np.array([_C_FLOOR]))[0]
                vals[small & (c > 0)] = (c[small & (c > 0)] / _C_FLOOR)[:, None] * ref[None, :]
            out += comp.weight * vals
        return out

    def _integrate(self, values):
        # integrand vanishes at both ends of the outer range
        return self.grid.h * np.sum(values * self.l, axis=-1)

    # coverage ------------------------------------------------------------
    def coverage(self, tau, U: int, lam: float | None = None, laplace: str = "none"):
        """Coverage ``P(SINR > tau)`` for a fixed number of scheduled users.

        ``laplace="none"`` gives the SNR coverage; the other modes include
        out-of-cell interference through the exact single-path functional or
        one of the two multipath bounds.
        """
        p = self.params
        lam = p.lambda_bs if lam is None else float(lam)
        self.check_density(lam)
        if laplace not in LAPLACE_MODES:
            raise ValueError(f"unknown Laplace mode {laplace!r}")
        tau = np.asarray(tau, dtype=float)
        flat = tau.ravel()
        if np.any(flat < 0) or not np.all(np.isfinite(flat)):
            raise ValueError("thresholds must be finite and non-negative")
        comps = None if laplace == "none" else self.components(laplace, lam)
        base = lam * np.exp(-lam * self.M)
        snr_scale = self.l * p.noise_power / p.array_gain
        total = np.zeros(flat.size)
        for measure, eta in (("L", p.eta_los), ("N", p.eta_nlos)):
            z = self.zeta(eta, U)
            if z == 0:
                continue
            g = base * self._dm[measure][self.outer]
            for n in range(1, eta + 1):
                coef = (-1) ** (n + 1) * math.comb(eta, n)
                kappa = eta * n * U * flat
                arg = kappa[:, None] * snr_scale[None, :]
                if comps:
                    arg = arg + lam * self.exponent(kappa, comps)
                total += z * coef * self._integrate(g[None, :] * np.exp(-arg))
        return np.clip(total, 0.0, 1.0).reshape(tau.shape)

    def serving_users(self, lam: float):
        """PMF of the number of users scheduled by the serving BS."""
        return load_pmfs(self.params.lambda_ue / lam, self.params.u_max).serving_u_pmf

    def coverage_avg(self, tau, lam: float | None = None, laplace: str = "none",
                     shortcut: bool = False):
        """Coverage averaged over the serving BS's scheduled-user count.

        With ``shortcut`` the serving BS is taken to be fully loaded.
        """
        p = self.params
        lam = p.lambda_bs if lam is None else float(lam)
        if shortcut:
            return self.coverage(tau, p.u_max, lam, laplace)
        pmf = self.serving_users(lam)
        out = 0.0
        for U in range(1, p.u_max + 1):
            if pmf[U] > 0:
                out = out + pmf[U] * self.coverage(tau, U, lam, laplace)
        return out

    def rate_coverage(self, tau_r, lam: float | None = None, laplace: str = "none",
                      terms: int | None = None, return_tail: bool = False):
        """Per-user rate coverage ``P(R > tau_r)``.

        The serving BS with ``n`` associated users schedules ``min(n, U_M)``
        of them at a time and shares the band over ``n / min(n, U_M)``
        slots. The series over ``n`` is truncated at ``floor(12 rho)``
        terms unless ``terms`` is given.
        """
        p = self.params
        lam = p.lambda_bs if lam is None else float(lam)
        tau_r = np.asarray(tau_r, dtype=float)
        flat = tau_r.ravel()
        if np.any(flat < 0):
            raise ValueError("rate thresholds must be non-negative")
        rho = p.lambda_ue / lam
        nt = n_terms(rho) if terms is None else int(terms)
        kappa = load_pmfs(rho, p.u_max, nt).kappa_serving
        n = np.arange(1, nt + 1)
        u = np.minimum(n, p.u_max)
        total = np.zeros(flat.size)
        last = np.zeros(flat.size)
        for U in range(1, p.u_max + 1):
            sel = n[u == U]
            if sel.size == 0:
                continue
            # SINR threshold reaching tau_r with share U/n of omega*B
            expo = np.outer(sel, flat) * math.log(2.0) / (p.omega * p.bandwidth * U)
            th = np.expm1(np.minimum(expo, 700.0))
            s = self.coverage(th.ravel(), U, lam, laplace).reshape(th.shape)
            contrib = kappa[sel][:, None] * s
            total += contrib.sum(axis=0)
            if sel[-1] == nt:
                last = contrib[-1]
        total = np.clip(total, 0.0, 1.0).reshape(tau_r.shape)
        if np.max(last, initial=0.0) > TRUNCATION_TOL:
            warnings.warn("rate series truncation: last term exceeds "
                          f"{TRUNCATION_TOL:g}", stacklevel=2)
        if return_tail:
            return total, last.reshape(tau_r.shape)
        return total


@lru_cache(maxsize=16)
def _cached_engine(params, lambdas, step, zeta_method):
    return CoverageEngine(params, lambdas, step, zeta_method)


def engine_for(params: NetworkParams, lambdas=None, step: float = 0.05,
               zeta_method: str = "exact") -> CoverageEngine:
    """Shared engine for a parameter set (cached)."""
    lams = (params.lambda_bs,) if lambdas is None else tuple(float(x) for x in np.atleast_1d(lambdas))
    return _cached_engine(params, lams, step, zeta_method)


def snr_coverage(tau, U: int, params: NetworkParams, method: str = "grid",
                 spec: QuadratureSpec | None = None):
    """SNR coverage ``S(tau, U)`` at ``params.lambda_bs``.

    ``method="quad"`` evaluates each integral with adaptive quadrature,
    which is slower but independent of the grid engine.
    """
    if method == "grid":
        return engine_for(params).coverage(tau, U)
    if method != "quad":
        raise ValueError(f"unknown method {method!r}")
    meas = PropagationMeasures(params)
    lam = params.lambda_bs
    scale = meas.typical_loss(lam)
    tau_arr = np.atleast_1d(np.asarray(tau, dtype=float))
    out = []
    for tt in tau_arr:
        total = 0.0
        for los, eta in ((True, params.eta_los), (False, params.eta_nlos)):
            z = zf_success_prob(eta, U, params)

            def f(l, los=los, eta=eta):
                x = eta * tt * U * l * params.noise_power / params.array_gain
                tail = -np.expm1(eta * np.log1p(-np.exp(-x))) if x > 0 else 1.0
                return tail * meas.association_density(l, lam, los)

            total += z * integrate_semi_infinite(f, 0.0, spec, scale=scale)
        out.append(min(max(total, 0.0), 1.0))
    out = np.array(out)
    return float(out[0]) if np.ndim(tau) == 0 else out.reshape(np.shape(tau))


def snr_coverage_avg(tau, params: NetworkParams, shortcut: bool = False):
    """Load-averaged SNR coverage at ``params.lambda_bs``."""
    return engine_for(params).coverage_avg(tau, shortcut=shortcut)


def sinr_coverage(tau, params: NetworkParams, U: int | None = None, laplace: str | None = None):
    """SINR coverage including out-of-cell interference.

    With single-path links the exact functional is used and an array is
    returned. Otherwise the result is a ``(lower, upper)`` pair from the
    two functional bounds. ``U=None`` averages over the serving load.
    """
    eng = engine_for(params)

    def run(mode):
        if U is None:
            return eng.coverage_avg(tau, laplace=mode)
        return eng.coverage(tau, U, laplace=mode)

    if laplace is not None:
        return run(laplace)
    if params.eta_los == 1 and params.eta_nlos == 1:
        return run("single")
    return run("lower"), run("upper")


def rate_coverage(tau_r, params: NetworkParams, laplace: str = "none", terms: int | None = None):
    """Per-user rate coverage at ``params.lambda_bs``."""
    return engine_for(params).rate_coverage(tau_r, laplace=laplace, terms=terms)


def _meta(params, metric, unit, laplace, engine):
    return dict(engine="analytic", scheme="SU" if params.u_max == 1 else "MU",
                params_digest=params.digest(), metric=metric, threshold_unit=unit,
                laplace=laplace, grid_step=engine.grid.h, zeta_method=engine.zeta_method)


def sinr_curve(params: NetworkParams, thresholds_db, laplace: str = "none",
               U: int | None = None, lam: float | None = None) -> CoverageCurve:
    """Coverage curve over dB thresholds, load averaged unless ``U`` is set."""
    lam = params.lambda_bs if lam is None else lam
    eng = engine_for(params, lam)
    th = np.asarray(thresholds_db, dtype=float)
    tau = 10.0 ** (th / 10.0)
    vals = eng.coverage_avg(tau, lam, laplace) if U is None else eng.coverage(tau, U, lam, laplace)
    return CoverageCurve(th, vals, _meta(params, "sinr_db", "dB", laplace, eng))


def rate_curve(params: NetworkParams, rate_grid, laplace: str = "none",
               terms: int | None = None) -> CoverageCurve:
    """Per-user rate coverage curve over thresholds in bit/s."""
    eng = engine_for(params)
    g = np.asarray(rate_grid, dtype=float)
    vals = eng.rate_coverage(g, laplace=laplace, terms=terms)
    return CoverageCurve(g, vals, _meta(params, "per_user_rate_bps", "bps", laplace, eng))
