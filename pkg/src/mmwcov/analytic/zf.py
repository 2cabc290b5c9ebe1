"""Probability that zero forcing leaves the served beam untouched.

Under the virtual channel approximation the typical user's effective
channel row decouples from its co-scheduled users unless one of three beam
collision events occurs:

* a path of another user shares both the UE beam of that user and the BS
  beam serving the typical user;
* a path of the typical user shares its UE beam and hits the BS beam of
  another user;
* a secondary path of the typical user coincides with its own serving beam
  pair.

Two evaluations are offered. ``method="exact"`` computes the probability
that none of the events occurs, conditioning on the set of BS beams chosen
by the co-scheduled users. ``method="prop1"`` is the product-form
composition that treats the events as conditionally independent; it is
cheaper for large path counts but is not a bound in general.
"""

from __future__ import annotations

import itertools
import math
import warnings
from fractions import Fraction

import numpy as np

from ..channel import virtual_angle_pmf
from ..netgeom import NetworkParams

__all__ = ["mutual_exclusion_prob", "zf_success_prob", "zf_success_monte_carlo",
           "DEFAULT_CAP"]

DEFAULT_CAP = 20_000_000


def _surjections(n: int, d: int) -> int:
    """Number of maps from an ``n``-set onto a ``d``-set."""
    return sum((-1) ** i * math.comb(d, i) * (d - i) ** n for i in range(d + 1))


def mutual_exclusion_prob(N: int, U1: int, U2: int) -> float:
    """Probability that ``U2`` uniform draws avoid all values of ``U1`` others.

    All ``U1 + U2`` draws are i.i.d. uniform over ``N`` values. Evaluated in
    exact integer arithmetic, so large ``N`` does not overflow.
    """
    if N < 1 or U1 < 0 or U2 < 0:
        raise ValueError("need N >= 1 and non-negative counts")
    total = 0
    for d in range(0, min(U1, N) + 1):
        total += math.comb(N, d) * (N - d) ** U2 * _surjections(U1, d)
    return float(Fraction(total, N ** (U1 + U2)))


def _pmfs(params: NetworkParams, equiprobable: bool):
    if equiprobable:
        return np.full(params.n_bs, 1.0 / params.n_bs), np.full(params.n_ue, 1.0 / params.n_ue)
    return virtual_angle_pmf(params.n_bs), virtual_angle_pmf(params.n_ue)


def zf_success_prob(eta: int, U: int, params: NetworkParams, equiprobable: bool | None = None,
                    method: str = "exact", cap: int = DEFAULT_CAP) -> float:
    """Probability ``zeta(eta, U)`` that the served beam survives ZF.

    Parameters
    ----------
    eta : int
        Path count of the typical user's link.
    U : int
        Number of simultaneously scheduled users, including the typical one.
    params : NetworkParams
        Supplies antenna counts, LOS probability and the co-scheduled users'
        path counts.
    equiprobable : bool, optional
        Uniform virtual angles instead of the arcsine-derived PMF. Defaults
        to ``params.equiprobable_angles``.
    method : {"exact", "prop1"}
        See the module docstring.
    cap : int
        Largest enumeration size accepted for non-uniform angle PMFs.
        Larger problems fall back to uniform angles with a warning.
    """
    if eta < 1 or U < 1:
        raise ValueError("eta and U must be at least 1")
    if U > min(params.n_bs, params.n_ue):
        raise ValueError("U cannot exceed the antenna counts")
    if equiprobable is None:
        equiprobable = params.equiprobable_angles
    if eta == 1 and U == 1:
        return 1.0
    if not equiprobable and params.n_bs * (params.n_bs - 1) ** (max(eta, 2) - 1) > cap:
        warnings.warn("angle PMF enumeration exceeds the cap; using uniform angles",
                      stacklevel=2)
        equiprobable = True
    if method == "exact":
        z = _exact_uniform(eta, U, params) if equiprobable else _exact_general(eta, U, params)
    elif method == "prop1":
        z = _product_form(eta, U, params, equiprobable)
    else:
        raise ValueError(f"unknown method {method!r}")
    return float(min(max(z, 0.0), 1.0))


def _exact_uniform(eta, U, params):
    nb, nu, p = params.n_bs, params.n_ue, params.p_los
    cell = 1.0 / (nu * nb)
    others = (p * (1.0 - cell) ** (params.eta_los - 1)
              + (1.0 - p) * (1.0 - cell) ** (params.eta_nlos - 1)) ** (U - 1)
    total = 0.0
    for d in range(0, U):
        # co-scheduled best beams avoid ours and occupy d distinct beams
        w = math.comb(nb - 1, d) * _surjections(U - 1, d) / nb ** (U - 1)
        total += w * (1.0 - (d + 1) * cell) ** (eta - 1)
    return total * others


def _tuples(n, a):
    """All ``a``-tuples over ``range(n)`` plus first-occurrence masks."""
    grids = np.meshgrid(*([np.arange(n)] * a), indexing="ij")
    idx = [g.ravel() for g in grids]
    first = [np.ones(idx[0].size, bool)]
    for k in range(1, a):
        f = np.ones(idx[0].size, bool)
        for m in range(k):
            f &= idx[k] != idx[m]
        first.append(f)
    return idx, first


def _set_moments(q, j, U, order):
    """``E[1(no draw equals j) * q(S)^a]`` for ``a = 0..order``.

    ``S`` is the set of distinct values among ``U - 1`` i.i.d. draws from
    ``q``. Each moment expands into a sum over ``a``-tuples of values, and
    the probability that a given set is covered while ``j`` is avoided
    follows by inclusion-exclusion.
    """
    qj = q[j]
    rest = np.delete(q, j)
    out = [(1.0 - qj) ** (U - 1)]
    for a in range(1, order + 1):
        idx, first = _tuples(rest.size, a)
        weight = np.prod([rest[i] for i in idx], axis=0)
        prob = np.zeros(idx[0].size)
        for subset in itertools.product((0, 1), repeat=a):
            mask = np.ones(idx[0].size, bool)
            mass = np.zeros(idx[0].size)
            for k, s in enumerate(subset):
                if s:
                    mask &= first[k]
                    mass = mass + rest[idx[k]]
            sign = -1.0 if sum(subset) % 2 else 1.0
            prob += np.where(mask, sign * np.maximum(1.0 - qj - mass, 0.0) ** (U - 1), 0.0)
        out.append(float(np.sum(weight * prob)))
    return out


def _exact_general(eta, U, params):
    qb, qu = _pmfs(params, False)
    p = params.p_los
    total = 0.0
    for j in range(qb.size):
        qj = qb[j]

        def a_j(e):
            return float(np.sum(qu * (1.0 - qu * qj) ** (e - 1)))

        others = (p * a_j(params.eta_los) + (1.0 - p) * a_j(params.eta_nlos)) ** (U - 1)
        mom = _set_moments(qb, j, U, eta - 1)
        own = 0.0
        for x, wx in zip(qu, qu):
            acc = 0.0
            for r in range(eta):
                inner = sum(math.comb(r, a) * qj ** (r - a) * mom[a] for a in range(r + 1))
                acc += math.comb(eta - 1, r) * (-x) ** r * inner
            own += wx * acc
        total += qj * own * others
    return total


def _product_form(eta, U, params, equiprobable):
    qb, qu = _pmfs(params, equiprobable)
    p = params.p_los

    def C(e):
        return float(np.sum(qu * (1.0 - qu) ** (e - 1)))

    if equiprobable:
        d_uniform = mutual_exclusion_prob(params.n_bs - 1, eta - 1, U - 1)
    total = 0.0
    for j in range(qb.size):
        qj = qb[j]
        if equiprobable:
            D = d_uniform
        else:
            D = _distinct_avoidance(np.delete(qb, j) / (1.0 - qj), eta - 1, U - 1)

        def A(e):
            return C(e) + (1.0 - qj) ** (e - 1) * (1.0 - C(e))

        B = C(eta) * (1.0 - qj) ** (U - 1) + D * (1.0 - C(eta))
        total += qj * B * (p * A(params.eta_los) + (1.0 - p) * A(params.eta_nlos)) ** (U - 1)
        if equiprobable:
            return total * qb.size
    return total


def _distinct_avoidance(l, a, u):
    """``sum over a-tuples of prod(l) * (1 - l(unique values))^u``."""
    if a == 0:
        return 1.0
    idx, first = _tuples(l.size, a)
    weight = np.prod([l[i] for i in idx], axis=0)
    mass = sum(np.where(f, l[i], 0.0) for i, f in zip(idx, first))
    return float(np.sum(weight * np.maximum(1.0 - mass, 0.0) ** u))


def zf_success_monte_carlo(eta: int, U: int, params: NetworkParams, trials: int,
                           rng: np.random.Generator, equiprobable: bool | None = None):
    """Fraction of random beam draws free of the three collision events.

    Returns ``(estimate, standard_error)``. Used as a diagnostic for the
    closed forms.
    """
    if equiprobable is None:
        equiprobable = params.equiprobable_angles
    qb, qu = _pmfs(params, equiprobable)
    emax = max(eta, params.eta_los, params.eta_nlos)
    th = rng.choice(qb.size, size=(trials, U, emax), p=qb)
    ph = rng.choice(qu.size, size=(trials, U, emax), p=qu)
    ek = np.where(rng.random((trials, U)) < params.p_los, params.eta_los, params.eta_nlos)
    ek[:, 0] = eta
    valid = np.arange(emax)[None, None, :] < ek[:, :, None]
    serve = th[:, 0, 0]
    hit_ours = ((ph[:, 1:, :] == ph[:, 1:, :1]) & (th[:, 1:, :] == serve[:, None, None])
                & valid[:, 1:, :])
    same_rx = (ph[:, 0, :] == ph[:, 0, :1]) & valid[:, 0, :]
    hit_theirs = same_rx[:, None, :] & (th[:, 0, None, :] == th[:, 1:, 0][:, :, None])
    self_hit = same_rx[:, 1:] & (th[:, 0, 1:] == serve[:, None])
    ok = ~(hit_ours.any((1, 2)) | hit_theirs.any((1, 2)) | self_hit.any(1))
    return float(ok.mean()), float(ok.std() / math.sqrt(trials))
