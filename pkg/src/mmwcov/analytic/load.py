"""Load distributions of the serving and interfering base stations."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

__all__ = ["LoadModel", "load_pmfs", "kappa_serving", "kappa_interfering", "n_terms"]

SHAPE = 3.5


def kappa_serving(n, rho: float):
    """PMF of the number of users of the BS serving the typical user.

    Zero at ``n = 0``; a negative binomial of shape 4.5 shifted by one.
    """
    n = np.asarray(n)
    k = np.maximum(n - 1, 0).astype(float)
    logp = (SHAPE * math.log(SHAPE) + special.gammaln(k + 1 + SHAPE) - special.gammaln(SHAPE)
            - special.gammaln(k + 1) + k * math.log(rho) - (k + 1 + SHAPE) * math.log(SHAPE + rho))
    out = np.where(n >= 1, np.exp(logp), 0.0)
    return float(out) if out.ndim == 0 else out


def kappa_interfering(n, rho: float):
    """PMF of the number of users of a generic (interfering) BS, ``n >= 0``."""
    n = np.asarray(n)
    k = np.maximum(n, 0).astype(float)
    logp = (SHAPE * math.log(SHAPE) + special.gammaln(k + SHAPE) - special.gammaln(SHAPE)
            - special.gammaln(k + 1) + k * math.log(rho) - (k + SHAPE) * math.log(SHAPE + rho))
    out = np.where(n >= 0, np.exp(logp), 0.0)
    return float(out) if out.ndim == 0 else out


def n_terms(rho: float) -> int:
    """Truncation length ``floor(12 rho)`` of the load series (at least one)."""
    return max(1, int(math.floor(12.0 * rho)))


@dataclass(frozen=True)
class LoadModel:
    """Load PMFs for one density ratio and user cap.

    ``u_pmf[n]`` is the probability that an interfering BS serves ``n``
    users simultaneously (``n = 0..u_max``); ``serving_u_pmf[n]`` is the
    same for the tagged BS (zero at ``n = 0``).
    """

    rho: float
    u_max: int
    kappa_serving: np.ndarray
    kappa_interfering: np.ndarray
    u_pmf: np.ndarray
    serving_u_pmf: np.ndarray


def _fold(pmf, u_max):
    out = np.zeros(u_max + 1)
    out[:u_max] = pmf[:u_max]
    out[u_max] = 1.0 - out[:u_max].sum()
    return out


def load_pmfs(rho: float, u_max: int, length: int | None = None) -> LoadModel:
    """Tabulate the load PMFs up to ``length`` users.

    The default length is ``floor(12 rho) + u_max``. Scheduled-user PMFs
    keep the exact mass below ``u_max`` and put the rest at ``u_max``.
    """
    if not rho > 0:
        raise ValueError("rho must be positive")
    if u_max < 1:
        raise ValueError("u_max must be at least 1")
    length = n_terms(rho) + u_max if length is None else length
    n = np.arange(length + 1)
    ks = kappa_serving(n, rho)
    ki = kappa_interfering(n, rho)
    return LoadModel(rho, u_max, ks, ki, _fold(ki, u_max), _fold(ks, u_max))
