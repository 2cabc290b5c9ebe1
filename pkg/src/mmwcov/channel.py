"""Sparse geometric channel with physical or quantized (virtual) angles.

Angles are kept in the spatial-frequency domain ``theta = pi * sin(phi)``
for half-wavelength spacing. In virtual mode they are snapped to the grid
``-pi + 2 pi i / N`` and the index ``i`` in ``1..N`` is kept alongside.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .netgeom import LinkState, NetworkParams

__all__ = [
    "PathComponent",
    "SparseChannel",
    "array_response",
    "steering_inner",
    "virtual_angle_pmf",
    "virtual_grid",
    "draw_angles",
    "synthesize_channel",
    "materialize_matrix",
]

PHYSICAL = "physical"
VIRTUAL = "virtual"


class PathComponent(NamedTuple):
    gain: complex
    aoa: float
    aod: float


def array_response(theta, n: int) -> np.ndarray:
    """Unit-norm ULA response ``[1, e^{j theta}, ..., e^{j (n-1) theta}] / sqrt(n)``.

    ``theta`` may be an array, in which case one column per angle is
    returned.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    th = np.asarray(theta, dtype=float)
    k = np.arange(n).reshape((n,) + (1,) * th.ndim)
    return np.exp(1j * k * th) / math.sqrt(n)


def steering_inner(delta, n: int):
    """``a(theta1)^* a(theta2)`` as a function of ``delta = theta2 - theta1``.

    Closed form of the normalised geometric sum ``(1/n) sum_k e^{j k delta}``.
    """
    half = 0.5 * np.asarray(delta, dtype=float)
    s = np.sin(half)
    small = np.abs(s) < 1e-12
    if small.any():
        # limit at multiples of pi: cos(n h) / cos(h), which is +-1
        ratio = np.where(small, np.cos(n * half) / np.cos(half),
                         np.sin(n * half) / (n * np.where(small, 1.0, s)))
    else:
        ratio = np.sin(n * half) / (n * s)
    return np.exp(1j * (n - 1) * half) * ratio


def virtual_grid(n: int) -> np.ndarray:
    """Quantized angles ``-pi + 2 pi i / n`` for ``i = 1..n``."""
    return -math.pi + 2.0 * math.pi * np.arange(1, n + 1) / n


def virtual_angle_pmf(n_antennas: int) -> np.ndarray:
    """PMF of the quantized angle index for uniform physical angles.

    Entry ``i-1`` holds the probability of index ``i``. The last index
    collects the remaining mass, which includes both half bins at
    ``+-pi``.
    """
    if n_antennas < 2:
        raise ValueError("n_antennas must be at least 2")
    n = n_antennas
    i = np.arange(1, n)
    q = (np.arcsin(-1.0 + (2 * i + 1) / n) - np.arcsin(-1.0 + (2 * i - 1) / n)) / math.pi
    return np.append(q, 1.0 - q.sum())


def quantize(theta, n: int) -> np.ndarray:
    """Index in ``1..n`` of the nearest grid angle (bins wrap at +-pi)."""
    i = np.rint((np.asarray(theta) + math.pi) * n / (2.0 * math.pi)).astype(np.int64)
    i = np.mod(i, n)
    return np.where(i == 0, n, i)


def draw_angles(shape, n: int, mode: str, rng: np.random.Generator,
                equiprobable: bool = False):
    """Random angles for ``n`` antennas.

    Returns ``(theta, index)``; ``index`` is ``None`` in physical mode.
    """
    if mode == PHYSICAL:
        phi = rng.uniform(0.0, 2.0 * math.pi, shape)
        return math.pi * np.sin(phi), None
    if mode != VIRTUAL:
        raise ValueError(f"unknown channel mode {mode!r}")
    if equiprobable:
        idx = rng.integers(1, n + 1, size=shape)
    else:
        cdf = np.cumsum(virtual_angle_pmf(n))
        idx = np.minimum(np.searchsorted(cdf, rng.random(shape), side="right"), n - 1) + 1
    return virtual_grid(n)[idx - 1], idx


@dataclass(frozen=True)
class SparseChannel:
    """Sum of ``eta`` rank-one path components scaled by the path loss.

    ``aoa``/``aod`` hold spatial angles in radians. In virtual mode the
    grid indices are available as ``aoa_index``/``aod_index``.
    """

    gains: np.ndarray
    aoa: np.ndarray
    aod: np.ndarray
    path_loss_linear: float
    n_bs: int
    n_ue: int
    mode: str = PHYSICAL
    aoa_index: np.ndarray | None = None
    aod_index: np.ndarray | None = None

    @property
    def eta(self) -> int:
        return len(self.gains)

    @property
    def paths(self) -> list:
        return [PathComponent(complex(g), float(a), float(d))
                for g, a, d in zip(self.gains, self.aoa, self.aod)]

    @property
    def prefactor(self) -> float:
        return math.sqrt(self.n_bs * self.n_ue / (self.path_loss_linear * self.eta))

    def response(self, w_angle, f_angle):
        """Bilinear form ``a_UE(w_angle)^* H a_BS(f_angle)``.

        Broadcasts over the two angle arguments.
        """
        w = np.asarray(w_angle, dtype=float)[..., None]
        f = np.asarray(f_angle, dtype=float)[..., None]
        terms = (self.gains * steering_inner(self.aoa - w, self.n_ue)
                 * steering_inner(f - self.aod, self.n_bs))
        return self.prefactor * terms.sum(axis=-1)


def synthesize_channel(link: LinkState, params: NetworkParams, mode: str,
                       rng: np.random.Generator, equiprobable: bool = False) -> SparseChannel:
    """Draw path gains and angles for one link.

    Path count follows the blockage state; gains are i.i.d. CN(0, 1).
    """
    eta = params.eta(link.is_los)
    gains = (rng.standard_normal(eta) + 1j * rng.standard_normal(eta)) / math.sqrt(2.0)
    aoa, ia = draw_angles(eta, params.n_ue, mode, rng, equiprobable)
    aod, id_ = draw_angles(eta, params.n_bs, mode, rng, equiprobable)
    return SparseChannel(gains, aoa, aod, link.path_loss_linear, params.n_bs, params.n_ue,
                         mode, ia, id_)


def materialize_matrix(ch: SparseChannel) -> np.ndarray:
    """Dense ``N_UE x N_BS`` matrix of the channel."""
    a_ue = array_response(ch.aoa, ch.n_ue)
    a_bs = array_response(ch.aod, ch.n_bs)
    return ch.prefactor * (a_ue * ch.gains) @ a_bs.conj().T
