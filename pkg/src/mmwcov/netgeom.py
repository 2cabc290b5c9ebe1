"""Network geometry: PPP sampling, blockage, shadowing and association."""

from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.spatial import cKDTree

__all__ = [
    "SPEED_OF_LIGHT",
    "NetworkParams",
    "LinkState",
    "NetworkRealization",
    "default_sidelobes",
    "interference_config",
    "sample_ppp",
    "draw_link_state",
    "draw_link_states",
    "associate",
    "sample_realization",
    "noise_power",
    "dbm_to_watts",
]

SPEED_OF_LIGHT = 299_792_458.0
PER_KM2 = 1e-6


def default_sidelobes(n_bs: int, n_ue: int, angle: float = 0.244):
    """Sidelobe amplitudes ``1 / (sin(angle) * N)`` at the BS and UE."""
    if n_bs < 2 or n_ue < 2:
        raise ValueError("antenna counts must be at least 2")
    s = math.sin(angle)
    return 1.0 / (s * n_bs), 1.0 / (s * n_ue)


@dataclass(frozen=True)
class NetworkParams:
    """All scalar inputs shared by the analytic and simulation engines.

    Units are SI throughout: Hz, metres, watts and points per square metre.
    ``equiprobable_angles`` selects uniform virtual angles in the closed
    forms (ZF penalty and interference functionals); when it is off they use
    the arcsine-derived PMF. Simulated virtual-mode channels draw from
    that PMF by default. ``rho_bs`` and ``rho_ue`` default to
    :func:`default_sidelobes` of the antenna counts.
    """

    f_c: float = 73e9
    bandwidth: float = 1e9
    p_los: float = 0.11
    D: float = 200.0
    alpha_los: float = 2.0
    alpha_nlos: float = 3.3
    xi_los: float = 5.2
    xi_nlos: float = 7.6
    lambda_bs: float = 60 * PER_KM2
    lambda_ue: float = 500 * PER_KM2
    p_tx: float = 1.0
    n_bs: int = 64
    n_ue: int = 16
    eta_los: int = 1
    eta_nlos: int = 3
    u_max: int = 1
    n_s: int = 1
    noise_figure: float = 10.0
    rho_bs: float | None = None
    rho_ue: float | None = None
    omega: float = 1.0
    nu: float = 1.38
    sim_window_radius: float = 2000.0
    equiprobable_angles: bool = True

    def __post_init__(self):
        rb, ru = default_sidelobes(self.n_bs, self.n_ue) if min(self.n_bs, self.n_ue) >= 2 else (0.0, 0.0)
        if self.rho_bs is None:
            object.__setattr__(self, "rho_bs", rb)
        if self.rho_ue is None:
            object.__setattr__(self, "rho_ue", ru)
        self.validate()

    def validate(self):
        positive = ("f_c", "bandwidth", "D", "alpha_los", "alpha_nlos", "lambda_bs",
                    "lambda_ue", "p_tx", "n_bs", "n_ue", "eta_los", "eta_nlos",
                    "u_max", "n_s", "nu", "sim_window_radius")
        for name in positive:
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive and finite, got {v!r}")
        for name in ("n_bs", "n_ue", "eta_los", "eta_nlos", "u_max", "n_s"):
            if int(getattr(self, name)) != getattr(self, name):
                raise ValueError(f"{name} must be an integer")
        if not 0.0 <= self.p_los <= 1.0:
            raise ValueError("p_los must lie in [0, 1]")
        if self.xi_los < 0 or self.xi_nlos < 0:
            raise ValueError("shadowing deviations must be non-negative")
        if self.u_max > min(self.n_bs, self.n_ue):
            raise ValueError("u_max cannot exceed the antenna counts")
        if not 0.0 <= self.rho_bs < 1.0 or not 0.0 <= self.rho_ue < 1.0:
            raise ValueError("sidelobe amplitudes must lie in [0, 1)")
        if not 0.0 < self.omega <= 1.0:
            raise ValueError("omega must lie in (0, 1]")
        if self.eta_los > self.eta_nlos:
            warnings.warn("eta_los exceeds eta_nlos; NLOS links are expected to be richer",
                          stacklevel=3)

    # derived quantities -------------------------------------------------
    @property
    def beta_db(self) -> float:
        return 20.0 * math.log10(4.0 * math.pi * self.f_c / SPEED_OF_LIGHT)

    @property
    def noise_power(self) -> float:
        return noise_power(self)

    @property
    def array_gain(self) -> float:
        """``P * N_BS * N_UE``."""
        return self.p_tx * self.n_bs * self.n_ue

    @property
    def load_ratio(self) -> float:
        return self.lambda_ue / self.lambda_bs

    def eta(self, is_los: bool) -> int:
        return self.eta_los if is_los else self.eta_nlos

    def with_(self, **changes) -> "NetworkParams":
        """Copy with changes. Sidelobes follow new antenna counts unless given."""
        if ("n_bs" in changes or "n_ue" in changes) and "rho_bs" not in changes:
            changes.setdefault("rho_bs", None)
            changes.setdefault("rho_ue", None)
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=repr)
        return hashlib.sha256(blob.encode()).hexdigest()[:12]


def interference_config(**changes) -> NetworkParams:
    """Less blocked 28 GHz setting where out-of-cell interference matters."""
    base = dict(f_c=28e9, bandwidth=200e6, p_los=0.5, lambda_ue=1000 * PER_KM2)
    base.update(changes)
    return NetworkParams(**base)


def dbm_to_watts(dbm):
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)


def noise_power(params: NetworkParams) -> float:
    """Thermal noise power in watts over the system bandwidth."""
    if params.bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    return float(dbm_to_watts(-174.0 + 10.0 * math.log10(params.bandwidth) + params.noise_figure))


@dataclass(frozen=True)
class LinkState:
    distance: float
    is_los: bool
    shadow_db: float
    path_loss_db: float

    @property
    def path_loss_linear(self) -> float:
        return 10.0 ** (self.path_loss_db / 10.0)


def sample_ppp(intensity: float, window_radius: float, rng: np.random.Generator) -> np.ndarray:
    """Homogeneous PPP on a disk centred at the origin.

    Returns an ``(n, 2)`` array; ``n`` may be zero.
    """
    if not intensity > 0 or not window_radius > 0:
        raise ValueError("intensity and radius must be positive")
    n = rng.poisson(intensity * math.pi * window_radius ** 2)
    r = window_radius * np.sqrt(rng.random(n))
    phi = rng.uniform(0.0, 2.0 * math.pi, n)
    return np.column_stack([r * np.cos(phi), r * np.sin(phi)])


def draw_link_states(d, params: NetworkParams, rng: np.random.Generator):
    """Vectorised blockage and shadowing draw.

    Returns ``(distance, is_los, shadow_db, path_loss_db)`` arrays, with
    distances clamped to the 1 m reference distance.
    """
    d = np.maximum(np.asarray(d, dtype=float), 1.0)
    is_los = (d <= params.D) & (rng.random(d.shape) < params.p_los)
    z = rng.standard_normal(d.shape)
    shadow = np.where(is_los, params.xi_los, params.xi_nlos) * z
    alpha = np.where(is_los, params.alpha_los, params.alpha_nlos)
    pl = params.beta_db + 10.0 * alpha * np.log10(d) + shadow
    return d, is_los, shadow, pl


def draw_link_state(d: float, params: NetworkParams, rng: np.random.Generator) -> LinkState:
    """Single link draw; distances under 1 m are clamped to 1 m."""
    if not d > 0:
        raise ValueError("distance must be positive")
    dist, los, sh, pl = draw_link_states(np.array([d]), params, rng)
    return LinkState(float(dist[0]), bool(los[0]), float(sh[0]), float(pl[0]))


@dataclass(frozen=True)
class NetworkRealization:
    """One sampled network around a typical user at the origin.

    The typical user is UE 0. Link state to the typical user is kept for
    every BS (``typical_links``). Every other associated UE keeps the states
    of the links to its candidate BSs (``candidates``: index, path loss in
    dB and LOS flag, one row per UE). UEs left out of the association carry
    ``association = -1``.
    """

    bs_positions: np.ndarray
    ue_positions: np.ndarray
    typical_links: dict = field(repr=False)
    association: np.ndarray | None = None
    serving_los: np.ndarray | None = field(default=None, repr=False)
    serving_path_loss_db: np.ndarray | None = field(default=None, repr=False)
    load: np.ndarray | None = None
    scheduled_mask: np.ndarray | None = field(default=None, repr=False)
    candidates: dict | None = field(default=None, repr=False)

    @property
    def n_bs(self) -> int:
        return len(self.bs_positions)

    @property
    def tagged_bs(self) -> int:
        return int(self.association[0])

    @property
    def scheduled(self) -> dict:
        """Map from BS index to the array of its scheduled UE indices."""
        ue = np.flatnonzero(self.scheduled_mask)
        bs = self.association[ue]
        return {int(b): ue[bs == b] for b in np.unique(bs)}

    def scheduled_at(self, bs: int) -> np.ndarray:
        return np.flatnonzero(self.scheduled_mask & (self.association == bs))

    def link(self, bs: int) -> LinkState:
        t = self.typical_links
        return LinkState(float(t["distance"][bs]), bool(t["is_los"][bs]),
                         float(t["shadow_db"][bs]), float(t["path_loss_db"][bs]))


def sample_realization(params: NetworkParams, rng: np.random.Generator,
                       with_users: bool = True) -> NetworkRealization:
    """BS and UE PPPs in the simulation window plus the typical-user links."""
    bs = sample_ppp(params.lambda_bs, params.sim_window_radius, rng)
    if with_users:
        ues = sample_ppp(params.lambda_ue, params.sim_window_radius, rng)
    else:
        ues = np.empty((0, 2))
    ues = np.vstack([np.zeros((1, 2)), ues])
    dist, los, sh, pl = draw_link_states(np.hypot(bs[:, 0], bs[:, 1]), params, rng)
    links = dict(distance=dist, is_los=los, shadow_db=sh, path_loss_db=pl)
    return NetworkRealization(bs, ues, links)


def associate(realization: NetworkRealization, params: NetworkParams,
              rng: np.random.Generator, candidates: int = 24, relevant=None,
              margin: float = 1000.0) -> NetworkRealization:
    """Minimum-path-loss association and per-BS scheduling.

    The typical user considers every BS. Other users consider their
    ``candidates`` nearest BSs, which contain the minimum path loss BS with
    overwhelming probability for the default densities (a BS further away
    would need a shadowing advantage of tens of dB). Ties go to the lowest
    BS index. Each BS schedules a uniformly random subset of
    ``min(u_max, load)`` of its users; the tagged BS always includes UE 0.

    Parameters
    ----------
    relevant : array of int, optional
        BSs whose loads are needed. When given, only UEs within ``margin``
        metres of one of them are associated, which is much cheaper when
        only the tagged BS matters.

    Raises
    ------
    ValueError
        If the realization contains no BS; callers resample.
    """
    nb = realization.n_bs
    if nb == 0:
        raise ValueError("no base station in the window")
    links = realization.typical_links
    tagged = int(np.argmin(links["path_loss_db"]))
    n_ue = len(realization.ue_positions)
    assoc = np.full(n_ue, -1, dtype=np.int64)
    serving_los = np.zeros(n_ue, dtype=bool)
    serving_pl = np.full(n_ue, np.inf)
    assoc[0] = tagged
    serving_los[0] = links["is_los"][tagged]
    serving_pl[0] = links["path_loss_db"][tagged]
    k = min(candidates, nb)
    cand = dict(ue=np.empty(0, np.int64), index=np.empty((0, k), np.int64),
                path_loss_db=np.empty((0, k)), is_los=np.empty((0, k), bool))
    others = np.arange(1, n_ue)
    if relevant is not None and others.size:
        rel = realization.bs_positions[np.atleast_1d(np.asarray(relevant, dtype=np.int64))]
        near, _ = cKDTree(rel).query(realization.ue_positions[others], k=1)
        others = others[near <= margin]
    if others.size:
        tree = cKDTree(realization.bs_positions)
        dist, idx = tree.query(realization.ue_positions[others], k=k)
        if k == 1:
            dist, idx = dist[:, None], idx[:, None]
        _, los, _, pl = draw_link_states(dist, params, rng)
        # argmin picks the first minimum; order the columns by BS index
        order = np.argsort(idx, axis=1, kind="stable")
        idx = np.take_along_axis(idx, order, 1)
        pl = np.take_along_axis(pl, order, 1)
        los = np.take_along_axis(los, order, 1)
        best = np.argmin(pl, axis=1)
        rows = np.arange(others.size)
        assoc[others] = idx[rows, best]
        serving_los[others] = los[rows, best]
        serving_pl[others] = pl[rows, best]
        cand = dict(ue=others, index=idx, path_loss_db=pl, is_los=los)
    load = np.bincount(assoc[assoc >= 0], minlength=nb)
    mask = schedule_users(assoc, load, params.u_max, rng)
    return replace(realization, association=assoc, serving_los=serving_los,
                   serving_path_loss_db=serving_pl, load=load, scheduled_mask=mask,
                   candidates=cand)


def schedule_users(assoc, load, u_max, rng):
    """Uniform random co-scheduling of ``min(u_max, load)`` users per BS.

    Returns a boolean mask over UEs. UE 0 is always scheduled by its BS.
    UEs with a negative association are never scheduled.
    """
    keys = rng.random(len(assoc))
    keys[0] = -1.0
    active = np.flatnonzero(assoc >= 0)
    a = assoc[active]
    order = np.lexsort((keys[active], a))
    starts = np.concatenate([[0], np.cumsum(load)[:-1]])
    rank = np.empty(active.size, dtype=np.int64)
    rank[order] = np.arange(active.size) - starts[a[order]]
    mask = np.zeros(len(assoc), dtype=bool)
    mask[active] = rank < u_max
    return mask
