"""Monte-Carlo engine for the typical user's SINR and rates.

Each trial samples a network around the typical user at the origin,
associates users to the BS of smallest path loss, draws sparse channels for
every link that matters and applies the actual precoders and combiners:
beamsteering plus ZF for MU-MIMO (SU-BF is the single-user case) and the
hybrid multi-stream design for SM. Out-of-cell interference, when enabled,
uses the precoders that each interfering BS computes for its own users.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .analytic.coverage import CoverageCurve
from .beamform import best_beam_pair, design_mu_zf, design_mu_zf_batch, design_sm
from .channel import PHYSICAL, VIRTUAL, SparseChannel, draw_angles, steering_inner
from .netgeom import NetworkParams, associate, draw_link_states, sample_realization
from .numerics import EmpiricalCCDF, binomial_ci

__all__ = [
    "SCHEMES",
    "ExperimentPlan",
    "TrialResult",
    "ExperimentResult",
    "run_trial",
    "run_trials",
    "run_experiment",
    "trial_rng",
    "default_workers",
]

SCHEMES = ("MU", "SU", "SM")


def default_workers() -> int:
    """Worker processes, from ``MMWCOV_WORKERS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("MMWCOV_WORKERS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class ExperimentPlan:
    """Everything needed to reproduce a simulation run.

    Attributes
    ----------
    params : NetworkParams
    scheme : {"MU", "SU", "SM"}
        SU runs the MU pipeline with one user per BS; SM serves one user
        per BS with ``params.n_s`` streams.
    trials, seed : int
        Trial ``i`` draws from a counter-based stream keyed by
        ``(seed, i)``.
    threshold_grid : array
        SINR thresholds in dB, ascending.
    rate_grid : array
        Rate thresholds in bit/s, ascending.
    interference : bool
        Include out-of-cell interference.
    channel_mode : {"physical", "virtual"}
    cutoff_db : float
        Interferers whose path loss exceeds the serving loss by more than
        this are ignored.
    ue_margin : float
        Without interference, only UEs within this distance (m) of the
        tagged BS are associated.
    candidates : int
        Nearest BSs considered by each non-typical UE.
    """

    params: NetworkParams
    scheme: str = "MU"
    trials: int = 1000
    seed: int = 0
    threshold_grid: np.ndarray = field(default_factory=lambda: np.arange(-10.0, 40.5, 1.0))
    rate_grid: np.ndarray = field(default_factory=lambda: np.logspace(5, 11, 121))
    interference: bool = False
    channel_mode: str = PHYSICAL
    cutoff_db: float = 60.0
    ue_margin: float = 1000.0
    candidates: int = 24
    max_resamples: int = 100

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if self.channel_mode not in (PHYSICAL, VIRTUAL):
            raise ValueError(f"unknown channel mode {self.channel_mode!r}")
        for name in ("threshold_grid", "rate_grid"):
            g = np.asarray(getattr(self, name), dtype=float)
            if g.ndim != 1 or g.size == 0 or np.any(np.diff(g) <= 0):
                raise ValueError(f"{name} must be a non-empty ascending sequence")
            object.__setattr__(self, name, g)
        if self.cutoff_db <= 0 or self.ue_margin <= 0 or self.candidates < 1:
            raise ValueError("cutoff, margin and candidate count must be positive")

    @property
    def network(self) -> NetworkParams:
        """Parameters with the user cap implied by the scheme."""
        if self.scheme in ("SU", "SM") and self.params.u_max != 1:
            return self.params.with_(u_max=1)
        return self.params


@dataclass(frozen=True)
class TrialResult:
    """Outcome of one trial for the typical user.

    ``sinr_linear`` holds one value for MU and SU and one per stream for SM.
    ``zf_intact`` is set in virtual mode: no co-scheduled beam collides
    with the typical user's served beam.
    """

    scheme: str
    sinr_linear: np.ndarray
    per_user_rate_bps: float
    sum_rate_bps: float
    load: int
    scheduled: int
    rank_deficient: bool = False
    resamples: int = 0
    serving_los: bool = False
    zf_intact: bool | None = None


def trial_rng(seed: int, index: int) -> np.random.Generator:
    """Counter-based generator for one trial, independent of trial order."""
    return np.random.Generator(np.random.Philox(key=[int(seed) & (2 ** 64 - 1), int(index)]))


class _Trial:
    """State of one trial; channels and precoders are built on demand."""

    def __init__(self, plan: ExperimentPlan, rng: np.random.Generator, real):
        self.plan = plan
        self.p = plan.network
        self.rng = rng
        self.real = real
        self.noise = self.p.noise_power
        self._links = {}
        self._precoders = {}

    # channels -----------------------------------------------------------
    def _channel(self, is_los, pl_db):
        p = self.p
        eta = p.eta(bool(is_los))
        g = (self.rng.standard_normal(eta) + 1j * self.rng.standard_normal(eta)) / math.sqrt(2.0)
        mode = self.plan.channel_mode
        aoa, ia = draw_angles(eta, p.n_ue, mode, self.rng)
        aod, id_ = draw_angles(eta, p.n_bs, mode, self.rng)
        return SparseChannel(g, aoa, aod, 10.0 ** (pl_db / 10.0), p.n_bs, p.n_ue, mode, ia, id_)

    def link(self, bs, ue):
        """Channel from ``bs`` to ``ue``, drawn once per trial."""
        key = (bs, ue)
        if key not in self._links:
            los, pl = self.link_state(bs, ue)
            self._links[key] = self._channel(los, pl)
        return self._links[key]

    def link_state(self, bs, ue):
        r = self.real
        if ue == 0:
            t = r.typical_links
            return bool(t["is_los"][bs]), float(t["path_loss_db"][bs])
        if r.association[ue] == bs:
            return bool(r.serving_los[ue]), float(r.serving_path_loss_db[ue])
        return self._cross_states(ue)[0][bs], self._cross_states(ue)[1][bs]

    def _cross_states(self, ue):
        """Link states from every BS to a non-typical UE.

        Candidate links reuse the association draw. The others are drawn
        conditioned on not beating the serving link.
        """
        key = ("cross", ue)
        if key in self._links:
            return self._links[key]
        r = self.real
        d = np.hypot(*(r.bs_positions - r.ue_positions[ue]).T)
        _, los, _, pl = draw_link_states(d, self.p, self.rng)
        floor = r.serving_path_loss_db[ue]
        bad = pl < floor
        for _ in range(50):
            if not bad.any():
                break
            _, l2, _, p2 = draw_link_states(d[bad], self.p, self.rng)
            los[bad], pl[bad] = l2, p2
            bad = pl < floor
        pl[bad] = floor
        c = r.candidates
        row = np.searchsorted(c["ue"], ue)
        if row < c["ue"].size and c["ue"][row] == ue:
            los[c["index"][row]] = c["is_los"][row]
            pl[c["index"][row]] = c["path_loss_db"][row]
        self._links[key] = (los, pl)
        return los, pl

    # precoders ------------------------------------------------------------
    def precoder(self, bs):
        """Transmit design of ``bs`` for its scheduled users."""
        if bs in self._precoders:
            return self._precoders[bs]
        users = self.real.scheduled_at(bs)
        if users.size == 0:
            self._precoders[bs] = None
            return None
        chans = [self.link(bs, int(u)) for u in users]
        if self.plan.scheme == "SM":
            ch = chans[0]
            design = design_sm(ch, min(self.p.n_s, ch.eta))
        else:
            pairs = [best_beam_pair(ch) for ch in chans]
            design = design_mu_zf(chans, pairs)
        self._precoders[bs] = (users, chans, design)
        return self._precoders[bs]

    def interferers(self, ue, serving_bs):
        r = self.real
        if ue == 0:
            pl = r.typical_links["path_loss_db"]
        else:
            pl = self._cross_states(ue)[1]
        limit = pl[serving_bs] + self.plan.cutoff_db
        cand = np.flatnonzero((pl <= limit) & (r.load > 0))
        return cand[cand != serving_bs]

    def _draw_paths(self, is_los, shape):
        """Padded gains and angles; entries beyond each path count are zero."""
        p = self.p
        e = max(p.eta_los, p.eta_nlos)
        eta = np.where(is_los, p.eta_los, p.eta_nlos)
        full = shape + (e,)
        g = (self.rng.standard_normal(full) + 1j * self.rng.standard_normal(full)) / math.sqrt(2.0)
        g = np.where(np.arange(e) < eta[..., None], g, 0.0)
        mode = self.plan.channel_mode
        aoa, _ = draw_angles(full, p.n_ue, mode, self.rng)
        aod, _ = draw_angles(full, p.n_bs, mode, self.rng)
        return g, aoa, aod, eta

    def _zf_batch(self, bss):
        """ZF precoders of interfering BSs, computed together and cached."""
        todo = [int(b) for b in bss if int(b) not in self._precoders]
        if not todo:
            return
        p = self.p
        r = self.real
        if not hasattr(self, "_sched"):
            self._sched = r.scheduled
        U = p.u_max
        users = np.zeros((len(todo), U), dtype=np.int64)
        present = np.zeros((len(todo), U), dtype=bool)
        for i, b in enumerate(todo):
            us = self._sched.get(b, ())
            users[i, :len(us)] = us
            present[i, :len(us)] = True
        los = r.serving_los[users]
        g, aoa, aod, eta = self._draw_paths(los, users.shape)
        g = np.where(present[..., None], g, 0.0)
        pl = 10.0 ** (np.where(present, r.serving_path_loss_db[users], 0.0) / 10.0)
        pref = np.sqrt(p.n_bs * p.n_ue / (pl * eta))
        rf, _, bb = design_mu_zf_batch(g, aoa, aod, pref, p.n_bs, p.n_ue,
                                       self.plan.channel_mode == VIRTUAL)
        counts = present.sum(axis=1)
        for i, b in enumerate(todo):
            self._precoders[b] = ("batch", rf[i], bb[i], int(counts[i]))

    def oci_matrix(self, ue, serving_bs, w_angles, w_bb=None):
        """Interference covariance after the combiner, in watts."""
        w_angles = np.atleast_1d(np.asarray(w_angles, dtype=float))
        n = len(w_angles) if w_bb is None else w_bb.shape[1]
        ys = self.interferers(ue, serving_bs)
        cov = np.zeros((n, n), dtype=complex)
        if ys.size == 0:
            return cov
        if self.plan.scheme == "SM":
            for y in ys:
                _, _, design = self.precoder(int(y))
                ch = self.link(int(y), ue)
                m = ch.response(w_angles[:, None], design.rf_angles[None, :]) @ design.bb_precoder
                if w_bb is not None:
                    m = w_bb.conj().T @ m
                k = design.bb_precoder.shape[1]
                cov += (self.p.p_tx / k) * (m @ m.conj().T)
            return cov
        p = self.p
        self._zf_batch(ys)
        rf = np.array([self._precoders[int(y)][1] for y in ys])
        bb = np.array([self._precoders[int(y)][2] for y in ys])
        cnt = np.array([self._precoders[int(y)][3] for y in ys])
        if ue == 0:
            t = self.real.typical_links
            los, pl = t["is_los"][ys], t["path_loss_db"][ys]
        else:
            los, pl = (a[ys] for a in self._cross_states(ue))
        g, aoa, aod, eta = self._draw_paths(los, ys.shape)
        pref = np.sqrt(p.n_bs * p.n_ue / (10.0 ** (pl / 10.0) * eta))
        su = steering_inner(aoa[:, None, :] - w_angles[None, :, None], p.n_ue)
        sb = steering_inner(rf[:, :, None] - aod[:, None, :], p.n_bs)
        m = pref[:, None, None] * np.einsum("bi,bki,bvi->bkv", g, su, sb)
        m = m @ bb
        if w_bb is not None:
            m = np.einsum("kj,bkv->bjv", w_bb.conj(), m)
        scale = p.p_tx / np.maximum(cnt, 1)
        return np.einsum("b,bkv,bjv->kj", scale, m, m.conj())


def _mu_user_sinr(trial, design, chans, users, i, bs):
    p = trial.p
    U = len(users)
    row = chans[i].response(design.combiner_angles[i], design.rf_angles) @ design.bb_precoder
    power = p.p_tx / U * np.abs(row) ** 2
    signal = power[i]
    mui = power.sum() - signal
    oci = 0.0
    if trial.plan.interference:
        oci = float(np.real(trial.oci_matrix(int(users[i]), bs, [design.combiner_angles[i]])[0, 0]))
    return signal / (trial.noise + mui + oci)


def _gram(angles, n):
    a = np.asarray(angles, dtype=float)
    return steering_inner(a[None, :] - a[:, None], n)


def _zf_intact(design, chans):
    """Virtual-mode check that the typical user's served beam is untouched."""
    ch0 = chans[0]
    i0 = int(np.argmax(np.abs(ch0.gains)))
    rx0, tx0 = ch0.aoa_index[i0], ch0.aod_index[i0]
    for j in range(ch0.eta):
        if j != i0 and ch0.aoa_index[j] == rx0 and ch0.aod_index[j] == tx0:
            return False
    for ch in chans[1:]:
        k = int(np.argmax(np.abs(ch.gains)))
        # another user's path into the typical user's BS beam through its RX beam
        if np.any((ch.aoa_index == ch.aoa_index[k]) & (ch.aod_index == tx0)):
            return False
        # a typical-user path through its RX beam into another user's BS beam
        if np.any((ch0.aoa_index == rx0) & (ch0.aod_index == ch.aod_index[k])):
            return False
    return True


def _sample(plan, rng):
    p = plan.network
    resamples = 0
    while True:
        real = sample_realization(p, rng)
        if real.n_bs > 0:
            break
        resamples += 1
        if resamples > plan.max_resamples:
            raise RuntimeError("no base station after repeated resampling")
    tagged = int(np.argmin(real.typical_links["path_loss_db"]))
    relevant = None if plan.interference else [tagged]
    real = associate(real, p, rng, plan.candidates, relevant, plan.ue_margin)
    return real, resamples


def run_trial(plan: ExperimentPlan, trial_index: int) -> TrialResult:
    """One independent network realization evaluated for the typical user."""
    rng = trial_rng(plan.seed, trial_index)
    real, resamples = _sample(plan, rng)
    trial = _Trial(plan, rng, real)
    p = trial.p
    bs = real.tagged_bs
    n_x = int(real.load[bs])
    users, chans, design = trial.precoder(bs)
    wb = p.omega * p.bandwidth
    if plan.scheme == "SM":
        ns = design.bb_precoder.shape[1]
        ch = chans[0]
        h = ch.response(design.combiner_angles[:, None], design.rf_angles[None, :])
        he = design.ue_combiner_bb.conj().T @ h @ design.bb_precoder
        w_gram = design.ue_combiner_bb.conj().T @ _gram(design.combiner_angles, p.n_ue) \
            @ design.ue_combiner_bb
        rn = trial.noise * w_gram
        if plan.interference:
            rn = rn + trial.oci_matrix(0, bs, design.combiner_angles, design.ue_combiner_bb)
        power = p.p_tx / ns * np.abs(he) ** 2
        sig = np.diag(power)
        sinr = sig / (np.real(np.diag(rn)) + power.sum(axis=1) - sig)
        m = np.eye(ns) + (p.p_tx / ns) * np.linalg.solve(rn, he @ he.conj().T)
        r = float(np.linalg.slogdet(m)[1] / math.log(2.0))
        return TrialResult("SM", sinr, wb * r / n_x, wb * r, n_x, 1, False, resamples,
                           bool(real.serving_los[0]))
    U = len(users)
    sinrs = np.array([_mu_user_sinr(trial, design, chans, users, i, bs) for i in range(U)])
    se = np.log2(1.0 + sinrs)
    intact = _zf_intact(design, chans) if plan.channel_mode == VIRTUAL else None
    return TrialResult(plan.scheme, sinrs[:1], U / n_x * wb * float(se[0]), wb * float(se.sum()),
                       n_x, U, bool(design.rank_deficient), resamples,
                       bool(real.serving_los[0]), intact)


def _run_chunk(args):
    plan, start, stop = args
    return [run_trial(plan, i) for i in range(start, stop)]


def run_trials(plan: ExperimentPlan, workers: int | None = None):
    """All trials of a plan, in trial order."""
    workers = default_workers() if workers is None else workers
    if workers <= 1 or plan.trials < 2 * workers:
        return [run_trial(plan, i) for i in range(plan.trials)]
    from concurrent.futures import ProcessPoolExecutor

    edges = np.linspace(0, plan.trials, 4 * workers + 1).astype(int)
    jobs = [(plan, int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]
    with ProcessPoolExecutor(workers) as pool:
        return [r for chunk in pool.map(_run_chunk, jobs) for r in chunk]


@dataclass(frozen=True)
class ExperimentResult:
    """Samples and curves of one experiment."""

    plan: ExperimentPlan
    sinr_db: np.ndarray
    streams: np.ndarray
    per_user_rate: np.ndarray
    sum_rate: np.ndarray
    sinr: CoverageCurve
    per_user: CoverageCurve
    sum: CoverageCurve
    meta: dict

    @property
    def curves(self) -> dict:
        return {"sinr": self.sinr, "rate": self.per_user, "sumrate": self.sum}

    def normalized_snr_curve(self, grid=None) -> CoverageCurve:
        """CCDF of the SINR per unit stream power, divided by the array gain.

        Each sample is multiplied by the number of streams its BS sent in
        that slot, which removes the equal power split. MU-MIMO and SM then
        compare on channel quality alone.
        """
        grid = self.plan.threshold_grid if grid is None else np.asarray(grid, float)
        g_db = 10.0 * np.log10(self.plan.network.array_gain / self.plan.network.noise_power)
        x = self.sinr_db + 10.0 * np.log10(self.streams) - g_db
        return _curve(x, grid, dict(self.meta, metric="normalized_snr_db", threshold_unit="dB"))


def _curve(samples, grid, meta, level=0.95):
    ccdf = EmpiricalCCDF.from_samples(samples)
    k = np.array([ccdf.count_above(t) for t in grid])
    lo, hi = binomial_ci(k, ccdf.n, level)
    return CoverageCurve(grid, k / ccdf.n, meta, np.asarray(lo), np.asarray(hi))


def run_experiment(plan: ExperimentPlan, workers: int | None = None) -> ExperimentResult:
    """Run all trials and aggregate the empirical CCDFs with 95% CIs.

    For SM the SINR curve pools the per-stream values.
    """
    results = run_trials(plan, workers)
    with np.errstate(divide="ignore"):
        sinr_db = 10.0 * np.log10(np.concatenate([r.sinr_linear for r in results]))
    streams = np.concatenate([np.full(len(r.sinr_linear), len(r.sinr_linear) if r.scheme == "SM"
                                      else r.scheduled) for r in results])
    pur = np.array([r.per_user_rate_bps for r in results])
    sr = np.array([r.sum_rate_bps for r in results])
    meta = dict(engine="simulation", scheme=plan.scheme, params_digest=plan.network.digest(),
                trials=plan.trials, seed=plan.seed, interference=plan.interference,
                channel_mode=plan.channel_mode,
                rank_deficient=int(sum(r.rank_deficient for r in results)),
                resamples=int(sum(r.resamples for r in results)))
    zf = [r.zf_intact for r in results if r.zf_intact is not None]
    if zf:
        meta["zf_intact_fraction"] = float(np.mean(zf))
    return ExperimentResult(
        plan, sinr_db, streams, pur, sr,
        _curve(sinr_db, plan.threshold_grid, dict(meta, metric="sinr_db", threshold_unit="dB")),
        _curve(pur, plan.rate_grid, dict(meta, metric="per_user_rate_bps", threshold_unit="bps")),
        _curve(sr, plan.rate_grid, dict(meta, metric="sum_rate_bps", threshold_unit="bps")),
        meta,
    )


def with_plan(plan: ExperimentPlan, **changes) -> ExperimentPlan:
    return replace(plan, **changes)
