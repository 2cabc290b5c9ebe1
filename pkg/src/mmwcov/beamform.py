"""Precoder and combiner design for SU-BF, MU-MIMO with ZF, and SM."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .channel import (VIRTUAL, SparseChannel, array_response, materialize_matrix,
                      steering_inner)

__all__ = [
    "BeamPair",
    "HybridLink",
    "EffectiveChannel",
    "best_beam_pair",
    "effective_channel",
    "design_mu_zf",
    "design_mu_zf_batch",
    "zf_columns",
    "design_sm",
    "sm_spectral_efficiency",
    "svd_spectral_efficiency",
    "sidelobe_inner_product",
    "RANK_TOL",
]

RANK_TOL = 1e-8


@dataclass(frozen=True)
class BeamPair:
    aoa: float
    aod: float
    gain: complex


@dataclass(frozen=True)
class HybridLink:
    """Hybrid precoder and combiners of one BS transmission.

    ``rf_angles`` and ``combiner_angles`` are the steering angles behind
    ``rf_precoder_cols`` and ``ue_combiner_rf``. ``rank_deficient`` marks a
    baseband inverse taken on a reduced numerical rank.
    """

    rf_precoder_cols: np.ndarray
    bb_precoder: np.ndarray
    ue_combiner_rf: np.ndarray
    lambda_norm: np.ndarray
    rf_angles: np.ndarray
    combiner_angles: np.ndarray
    ue_combiner_bb: np.ndarray | None = None
    rank_deficient: bool = False
    stream_gains: np.ndarray | None = field(default=None, repr=False)

    def composite_columns(self) -> np.ndarray:
        return self.rf_precoder_cols @ self.bb_precoder


@dataclass(frozen=True)
class EffectiveChannel:
    matrix: np.ndarray


def best_beam_pair(ch: SparseChannel) -> BeamPair:
    """Steering pair maximising ``|w^* H f|`` for one link.

    In virtual mode the steering vectors of distinct grid angles are
    orthogonal and the strongest path wins outright. In physical mode all
    pairs of path angles are searched, which is exact in the large array
    limit and avoids a finite codebook.
    """
    if ch.mode == VIRTUAL:
        i = int(np.argmax(np.abs(ch.gains)))
        return BeamPair(float(ch.aoa[i]), float(ch.aod[i]),
                        complex(ch.response(ch.aoa[i], ch.aod[i])))
    r = ch.response(ch.aoa[:, None], ch.aod[None, :])
    a, d = np.unravel_index(int(np.argmax(np.abs(r))), r.shape)
    return BeamPair(float(ch.aoa[a]), float(ch.aod[d]), complex(r[a, d]))


def effective_channel(channels, pairs) -> EffectiveChannel:
    """Rows ``w_u^* H_u F_RF`` for the scheduled users."""
    f = np.array([p.aod for p in pairs])
    rows = [ch.response(p.aoa, f) for ch, p in zip(channels, pairs)]
    return EffectiveChannel(np.array(rows))


def zf_columns(h_bar: np.ndarray, n_bs: int, rf_angles: np.ndarray):
    """ZF baseband precoder normalised so that ``||F_RF f_u|| = 1``.

    The pseudo-inverse is taken on the numerical rank of ``h_bar`` with
    singular values below ``RANK_TOL`` times the largest discarded. Users
    whose rows lie in the span of the others cannot be nulled and get a
    zero column, which is the limit of ZF as their rows become colinear.

    Returns
    -------
    bb : ndarray
        Baseband precoder, one column per user.
    lam : ndarray
        Diagonal of the normalisation.
    deficient : bool
        Whether the effective channel was rank deficient.
    """
    s = np.linalg.svd(h_bar, compute_uv=False)
    deficient = bool(s[-1] <= RANK_TOL * s[0]) if s[0] > 0 else True
    pinv = _zf_pinv(h_bar)
    # Gram matrix of the RF columns, closed form of steering inner products
    gram = _steering_gram(rf_angles, n_bs)
    norms = np.sqrt(np.maximum(np.real(np.einsum("iu,ij,ju->u", pinv.conj(), gram, pinv)), 0.0))
    lam = np.where(norms > 0, 1.0 / np.where(norms > 0, norms, 1.0), 0.0)
    return pinv * lam, lam, deficient


def _zf_pinv(h_bar):
    """Pseudo-inverse with zero columns for linearly dependent rows.

    Row ``u`` depends on the others exactly when the projector onto the
    left null space, ``I - H H^+``, has a nonzero ``(u, u)`` entry.
    """
    pinv = np.linalg.pinv(h_bar, rcond=RANK_TOL)
    eye = np.eye(h_bar.shape[-1])
    dependent = np.real(np.diagonal(eye - h_bar @ pinv, axis1=-2, axis2=-1)) > 1e-6
    dependent &= np.any(h_bar != 0, axis=-1)
    if dependent.any():
        pinv = np.linalg.pinv(np.where(dependent[..., :, None], 0.0, h_bar), rcond=RANK_TOL)
        pinv = np.where(dependent[..., None, :], 0.0, pinv)
    return pinv


def _steering_gram(angles, n):
    a = np.asarray(angles, dtype=float)
    return steering_inner(a[None, :] - a[:, None], n)


def design_mu_zf(channels, pairs=None) -> HybridLink:
    """Analog beamsteering on each user's best pair plus ZF baseband.

    Parameters
    ----------
    channels : sequence of SparseChannel
        Channels of the scheduled users, all from the same BS.
    pairs : sequence of BeamPair, optional
        Precomputed beam pairs; computed with :func:`best_beam_pair` if
        omitted.
    """
    if len(channels) < 1:
        raise ValueError("at least one scheduled user is required")
    if pairs is None:
        pairs = [best_beam_pair(ch) for ch in channels]
    n_bs = channels[0].n_bs
    n_ue = channels[0].n_ue
    rf = np.array([p.aod for p in pairs])
    comb = np.array([p.aoa for p in pairs])
    h_bar = effective_channel(channels, pairs).matrix
    bb, lam, deficient = zf_columns(h_bar, n_bs, rf)
    return HybridLink(array_response(rf, n_bs), bb, array_response(comb, n_ue), lam,
                      rf, comb, rank_deficient=deficient)


def design_mu_zf_batch(gains, aoa, aod, prefactor, n_bs: int, n_ue: int,
                       virtual: bool = False):
    """:func:`design_mu_zf` for many BSs at once.

    Inputs are padded to a common user count ``U`` and path count ``E``;
    padding paths and absent users carry zero gain. Absent users get zero
    precoder columns.

    Parameters
    ----------
    gains, aoa, aod : ndarray, shape (B, U, E)
    prefactor : ndarray, shape (B, U)
        Channel normalisation per user.

    Returns
    -------
    rf_angles, combiner_angles : ndarray, shape (B, U)
    bb : ndarray, shape (B, U, U)
        Baseband precoders with unit-norm composite columns.
    """
    gains = np.asarray(gains, dtype=complex)
    valid = gains != 0
    active = valid.any(axis=2)
    if virtual:
        best = np.argmax(np.abs(gains), axis=2)
        a_idx = d_idx = best
    else:
        # r[b,u,a,d] = sum_i g_i s_UE(aoa_i - aoa_a) s_BS(aod_d - aod_i)
        su = steering_inner(aoa[:, :, None, :] - aoa[:, :, :, None], n_ue)
        sb = steering_inner(aod[:, :, :, None] - aod[:, :, None, :], n_bs)
        r = np.einsum("bui,buai,budi->buad", gains, su, sb)
        score = np.where(valid[:, :, :, None] & valid[:, :, None, :], np.abs(r), -1.0)
        e = gains.shape[2]
        flat = np.argmax(score.reshape(score.shape[0], score.shape[1], -1), axis=2)
        a_idx, d_idx = flat // e, flat % e
    comb = np.take_along_axis(aoa, a_idx[..., None], 2)[..., 0]
    rf = np.take_along_axis(aod, d_idx[..., None], 2)[..., 0]
    comb = np.where(active, comb, 0.0)
    rf = np.where(active, rf, 0.0)
    # h_bar[b,u,v] = w_u^* H_u a(rf_v)
    su = steering_inner(aoa - comb[:, :, None], n_ue)
    sb = steering_inner(rf[:, None, :, None] - aod[:, :, None, :], n_bs)
    h_bar = prefactor[:, :, None] * np.einsum("bui,bui,buvi->buv", gains, su, sb)
    mask = active[:, :, None] & active[:, None, :]
    h_bar = np.where(mask, h_bar, 0.0)
    pinv = _zf_pinv(h_bar)
    gram = steering_inner(rf[:, None, :] - rf[:, :, None], n_bs)
    norms = np.sqrt(np.maximum(np.real(np.einsum("biu,bij,bju->bu", pinv.conj(), gram, pinv)), 0.0))
    lam = np.where(norms > 0, 1.0 / np.where(norms > 0, norms, 1.0), 0.0)
    return rf, comb, pinv * lam[:, None, :]


def design_sm(ch: SparseChannel, n_s: int) -> HybridLink:
    """Multi-stream hybrid design for a single user.

    Steering vectors on the ``n_s`` strongest paths at both ends, with the
    baseband stages taken from the SVD of the resulting ``n_s x n_s``
    channel. Requests beyond the path count are reduced to ``eta``.
    """
    if n_s < 1:
        raise ValueError("n_s must be at least 1")
    if n_s > ch.eta:
        warnings.warn(f"reducing {n_s} streams to the channel rank bound {ch.eta}", stacklevel=2)
        n_s = ch.eta
    order = np.argsort(-np.abs(ch.gains), kind="stable")[:n_s]
    rf = ch.aod[order]
    comb = ch.aoa[order]
    h_eff = ch.response(comb[:, None], rf[None, :])
    gram_bs = _steering_gram(rf, ch.n_bs)
    gram_ue = _steering_gram(comb, ch.n_ue)
    # whiten both ends so that the SVD acts on orthonormal coordinates
    r_bs = _inv_sqrt_psd(gram_bs)
    r_ue = _inv_sqrt_psd(gram_ue)
    u, s, vh = np.linalg.svd(r_ue @ h_eff @ r_bs)
    bb = r_bs @ vh.conj().T
    wbb = r_ue @ u
    return HybridLink(array_response(rf, ch.n_bs), bb, array_response(comb, ch.n_ue),
                      np.ones(n_s), rf, comb, ue_combiner_bb=wbb, stream_gains=s ** 2)


def _inv_sqrt_psd(g):
    w, v = np.linalg.eigh(g)
    w = np.maximum(w, 1e-12 * max(w.max(), 1e-300))
    return (v / np.sqrt(w)) @ v.conj().T


def sm_spectral_efficiency(h_eff, f_bb, w_total_gram, p_over_noise, n_s,
                           interference_cov=None) -> float:
    """``log2 det(I + (P/N_s) R_n^{-1} H_e H_e^*)`` for combined channel ``H_e``.

    ``w_total_gram`` is ``W^* W`` for the full combiner, which colours the
    noise. ``interference_cov`` is an optional covariance in units of the
    noise power after combining.
    """
    he = h_eff @ f_bb
    rn = w_total_gram.astype(complex)
    if interference_cov is not None:
        rn = rn + interference_cov
    m = np.eye(he.shape[0]) + (p_over_noise / n_s) * np.linalg.solve(rn, he @ he.conj().T)
    sign, logdet = np.linalg.slogdet(m)
    return float(logdet / math.log(2.0))


def svd_spectral_efficiency(ch: SparseChannel, n_s: int, p_over_noise: float) -> float:
    """Unconstrained SVD precoding with equal power on ``n_s`` streams."""
    s = np.linalg.svd(materialize_matrix(ch), compute_uv=False)[:n_s]
    return float(np.sum(np.log2(1.0 + p_over_noise / n_s * s ** 2)))


def sidelobe_inner_product(theta1: int, theta2: int, rho: float) -> float:
    """Virtual inner product magnitude: 1 on a beam match, ``rho`` otherwise."""
    if not 0.0 <= rho < 1.0:
        raise ValueError("rho must lie in [0, 1)")
    return 1.0 if theta1 == theta2 else rho
