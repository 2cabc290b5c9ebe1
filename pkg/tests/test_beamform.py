import math

import numpy as np
import pytest

from mmwcov.beamform import (best_beam_pair, design_mu_zf, design_mu_zf_batch, design_sm,
                             effective_channel, sidelobe_inner_product, sm_spectral_efficiency,
                             svd_spectral_efficiency)
from mmwcov.channel import (PHYSICAL, VIRTUAL, SparseChannel, array_response,
                            materialize_matrix, steering_inner, synthesize_channel,
                            virtual_grid)
from mmwcov.netgeom import LinkState, NetworkParams


def virtual_channel(gains, aoa_idx, aod_idx, nb=64, nu=16, loss=1e10):
    aoa_idx, aod_idx = np.asarray(aoa_idx), np.asarray(aod_idx)
    return SparseChannel(np.asarray(gains, complex), virtual_grid(nu)[aoa_idx - 1],
                         virtual_grid(nb)[aod_idx - 1], loss, nb, nu, VIRTUAL, aoa_idx, aod_idx)


def physical_channels(k, nb=64, nu=16, eta=3, seed=0):
    p = NetworkParams(n_bs=nb, n_ue=nu, eta_nlos=eta)
    rng = np.random.default_rng(seed)
    return [synthesize_channel(LinkState(80.0, False, 0.0, 100.0 + 5 * i), p, PHYSICAL, rng)
            for i in range(k)]


def residual_and_norms(design, channels):
    f = design.composite_columns()
    rows = np.array([array_response(a, ch.n_ue).conj() @ materialize_matrix(ch)
                     for ch, a in zip(channels, design.combiner_angles)])
    g = np.abs(rows @ f) ** 2
    off = g - np.diag(np.diag(g))
    rel = off.max() / np.diag(g).max()
    return rel, np.linalg.norm(f, axis=0)


def test_single_path_pair():
    ch = virtual_channel([0.5 + 0.5j], [3], [7])
    pair = best_beam_pair(ch)
    assert (pair.aoa, pair.aod) == (ch.aoa[0], ch.aod[0])


def test_strongest_virtual_path_wins():
    ch = virtual_channel([0.3, 1.7, 0.9], [1, 5, 9], [2, 6, 30])
    pair = best_beam_pair(ch)
    assert (pair.aoa, pair.aod) == (ch.aoa[1], ch.aod[1])


def test_best_pair_approaches_top_singular_value():
    ratios = []
    for nb, nu in ((32, 8), (64, 16), (256, 64)):
        r = []
        for ch in physical_channels(40, nb, nu, seed=nb):
            s = np.linalg.svd(materialize_matrix(ch), compute_uv=False)[0]
            r.append(abs(best_beam_pair(ch).gain) / s)
        ratios.append(np.mean(r))
    assert ratios[0] < ratios[1] < ratios[2] <= 1.0
    assert ratios[2] > 0.97


def test_single_user_zf_is_beamsteering():
    g = np.array([0.8 - 0.6j])
    ch = virtual_channel(g, [4], [10])
    d = design_mu_zf([ch])
    assert d.bb_precoder.shape == (1, 1)
    assert abs(d.bb_precoder[0, 0]) == pytest.approx(1.0)
    gain = abs(ch.response(d.combiner_angles[0], d.rf_angles) @ d.bb_precoder[:, 0]) ** 2
    assert gain == pytest.approx(64 * 16 * abs(g[0]) ** 2 / 1e10, rel=1e-12)


def test_virtual_zf_cancels_co_user():
    chans = [virtual_channel([1.1, 0.2], [3, 8], [5, 20]),
             virtual_channel([0.9j, 0.1], [6, 12], [40, 50])]
    d = design_mu_zf(chans)
    rel, norms = residual_and_norms(d, chans)
    assert rel < 1e-9
    assert not d.rank_deficient


def test_colliding_beams_flag_rank_deficiency():
    chans = [virtual_channel([1.0], [3], [9]), virtual_channel([1.0], [3], [9])]
    d = design_mu_zf(chans)
    assert d.rank_deficient
    h = effective_channel(chans, [best_beam_pair(c) for c in chans]).matrix
    served = np.abs(np.diag(h @ d.bb_precoder)) ** 2
    full = abs(chans[0].response(chans[0].aoa[0], chans[0].aod[0])) ** 2
    assert served.max() < 1e-6 * full


@pytest.mark.parametrize("users", [2, 3, 4])
def test_physical_zf_residual_and_unit_columns(users):
    for seed in range(10):
        chans = physical_channels(users, seed=seed)
        d = design_mu_zf(chans)
        rel, norms = residual_and_norms(d, chans)
        assert rel < 1e-8
        assert np.allclose(norms, 1.0, atol=1e-10)


def test_batch_design_matches_single():
    rng = np.random.default_rng(9)
    B, U, E, nb, nu = 6, 3, 3, 64, 16
    g = (rng.standard_normal((B, U, E)) + 1j * rng.standard_normal((B, U, E))) / math.sqrt(2)
    g[1, 2] = 0.0          # BS 1 serves two users
    g[3, :, 1:] = 0.0      # single-path users
    aoa = math.pi * np.sin(rng.uniform(0, 2 * math.pi, (B, U, E)))
    aod = math.pi * np.sin(rng.uniform(0, 2 * math.pi, (B, U, E)))
    loss = 10 ** rng.uniform(9, 12, (B, U))
    eta = (g != 0).sum(axis=2)
    pref = np.sqrt(nb * nu / (loss * np.maximum(eta, 1)))
    rf, comb, bb = design_mu_zf_batch(g, aoa, aod, pref, nb, nu)
    for b in range(B):
        active = [u for u in range(U) if eta[b, u] > 0]
        chans = [SparseChannel(g[b, u, :eta[b, u]], aoa[b, u, :eta[b, u]], aod[b, u, :eta[b, u]],
                               loss[b, u], nb, nu) for u in active]
        ref = design_mu_zf(chans)
        k = len(active)
        assert np.allclose(rf[b, :k], ref.rf_angles)
        mine = array_response(rf[b, :k], nb) @ bb[b, :k, :k]
        assert np.allclose(mine, ref.composite_columns(), atol=1e-12)
        assert np.all(bb[b, k:] == 0) and np.all(bb[b, :, k:] == 0)


def test_sm_degenerates_to_beamsteering():
    ch = virtual_channel([0.7 + 0.2j], [5], [11])
    sm, su = design_sm(ch, 1), design_mu_zf([ch])
    assert np.allclose(np.abs(sm.composite_columns()), np.abs(su.composite_columns()))
    assert sm.stream_gains[0] == pytest.approx(abs(su.bb_precoder[0, 0]) ** 2 * 64 * 16 *
                                               abs(ch.gains[0]) ** 2 / 1e10, rel=1e-10)


def test_sm_streams_follow_gain_order():
    g = np.array([0.5, 1.4j, -0.9])
    ch = virtual_channel(g, [2, 7, 13], [4, 25, 50])
    d = design_sm(ch, 2)
    top = np.sort(np.abs(g) ** 2)[::-1][:2]
    assert np.allclose(d.stream_gains, 64 * 16 * top / (1e10 * 3), rtol=1e-10)


def test_sm_rate_below_unconstrained_svd():
    for nb, nu in ((64, 16), (256, 64)):
        for ch in physical_channels(20, nb, nu, seed=3):
            snr = 1e10 * 10 ** 7
            d = design_sm(ch, 2)
            w = d.ue_combiner_rf @ d.ue_combiner_bb
            h_e = d.ue_combiner_bb.conj().T @ ch.response(d.combiner_angles[:, None],
                                                           d.rf_angles[None, :])
            r = sm_spectral_efficiency(h_e, d.bb_precoder, w.conj().T @ w, snr / 1e10 * 1e10, 2)
            assert r <= svd_spectral_efficiency(ch, 2, snr) + 1e-9


def test_sm_close_to_svd_with_large_arrays():
    rel = []
    for ch in physical_channels(200, 256, 64, seed=4):
        loss = ch.path_loss_linear
        snr = 10.0 * loss / (256 * 64)        # 10 dB per-link SNR scale
        d = design_sm(ch, min(2, ch.eta))
        w = d.ue_combiner_rf @ d.ue_combiner_bb
        h_e = d.ue_combiner_bb.conj().T @ ch.response(d.combiner_angles[:, None],
                                                       d.rf_angles[None, :])
        r = sm_spectral_efficiency(h_e, d.bb_precoder, w.conj().T @ w, snr, d.rf_angles.size)
        rel.append(r / svd_spectral_efficiency(ch, d.rf_angles.size, snr))
    rel = np.array(rel)
    assert np.all(rel <= 1 + 1e-9)
    assert np.median(rel) > 0.95


def test_sm_reduces_streams_to_path_count():
    ch = virtual_channel([1.0], [2], [3])
    with pytest.warns(UserWarning):
        d = design_sm(ch, 3)
    assert d.bb_precoder.shape[1] == 1


def test_sidelobe_inner_product():
    assert sidelobe_inner_product(4, 4, 0.2) == 1.0
    assert sidelobe_inner_product(4, 5, 0.0) == 0.0
    assert sidelobe_inner_product(4, 5, 0.0647) == 0.0647
    with pytest.raises(ValueError):
        sidelobe_inner_product(1, 2, 1.0)


def test_batch_design_zeroes_colliding_users():
    nb, nu = 64, 16
    th_b, th_u = virtual_grid(nb), virtual_grid(nu)
    g = np.array([[[1.0, 0.0], [0.5, 0.0], [0.8, 0.3]]], complex)
    aoa = np.array([[[th_u[2], 0], [th_u[2], 0], [th_u[7], th_u[9]]]])
    aod = np.array([[[th_b[8], 0], [th_b[8], 0], [th_b[30], th_b[40]]]])
    _, _, bb = design_mu_zf_batch(g, aoa, aod, np.ones((1, 3)), nb, nu, virtual=True)
    norms = np.linalg.norm(bb[0], axis=0)
    assert norms[0] == 0 and norms[1] == 0 and norms[2] > 0
