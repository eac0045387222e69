import math

import numpy as np
import pytest

from hrislink.channel import (GeometryParams, SystemConfig, action_dim,
                              draw_channel, draw_channels, path_loss,
                              state_dim, steering_vector)


class TestPathLoss:
    def test_reference_distance(self, geo):
        # beta0 = -30 dB at d0 = 1 m, any exponent
        assert path_loss(1.0, 3.5, geo) == pytest.approx(1e-3, rel=1e-12)

    def test_bs_ris_link(self, geo):
        want = 10 ** (-6.7377 / 1.0)  # -30 dB - 2.2 * 10*log10(50) dB
        assert path_loss(50.0, 2.2, geo) == pytest.approx(1.829e-7, rel=1e-3)
        assert path_loss(50.0, 2.2, geo) == pytest.approx(
            1e-3 * 50.0 ** -2.2, rel=1e-12)
        assert want == pytest.approx(1e-3 * 50.0 ** -2.2, rel=1e-4)

    def test_ris_user_link(self, geo):
        d = math.sqrt(29.0)
        assert path_loss(d, 2.0, geo) == pytest.approx(1e-3 / 29.0, rel=1e-12)

    def test_invalid_distance(self, geo):
        with pytest.raises(ValueError):
            path_loss(0.0, 2.0, geo)


class TestGeometry:
    def test_link_distances(self, geo):
        assert geo.dist_bs_ris() == pytest.approx(50.0)
        assert geo.dist_ris_user() == pytest.approx(math.sqrt(29.0))
        assert geo.dist_bs_user() == pytest.approx(math.sqrt(2029.0))

    def test_rejects_coincident_nodes(self):
        with pytest.raises(ValueError):
            GeometryParams(bs_pos=(0.0, 0.0), ris_pos=(0.0, 0.0))


class TestSteeringVector:
    def test_broadside(self):
        np.testing.assert_allclose(steering_vector(4, 0.0), np.ones(4))

    def test_endfire_two_elements(self):
        got = steering_vector(2, math.pi / 2)
        np.testing.assert_allclose(got, [1.0, -1.0], atol=1e-14)

    def test_unit_modulus(self, rng):
        for _ in range(5):
            v = steering_vector(16, rng.uniform(-math.pi, math.pi))
            np.testing.assert_allclose(np.abs(v), 1.0, atol=1e-14)


class TestDrawChannel:
    def test_pure_los_is_rank_one(self, desk_cfg, geo):
        # kappa_r = inf, so the HRIS-user link must be an outer product
        ch = draw_channel(desk_cfg, geo, 7)
        s = np.linalg.svd(ch.h_ris_rx, compute_uv=False)
        assert s[1] < 1e-10 * s[0]

    def test_rayleigh_entry_power(self, desk_cfg, geo):
        # kappa_d = 0: mean |entry|^2 of the direct link ~ beta_d within 5%
        batch = draw_channels(desk_cfg, geo, 99, 10_000)
        beta_d = batch.betas[0]
        mean_power = float(np.mean(np.abs(batch.h_direct) ** 2))
        assert abs(mean_power - beta_d) < 0.05 * beta_d

    def test_all_links_entry_power(self, desk_cfg, geo):
        batch = draw_channels(desk_cfg, geo, 123, 10_000)
        for mat, beta in zip(
                (batch.h_direct, batch.h_tx_ris, batch.h_ris_rx), batch.betas):
            mean_power = float(np.mean(np.abs(mat) ** 2))
            assert abs(mean_power - beta) < 0.05 * beta

    def test_los_unit_modulus_before_scaling(self, desk_cfg, geo):
        # On the pure-LoS link every entry has modulus sqrt(beta_r).
        ch = draw_channel(desk_cfg, geo, 5)
        np.testing.assert_allclose(np.abs(ch.h_ris_rx),
                                   math.sqrt(ch.betas[2]), rtol=1e-12)

    def test_seed_determinism(self, desk_cfg, geo):
        a = draw_channel(desk_cfg, geo, 42)
        b = draw_channel(desk_cfg, geo, 42)
        assert np.array_equal(a.h_direct, b.h_direct)
        assert np.array_equal(a.h_tx_ris, b.h_tx_ris)
        assert np.array_equal(a.h_ris_rx, b.h_ris_rx)

    def test_different_seeds_differ(self, desk_cfg, geo):
        a = draw_channel(desk_cfg, geo, 1)
        b = draw_channel(desk_cfg, geo, 2)
        assert not np.array_equal(a.h_direct, b.h_direct)

    def test_draw_independent_of_active_count(self, geo):
        # Paired evaluation relies on the stream ignoring n_active.
        a = draw_channel(SystemConfig(n_ris=16, n_active=2), geo, 3)
        b = draw_channel(SystemConfig(n_ris=16, n_active=7), geo, 3)
        assert np.array_equal(a.h_tx_ris, b.h_tx_ris)

    def test_shapes(self, desk_cfg, geo):
        ch = draw_channel(desk_cfg, geo, 0)
        assert ch.h_direct.shape == (desk_cfg.n_rx, desk_cfg.n_tx)
        assert ch.h_tx_ris.shape == (desk_cfg.n_ris, desk_cfg.n_tx)
        assert ch.h_ris_rx.shape == (desk_cfg.n_rx, desk_cfg.n_ris)


class TestDims:
    def test_paper_scale_state_dim(self):
        cfg = SystemConfig(n_ris=50, n_active=4)
        assert state_dim(cfg) == 616

    def test_paper_scale_action_dim(self):
        cfg = SystemConfig(n_ris=50, n_active=4)
        assert action_dim(cfg) == 116

    def test_desk_scale_dims(self, desk_cfg):
        assert state_dim(desk_cfg) == 208
        assert action_dim(desk_cfg) == 48


class TestConfigValidation:
    def test_rejects_bad_streams(self):
        with pytest.raises(ValueError):
            SystemConfig(n_streams=3)  # > min(n_tx, n_rx)

    def test_rejects_bad_active(self):
        with pytest.raises(ValueError):
            SystemConfig(n_ris=8, n_active=9)

    def test_rejects_amp_below_one(self):
        with pytest.raises(ValueError):
            SystemConfig(amp_factor=0.5)
