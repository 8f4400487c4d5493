import numpy as np
import pytest

from trilink import coding, phy
from trilink.numerics import RngStream, cgauss
from trilink.phy import (Frame, FrameLayout, QAM16_BITS, QAM16_TABLE,
                         assemble_tx_grid, build_frame, combine, csi_estimate,
                         demod_estimate, demod_pilot_sequence, extract_payload_bits,
                         mmse_combine, propagate, qam16_demap, qam16_hard_bits,
                         qam16_map)


class TestQam16:
    def test_table_anchor(self):
        np.testing.assert_allclose(qam16_map([0, 0, 0, 0]),
                                   [(-3 - 3j) / np.sqrt(10)], rtol=1e-12)

    def test_alphabet_mean_energy_exactly_one(self):
        assert np.mean(np.abs(QAM16_TABLE) ** 2) == pytest.approx(1.0, abs=1e-12)

    def test_gray_property_exhaustive(self):
        # Adjacent constellation points differ in exactly one bit.
        for i in range(16):
            for j in range(16):
                d = abs(QAM16_TABLE[i] - QAM16_TABLE[j])
                if abs(d - 2 / np.sqrt(10)) < 1e-9:
                    assert int((QAM16_BITS[i] ^ QAM16_BITS[j]).sum()) == 1

    def test_length_validation(self):
        with pytest.raises(ValueError):
            qam16_map([0, 1, 0])

    def test_demap_noiseless_round_trip(self, rng_np):
        bits = rng_np.integers(0, 2, 400).astype(np.uint8)
        sym = qam16_map(bits)
        llrs = qam16_demap(sym, 0.1)
        np.testing.assert_array_equal((llrs < 0).astype(np.uint8), bits)

    def test_demap_origin_symmetry(self):
        # At the origin the sign bits (first of each axis pair) are ambiguous.
        llrs = qam16_demap(np.array([0.0 + 0.0j]), 1.0).reshape(4)
        assert llrs[0] == pytest.approx(0.0, abs=1e-12)
        assert llrs[2] == pytest.approx(0.0, abs=1e-12)

    def test_demap_matches_min_distance_at_15db(self):
        # Oracle: max-log hard decisions equal minimum-distance detection.
        rng = np.random.default_rng(3)
        bits = rng.integers(0, 2, 4 * 2000).astype(np.uint8)
        sym = qam16_map(bits)
        snr = 10 ** 1.5
        noisy = sym + cgauss(RngStream(9).child("demap"), sym.shape, 1 / snr)
        llr_bits = (qam16_demap(noisy, 1 / snr) < 0).astype(np.uint8)
        np.testing.assert_array_equal(llr_bits, qam16_hard_bits(noisy))

    def test_demap_rejects_bad_noise_var(self):
        with pytest.raises(ValueError):
            qam16_demap(np.array([1.0 + 0j]), 0.0)


class TestFrameLayout:
    def test_three_streams_is_29_symbols(self):
        assert FrameLayout(3).n_symbols == 29

    def test_one_stream_is_27_symbols(self):
        assert FrameLayout(1).n_symbols == 27

    def test_capacity_is_two_codewords(self):
        assert FrameLayout(3).bits_per_stream == 3040 == 2 * coding.N_CODE

    def test_pilot_slots_disjoint(self):
        layout = FrameLayout(4)
        slots = set(layout.payload_slots())
        demod = {layout.demod_slot(j) for j in range(4)}
        csi = {layout.csi_slot(a) for a in range(6)}
        assert not slots & demod and not slots & csi and not demod & csi
        assert len(slots | demod | csi) == layout.n_symbols


class TestBuildFrame:
    def test_round_trip_bit_order(self, rng_np):
        layout = FrameLayout(2)
        bits = rng_np.integers(0, 2, (2, layout.bits_per_stream)).astype(np.uint8)
        frame = build_frame(bits, layout)
        np.testing.assert_array_equal(extract_payload_bits(frame), bits)

    def test_capacity_mismatch_rejected(self):
        with pytest.raises(ValueError):
            build_frame(np.zeros((2, 100), dtype=np.uint8), FrameLayout(2))

    def test_pilots_unit_magnitude(self):
        layout = FrameLayout(3)
        frame = build_frame(np.zeros((3, 3040), dtype=np.uint8), layout)
        np.testing.assert_allclose(np.abs(frame.demod_pilots), 1.0, rtol=1e-12)
        np.testing.assert_allclose(np.abs(frame.csi_pilots), 1.0, rtol=1e-12)

    def test_demod_pilots_deterministic_per_stream(self):
        a = demod_pilot_sequence(2)
        b = demod_pilot_sequence(2)
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(demod_pilot_sequence(0), demod_pilot_sequence(1))

    def test_tx_grid_time_orthogonal_pilots(self, rng_np):
        layout = FrameLayout(3)
        bits = rng_np.integers(0, 2, (3, 3040)).astype(np.uint8)
        frame = build_frame(bits, layout)
        pre = np.zeros((3, 38, 6), dtype=complex)
        for j in range(3):
            pre[j, :, 2 * j] = 1.0
        x = assemble_tx_grid(frame, pre, csi_amplitude=1.0)
        # during stream j's demod slot only BS j's antenna transmits
        for j in range(3):
            slot = x[:, layout.demod_slot(j), :]
            assert np.abs(slot[2 * j]).min() > 0
            others = np.delete(slot, 2 * j, axis=0)
            assert np.abs(others).max() == 0
        # during CSI slot a only antenna a transmits
        for a in range(6):
            slot = x[:, layout.csi_slot(a), :]
            others = np.delete(slot, a, axis=0)
            assert np.abs(others).max() == 0


class TestCsiEstimate:
    def _observe(self, h, noise_var, rng):
        # one interference-free probe per (antenna, subcarrier)
        pilots = np.stack([phy.csi_pilot_sequence(a) for a in range(6)])
        y = np.empty((6, 38, 2), dtype=complex)
        for a in range(6):
            y[a] = h[:, :, a] * pilots[a][:, None]
        if noise_var:
            y = y + cgauss(rng, y.shape, noise_var)
        return y, pilots

    def test_noiseless_exact(self, rng_np):
        h = rng_np.standard_normal((38, 2, 6)) + 1j * rng_np.standard_normal((38, 2, 6))
        y, pilots = self._observe(h, 0.0, None)
        np.testing.assert_allclose(csi_estimate(y, pilots), h, rtol=1e-12)

    def test_error_variance_oracle(self):
        # LS with |p| = 1 and noise variance 0.01 leaves error variance 0.01.
        h = np.zeros((38, 2, 6), dtype=complex)
        errs = []
        for i in range(250):
            y, pilots = self._observe(h, 0.01, RngStream(31).child("csi", i))
            errs.append(csi_estimate(y, pilots).ravel())
        var = np.mean(np.abs(np.concatenate(errs)) ** 2)
        assert var == pytest.approx(0.01, rel=0.03)

    def test_zero_channel_estimate_is_noise(self):
        h = np.zeros((38, 2, 6), dtype=complex)
        acc = []
        for i in range(50):
            y, pilots = self._observe(h, 0.04, RngStream(32).child("csi0", i))
            acc.append(csi_estimate(y, pilots).ravel())
        assert np.mean(np.abs(np.concatenate(acc)) ** 2) == pytest.approx(0.04, rel=0.03)


class TestDemodEstimate:
    def test_identity_channel_canonical_precoder(self):
        # effective channel of a stream precoded with e1 over identity = column 1
        pilots = np.stack([phy.demod_pilot_sequence(0)])
        obs = pilots[0][:, None] * np.array([1.0, 0.0])[None, :]
        est = demod_estimate(obs[None, :, :], pilots)
        np.testing.assert_allclose(est[0, :, 0], 1.0, rtol=1e-12)
        np.testing.assert_allclose(est[0, :, 1], 0.0, atol=1e-12)

    def test_noiseless_recovers_hv(self, rng_np):
        h = rng_np.standard_normal((38, 2, 6)) + 1j * rng_np.standard_normal((38, 2, 6))
        v = rng_np.standard_normal(6) + 1j * rng_np.standard_normal(6)
        hv = h @ v
        pilots = np.stack([phy.demod_pilot_sequence(0)])
        obs = (hv * pilots[0][:, None])[None, :, :]
        np.testing.assert_allclose(demod_estimate(obs, pilots)[0], hv, rtol=1e-12)

    def test_tx_distortion_propagates_into_estimate(self):
        # Distortion on the pilot lands in the estimate: MSE ~ distortion power.
        from trilink.impairments import ImpairmentConfig, apply_tx_dirty
        cfg = ImpairmentConfig(tx_evm_db=-20.0, phase_enabled=False)
        h = np.eye(2, 6)[None, :, :] * np.ones((38, 1, 1))
        v = np.zeros(6)
        v[0] = 1.0
        pilots = np.stack([phy.demod_pilot_sequence(0)])
        mses = []
        for i in range(400):
            tx = (v[:, None, None] * pilots[0][None, None, :])
            dirty, _ = apply_tx_dirty(tx, cfg, RngStream(44).child("dm", i))
            obs = np.einsum("srt,ats->tsr", h, dirty)[None, 0]
            est = demod_estimate(obs[:, :, :], pilots)
            hv = h @ v
            mses.append(np.mean(np.abs(est[0] - hv) ** 2) / np.mean(np.abs(hv) ** 2))
        assert np.mean(mses) == pytest.approx(10 ** -2.0, rel=0.15)


class TestMmseCombine:
    def test_no_interferer_is_matched_filter(self):
        g = np.zeros((1, 38, 2), dtype=complex)
        g[0, :, 0] = 1.0
        w, resid = mmse_combine(g, 0, noise_var=0.3)
        direction = w / np.linalg.norm(w, axis=1, keepdims=True)
        np.testing.assert_allclose(np.abs(direction[:, 0]), 1.0, rtol=1e-12)
        np.testing.assert_allclose(w[:, 1], 0.0, atol=1e-12)

    def test_orthogonal_interferer_ignored(self):
        g = np.zeros((2, 38, 2), dtype=complex)
        g[0, :, 0] = 1.0
        g[1, :, 1] = 1.0
        w, _ = mmse_combine(g, 0, noise_var=1e-6)
        cross = np.abs(np.einsum("sr,sr->s", w.conj(), g[1]))
        assert cross.max() < 1e-10

    def test_unit_gain_convention(self, rng_np):
        g = rng_np.standard_normal((3, 38, 2)) + 1j * rng_np.standard_normal((3, 38, 2))
        w, _ = mmse_combine(g, 0, noise_var=0.5)
        gain = np.einsum("sr,sr->s", w.conj(), g[0])
        np.testing.assert_allclose(gain, 1.0, rtol=1e-10)

    def test_sinr_beats_random_search(self):
        # Oracle: MMSE maximizes SINR among linear combiners; compare the
        # output SINR against 10^6 random unit-norm combiners.
        rng = np.random.default_rng(17)
        g = rng.standard_normal((3, 1, 2)) + 1j * rng.standard_normal((3, 1, 2))
        noise_var = 0.05

        def sinr_of(w):
            sig = np.abs(w.conj() @ g[0, 0]) ** 2
            intf = sum(np.abs(w.conj() @ g[j, 0]) ** 2 for j in (1, 2))
            return sig / (intf + noise_var * np.vdot(w, w).real)

        w, _ = mmse_combine(g, 0, noise_var)
        ours = sinr_of(w[0])
        z = rng.standard_normal((10**6, 2)) + 1j * rng.standard_normal((10**6, 2))
        z /= np.linalg.norm(z, axis=1, keepdims=True)
        sig = np.abs(z.conj() @ g[0, 0]) ** 2
        intf = np.abs(z.conj() @ g[1, 0]) ** 2 + np.abs(z.conj() @ g[2, 0]) ** 2
        best = (sig / (intf + noise_var)).max()
        assert 10 * np.log10(ours) >= 10 * np.log10(best) - 1e-2

    def test_residual_prediction(self):
        # residual = predicted interference-plus-noise after unit-gain combining
        g = np.zeros((1, 1, 2), dtype=complex)
        g[0, 0, 0] = 2.0
        w, resid = mmse_combine(g, 0, noise_var=0.1)
        # pure matched filter: w = (1/2, 0), output noise = 0.1 * |w|^2 = 0.025
        assert resid[0] == pytest.approx(0.025, rel=1e-6)


class TestEndToEndNoiseless:
    def test_identity_chain_recovers_bits(self, ldpc_code, rng_np):
        # map -> frame -> identity channel -> estimate -> combine -> demap ->
        # decode reproduces the input exactly with everything clean.
        layout = FrameLayout(1)
        info = rng_np.integers(0, 2, 2 * coding.K_INFO).astype(np.uint8)
        coded = np.concatenate([coding.encode(ldpc_code, info[:coding.K_INFO]),
                                coding.encode(ldpc_code, info[coding.K_INFO:])])
        frame = build_frame(coded[None, :], layout)
        pre = np.zeros((1, 38, 6), dtype=complex)
        pre[0, :, 0] = 1.0
        x = assemble_tx_grid(frame, pre, csi_amplitude=1.0)
        h = np.zeros((38, 6, 6), dtype=complex)
        h[:] = np.eye(6)
        y = propagate(x, h)

        rx = y[:, :, 0:2]
        demod_obs = np.stack([rx[layout.demod_slot(0)]])
        g_hat = demod_estimate(demod_obs, frame.demod_pilots)
        np.testing.assert_allclose(g_hat[0, :, 0], 1.0, rtol=1e-12)
        w, resid = mmse_combine(g_hat, 0, noise_var=1e-9)
        out = combine(rx[layout.payload_slots()], w)
        # unit-gain convention: constellation centered on the truth
        assert np.abs(out - frame.payload[0]).max() < 1e-9
        llrs = qam16_demap(out, 1e-9)
        d1, c1, _ = coding.decode(ldpc_code, llrs[:coding.N_CODE])
        d2, c2, _ = coding.decode(ldpc_code, llrs[coding.N_CODE:])
        assert c1 and c2
        np.testing.assert_array_equal(np.concatenate([d1, d2]), info)
