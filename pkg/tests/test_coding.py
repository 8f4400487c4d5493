import numpy as np
import pytest

from trilink import coding
from trilink.coding import (K_INFO, N_CODE, M_CHECKS, VAR_DEGREE,
                            construct_code, decode, encode, has_four_cycle,
                            write_alist)


class TestConstruction:
    def test_rate_exactly_three_quarters(self, ldpc_code):
        assert ldpc_code.k == 1140 and ldpc_code.n == 1520
        assert ldpc_code.rate == 0.75

    def test_deterministic_given_seed(self, ldpc_code):
        construct_code.cache_clear()
        again = construct_code(1)
        np.testing.assert_array_equal(ldpc_code.chk_cols, again.chk_cols)
        np.testing.assert_array_equal(ldpc_code.info_cols, again.info_cols)
        np.testing.assert_array_equal(ldpc_code.encode_mat, again.encode_mat)

    def test_no_four_cycles_exhaustive(self, ldpc_code):
        # Oracle: brute-force scan over all check pairs sharing >= 2 variables.
        assert not has_four_cycle(ldpc_code.chk_cols)

    def test_regular_as_possible(self, ldpc_code):
        degs = ldpc_code.check_degrees()
        assert degs.sum() == N_CODE * VAR_DEGREE
        assert degs.mean() == pytest.approx(12.0)
        assert degs.min() >= 10 and degs.max() <= 14
        var_degs = np.bincount(ldpc_code.var_rows.ravel(), minlength=M_CHECKS)
        assert ldpc_code.var_rows.shape == (N_CODE, VAR_DEGREE)

    def test_parity_matrix_consistent(self, ldpc_code):
        h = ldpc_code.parity_check_matrix()
        assert h.shape == (M_CHECKS, N_CODE)
        assert h.sum() == N_CODE * VAR_DEGREE
        np.testing.assert_array_equal(h.sum(axis=0), np.full(N_CODE, VAR_DEGREE))


class TestEncode:
    def test_all_zero_info_gives_all_zero_codeword(self, ldpc_code):
        cw = encode(ldpc_code, np.zeros(K_INFO, dtype=np.uint8))
        assert not cw.any()

    def test_random_blocks_have_zero_syndrome(self, ldpc_code, rng_np):
        for _ in range(20):
            u = rng_np.integers(0, 2, K_INFO).astype(np.uint8)
            cw = encode(ldpc_code, u)
            assert not ldpc_code.syndrome(cw).any()
            np.testing.assert_array_equal(cw[ldpc_code.info_cols], u)

    def test_linearity(self, ldpc_code, rng_np):
        for _ in range(10):
            a = rng_np.integers(0, 2, K_INFO).astype(np.uint8)
            b = rng_np.integers(0, 2, K_INFO).astype(np.uint8)
            np.testing.assert_array_equal(encode(ldpc_code, a ^ b),
                                          encode(ldpc_code, a) ^ encode(ldpc_code, b))

    def test_wrong_length_rejected(self, ldpc_code):
        with pytest.raises(ValueError):
            encode(ldpc_code, np.zeros(K_INFO - 1, dtype=np.uint8))


class TestDecode:
    def _clean_llrs(self, code, rng, magnitude=20.0):
        u = rng.integers(0, 2, K_INFO).astype(np.uint8)
        cw = encode(code, u)
        return u, cw, np.where(cw == 0, magnitude, -magnitude)

    def test_noiseless_exact_one_iteration(self, ldpc_code, rng_np):
        u, _, llrs = self._clean_llrs(ldpc_code, rng_np)
        info, converged, iters = decode(ldpc_code, llrs)
        assert converged and iters == 1
        np.testing.assert_array_equal(info, u)

    def test_five_sign_flips_recovered(self, ldpc_code, rng_np):
        u, _, llrs = self._clean_llrs(ldpc_code, rng_np)
        flip = rng_np.choice(N_CODE, size=5, replace=False)
        llrs[flip] *= -1
        info, converged, _ = decode(ldpc_code, llrs)
        assert converged
        np.testing.assert_array_equal(info, u)

    def test_all_zero_llrs_do_not_converge(self, ldpc_code):
        _, converged, iters = decode(ldpc_code, np.zeros(N_CODE))
        assert not converged and iters == 50

    def test_deterministic(self, ldpc_code, rng_np):
        llrs = rng_np.standard_normal(N_CODE)
        a = decode(ldpc_code, llrs)
        b = decode(ldpc_code, llrs)
        np.testing.assert_array_equal(a[0], b[0])
        assert a[1:] == b[1:]

    def test_non_finite_llrs_rejected(self, ldpc_code):
        llrs = np.zeros(N_CODE)
        llrs[0] = np.inf
        with pytest.raises(ValueError):
            decode(ldpc_code, llrs)

    def test_round_trip_under_one_percent_flips(self, ldpc_code):
        # 10^3 random blocks, magnitude >= 10 LLRs, <= 1% random sign flips.
        rng = np.random.default_rng(99)
        failures = 0
        for _ in range(1000):
            u = rng.integers(0, 2, K_INFO).astype(np.uint8)
            cw = encode(ldpc_code, u)
            llrs = np.where(cw == 0, 10.0, -10.0)
            n_flips = rng.integers(0, int(0.01 * N_CODE) + 1)
            if n_flips:
                flip = rng.choice(N_CODE, size=n_flips, replace=False)
                llrs[flip] *= -1
            info, converged, _ = decode(ldpc_code, llrs)
            if not converged or np.any(info != u):
                failures += 1
        assert failures == 0


class TestAlist:
    def test_export_format(self, ldpc_code, tmp_path):
        path = tmp_path / "code.alist"
        write_alist(ldpc_code, path)
        lines = path.read_text().splitlines()
        assert lines[0] == f"{N_CODE} {M_CHECKS}"
        assert int(lines[1].split()[0]) == VAR_DEGREE
        assert len(lines) == 4 + N_CODE + M_CHECKS
        # every listed edge is consistent between the two adjacency sections
        var_rows = [sorted(int(x) - 1 for x in ln.split()) for ln in lines[4:4 + N_CODE]]
        assert var_rows[0] == sorted(int(c) for c in ldpc_code.var_rows[0])
