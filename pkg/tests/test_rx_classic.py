import numpy as np
import pytest

from linklab.errors import ContractError, DegenerateInputError
from linklab.phy_frame import (
    Constellation,
    TtiGrid,
    assemble_tti,
    build_pilot_pattern,
    build_qam64_gray,
    build_tti_plan,
)
from linklab.rx_classic import (
    baseline_receive,
    gaussian_llr_demap,
    ls_estimate,
    nearest_pilot_equalize,
    perfect_csi_receive,
    _nearest_pilot_index,
)


@pytest.fixture(scope="module")
def pattern():
    return build_pilot_pattern("baseline")


@pytest.fixture(scope="module")
def plan(pattern):
    return build_tti_plan(pattern)


@pytest.fixture(scope="module")
def qam():
    return build_qam64_gray()


def _bpsk():
    # label 0 -> -1 (bit 0), label 1 -> +1 (bit 1)
    return Constellation(2, np.array([-1.0 + 0j, 1.0 + 0j]), 1)


class TestLsEstimate:
    def test_recovers_channel_at_pilots(self, pattern):
        rng = np.random.default_rng(0)
        h = rng.normal(size=(72, 14)) + 1j * rng.normal(size=(72, 14))
        grid = np.zeros((72, 14), dtype=complex)
        grid[pattern.pilot_k, pattern.pilot_l] = (
            h[pattern.pilot_k, pattern.pilot_l] * pattern.pilot_values
        )
        est = ls_estimate(grid, pattern)
        assert np.allclose(est, h[pattern.pilot_k, pattern.pilot_l])

    def test_shape_validation(self, pattern):
        with pytest.raises(ContractError):
            ls_estimate(np.zeros((14, 72), dtype=complex), pattern)


class TestNearestPilot:
    def test_pilot_positions_map_to_themselves(self, pattern):
        idx = _nearest_pilot_index(pattern)
        own = idx[pattern.pilot_k, pattern.pilot_l]
        assert np.array_equal(pattern.pilot_k[own], pattern.pilot_k)
        assert np.array_equal(pattern.pilot_l[own], pattern.pilot_l)

    def test_subcarrier_tie_prefers_lower(self, pattern):
        # (k=1, l=2) sits exactly between pilots at k=0 and k=2
        idx = _nearest_pilot_index(pattern)
        chosen = idx[1, 2]
        assert pattern.pilot_k[chosen] == 0
        assert pattern.pilot_l[chosen] == 2

    def test_symbol_distance_weighting(self, pattern):
        idx = _nearest_pilot_index(pattern)
        # l=6 is nearer symbol 2; l=7 is nearer symbol 11
        assert pattern.pilot_l[idx[0, 6]] == 2
        assert pattern.pilot_l[idx[0, 7]] == 11
        # one subcarrier off, far symbol: 1 + (14/12)*4 < 0 + (14/12)*5
        assert pattern.pilot_l[idx[1, 7]] == 11
        assert pattern.pilot_k[idx[1, 7]] == 0

    def test_flat_channel_equalizes_exactly(self, pattern):
        rng = np.random.default_rng(1)
        h0 = 0.8 - 0.3j
        x = rng.normal(size=(72, 14)) + 1j * rng.normal(size=(72, 14))
        x[pattern.pilot_k, pattern.pilot_l] = pattern.pilot_values
        x_hat, h_hat, s2 = nearest_pilot_equalize(h0 * x, pattern, 0.02)
        assert np.allclose(h_hat, h0)
        assert np.allclose(x_hat, x)
        assert np.allclose(s2, 0.02 / abs(h0) ** 2)

    def test_zero_estimate_marked_erased(self, pattern):
        grid = np.zeros((72, 14), dtype=complex)  # pilots received as zero
        x_hat, h_hat, s2 = nearest_pilot_equalize(grid, pattern, 0.1)
        assert np.all(h_hat == 0.0)
        assert np.all(np.isinf(s2))
        assert np.all(x_hat == 0.0)


class TestGaussianDemap:
    def test_bpsk_closed_form(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=64) + 1j * rng.normal(size=64)
        s2 = np.full(64, 0.7)
        llr = gaussian_llr_demap(x, s2, _bpsk())
        assert llr.shape == (64, 1)
        expect = np.clip(4.0 * x.real / 0.7, -30, 30)
        assert np.allclose(llr[:, 0], expect)

    def test_qpsk_closed_form(self):
        # label b0 b1: b0 flips I (0 -> +), b1 flips Q
        a = 1.0 / np.sqrt(2.0)
        pts = np.array([a + a * 1j, a - a * 1j, -a + a * 1j, -a - a * 1j])
        qpsk = Constellation(4, pts, 2)
        rng = np.random.default_rng(3)
        x = 0.6 * (rng.normal(size=50) + 1j * rng.normal(size=50))
        llr = gaussian_llr_demap(x, np.full(50, 0.5), qpsk)
        assert np.allclose(llr[:, 0], np.clip(-4 * a * x.real / 0.5, -30, 30))
        assert np.allclose(llr[:, 1], np.clip(-4 * a * x.imag / 0.5, -30, 30))

    def test_clipping(self):
        llr = gaussian_llr_demap(np.array([100.0 + 0j]), np.array([1e-4]), _bpsk())
        assert llr[0, 0] == 30.0

    def test_erased_res_give_zero(self):
        llr = gaussian_llr_demap(
            np.array([1.0 + 0j, 0.5 + 0j]), np.array([np.inf, 1.0]), _bpsk()
        )
        assert llr[0, 0] == 0.0
        assert llr[1, 0] != 0.0

    def test_nonpositive_noise_rejected(self):
        with pytest.raises(DegenerateInputError):
            gaussian_llr_demap(np.array([1.0 + 0j]), np.array([0.0]), _bpsk())

    def test_qam64_llr_calibration(self, qam):
        """Empirical P(bit=1 | llr) must track sigmoid(llr) — the demapper is
        exact, so its outputs are true posterior log-odds."""
        rng = np.random.default_rng(4)
        n = 200_000
        sigma2 = 0.35
        labels = rng.integers(0, 64, size=n)
        x = qam.points[labels] + np.sqrt(sigma2 / 2) * (
            rng.normal(size=n) + 1j * rng.normal(size=n)
        )
        bits = ((labels[:, None] >> (5 - np.arange(6))) & 1).astype(float)
        llr = gaussian_llr_demap(x, np.full(n, sigma2), qam)
        flat_llr = llr.reshape(-1)
        flat_bit = bits.reshape(-1)
        edges = np.linspace(-6, 6, 25)
        for lo, hi in zip(edges[:-1], edges[1:]):
            sel = (flat_llr >= lo) & (flat_llr < hi)
            if sel.sum() < 500:
                continue
            emp = flat_bit[sel].mean()
            pred = (1.0 / (1.0 + np.exp(-flat_llr[sel]))).mean()
            assert abs(emp - pred) < 0.03, f"bin [{lo:.2f},{hi:.2f}): {emp} vs {pred}"


class TestEndToEnd:
    def test_flat_channel_noiseless_roundtrip(self, pattern, plan, qam):
        rng = np.random.default_rng(5)
        bits = rng.integers(0, 2, size=plan.bit_slots)
        grid = assemble_tti(bits, qam, pattern, plan)
        h = np.full((72, 14), 0.9 + 0.4j)
        rx = TtiGrid(h * grid.symbols, grid.pattern_name)
        llr = baseline_receive(rx, pattern, 1e-6, plan, qam)
        assert llr.shape == (plan.bit_slots,)
        assert np.array_equal((llr > 0).astype(int), bits)

    def test_perfect_csi_matches_baseline_on_flat_channel(self, pattern, plan, qam):
        rng = np.random.default_rng(6)
        bits = rng.integers(0, 2, size=plan.bit_slots)
        grid = assemble_tti(bits, qam, pattern, plan)
        h = np.full((72, 14), 1.2 - 0.1j)
        y = TtiGrid(h * grid.symbols, grid.pattern_name)
        llr_b = baseline_receive(y, pattern, 0.01, plan, qam)
        llr_p = perfect_csi_receive(y, h, 0.01, plan, qam)
        assert np.allclose(llr_b, llr_p)

    def test_selective_channel_advantage_of_true_csi(self, pattern, plan, qam):
        # strong frequency selectivity: nearest-pilot mismatch degrades odd REs
        rng = np.random.default_rng(7)
        bits = rng.integers(0, 2, size=plan.bit_slots)
        grid = assemble_tti(bits, qam, pattern, plan)
        k = np.arange(72)[:, None]
        h = np.exp(2j * np.pi * k / 6.0) * np.ones((72, 14))
        n0 = 0.005
        noise = np.sqrt(n0 / 2) * (rng.normal(size=(72, 14)) + 1j * rng.normal(size=(72, 14)))
        y = TtiGrid(h * grid.symbols + noise, grid.pattern_name)
        err_b = int((((baseline_receive(y, pattern, n0, plan, qam)) > 0) != bits).sum())
        err_p = int((((perfect_csi_receive(y, h, n0, plan, qam)) > 0) != bits).sum())
        assert err_p < err_b

    def test_mismatched_plan_rejected(self, pattern, qam):
        pilotless = build_pilot_pattern("pilotless")
        plan_p = build_tti_plan(pilotless)
        rng = np.random.default_rng(8)
        bits = rng.integers(0, 2, size=plan_p.bit_slots)
        grid = assemble_tti(bits, qam, pilotless, plan_p)
        with pytest.raises(ContractError):
            baseline_receive(grid, pattern, 0.01, build_tti_plan(pattern), qam)
