"""Constellation, pilot pattern, and TTI grid packing tests."""

import numpy as np
import pytest

from linklab.errors import ContractError, DegenerateInputError
from linklab import phy_frame as pf
from linklab.numerics import Tensor


class TestQam64:
    def test_all_zero_label(self):
        c = pf.build_qam64_gray()
        assert abs(c.points[0] - (3 + 3j) / np.sqrt(42.0)) < 1e-12

    def test_zero_mean_unit_power(self):
        c = pf.build_qam64_gray()
        assert abs(c.points.mean()) < 1e-12
        assert abs(np.mean(np.abs(c.points) ** 2) - 1.0) < 1e-12

    def test_axis_levels(self):
        c = pf.build_qam64_gray()
        levels = np.unique(np.round(c.points.real * np.sqrt(42.0)).astype(int))
        assert list(levels) == [-7, -5, -3, -1, 1, 3, 5, 7]

    def test_gray_property_neighbors_differ_in_one_bit(self):
        """Horizontally adjacent points differ in exactly one of the I-labeling bits."""
        c = pf.build_qam64_gray()
        pts = c.points * np.sqrt(42.0)
        for q in (-7, -5, -3, -1, 1, 3, 5, 7):
            row = [(int(round(p.real)), lab) for lab, p in enumerate(pts) if round(p.imag) == q]
            row.sort()
            for (_, a), (_, b) in zip(row, row[1:]):
                assert bin(a ^ b).count("1") == 1


class TestNormalize:
    def test_fixed_point_on_qam(self):
        c = pf.build_qam64_gray()
        again = pf.normalize_constellation(c.points)
        assert np.allclose(again.points, c.points, atol=1e-12)

    def test_two_point_case(self):
        c = pf.normalize_constellation(np.array([0.0 + 0j, 2.0 + 0j]))
        assert np.allclose(sorted(c.points.real), [-1.0, 1.0])

    def test_scale_invariance(self):
        rng = np.random.default_rng(0)
        raw = rng.normal(size=16) + 1j * rng.normal(size=16)
        a = pf.normalize_constellation(raw)
        b = pf.normalize_constellation(7.0 * raw)
        assert np.allclose(a.points, b.points, atol=1e-12)

    def test_invariants_over_random_inputs(self):
        rng = np.random.default_rng(1)
        for _ in range(1000):
            raw = rng.normal(size=8) + 1j * rng.normal(size=8)
            c = pf.normalize_constellation(raw)
            assert abs(c.points.mean()) < 1e-6
            assert abs(np.mean(np.abs(c.points) ** 2) - 1.0) < 1e-6

    def test_degenerate_input(self):
        with pytest.raises(DegenerateInputError):
            pf.normalize_constellation(np.full(4, 1.5 + 0.5j))

    def test_tensor_path_matches_numpy(self):
        rng = np.random.default_rng(2)
        raw = rng.normal(size=(64, 2))
        out = pf.normalize_constellation_t(Tensor(raw))
        ref = pf.normalize_constellation(raw[:, 0] + 1j * raw[:, 1])
        assert np.allclose(out.data[:, 0] + 1j * out.data[:, 1], ref.points, atol=1e-12)


class TestMapDemap:
    def test_empty(self):
        c = pf.build_qam64_gray()
        assert pf.map_bits(np.zeros(0, dtype=np.int8), c).size == 0

    def test_known_label(self):
        c = pf.build_qam64_gray()
        sym = pf.map_bits(np.zeros(6, dtype=np.int8), c)
        assert abs(sym[0] - (3 + 3j) / np.sqrt(42.0)) < 1e-12

    def test_roundtrip_all_64_labels(self):
        c = pf.build_qam64_gray()
        bits = ((np.arange(64)[:, None] >> np.arange(5, -1, -1)) & 1).reshape(-1)
        syms = pf.map_bits(bits, c)
        assert np.array_equal(pf.hard_demap(syms, c), bits.astype(np.int8))

    def test_indivisible_length(self):
        with pytest.raises(ContractError):
            pf.map_bits(np.zeros(7, dtype=np.int8), pf.build_qam64_gray())


class TestPatternsAndPlans:
    def test_baseline_pattern_counts(self):
        p = pf.build_pilot_pattern("baseline")
        assert p.count == 72
        assert set(p.pilot_l) == {2, 11}
        assert set(p.pilot_k) == set(range(0, 72, 2))
        assert np.allclose(np.abs(p.pilot_values), 1.0)

    def test_pilot_overhead(self):
        p = pf.build_pilot_pattern("baseline")
        assert p.count / (72 * 14) == pytest.approx(1 / 14)

    def test_pilot_sequence_deterministic(self):
        a = pf.build_pilot_pattern("baseline")
        b = pf.build_pilot_pattern("baseline")
        assert np.array_equal(a.pilot_values, b.pilot_values)

    def test_plan_arithmetic_baseline(self):
        plan = pf.build_tti_plan(pf.build_pilot_pattern("baseline"))
        assert plan.data_re_count == 936
        assert plan.bit_slots == 5616
        assert plan.filler_bit_count == 496

    def test_plan_arithmetic_pilotless(self):
        plan = pf.build_tti_plan(pf.build_pilot_pattern("pilotless"))
        assert plan.data_re_count == 1008
        assert plan.bit_slots == 6048
        assert plan.filler_bit_count == 928

    def test_data_order_frequency_first(self):
        plan = pf.build_tti_plan(pf.build_pilot_pattern("pilotless"))
        # first 72 entries are symbol 0, subcarriers 0..71
        assert np.array_equal(plan.data_l[:72], np.zeros(72))
        assert np.array_equal(plan.data_k[:72], np.arange(72))
        assert np.all(np.diff(plan.data_l) >= 0)


class TestAssembleExtract:
    def _setup(self, pattern_name):
        c = pf.build_qam64_gray()
        pattern = pf.build_pilot_pattern(pattern_name)
        plan = pf.build_tti_plan(pattern)
        rng = np.random.default_rng(42)
        bits = rng.integers(0, 2, size=plan.bit_slots).astype(np.int8)
        return c, pattern, plan, bits

    def test_pilots_in_place(self):
        c, pattern, plan, bits = self._setup("baseline")
        grid = pf.assemble_tti(bits, c, pattern, plan)
        assert np.array_equal(grid.symbols[pattern.pilot_k, pattern.pilot_l], pattern.pilot_values)

    def test_pilotless_has_no_pilots(self):
        c, pattern, plan, bits = self._setup("pilotless")
        grid = pf.assemble_tti(bits, c, pattern, plan)
        assert pattern.count == 0 and plan.data_re_count == 1008
        assert grid.symbols.shape == (72, 14)

    def test_roundtrip_bits(self):
        for name in ("baseline", "pilotless"):
            c, pattern, plan, bits = self._setup(name)
            grid = pf.assemble_tti(bits, c, pattern, plan)
            syms = pf.extract_data_res(grid, plan)
            assert syms.size == plan.data_re_count
            assert np.array_equal(pf.hard_demap(syms, c), bits)

    def test_wrong_bit_count(self):
        c, pattern, plan, bits = self._setup("baseline")
        with pytest.raises(ContractError):
            pf.assemble_tti(bits[:-1], c, pattern, plan)

    def test_mismatched_plan(self):
        c, pattern, plan, bits = self._setup("baseline")
        grid = pf.assemble_tti(bits, c, pattern, plan)
        other = pf.build_tti_plan(pf.build_pilot_pattern("pilotless"))
        with pytest.raises(ContractError):
            pf.extract_data_res(grid, other)

    def test_unit_average_power(self):
        c, pattern, plan, bits = self._setup("baseline")
        grid = pf.assemble_tti(bits, c, pattern, plan)
        power = np.mean(np.abs(grid.symbols) ** 2)
        assert abs(power - 1.0) < 0.1  # finite-sample average of unit-power symbols
