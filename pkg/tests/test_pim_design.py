import math

import pytest

from pimdecode.pim_design import (
    AreaParams,
    EnergyParams,
    PimConfig,
    PimRole,
    area_feasible,
    calibrate_energy,
    config_area_feasible,
    dram_access_fraction,
    max_banks,
    partition_attention,
    partition_fc,
    pim_bandwidth,
    pim_power,
    pim_throughput,
)
from pimdecode.presets import DEFAULT_PIM_ENERGY, PIM_PRESETS

AREA = AreaParams()
FC_4P1B = PIM_PRESETS["fc-4p1b"]
ATTN_1P2B = PIM_PRESETS["attn-1p2b"]
PIM_1P1B = PIM_PRESETS["pim-1p1b"]


class TestArea:
    def test_96_banks_fit_with_four_fpus(self):
        assert area_feasible(4, 96, AREA)

    def test_98_banks_do_not(self):
        assert not area_feasible(4, 98, AREA)

    def test_single_bank_fits(self):
        assert area_feasible(1, 1, AREA)

    def test_max_banks_four_fpus(self):
        # floor(121 / (4 * 0.1025 + 0.83)) = floor(97.58)
        assert max_banks(4, AREA) == 97

    def test_max_banks_one_fpu(self):
        assert max_banks(1, AREA) == math.floor(121 / 0.9325) == 129

    def test_exactly_one_bank(self):
        assert max_banks(1, AreaParams(a_max=0.9325)) == 1

    def test_monotone_in_x_and_m(self):
        for x in range(1, 6):
            for m in range(1, 130):
                if not area_feasible(x, m, AREA):
                    assert not area_feasible(x + 1, m, AREA)
                    assert not area_feasible(x, m + 1, AREA)

    def test_shared_fpu_grouping(self):
        # 128 banks at half an FPU each: 64 * 0.1025 + 128 * 0.83 <= 121.
        assert config_area_feasible(ATTN_1P2B, AREA)
        assert config_area_feasible(PIM_1P1B, AREA)


class TestEnergyFractions:
    def test_no_reuse_anchor_exact(self):
        assert dram_access_fraction(1, DEFAULT_PIM_ENERGY) == pytest.approx(0.967, abs=1e-12)

    def test_reuse_64_anchor(self):
        frac = dram_access_fraction(64, DEFAULT_PIM_ENERGY)
        assert frac == pytest.approx(0.31406300746995763)
        assert abs(frac - 0.331) <= 0.05

    def test_amortization_limit(self):
        assert dram_access_fraction(10**9, DEFAULT_PIM_ENERGY) < 1e-6

    def test_strictly_decreasing(self):
        values = [dram_access_fraction(r, DEFAULT_PIM_ENERGY) for r in range(1, 200)]
        assert all(a > b for a, b in zip(values, values[1:]))

    def test_calibration_ratio(self):
        params = DEFAULT_PIM_ENERGY
        ratio = params.e_row / (params.e_xfer + params.e_comp)
        assert ratio == pytest.approx(0.967 / 0.033)


class TestPower:
    def test_4p1b_exceeds_budget_without_reuse(self):
        assert pim_power(FC_4P1B, 1, DEFAULT_PIM_ENERGY) > 116.0

    def test_4p1b_meets_budget_from_reuse_4(self):
        for reuse in (4, 5, 8, 16, 64, 1024):
            power = pim_power(FC_4P1B, reuse, DEFAULT_PIM_ENERGY)
            assert power <= 116.0 * (1 + 1e-9)

    def test_4p1b_sits_on_budget_at_reuse_4(self):
        assert pim_power(FC_4P1B, 4, DEFAULT_PIM_ENERGY) == pytest.approx(116.0)

    def test_1p2b_within_budget_without_reuse(self):
        assert pim_power(ATTN_1P2B, 1, DEFAULT_PIM_ENERGY) <= 116.0

    def test_1p1b_exceeds_budget_without_reuse(self):
        assert pim_power(PIM_1P1B, 1, DEFAULT_PIM_ENERGY) > 116.0

    def test_doubling_reuse_strictly_lowers_power(self):
        for config in (FC_4P1B, ATTN_1P2B, PIM_1P1B):
            for reuse in (1, 2, 4, 32):
                assert (pim_power(config, 2 * reuse, DEFAULT_PIM_ENERGY)
                        < pim_power(config, reuse, DEFAULT_PIM_ENERGY))

    def test_recalibration_moves_the_crossing(self):
        params = calibrate_energy(FC_4P1B, budget_cross_reuse=8)
        assert pim_power(FC_4P1B, 8, params) == pytest.approx(116.0)
        assert pim_power(FC_4P1B, 4, params) > 116.0


class TestThroughputBandwidth:
    def test_1p2b_two_banks(self):
        config = PimConfig(1, 2, 2, fpu_freq=666e6, flops_per_fpu_cycle=2,
                           per_bank_bandwidth=1e9, capacity=1 << 28,
                           role=PimRole.ATTN_PIM, pseudo_channels=1, bank_groups=2)
        assert pim_throughput(config) == pytest.approx(1.332e9)

    def test_4p1b_is_8x_1p2b_at_equal_banks(self):
        a = PimConfig(4, 1, 96, 666e6, 2, 1e9, 1 << 30, PimRole.FC_PIM)
        b = PimConfig(1, 2, 96, 666e6, 2, 1e9, 1 << 30, PimRole.ATTN_PIM)
        assert pim_throughput(a) == pytest.approx(8 * pim_throughput(b))

    def test_bandwidth_scales_with_banks(self):
        assert pim_bandwidth(FC_4P1B) == pytest.approx(96 * FC_4P1B.per_bank_bandwidth)

    def test_invalid_grouping_rejected(self):
        with pytest.raises(ValueError):
            PimConfig(1, 3, 8, 666e6, 2, 1e9, 1 << 28, PimRole.ATTN_PIM)


class TestPartitionFc:
    def test_full_model_tiling_is_balanced(self):
        plan = partition_fc(12288, 12288, 30, FC_4P1B)
        assert plan.idle_banks == 0
        assert plan.utilization >= 0.95
        # Work conservation across every bank tile.
        assert sum(sum(loads) for loads in plan.bank_loads) == 12288 * 12288
        # Reported utilization matches a re-derivation from the tile loads.
        flat = [load for device in plan.bank_loads for load in device]
        assert plan.utilization == pytest.approx((sum(flat) / len(flat)) / max(flat))

    def test_perfect_division_uses_every_bank_equally(self):
        plan = partition_fc(96, 96, 1, FC_4P1B)
        assert plan.utilization == pytest.approx(1.0)
        assert plan.idle_banks == 0

    def test_degenerate_single_element(self):
        plan = partition_fc(1, 1, 2, FC_4P1B)
        assert plan.device_loads == (1, 0)
        assert sum(plan.device_loads) / (2 * max(plan.device_loads)) == 0.5

    def test_device_grid_near_square(self):
        assert partition_fc(128, 128, 30, FC_4P1B).device_grid == (5, 6)
        assert partition_fc(128, 128, 7, FC_4P1B).device_grid == (1, 7)


class TestPartitionAttention:
    def test_96_heads_on_60_devices(self):
        plan = partition_attention(96, 60)
        loads = [len(h) for h in plan.heads_per_device]
        assert max(loads) == 2 and min(loads) == 1
        assert plan.utilization == pytest.approx((96 / 60) / 2)

    def test_heads_equal_devices(self):
        plan = partition_attention(64, 64)
        assert all(len(h) == 1 for h in plan.heads_per_device)
        assert plan.utilization == 1.0

    def test_one_head_many_devices(self):
        plan = partition_attention(1, 60)
        idle = sum(1 for h in plan.heads_per_device if not h)
        assert idle == 59

    def test_head_conservation(self):
        for heads, devices in [(96, 60), (7, 3), (128, 128), (5, 16)]:
            plan = partition_attention(heads, devices)
            assigned = sorted(h for dev in plan.heads_per_device for h in dev)
            assert assigned == list(range(heads))
