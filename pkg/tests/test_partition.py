"""Partition schemes, shared-data offload revisions, torus bandwidth."""

import dataclasses

import pytest

from tileplan import (
    AcceleratorDesign,
    Bottleneck,
    LayerSpec,
    PartitionScheme,
    PortConfig,
    Precision,
    SharedData,
    TileConfig,
    TransferContext,
    TransferMode,
    latency,
    partitioned_latency,
    slice_layer,
    split_ifm_load,
    split_weight_load,
    torus_bandwidth_check,
)
from tileplan.model import ceil_div
from conftest import CTX_B, CTX_D, DESIGN_A, DESIGN_C, VAL_LAYER


class TestPartitionScheme:
    def test_board_count_is_factor_product(self):
        assert PartitionScheme(batch=2, rows=3, cols=1, channels=2).count == 12

    @pytest.mark.parametrize("scheme,category", [
        (PartitionScheme(), SharedData.NONE),
        (PartitionScheme(batch=2), SharedData.WEIGHT),
        (PartitionScheme(rows=2), SharedData.WEIGHT),
        (PartitionScheme(cols=4), SharedData.WEIGHT),
        (PartitionScheme(channels=2), SharedData.IFM),
        (PartitionScheme(rows=2, channels=2), SharedData.HYBRID),
    ])
    def test_category(self, scheme, category):
        assert scheme.category is category

    def test_rejects_nonpositive_factor(self):
        with pytest.raises(ValueError):
            PartitionScheme(batch=0)


class TestSliceLayer:
    def test_batch_split(self):
        layer = LayerSpec(4, 96, 3, 55, 55, 11)
        assert slice_layer(layer, PartitionScheme(batch=4)).batch == 1

    def test_even_channel_split(self):
        layer = LayerSpec(1, 256, 64, 13, 13, 3)
        assert slice_layer(layer, PartitionScheme(channels=2)).out_ch == 128

    def test_identity(self):
        layer = LayerSpec(2, 9, 7, 5, 3, 1)
        assert slice_layer(layer, PartitionScheme()) == layer

    def test_uneven_split_takes_ceiling(self):
        layer = LayerSpec(1, 7, 4, 13, 13, 3)
        assert slice_layer(layer, PartitionScheme(channels=4)).out_ch == 2

    def test_in_channels_never_split(self):
        layer = LayerSpec(2, 8, 48, 8, 8, 3)
        part = slice_layer(layer, PartitionScheme(batch=2, rows=2, channels=2))
        assert part.in_ch == layer.in_ch

    def test_factor_larger_than_dimension(self):
        layer = LayerSpec(1, 8, 8, 3, 8, 3)
        with pytest.raises(ValueError, match="exceeds layer"):
            slice_layer(layer, PartitionScheme(rows=4))


class TestWeightShared:
    def test_two_way_split_halves_memory_load(self):
        base = split_weight_load(11520, PartitionScheme(), 8, 8)
        split = split_weight_load(11520, PartitionScheme(rows=2), 8, 8)
        assert split.mem_cycles == base.mem_cycles // 2
        assert split.channel_count == 1

    def test_degenerate_group(self):
        rev = split_weight_load(1000, PartitionScheme(), 8, 8)
        assert rev == (125, 0, 0)

    def test_hand_computed(self):
        # 64*20*9 weights over 8 lanes, split two ways: ceil(11520/16) = 720
        rev = split_weight_load(64 * 20 * 9, PartitionScheme(rows=2), 8, 8)
        assert rev.mem_cycles == 720
        assert rev.link_cycles == 720

    def test_nested_ceiling_identity(self):
        # splitting the rounded-up load P ways equals dividing the volume by P
        for volume, lanes, group in [(4455, 8, 3), (121, 2, 5), (9999, 4, 7)]:
            scheme = PartitionScheme(cols=group)
            rev = split_weight_load(volume, scheme, lanes, lanes)
            assert rev.mem_cycles == ceil_div(ceil_div(volume, lanes), group)


class TestIfmShared:
    def test_symmetric_two_way(self):
        base = split_ifm_load(1024, PartitionScheme(), 4, 4)
        split = split_ifm_load(1024, PartitionScheme(channels=2), 4, 4)
        assert split.mem_cycles == base.mem_cycles // 2
        assert split.link_cycles == split.mem_cycles
        assert split.channel_count == 1

    def test_degenerate(self):
        assert split_ifm_load(1024, PartitionScheme(), 4, 4) == (256, 0, 0)


class TestPartitionedLatency:
    def test_channel_split_flips_ifm_bound_to_compute(self):
        # validation pair A -> B: 2-way channel split with offload
        before = latency(VAL_LAYER, DESIGN_A)
        after = partitioned_latency(VAL_LAYER, DESIGN_A, CTX_B)
        assert before.bottleneck is Bottleneck.IFM
        assert after.bottleneck is Bottleneck.COMPUTE
        speedup = before.total_cycles / after.total_cycles
        assert 3.0 <= speedup <= 3.6

    def test_row_split_flips_weight_bound_to_compute(self):
        # validation pair C -> D: 2-way row split with offload
        before = latency(VAL_LAYER, DESIGN_C)
        after = partitioned_latency(VAL_LAYER, DESIGN_C, CTX_D)
        assert before.bottleneck is Bottleneck.WEIGHT
        assert after.bottleneck is Bottleneck.COMPUTE
        speedup = before.total_cycles / after.total_cycles
        assert 3.0 <= speedup <= 3.6

    def test_published_cycle_counts_exact(self):
        # the published counts are the main pipeline term (no fill/drain tail)
        a = latency(VAL_LAYER, DESIGN_A)
        assert a.total_cycles - a.ofm_cycles - a.stage_cycles == 519168
        c = latency(VAL_LAYER, DESIGN_C)
        assert c.total_cycles - c.ofm_cycles - c.stage_cycles == 115200
        d = partitioned_latency(VAL_LAYER, DESIGN_C, CTX_D)
        assert d.total_cycles - d.ofm_cycles - d.stage_cycles == 32760

    def test_replication_mode_equals_plain_model_on_slice(self):
        ctx = TransferContext(scheme=PartitionScheme(rows=2), mode=TransferMode.BASELINE)
        part = slice_layer(VAL_LAYER, ctx.scheme)
        assert partitioned_latency(VAL_LAYER, DESIGN_C, ctx) == latency(part, DESIGN_C)

    def test_degenerate_scheme_reproduces_model(self):
        for mode in TransferMode:
            ctx = TransferContext(scheme=PartitionScheme(), mode=mode)
            assert partitioned_latency(VAL_LAYER, DESIGN_A, ctx) == latency(VAL_LAYER, DESIGN_A)

    def test_offload_never_slower_than_replication(self):
        scheme = PartitionScheme(rows=2, channels=2)
        layer = LayerSpec(2, 64, 48, 26, 26, 3)
        design = AcceleratorDesign(TileConfig(16, 12, 13, 13), PortConfig(2, 4, 2),
                                   Precision.FIXED16)
        offload = partitioned_latency(layer, design, TransferContext(scheme=scheme))
        baseline = partitioned_latency(layer, design,
                                TransferContext(scheme=scheme, mode=TransferMode.BASELINE))
        assert offload.total_cycles <= baseline.total_cycles


class TestPublishedCrossLayer:
    def test_uniform_design_total_within_10pct(self):
        # the published cross-layer design: one 64x7x7x14 tile with a
        # 2-way batch x 2-way column split applied to every layer; the
        # reported total is 2,239k cycles
        from conftest import ALEXNET_TABLE, FIXED_PORTS

        tile = TileConfig(64, 7, 7, 14)
        ctx = TransferContext(scheme=PartitionScheme(batch=2, cols=2))
        total = 0
        for _, layer, _, _, _, _ in ALEXNET_TABLE:
            part = slice_layer(layer, ctx.scheme)
            design = AcceleratorDesign(tile.clamped(part), FIXED_PORTS,
                                       Precision.FIXED16)
            total += latency(part, design, transfer=ctx).total_cycles
        assert total == 2214359  # frozen hand evaluation
        assert abs(total - 2_239_000) / 2_239_000 < 0.10


class TestTorusBandwidth:
    def test_no_sharing_always_ok(self, zcu102):
        ctx = TransferContext(scheme=PartitionScheme())
        check = torus_bandwidth_check(VAL_LAYER, DESIGN_C, ctx, zcu102)
        assert check.ok
        assert check.row_bits == check.col_bits == 0

    def test_four_by_four_torus_demand(self, zcu102):
        # 16 boards as 4 channel columns x 4 row slices; kernel-1 layer with
        # a 32x4x4x4 tile lands exactly on the published demand figure
        layer = LayerSpec(1, 128, 64, 16, 16, 1, "probe")
        design = AcceleratorDesign(TileConfig(32, 4, 4, 4), PortConfig(4, 8, 4),
                                   Precision.FIXED16)
        ctx = TransferContext(scheme=PartitionScheme(rows=4, channels=4))
        check = torus_bandwidth_check(layer, design, ctx, zcu102)
        assert check.demand_bits_per_cycle == 144.0
        assert check.ok

    def test_violation_at_capacity_143(self, zcu102):
        layer = LayerSpec(1, 128, 64, 16, 16, 1, "probe")
        design = AcceleratorDesign(TileConfig(32, 4, 4, 4), PortConfig(4, 8, 4),
                                   Precision.FIXED16)
        ctx = TransferContext(scheme=PartitionScheme(rows=4, channels=4))
        tight = dataclasses.replace(zcu102, link_bits=143)
        check = torus_bandwidth_check(layer, design, ctx, tight)
        assert not check.ok
        assert check.violations

    def test_zero_capacity_with_sharing_violates(self, zcu102):
        dead = dataclasses.replace(zcu102, link_bits=0)
        ctx = TransferContext(scheme=PartitionScheme(channels=2))
        assert not torus_bandwidth_check(VAL_LAYER, DESIGN_C, ctx, dead).ok
