"""Cluster plans: grid construction, torus regularity, boundary movement."""

import pytest

from tileplan import (
    AcceleratorDesign,
    LayerSpec,
    MoveKind,
    PartitionScheme,
    PortConfig,
    Precision,
    TileConfig,
    build_plan,
    classify_interlayer,
    interlayer_moves,
    movement_cycles,
    plan_traffic,
)
from tileplan.cluster import balanced_split


def make_design(tm=8, tn=8, tr=4, tc=4):
    return AcceleratorDesign(TileConfig(tm, tn, tr, tc), PortConfig(4, 8, 4),
                             Precision.FIXED16)


class TestBalancedSplit:
    def test_even(self):
        assert balanced_split(8, 4) == [(0, 2), (2, 4), (4, 6), (6, 8)]

    def test_remainder_spread(self):
        ranges = balanced_split(7, 4)
        sizes = [b - a for a, b in ranges]
        assert sizes == [2, 2, 2, 1]
        assert ranges[-1][1] == 7

    def test_rejects_empty_parts(self):
        with pytest.raises(ValueError):
            balanced_split(3, 4)


class TestBuildPlan:
    def test_four_by_three_grid(self):
        # 4 channel columns x 3 weight-group rows = 12 boards, 24 links
        layer = LayerSpec(1, 64, 32, 27, 27, 3)
        plan = build_plan(layer, PartitionScheme(rows=3, channels=4), make_design())
        assert len(plan.nodes) == 12
        assert len(plan.links) == 24
        ind, outd = plan.degrees()
        assert set(ind.values()) == {2} and set(outd.values()) == {2}

    def test_single_node_wraps_to_self(self):
        layer = LayerSpec(1, 8, 8, 8, 8, 3)
        plan = build_plan(layer, PartitionScheme(), make_design())
        assert len(plan.nodes) == 1
        assert all(l.src == l.dst == 0 for l in plan.links)
        traffic = plan_traffic(plan, __import__("tileplan").load_platform("zcu102"))
        assert traffic.row_link_bits == traffic.col_link_bits == 0

    def test_channel_interleave(self):
        layer = LayerSpec(1, 8, 8, 8, 8, 3)
        plan = build_plan(layer, PartitionScheme(channels=2), make_design())
        col0, col1 = plan.nodes
        assert col0.channel_set == (0, 2, 4, 6)
        assert col1.channel_set == (1, 3, 5, 7)

    def test_channel_sets_partition_output(self):
        layer = LayerSpec(1, 13, 8, 8, 8, 3)
        plan = build_plan(layer, PartitionScheme(channels=4), make_design())
        seen = [c for n in plan.nodes for c in n.channel_set]
        assert sorted(seen) == list(range(13))

    def test_column_shares_channels_row_shares_region(self):
        layer = LayerSpec(2, 16, 8, 12, 12, 3)
        plan = build_plan(layer, PartitionScheme(batch=2, channels=2), make_design())
        by_col = {}
        by_row = {}
        for n in plan.nodes:
            by_col.setdefault(n.grid_col, set()).add(n.channel_set)
            by_row.setdefault(n.grid_row, set()).add(
                (n.batch_range, n.row_range, n.col_range))
        assert all(len(s) == 1 for s in by_col.values())   # one weight slice per column
        assert all(len(s) == 1 for s in by_row.values())   # one input region per row

    def test_grid_row_order_is_batch_major(self):
        layer = LayerSpec(2, 8, 8, 8, 8, 3)
        plan = build_plan(layer, PartitionScheme(batch=2, rows=2), make_design(tr=2))
        rows = [(n.batch_range, n.row_range) for n in plan.nodes]
        assert rows == sorted(rows)

    def test_factors_must_fit(self):
        layer = LayerSpec(1, 8, 8, 3, 8, 3)
        with pytest.raises(ValueError):
            build_plan(layer, PartitionScheme(rows=5), make_design())


class TestClassifyInterlayer:
    boundary = LayerSpec(4, 96, 3, 55, 55, 11, "conv1")

    def test_equal_batch_split_moves_nothing(self):
        move = classify_interlayer(PartitionScheme(batch=2), PartitionScheme(batch=2),
                                   self.boundary, 5, Precision.FIXED16)
        assert move.kind is MoveKind.NO_MOVE and move.volume_bits == 0

    def test_equal_interleaved_channel_split_moves_nothing(self):
        move = classify_interlayer(PartitionScheme(channels=2), PartitionScheme(channels=2),
                                   self.boundary, 5, Precision.FIXED16)
        assert move.kind is MoveKind.INTERLEAVE_RESOLVED and move.volume_bits == 0

    def test_row_split_exchanges_borders(self):
        move = classify_interlayer(PartitionScheme(rows=2), PartitionScheme(rows=2),
                                   self.boundary, 5, Precision.FIXED16)
        assert move.kind is MoveKind.BORDER_EXCHANGE
        # one internal cut, kernel-1 halo lines spanning cols and channels
        assert move.volume_bits == 4 * 96 * 16 * 4 * 55

    def test_pointwise_next_kernel_needs_no_borders(self):
        move = classify_interlayer(PartitionScheme(rows=2), PartitionScheme(rows=2),
                                   self.boundary, 1, Precision.FIXED16)
        assert move.kind is MoveKind.NO_MOVE

    def test_differing_schemes_force_full_shuffle(self):
        move = classify_interlayer(PartitionScheme(rows=2), PartitionScheme(channels=2),
                                   self.boundary, 3, Precision.FIXED16)
        assert move.kind is MoveKind.FULL_SHUFFLE
        assert move.volume_bits == 4 * 96 * 55 * 55 * 16

    def test_mismatch_detection_is_order_independent(self):
        a, b = PartitionScheme(rows=2), PartitionScheme(channels=2)
        k1 = classify_interlayer(a, b, self.boundary, 3, Precision.FIXED16).kind
        k2 = classify_interlayer(b, a, self.boundary, 3, Precision.FIXED16).kind
        assert k1 is k2 is MoveKind.FULL_SHUFFLE


class TestMovementCycles:
    def test_published_bracket_figures(self):
        # per-layer designs switch partitions between layers; the boundary
        # tensor reshuffles over one 64-bit link channel
        layers = [
            LayerSpec(4, 96, 3, 55, 55, 11, "conv1"),
            LayerSpec(4, 256, 48, 27, 27, 5, "conv2"),
            LayerSpec(4, 384, 256, 13, 13, 3, "conv3"),
            LayerSpec(4, 384, 192, 13, 13, 3, "conv4"),
            LayerSpec(4, 256, 192, 13, 13, 3, "conv5"),
        ]
        schemes = [PartitionScheme(batch=4), PartitionScheme(batch=2, rows=2),
                   PartitionScheme(batch=4), PartitionScheme(batch=4),
                   PartitionScheme(batch=2, channels=2)]
        moves = interlayer_moves(layers, schemes, Precision.FIXED16)
        cycles = [movement_cycles(m) for m in moves]
        assert cycles == [290400, 186624, 0, 64896]

    def test_hidden_movements_cost_nothing(self):
        boundary = LayerSpec(1, 8, 8, 8, 8, 3)
        border = classify_interlayer(PartitionScheme(rows=2), PartitionScheme(rows=2),
                                     boundary, 3, Precision.FIXED16)
        assert border.kind is MoveKind.BORDER_EXCHANGE
        assert movement_cycles(border) == 0


class TestPlanTraffic:
    def test_link_loads_balanced_by_construction(self, zcu102):
        layer = LayerSpec(1, 64, 32, 27, 27, 3)
        design = make_design(tm=16, tn=8, tr=9, tc=9)
        plan = build_plan(layer, PartitionScheme(rows=2, channels=2), design)
        traffic = plan_traffic(plan, zcu102)
        # every row link carries one channel share, every column link one
        # group share; values are per-link and identical across links
        assert traffic.row_link_bits == design.tile.ifm_elems * 16 / 2
        assert traffic.col_link_bits == design.tile.wei_elems(3) * 16 / 2
        assert traffic.check.ok
