"""Concrete cluster plans: grid placement, torus links, channel interleave.

A partition scheme materializes as a grid of ``channels`` columns by
``batch*rows*cols`` rows.  Boards in one grid column hold the same OFM
channels (and therefore share one weight slice); boards in one grid row
hold the same spatial/batch region (and share one IFM slice).  A 2D
torus (right and down neighbors, wrapping) carries the weight exchange
down columns and the IFM exchange along rows, giving every board exactly
two incoming and two outgoing links and identical traffic.

OFM channels are assigned to grid columns round-robin (column j owns
channels j, j+channels, ...) so that the next layer's IFM-channel needs
are already resident on every board and no shuffle is required between
equally partitioned layers.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .model import AcceleratorDesign, LayerSpec, PlatformSpec, Precision, ceil_div
from .partition import (
    PartitionScheme,
    TorusCheck,
    TransferContext,
    TransferMode,
    torus_bandwidth_check,
)


def balanced_split(total: int, parts: int) -> list[tuple[int, int]]:
    """Half-open ranges covering [0, total), sizes differing by at most 1."""
    if parts > total:
        raise ValueError(f"cannot split {total} into {parts} non-empty parts")
    base, rem = divmod(total, parts)
    ranges, start = [], 0
    for i in range(parts):
        size = base + (1 if i < rem else 0)
        ranges.append((start, start + size))
        start += size
    return ranges


@dataclass(frozen=True)
class NodeAssignment:
    """What one board computes: ranges are half-open, channels a stride set."""

    node: int
    grid_row: int
    grid_col: int
    batch_range: tuple[int, int]
    row_range: tuple[int, int]
    col_range: tuple[int, int]
    channel_start: int
    channel_stride: int
    channel_count: int

    @property
    def channel_set(self) -> tuple[int, ...]:
        return tuple(range(self.channel_start,
                           self.channel_start + self.channel_stride * self.channel_count,
                           self.channel_stride))


@dataclass(frozen=True)
class TorusLink:
    src: int
    dst: int
    axis: str  # "row" carries IFM exchange, "col" carries weight exchange


@dataclass(frozen=True)
class ClusterPlan:
    layer: LayerSpec
    scheme: PartitionScheme
    design: AcceleratorDesign
    grid: tuple[tuple[int, ...], ...]      # grid[row][col] -> node id
    nodes: tuple[NodeAssignment, ...]
    links: tuple[TorusLink, ...]

    @property
    def grid_rows(self) -> int:
        return len(self.grid)

    @property
    def grid_cols(self) -> int:
        return len(self.grid[0])

    def degrees(self) -> tuple[dict[int, int], dict[int, int]]:
        outd: dict[int, int] = {n.node: 0 for n in self.nodes}
        ind: dict[int, int] = {n.node: 0 for n in self.nodes}
        for link in self.links:
            outd[link.src] += 1
            ind[link.dst] += 1
        return ind, outd


def build_plan(layer: LayerSpec, scheme: PartitionScheme,
               design: AcceleratorDesign) -> ClusterPlan:
    """Place the partition on a grid and wire the torus.

    Grid rows enumerate (batch slice, row slice, col slice) batch-major;
    grid columns enumerate OFM-channel slices.  Node ids are row-major.
    """
    if not scheme.fits(layer):
        raise ValueError(
            f"partition {scheme.as_tuple()} exceeds layer {layer.name!r} dimensions")
    b_ranges = balanced_split(layer.batch, scheme.batch)
    r_ranges = balanced_split(layer.rows, scheme.rows)
    c_ranges = balanced_split(layer.cols, scheme.cols)

    n_rows, n_cols = scheme.weight_group, scheme.channels
    grid = []
    nodes = []
    row_idx = 0
    for br in b_ranges:
        for rr in r_ranges:
            for cr in c_ranges:
                row_nodes = []
                for col in range(n_cols):
                    node_id = row_idx * n_cols + col
                    count = len(range(col, layer.out_ch, n_cols))
                    nodes.append(NodeAssignment(
                        node=node_id, grid_row=row_idx, grid_col=col,
                        batch_range=br, row_range=rr, col_range=cr,
                        channel_start=col, channel_stride=n_cols,
                        channel_count=count,
                    ))
                    row_nodes.append(node_id)
                grid.append(tuple(row_nodes))
                row_idx += 1

    links = []
    for r in range(n_rows):
        for c in range(n_cols):
            src = r * n_cols + c
            links.append(TorusLink(src=src, dst=r * n_cols + (c + 1) % n_cols, axis="row"))
            links.append(TorusLink(src=src, dst=((r + 1) % n_rows) * n_cols + c, axis="col"))
    return ClusterPlan(layer=layer, scheme=scheme, design=design,
                       grid=tuple(grid), nodes=tuple(nodes), links=tuple(links))


class MoveKind(enum.Enum):
    NO_MOVE = "no_move"
    BORDER_EXCHANGE = "border_exchange"
    INTERLEAVE_RESOLVED = "interleave_resolved"
    FULL_SHUFFLE = "full_shuffle"


@dataclass(frozen=True)
class InterLayerMove:
    kind: MoveKind
    volume_bits: int

    def __post_init__(self):
        zero_kinds = (MoveKind.NO_MOVE, MoveKind.INTERLEAVE_RESOLVED)
        if (self.volume_bits == 0) != (self.kind in zero_kinds):
            raise ValueError(f"move kind {self.kind} inconsistent with volume {self.volume_bits}")


def classify_interlayer(prev_scheme: PartitionScheme, next_scheme: PartitionScheme,
                        boundary: LayerSpec, kernel_next: int,
                        precision: Precision) -> InterLayerMove:
    """Data movement required at a layer boundary.

    ``boundary`` is the producing layer (its OFM is the next layer's
    IFM).  Equal schemes move nothing for batch splits, only halo borders
    for row/column splits, and nothing for interleaved channel splits;
    differing schemes force a full reshuffle of the boundary tensor.

    Border volume is the halo a ``kernel_next`` convolution reads across
    a cut: ``kernel_next - 1`` boundary lines per internal cut, each line
    spanning the full cross dimension and all channels.
    """
    bits = precision.bits
    if prev_scheme != next_scheme:
        volume = boundary.batch * boundary.out_ch * boundary.rows * boundary.cols * bits
        return InterLayerMove(kind=MoveKind.FULL_SHUFFLE, volume_bits=volume)
    halo_lines = kernel_next - 1
    volume = (boundary.batch * boundary.out_ch * bits * halo_lines
              * ((prev_scheme.rows - 1) * boundary.cols
                 + (prev_scheme.cols - 1) * boundary.rows))
    if volume > 0:
        return InterLayerMove(kind=MoveKind.BORDER_EXCHANGE, volume_bits=volume)
    if prev_scheme.channels > 1:
        return InterLayerMove(kind=MoveKind.INTERLEAVE_RESOLVED, volume_bits=0)
    return InterLayerMove(kind=MoveKind.NO_MOVE, volume_bits=0)


SHUFFLE_LANE_BITS = 64   # one inter-FPGA channel (a single 64-bit port)


def movement_cycles(move: InterLayerMove, lane_bits: int = SHUFFLE_LANE_BITS) -> int:
    """Cycles a boundary movement costs the schedule.

    Border exchanges and interleave-resolved splits ride the links while
    the next layer executes, so they cost nothing; a full reshuffle of
    the boundary tensor serializes on one link channel.
    """
    if move.kind is MoveKind.FULL_SHUFFLE:
        return ceil_div(move.volume_bits, lane_bits)
    return 0


def interlayer_moves(layers: list[LayerSpec], schemes: list[PartitionScheme],
                     precision: Precision) -> list[InterLayerMove]:
    """Boundary movements for a per-layer partition sequence (len-1 entries)."""
    if len(layers) != len(schemes):
        raise ValueError("need one scheme per layer")
    return [
        classify_interlayer(schemes[i], schemes[i + 1], layers[i],
                            layers[i + 1].kernel, precision)
        for i in range(len(layers) - 1)
    ]


@dataclass(frozen=True)
class TrafficReport:
    """Per-link exchange volume for one stage, plus the bandwidth verdict."""

    row_link_bits: float   # every row link carries the same IFM share
    col_link_bits: float   # every column link carries the same weight share
    check: TorusCheck


def plan_traffic(plan: ClusterPlan, platform: PlatformSpec,
                 mode: TransferMode = TransferMode.OFFLOAD) -> TrafficReport:
    """Steady-state per-link load of the plan's torus.

    Per exchange round a row link moves ``1/channels`` of an IFM tile and
    a column link ``1/group`` of a weight tile; loads are identical on
    every link of an axis by construction.
    """
    scheme = plan.scheme
    bits = plan.design.precision.bits
    tile = plan.design.tile
    row_bits = tile.ifm_elems * bits / scheme.channels if scheme.channels > 1 else 0.0
    col_bits = (tile.wei_elems(plan.layer.kernel) * bits / scheme.weight_group
                if scheme.weight_group > 1 else 0.0)
    ctx = TransferContext(scheme=scheme, mode=mode)
    check = torus_bandwidth_check(plan.layer, plan.design, ctx, platform)
    return TrafficReport(row_link_bits=row_bits, col_link_bits=col_bits, check=check)
