"""Layer partitioning across FPGAs and shared-data traffic offload.

A layer splits along batch / row / column / OFM-channel directions; the
factor product is the FPGA count.  Batch, row, and column slices all
need the full weight set (weight-shared); OFM-channel slices all need
the full IFM (IFM-shared).  IFM-channel splits are deliberately not
offered: they force partial sums through off-chip memory.

Two deployment modes exist for the shared data:

* ``BASELINE`` replicates it into every FPGA's off-chip memory; each
  board loads all of it over its own memory bus.
* ``OFFLOAD`` distributes it, so each board loads only ``1/group`` over
  the memory bus and swaps the rest with its peers over direct
  inter-FPGA links, shrinking the dominant memory phase by the group
  size at the cost of a link transfer that joins the stage maximum.

The hybrid case organizes boards in a 2D grid (channel slices along
columns of the grid, weight-sharing groups along rows); a 2D torus then
carries weight exchange on grid columns and IFM exchange on grid rows.
The aggregate exchange volume per board must fit within one pipeline
stage, which bounds the usable partition against the link bandwidth.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple, Optional

from .model import (
    AcceleratorDesign,
    LatencyReport,
    LayerSpec,
    PlatformSpec,
    PortConfig,
    ceil_div,
    latency,
)


class SharedData(enum.Enum):
    NONE = "none"
    WEIGHT = "weight"   # batch/row/column split: weights are the shared set
    IFM = "ifm"         # OFM-channel split: the IFM is the shared set
    HYBRID = "hybrid"   # both kinds of sharing active


@dataclass(frozen=True)
class PartitionScheme:
    """Slice counts along batch / rows / cols / OFM channels."""

    batch: int = 1
    rows: int = 1
    cols: int = 1
    channels: int = 1

    def __post_init__(self):
        for field in ("batch", "rows", "cols", "channels"):
            v = getattr(self, field)
            if not isinstance(v, int) or v < 1:
                raise ValueError(f"partition factor {field} must be an integer >= 1, got {v!r}")

    @property
    def count(self) -> int:
        """Number of FPGAs the scheme occupies."""
        return self.batch * self.rows * self.cols * self.channels

    @property
    def weight_group(self) -> int:
        """Boards that share one weight set (batch x rows x cols)."""
        return self.batch * self.rows * self.cols

    @property
    def category(self) -> SharedData:
        wg, ch = self.weight_group, self.channels
        if wg > 1 and ch > 1:
            return SharedData.HYBRID
        if wg > 1:
            return SharedData.WEIGHT
        if ch > 1:
            return SharedData.IFM
        return SharedData.NONE

    def fits(self, layer: LayerSpec) -> bool:
        return (self.batch <= layer.batch and self.rows <= layer.rows
                and self.cols <= layer.cols and self.channels <= layer.out_ch)

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.batch, self.rows, self.cols, self.channels)


class TransferMode(enum.Enum):
    BASELINE = "baseline"   # shared data replicated, no link traffic
    OFFLOAD = "offload"     # shared data distributed and exchanged over links


@dataclass(frozen=True)
class TransferContext:
    """Partition plus transfer mode and inter-FPGA lane counts.

    Lane counts default to the matching memory-port lane counts when left
    unset, i.e. the links run as wide as the memory bus streams they
    replace.
    """

    scheme: PartitionScheme
    mode: TransferMode = TransferMode.OFFLOAD
    ifm_link_lanes: Optional[int] = None
    wei_link_lanes: Optional[int] = None

    def __post_init__(self):
        for field in ("ifm_link_lanes", "wei_link_lanes"):
            v = getattr(self, field)
            if v is not None and (not isinstance(v, int) or v < 1):
                raise ValueError(f"{field} must be an integer >= 1 or None, got {v!r}")

    @property
    def offloads(self) -> bool:
        return self.mode is TransferMode.OFFLOAD and self.scheme.category is not SharedData.NONE

    def ifm_lanes(self, ports: PortConfig) -> int:
        return self.ifm_link_lanes if self.ifm_link_lanes is not None else ports.ifm

    def wei_lanes(self, ports: PortConfig) -> int:
        return self.wei_link_lanes if self.wei_link_lanes is not None else ports.wei


class ShareRevision(NamedTuple):
    """Revised memory phase and the link transfer that replaces the rest."""

    mem_cycles: int
    link_cycles: int     # per channel; all channels in a group run equal
    channel_count: int


def slice_layer(layer: LayerSpec, scheme: PartitionScheme) -> LayerSpec:
    """Largest per-FPGA slice of the layer (the balance-critical one).

    Dimensions split evenly, remainders spread one-per-slice, so the
    largest slice is the ceiling.  IFM channels are never split.
    """
    if not scheme.fits(layer):
        raise ValueError(
            f"partition {scheme.as_tuple()} exceeds layer {layer.name!r} dimensions "
            f"({layer.batch},{layer.rows},{layer.cols},{layer.out_ch})")
    return LayerSpec(
        batch=ceil_div(layer.batch, scheme.batch),
        out_ch=ceil_div(layer.out_ch, scheme.channels),
        in_ch=layer.in_ch,
        rows=ceil_div(layer.rows, scheme.rows),
        cols=ceil_div(layer.cols, scheme.cols),
        kernel=layer.kernel,
        name=layer.name,
    )


def split_weight_load(wei_elems: int, scheme: PartitionScheme,
                      wei_port_lanes: int, wei_link_lanes: int) -> ShareRevision:
    """Weight load split across the weight-sharing group.

    Each board loads ``1/group`` of the tile over the memory bus and
    receives the remainder over ``group - 1`` link channels; each channel
    carries an equal share at the link lane width.  Degenerates to the
    unrevised load when the group is 1.
    """
    group = scheme.weight_group
    mem = ceil_div(wei_elems, wei_port_lanes * group)
    if group == 1:
        return ShareRevision(mem_cycles=mem, link_cycles=0, channel_count=0)
    link = ceil_div(wei_elems, wei_link_lanes * group)
    return ShareRevision(mem_cycles=mem, link_cycles=link, channel_count=group - 1)


def split_ifm_load(ifm_elems: int, scheme: PartitionScheme,
                   ifm_port_lanes: int, ifm_link_lanes: int) -> ShareRevision:
    """IFM load split across the channel-partition group (same shape as weights)."""
    group = scheme.channels
    mem = ceil_div(ifm_elems, ifm_port_lanes * group)
    if group == 1:
        return ShareRevision(mem_cycles=mem, link_cycles=0, channel_count=0)
    link = ceil_div(ifm_elems, ifm_link_lanes * group)
    return ShareRevision(mem_cycles=mem, link_cycles=link, channel_count=group - 1)


def partitioned_latency(layer: LayerSpec, design: AcceleratorDesign,
                        ctx: TransferContext,
                        platform: Optional[PlatformSpec] = None) -> LatencyReport:
    """Per-FPGA latency of the partitioned layer under the given mode.

    Slices the layer, then evaluates the accelerator on the slice with the
    mode's phase revisions.  The tile must fit the slice (clamp first).
    """
    part = slice_layer(layer, ctx.scheme)
    return latency(part, design, transfer=ctx, platform=platform)


@dataclass(frozen=True)
class TorusCheck:
    """Exchange volume vs. link budget for one stage of the torus.

    ``row_bits``/``col_bits`` are the per-board outgoing volumes for IFM
    and weight exchange; they must drain within one pipeline stage, so
    the sustained demand is their sum over ``window_cycles``.
    """

    ok: bool
    row_bits: float
    col_bits: float
    window_cycles: int
    demand_bits_per_cycle: float
    capacity_bits_per_cycle: int

    @property
    def violations(self) -> tuple[str, ...]:
        if self.ok:
            return ()
        return (f"link demand {self.demand_bits_per_cycle:g} bits/cycle exceeds "
                f"capacity {self.capacity_bits_per_cycle}",)


def torus_bandwidth_check(layer: LayerSpec, design: AcceleratorDesign,
                          ctx: TransferContext, platform: PlatformSpec) -> TorusCheck:
    """Can the per-stage exchange volume drain through the torus links?

    Each board forwards ``(channels-1)/channels`` of an IFM tile along its
    grid row and ``(group-1)/group`` of a weight tile along its grid
    column per stage; both must complete within the stage so they never
    extend it.  Pure schemes degenerate (the absent direction contributes
    zero); baseline mode exchanges nothing.
    """
    report = partitioned_latency(layer, design, ctx)
    stage = report.stage_cycles
    bits = design.precision.bits
    tile = design.tile
    row_bits = col_bits = 0.0
    num = 0  # demand numerator in bits, scaled by (channels * group)
    ch, group = ctx.scheme.channels, ctx.scheme.weight_group
    if ctx.offloads:
        if ch > 1:
            row_bits = (ch - 1) * tile.ifm_elems * bits / ch
            num += (ch - 1) * tile.ifm_elems * bits * group
        if group > 1:
            col_bits = (group - 1) * tile.wei_elems(layer.kernel) * bits / group
            num += (group - 1) * tile.wei_elems(layer.kernel) * bits * ch
    # exact integer form of  row_bits + col_bits <= link_bits * stage
    ok = num <= platform.link_bits * stage * ch * group
    return TorusCheck(
        ok=ok,
        row_bits=row_bits,
        col_bits=col_bits,
        window_cycles=stage,
        demand_bits_per_cycle=(row_bits + col_bits) / stage,
        capacity_bits_per_cycle=platform.link_bits,
    )
