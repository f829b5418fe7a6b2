"""Analytic latency and resource model of a tiled convolution accelerator.

One accelerator processes a convolution layer by streaming data tiles
between off-chip memory and on-chip double buffers while a ``tm x tn``
multiply-accumulate array consumes them.  Per trip the accelerator loads
an IFM tile of ``tn*tr*tc`` pixels over ``ifm`` memory lanes, a weight
tile of ``tm*tn*k*k`` values over ``wei`` lanes, computes ``k*k*tr*tc``
array invocations, and drains an OFM tile of ``tm*tr*tc`` values over
``ofm`` lanes.  Double buffering overlaps the loads for trip t+1 with the
compute of trip t, and the OFM store overlaps the next input-channel
sweep, so the whole-layer latency collapses to a closed form:

    stage_cycles = max(comp, ifm_load, wei_load, link_transfer)
    block_cycles = max(trips.in_ch * stage_cycles, ofm_store)
    total_cycles = trips.batch * trips.spatial * trips.out_ch * block_cycles
                   + ofm_store + stage_cycles

The phase that realizes ``stage_cycles`` (or an OFM store slower than a
full input-channel sweep) is the design's bottleneck.

Conventions baked into this module:

* Every cycle count is an integer; divisions round up (hardware cannot
  spend fractional cycles).
* One BRAM block holds 18 Kib = 18432 bits; every buffer is doubled for
  double buffering, so block counts are even.
* Layers carry output dimensions only.  Stride/padding are resolved by
  the caller when deriving ``rows``/``cols``; halo overlap of IFM tiles
  is deliberately not modeled (the simulator uses the same convention).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple, Optional, TYPE_CHECKING

if TYPE_CHECKING:  # pragma: no cover - import cycle guard for type hints only
    from .partition import TransferContext

BRAM_BLOCK_BITS = 18 * 1024


def ceil_div(a: int, b: int) -> int:
    return -(-a // b)


class Precision(enum.Enum):
    """Arithmetic mode: (config key, operand bits, DSPs per MAC)."""

    FLOAT32 = ("float32", 32, 5)
    FIXED16 = ("fixed16", 16, 1)

    def __init__(self, key: str, bits: int, dsp_per_mac: int):
        self.key = key
        self.bits = bits
        self.dsp_per_mac = dsp_per_mac

    @classmethod
    def from_key(cls, key: str) -> "Precision":
        for p in cls:
            if p.key == key.lower():
                return p
        raise ValueError(f"unknown precision {key!r} (use float32 or fixed16)")

    @property
    def default_freq_mhz(self) -> int:
        return 200 if self is Precision.FIXED16 else 100


@dataclass(frozen=True)
class LayerSpec:
    """One convolution layer: batch, channel, spatial, and kernel extents.

    ``rows``/``cols`` are OFM dimensions; ``in_ch`` is the IFM channel
    count actually convolved (grouped convolutions are folded by the
    network loader into ``in_ch = n / groups`` with ``out_ch`` intact).
    """

    batch: int
    out_ch: int
    in_ch: int
    rows: int
    cols: int
    kernel: int
    name: str = ""

    def __post_init__(self):
        for field in ("batch", "out_ch", "in_ch", "rows", "cols", "kernel"):
            v = getattr(self, field)
            if not isinstance(v, int) or v < 1:
                raise ValueError(f"layer {self.name!r}: {field} must be an integer >= 1, got {v!r}")

    @property
    def macs(self) -> int:
        return (self.batch * self.out_ch * self.in_ch
                * self.rows * self.cols * self.kernel * self.kernel)


@dataclass(frozen=True)
class TileConfig:
    """On-chip tile extents along OFM channels, IFM channels, rows, cols."""

    tm: int
    tn: int
    tr: int
    tc: int

    def __post_init__(self):
        for field in ("tm", "tn", "tr", "tc"):
            v = getattr(self, field)
            if not isinstance(v, int) or v < 1:
                raise ValueError(f"tile {field} must be an integer >= 1, got {v!r}")

    def clamped(self, layer: LayerSpec) -> "TileConfig":
        """Shrink each extent to the layer dimension it tiles."""
        return TileConfig(
            tm=min(self.tm, layer.out_ch),
            tn=min(self.tn, layer.in_ch),
            tr=min(self.tr, layer.rows),
            tc=min(self.tc, layer.cols),
        )

    def fits(self, layer: LayerSpec) -> bool:
        return (self.tm <= layer.out_ch and self.tn <= layer.in_ch
                and self.tr <= layer.rows and self.tc <= layer.cols)

    @property
    def ifm_elems(self) -> int:
        return self.tn * self.tr * self.tc

    @property
    def ofm_elems(self) -> int:
        return self.tm * self.tr * self.tc

    def wei_elems(self, kernel: int) -> int:
        return self.tm * self.tn * kernel * kernel


@dataclass(frozen=True)
class PortConfig:
    """Parallel stream lanes moving IFM / weight / OFM data per cycle."""

    ifm: int
    wei: int
    ofm: int

    def __post_init__(self):
        for field in ("ifm", "wei", "ofm"):
            v = getattr(self, field)
            if not isinstance(v, int) or v < 1:
                raise ValueError(f"port lane count {field} must be an integer >= 1, got {v!r}")

    @property
    def total(self) -> int:
        return self.ifm + self.wei + self.ofm


@dataclass(frozen=True)
class PlatformSpec:
    """Per-FPGA resource budget plus inter-FPGA link bandwidth.

    ``bram`` counts 18Kb blocks; ``bus_bits`` is the memory-bus width;
    ``link_bits`` is the inter-FPGA bandwidth in bits per cycle in one
    direction.
    """

    name: str
    dsp: int
    bram: int
    bus_bits: int
    link_bits: int

    def __post_init__(self):
        for field in ("dsp", "bram", "bus_bits"):
            v = getattr(self, field)
            if not isinstance(v, int) or v < 1:
                raise ValueError(f"platform {field} must be an integer >= 1, got {v!r}")
        if not isinstance(self.link_bits, int) or self.link_bits < 0:
            raise ValueError(f"platform link_bits must be an integer >= 0, got {self.link_bits!r}")


@dataclass(frozen=True)
class AcceleratorDesign:
    """Free design variables of one FPGA's accelerator."""

    tile: TileConfig
    ports: PortConfig
    precision: Precision


@dataclass(frozen=True)
class ResourceUsage:
    dsps: int
    bram_ifm: int
    bram_ofm: int
    bram_wei: int
    bus_bits: int

    @property
    def bram_total(self) -> int:
        return self.bram_ifm + self.bram_ofm + self.bram_wei


class Bottleneck(enum.Enum):
    COMPUTE = "compute"
    LINK = "link"
    WEIGHT = "weight"
    IFM = "ifm"
    OFM = "ofm"


class TripCounts(NamedTuple):
    in_ch: int    # innermost: IFM-channel sweeps per output tile
    out_ch: int   # OFM-channel tiles
    spatial: int  # row x column tile positions
    batch: int    # outermost: batch elements


class Phases(NamedTuple):
    """Per-trip phase latencies in cycles (before pipeline composition)."""

    ifm: int
    wei: int
    ofm: int
    comp: int


@dataclass(frozen=True)
class ResourceCheck:
    ok: bool
    violations: tuple[str, ...]
    usage: ResourceUsage


@dataclass(frozen=True)
class LatencyReport:
    """Latency decomposition of one layer on one accelerator."""

    ifm_cycles: int
    wei_cycles: int
    ofm_cycles: int
    comp_cycles: int
    link_cycles: int
    stage_cycles: int
    block_cycles: int
    total_cycles: int
    trips: TripCounts
    bottleneck: Bottleneck
    usage: ResourceUsage


def dsp_usage(tile: TileConfig, precision: Precision) -> int:
    """DSP blocks consumed by the tm x tn MAC array."""
    return precision.dsp_per_mac * tile.tm * tile.tn


def bram_usage(tile: TileConfig, kernel: int, precision: Precision) -> tuple[int, int, int]:
    """18Kb blocks for the (IFM, OFM, weight) buffers, double-buffered.

    Buffers are fully partitioned along the dimensions the MAC array reads
    in parallel, so the block count scales with the partition factor times
    the blocks needed per partition slice.
    """
    bits = precision.bits
    per_pixel_plane = ceil_div(tile.tr * tile.tc * bits, BRAM_BLOCK_BITS)
    per_kernel_plane = ceil_div(kernel * kernel * bits, BRAM_BLOCK_BITS)
    b_ifm = 2 * tile.tn * per_pixel_plane
    b_ofm = 2 * tile.tm * per_pixel_plane
    b_wei = 2 * tile.tm * tile.tn * per_kernel_plane
    return b_ifm, b_ofm, b_wei


def resource_usage(design: AcceleratorDesign, kernel: int) -> ResourceUsage:
    b_ifm, b_ofm, b_wei = bram_usage(design.tile, kernel, design.precision)
    return ResourceUsage(
        dsps=dsp_usage(design.tile, design.precision),
        bram_ifm=b_ifm,
        bram_ofm=b_ofm,
        bram_wei=b_wei,
        bus_bits=design.precision.bits * design.ports.total,
    )


def resource_check(design: AcceleratorDesign, layer: LayerSpec,
                   platform: PlatformSpec) -> ResourceCheck:
    """Collect every violated hard constraint; ok iff none violated."""
    usage = resource_usage(design, layer.kernel)
    violations = []
    if usage.dsps > platform.dsp:
        violations.append(f"dsp: {usage.dsps} > budget {platform.dsp}")
    if usage.bram_total > platform.bram:
        violations.append(f"bram: {usage.bram_total} > budget {platform.bram}")
    if usage.bus_bits > platform.bus_bits:
        violations.append(f"bus: {usage.bus_bits} bits > width {platform.bus_bits}")
    t, names = design.tile, ("tm", "tn", "tr", "tc")
    dims = (layer.out_ch, layer.in_ch, layer.rows, layer.cols)
    for name, val, dim in zip(names, (t.tm, t.tn, t.tr, t.tc), dims):
        if val > dim:
            violations.append(f"tile: {name}={val} exceeds layer dimension {dim}")
    return ResourceCheck(ok=not violations, violations=tuple(violations), usage=usage)


def trip_counts(layer: LayerSpec, tile: TileConfig) -> TripCounts:
    """Loop trip counts needed to cover the layer with the given tile."""
    return TripCounts(
        in_ch=ceil_div(layer.in_ch, tile.tn),
        out_ch=ceil_div(layer.out_ch, tile.tm),
        spatial=ceil_div(layer.cols, tile.tc) * ceil_div(layer.rows, tile.tr),
        batch=layer.batch,
    )


def phase_latencies(layer: LayerSpec, design: AcceleratorDesign) -> Phases:
    """Per-trip cycles to load IFM, load weights, store OFM, and compute.

    A transfer moves one tile at one element per lane per cycle; compute
    runs the MAC array once per kernel position per tile pixel.
    """
    tile, ports = design.tile, design.ports
    k = layer.kernel
    return Phases(
        ifm=ceil_div(tile.ifm_elems, ports.ifm),
        wei=ceil_div(tile.wei_elems(k), ports.wei),
        ofm=ceil_div(tile.ofm_elems, ports.ofm),
        comp=k * k * tile.tr * tile.tc,
    )


def classify_bottleneck(report: LatencyReport) -> Bottleneck:
    """Which phase bounds the design.

    OFM wins only when the store strictly exceeds a full input-channel
    sweep; otherwise the phase realizing the stage time wins, with exact
    ties resolved compute > link > weight > ifm for determinism.
    """
    return _classify(report.ifm_cycles, report.wei_cycles, report.ofm_cycles,
                     report.comp_cycles, report.link_cycles,
                     report.stage_cycles, report.trips.in_ch)


def _classify(ifm: int, wei: int, ofm: int, comp: int, link: int,
              stage: int, trips_in_ch: int) -> Bottleneck:
    if ofm > trips_in_ch * stage:
        return Bottleneck.OFM
    if comp == stage:
        return Bottleneck.COMPUTE
    if link == stage:
        return Bottleneck.LINK
    if wei == stage:
        return Bottleneck.WEIGHT
    return Bottleneck.IFM


def latency(layer: LayerSpec, design: AcceleratorDesign,
            transfer: Optional["TransferContext"] = None,
            platform: Optional[PlatformSpec] = None) -> LatencyReport:
    """Whole-layer latency of one accelerator, with optional traffic offload.

    When ``transfer`` is given the layer must already be the per-FPGA
    slice; shared-data loads shrink by the sharing group size and the
    matching inter-FPGA transfer joins the stage maximum (offload mode
    only).  Raises ValueError if the tile exceeds the layer, or if
    ``platform`` is supplied and any resource budget is violated.
    """
    if not design.tile.fits(layer):
        raise ValueError(
            f"tile {design.tile} exceeds layer {layer.name!r} dimensions; clamp it first")
    if platform is not None:
        check = resource_check(design, layer, platform)
        if not check.ok:
            raise ValueError("infeasible design: " + "; ".join(check.violations))

    phases = phase_latencies(layer, design)
    ifm, wei, ofm, comp = phases
    link = 0
    if transfer is not None and transfer.offloads:
        from .partition import split_ifm_load, split_weight_load

        wei_share = split_weight_load(
            design.tile.wei_elems(layer.kernel), transfer.scheme,
            design.ports.wei, transfer.wei_lanes(design.ports))
        ifm_share = split_ifm_load(
            design.tile.ifm_elems, transfer.scheme,
            design.ports.ifm, transfer.ifm_lanes(design.ports))
        wei, ifm = wei_share.mem_cycles, ifm_share.mem_cycles
        link = max(wei_share.link_cycles, ifm_share.link_cycles)

    trips = trip_counts(layer, design.tile)
    stage = max(comp, ifm, wei, link)
    block = max(trips.in_ch * stage, ofm)
    total = trips.batch * trips.spatial * trips.out_ch * block + ofm + stage
    report = LatencyReport(
        ifm_cycles=ifm, wei_cycles=wei, ofm_cycles=ofm, comp_cycles=comp,
        link_cycles=link, stage_cycles=stage, block_cycles=block,
        total_cycles=total, trips=trips,
        bottleneck=_classify(ifm, wei, ofm, comp, link, stage, trips.in_ch),
        usage=resource_usage(design, layer.kernel),
    )
    return report


def compute_floor(layer: LayerSpec, tile: TileConfig, kernel: int | None = None) -> int:
    """Lower bound on total cycles: every trip costs at least the compute phase."""
    k = layer.kernel if kernel is None else kernel
    trips = trip_counts(layer, tile)
    return trips.batch * trips.spatial * trips.out_ch * trips.in_ch * k * k * tile.tr * tile.tc
