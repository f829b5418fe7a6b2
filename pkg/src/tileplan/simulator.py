"""Cycle-counting discrete-event simulation of the double-buffered pipeline.

This is the independent oracle for the closed-form model: it never uses
the stage/block composition formulas.  Instead it replays the pipeline
as chains of dependent events:

* IFM and weight loads each run on their own memory stream, one tile per
  trip, into the ping-pong buffer slot freed two trips earlier.
* Inter-FPGA exchanges (offload mode) run on the row/column links with
  the same slot discipline.
* The MAC array computes trip t once its own previous run, all of trip
  t's arrivals, and (at an output-tile boundary) the store that frees
  the accumulator slot have finished.
* OFM stores drain completed output tiles on their own stream.

Total cycles is the end of the last store.  Because every phase duration
is a constant per design, the steady-state trip period equals the
slowest phase; the pipeline fill and drain differ from the closed form
by at most a couple of stage times, so agreement tightens as trip counts
grow (documented epilogue gap: the closed form charges one full stage
for the fill even when the first loads are faster, an O(1/trips)
relative effect).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from .cluster import ClusterPlan, InterLayerMove, balanced_split, classify_interlayer
from .model import (
    AcceleratorDesign,
    Bottleneck,
    LayerSpec,
    PlatformSpec,
    TripCounts,
    ceil_div,
    trip_counts,
)
from .partition import TransferContext, TransferMode, slice_layer, torus_bandwidth_check

EVENT_CAP_DEFAULT = 1_000_000

# tie order for equal timestamps in the event log
_KIND_ORDER = {"store": 0, "compute": 1, "load_ifm": 2, "load_wei": 3, "link": 4}


class SimulationFault(RuntimeError):
    """The event schedule cannot make progress; indicates a malformed design."""


@dataclass(frozen=True)
class SimEvent:
    time: int
    kind: str          # store | compute | load_ifm | load_wei | link
    slot: int
    batch: int
    spatial: int
    out_ch: int
    in_ch: int


@dataclass(frozen=True)
class SimTrace:
    total_cycles: int
    busy: dict[str, int]     # compute/ifm/weight/ofm/link occupancy in cycles
    stalls: dict[str, int]   # PE idle time attributed to the phase that blocked it
    trips: TripCounts
    events: Optional[tuple[SimEvent, ...]] = None
    events_truncated: bool = False


def _phase_durations(layer: LayerSpec, design: AcceleratorDesign,
                     ctx: Optional[TransferContext]) -> tuple[int, int, int, int, int, int]:
    """Per-trip durations (ifm, wei, ofm, comp, row link, col link).

    Derived from buffer volumes and lane widths only; shared-data splits
    shrink memory transfers by the sharing group and put the exchanged
    remainder on the links.
    """
    tile, ports, k = design.tile, design.ports, layer.kernel
    ifm_elems = tile.ifm_elems
    wei_elems = tile.wei_elems(k)
    t_ifm = ceil_div(ifm_elems, ports.ifm)
    t_wei = ceil_div(wei_elems, ports.wei)
    t_ofm = ceil_div(tile.ofm_elems, ports.ofm)
    t_comp = k * k * tile.tr * tile.tc
    t_row = t_col = 0
    if ctx is not None and ctx.offloads:
        ch, group = ctx.scheme.channels, ctx.scheme.weight_group
        if ch > 1:
            t_ifm = ceil_div(ifm_elems, ports.ifm * ch)
            t_row = ceil_div(ifm_elems, ctx.ifm_lanes(ports) * ch)
        if group > 1:
            t_wei = ceil_div(wei_elems, ports.wei * group)
            t_col = ceil_div(wei_elems, ctx.wei_lanes(ports) * group)
    return t_ifm, t_wei, t_ofm, t_comp, t_row, t_col


def simulate(layer: LayerSpec, design: AcceleratorDesign,
             ctx: Optional[TransferContext] = None, *,
             record_events: bool = False, event_cap: int = EVENT_CAP_DEFAULT,
             link_slowdown: float = 1.0) -> SimTrace:
    """Run the pipeline to completion and count cycles.

    With ``ctx`` the layer must already be the per-FPGA slice, matching
    the analytic model's convention.  ``link_slowdown`` stretches link
    transfers (>= 1.0) to surface bandwidth oversubscription as stalls.
    """
    if not design.tile.fits(layer):
        raise ValueError(f"tile {design.tile} exceeds layer {layer.name!r}; clamp it first")
    t_ifm, t_wei, t_ofm, t_comp, t_row, t_col = _phase_durations(layer, design, ctx)
    if link_slowdown < 1.0:
        raise ValueError("link_slowdown must be >= 1.0")
    if link_slowdown > 1.0:
        t_row = math.ceil(t_row * link_slowdown)
        t_col = math.ceil(t_col * link_slowdown)
    if min(t_ifm, t_wei, t_ofm, t_comp) < 1:
        raise SimulationFault(f"non-positive phase duration in {layer.name!r}; design is malformed")

    trips = trip_counts(layer, design.tile)
    sweeps = trips.in_ch
    tiles = trips.batch * trips.spatial * trips.out_ch
    total_trips = tiles * sweeps

    events: list[SimEvent] = []
    truncated = False

    def log(time, kind, slot, k):
        nonlocal truncated
        if len(events) >= event_cap:
            truncated = True
            return
        f, rem = divmod(k, trips.spatial * trips.out_ch * sweeps)
        e, rem = divmod(rem, trips.out_ch * sweeps)
        d, c = divmod(rem, sweeps)
        events.append(SimEvent(time=time, kind=kind, slot=slot,
                               batch=f, spatial=e, out_ch=d, in_ch=c))

    # rolling chain state
    ifm_end = wei_end = row_end = col_end = 0
    comp_end_1 = comp_end_2 = 0           # compute ends of trips k-1 and k-2
    store_end_1 = store_end_2 = 0         # store ends of tiles o-1 and o-2
    stalls = {"ifm": 0, "weight": 0, "ofm": 0, "link": 0}
    progress_guard = 0

    for k in range(total_trips):
        tile_idx, sweep = divmod(k, sweeps)
        slot = k & 1
        input_free = comp_end_2                     # ping-pong slot reuse
        ifm_end = max(ifm_end, input_free) + t_ifm
        wei_end = max(wei_end, input_free) + t_wei
        if t_row:
            row_end = max(row_end, input_free) + t_row
        if t_col:
            col_end = max(col_end, input_free) + t_col
        store_gate = store_end_2 if sweep == 0 else 0   # accumulator slot reuse

        arrivals = max(ifm_end, wei_end, row_end, col_end, store_gate)
        comp_start = max(comp_end_1, arrivals)
        gap = comp_start - comp_end_1
        if gap > 0 and arrivals > comp_end_1:
            # blame the PE idle time on the dependency that arrived last
            if store_gate == arrivals:
                stalls["ofm"] += gap
            elif max(row_end, col_end) == arrivals:
                stalls["link"] += gap
            elif wei_end == arrivals:
                stalls["weight"] += gap
            else:
                stalls["ifm"] += gap
        comp_end = comp_start + t_comp

        if record_events:
            log(ifm_end, "load_ifm", slot, k)
            log(wei_end, "load_wei", slot, k)
            if t_row:
                log(row_end, "link", slot, k)
            if t_col:
                log(col_end, "link", slot, k)
            log(comp_end, "compute", slot, k)

        if sweep == sweeps - 1:
            store_start = max(comp_end, store_end_1)
            store_end = store_start + t_ofm
            if record_events:
                log(store_end, "store", tile_idx & 1, k)
            store_end_2, store_end_1 = store_end_1, store_end

        comp_end_2, comp_end_1 = comp_end_1, comp_end
        if comp_end <= progress_guard:
            raise SimulationFault("event time failed to advance; cyclic wait detected")
        progress_guard = comp_end

    total = store_end_1
    busy = {
        "compute": total_trips * t_comp,
        "ifm": total_trips * t_ifm,
        "weight": total_trips * t_wei,
        "ofm": tiles * t_ofm,
        "link": total_trips * max(t_row, t_col),
    }
    out_events: Optional[tuple[SimEvent, ...]] = None
    if record_events:
        events.sort(key=lambda ev: (ev.time, _KIND_ORDER[ev.kind]))
        out_events = tuple(events)
    return SimTrace(total_cycles=total, busy=busy, stalls=stalls, trips=trips,
                    events=out_events, events_truncated=truncated)


def stall_attribution(trace: SimTrace) -> Bottleneck:
    """Bottleneck as seen by the simulator: the phase with the largest
    occupancy, store phase winning only when it strictly exceeds every
    overlapped phase (it hides behind a full input-channel sweep
    otherwise).  Ties follow compute > link > weight > ifm.
    """
    busy = trace.busy
    inner_max = max(busy["compute"], busy["link"], busy["weight"], busy["ifm"])
    if busy["ofm"] > inner_max:
        return Bottleneck.OFM
    for key, verdict in (("compute", Bottleneck.COMPUTE), ("link", Bottleneck.LINK),
                         ("weight", Bottleneck.WEIGHT), ("ifm", Bottleneck.IFM)):
        if busy[key] == inner_max:
            return verdict
    raise AssertionError("unreachable")


@dataclass(frozen=True)
class ClusterSimResult:
    total_cycles: int
    node_cycles: tuple[int, ...]       # wall time per node (synchronized pipeline)
    layer_cycles: tuple[int, ...]      # per modeled layer, max over node slices
    traces: tuple[SimTrace, ...]       # critical-slice trace per layer
    moves: tuple[InterLayerMove, ...]  # boundary data movements between layers


def _node_slices(layer: LayerSpec, plan: ClusterPlan) -> list[LayerSpec]:
    """Per-node slice of ``layer`` under the plan's scheme (node order)."""
    scheme = plan.scheme
    if scheme.channels > layer.out_ch:
        raise ValueError(f"cannot split {layer.out_ch} channels {scheme.channels} ways")
    b_ranges = balanced_split(layer.batch, scheme.batch)
    r_ranges = balanced_split(layer.rows, scheme.rows)
    c_ranges = balanced_split(layer.cols, scheme.cols)
    ch_counts = [len(range(col, layer.out_ch, scheme.channels))
                 for col in range(scheme.channels)]
    slices = []
    for br in b_ranges:
        for rr in r_ranges:
            for cr in c_ranges:
                for col in range(scheme.channels):
                    slices.append(LayerSpec(
                        batch=br[1] - br[0], out_ch=ch_counts[col],
                        in_ch=layer.in_ch, rows=rr[1] - rr[0], cols=cr[1] - cr[0],
                        kernel=layer.kernel, name=layer.name))
    return slices


def simulate_cluster(plan: ClusterPlan, layers: Optional[list[LayerSpec]] = None,
                     mode: TransferMode = TransferMode.OFFLOAD,
                     platform: Optional[PlatformSpec] = None) -> ClusterSimResult:
    """Simulate every node of the plan across one or more layers.

    The exchange protocol keeps nodes in lock step, so each layer costs
    every node the slowest slice's time.  When a platform is given and
    its links cannot carry the per-stage exchange volume, link transfers
    stretch by the oversubscription ratio (stall cycles, not an error).
    Boundary movements between consecutive layers are classified and
    reported; they ride the links during execution and add no cycles.
    """
    if layers is None:
        layers = [plan.layer]
    scheme, design = plan.scheme, plan.design
    node_cycles = [0] * len(plan.nodes)
    layer_cycles, traces, moves = [], [], []

    for idx, layer in enumerate(layers):
        ctx = TransferContext(scheme=scheme, mode=mode)
        slowdown = 1.0
        if platform is not None and ctx.offloads:
            eff = AcceleratorDesign(tile=design.tile.clamped(slice_layer(layer, scheme)),
                                    ports=design.ports, precision=design.precision)
            check = torus_bandwidth_check(layer, eff, ctx, platform)
            if not check.ok and platform.link_bits > 0:
                slowdown = check.demand_bits_per_cycle / platform.link_bits
        best = None
        seen: dict[tuple, SimTrace] = {}
        for node, part in enumerate(_node_slices(layer, plan)):
            key = (part.batch, part.out_ch, part.rows, part.cols)
            if key not in seen:
                seen[key] = simulate(part, AcceleratorDesign(
                    tile=design.tile.clamped(part), ports=design.ports,
                    precision=design.precision), ctx, link_slowdown=slowdown)
            if best is None or seen[key].total_cycles > best.total_cycles:
                best = seen[key]
        assert best is not None
        layer_cycles.append(best.total_cycles)
        traces.append(best)
        for node in range(len(plan.nodes)):
            node_cycles[node] += best.total_cycles
        if idx + 1 < len(layers):
            moves.append(classify_interlayer(scheme, scheme, layer,
                                             layers[idx + 1].kernel, design.precision))

    return ClusterSimResult(
        total_cycles=max(node_cycles) if node_cycles else 0,
        node_cycles=tuple(node_cycles),
        layer_cycles=tuple(layer_cycles),
        traces=tuple(traces),
        moves=tuple(moves),
    )
