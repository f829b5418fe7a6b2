"""Design-space exploration: minimize whole-network latency.

The objective is an integer program over tile extents, port lanes, and
partition factors under the DSP / BRAM / bus-width / link-bandwidth
constraints.  It is solved by pruned exhaustive enumeration:

* Tile candidates per dimension are the divisors of the dimension plus
  every distinct ceiling quotient ``ceil(dim/k)`` (non-divisor values in
  between are dominated because trip counts only move at those
  boundaries), capped so a dimension pair never exceeds 4096 points.
* Candidate points are pre-filtered by the resource constraints, then
  evaluated with the closed-form latency (vectorized over the tile
  grid).  A point whose compute floor - trips times the compute phase -
  already exceeds the incumbent is pruned without full evaluation, as is
  any point whose partial multi-layer sum passes the incumbent.
* Ties break toward fewer FPGAs, then lower BRAM, then lexicographic
  design order, so results are deterministic and independent of how the
  evaluation is batched.

``exhaustive_reference`` re-runs the same search with plain Python loops
through the scalar model (optionally unpruned); tests hold the two paths
equal.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .model import (
    BRAM_BLOCK_BITS,
    AcceleratorDesign,
    Bottleneck,
    LatencyReport,
    LayerSpec,
    PlatformSpec,
    PortConfig,
    Precision,
    TileConfig,
    ceil_div,
    compute_floor,
    latency,
    resource_check,
)
from .partition import (
    PartitionScheme,
    TransferContext,
    TransferMode,
    slice_layer,
    torus_bandwidth_check,
)

_HUGE = np.iinfo(np.int64).max // 4


class InfeasibleSearchError(ValueError):
    """Every enumerated point violates at least one hard constraint."""


def candidate_tile_values(dim: int, cap: int = 64) -> tuple[int, ...]:
    """Divisor-and-boundary tile candidates for one layer dimension."""
    values = {d for d in range(1, dim + 1) if dim % d == 0}
    values.update(ceil_div(dim, k) for k in range(1, dim + 1))
    ordered = sorted(values)
    if len(ordered) <= cap:
        return tuple(ordered)
    # deterministic thinning that always keeps 1 and the full dimension
    idx = np.unique(np.linspace(0, len(ordered) - 1, cap).round().astype(int))
    return tuple(ordered[i] for i in idx)


def enumerate_schemes(max_fpgas: int, layers: Sequence[LayerSpec]) -> tuple[PartitionScheme, ...]:
    """All partitions with at most ``max_fpgas`` boards that fit every layer."""
    b_max = min(l.batch for l in layers)
    r_max = min(l.rows for l in layers)
    c_max = min(l.cols for l in layers)
    m_max = min(l.out_ch for l in layers)
    found = []
    for pb in range(1, min(b_max, max_fpgas) + 1):
        for pr in range(1, min(r_max, max_fpgas // pb) + 1):
            for pc in range(1, min(c_max, max_fpgas // (pb * pr)) + 1):
                for pm in range(1, min(m_max, max_fpgas // (pb * pr * pc)) + 1):
                    found.append(PartitionScheme(batch=pb, rows=pr, cols=pc, channels=pm))
    found.sort(key=lambda s: (s.count,) + s.as_tuple())
    return tuple(found)


def default_ports(precision: Precision, platform: PlatformSpec) -> tuple[PortConfig, ...]:
    """One sensible lane split: weights get twice the IFM/OFM width."""
    base = max(1, platform.bus_bits // (4 * precision.bits))
    return (PortConfig(ifm=base, wei=2 * base, ofm=base),)


@dataclass(frozen=True)
class SearchSpace:
    """Enumerable region of the design space.

    ``None`` tile/port/scheme entries derive defaults from the layers and
    platform; explicit tuples pin them (the fixture route).
    """

    precision: Precision = Precision.FIXED16
    max_fpgas: int = 1
    mode: TransferMode = TransferMode.OFFLOAD
    tm: Optional[tuple[int, ...]] = None
    tn: Optional[tuple[int, ...]] = None
    tr: Optional[tuple[int, ...]] = None
    tc: Optional[tuple[int, ...]] = None
    ports: Optional[tuple[PortConfig, ...]] = None
    schemes: Optional[tuple[PartitionScheme, ...]] = None
    dim_cap: int = 64


@dataclass(frozen=True)
class SchemePoint:
    """Best design found for one partition scheme (a scatter point)."""

    scheme: PartitionScheme
    tile: TileConfig
    ports: PortConfig
    cycles: int
    bottleneck: Bottleneck


@dataclass(frozen=True)
class DseResult:
    design: AcceleratorDesign
    scheme: PartitionScheme
    mode: TransferMode
    total_cycles: int
    reports: tuple[LatencyReport, ...]   # one per layer searched over
    pareto: tuple[tuple[int, int], ...]  # (fpga_count, best cycles) per exact count
    per_scheme: tuple[SchemePoint, ...]
    explored: int
    pruned: int
    elapsed: float


def _cdiv(a, b):
    return -(-a // b)


def _tile_axes(space: SearchSpace, layers: Sequence[LayerSpec]):
    def axis(explicit, dims):
        if explicit is not None:
            return np.array(sorted(set(explicit)), dtype=np.int64)
        vals: set[int] = set()
        for d in dims:
            vals.update(candidate_tile_values(d, space.dim_cap))
        return np.array(sorted(vals), dtype=np.int64)

    return (
        axis(space.tm, [l.out_ch for l in layers]),
        axis(space.tn, [l.in_ch for l in layers]),
        axis(space.tr, [l.rows for l in layers]),
        axis(space.tc, [l.cols for l in layers]),
    )


def _grid_eval(layers, scheme, ports, space, platform, incumbent, axes):
    """Evaluate every tile point for one (scheme, ports) pair.

    Returns (best key tuple or None, explored, pruned).  Key layout:
    (cycles, fpga_count, worst bram, tm, tn, tr, tc, ifm, wei, ofm,
    pb, pr, pc, pm) - the global deterministic tie-break order.
    """
    prec = space.precision
    bits = prec.bits
    offload = space.mode is TransferMode.OFFLOAD
    ch, group = scheme.channels, scheme.weight_group
    if bits * ports.total > platform.bus_bits:
        return None, 0, 0

    tmv, tnv, trv, tcv = axes
    sliced = [slice_layer(l, scheme) for l in layers]
    max_m = max(l.out_ch for l in sliced)
    max_n = max(l.in_ch for l in sliced)

    # (tm, tn) pairs surviving the worst-case DSP / weight-buffer filter
    tm_g, tn_g = np.meshgrid(tmv, tnv, indexing="ij")
    tm_g, tn_g = tm_g.ravel(), tn_g.ravel()
    tm_w, tn_w = np.minimum(tm_g, max_m), np.minimum(tn_g, max_n)
    keep = (prec.dsp_per_mac * tm_w * tn_w <= platform.dsp) & \
           (2 * tm_w * tn_w <= platform.bram)
    tm_g, tn_g = tm_g[keep], tn_g[keep]
    if tm_g.size == 0:
        return None, 0, 0

    tr_g, tc_g = np.meshgrid(trv, tcv, indexing="ij")
    tr_g, tc_g = tr_g.ravel(), tc_g.ravel()

    n_mn, n_rc = tm_g.size, tr_g.size
    alive = np.ones((n_mn, n_rc), dtype=bool)
    lat_sum = np.zeros((n_mn, n_rc), dtype=np.int64)
    bram_worst = np.zeros((n_mn, n_rc), dtype=np.int64)
    explored = pruned = 0

    for layer in sliced:
        if not alive.any():
            break
        k = layer.kernel
        tme = np.minimum(tm_g, layer.out_ch)[:, None]
        tne = np.minimum(tn_g, layer.in_ch)[:, None]
        tre = np.minimum(tr_g, layer.rows)[None, :]
        tce = np.minimum(tc_g, layer.cols)[None, :]

        pix = tre * tce
        pix_planes = _cdiv(pix * bits, BRAM_BLOCK_BITS)
        ker_planes = ceil_div(k * k * bits, BRAM_BLOCK_BITS)
        bram = 2 * (tne + tme) * pix_planes + 2 * tme * tne * ker_planes
        feasible = (bram <= platform.bram) & \
                   (prec.dsp_per_mac * tme * tne <= platform.dsp)

        comp = k * k * pix
        t_in = _cdiv(layer.in_ch, tne)
        t_out = _cdiv(layer.out_ch, tme)
        spatial = _cdiv(layer.rows, tre) * _cdiv(layer.cols, tce)
        floor = layer.batch * spatial * t_out * t_in * comp

        newly_pruned = alive & feasible & (lat_sum + floor > incumbent)
        pruned += int(newly_pruned.sum())
        alive &= feasible & ~newly_pruned
        if not alive.any():
            break

        ifm_elems = tne * pix
        wei_elems = tme * tne * (k * k)
        div_i = ch if (offload and ch > 1) else 1
        div_w = group if (offload and group > 1) else 1
        ifm = _cdiv(ifm_elems, ports.ifm * div_i)
        wei = _cdiv(wei_elems, ports.wei * div_w)
        ofm = _cdiv(tme * pix, ports.ofm)
        # link transfers run at the memory lane widths here, so they equal
        # the revised loads and the stage maximum already covers them
        stage = np.maximum(np.maximum(comp, ifm), wei)

        if offload and (ch > 1 or group > 1):
            demand = np.zeros_like(stage)
            if ch > 1:
                demand = demand + (ch - 1) * ifm_elems * bits * group
            if group > 1:
                demand = demand + (group - 1) * wei_elems * bits * ch
            alive &= demand <= platform.link_bits * stage * ch * group
            if not alive.any():
                break

        block = np.maximum(t_in * stage, ofm)
        lat = layer.batch * spatial * t_out * block + ofm + stage
        lat_sum = np.where(alive, lat_sum + lat, lat_sum)
        bram_worst = np.maximum(bram_worst, np.where(alive, bram, 0))
        over = alive & (lat_sum > incumbent)  # partial sums only grow; keep ties
        pruned += int(over.sum())
        alive &= ~over

    if not alive.any():
        return None, explored, pruned
    ai, bi = np.nonzero(alive)
    explored += ai.size
    cyc = lat_sum[ai, bi]
    order = np.lexsort((tc_g[bi], tr_g[bi], tn_g[ai], tm_g[ai],
                        bram_worst[ai, bi], cyc))
    j = order[0]
    key = (int(cyc[j]), scheme.count, int(bram_worst[ai[j], bi[j]]),
           int(tm_g[ai[j]]), int(tn_g[ai[j]]), int(tr_g[bi[j]]), int(tc_g[bi[j]]),
           ports.ifm, ports.wei, ports.ofm) + scheme.as_tuple()
    return key, explored, pruned


def _reports_for(layers, tile, ports, scheme, space) -> tuple[LatencyReport, ...]:
    design = AcceleratorDesign(tile=tile, ports=ports, precision=space.precision)
    ctx = TransferContext(scheme=scheme, mode=space.mode)
    out = []
    for layer in layers:
        part = slice_layer(layer, scheme)
        eff = replace(design, tile=tile.clamped(part))
        out.append(latency(part, eff, transfer=ctx))
    return tuple(out)


def optimize_network_uniform(layers: Sequence[LayerSpec], platform: PlatformSpec,
                             space: SearchSpace) -> DseResult:
    """One (tile, ports, partition) minimizing the summed latency of all layers."""
    t0 = time.perf_counter()
    layers = [l for l in layers]
    if not layers:
        raise ValueError("need at least one layer to optimize")
    axes = _tile_axes(space, layers)
    ports_list = space.ports if space.ports is not None else default_ports(space.precision, platform)
    schemes = space.schemes if space.schemes is not None else enumerate_schemes(space.max_fpgas, layers)

    best_key = None
    incumbent = _HUGE
    explored = pruned = 0
    best_by_scheme: dict[tuple, tuple] = {}
    for scheme in schemes:
        if not all(scheme.fits(l) for l in layers):
            continue
        for ports in ports_list:
            key, exp, pru = _grid_eval(layers, scheme, ports, space, platform,
                                       incumbent, axes)
            explored += exp
            pruned += pru
            if key is None:
                continue
            prev = best_by_scheme.get(scheme.as_tuple())
            if prev is None or key < prev:
                best_by_scheme[scheme.as_tuple()] = key
            if best_key is None or key < best_key:
                best_key = key
                incumbent = key[0]

    if best_key is None:
        raise InfeasibleSearchError(
            "no design satisfies the resource and bandwidth constraints")

    per_scheme = []
    for skey, key in sorted(best_by_scheme.items(), key=lambda kv: (kv[1][1],) + kv[0]):
        scheme = PartitionScheme(*skey)
        tile = TileConfig(*key[3:7])
        ports = PortConfig(*key[7:10])
        reports = _reports_for(layers, tile, ports, scheme, space)
        dominant = max(reports, key=lambda r: r.total_cycles)
        per_scheme.append(SchemePoint(scheme=scheme, tile=tile, ports=ports,
                                      cycles=key[0], bottleneck=dominant.bottleneck))

    scheme = PartitionScheme(*best_key[10:14])
    tile = TileConfig(*best_key[3:7])
    ports = PortConfig(*best_key[7:10])
    reports = _reports_for(layers, tile, ports, scheme, space)
    total = sum(r.total_cycles for r in reports)
    if total != best_key[0]:
        raise AssertionError(
            f"vectorized/scalar disagreement: {best_key[0]} vs {total}")

    pareto: dict[int, int] = {}
    for point in per_scheme:
        n = point.scheme.count
        pareto[n] = min(pareto.get(n, _HUGE), point.cycles)
    return DseResult(
        design=AcceleratorDesign(tile=tile, ports=ports, precision=space.precision),
        scheme=scheme, mode=space.mode, total_cycles=total, reports=reports,
        pareto=tuple(sorted(pareto.items())), per_scheme=tuple(per_scheme),
        explored=explored, pruned=pruned, elapsed=time.perf_counter() - t0,
    )


def optimize_layer(layer: LayerSpec, platform: PlatformSpec,
                   space: SearchSpace) -> DseResult:
    """Exact optimum for a single layer over the enumerated space."""
    return optimize_network_uniform([layer], platform, space)


def optimize_per_layer(layers: Sequence[LayerSpec], platform: PlatformSpec,
                       space: SearchSpace) -> list[DseResult]:
    """Independent optimum per layer (layer-specific accelerators)."""
    return [optimize_layer(layer, platform, space) for layer in layers]


@dataclass(frozen=True)
class CurvePoint:
    fpga_count: int
    cycles: int
    speedup: float
    scheme: PartitionScheme
    tile: TileConfig
    ports: PortConfig
    bottleneck: Bottleneck


@dataclass(frozen=True)
class ScaleStudy:
    """Scatter points plus the per-cluster-size frontier.

    A scheme whose entire region is dominated by a smaller cluster's
    incumbent can be pruned out of ``points``; the ``curve`` is always
    the true best at each size.
    """

    points: tuple[SchemePoint, ...]   # best design per partition scheme
    curve: tuple[CurvePoint, ...]     # best design per cluster size


def scale_study(layers: Sequence[LayerSpec], platform: PlatformSpec,
                space: SearchSpace, fpga_counts: Sequence[int]) -> ScaleStudy:
    """Best achievable latency as the cluster grows.

    ``fpga_counts`` must ascend and start at 1; each count admits every
    scheme using that many boards or fewer, so the curve is monotone and
    speedups (relative to one board) never decrease.
    """
    counts = list(fpga_counts)
    if not counts or counts[0] != 1 or counts != sorted(counts):
        raise ValueError("fpga_counts must be ascending and start at 1")
    result = optimize_network_uniform(
        layers, platform, replace(space, max_fpgas=counts[-1]))

    curve = []
    base = None
    for count in counts:
        eligible = [p for p in result.per_scheme if p.scheme.count <= count]
        if not eligible:
            raise InfeasibleSearchError(f"no feasible design with <= {count} FPGAs")
        best = min(eligible, key=lambda p: (p.cycles, p.scheme.count,
                                            p.scheme.as_tuple()))
        if base is None:
            base = best.cycles
        curve.append(CurvePoint(
            fpga_count=count, cycles=best.cycles, speedup=base / best.cycles,
            scheme=best.scheme, tile=best.tile, ports=best.ports,
            bottleneck=best.bottleneck))
    return ScaleStudy(points=result.per_scheme, curve=tuple(curve))


def exhaustive_reference(layers: Sequence[LayerSpec], platform: PlatformSpec,
                         space: SearchSpace, prune: bool = True):
    """Scalar-loop twin of the vectorized search (oracle for its results).

    Returns (best key tuple or None, explored, pruned) with the identical
    key layout and tie-break order.  ``prune=False`` disables both the
    compute-floor and partial-sum cuts for a fully exhaustive sweep.
    """
    layers = list(layers)
    axes = _tile_axes(space, layers)
    ports_list = space.ports if space.ports is not None else default_ports(space.precision, platform)
    schemes = space.schemes if space.schemes is not None else enumerate_schemes(space.max_fpgas, layers)
    prec = space.precision
    best_key = None
    incumbent = _HUGE
    explored = pruned = 0

    for scheme in schemes:
        if not all(scheme.fits(l) for l in layers):
            continue
        sliced = [slice_layer(l, scheme) for l in layers]
        ctx = TransferContext(scheme=scheme, mode=space.mode)
        for ports in ports_list:
            if prec.bits * ports.total > platform.bus_bits:
                continue
            for tm in axes[0]:
                for tn in axes[1]:
                    for tr in axes[2]:
                        for tc in axes[3]:
                            tile = TileConfig(int(tm), int(tn), int(tr), int(tc))
                            total = 0
                            bram_worst = 0
                            ok = True
                            cut = False
                            for li, part in enumerate(sliced):
                                eff = tile.clamped(part)
                                design = AcceleratorDesign(tile=eff, ports=ports,
                                                           precision=prec)
                                chk = resource_check(design, part, platform)
                                if not chk.ok:
                                    ok = False
                                    break
                                if prune and total + compute_floor(part, eff) > incumbent:
                                    cut = True
                                    break
                                rep = latency(part, design, transfer=ctx)
                                if space.mode is TransferMode.OFFLOAD and scheme.count > 1:
                                    tchk = torus_bandwidth_check(layers[li], design,
                                                                 ctx, platform)
                                    if not tchk.ok:
                                        ok = False
                                        break
                                total += rep.total_cycles
                                bram_worst = max(bram_worst, chk.usage.bram_total)
                                if prune and total > incumbent:
                                    cut = True
                                    break
                            if cut:
                                pruned += 1
                                continue
                            if not ok:
                                continue
                            explored += 1
                            key = (total, scheme.count, bram_worst,
                                   int(tm), int(tn), int(tr), int(tc),
                                   ports.ifm, ports.wei, ports.ofm) + scheme.as_tuple()
                            if best_key is None or key < best_key:
                                best_key = key
                                if prune:
                                    incumbent = total
    return best_key, explored, pruned
