"""Batch command-line front-end.

Subcommands::

    model     evaluate a pinned design on a network, layer by layer
    optimize  search tiles/ports/partitions for minimum latency
    scale     latency vs. cluster size, CSV for external plotting
    simulate  cross-check the closed-form model against the simulator
    plan      materialize a partition into a torus cluster plan (JSON)

Exit codes: 0 success, 2 specification/parse problems, 3 infeasible
design or empty search space, 4 internal simulation fault.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from typing import Optional, Sequence

from . import __version__
from .cluster import build_plan, interlayer_moves, movement_cycles, plan_traffic
from .dse import (
    InfeasibleSearchError,
    ScaleStudy,
    SearchSpace,
    optimize_network_uniform,
    optimize_per_layer,
    scale_study,
)
from .model import (
    AcceleratorDesign,
    PlatformSpec,
    PortConfig,
    Precision,
    TileConfig,
    resource_check,
)
from .netio import (
    DesignDoc,
    Network,
    ParseError,
    load_design,
    load_network,
    load_platform,
)
from .partition import (
    PartitionScheme,
    TransferContext,
    TransferMode,
    partitioned_latency,
    slice_layer,
    torus_bandwidth_check,
)
from .report import FORMATS, ReportBundle
from .simulator import SimulationFault, simulate, stall_attribution

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_INFEASIBLE = 3
EXIT_SIM_FAULT = 4


def _parse_ints(text: str, what: str, counts: tuple[int, ...]) -> tuple[int, ...]:
    try:
        values = tuple(int(v) for v in text.replace(" ", "").split(","))
    except ValueError:
        raise ParseError(f"{what}: expected comma-separated integers, got {text!r}")
    if len(values) not in counts:
        raise ParseError(f"{what}: expected {' or '.join(map(str, counts))} values, got {len(values)}")
    return values


def _tile_arg(text: str) -> TileConfig:
    tm, tn, tr, tc = _parse_ints(text, "--tile", (4,))
    return TileConfig(tm=tm, tn=tn, tr=tr, tc=tc)


def _ports_arg(text: str) -> PortConfig:
    ifm, wei, ofm = _parse_ints(text, "--ports", (3,))
    return PortConfig(ifm=ifm, wei=wei, ofm=ofm)


def _partition_arg(text: str) -> PartitionScheme:
    pb, pr, pc, pm = _parse_ints(text, "--partition", (4,))
    return PartitionScheme(batch=pb, rows=pr, cols=pc, channels=pm)


def _write_out(text: str, out: Optional[str]) -> None:
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _resolve_design(args, network: Network) -> DesignDoc:
    """A pinned design from either --design or the individual flags."""
    if args.design:
        doc = load_design(args.design)
        if args.batch is not None:
            doc = replace(doc, batch=args.batch)
        return doc
    if not args.tile or not args.ports:
        raise ParseError("need --tile and --ports (or --design FILE)")
    precision = Precision.from_key(args.precision) if args.precision else network.precision
    return DesignDoc(
        tile=args.tile, ports=args.ports,
        scheme=args.partition or PartitionScheme(),
        precision=precision,
        mode=TransferMode(args.mode),
        batch=args.batch if args.batch is not None else network.batch,
    )


def _assumptions(network: Network, platform: PlatformSpec, doc: DesignDoc,
                 freq: float) -> dict:
    return {
        "network": network.name,
        "platform": platform.name,
        "precision": doc.precision.key,
        "ports": (doc.ports.ifm, doc.ports.wei, doc.ports.ofm),
        "tile": (doc.tile.tm, doc.tile.tn, doc.tile.tr, doc.tile.tc),
        "partition": doc.scheme.as_tuple(),
        "mode": doc.mode.value,
        "batch": doc.batch,
        "freq_mhz": freq,
    }


def _per_layer_rows(network: Network, platform: PlatformSpec, doc: DesignDoc,
                    freq: float):
    """(bundle rows, per-layer reports) for a pinned design; raises on infeasibility."""
    ctx = TransferContext(scheme=doc.scheme, mode=doc.mode)
    rows, reports, violations = [], [], []
    for nl in network.layers:
        if not nl.modeled:
            rows.append({"layer": nl.name, "status": "unmodeled", "cycles": 0})
            reports.append(None)
            continue
        layer = replace(nl.spec, batch=doc.batch)
        part = slice_layer(layer, doc.scheme)
        design = AcceleratorDesign(tile=doc.tile.clamped(part), ports=doc.ports,
                                   precision=doc.precision)
        check = resource_check(design, part, platform)
        if not check.ok:
            violations.extend(f"{nl.name}: {v}" for v in check.violations)
            continue
        if doc.scheme.count > 1 and doc.mode is TransferMode.OFFLOAD:
            torus = torus_bandwidth_check(layer, design, ctx, platform)
            if not torus.ok:
                violations.extend(f"{nl.name}: {v}" for v in torus.violations)
                continue
        report = partitioned_latency(layer, design, ctx)
        reports.append(report)
        rows.append({
            "layer": nl.name, "status": "ok",
            "cycles": report.total_cycles,
            "ms": report.total_cycles / (freq * 1e3),
            "bottleneck": report.bottleneck.value,
            "dsps": report.usage.dsps,
            "bram": report.usage.bram_total,
        })
    if violations:
        raise InfeasibleSearchError("; ".join(violations))
    return rows, reports


def cmd_model(args) -> int:
    network = load_network(args.network)
    if args.batch is not None:
        network = network.with_batch(args.batch)
    platform = load_platform(args.platform)
    doc = _resolve_design(args, network)
    freq = args.freq_mhz or doc.precision.default_freq_mhz
    try:
        rows, _ = _per_layer_rows(network, platform, doc, freq)
    except InfeasibleSearchError as exc:
        print(f"infeasible design: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    total = sum(r["cycles"] for r in rows)
    bundle = ReportBundle(
        title=f"model: {network.name} on {platform.name}",
        assumptions=_assumptions(network, platform, doc, freq),
        columns=["layer", "status", "cycles", "ms", "bottleneck", "dsps", "bram"],
        rows=rows,
        totals={"layer": "total", "cycles": total, "ms": total / (freq * 1e3)},
    )
    _write_out(bundle.render(args.format), args.out)
    return EXIT_OK


def _space_from_args(args, network: Network) -> SearchSpace:
    precision = Precision.from_key(args.precision) if args.precision else network.precision
    ports = (args.ports,) if args.ports else None
    tile_kw = {}
    if args.tile_pin:
        values = _parse_ints(args.tile_pin, "--tile", (2, 4))
        tile_kw["tm"], tile_kw["tn"] = (values[0],), (values[1],)
        if len(values) == 4:
            tile_kw["tr"], tile_kw["tc"] = (values[2],), (values[3],)
    return SearchSpace(precision=precision, max_fpgas=args.fpgas,
                       mode=TransferMode(args.mode), ports=ports, **tile_kw)


def _design_doc_of(result, batch: int, mode: TransferMode) -> DesignDoc:
    return DesignDoc(tile=result.design.tile, ports=result.design.ports,
                     scheme=result.scheme, precision=result.design.precision,
                     mode=mode, batch=batch, cycles=result.total_cycles)


def cmd_optimize(args) -> int:
    network = load_network(args.network)
    if args.batch is not None:
        network = network.with_batch(args.batch)
    platform = load_platform(args.platform)
    space = _space_from_args(args, network)
    layers = network.conv_layers()
    mode = TransferMode(args.mode)
    try:
        if args.per_layer:
            results = optimize_per_layer(layers, platform, space)
        else:
            results = [optimize_network_uniform(layers, platform, space)]
    except InfeasibleSearchError as exc:
        print(f"infeasible search: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE

    freq = args.freq_mhz or space.precision.default_freq_mhz
    bundle = ReportBundle(
        title=f"optimize: {network.name} on {platform.name} "
              f"({'per-layer' if args.per_layer else 'uniform'}, <= {args.fpgas} FPGAs)",
        assumptions={
            "network": network.name, "platform": platform.name,
            "precision": space.precision.key,
            "ports": "searched" if space.ports is None else
                     (space.ports[0].ifm, space.ports[0].wei, space.ports[0].ofm),
            "batch": network.batch, "mode": mode.value, "freq_mhz": freq,
        },
        columns=["layer", "tile", "ports", "partition", "cycles", "move_cycles",
                 "bottleneck", "explored", "pruned", "elapsed_s"],
    )
    move_by_layer = [0] * len(results)
    if args.per_layer and len(results) > 1:
        # switching partitions between layers forces boundary reshuffles;
        # charge each to the producing layer, as a latency report would see it
        moves = interlayer_moves(layers, [r.scheme for r in results],
                                 space.precision)
        move_by_layer[:len(moves)] = [movement_cycles(m) for m in moves]
    total = move_total = 0
    for i, (result, label) in enumerate(zip(results, ["all"] if not args.per_layer
                                            else [l.name for l in layers])):
        cycles = result.total_cycles
        total += cycles
        move_total += move_by_layer[i]
        dominant = max(result.reports, key=lambda r: r.total_cycles)
        bundle.add(layer=label,
                   tile=(result.design.tile.tm, result.design.tile.tn,
                         result.design.tile.tr, result.design.tile.tc),
                   ports=(result.design.ports.ifm, result.design.ports.wei,
                          result.design.ports.ofm),
                   partition=result.scheme.as_tuple(),
                   cycles=cycles, move_cycles=move_by_layer[i],
                   bottleneck=dominant.bottleneck.value,
                   explored=result.explored, pruned=result.pruned,
                   elapsed_s=round(result.elapsed, 3))
    bundle.totals = {"layer": "total", "cycles": total + move_total,
                     "move_cycles": move_total,
                     "elapsed_s": round(sum(r.elapsed for r in results), 3)}
    sys.stdout.write(bundle.render(args.format))
    if args.out:
        if args.per_layer:
            doc = {"per_layer": {label: _design_doc_of(r, network.batch, mode).to_json()
                                 for r, label in zip(results, [l.name for l in layers])}}
        else:
            doc = _design_doc_of(results[0], network.batch, mode).to_json()
        with open(args.out, "w") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")
    return EXIT_OK


SCALE_COLUMNS = ["fpgas", "pb", "pr", "pc", "pm", "tm", "tn", "tr", "tc",
                 "cycles", "speedup", "bottleneck"]


def scale_bundle(study: ScaleStudy, assumptions: dict) -> ReportBundle:
    bundle = ReportBundle(title="scale study", assumptions=assumptions,
                          columns=SCALE_COLUMNS)
    base = study.curve[0].cycles
    for p in study.points:
        bundle.add(fpgas=p.scheme.count, pb=p.scheme.batch, pr=p.scheme.rows,
                   pc=p.scheme.cols, pm=p.scheme.channels,
                   tm=p.tile.tm, tn=p.tile.tn, tr=p.tile.tr, tc=p.tile.tc,
                   cycles=p.cycles, speedup=round(base / p.cycles, 4),
                   bottleneck=p.bottleneck.value)
    for c in study.curve:
        bundle.add(fpgas=c.fpga_count, pb=c.scheme.batch, pr=c.scheme.rows,
                   pc=c.scheme.cols, pm=c.scheme.channels,
                   tm=c.tile.tm, tn=c.tile.tn, tr=c.tile.tr, tc=c.tile.tc,
                   cycles=c.cycles, speedup=round(c.speedup, 4),
                   bottleneck=c.bottleneck.value)
    return bundle


def cmd_scale(args) -> int:
    network = load_network(args.network)
    if args.batch is not None:
        network = network.with_batch(args.batch)
    platform = load_platform(args.platform)
    args.fpgas = args.max_fpgas
    space = _space_from_args(args, network)
    counts = list(range(1, args.max_fpgas + 1))
    try:
        study = scale_study(network.conv_layers(), platform, space, counts)
    except InfeasibleSearchError as exc:
        print(f"infeasible search: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    bundle = scale_bundle(study, {
        "network": network.name, "platform": platform.name,
        "precision": space.precision.key, "batch": network.batch,
        "mode": space.mode.value, "max_fpgas": args.max_fpgas,
    })
    fmt = args.format if args.format != "table" else ("csv" if args.out else "table")
    _write_out(bundle.render(fmt), args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    network = load_network(args.network)
    if args.batch is not None:
        network = network.with_batch(args.batch)
    platform = load_platform(args.platform)
    doc = _resolve_design(args, network)
    freq = args.freq_mhz or doc.precision.default_freq_mhz
    try:
        _, reports = _per_layer_rows(network, platform, doc, freq)
    except InfeasibleSearchError as exc:
        print(f"infeasible design: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE

    ctx = TransferContext(scheme=doc.scheme, mode=doc.mode)
    bundle = ReportBundle(
        title=f"simulate: {network.name} on {platform.name}",
        assumptions=_assumptions(network, platform, doc, freq),
        columns=["layer", "model_cycles", "sim_cycles", "deviation_pct",
                 "model_bound", "sim_bound"],
    )
    trace_lines = []
    worst = 0.0
    try:
        for nl, report in zip([l for l in network.layers], reports):
            if report is None:
                continue
            layer = replace(nl.spec, batch=doc.batch)
            part = slice_layer(layer, doc.scheme)
            design = AcceleratorDesign(tile=doc.tile.clamped(part), ports=doc.ports,
                                       precision=doc.precision)
            trace = simulate(part, design, ctx, record_events=bool(args.trace))
            deviation = abs(trace.total_cycles - report.total_cycles) / report.total_cycles
            worst = max(worst, deviation)
            bundle.add(layer=nl.name, model_cycles=report.total_cycles,
                       sim_cycles=trace.total_cycles,
                       deviation_pct=round(100 * deviation, 4),
                       model_bound=report.bottleneck.value,
                       sim_bound=stall_attribution(trace).value)
            if args.trace and trace.events:
                for ev in trace.events:
                    trace_lines.append(
                        f"{ev.time} {nl.name} {ev.kind} {ev.slot} "
                        f"{ev.batch} {ev.spatial} {ev.out_ch} {ev.in_ch}")
    except SimulationFault as exc:
        print(f"simulation fault: {exc}", file=sys.stderr)
        return EXIT_SIM_FAULT
    bundle.notes.append(f"worst deviation: {100 * worst:.4f}% (gate: 1%)")
    _write_out(bundle.render(args.format), args.out)
    if args.trace:
        with open(args.trace, "w") as fh:
            fh.write("\n".join(trace_lines) + ("\n" if trace_lines else ""))
    return EXIT_OK if worst < 0.01 else 1


def cmd_plan(args) -> int:
    network = load_network(args.network)
    if args.batch is not None:
        network = network.with_batch(args.batch)
    platform = load_platform(args.platform)
    doc = _resolve_design(args, network)
    convs = [l for l in network.layers if l.modeled]
    if args.layer:
        matches = [l for l in convs if l.name == args.layer]
        if not matches:
            raise ParseError(f"no convolution layer named {args.layer!r}")
        target = matches[0]
    else:
        target = convs[0]
    layer = replace(target.spec, batch=doc.batch)
    design = AcceleratorDesign(tile=doc.tile.clamped(slice_layer(layer, doc.scheme)),
                               ports=doc.ports, precision=doc.precision)
    plan = build_plan(layer, doc.scheme, design)
    traffic = plan_traffic(plan, platform, mode=doc.mode)
    out = {
        "layer": target.name,
        "partition": doc.scheme.as_tuple(),
        "grid": {"rows": plan.grid_rows, "cols": plan.grid_cols},
        "nodes": [{
            "id": n.node, "grid_row": n.grid_row, "grid_col": n.grid_col,
            "batch_range": list(n.batch_range), "row_range": list(n.row_range),
            "col_range": list(n.col_range),
            "channels": {"start": n.channel_start, "stride": n.channel_stride,
                         "count": n.channel_count},
        } for n in plan.nodes],
        "links": [{"src": l.src, "dst": l.dst, "axis": l.axis} for l in plan.links],
        "traffic": {
            "row_link_bits": traffic.row_link_bits,
            "col_link_bits": traffic.col_link_bits,
            "window_cycles": traffic.check.window_cycles,
            "demand_bits_per_cycle": traffic.check.demand_bits_per_cycle,
            "capacity_bits_per_cycle": traffic.check.capacity_bits_per_cycle,
            "ok": traffic.check.ok,
        },
    }
    _write_out(json.dumps(out, indent=2) + "\n", args.out)
    return EXIT_OK if traffic.check.ok else EXIT_INFEASIBLE


def _add_common(p: argparse.ArgumentParser, design_flags: bool = True) -> None:
    p.add_argument("--network", required=True,
                   help="network JSON file or bundled name (alexnet, vgg16, yolo, squeezenet)")
    p.add_argument("--platform", required=True,
                   help="platform JSON file or bundled name (zcu102)")
    p.add_argument("--precision", choices=["float32", "fixed16"],
                   help="override the network file's precision")
    p.add_argument("--batch", type=int, help="override the network batch size")
    p.add_argument("--mode", choices=[m.value for m in TransferMode],
                   default="offload",
                   help="replicate shared data (baseline) or exchange it over links")
    p.add_argument("--freq-mhz", type=float,
                   help="clock for wall-time columns (default 200 fixed16 / 100 float32)")
    p.add_argument("--format", choices=list(FORMATS), default="table")
    p.add_argument("--out", help="write the report to this path instead of stdout")
    if design_flags:
        p.add_argument("--tile", type=_tile_arg, help="tm,tn,tr,tc")
        p.add_argument("--ports", type=_ports_arg, help="ifm,wei,ofm lane counts")
        p.add_argument("--partition", type=_partition_arg,
                       help="batch,rows,cols,channels split factors")
        p.add_argument("--design", help="pinned design document (JSON) to evaluate")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tileplan",
        description="Tiled CNN accelerator modeling and multi-FPGA planning")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("model", help="evaluate a pinned design")
    _add_common(p)
    p.set_defaults(func=cmd_model)

    p = sub.add_parser("optimize", help="search for the fastest design")
    _add_common(p, design_flags=False)
    p.add_argument("--fpgas", type=int, default=1, help="cluster size budget")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--uniform", dest="per_layer", action="store_false",
                       help="one design shared by all layers (default)")
    group.add_argument("--per-layer", dest="per_layer", action="store_true",
                       help="independent design per layer")
    p.add_argument("--ports", type=_ports_arg, help="pin the port lane split")
    p.add_argument("--tile", dest="tile_pin",
                   help="pin tile candidates: tm,tn or tm,tn,tr,tc")
    p.set_defaults(per_layer=False, func=cmd_optimize)

    p = sub.add_parser("scale", help="latency vs. cluster size (CSV)")
    _add_common(p, design_flags=False)
    p.add_argument("--max-fpgas", type=int, required=True)
    p.add_argument("--ports", type=_ports_arg, help="pin the port lane split")
    p.add_argument("--tile", dest="tile_pin",
                   help="pin tile candidates: tm,tn or tm,tn,tr,tc")
    p.set_defaults(func=cmd_scale)

    p = sub.add_parser("simulate", help="model vs. event simulation")
    _add_common(p)
    p.add_argument("--trace", help="write the event log to this path")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("plan", help="emit the cluster plan for one layer")
    _add_common(p)
    p.add_argument("--layer", help="convolution layer name (default: first)")
    p.set_defaults(func=cmd_plan)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (InfeasibleSearchError, ValueError) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except SimulationFault as exc:
        print(f"simulation fault: {exc}", file=sys.stderr)
        return EXIT_SIM_FAULT


if __name__ == "__main__":
    sys.exit(main())
