"""Network / platform / design documents: JSON schemas and loaders.

Network files list layers in execution order.  Convolution rows carry
output-space dimensions (stride and padding are already resolved into
``rows``/``cols``); grouped convolutions fold into a single equivalent
layer with ``in_ch / groups`` input channels and the full ``out_ch``,
which preserves the total MAC count.  Non-convolution rows (pool, fc,
...) are kept for bookkeeping but flagged unmodeled: the model assigns
them zero cycles.

Example network file::

    {"name": "alexnet", "precision": "fixed16", "batch": 1,
     "layers": [
       {"name": "conv1", "type": "conv", "out_ch": 96, "in_ch": 3,
        "rows": 55, "cols": 55, "kernel": 11, "groups": 1},
       {"name": "pool1", "type": "pool"}]}

Platform files carry the per-board budgets::

    {"name": "zcu102", "dsp": 2520, "bram": 1824,
     "bus_bits": 256, "link_bits": 256}

Design documents round-trip a fully pinned design (tile, ports,
partition, precision, mode, batch) between ``optimize`` and ``model``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Optional

from .model import LayerSpec, PlatformSpec, PortConfig, Precision, TileConfig
from .partition import PartitionScheme, TransferMode

LAYER_KINDS = ("conv", "pool", "fc", "other")


class ParseError(ValueError):
    """A specification file is missing, malformed, or inconsistent."""


@dataclass(frozen=True)
class NetworkLayer:
    name: str
    kind: str
    groups: int = 1
    spec: Optional[LayerSpec] = None   # folded conv dimensions; None if unmodeled

    @property
    def modeled(self) -> bool:
        return self.spec is not None


@dataclass(frozen=True)
class Network:
    name: str
    precision: Precision
    batch: int
    layers: tuple[NetworkLayer, ...]

    def conv_layers(self) -> list[LayerSpec]:
        return [l.spec for l in self.layers if l.spec is not None]

    def with_batch(self, batch: int) -> "Network":
        if batch < 1:
            raise ParseError(f"batch must be >= 1, got {batch}")
        layers = tuple(
            replace(l, spec=replace(l.spec, batch=batch)) if l.spec is not None else l
            for l in self.layers)
        return replace(self, batch=batch, layers=layers)


def _require(obj: dict, key: str, where: str):
    if key not in obj:
        raise ParseError(f"{where}: missing required field {key!r}")
    return obj[key]


def _as_int(value, key: str, where: str) -> int:
    if not isinstance(value, int) or isinstance(value, bool):
        raise ParseError(f"{where}: field {key!r} must be an integer, got {value!r}")
    return value


def parse_network(doc: dict, where: str = "network") -> Network:
    name = doc.get("name", "unnamed")
    precision = Precision.from_key(doc.get("precision", "fixed16"))
    batch = _as_int(doc.get("batch", 1), "batch", where)
    rows = _require(doc, "layers", where)
    if not isinstance(rows, list) or not rows:
        raise ParseError(f"{where}: 'layers' must be a non-empty list")
    layers = []
    for i, row in enumerate(rows):
        lname = row.get("name", f"layer{i}")
        ctx = f"{where}: layer {lname!r}"
        kind = row.get("type", "conv")
        if kind not in LAYER_KINDS:
            raise ParseError(f"{ctx}: unknown layer type {kind!r}")
        if kind != "conv":
            layers.append(NetworkLayer(name=lname, kind=kind))
            continue
        groups = _as_int(row.get("groups", 1), "groups", ctx)
        out_ch = _as_int(_require(row, "out_ch", ctx), "out_ch", ctx)
        in_ch = _as_int(_require(row, "in_ch", ctx), "in_ch", ctx)
        if groups < 1 or out_ch % groups or in_ch % groups:
            raise ParseError(f"{ctx}: groups={groups} must divide out_ch and in_ch")
        try:
            spec = LayerSpec(
                batch=_as_int(row.get("batch", batch), "batch", ctx),
                out_ch=out_ch,
                in_ch=in_ch // groups,
                rows=_as_int(_require(row, "rows", ctx), "rows", ctx),
                cols=_as_int(_require(row, "cols", ctx), "cols", ctx),
                kernel=_as_int(_require(row, "kernel", ctx), "kernel", ctx),
                name=lname,
            )
        except ValueError as exc:
            raise ParseError(f"{ctx}: {exc}") from exc
        layers.append(NetworkLayer(name=lname, kind=kind, groups=groups, spec=spec))
    if not any(l.modeled for l in layers):
        raise ParseError(f"{where}: no convolution layers to model")
    return Network(name=name, precision=precision, batch=batch, layers=tuple(layers))


def parse_platform(doc: dict, where: str = "platform") -> PlatformSpec:
    try:
        return PlatformSpec(
            name=doc.get("name", "unnamed"),
            dsp=_as_int(_require(doc, "dsp", where), "dsp", where),
            bram=_as_int(_require(doc, "bram", where), "bram", where),
            bus_bits=_as_int(_require(doc, "bus_bits", where), "bus_bits", where),
            link_bits=_as_int(_require(doc, "link_bits", where), "link_bits", where),
        )
    except ValueError as exc:
        raise ParseError(f"{where}: {exc}") from exc


def _read_json(path: Path) -> dict:
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise ParseError(f"{path}: top level must be a JSON object")
    return doc


def _bundled(kind: str, name: str) -> Optional[dict]:
    base = resources.files("tileplan.data") / kind / f"{name}.json"
    if not base.is_file():
        return None
    return json.loads(base.read_text())


def bundled_names(kind: str) -> list[str]:
    base = resources.files("tileplan.data") / kind
    return sorted(p.name[:-5] for p in base.iterdir() if p.name.endswith(".json"))


def load_network(ref: str | Path) -> Network:
    """Load a network file; bare names fall back to the bundled fixtures."""
    path = Path(ref)
    if not path.is_file():
        doc = _bundled("networks", str(ref))
        if doc is None:
            raise ParseError(
                f"network {ref!r} is neither a file nor a bundled fixture "
                f"(bundled: {', '.join(bundled_names('networks'))})")
        return parse_network(doc, where=str(ref))
    return parse_network(_read_json(path), where=str(path))


def load_platform(ref: str | Path) -> PlatformSpec:
    path = Path(ref)
    if not path.is_file():
        doc = _bundled("platforms", str(ref))
        if doc is None:
            raise ParseError(
                f"platform {ref!r} is neither a file nor a bundled fixture "
                f"(bundled: {', '.join(bundled_names('platforms'))})")
        return parse_platform(doc, where=str(ref))
    return parse_platform(_read_json(path), where=str(path))


@dataclass(frozen=True)
class DesignDoc:
    """A pinned design as written by ``optimize`` and read by ``model``."""

    tile: TileConfig
    ports: PortConfig
    scheme: PartitionScheme
    precision: Precision
    mode: TransferMode
    batch: int
    cycles: Optional[int] = None

    def to_json(self) -> dict:
        doc = {
            "precision": self.precision.key,
            "mode": self.mode.value,
            "batch": self.batch,
            "tile": {"tm": self.tile.tm, "tn": self.tile.tn,
                     "tr": self.tile.tr, "tc": self.tile.tc},
            "ports": {"ifm": self.ports.ifm, "wei": self.ports.wei,
                      "ofm": self.ports.ofm},
            "partition": {"batch": self.scheme.batch, "rows": self.scheme.rows,
                          "cols": self.scheme.cols, "channels": self.scheme.channels},
        }
        if self.cycles is not None:
            doc["cycles"] = self.cycles
        return doc


def parse_design(doc: dict, where: str = "design") -> DesignDoc:
    tile = _require(doc, "tile", where)
    ports = _require(doc, "ports", where)
    part = doc.get("partition", {})
    try:
        return DesignDoc(
            tile=TileConfig(tm=tile["tm"], tn=tile["tn"], tr=tile["tr"], tc=tile["tc"]),
            ports=PortConfig(ifm=ports["ifm"], wei=ports["wei"], ofm=ports["ofm"]),
            scheme=PartitionScheme(
                batch=part.get("batch", 1), rows=part.get("rows", 1),
                cols=part.get("cols", 1), channels=part.get("channels", 1)),
            precision=Precision.from_key(doc.get("precision", "fixed16")),
            mode=TransferMode(doc.get("mode", "offload")),
            batch=_as_int(doc.get("batch", 1), "batch", where),
            cycles=doc.get("cycles"),
        )
    except (KeyError, ValueError) as exc:
        raise ParseError(f"{where}: {exc}") from exc


def load_design(path: str | Path) -> DesignDoc:
    p = Path(path)
    return parse_design(_read_json(p), where=str(p))
