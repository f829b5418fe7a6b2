"""Shared fixtures: platforms, golden designs, and the random corpus.

The golden designs pin every free parameter the published measurements
left unstated; the frozen cycle counts come from hand ceil-arithmetic on
the closed formulas (see test comments for the derivations).
"""

import dataclasses
import random

import pytest

from tileplan import (
    AcceleratorDesign,
    LayerSpec,
    PartitionScheme,
    PortConfig,
    Precision,
    TileConfig,
    TransferContext,
    load_platform,
    slice_layer,
    trip_counts,
)


@pytest.fixture(scope="session")
def zcu102():
    return load_platform("zcu102")


@pytest.fixture(scope="session")
def zcu102_relaxed(zcu102):
    # the published scale/validation designs need more weight buffer than
    # the stock budget admits under the doubled-buffer accounting; BRAM
    # absolutes are excluded from acceptance, so relax only that budget
    return dataclasses.replace(zcu102, name="zcu102-relaxed", bram=4096)


# The validation-table fixture layer: a 13x13x128-out convolution over
# 192 input channels, kernel 3, batch 2 (per-group conv5 of the AlexNet
# family).  Tm/Tn and the bound/speedup columns are published; Tr/Tc and
# the layer identity are not, but these values reproduce the published
# cycle counts exactly (main pipeline term, tail excluded).
VAL_LAYER = LayerSpec(batch=2, out_ch=128, in_ch=192, rows=13, cols=13,
                      kernel=3, name="conv5")

DESIGN_A = AcceleratorDesign(tile=TileConfig(8, 32, 13, 13),
                             ports=PortConfig(2, 2, 2),
                             precision=Precision.FLOAT32)
CTX_B = TransferContext(scheme=PartitionScheme(channels=2))

DESIGN_C = AcceleratorDesign(tile=TileConfig(64, 20, 7, 13),
                             ports=PortConfig(4, 8, 4),
                             precision=Precision.FIXED16)
CTX_D = TransferContext(scheme=PartitionScheme(rows=2))


# Published AlexNet per-layer designs (fixed16, ports 4,8,4, total batch
# 4 so a 4-way batch split leaves one image per board).  gold cycles are
# frozen from hand evaluation of the closed formulas; reported_kcycles are
# the published rounded values.
ALEXNET_TABLE = [
    # name, layer (batch=4), tile, partition, gold cycles, published kcycles
    ("conv1", LayerSpec(4, 96, 3, 55, 55, 11, "conv1"),
     TileConfig(96, 3, 1, 55), PartitionScheme(batch=4), 374000, 375),
    ("conv2", LayerSpec(4, 256, 48, 27, 27, 5, "conv2"),
     TileConfig(10, 48, 14, 27), PartitionScheme(batch=2, rows=2), 501795, 514),
    ("conv3", LayerSpec(4, 384, 256, 13, 13, 3, "conv3"),
     TileConfig(55, 9, 13, 13), PartitionScheme(batch=4), 312608, 314),
    ("conv4", LayerSpec(4, 384, 192, 13, 13, 3, "conv4"),
     TileConfig(28, 18, 13, 13), PartitionScheme(batch=4), 236938, 242),
    ("conv5", LayerSpec(4, 256, 192, 13, 13, 3, "conv5"),
     TileConfig(32, 15, 13, 13), PartitionScheme(batch=2, channels=2), 161057, 167),
]

FIXED_PORTS = PortConfig(4, 8, 4)


def random_corpus(seed: int, count: int, min_trips: int = 384, min_tiles: int = 96,
                  max_trips: int = 40000):
    """Random valid (layer, clamped design, scheme) triples.

    Steady-state only: the closed form charges one full pipeline stage
    for the fill and one store for the drain, so agreement with the
    event simulation is O(1/trips) + O(1/output-tiles); the floors keep
    both terms well under the 1% contract.
    """
    rng = random.Random(seed)
    out = []
    while len(out) < count:
        layer = LayerSpec(batch=rng.randint(1, 3), out_ch=rng.randint(4, 128),
                          in_ch=rng.randint(4, 128), rows=rng.randint(4, 56),
                          cols=rng.randint(4, 56),
                          kernel=rng.choice([1, 1, 3, 3, 5, 7]))
        tile = TileConfig(tm=rng.randint(1, layer.out_ch), tn=rng.randint(1, layer.in_ch),
                          tr=rng.randint(1, layer.rows), tc=rng.randint(1, layer.cols))
        ports = PortConfig(*[rng.choice([1, 2, 4, 8, 16]) for _ in range(3)])
        design = AcceleratorDesign(tile=tile, ports=ports,
                                   precision=rng.choice(list(Precision)))
        schemes = [PartitionScheme()]
        if layer.rows >= 2:
            schemes.append(PartitionScheme(rows=2))
        if layer.cols >= 2:
            schemes.append(PartitionScheme(cols=2))
        if layer.out_ch >= 2:
            schemes.append(PartitionScheme(channels=2))
        if layer.batch >= 2:
            schemes.append(PartitionScheme(batch=2))
        if layer.out_ch >= 2 and layer.rows >= 2:
            schemes.append(PartitionScheme(rows=2, channels=2))
        scheme = rng.choice(schemes)
        part = slice_layer(layer, scheme)
        eff = dataclasses.replace(design, tile=tile.clamped(part))
        trips = trip_counts(part, eff.tile)
        tiles = trips.batch * trips.spatial * trips.out_ch
        total = tiles * trips.in_ch
        if total < min_trips or tiles < min_tiles or total > max_trips:
            continue
        out.append((layer, eff, scheme))
    return out
