"""tileplan: tiled CNN accelerator modeling and multi-FPGA cluster planning.

The package splits into five layers:

* :mod:`tileplan.model` - closed-form latency/resource model of one
  tiled, double-buffered accelerator.
* :mod:`tileplan.partition` - layer partitioning across boards and the
  shared-data traffic offload onto inter-FPGA links.
* :mod:`tileplan.cluster` - concrete 2D-torus cluster plans and
  inter-layer data-movement classification.
* :mod:`tileplan.dse` - pruned exhaustive search over tiles, ports, and
  partitions.
* :mod:`tileplan.simulator` - discrete-event pipeline simulation, the
  independent oracle for the closed-form model.
"""

from .model import (
    AcceleratorDesign,
    Bottleneck,
    LatencyReport,
    LayerSpec,
    Phases,
    PlatformSpec,
    PortConfig,
    Precision,
    ResourceCheck,
    ResourceUsage,
    TileConfig,
    TripCounts,
    bram_usage,
    classify_bottleneck,
    dsp_usage,
    latency,
    phase_latencies,
    resource_check,
    resource_usage,
    trip_counts,
)
from .partition import (
    PartitionScheme,
    SharedData,
    TorusCheck,
    TransferContext,
    TransferMode,
    partitioned_latency,
    slice_layer,
    split_ifm_load,
    split_weight_load,
    torus_bandwidth_check,
)
from .cluster import (
    ClusterPlan,
    InterLayerMove,
    MoveKind,
    build_plan,
    classify_interlayer,
    interlayer_moves,
    movement_cycles,
    plan_traffic,
)
from .dse import (
    DseResult,
    InfeasibleSearchError,
    ScaleStudy,
    SearchSpace,
    candidate_tile_values,
    enumerate_schemes,
    optimize_layer,
    optimize_network_uniform,
    optimize_per_layer,
    scale_study,
)
from .simulator import (
    SimEvent,
    SimTrace,
    SimulationFault,
    simulate,
    simulate_cluster,
    stall_attribution,
)
from .netio import (
    DesignDoc,
    Network,
    NetworkLayer,
    ParseError,
    load_design,
    load_network,
    load_platform,
)

__version__ = "0.1.0"
