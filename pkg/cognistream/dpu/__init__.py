from cognistream.dpu.topology import Topology, build_topology, load_topology, grid_rows, validate_adjacency
from cognistream.dpu.world import (
    FLOOD_KINDS,
    UnitMessage,
    Unit,
    World,
    route,
    reach,
    sync_dictionaries,
    contiguous_partition,
    build_world,
    global_view
)
