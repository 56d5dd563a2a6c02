from cognistream.structures.structure_base import (
    StructureKey,
    StructureInstance,
    StructureGroup,
    instance_order,
    extract,
    mismatches,
    distance,
    dedupe,
    merge_groups,
    export_structures
)
