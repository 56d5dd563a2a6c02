import configparser
import math
from collections import deque
from dataclasses import dataclass
from typing import Dict, List, Optional
from cognistream.exceptions import TopologyError
from cognistream.helpers import topology_shape_checker
from cognistream.logger import get_logger


@dataclass(frozen=True)
class Topology:
    """
    Wiring of the processing units

    Parameters
    ----------
    shape : str
        'ring', 'full-mesh' or 'grid'

    adjacency : dict
        unit_id -> sorted neighbor list, symmetric and connected

    ttl : int, optional
        Hop budget of flooded messages, the unit count If None
    """
    shape: str
    adjacency: Dict[int, List[int]]
    ttl: Optional[int] = None

    @property
    def units(self) -> int:
        return len(self.adjacency)

    @property
    def default_ttl(self) -> int:
        return self.units if self.ttl is None else self.ttl

    def neighbors(self, unit_id: int) -> List[int]:
        return self.adjacency[unit_id]


def _raise_topology_error(error_msg: str):
    get_logger(__name__, "PROD", False).error(error_msg)
    raise TopologyError(error_msg)


def grid_rows(units: int) -> int:
    """
    Largest divisor of units not above its square root
    """
    return max(rows for rows in range(1, math.isqrt(units) + 1) if units % rows == 0)


def _ring(units: int) -> Dict[int, List[int]]:
    return {u: sorted({(u - 1) % units, (u + 1) % units} - {u}) for u in range(units)}


def _full_mesh(units: int) -> Dict[int, List[int]]:
    return {u: [v for v in range(units) if v != u] for u in range(units)}


def _grid(units: int) -> Dict[int, List[int]]:
    rows = grid_rows(units)
    cols = units // rows
    adjacency = {}
    for u in range(units):
        r, c = divmod(u, cols)
        candidates = [(r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)]
        adjacency[u] = sorted(rr * cols + cc for rr, cc in candidates if 0 <= rr < rows and 0 <= cc < cols)
    return adjacency


def validate_adjacency(adjacency: Dict[int, List[int]]):
    """
    Raises TopologyError unless the adjacency is symmetric and connected
    """
    for u, neighbors in adjacency.items():
        for v in neighbors:
            if v not in adjacency or u not in adjacency[v]:
                _raise_topology_error(f"Link {u} -> {v} has no reverse link, the topology must be symmetric")

    if not adjacency:
        _raise_topology_error("A topology needs at least one unit")

    start = min(adjacency)
    seen, queue = {start}, deque([start])
    while queue:
        for v in adjacency[queue.popleft()]:
            if v not in seen:
                seen.add(v)
                queue.append(v)

    if len(seen) != len(adjacency):
        _raise_topology_error(f"Units {sorted(set(adjacency) - seen)} are unreachable from unit {start}")


def build_topology(shape: str, units: int, ttl: Optional[int] = None) -> Topology:
    """
    Creates a ring, full-mesh or grid topology

    Parameters
    ----------
    shape : str
        'ring', 'mesh' / 'full-mesh' or 'grid'

    units : int
        Number of units, at least 1

    ttl : int, optional
        Hop budget of flooded messages, the unit count If None
    """
    shape = topology_shape_checker(shape)
    if isinstance(units, bool) or not isinstance(units, int) or units < 1:
        _raise_topology_error(f"units should be a positive integer, got {units}")

    if ttl is not None and (isinstance(ttl, bool) or not isinstance(ttl, int) or ttl < 0):
        _raise_topology_error(f"ttl should be a non-negative integer, got {ttl}")

    builders = {"ring": _ring, "full-mesh": _full_mesh, "grid": _grid}
    adjacency = builders[shape](units)
    validate_adjacency(adjacency)
    return Topology(shape, adjacency, ttl)


def load_topology(path: str) -> Topology:
    """
    Reads a topology file of 'shape=...', 'units=N' and optional 'ttl=K' lines

    The body has no section header, it is parsed by configparser as one implicit [topology] section
    """
    parser = configparser.ConfigParser()
    try:
        with open(path, "r", encoding="utf-8") as file:
            parser.read_string(f"[topology]\n{file.read()}", source=path)
    except (OSError, configparser.Error) as e:
        _raise_topology_error(f"Could not read the topology file {path}: {e}")

    values = dict(parser.items("topology"))
    if not values:
        _raise_topology_error(f"Topology file {path} is empty")

    unknown = sorted(set(values) - {"shape", "units", "ttl"})
    if unknown:
        _raise_topology_error(f"Unknown topology keys {unknown}, expected shape=..., units=N or ttl=K")

    if "shape" not in values or "units" not in values:
        _raise_topology_error(f"Topology file {path} needs both 'shape' and 'units'")

    try:
        units = int(values["units"])
        ttl = int(values["ttl"]) if "ttl" in values else None
    except ValueError:
        _raise_topology_error(f"units and ttl of {path} must be integers, got {values}")

    return build_topology(values["shape"], units, ttl)
