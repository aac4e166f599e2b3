"""Graph-of-homotopies monodromy engine.

A handful of generic parameter instances become graph nodes; each edge
carries a segment homotopy with its own random unit-modulus gamma pair.
Tracking known solutions across edges populates per-node registries and
per-edge correspondence tables, and cycles through the base node whose
correspondences are total yield permutations of the discovered fiber.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Callable, IO, Iterable, Sequence

import numpy as np

from .groups import Permutation
from .linalg import numerical_rank
from .slp import GateSystem, RankDeficient, jacobian_unknowns, residual
from .tracker import PathSegment, TrackerOptions, track

__all__ = [
    "SolutionRegistry",
    "BasePoint",
    "HomotopyEdge",
    "HomotopyGraph",
    "RunOptions",
    "StopReason",
    "MonodromyResult",
    "TrackFailureRate",
    "MixedDegree",
    "build_graph",
    "run",
    "permutations",
    "export_perm_script",
    "encode_solutions",
    "decode_solutions",
]

_RESIDUAL_GUARD = 1e-6


class TrackFailureRate(ArithmeticError):
    """Over half the paths in one loop failed; tolerances or base points are bad."""


class MixedDegree(ValueError):
    """Permutations of different degrees cannot share one script."""


class SolutionRegistry:
    """Ordered store of solution vectors with stable ids and near-duplicate merging.

    Two vectors are the same solution when their keys (the vectors themselves,
    or their equivalencer projections) differ by at most dedup_tolerance in
    the max-norm, normalized by (1 + max-norm of the stored key). Ids follow
    assignment order and are never reused.
    """

    def __init__(self, dedup_tolerance: float = 1e-6,
                 equivalencer: Callable[[np.ndarray], np.ndarray] | None = None):
        self.dedup_tolerance = float(dedup_tolerance)
        self.equivalencer = equivalencer
        self._solutions: list[np.ndarray] = []
        self._keys: list[np.ndarray] = []

    def _key_of(self, x: np.ndarray) -> np.ndarray:
        if self.equivalencer is None:
            return x
        return np.asarray(self.equivalencer(x), dtype=complex).ravel()

    def register(self, x: np.ndarray) -> tuple[int, bool]:
        """Returns (id, is_new). Matching an existing key keeps the old entry."""
        x = np.asarray(x, dtype=complex).ravel()
        key = self._key_of(x)
        match = self._match(key)
        if match is not None:
            return match, False
        self._solutions.append(x.copy())
        self._keys.append(key.copy())
        return len(self._solutions) - 1, True

    def _match(self, key: np.ndarray) -> int | None:
        for idx, stored in enumerate(self._keys):
            if stored.shape != key.shape:
                continue
            scale = 1.0 + max(float(np.abs(stored).max()), float(np.abs(key).max()))
            if float(np.abs(stored - key).max()) <= self.dedup_tolerance * scale:
                return idx
        return None

    def find(self, x: np.ndarray) -> int | None:
        """Id of the entry matching x's key, or None."""
        x = np.asarray(x, dtype=complex).ravel()
        return self._match(self._key_of(x))

    def __len__(self) -> int:
        return len(self._solutions)

    def __getitem__(self, idx: int) -> np.ndarray:
        return self._solutions[idx]

    def vectors(self) -> list[np.ndarray]:
        return list(self._solutions)


@dataclass
class BasePoint:
    """A generic parameter instance with the solutions known at it."""

    node_id: int
    z: np.ndarray
    registry: SolutionRegistry


@dataclass
class HomotopyEdge:
    """Segment homotopy between two nodes with correspondence bookkeeping.

    forward_map sends from-node ids to to-node ids, backward_map the reverse;
    each is filled only by actual tracking in its own direction, so the two
    are mutually inverse wherever both are defined. The attempted sets record
    every id ever sent (success or failure) so failures are not retried.
    """

    edge_id: int
    from_node: int
    to_node: int
    gamma_pair: tuple[complex, complex]
    forward_map: dict[int, int] = field(default_factory=dict)
    backward_map: dict[int, int] = field(default_factory=dict)
    attempted_forward: set[int] = field(default_factory=set)
    attempted_backward: set[int] = field(default_factory=set)


@dataclass
class HomotopyGraph:
    system: GateSystem
    nodes: list[BasePoint]
    edges: list[HomotopyEdge]
    rng: np.random.Generator


class StopReason(enum.Enum):
    Stabilization = "stabilization"
    Saturation = "saturation"
    TargetCount = "target_count"


@dataclass(frozen=True)
class RunOptions:
    """Stopping configuration for the monodromy loop."""

    stabilization_limit: int = 20
    saturate: bool = False
    target_count: int | None = None

    def __post_init__(self):
        if self.stabilization_limit < 1:
            raise ValueError(f"stabilization_limit must be >= 1, got {self.stabilization_limit}")
        if self.target_count is not None and self.target_count < 1:
            raise ValueError(f"target_count must be >= 1, got {self.target_count}")


@dataclass
class MonodromyResult:
    solutions: list[np.ndarray]
    permutations: list[Permutation]
    loops_run: int
    paths_tracked: int
    failures: int
    stopped_by: StopReason


def _segment_min_distance(g0: complex, g1: complex) -> float:
    # Distance from the segment [g0, g1] in C to the origin.
    d = g1 - g0
    dd = (d * d.conjugate()).real
    if dd == 0.0:
        return abs(g0)
    s = min(1.0, max(0.0, (-(d.conjugate() * g0)).real / dd))
    return abs(g0 + s * d)


def _sample_gamma_pair(rng: np.random.Generator) -> tuple[complex, complex]:
    # Reject pairs whose homotopy denominator (1-t)*g0 + t*g1 gets near zero.
    while True:
        g0, g1 = np.exp(2j * np.pi * rng.random(2))
        if _segment_min_distance(complex(g0), complex(g1)) >= 0.1:
            return complex(g0), complex(g1)


def build_graph(sys: GateSystem, z0: np.ndarray, x0: np.ndarray, n_nodes: int,
                rng: np.random.Generator, dedup_tolerance: float = 1e-6,
                equivalencer: Callable[[np.ndarray], np.ndarray] | None = None) -> HomotopyGraph:
    """Complete graph over n_nodes generic instances, seeded with (z0, x0).

    Args:
        sys: square system (outputs == unknowns).
        z0: parameter vector of the seed instance.
        x0: a solution of sys at z0, residual at most 1e-8.
        n_nodes: number of base points, at least 2.
        rng: drives the fresh parameter draws and gamma pairs.
        dedup_tolerance: registry near-duplicate threshold.
        equivalencer: optional projection whose values define solution identity.

    Raises:
        ValueError: fewer than 2 nodes, wrong shapes, or a seed residual above 1e-8.
        RankDeficient: the Jacobian in the unknowns is singular at (z0, x0).
    """
    if n_nodes < 2:
        raise ValueError(f"at least 2 nodes required, got {n_nodes}")
    n_out = len(sys.outputs)
    n_unk = len(sys.unknown_names)
    if n_out != n_unk:
        raise ValueError(f"system must be square, got {n_out} equations in {n_unk} unknowns")
    z0 = np.asarray(z0, dtype=complex).ravel()
    x0 = np.asarray(x0, dtype=complex).ravel()
    if len(z0) != len(sys.parameter_names) or len(x0) != n_unk:
        raise ValueError("parameter or unknown vector has the wrong length")
    res = residual(sys, z0, x0)
    if res > 1e-8:
        raise ValueError(f"seed residual {res:.3e} exceeds 1e-8")
    jac = jacobian_unknowns(sys, z0, x0)
    if numerical_rank(jac) < n_unk:
        raise RankDeficient(f"Jacobian rank below {n_unk} at the seed solution")

    nodes = [BasePoint(0, z0, SolutionRegistry(dedup_tolerance, equivalencer))]
    nodes[0].registry.register(x0)
    for k in range(1, n_nodes):
        z = rng.standard_normal(len(z0)) + 1j * rng.standard_normal(len(z0))
        nodes.append(BasePoint(k, z, SolutionRegistry(dedup_tolerance, equivalencer)))
    edges = []
    for a in range(n_nodes):
        for b in range(a + 1, n_nodes):
            edges.append(HomotopyEdge(len(edges), a, b, _sample_gamma_pair(rng)))
    return HomotopyGraph(sys, nodes, edges, rng)


def _direction_units(graph: HomotopyGraph):
    # (pending ids, edge, forward?) for every edge direction: pending means
    # registered at the source but never sent across this direction.
    units = []
    for edge in graph.edges:
        src = graph.nodes[edge.from_node].registry
        pending = [i for i in range(len(src)) if i not in edge.attempted_forward]
        units.append((pending, edge, True))
        src = graph.nodes[edge.to_node].registry
        pending = [i for i in range(len(src)) if i not in edge.attempted_backward]
        units.append((pending, edge, False))
    return units


def _add_random_edge(graph: HomotopyGraph) -> None:
    # Fresh gammas between a populated node and any other node.
    populated = [n.node_id for n in graph.nodes if len(n.registry) > 0]
    a = int(populated[int(graph.rng.integers(len(populated)))])
    others = [n.node_id for n in graph.nodes if n.node_id != a]
    b = int(others[int(graph.rng.integers(len(others)))])
    lo, hi = min(a, b), max(a, b)
    graph.edges.append(HomotopyEdge(len(graph.edges), lo, hi, _sample_gamma_pair(graph.rng)))


def _track_batch(graph: HomotopyGraph, pending: list[int], edge: HomotopyEdge,
                 forward: bool, tracker_opts: TrackerOptions) -> tuple[int, int, int]:
    """Sends pending ids across one edge direction.

    Returns (paths, failures, newly registered)."""
    if forward:
        src = graph.nodes[edge.from_node]
        dst = graph.nodes[edge.to_node]
        g0, g1 = edge.gamma_pair
        corr, attempted = edge.forward_map, edge.attempted_forward
    else:
        src = graph.nodes[edge.to_node]
        dst = graph.nodes[edge.from_node]
        g1, g0 = edge.gamma_pair
        corr, attempted = edge.backward_map, edge.attempted_backward
    seg = PathSegment(src.z, dst.z, g0, g1)
    failures = 0
    new_count = 0
    for sid in sorted(pending):
        attempted.add(sid)
        result = track(graph.system, seg, src.registry[sid], tracker_opts)
        if not result.success:
            failures += 1
            continue
        endpoint = result.endpoint
        res = residual(graph.system, dst.z, endpoint)
        if res > _RESIDUAL_GUARD * (1.0 + float(np.abs(endpoint).max())):
            failures += 1
            continue
        dst_id, is_new = dst.registry.register(endpoint)
        corr[sid] = dst_id
        if is_new:
            new_count += 1
    return len(pending), failures, new_count


def _compose_cycle(graph: HomotopyGraph, steps: list[tuple[HomotopyEdge, bool]]) -> Permutation | None:
    base_size = len(graph.nodes[0].registry)
    images = []
    for start in range(base_size):
        val: int | None = start
        for edge, forward in steps:
            table = edge.forward_map if forward else edge.backward_map
            val = table.get(val)
            if val is None:
                return None
        images.append(val)
    if sorted(images) != list(range(base_size)):
        return None
    return Permutation(images)


def _extract_permutations(graph: HomotopyGraph) -> list[Permutation]:
    """Permutations from simple cycles through node 0 with total correspondences.

    Both traversal orientations are enumerated, and parallel edges count as
    distinct steps; partial correspondences discard the cycle.
    """
    adjacency: dict[int, list[tuple[HomotopyEdge, int, bool]]] = {n.node_id: [] for n in graph.nodes}
    for edge in graph.edges:
        adjacency[edge.from_node].append((edge, edge.to_node, True))
        adjacency[edge.to_node].append((edge, edge.from_node, False))

    found: list[Permutation] = []
    seen: set[tuple[int, ...]] = set()

    def visit(current: int, visited: set[int], steps: list[tuple[HomotopyEdge, bool]]) -> None:
        for edge, nbr, forward in adjacency[current]:
            if nbr == 0:
                if not steps or (len(steps) == 1 and steps[0][0] is edge):
                    continue  # a cycle needs at least two distinct edges
                perm = _compose_cycle(graph, steps + [(edge, forward)])
                if perm is not None and perm.images not in seen:
                    seen.add(perm.images)
                    found.append(perm)
            elif nbr not in visited:
                visit(nbr, visited | {nbr}, steps + [(edge, forward)])

    visit(0, {0}, [])
    return found


def run(graph: HomotopyGraph, opts: RunOptions | None = None,
        tracker_opts: TrackerOptions | None = None) -> MonodromyResult:
    """Tracks solutions around the graph until a stopping criterion fires.

    Each loop sends every pending solution across the edge direction with the
    most pending work (ties: lowest edge id, forward first). When nothing is
    pending and saturation stopping is off, a fresh random-gamma edge keeps
    the exploration going until stabilization.

    Raises:
        TrackFailureRate: more than half the paths of one multi-path loop failed.
    """
    if opts is None:
        opts = RunOptions()
    if tracker_opts is None:
        tracker_opts = TrackerOptions()
    base = graph.nodes[0].registry
    loops = 0
    paths = 0
    failures = 0
    no_progress = 0
    stopped_by = None
    while True:
        if opts.target_count is not None and len(base) >= opts.target_count:
            stopped_by = StopReason.TargetCount
            break
        units = _direction_units(graph)
        pending, edge, forward = max(units, key=lambda u: (len(u[0]), -u[1].edge_id, u[2]))
        if not pending:
            if opts.saturate:
                stopped_by = StopReason.Saturation
                break
            _add_random_edge(graph)
            continue
        n_paths, n_fail, n_new = _track_batch(graph, pending, edge, forward, tracker_opts)
        loops += 1
        paths += n_paths
        failures += n_fail
        # One path failing alone is an unlucky gamma draw, not evidence of bad
        # tolerances; stabilization absorbs it. Majority failure on a real
        # batch is systemic and aborts.
        if n_paths > 1 and 2 * n_fail > n_paths:
            raise TrackFailureRate(f"{n_fail} of {n_paths} paths failed on edge {edge.edge_id}")
        no_progress = 0 if n_new > 0 else no_progress + 1
        if no_progress >= opts.stabilization_limit:
            stopped_by = StopReason.Stabilization
            break
    perms = _extract_permutations(graph)
    return MonodromyResult(
        solutions=base.vectors(),
        permutations=perms,
        loops_run=loops,
        paths_tracked=paths,
        failures=failures,
        stopped_by=stopped_by,
    )


def permutations(result: MonodromyResult) -> list[Permutation]:
    """The permutations recorded by the run, each total on the id set."""
    return list(result.permutations)


def export_perm_script(perms: Sequence[Permutation], group_name: str = "G",
                       sink: IO[str] | None = None) -> str:
    """Writes the perm-script form: PermList lines (1-based) plus a Group line.

    Raises:
        MixedDegree: the permutations do not share one degree.
    """
    degrees = {p.degree for p in perms}
    if len(degrees) > 1:
        raise MixedDegree(f"mixed permutation degrees: {sorted(degrees)}")
    lines = []
    for k, p in enumerate(perms):
        images = ", ".join(str(v + 1) for v in p.images)
        lines.append(f"p{k}:= PermList([{images}]);")
    names = ", ".join(f"p{k}" for k in range(len(perms)))
    lines.append(f"{group_name}:=Group({names});")
    text = "\n".join(lines)
    if sink is not None:
        sink.write(text)
    return text


def _c2pair(v: complex) -> list[float]:
    return [float(v.real), float(v.imag)]


def encode_solutions(parameters: np.ndarray, solutions: Iterable[np.ndarray],
                     residuals: Iterable[float]) -> dict:
    """JSON-ready dict: {"parameters": [[re,im],...], "solutions": [[[re,im],...],...],
    "residuals": [r,...]}."""
    return {
        "parameters": [_c2pair(complex(v)) for v in np.asarray(parameters).ravel()],
        "solutions": [[_c2pair(complex(v)) for v in np.asarray(x).ravel()] for x in solutions],
        "residuals": [float(r) for r in residuals],
    }


def decode_solutions(obj: dict | str) -> tuple[np.ndarray, list[np.ndarray], list[float]]:
    """Inverse of encode_solutions; accepts the dict or its JSON text."""
    if isinstance(obj, str):
        obj = json.loads(obj)
    params = np.array([complex(re, im) for re, im in obj["parameters"]], dtype=complex)
    sols = [np.array([complex(re, im) for re, im in x], dtype=complex) for x in obj["solutions"]]
    res = [float(r) for r in obj.get("residuals", [])]
    return params, sols, res
