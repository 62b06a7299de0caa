"""Depth-bounded exploration from a start vertex.

The result is the union of all simple paths (no vertex repeated within a
path) whose length in edges falls inside [min_depth, max_depth]: every vertex
and edge on a qualifying path is collected, deduplicated in first-encounter
order. An optional distance mode instead keeps vertices whose BFS shortest
distance falls in the range, matching the "exactly at N hops" reading.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .store import Direction, EdgeRecord, GraphStore, NamedGraph, VertexRecord


@dataclass
class TraversalSpec:
    start: str
    min_depth: int = 1
    max_depth: int = 2
    direction: Direction | str = Direction.ANY
    graph: str | None = None
    community_filter: int | None = None
    vertex_cap: int | None = 10000  # None disables the cap
    distance_mode: bool = False

    def validate(self) -> None:
        if self.min_depth < 0:
            raise ValueError(f"min_depth must be >= 0, got {self.min_depth}")
        if self.max_depth < self.min_depth:
            raise ValueError(
                f"max_depth ({self.max_depth}) must be >= min_depth ({self.min_depth})"
            )
        if self.vertex_cap is not None and self.vertex_cap < 1:
            raise ValueError(f"vertex_cap must be >= 1, got {self.vertex_cap}")


@dataclass
class TraversalResult:
    start_node: VertexRecord | None
    vertices: list[VertexRecord] = field(default_factory=list)
    edges: list[EdgeRecord] = field(default_factory=list)
    communities: list[int] = field(default_factory=list)
    truncated: bool = False


def distinct_communities(vertices) -> list[int]:
    """Sorted unique community ids over the given vertices; unannotated
    vertices are skipped."""
    seen = {v.community for v in vertices if v.community is not None}
    return sorted(seen)


def traverse(store: GraphStore, spec: TraversalSpec) -> TraversalResult:
    """Explore the graph per the spec and return the deduplicated subgraph.

    Paths prune at vertices failing the community filter, and enumeration
    stops adding vertices beyond the cap (flagging the result as truncated).
    """
    spec.validate()
    graph: NamedGraph | None = store.get_graph(spec.graph) if spec.graph else None
    start_vertex = store.get_vertex(spec.start)
    direction = Direction.parse(spec.direction)

    if spec.distance_mode:
        return _traverse_distance(store, spec, graph, start_vertex, direction)

    cap = spec.vertex_cap
    vertices: dict[str, None] = {}
    edges: dict[str, None] = {}
    state = {"truncated": False}

    def community_ok(handle: str) -> bool:
        if spec.community_filter is None:
            return True
        return store.get_vertex(handle).community == spec.community_filter

    def try_add_vertex(handle: str) -> bool:
        if handle in vertices:
            return True
        if cap is not None and len(vertices) >= cap:
            state["truncated"] = True
            return False
        vertices[handle] = None
        return True

    def add_qualifying_prefix(path_v: list[str], path_e: list[str], from_index: int) -> bool:
        """Add path vertices/edges starting at from_index; stop at the cap."""
        for i in range(from_index, len(path_v)):
            if not try_add_vertex(path_v[i]):
                return False
            if i > 0:
                edges[path_e[i - 1]] = None
        return True

    if not community_ok(spec.start):
        return TraversalResult(start_node=start_vertex, truncated=False)

    # Depth-first path enumeration with per-path cycle avoidance. The path
    # becomes qualifying once its length reaches min_depth; from then on each
    # extension only needs to add its new tip.
    def walk(handle: str, depth: int, on_path: set[str], path_v: list[str], path_e: list[str]) -> None:
        if depth >= spec.min_depth:
            start_index = 0 if depth == spec.min_depth else len(path_v) - 1
            if not add_qualifying_prefix(path_v, path_e, start_index):
                return
        if depth == spec.max_depth:
            return
        for edge, neighbor in store.neighbors(handle, direction, graph):
            if neighbor in on_path:
                continue
            if not community_ok(neighbor):
                continue
            on_path.add(neighbor)
            path_v.append(neighbor)
            path_e.append(edge.handle)
            walk(neighbor, depth + 1, on_path, path_v, path_e)
            on_path.discard(neighbor)
            path_v.pop()
            path_e.pop()

    walk(spec.start, 0, {spec.start}, [spec.start], [])

    vertex_records = [store.get_vertex(h) for h in vertices]
    return TraversalResult(
        start_node=start_vertex,
        vertices=vertex_records,
        edges=[store.get_edge(h) for h in edges],
        communities=distinct_communities(vertex_records),
        truncated=state["truncated"],
    )


def _traverse_distance(
    store: GraphStore,
    spec: TraversalSpec,
    graph: NamedGraph | None,
    start_vertex: VertexRecord,
    direction: Direction,
) -> TraversalResult:
    """BFS variant: keep vertices whose shortest distance is in range, plus
    the allowed-direction edges between kept vertices."""
    from collections import deque

    def community_ok(handle: str) -> bool:
        if spec.community_filter is None:
            return True
        return store.get_vertex(handle).community == spec.community_filter

    distances: dict[str, int] = {}
    if community_ok(spec.start):
        distances[spec.start] = 0
        queue = deque([spec.start])
        while queue:
            current = queue.popleft()
            d = distances[current]
            if d == spec.max_depth:
                continue
            for _, neighbor in store.neighbors(current, direction, graph):
                if neighbor in distances or not community_ok(neighbor):
                    continue
                distances[neighbor] = d + 1
                queue.append(neighbor)

    kept = [h for h, d in distances.items() if spec.min_depth <= d <= spec.max_depth]
    truncated = False
    if spec.vertex_cap is not None and len(kept) > spec.vertex_cap:
        kept = kept[: spec.vertex_cap]
        truncated = True
    kept_set = set(kept)
    edge_handles: dict[str, None] = {}
    for handle in kept:
        for edge, neighbor in store.neighbors(handle, direction, graph):
            if neighbor in kept_set:
                edge_handles[edge.handle] = None

    vertex_records = [store.get_vertex(h) for h in kept]
    return TraversalResult(
        start_node=start_vertex,
        vertices=vertex_records,
        edges=[store.get_edge(h) for h in edge_handles],
        communities=distinct_communities(vertex_records),
        truncated=truncated,
    )


def validate_depths(min_depth: int, max_depth: int) -> list[str]:
    """Server-side depth validation: minimum at least 1 and maximum at least
    the minimum. Returns a list of field-naming error messages, empty if ok."""
    errors = []
    if min_depth < 1:
        errors.append(f"minDepth: must be 1 or greater, got {min_depth}")
    if max_depth < min_depth:
        errors.append(
            f"maxDepth: must be greater than or equal to minDepth, got {max_depth} < {min_depth}"
        )
    return errors
