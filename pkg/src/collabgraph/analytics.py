"""Structure and partition-quality metrics over a store or named graph.

All metrics except strongly-connected components operate on a simple
undirected view of the graph: parallel edges collapse into one relationship
(their weights summed) and self-loops are dropped. Counts feed the per-group
modularity form, weights feed the pairwise form; on unit-weight simple graphs
the two are algebraically equal, which the tests assert as a cross-check.
"""

from __future__ import annotations

from typing import Iterable, Mapping

from .pregel import Partition
from .store import GraphStore, NamedGraph, StoreError


class SimpleUndirectedView:
    """Distinct unordered vertex pairs with summed weights; no self-loops."""

    def __init__(self, store: GraphStore, graph: NamedGraph | None = None):
        self.handles = store.graph_vertex_handles(graph)
        self.ordinal = {h: i for i, h in enumerate(self.handles)}
        n = len(self.handles)
        self.neighbor_sets: list[set[int]] = [set() for _ in range(n)]
        self.pair_weight: dict[tuple[int, int], float] = {}
        for edge in store.graph_edges(graph):
            u = self.ordinal[edge.from_handle]
            v = self.ordinal[edge.to_handle]
            if u == v:
                continue
            pair = (u, v) if u < v else (v, u)
            self.pair_weight[pair] = self.pair_weight.get(pair, 0.0) + edge.weight
            self.neighbor_sets[u].add(v)
            self.neighbor_sets[v].add(u)

    def __len__(self) -> int:
        return len(self.handles)

    @property
    def edge_count(self) -> int:
        return len(self.pair_weight)

    def degree(self, ordinal: int) -> int:
        return len(self.neighbor_sets[ordinal])


def _as_assignment(partition: Partition | Mapping[str, int]) -> Mapping[str, int]:
    if isinstance(partition, Partition):
        return partition.assignment
    return partition


def _community_ids(view: SimpleUndirectedView, partition) -> list:
    assignment = _as_assignment(partition)
    missing = [h for h in view.handles if h not in assignment]
    if missing:
        raise StoreError(f"partition misses vertex {missing[0]!r}")
    return [assignment[h] for h in view.handles]


def clustering_coefficient(
    store: GraphStore, handle: str, graph: NamedGraph | None = None
) -> float:
    """Fraction of a vertex's neighbor pairs that are themselves connected:
    2*R / (k*(k-1)) with R the edges among neighbors, 0 when degree < 2."""
    view = SimpleUndirectedView(store, graph)
    ordinal = view.ordinal.get(handle)
    if ordinal is None:
        if not store.has_vertex(handle):
            raise StoreError(f"unknown vertex: {handle!r}")
        return 0.0  # vertex exists but is isolated from this graph
    return _vertex_cc(view, ordinal)


def _vertex_cc(view: SimpleUndirectedView, ordinal: int) -> float:
    neighbors = view.neighbor_sets[ordinal]
    k = len(neighbors)
    if k < 2:
        return 0.0
    links = 0
    for u in neighbors:
        # count each connected neighbor pair once (u < w)
        links += sum(1 for w in view.neighbor_sets[u] if w > u and w in neighbors)
    return 2.0 * links / (k * (k - 1))


def average_clustering_coefficient(
    store: GraphStore, graph: NamedGraph | None = None
) -> float:
    view = SimpleUndirectedView(store, graph)
    if len(view) == 0:
        return 0.0
    return sum(_vertex_cc(view, i) for i in range(len(view))) / len(view)


def triangle_count(store: GraphStore, graph: NamedGraph | None = None) -> int:
    """Number of unordered vertex triples with all three edges present."""
    view = SimpleUndirectedView(store, graph)
    count = 0
    for (u, v) in view.pair_weight:  # pairs are stored with u < v
        # count each triangle once, via its two smallest ordinals
        for w in view.neighbor_sets[u] & view.neighbor_sets[v]:
            if w > v:
                count += 1
    return count


def modularity_M(
    store: GraphStore,
    partition: Partition | Mapping[str, int],
    graph: NamedGraph | None = None,
) -> float:
    """Per-group modularity: sum over communities of
    intra-edge fraction minus squared half-degree fraction."""
    view = SimpleUndirectedView(store, graph)
    total_edges = view.edge_count
    if total_edges == 0:
        raise StoreError("modularity is undefined on a graph with no edges")
    ids = _community_ids(view, partition)
    intra: dict = {}
    degree_sum: dict = {}
    for i in range(len(view)):
        cid = ids[i]
        degree_sum[cid] = degree_sum.get(cid, 0) + view.degree(i)
    for (u, v) in view.pair_weight:
        if ids[u] == ids[v]:
            intra[ids[u]] = intra.get(ids[u], 0) + 1
    result = 0.0
    for cid, k_c in degree_sum.items():
        l_c = intra.get(cid, 0)
        result += l_c / total_edges - (k_c / (2.0 * total_edges)) ** 2
    return result


def modularity_Q(
    store: GraphStore,
    partition: Partition | Mapping[str, int],
    graph: NamedGraph | None = None,
) -> float:
    """Pairwise modularity over ordered vertex pairs (including u == v):
    (1/2m) * sum[(A_uv - k_u*k_v/2m) * same_community]."""
    view = SimpleUndirectedView(store, graph)
    m = sum(view.pair_weight.values())
    if m == 0:
        raise StoreError("modularity is undefined on a graph with no edges")
    ids = _community_ids(view, partition)
    n = len(view)
    strength = [0.0] * n
    for (u, v), w in view.pair_weight.items():
        strength[u] += w
        strength[v] += w
    # A term: each undirected pair contributes its weight for (u,v) and (v,u)
    a_term = 0.0
    for (u, v), w in view.pair_weight.items():
        if ids[u] == ids[v]:
            a_term += 2.0 * w
    # expectation term over all ordered same-community pairs, u == v included
    strength_by_community: dict = {}
    for i in range(n):
        strength_by_community[ids[i]] = strength_by_community.get(ids[i], 0.0) + strength[i]
    expect_term = sum(s * s for s in strength_by_community.values()) / (2.0 * m)
    return (a_term - expect_term) / (2.0 * m)


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:  # path compression
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            # keep the smaller ordinal as the root so component ids are minima
            if ra < rb:
                self.parent[rb] = ra
            else:
                self.parent[ra] = rb


def weakly_connected_components(
    store: GraphStore, graph: NamedGraph | None = None
) -> Partition:
    """Component id per vertex, ignoring edge direction; each id is the
    minimum vertex ordinal of its component."""
    handles = store.graph_vertex_handles(graph)
    ordinal = {h: i for i, h in enumerate(handles)}
    uf = _UnionFind(len(handles))
    for edge in store.graph_edges(graph):
        uf.union(ordinal[edge.from_handle], ordinal[edge.to_handle])
    assignment = {h: uf.find(i) for h, i in ordinal.items()}
    return Partition(assignment=assignment)


def strongly_connected_components(
    stored: GraphStore, graph: NamedGraph | None = None
) -> Partition:
    """SCC id per vertex following stored edge direction (iterative Tarjan);
    ids are the minimum vertex ordinal in each component."""
    handles = stored.graph_vertex_handles(graph)
    ordinal = {h: i for i, h in enumerate(handles)}
    n = len(handles)
    successors: list[list[int]] = [[] for _ in range(n)]
    for edge in stored.graph_edges(graph):
        successors[ordinal[edge.from_handle]].append(ordinal[edge.to_handle])

    index_of = [-1] * n
    low = [0] * n
    on_stack = [False] * n
    stack: list[int] = []
    scc_id = [-1] * n
    counter = 0

    for start in range(n):
        if index_of[start] != -1:
            continue
        work: list[tuple[int, int]] = [(start, 0)]
        while work:
            v, child_i = work[-1]
            if child_i == 0:
                index_of[v] = low[v] = counter
                counter += 1
                stack.append(v)
                on_stack[v] = True
            advanced = False
            while child_i < len(successors[v]):
                w = successors[v][child_i]
                child_i += 1
                if index_of[w] == -1:
                    work[-1] = (v, child_i)
                    work.append((w, 0))
                    advanced = True
                    break
                if on_stack[w]:
                    low[v] = min(low[v], index_of[w])
            if advanced:
                continue
            work.pop()
            if low[v] == index_of[v]:
                component = []
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    component.append(w)
                    if w == v:
                        break
                root = min(component)
                for w in component:
                    scc_id[w] = root
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[v])

    return Partition(assignment={h: scc_id[i] for h, i in ordinal.items()})


def stats_report(
    store: GraphStore,
    graph: NamedGraph | None = None,
    result_field: str = "community",
) -> dict:
    """JSON-ready structure report: triangles, average clustering coefficient,
    both modularity forms (null when no edges), component counts and the
    per-type partition table. Vertices without a community annotation count
    as their own singleton communities for the modularity scores."""
    from .pregel import partition_stats

    view = SimpleUndirectedView(store, graph)
    handles = view.handles
    assignment: dict[str, int] = {}
    fresh = -1
    annotated = 0
    for h in handles:
        cid = store.get_vertex(h).attributes.get(result_field)
        if cid is None:
            assignment[h] = fresh
            fresh -= 1
        else:
            assignment[h] = cid
            annotated += 1
    report: dict = {
        "vertices": len(handles),
        "edges": view.edge_count,
        "triangles": triangle_count(store, graph),
        "avg_cc": average_clustering_coefficient(store, graph),
        "annotated_vertices": annotated,
    }
    if view.edge_count > 0:
        report["modularity_M"] = modularity_M(store, assignment, graph)
        report["modularity_Q"] = modularity_Q(store, assignment, graph)
    else:
        report["modularity_M"] = None
        report["modularity_Q"] = None
    report["wcc_count"] = weakly_connected_components(store, graph).community_count()
    report["scc_count"] = strongly_connected_components(store, graph).community_count()
    report["per_type_table"] = [
        {"type": t, "vertices": v, "communities": c}
        for t, v, c in partition_stats(store, result_field=result_field)
    ]
    return report
