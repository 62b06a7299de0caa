"""Vertex-centric BSP superstep engine and label-propagation community detection.

The engine runs synchronized supersteps over a frozen view of a graph: every
vertex first sends its current value along all ANY-direction edges, then each
vertex folds the messages received in that superstep into a new value. A hard
barrier separates the phases, so compute at step k sees only messages sent at
step k. The run halts when a superstep changes no value, or at max_gss.

Label propagation is the bundled vertex program: each vertex tallies incoming
labels weighted by edge weight (optionally counting its own label once) and
adopts a maximum-weight label, breaking ties by smallest id or seeded random
choice. Community detection with min_id ties also has a vectorized fast path
that computes identical results on large graphs.
"""

from __future__ import annotations

import logging
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from .store import Direction, GraphStore, NamedGraph, StoreError

log = logging.getLogger(__name__)

StatusCallback = Callable[[int, int, bool], None]


class GraphView:
    """Immutable adjacency snapshot used by the superstep loops.

    ``incidence[v]`` lists ``(neighbor_ordinal, weight)`` for every ANY-direction
    edge endpoint at v, so a self-loop appears twice and parallel edges once
    per copy. Ordinals follow the store's stable vertex insertion order.
    """

    def __init__(self, handles: Sequence[str], edges: Sequence[tuple[int, int, float]]):
        self.handles = list(handles)
        self.ordinal = {h: i for i, h in enumerate(self.handles)}
        n = len(self.handles)
        self.incidence: list[list[tuple[int, float]]] = [[] for _ in range(n)]
        self.edge_count = len(edges)
        for src, dst, weight in edges:
            # each stored edge yields a message channel in both directions
            self.incidence[src].append((dst, weight))
            self.incidence[dst].append((src, weight))

    @classmethod
    def from_store(cls, store: GraphStore, graph: NamedGraph | None = None) -> "GraphView":
        handles = store.graph_vertex_handles(graph)
        ordinal = {h: i for i, h in enumerate(handles)}
        edges = [
            (ordinal[e.from_handle], ordinal[e.to_handle], e.weight)
            for e in store.graph_edges(graph)
        ]
        return cls(handles, edges)

    def __len__(self) -> int:
        return len(self.handles)

    def any_degree_total(self) -> int:
        return sum(len(entries) for entries in self.incidence)


@dataclass
class PregelResult:
    values: dict[str, Any]
    supersteps_run: int
    converged: bool
    messages_sent: int = 0


def _shard_ranges(n: int, workers: int) -> list[tuple[int, int]]:
    workers = max(1, min(workers, n)) if n else 1
    bounds = np.linspace(0, n, workers + 1, dtype=int)
    return [(int(bounds[i]), int(bounds[i + 1])) for i in range(workers)]


def run_pregel(
    view: GraphView,
    program: Any,
    max_gss: int,
    *,
    workers: int = 1,
    status_callback: StatusCallback | None = None,
) -> PregelResult:
    """Run a vertex program to convergence or for at most ``max_gss`` supersteps.

    ``program`` provides ``initial_value(ordinal, handle)`` and
    ``compute(ordinal, own_value, messages, step)`` where ``messages`` is the
    list of ``(value, weight)`` pairs received this superstep, ordered by
    sender ordinal. Returning a value unequal to ``own_value`` marks the
    vertex as changed; convergence is a superstep with zero changes.
    """
    if max_gss < 1:
        raise ValueError(f"max_gss must be >= 1, got {max_gss}")
    n = len(view)
    if n == 0:
        if status_callback:
            status_callback(0, 0, True)
        return PregelResult(values={}, supersteps_run=0, converged=True)

    values: list[Any] = [program.initial_value(i, view.handles[i]) for i in range(n)]
    shards = _shard_ranges(n, workers)
    incidence = view.incidence
    messages_sent = 0
    converged = False
    step = 0

    def communicate(bounds: tuple[int, int]) -> tuple[dict[int, list], int]:
        lo, hi = bounds
        outbox: dict[int, list] = {}
        sent = 0
        for v in range(lo, hi):
            value = values[v]
            for nbr, weight in incidence[v]:
                outbox.setdefault(nbr, []).append((value, weight))
                sent += 1
        return outbox, sent

    def compute(bounds: tuple[int, int], inbox: dict[int, list], step: int) -> list[tuple[int, Any]]:
        lo, hi = bounds
        updates = []
        for v in range(lo, hi):
            new_value = program.compute(v, values[v], inbox.get(v, ()), step)
            if new_value != values[v]:
                updates.append((v, new_value))
        return updates

    with ThreadPoolExecutor(max_workers=len(shards)) as pool:
        while step < max_gss:
            step += 1
            # communicate: per-shard outboxes, merged in shard order so each
            # inbox ends up ordered by sender ordinal regardless of workers
            shard_outboxes = list(pool.map(communicate, shards))
            inbox: dict[int, list] = {}
            for outbox, sent in shard_outboxes:
                messages_sent += sent
                for nbr, msgs in outbox.items():
                    inbox.setdefault(nbr, []).extend(msgs)
            # barrier, then compute against the frozen previous values
            all_updates = list(pool.map(lambda b: compute(b, inbox, step), shards))
            changed = 0
            for updates in all_updates:
                for v, new_value in updates:
                    values[v] = new_value
                    changed += 1
            if status_callback:
                status_callback(step, changed, changed == 0)
            log.debug("superstep %d: %d active vertices", step, changed)
            if changed == 0:
                converged = True
                break

    return PregelResult(
        values={view.handles[i]: values[i] for i in range(n)},
        supersteps_run=step,
        converged=converged,
        messages_sent=messages_sent,
    )


class MaxValueProgram:
    """Floods the maximum initial value through the graph."""

    def __init__(self, initial: dict[int, Any] | None = None):
        self._initial = initial or {}

    def initial_value(self, ordinal: int, handle: str) -> Any:
        return self._initial.get(ordinal, ordinal)

    def compute(self, ordinal: int, own: Any, messages, step: int) -> Any:
        best = own
        for value, _ in messages:
            if value > best:
                best = value
        return best


@dataclass
class LpaParams:
    """Tuning knobs for label-propagation community detection."""

    max_gss: int = 500
    result_field: str = "community"
    tie_break: str = "min_id"  # or "random"
    rng_seed: int | None = None
    seed_labels: dict[str, int] | None = None
    include_self: bool = True
    random_init: bool = False

    def validate(self) -> None:
        if self.max_gss < 1:
            raise ValueError(f"max_gss must be >= 1, got {self.max_gss}")
        if self.tie_break not in ("min_id", "random"):
            raise ValueError(f"tie_break must be min_id or random, got {self.tie_break!r}")
        if self.tie_break == "random" and self.rng_seed is None:
            raise ValueError("tie_break=random requires rng_seed for reproducibility")
        if self.random_init and self.rng_seed is None:
            raise ValueError("random_init requires rng_seed for reproducibility")


@dataclass
class Partition:
    """Total vertex-to-community assignment plus convergence metadata."""

    assignment: dict[str, int] = field(default_factory=dict)
    supersteps_run: int = 0
    converged: bool = True

    def community_count(self) -> int:
        return len(set(self.assignment.values()))

    def communities(self) -> dict[int, list[str]]:
        groups: dict[int, list[str]] = {}
        for handle, cid in self.assignment.items():
            groups.setdefault(cid, []).append(handle)
        return groups


class LabelPropagationProgram:
    """LPA as a vertex program for :func:`run_pregel`."""

    def __init__(self, params: LpaParams, initial_labels: Sequence[int]):
        self.params = params
        self.initial_labels = list(initial_labels)

    def initial_value(self, ordinal: int, handle: str) -> int:
        return self.initial_labels[ordinal]

    def compute(self, ordinal: int, own: int, messages, step: int) -> int:
        tally: dict[int, float] = {}
        for label, weight in messages:
            tally[label] = tally.get(label, 0.0) + weight
        if self.params.include_self:
            tally[own] = tally.get(own, 0.0) + 1.0
        if not tally:
            return own
        best_weight = max(tally.values())
        tied = sorted(label for label, w in tally.items() if w == best_weight)
        if len(tied) == 1 or self.params.tie_break == "min_id":
            return tied[0]
        rng = random.Random((self.params.rng_seed, step, ordinal))
        return rng.choice(tied)


def _initial_labels(view: GraphView, params: LpaParams) -> list[int]:
    n = len(view)
    if params.random_init:
        rng = random.Random(params.rng_seed)
        labels = rng.sample(range(n), n)
    else:
        labels = list(range(n))  # dense ordinals in stable vertex order
    if params.seed_labels:
        for handle, label in params.seed_labels.items():
            ordinal = view.ordinal.get(handle)
            if ordinal is None:
                raise StoreError(f"seed label for vertex not in graph: {handle!r}")
            labels[ordinal] = label
    return labels


def _detect_vectorized(
    view: GraphView,
    params: LpaParams,
    labels_init: Sequence[int],
    workers: int,
    status_callback: StatusCallback | None,
) -> tuple[np.ndarray, int, bool]:
    """min_id superstep loop on flat arrays; semantics match the program path."""
    n = len(view)
    recip, sender, weight = [], [], []
    for v, entries in enumerate(view.incidence):
        for nbr, w in entries:
            # the channel at v's entry delivers v's label to nbr
            recip.append(nbr)
            sender.append(v)
            weight.append(w)
    if params.include_self:
        # own label counts once: model it as a self-channel of weight 1
        for v in range(n):
            recip.append(v)
            sender.append(v)
            weight.append(1.0)
    recip_arr = np.asarray(recip, dtype=np.int64)
    sender_arr = np.asarray(sender, dtype=np.int64)
    weight_arr = np.asarray(weight, dtype=np.float64)
    order = np.argsort(recip_arr, kind="stable")
    recip_arr, sender_arr, weight_arr = recip_arr[order], sender_arr[order], weight_arr[order]

    labels = np.asarray(labels_init, dtype=np.int64)
    shards = _shard_ranges(n, workers)
    shard_slices = [
        (np.searchsorted(recip_arr, lo, side="left"), np.searchsorted(recip_arr, hi, side="left"))
        for lo, hi in shards
    ]

    def tally_shard(args: tuple[int, np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
        idx, incoming = args
        lo, hi = shard_slices[idx]
        r = recip_arr[lo:hi]
        lab = incoming[lo:hi]
        w = weight_arr[lo:hi]
        if r.size == 0:
            return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
        # group by (recipient, label), sum weights per group
        grp_order = np.lexsort((lab, r))
        r_s, lab_s, w_s = r[grp_order], lab[grp_order], w[grp_order]
        boundary = np.empty(r_s.size, dtype=bool)
        boundary[0] = True
        boundary[1:] = (r_s[1:] != r_s[:-1]) | (lab_s[1:] != lab_s[:-1])
        starts = np.flatnonzero(boundary)
        sums = np.add.reduceat(w_s, starts)
        g_recip, g_label = r_s[starts], lab_s[starts]
        # pick per recipient: max weight, then smallest label
        pick_order = np.lexsort((g_label, -sums, g_recip))
        g_recip_sorted = g_recip[pick_order]
        first = np.empty(g_recip_sorted.size, dtype=bool)
        first[0] = True
        first[1:] = g_recip_sorted[1:] != g_recip_sorted[:-1]
        chosen = pick_order[np.flatnonzero(first)]
        return g_recip[chosen], g_label[chosen]

    converged = False
    step = 0
    with ThreadPoolExecutor(max_workers=len(shards)) as pool:
        while step < params.max_gss:
            step += 1
            incoming = labels[sender_arr]
            new_labels = labels.copy()
            for recips, chosen_labels in pool.map(
                tally_shard, ((i, incoming) for i in range(len(shards)))
            ):
                new_labels[recips] = chosen_labels
            changed = int(np.count_nonzero(new_labels != labels))
            labels = new_labels
            if status_callback:
                status_callback(step, changed, changed == 0)
            if changed == 0:
                converged = True
                break
    return labels, step, converged


def detect_communities(
    store_or_view: GraphStore | GraphView,
    params: LpaParams | None = None,
    *,
    graph: NamedGraph | None = None,
    workers: int = 1,
    status_callback: StatusCallback | None = None,
    engine: str = "auto",
) -> Partition:
    """Assign a community id to every vertex via synchronous label propagation.

    Every vertex starts with a unique label (its stable ordinal unless seeded
    or randomized), repeatedly adopts a maximum-weight label among those its
    neighbors sent plus optionally its own, and the run converges when no
    label changes. ``engine`` picks the superstep loop: "bsp" runs the generic
    message-passing engine, "vectorized" the array fast path (min_id only),
    "auto" chooses by tie mode.
    """
    params = params or LpaParams()
    params.validate()
    if isinstance(store_or_view, GraphView):
        view = store_or_view
    else:
        view = GraphView.from_store(store_or_view, graph)
    n = len(view)
    if n == 0:
        return Partition(assignment={}, supersteps_run=0, converged=True)

    labels_init = _initial_labels(view, params)
    if engine == "auto":
        engine = "vectorized" if params.tie_break == "min_id" else "bsp"
    if engine == "vectorized":
        if params.tie_break != "min_id":
            raise ValueError("vectorized engine supports only min_id tie-break")
        labels, steps, converged = _detect_vectorized(
            view, params, labels_init, workers, status_callback
        )
        assignment = {view.handles[i]: int(labels[i]) for i in range(n)}
        return Partition(assignment=assignment, supersteps_run=steps, converged=converged)
    if engine != "bsp":
        raise ValueError(f"unknown engine: {engine!r}")

    program = LabelPropagationProgram(params, labels_init)
    result = run_pregel(
        view, program, params.max_gss, workers=workers, status_callback=status_callback
    )
    return Partition(
        assignment={h: int(v) for h, v in result.values.items()},
        supersteps_run=result.supersteps_run,
        converged=result.converged,
    )


def annotate_graph(
    store: GraphStore,
    partition: Partition,
    result_field: str = "community",
    *,
    graph: NamedGraph | None = None,
) -> int:
    """Write each graph vertex's community id into ``result_field``.

    Atomic: raises before any mutation when the partition misses a vertex of
    the (named) graph. Returns the number of vertices annotated.
    """
    handles = store.graph_vertex_handles(graph)
    missing = [h for h in handles if h not in partition.assignment]
    if missing:
        raise StoreError(
            f"partition misses {len(missing)} graph vertices (first: {missing[0]!r})"
        )
    for handle in handles:
        store.get_vertex(handle).attributes[result_field] = partition.assignment[handle]
    return len(handles)


def partition_stats(
    store: GraphStore,
    partition: Partition | None = None,
    result_field: str = "community",
) -> list[tuple[str, int, int]]:
    """Per-vertex-type (type, vertex count, distinct community count) rows,
    closed by an "all types" row with the global distinct count."""
    assignment = partition.assignment if partition is not None else None
    rows: list[tuple[str, int, int]] = []
    all_communities: set[int] = set()
    total_vertices = 0
    for name in store.vertex_collection_names():
        communities: set[int] = set()
        count = 0
        for vertex in store.vertices(name):
            count += 1
            if assignment is not None:
                cid = assignment.get(vertex.handle)
            else:
                cid = vertex.attributes.get(result_field)
            if cid is not None:
                communities.add(cid)
        rows.append((name, count, len(communities)))
        all_communities |= communities
        total_vertices += count
    if rows:
        rows.append(("all types", total_vertices, len(all_communities)))
    return rows


def format_partition_stats(rows: list[tuple[str, int, int]]) -> str:
    """Columnar layout: vertex type, number of vertices, detected communities."""
    header = ("Vertex type", "Number of vertices", "Number of detected communities")
    table = [header] + [(t, str(v), str(c)) for t, v, c in rows]
    widths = [max(len(r[i]) for r in table) for i in range(3)]
    return "\n".join(
        "\t".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip()
        for row in table
    )
