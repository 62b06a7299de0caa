"""In-memory property-graph store with vertex/edge collections and JSONL persistence.

Documents live in named collections. A vertex is addressed by a handle of the
form ``"<collection>/<key>"``; an edge additionally carries ``_from``/``_to``
handles pointing at stored vertices. Adjacency is hash-indexed per vertex so
neighbor lookups never scan the edge collections.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Iterator


class StoreError(Exception):
    """Base error for store misuse (unknown handles, duplicates, integrity)."""


class StoreFormatError(StoreError):
    """A persisted collection file could not be parsed."""


class Direction(Enum):
    OUTBOUND = "outbound"  # follow _from -> _to
    INBOUND = "inbound"    # follow _to -> _from
    ANY = "any"            # follow both

    @classmethod
    def parse(cls, value: "Direction | str") -> "Direction":
        if isinstance(value, Direction):
            return value
        try:
            return cls[value.upper()]
        except KeyError:
            raise ValueError(f"unknown direction: {value!r}") from None


class CollectionKind(Enum):
    VERTEX = "vertex"
    EDGE = "edge"


_SCALAR = (str, int, float, bool, type(None))


def _check_attribute_value(name: str, value: Any, depth: int = 0) -> None:
    # Attribute values: scalars, lists of scalars-or-flat-maps, one level of
    # nested maps. Anything deeper is rejected rather than silently mangled
    # on the JSONL round-trip.
    if isinstance(value, _SCALAR):
        return
    if isinstance(value, list):
        if depth >= 1:
            raise StoreError(f"attribute {name!r}: lists may not nest")
        for item in value:
            _check_attribute_value(name, item, depth + 1)
        return
    if isinstance(value, dict):
        if depth >= 2:
            raise StoreError(f"attribute {name!r}: maps may nest only one level")
        for k, v in value.items():
            if not isinstance(k, str):
                raise StoreError(f"attribute {name!r}: map keys must be strings")
            _check_attribute_value(name, v, depth + 2)
        return
    raise StoreError(
        f"attribute {name!r} has unsupported type {type(value).__name__}"
    )


_RESERVED_ATTRS = {"_key", "_id", "_from", "_to"}


@dataclass
class VertexRecord:
    """A vertex document. ``community`` mirrors the ``community`` attribute."""

    collection: str
    key: str
    attributes: dict[str, Any] = field(default_factory=dict)

    @property
    def handle(self) -> str:
        return f"{self.collection}/{self.key}"

    @property
    def community(self) -> int | None:
        return self.attributes.get("community")

    @property
    def graph_name(self) -> str | None:
        return self.attributes.get("graph_name")

    def to_json_obj(self) -> dict[str, Any]:
        obj: dict[str, Any] = {"_key": self.key, "_id": self.handle}
        obj.update(self.attributes)
        return obj


@dataclass
class EdgeRecord:
    """A directed edge document with unit weight by default."""

    collection: str
    key: str
    from_handle: str
    to_handle: str
    label: str | None = None
    weight: float = 1.0

    @property
    def handle(self) -> str:
        return f"{self.collection}/{self.key}"

    def to_json_obj(self) -> dict[str, Any]:
        obj: dict[str, Any] = {
            "_key": self.key,
            "_id": self.handle,
            "_from": self.from_handle,
            "_to": self.to_handle,
        }
        if self.label is not None:
            obj["label"] = self.label
        if self.weight != 1.0:
            obj["weight"] = self.weight
        return obj


@dataclass
class Collection:
    name: str
    kind: CollectionKind
    records: dict[str, Any] = field(default_factory=dict)  # key -> record

    def __len__(self) -> int:
        return len(self.records)


@dataclass
class NamedGraph:
    """A graph defined by edge collections; its vertex set derives from edges."""

    name: str
    edge_collections: list[str]


# One adjacency entry per edge endpoint: (edge_handle, is_outgoing). A
# self-loop contributes two entries to the same vertex, so ANY-degree counts
# it twice.
_AdjEntry = tuple[str, bool]


class GraphStore:
    """Collections of vertices and edges plus hash-indexed adjacency.

    Mutations (insert/delete) keep the no-dangling-edge invariant: edges can
    only reference stored vertices and deleting a vertex cascades to its
    incident edges. Reads are safe from concurrent threads as long as no
    mutation is in flight.
    """

    def __init__(self) -> None:
        self.collections: dict[str, Collection] = {}
        self.graphs: dict[str, NamedGraph] = {}
        self._adjacency: dict[str, list[_AdjEntry]] = {}
        self._edges_by_handle: dict[str, EdgeRecord] = {}
        self._vertex_order: list[str] = []  # stable insertion order of handles
        self._key_counter = 0

    # -- collections -------------------------------------------------------

    def create_collection(self, name: str, kind: CollectionKind | str) -> Collection:
        if isinstance(kind, str):
            kind = CollectionKind(kind)
        if name in self.collections:
            raise StoreError(f"collection {name!r} already exists")
        coll = Collection(name=name, kind=kind)
        self.collections[name] = coll
        return coll

    def ensure_collection(self, name: str, kind: CollectionKind | str) -> Collection:
        if isinstance(kind, str):
            kind = CollectionKind(kind)
        coll = self.collections.get(name)
        if coll is None:
            return self.create_collection(name, kind)
        if coll.kind is not kind:
            raise StoreError(f"collection {name!r} exists with kind {coll.kind.value}")
        return coll

    def _collection(self, name: str, kind: CollectionKind) -> Collection:
        coll = self.collections.get(name)
        if coll is None:
            raise StoreError(f"unknown collection: {name!r}")
        if coll.kind is not kind:
            raise StoreError(f"collection {name!r} is not a {kind.value} collection")
        return coll

    def next_key(self) -> str:
        self._key_counter += 1
        return str(self._key_counter)

    # -- vertices ----------------------------------------------------------

    def insert_vertex(
        self, collection: str, key: str | None = None, attributes: dict[str, Any] | None = None
    ) -> str:
        coll = self._collection(collection, CollectionKind.VERTEX)
        if key is None:
            key = self.next_key()
        if key in coll.records:
            raise StoreError(f"duplicate key {key!r} in collection {collection!r}")
        attributes = dict(attributes or {})
        for name, value in attributes.items():
            if name in _RESERVED_ATTRS:
                raise StoreError(f"attribute name {name!r} is reserved")
            _check_attribute_value(name, value)
        if "community" in attributes:
            _check_community(attributes["community"])
        record = VertexRecord(collection=collection, key=key, attributes=attributes)
        coll.records[key] = record
        self._adjacency[record.handle] = []
        self._vertex_order.append(record.handle)
        return record.handle

    def get_vertex(self, handle: str) -> VertexRecord:
        record = self._find_vertex(handle)
        if record is None:
            raise StoreError(f"unknown vertex: {handle!r}")
        return record

    def has_vertex(self, handle: str) -> bool:
        return self._find_vertex(handle) is not None

    def _find_vertex(self, handle: str) -> VertexRecord | None:
        collection, _, key = handle.partition("/")
        coll = self.collections.get(collection)
        if coll is None or coll.kind is not CollectionKind.VERTEX:
            return None
        return coll.records.get(key)

    def delete_vertex(self, handle: str) -> int:
        """Remove a vertex and cascade-delete every incident edge.

        Returns the number of distinct edges removed.
        """
        record = self.get_vertex(handle)
        incident = {edge_handle for edge_handle, _ in self._adjacency[handle]}
        for edge_handle in incident:
            self._remove_edge(edge_handle)
        del self.collections[record.collection].records[record.key]
        del self._adjacency[handle]
        self._vertex_order.remove(handle)
        return len(incident)

    def vertices(self, collection: str | None = None) -> Iterator[VertexRecord]:
        if collection is not None:
            yield from self._collection(collection, CollectionKind.VERTEX).records.values()
            return
        for coll in self.collections.values():
            if coll.kind is CollectionKind.VERTEX:
                yield from coll.records.values()

    def vertex_handles(self) -> list[str]:
        """All vertex handles in stable insertion order."""
        return list(self._vertex_order)

    # -- edges -------------------------------------------------------------

    def insert_edge(
        self,
        collection: str,
        from_handle: str,
        to_handle: str,
        *,
        key: str | None = None,
        label: str | None = None,
        weight: float = 1.0,
    ) -> str:
        coll = self._collection(collection, CollectionKind.EDGE)
        if not self.has_vertex(from_handle):
            raise StoreError(f"dangling edge endpoint: {from_handle!r}")
        if not self.has_vertex(to_handle):
            raise StoreError(f"dangling edge endpoint: {to_handle!r}")
        if not weight > 0:
            raise StoreError(f"edge weight must be positive, got {weight}")
        if key is None:
            key = self.next_key()
        if key in coll.records:
            raise StoreError(f"duplicate key {key!r} in collection {collection!r}")
        record = EdgeRecord(
            collection=collection,
            key=key,
            from_handle=from_handle,
            to_handle=to_handle,
            label=label,
            weight=weight,
        )
        coll.records[key] = record
        self._edges_by_handle[record.handle] = record
        self._adjacency[from_handle].append((record.handle, True))
        self._adjacency[to_handle].append((record.handle, False))
        return record.handle

    def get_edge(self, handle: str) -> EdgeRecord:
        record = self._edges_by_handle.get(handle)
        if record is None:
            raise StoreError(f"unknown edge: {handle!r}")
        return record

    def _remove_edge(self, handle: str) -> None:
        record = self._edges_by_handle.pop(handle)
        del self.collections[record.collection].records[record.key]
        for endpoint in (record.from_handle, record.to_handle):
            entries = self._adjacency.get(endpoint)
            if entries is not None:
                self._adjacency[endpoint] = [e for e in entries if e[0] != handle]

    def edges(self, collection: str | None = None) -> Iterator[EdgeRecord]:
        if collection is not None:
            yield from self._collection(collection, CollectionKind.EDGE).records.values()
            return
        for coll in self.collections.values():
            if coll.kind is CollectionKind.EDGE:
                yield from coll.records.values()

    def edge_collection_names(self) -> list[str]:
        return [c.name for c in self.collections.values() if c.kind is CollectionKind.EDGE]

    def vertex_collection_names(self) -> list[str]:
        return [c.name for c in self.collections.values() if c.kind is CollectionKind.VERTEX]

    # -- graphs ------------------------------------------------------------

    def create_graph(self, name: str, edge_collections: list[str]) -> NamedGraph:
        if name in self.graphs:
            raise StoreError(f"graph {name!r} already exists")
        for coll_name in edge_collections:
            self._collection(coll_name, CollectionKind.EDGE)
        graph = NamedGraph(name=name, edge_collections=list(edge_collections))
        self.graphs[name] = graph
        return graph

    def get_graph(self, name: str) -> NamedGraph:
        graph = self.graphs.get(name)
        if graph is None:
            raise StoreError(f"unknown graph: {name!r}")
        return graph

    def graph_edges(self, graph: NamedGraph | None = None) -> Iterator[EdgeRecord]:
        """Edges of a named graph, or of the whole store when graph is None."""
        names = graph.edge_collections if graph is not None else self.edge_collection_names()
        for name in names:
            yield from self.edges(name)

    def graph_vertex_handles(self, graph: NamedGraph | None = None) -> list[str]:
        """Vertex set of a named graph (derived from edge endpoints), in
        stable store order. With graph=None, every stored vertex."""
        if graph is None:
            return self.vertex_handles()
        endpoint_set: set[str] = set()
        for edge in self.graph_edges(graph):
            endpoint_set.add(edge.from_handle)
            endpoint_set.add(edge.to_handle)
        return [h for h in self._vertex_order if h in endpoint_set]

    # -- adjacency ---------------------------------------------------------

    def neighbors(
        self,
        handle: str,
        direction: Direction | str = Direction.ANY,
        graph: NamedGraph | None = None,
    ) -> list[tuple[EdgeRecord, str]]:
        """Incident edges of the requested direction paired with the opposite
        endpoint, in edge-insertion order. Amortized O(1) per returned edge."""
        direction = Direction.parse(direction)
        entries = self._adjacency.get(handle)
        if entries is None:
            raise StoreError(f"unknown vertex: {handle!r}")
        allowed = set(graph.edge_collections) if graph is not None else None
        result: list[tuple[EdgeRecord, str]] = []
        for edge_handle, is_out in entries:
            if direction is Direction.OUTBOUND and not is_out:
                continue
            if direction is Direction.INBOUND and is_out:
                continue
            edge = self._edges_by_handle[edge_handle]
            if allowed is not None and edge.collection not in allowed:
                continue
            neighbor = edge.to_handle if is_out else edge.from_handle
            result.append((edge, neighbor))
        return result

    def degree(
        self,
        handle: str,
        direction: Direction | str = Direction.ANY,
        graph: NamedGraph | None = None,
    ) -> int:
        return len(self.neighbors(handle, direction, graph))

    # -- integrity ---------------------------------------------------------

    def check_integrity(self) -> None:
        """Full-scan verification of the no-dangling-edge invariant."""
        for edge in self.edges():
            if not self.has_vertex(edge.from_handle):
                raise StoreError(f"dangling _from in {edge.handle}: {edge.from_handle!r}")
            if not self.has_vertex(edge.to_handle):
                raise StoreError(f"dangling _to in {edge.handle}: {edge.to_handle!r}")

    def counts(self) -> dict[str, int]:
        n_vertices = sum(
            len(c) for c in self.collections.values() if c.kind is CollectionKind.VERTEX
        )
        n_edges = sum(
            len(c) for c in self.collections.values() if c.kind is CollectionKind.EDGE
        )
        communities = {
            v.community for v in self.vertices() if v.community is not None
        }
        return {"vertices": n_vertices, "edges": n_edges, "communities": len(communities)}


def _check_community(value: Any) -> None:
    if not isinstance(value, int) or isinstance(value, bool) or value < 0:
        raise StoreError(f"community must be a non-negative integer, got {value!r}")


# -- persistence -------------------------------------------------------------

_MANIFEST_FILE = "store.json"
_GRAPH_SUFFIX = ".graph.json"
_SAFE_NAME = re.compile(r"[^A-Za-z0-9._-]")


def _collection_filename(name: str) -> str:
    return _SAFE_NAME.sub("_", name) + ".jsonl"


def save_store(store: GraphStore, directory: str | Path) -> None:
    """Write one JSON-lines file per collection plus per-graph manifests.

    Vertex lines: {"_key", "_id", <attributes...>, "community"?}. Edge lines:
    {"_key", "_id", "_from", "_to", "label"?, "weight"?}. A store manifest
    records collection kinds so empty collections survive the round-trip.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {
        "collections": [
            {"name": c.name, "kind": c.kind.value, "file": _collection_filename(c.name)}
            for c in store.collections.values()
        ],
        "key_counter": store._key_counter,
    }
    (directory / _MANIFEST_FILE).write_text(
        json.dumps(manifest, indent=2) + "\n", encoding="utf-8"
    )
    for coll in store.collections.values():
        path = directory / _collection_filename(coll.name)
        with path.open("w", encoding="utf-8") as fh:
            for record in coll.records.values():
                fh.write(json.dumps(record.to_json_obj(), ensure_ascii=False))
                fh.write("\n")
    for graph in store.graphs.values():
        path = directory / (_SAFE_NAME.sub("_", graph.name) + _GRAPH_SUFFIX)
        path.write_text(
            json.dumps(
                {"name": graph.name, "edge_collections": graph.edge_collections},
                indent=2,
            )
            + "\n",
            encoding="utf-8",
        )


def load_store(directory: str | Path) -> GraphStore:
    """Rebuild a store saved by :func:`save_store`.

    Malformed lines raise :class:`StoreFormatError` naming the file and line.
    """
    directory = Path(directory)
    manifest_path = directory / _MANIFEST_FILE
    if not manifest_path.exists():
        raise StoreError(f"no store manifest at {manifest_path}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    store = GraphStore()

    vertex_files: list[tuple[Collection, Path]] = []
    edge_files: list[tuple[Collection, Path]] = []
    for entry in manifest["collections"]:
        coll = store.create_collection(entry["name"], CollectionKind(entry["kind"]))
        path = directory / entry["file"]
        if coll.kind is CollectionKind.VERTEX:
            vertex_files.append((coll, path))
        else:
            edge_files.append((coll, path))

    # Vertices first so edge endpoint checks can resolve.
    for coll, path in vertex_files:
        for lineno, obj in _read_jsonl(path):
            key = obj.pop("_key", None)
            if key is None:
                raise StoreFormatError(f"{path}:{lineno}: vertex line missing _key")
            obj.pop("_id", None)
            try:
                store.insert_vertex(coll.name, key=str(key), attributes=obj)
            except StoreError as exc:
                raise StoreFormatError(f"{path}:{lineno}: {exc}") from exc
    for coll, path in edge_files:
        for lineno, obj in _read_jsonl(path):
            key = obj.pop("_key", None)
            if key is None:
                raise StoreFormatError(f"{path}:{lineno}: edge line missing _key")
            obj.pop("_id", None)
            from_handle = obj.pop("_from", None)
            to_handle = obj.pop("_to", None)
            if from_handle is None:
                raise StoreFormatError(f"{path}:{lineno}: edge line missing _from")
            if to_handle is None:
                raise StoreFormatError(f"{path}:{lineno}: edge line missing _to")
            try:
                store.insert_edge(
                    coll.name,
                    from_handle,
                    to_handle,
                    key=str(key),
                    label=obj.pop("label", None),
                    weight=float(obj.pop("weight", 1.0)),
                )
            except StoreError as exc:
                raise StoreFormatError(f"{path}:{lineno}: {exc}") from exc

    store._key_counter = int(manifest.get("key_counter", 0))
    for path in sorted(directory.glob("*" + _GRAPH_SUFFIX)):
        obj = json.loads(path.read_text(encoding="utf-8"))
        store.create_graph(obj["name"], obj["edge_collections"])
    return store


def _read_jsonl(path: Path) -> Iterator[tuple[int, dict[str, Any]]]:
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise StoreFormatError(f"{path}:{lineno}: {exc.msg}") from exc
            if not isinstance(obj, dict):
                raise StoreFormatError(f"{path}:{lineno}: expected a JSON object")
            yield lineno, obj
