"""Road-network graph: undirected segment adjacency and its edge-list layout.

Nodes are pavement segments identified by opaque strings; the canonical node
order is the sorted order of those identifiers, so loading the same tables
with shuffled rows produces an identical graph.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class GraphError(ValueError):
    """Invalid node or edge records."""


@dataclass(frozen=True)
class RoadGraph:
    """Static undirected graph over pavement segments.

    ``edges`` holds unique unordered pairs as (i, j) with i < j in canonical
    node-index space; ``neighbors[i]`` lists the adjacent node indices of i.
    """

    node_ids: tuple[str, ...]
    edges: tuple[tuple[int, int], ...]
    neighbors: tuple[tuple[int, ...], ...]

    @property
    def num_nodes(self) -> int:
        return len(self.node_ids)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def index_of(self, node_id: str) -> int:
        i = int(np.searchsorted(self.node_ids, node_id))
        if i >= len(self.node_ids) or self.node_ids[i] != node_id:
            raise GraphError(f"unknown segment id {node_id!r}")
        return i


def load_graph(
    node_ids: Iterable[str], edge_pairs: Iterable[tuple[str, str]]
) -> RoadGraph:
    """Build a RoadGraph from id records and (src, dst) pairs.

    Edge records may be directed (both orientations present) or undirected;
    both normalize to one undirected edge per unordered pair. Self-loops and
    endpoints not present in the node table are rejected.
    """
    ids = list(node_ids)
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise GraphError(f"duplicate segment ids: {dupes[:5]}")
    ordered = tuple(sorted(ids))
    index = {node_id: i for i, node_id in enumerate(ordered)}

    edge_set: set[tuple[int, int]] = set()
    for src, dst in edge_pairs:
        if src not in index:
            raise GraphError(f"edge endpoint {src!r} not in node table")
        if dst not in index:
            raise GraphError(f"edge endpoint {dst!r} not in node table")
        i, j = index[src], index[dst]
        if i == j:
            raise GraphError(f"self-loop edge on segment {src!r}")
        edge_set.add((min(i, j), max(i, j)))

    edges = tuple(sorted(edge_set))
    adj: list[list[int]] = [[] for _ in ordered]
    for i, j in edges:
        adj[i].append(j)
        adj[j].append(i)
    neighbors = tuple(tuple(sorted(n)) for n in adj)
    return RoadGraph(node_ids=ordered, edges=edges, neighbors=neighbors)


def read_edge_file(path: str | Path) -> list[tuple[str, str]]:
    """Read `src_segment_id,dst_segment_id` records."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"src_segment_id", "dst_segment_id"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise GraphError(f"edge file {path} missing header columns {sorted(required)}")
        return [(row["src_segment_id"], row["dst_segment_id"]) for row in reader]


@dataclass(frozen=True)
class MessageLayout:
    """Edge-list form of a graph prepared for attention message passing.

    One row ("arc") per directed neighbor relation plus one self-loop per
    node, sorted by destination so each destination's arcs form a contiguous
    segment: ``seg_ptr[i]:seg_ptr[i+1]`` are the arcs flowing into node i.
    ``arc_edge`` maps each arc to its undirected edge index, with
    ``num_edges`` as the sentinel for self-loops (used by edge masking).
    """

    src: np.ndarray
    dst: np.ndarray
    seg_ptr: np.ndarray
    seg_ids: np.ndarray
    arc_edge: np.ndarray
    num_nodes: int
    num_edges: int

    def __post_init__(self):
        for arr in (self.src, self.dst, self.seg_ptr, self.seg_ids, self.arc_edge):
            arr.setflags(write=False)


def build_message_layout(graph: RoadGraph) -> MessageLayout:
    """Expand a RoadGraph into the sorted arc layout, adding self-loops."""
    n = graph.num_nodes
    dst_list: list[int] = []
    src_list: list[int] = []
    edge_list: list[int] = []
    for e, (i, j) in enumerate(graph.edges):
        dst_list += [i, j]
        src_list += [j, i]
        edge_list += [e, e]
    dst_list += list(range(n))
    src_list += list(range(n))
    edge_list += [graph.num_edges] * n

    dst = np.asarray(dst_list, dtype=np.int64)
    src = np.asarray(src_list, dtype=np.int64)
    arc_edge = np.asarray(edge_list, dtype=np.int64)
    order = np.lexsort((src, dst))
    dst, src, arc_edge = dst[order], src[order], arc_edge[order]

    counts = np.bincount(dst, minlength=n)
    seg_ptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=seg_ptr[1:])
    return MessageLayout(
        src=src,
        dst=dst,
        seg_ptr=seg_ptr,
        seg_ids=dst.copy(),
        arc_edge=arc_edge,
        num_nodes=n,
        num_edges=graph.num_edges,
    )


def permute_graph(graph: RoadGraph, perm: Sequence[int]) -> RoadGraph:
    """Relabel nodes by a permutation of indices (testing helper).

    ``perm[i]`` is the new position of old node i's identifier; the returned
    graph re-sorts ids canonically, so this is only meaningful together with
    renamed ids. Instead we rename ids so that sorted order realizes ``perm``.
    """
    n = graph.num_nodes
    width = len(str(n))
    new_ids = [""] * n
    for old, new in enumerate(perm):
        new_ids[old] = f"n{new:0{width}d}"
    pairs = [(new_ids[i], new_ids[j]) for i, j in graph.edges]
    return load_graph(new_ids, pairs)
