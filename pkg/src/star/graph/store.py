"""Heterogeneous graph: TSV ingestion, CSR-style adjacency with reverse
edges materialized, and a deterministic single-file binary form.

nodes.tsv columns: node_type, local_id, base64 float32 text embedding,
id_slot, "fid:vid;fid:vid" categorical pairs (last three may be empty).
edges.tsv columns: src_type, src_id, edge_type, dst_type, dst_id,
timestamp, weight.
"""

from __future__ import annotations

import base64
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .schema import (ATTRIBUTE_NODE_TYPES, NODE_TYPES, EdgeTypeInfo, FeatureBundle,
                     GraphFormatError, NodeRef, classify_edge_type,
                     reverse_edge_type)

MAGIC = b"STGR"
FORMAT_VERSION = 1


@dataclass
class AdjacencyList:
    neighbors: np.ndarray  # int64 node indices, most recent first
    timestamps: np.ndarray
    weights: np.ndarray

    def __len__(self):
        return len(self.neighbors)


class HeteroGraph:
    """Immutable after build; safe for unlimited concurrent readers."""

    def __init__(self):
        self.nodes: list[NodeRef] = []
        self.node_index: dict[NodeRef, int] = {}
        self.features: list[FeatureBundle] = []
        self.adjacency: dict[tuple[int, str], AdjacencyList] = {}
        self.node_edge_types: dict[int, list[str]] = {}
        self.edge_types: dict[str, EdgeTypeInfo] = {}
        self.d_text: int = 0
        self.num_id_slots: int = 0
        self.cat_cardinalities: dict[int, int] = {}

    # -- queries ------------------------------------------------------------

    def index_of(self, ref: NodeRef) -> int:
        try:
            return self.node_index[ref]
        except KeyError:
            raise GraphFormatError(f"unknown node {ref}") from None

    def has_node(self, ref: NodeRef) -> bool:
        return ref in self.node_index

    def type_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for ref in self.nodes:
            counts[ref.node_type] = counts.get(ref.node_type, 0) + 1
        return counts

    def degree(self, idx: int, edge_types=None) -> int:
        return sum(len(adj) for _, adj in self.adjacency_of(idx, edge_types))

    def adjacency_of(self, idx: int, edge_types=None):
        """(edge_type, AdjacencyList) pairs for one node, deterministic order."""
        if edge_types is None:
            keys = self.node_edge_types.get(idx, [])
        else:
            for et in edge_types:
                if et not in self.edge_types:
                    raise GraphFormatError(f"unknown edge type {et!r}")
            keys = [et for et in edge_types if (idx, et) in self.adjacency]
        return [(et, self.adjacency[(idx, et)]) for et in keys]

    def edges_of_type(self, edge_type: str) -> list[tuple[int, int, int, float]]:
        """Forward (src_idx, dst_idx, ts, weight) tuples for one edge type."""
        if edge_type not in self.edge_types:
            raise GraphFormatError(f"unknown edge type {edge_type!r}")
        out = []
        for (n, et), adj in sorted(self.adjacency.items(),
                                   key=lambda kv: (kv[0][0], kv[0][1])):
            if et != edge_type:
                continue
            for nbr, ts, w in zip(adj.neighbors, adj.timestamps, adj.weights):
                out.append((n, int(nbr), int(ts), float(w)))
        return out

    def nodes_of_type(self, node_type: str) -> list[int]:
        return [i for i, ref in enumerate(self.nodes) if ref.node_type == node_type]

    # -- construction ---------------------------------------------------------

    def _add_node(self, ref: NodeRef, bundle: FeatureBundle, line_no: int) -> None:
        if ref in self.node_index:
            raise GraphFormatError(f"nodes line {line_no}: duplicate node {ref}")
        if ref.node_type in ATTRIBUTE_NODE_TYPES and bundle.id_slot is None:
            raise GraphFormatError(
                f"nodes line {line_no}: attribute node {ref} needs an id_slot")
        if not bundle.has_any():
            raise GraphFormatError(
                f"nodes line {line_no}: node {ref} has no feature source")
        self.node_index[ref] = len(self.nodes)
        self.nodes.append(ref)
        self.features.append(bundle)
        if bundle.text_embedding is not None:
            d = len(bundle.text_embedding)
            if self.d_text and d != self.d_text:
                raise GraphFormatError(
                    f"nodes line {line_no}: embedding dim {d} != {self.d_text}")
            self.d_text = d
        if bundle.id_slot is not None:
            self.num_id_slots = max(self.num_id_slots, bundle.id_slot + 1)
        for fid, vid in bundle.categorical:
            self.cat_cardinalities[fid] = max(self.cat_cardinalities.get(fid, 0),
                                              vid + 1)

    def _finalize_adjacency(self, staged: dict) -> None:
        for key, triples in staged.items():
            triples.sort(key=lambda t: (-t[1], t[0], t[2]))
            self.adjacency[key] = AdjacencyList(
                neighbors=np.array([t[0] for t in triples], dtype=np.int64),
                timestamps=np.array([t[1] for t in triples], dtype=np.int64),
                weights=np.array([t[2] for t in triples], dtype=np.float64),
            )
        self._index_node_edge_types()

    def _index_node_edge_types(self) -> None:
        self.node_edge_types = {}
        for (node, et) in self.adjacency:
            self.node_edge_types.setdefault(node, []).append(et)
        for lst in self.node_edge_types.values():
            lst.sort()


def _parse_feature_columns(cols: list[str], line_no: int) -> FeatureBundle:
    emb = None
    if len(cols) > 2 and cols[2]:
        raw = base64.b64decode(cols[2])
        emb = np.frombuffer(raw, dtype="<f4").astype(np.float64)
    id_slot = int(cols[3]) if len(cols) > 3 and cols[3] else None
    cats = []
    if len(cols) > 4 and cols[4]:
        for pair in cols[4].split(";"):
            fid, _, vid = pair.partition(":")
            try:
                cats.append((int(fid), int(vid)))
            except ValueError:
                raise GraphFormatError(
                    f"nodes line {line_no}: bad categorical pair {pair!r}") from None
    return FeatureBundle(text_embedding=emb, id_slot=id_slot, categorical=cats)


def build_graph(nodes_path: str | Path, edges_path: str | Path) -> HeteroGraph:
    """Parse node/edge TSVs into a graph with both edge directions
    materialized (reverse direction under the "-REV" edge-type key)."""
    g = HeteroGraph()
    with open(nodes_path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) < 2:
                raise GraphFormatError(f"nodes line {line_no}: expected >= 2 columns")
            try:
                ref = NodeRef(cols[0], int(cols[1]))
            except (ValueError, GraphFormatError) as exc:
                raise GraphFormatError(f"nodes line {line_no}: {exc}") from None
            g._add_node(ref, _parse_feature_columns(cols, line_no), line_no)

    staged: dict[tuple[int, str], list] = {}
    with open(edges_path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) != 7:
                raise GraphFormatError(f"edges line {line_no}: expected 7 columns")
            src_type, src_id, edge_type, dst_type, dst_id, ts, w = cols
            try:
                src = NodeRef(src_type, int(src_id))
                dst = NodeRef(dst_type, int(dst_id))
                ts = int(ts)
                w = float(w)
            except (ValueError, GraphFormatError) as exc:
                raise GraphFormatError(f"edges line {line_no}: {exc}") from None
            if src not in g.node_index:
                raise GraphFormatError(
                    f"edges line {line_no}: dangling endpoint {src}")
            if dst not in g.node_index:
                raise GraphFormatError(
                    f"edges line {line_no}: dangling endpoint {dst}")
            info = g.edge_types.get(edge_type)
            if info is None:
                info = classify_edge_type(edge_type, src_type, dst_type)
                g.edge_types[edge_type] = info
                g.edge_types[reverse_edge_type(edge_type)] = EdgeTypeInfo(
                    src_type=info.dst_type, dst_type=info.src_type,
                    category=info.category)
            elif (info.src_type, info.dst_type) != (src_type, dst_type):
                raise GraphFormatError(
                    f"edges line {line_no}: edge type {edge_type!r} declared "
                    f"{info.src_type}->{info.dst_type}, got {src_type}->{dst_type}")
            si, di = g.node_index[src], g.node_index[dst]
            staged.setdefault((si, edge_type), []).append((di, ts, w))
            staged.setdefault((di, reverse_edge_type(edge_type)), []).append((si, ts, w))
    g._finalize_adjacency(staged)
    return g


# -- binary serialization ----------------------------------------------------

def serialize_graph(g: HeteroGraph) -> bytes:
    etype_order = sorted(g.edge_types)
    etype_idx = {et: i for i, et in enumerate(etype_order)}

    meta = {
        "node_count": len(g.nodes),
        "d_text": g.d_text,
        "num_id_slots": g.num_id_slots,
        "cat_cardinalities": {str(k): v for k, v in sorted(g.cat_cardinalities.items())},
        "edge_types": {et: {"src_type": info.src_type, "dst_type": info.dst_type,
                            "category": info.category}
                       for et, info in sorted(g.edge_types.items())},
    }
    meta_bytes = json.dumps(meta, sort_keys=True).encode("utf-8")

    nodes_buf = bytearray()
    for ref in g.nodes:
        nodes_buf += struct.pack("<BQ", NODE_TYPES.index(ref.node_type), ref.local_id)

    feat_buf = bytearray()
    for bundle in g.features:
        flags = (1 if bundle.text_embedding is not None else 0) \
            | (2 if bundle.id_slot is not None else 0)
        feat_buf += struct.pack("<B", flags)
        if bundle.text_embedding is not None:
            feat_buf += np.asarray(bundle.text_embedding, dtype="<f4").tobytes()
        if bundle.id_slot is not None:
            feat_buf += struct.pack("<Q", bundle.id_slot)
        feat_buf += struct.pack("<H", len(bundle.categorical))
        for fid, vid in bundle.categorical:
            feat_buf += struct.pack("<II", fid, vid)

    adj_buf = bytearray()
    adj_buf += struct.pack("<Q", len(g.adjacency))
    for (node, et) in sorted(g.adjacency, key=lambda k: (k[0], k[1])):
        adj = g.adjacency[(node, et)]
        adj_buf += struct.pack("<QHQ", node, etype_idx[et], len(adj))
        adj_buf += adj.neighbors.astype("<i8").tobytes()
        adj_buf += adj.timestamps.astype("<i8").tobytes()
        adj_buf += adj.weights.astype("<f8").tobytes()

    sections = [("meta", bytes(meta_bytes)), ("nodes", bytes(nodes_buf)),
                ("features", bytes(feat_buf)), ("adj", bytes(adj_buf))]
    table_size = sum(2 + len(name.encode()) + 16 for name, _ in sections)
    header = bytearray()
    header += MAGIC
    header += struct.pack("<II", FORMAT_VERSION, len(sections))
    offset = len(header) + table_size
    body = bytearray()
    for name, payload in sections:
        nb = name.encode()
        header += struct.pack("<H", len(nb)) + nb
        header += struct.pack("<QQ", offset, len(payload))
        offset += len(payload)
        body += payload
    return bytes(header) + bytes(body)


def save_graph(g: HeteroGraph, path: str | Path) -> None:
    tmp = Path(str(path) + ".tmp")
    tmp.write_bytes(serialize_graph(g))
    tmp.replace(path)


def load_graph(path: str | Path) -> HeteroGraph:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise GraphFormatError(f"{path}: bad magic {raw[:4]!r}")
    version, n_sections = struct.unpack_from("<II", raw, 4)
    if version != FORMAT_VERSION:
        raise GraphFormatError(f"{path}: unsupported version {version}")
    pos = 12
    sections: dict[str, bytes] = {}
    for _ in range(n_sections):
        (name_len,) = struct.unpack_from("<H", raw, pos)
        pos += 2
        name = raw[pos:pos + name_len].decode()
        pos += name_len
        off, length = struct.unpack_from("<QQ", raw, pos)
        pos += 16
        sections[name] = raw[off:off + length]

    meta = json.loads(sections["meta"].decode("utf-8"))
    g = HeteroGraph()
    g.d_text = meta["d_text"]
    g.num_id_slots = meta["num_id_slots"]
    g.cat_cardinalities = {int(k): v for k, v in meta["cat_cardinalities"].items()}
    g.edge_types = {et: EdgeTypeInfo(**info)
                    for et, info in meta["edge_types"].items()}
    etype_order = sorted(g.edge_types)

    nb = sections["nodes"]
    pos = 0
    for _ in range(meta["node_count"]):
        type_idx, local_id = struct.unpack_from("<BQ", nb, pos)
        pos += 9
        ref = NodeRef(NODE_TYPES[type_idx], local_id)
        g.node_index[ref] = len(g.nodes)
        g.nodes.append(ref)

    fb = sections["features"]
    pos = 0
    for _ in range(meta["node_count"]):
        (flags,) = struct.unpack_from("<B", fb, pos)
        pos += 1
        emb = None
        if flags & 1:
            emb = np.frombuffer(fb, dtype="<f4", count=g.d_text, offset=pos).astype(np.float64)
            pos += 4 * g.d_text
        id_slot = None
        if flags & 2:
            (id_slot,) = struct.unpack_from("<Q", fb, pos)
            pos += 8
        (n_cat,) = struct.unpack_from("<H", fb, pos)
        pos += 2
        cats = []
        for _ in range(n_cat):
            fid, vid = struct.unpack_from("<II", fb, pos)
            pos += 8
            cats.append((fid, vid))
        g.features.append(FeatureBundle(text_embedding=emb, id_slot=id_slot,
                                        categorical=cats))

    ab = sections["adj"]
    (n_entries,) = struct.unpack_from("<Q", ab, 0)
    pos = 8
    for _ in range(n_entries):
        node, et_i, deg = struct.unpack_from("<QHQ", ab, pos)
        pos += 18
        nbrs = np.frombuffer(ab, dtype="<i8", count=deg, offset=pos).copy()
        pos += 8 * deg
        ts = np.frombuffer(ab, dtype="<i8", count=deg, offset=pos).copy()
        pos += 8 * deg
        w = np.frombuffer(ab, dtype="<f8", count=deg, offset=pos).copy()
        pos += 8 * deg
        g.adjacency[(node, etype_order[et_i])] = AdjacencyList(nbrs, ts, w)
    g._index_node_edge_types()
    return g
