"""Neighbor samplers and layered mini-batch assembly.

Random sampling is uniform without replacement; temporal takes the most
recent edges; PPR takes the top personalized-PageRank scores over the
type-collapsed view. When degree <= fanout, all neighbors come back exactly
once regardless of strategy.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..rng import child_rng
from .schema import GraphFormatError, NodeRef
from .store import HeteroGraph

STRATEGIES = ("random", "temporal", "ppr")


@dataclass
class SamplerConfig:
    strategy: str = "random"
    fanouts: tuple[int, ...] = (10,)
    seed: int = 0
    ppr_top_k: int = 50
    ppr_iterations: int = 5
    ppr_teleport: float = 0.15

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown sampling strategy {self.strategy!r}")
        if any(f < 1 for f in self.fanouts):
            raise ValueError("fanout must be >= 1")
        if not 0.0 < self.ppr_teleport < 1.0:
            raise ValueError("ppr_teleport must lie in (0, 1)")


def ppr_scores(g: HeteroGraph, node: NodeRef | int, iterations: int,
               teleport: float) -> dict[NodeRef, float]:
    """Power iteration p <- teleport*e + (1-teleport)*T'p on the
    type-collapsed graph; scores always sum to 1."""
    seed_idx = node if isinstance(node, int) else g.index_of(node)
    neighbor_cache: dict[int, np.ndarray] = {}

    def neighbors_of(idx: int) -> np.ndarray:
        cached = neighbor_cache.get(idx)
        if cached is None:
            lists = [adj.neighbors for _, adj in g.adjacency_of(idx)]
            cached = np.concatenate(lists) if lists else np.empty(0, dtype=np.int64)
            neighbor_cache[idx] = cached
        return cached

    if len(neighbors_of(seed_idx)) == 0:
        return {g.nodes[seed_idx]: 1.0}

    p: dict[int, float] = {seed_idx: 1.0}
    for _ in range(iterations):
        nxt: dict[int, float] = {seed_idx: teleport}
        for u, mass in p.items():
            nbrs = neighbors_of(u)
            if len(nbrs) == 0:
                # dangling mass stays put so the distribution keeps summing to 1
                nxt[u] = nxt.get(u, 0.0) + (1 - teleport) * mass
                continue
            share = (1 - teleport) * mass / len(nbrs)
            for v in nbrs:
                v = int(v)
                nxt[v] = nxt.get(v, 0.0) + share
        p = nxt
    return {g.nodes[i]: s for i, s in sorted(p.items())}


def ppr_top_nodes(g: HeteroGraph, node_idx: int, cfg: SamplerConfig) -> list[int]:
    scores = ppr_scores(g, node_idx, cfg.ppr_iterations, cfg.ppr_teleport)
    ranked = sorted(((ref, s) for ref, s in scores.items()
                     if g.node_index[ref] != node_idx),
                    key=lambda kv: (-kv[1], kv[0]))
    return [g.node_index[ref] for ref, _ in ranked[:cfg.ppr_top_k]]


class NeighborSampler:
    """Caller-owned sampler state; concurrent use needs distinct instances."""

    def __init__(self, g: HeteroGraph, cfg: SamplerConfig):
        self.g = g
        self.cfg = cfg
        self.rng = child_rng(cfg.seed, "neighbor-sampler")

    def sample(self, node: NodeRef | int, count: int,
               edge_types=None) -> list[tuple[int, str]]:
        """Up to ``count`` (node_index, edge_type) pairs for one node."""
        idx = node if isinstance(node, int) else self.g.index_of(node)
        pool: list[tuple[int, str, int]] = []
        for et, adj in self.g.adjacency_of(idx, edge_types):
            for nbr, ts in zip(adj.neighbors, adj.timestamps):
                pool.append((int(nbr), et, int(ts)))
        if self.cfg.strategy == "ppr":
            top = ppr_top_nodes(self.g, idx, self.cfg)
            return [(i, "ppr") for i in top[:count]]
        if len(pool) <= count:
            return [(nbr, et) for nbr, et, _ in pool]
        if self.cfg.strategy == "temporal":
            order = sorted(range(len(pool)),
                           key=lambda i: (-pool[i][2], pool[i][1], pool[i][0]))
            return [(pool[i][0], pool[i][1]) for i in order[:count]]
        picks = self.rng.choice(len(pool), size=count, replace=False)
        return [(pool[i][0], pool[i][1]) for i in sorted(picks.tolist())]


def sample_neighbors(g: HeteroGraph, node: NodeRef, edge_types, count: int,
                     cfg: SamplerConfig) -> list[tuple[NodeRef, str]]:
    """One-shot sampling API; returns (NodeRef, edge_type) pairs."""
    sampler = NeighborSampler(g, cfg)
    return [(g.nodes[i], et) for i, et
            in sampler.sample(node, count, edge_types=edge_types)]


@dataclass
class LayeredBatch:
    """Deduplicated multi-hop neighborhood around a list of seeds."""

    node_ids: list[int]                      # graph indices, discovery order
    seed_positions: np.ndarray               # positions of seeds in node_ids
    neighbors: list[list[int]] = field(default_factory=list)  # positions
    sampled_edge_count: int = 0

    def __len__(self):
        return len(self.node_ids)


def subgraph_batch(g: HeteroGraph, seeds: list[NodeRef | int],
                   fanouts: tuple[int, ...], sampler: NeighborSampler,
                   edge_types=None) -> LayeredBatch:
    """Expand hop h from hop h-1's frontier; nodes are deduplicated and each
    node is expanded at most once (its first frontier appearance)."""
    seed_idx = [s if isinstance(s, int) else g.index_of(s) for s in seeds]
    position: dict[int, int] = {}
    node_ids: list[int] = []

    def intern(idx: int) -> int:
        pos = position.get(idx)
        if pos is None:
            pos = len(node_ids)
            position[idx] = pos
            node_ids.append(idx)
        return pos

    frontier: list[int] = []
    for s in seed_idx:
        if s not in position:
            frontier.append(s)
        intern(s)
    seed_positions = np.array([position[s] for s in seed_idx], dtype=np.int64)

    neighbors_map: dict[int, list[int]] = {}
    expanded: set[int] = set()
    edge_count = 0
    for fanout in fanouts:
        next_frontier: list[int] = []
        seen_next: set[int] = set()
        for idx in frontier:
            if idx in expanded:
                sampled = [node_ids[p] for p in neighbors_map.get(position[idx], [])]
            else:
                expanded.add(idx)
                pairs = sampler.sample(idx, fanout, edge_types=edge_types)
                edge_count += len(pairs)
                sampled = [i for i, _ in pairs]
                neighbors_map[position[idx]] = [intern(n) for n in sampled]
            for nbr in sampled:
                if nbr not in seen_next:
                    seen_next.add(nbr)
                    next_frontier.append(nbr)
        frontier = next_frontier
    neighbors = [neighbors_map.get(i, []) for i in range(len(node_ids))]
    return LayeredBatch(node_ids=node_ids, seed_positions=seed_positions,
                        neighbors=neighbors, sampled_edge_count=edge_count)
