"""Typed nodes, edges and per-node feature bundles."""

from __future__ import annotations

from dataclasses import dataclass, field

NODE_TYPES = ("member", "job", "position", "skill", "title", "company",
              "recruiter", "hire_project")

# attribute nodes get trainable id-embedding slots
ATTRIBUTE_NODE_TYPES = ("skill", "title", "company")

REVERSE_SUFFIX = "-REV"


class GraphFormatError(ValueError):
    """Malformed nodes/edges input."""


@dataclass(frozen=True, order=True)
class NodeRef:
    node_type: str
    local_id: int

    def __post_init__(self):
        if self.node_type not in NODE_TYPES:
            raise GraphFormatError(f"unknown node type {self.node_type!r}")
        if self.local_id < 0:
            raise GraphFormatError("local_id must be unsigned")

    def __str__(self):
        return f"{self.node_type}:{self.local_id}"


@dataclass(frozen=True)
class TypedEdge:
    src: NodeRef
    dst: NodeRef
    edge_type: str
    timestamp: int
    weight: float = 1.0

    def __post_init__(self):
        if self.weight < 0:
            raise GraphFormatError("edge weight must be >= 0")


@dataclass
class FeatureBundle:
    text_embedding: object = None        # np.ndarray (d_text,) or None
    id_slot: int | None = None
    categorical: list[tuple[int, int]] = field(default_factory=list)

    def has_any(self) -> bool:
        return (self.text_embedding is not None or self.id_slot is not None
                or bool(self.categorical))


@dataclass(frozen=True)
class EdgeTypeInfo:
    src_type: str
    dst_type: str
    category: str  # interaction | attribute


def classify_edge_type(edge_type: str, src_type: str, dst_type: str) -> EdgeTypeInfo:
    """Edge-type keys look like "member-job-APPLY" (interaction: trailing
    uppercase action segment) or "job-skill" (attribute)."""
    segments = edge_type.split("-")
    category = "interaction" if segments[-1].isupper() else "attribute"
    return EdgeTypeInfo(src_type=src_type, dst_type=dst_type, category=category)


def reverse_edge_type(edge_type: str) -> str:
    if edge_type.endswith(REVERSE_SUFFIX):
        return edge_type[:-len(REVERSE_SUFFIX)]
    return edge_type + REVERSE_SUFFIX
