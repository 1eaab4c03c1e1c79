"""Object-level scene graphs and the target-conditioned pooling encoder.

Text embeddings come from :func:`pseudo_embed`, a deterministic stand-in for
an open-vocabulary text encoder: every label hashes to its own random unit
vector, so unrelated labels are nearly orthogonal.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .scene import Scene

DEFAULT_EMBED_DIM = 512
GRAPH_FILE_VERSION = 1


class GraphError(ValueError):
    pass


class EmptyLabel(GraphError):
    pass


class ZeroVector(GraphError):
    pass


class EmptyGraph(GraphError):
    pass


def pseudo_embed(label: str, dim: int = DEFAULT_EMBED_DIM, synonyms: dict | None = None) -> np.ndarray:
    """Deterministic unit vector for ``label``.

    ``synonyms`` maps a label onto another label whose embedding it shares.
    """
    if not label:
        raise EmptyLabel("cannot embed an empty label")
    if synonyms:
        label = synonyms.get(label, label)
    seed = int.from_bytes(hashlib.sha256(label.encode("utf-8")).digest()[:8], "little")
    v = np.random.default_rng(seed).standard_normal(dim)
    return v / np.linalg.norm(v)


def cosine_sim(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ZeroVector("cosine similarity of a zero vector")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


@dataclass(frozen=True)
class ObjectNode:
    label: str
    bbox_position: tuple[float, float, float]
    bbox_extent: tuple[float, float, float]
    text_embedding: np.ndarray = field(repr=False, compare=False)
    is_target: bool = False

    def __post_init__(self):
        if not self.label:
            raise EmptyLabel("node label must be nonempty")
        if any(e <= 0 for e in self.bbox_extent):
            raise GraphError(f"non-positive extent for {self.label!r}")
        if abs(np.linalg.norm(self.text_embedding) - 1.0) > 1e-6:
            raise GraphError(f"embedding of {self.label!r} is not unit length")

    @property
    def feature(self) -> np.ndarray:
        return np.concatenate([self.bbox_position, self.bbox_extent, self.text_embedding])


@dataclass(frozen=True)
class SceneGraph:
    nodes: tuple[ObjectNode, ...]

    def __len__(self):
        return len(self.nodes)

    @property
    def embed_dim(self) -> int:
        return len(self.nodes[0].text_embedding) if self.nodes else 0

    def features(self) -> np.ndarray:
        """(num_objects, 6 + embed_dim) feature matrix."""
        return np.stack([n.feature for n in self.nodes])

    def target_index(self):
        for i, n in enumerate(self.nodes):
            if n.is_target:
                return i
        return None


def pooling_weights(graph: SceneGraph, target_embedding, tau: float = 0.1) -> np.ndarray:
    """Softmax over nodes of cosine similarity to the target, divided by ``tau``."""
    if len(graph) == 0:
        raise EmptyGraph("cannot pool an empty graph")
    sims = np.array([cosine_sim(n.text_embedding, target_embedding) for n in graph.nodes])
    z = sims / tau
    z -= z.max()
    w = np.exp(z)
    return w / w.sum()


def encode_graph(graph: SceneGraph, target_embedding, tau: float = 0.1) -> np.ndarray:
    """Similarity-weighted pooling of node features into one (6 + embed_dim) vector."""
    w = pooling_weights(graph, target_embedding, tau)
    return w @ graph.features()


def target_only_encoding(graph: SceneGraph) -> np.ndarray:
    """Features of the node flagged as the target (first node if none is flagged)."""
    if len(graph) == 0:
        raise EmptyGraph("cannot encode an empty graph")
    i = graph.target_index()
    return graph.nodes[0 if i is None else i].feature.copy()


def node_text(label: str, color: str) -> str:
    return f"{color} {label}" if color else label


def ground_truth_graph(scene: Scene, dim: int = DEFAULT_EMBED_DIM) -> SceneGraph:
    """One node per obstacle plus one for the object at the active target slot."""
    nodes = []
    for ob in scene.obstacles:
        pos, ext = ob.bbox3d
        text = node_text(ob.label, ob.color)
        nodes.append(ObjectNode(text, pos, ext, pseudo_embed(text, dim, scene.synonyms)))
    t = scene.target
    nodes.append(ObjectNode(t.label, tuple(t.position), (0.2, 0.2, 0.1),
                            pseudo_embed(t.label, dim, scene.synonyms), is_target=True))
    return SceneGraph(tuple(nodes))


def graph_noise(graph: SceneGraph, rng: np.random.Generator, sigma_pos: float = 0.0,
                p_drop: float = 0.0) -> SceneGraph:
    """Imperfect-construction model: drop non-target nodes and jitter positions."""
    if not 0.0 <= p_drop < 1.0:
        raise ValueError("p_drop must be in [0, 1)")
    out = []
    for n in graph.nodes:
        if not n.is_target and p_drop > 0 and rng.random() < p_drop:
            continue
        if sigma_pos > 0:
            pos = tuple(float(p) for p in np.asarray(n.bbox_position) + rng.normal(0.0, sigma_pos, 3))
            n = replace(n, bbox_position=pos)
        out.append(n)
    return SceneGraph(tuple(out))


# ---------------------------------------------------------------- graph files
# One JSON record per line; floats are written with float.hex so a round trip
# is bit-exact.


def _hex(values) -> list[str]:
    return [float(v).hex() for v in values]


def _unhex(values) -> list[float]:
    return [float.fromhex(v) for v in values]


def save_graph(graph: SceneGraph, path, include_embeddings: bool = True) -> None:
    lines = [json.dumps({"version": GRAPH_FILE_VERSION, "num_nodes": len(graph)})]
    for n in graph.nodes:
        rec = {"label": n.label, "position": _hex(n.bbox_position), "extent": _hex(n.bbox_extent),
               "is_target": n.is_target}
        if include_embeddings:
            rec["embedding"] = _hex(n.text_embedding)
        lines.append(json.dumps(rec))
    Path(path).write_text("\n".join(lines) + "\n")


def load_graph(path, dim: int = DEFAULT_EMBED_DIM, synonyms: dict | None = None) -> SceneGraph:
    """Read a graph file; nodes without explicit embeddings get ``pseudo_embed(label)``."""
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines:
        raise GraphError(f"empty graph file {path}")
    header = json.loads(lines[0])
    if header.get("version") != GRAPH_FILE_VERSION:
        raise GraphError(f"unsupported graph file version {header.get('version')}")
    nodes = []
    for ln in lines[1:]:
        rec = json.loads(ln)
        if "embedding" in rec:
            emb = np.array(_unhex(rec["embedding"]))
        else:
            emb = pseudo_embed(rec["label"], dim, synonyms)
        nodes.append(ObjectNode(rec["label"], tuple(_unhex(rec["position"])),
                                tuple(_unhex(rec["extent"])), emb, bool(rec.get("is_target", False))))
    if len(nodes) != header.get("num_nodes", len(nodes)):
        raise GraphError("node count does not match header")
    return SceneGraph(tuple(nodes))
