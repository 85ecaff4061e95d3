"""Network topologies, leader-absorbing Laplacians and topology generators.

Nodes are indexed ``0..n-1`` inside Python.  The JSON files written by
:func:`topology_to_json` and :func:`sequence_to_json` use 1-based node labels.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

__all__ = [
    "Topology",
    "LeaderConfig",
    "EpochSequence",
    "GenerationError",
    "build_laplacian",
    "leaderless_laplacian",
    "is_strongly_connected",
    "gen_geometric",
    "gen_link_failures",
    "gen_waypoint",
    "LinkFailureModel",
    "WaypointModel",
    "topology_to_json",
    "topology_from_json",
    "sequence_to_json",
    "sequence_from_json",
    "save_json",
    "load_json",
]


class GenerationError(RuntimeError):
    """Raised when a generator cannot produce a valid topology."""


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Topology:
    """Directed weighted graph.

    ``adjacency[i, j]`` is True when the edge ``(i, j)`` exists, i.e. ``j`` is
    a neighbour of ``i`` and node ``i`` averages over the state of ``j`` with
    gain ``weights[i, j]``.  Weights of absent edges are zero.
    """

    adjacency: np.ndarray
    weights: np.ndarray
    positions: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        adj = _frozen(self.adjacency, bool)
        w = _frozen(self.weights, float)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise ValueError(f"adjacency must be square, got shape {adj.shape}")
        if w.shape != adj.shape:
            raise ValueError("weights and adjacency shapes differ")
        if np.any(np.diag(adj)):
            raise ValueError("self-loop edges are not allowed")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ValueError("edge weights must be finite and nonnegative")
        if np.any(w[~adj] != 0):
            raise ValueError("nonzero weight on a missing edge")
        object.__setattr__(self, "adjacency", adj)
        object.__setattr__(self, "weights", w)
        if self.positions is not None:
            object.__setattr__(self, "positions", _frozen(self.positions, float))

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @property
    def edges(self) -> list[tuple[int, int]]:
        return [tuple(e) for e in np.argwhere(self.adjacency).tolist()]

    def out_degree(self) -> np.ndarray:
        return self.adjacency.sum(axis=1)

    def neighbors(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.adjacency[i])

    @classmethod
    def from_edges(cls, n: int, weighted_edges) -> "Topology":
        """Build from ``{(i, j): w}`` or an iterable of ``(i, j, w)``."""
        if isinstance(weighted_edges, dict):
            weighted_edges = [(i, j, w) for (i, j), w in weighted_edges.items()]
        adj = np.zeros((n, n), dtype=bool)
        w = np.zeros((n, n))
        for i, j, wij in weighted_edges:
            if not (0 <= i < n and 0 <= j < n):
                raise ValueError(f"edge ({i}, {j}) out of range for n={n}")
            if wij < 0:
                raise ValueError(f"negative weight {wij} on edge ({i}, {j})")
            adj[i, j] = True
            w[i, j] = wij
        return cls(adj, w)

    def __eq__(self, other):
        if not isinstance(other, Topology):
            return NotImplemented
        return np.array_equal(self.adjacency, other.adjacency) and np.array_equal(
            self.weights, other.weights
        )

    __hash__ = None


@dataclass(frozen=True)
class LeaderConfig:
    """A leader set and the constant states the leaders hold."""

    leaders: tuple[int, ...]
    anchor_states: dict

    def __post_init__(self):
        leaders = tuple(int(v) for v in self.leaders)
        if len(set(leaders)) != len(leaders):
            raise ValueError("duplicate leaders")
        if set(self.anchor_states) != set(leaders):
            raise ValueError("anchor_states must be keyed exactly by the leaders")
        object.__setattr__(self, "leaders", leaders)
        object.__setattr__(
            self, "anchor_states", {int(j): float(x) for j, x in self.anchor_states.items()}
        )

    @classmethod
    def uniform(cls, leaders: Iterable[int], state: float = 0.0) -> "LeaderConfig":
        leaders = tuple(leaders)
        return cls(leaders, {j: state for j in leaders})

    @property
    def hull(self) -> tuple[float, float]:
        if not self.leaders:
            raise ValueError("the hull of an empty leader set is undefined")
        values = list(self.anchor_states.values())
        return min(values), max(values)

    def validate(self, n: int) -> None:
        for j in self.leaders:
            if not 0 <= j < n:
                raise ValueError(f"leader {j} out of range for n={n}")


@dataclass(frozen=True)
class EpochSequence:
    """Topologies held constant for consecutive dwell intervals."""

    epochs: tuple[tuple[Topology, float], ...]
    start_time: float = 0.0

    def __post_init__(self):
        epochs = tuple((topo, float(dwell)) for topo, dwell in self.epochs)
        if not epochs:
            raise ValueError("an epoch sequence needs at least one epoch")
        n = epochs[0][0].n
        for topo, dwell in epochs:
            if topo.n != n:
                raise ValueError("all epochs must share the node set")
            if not dwell > 0:
                raise ValueError(f"dwell must be positive, got {dwell}")
        object.__setattr__(self, "epochs", epochs)

    @property
    def n(self) -> int:
        return self.epochs[0][0].n

    @property
    def r(self) -> int:
        return len(self.epochs)

    @property
    def gamma(self) -> float:
        """Smallest dwell time."""
        return min(d for _, d in self.epochs)

    @property
    def topologies(self) -> list[Topology]:
        return [topo for topo, _ in self.epochs]

    @property
    def dwells(self) -> np.ndarray:
        return np.array([d for _, d in self.epochs])

    @property
    def switch_times(self) -> np.ndarray:
        """Epoch boundaries ``t_0 < t_1 < ... < t_r``."""
        return self.start_time + np.concatenate([[0.0], np.cumsum(self.dwells)])

    @property
    def duration(self) -> float:
        return float(self.dwells.sum())


def leaderless_laplacian(topo: Topology) -> np.ndarray:
    w = topo.weights
    return np.diag(w.sum(axis=1)) - w


def build_laplacian(topo: Topology, leaders: Iterable[int] = ()) -> np.ndarray:
    """Laplacian with the rows of leader nodes set to zero."""
    leaders = list(leaders)
    for j in leaders:
        if not 0 <= j < topo.n:
            raise ValueError(f"leader {j} out of range for n={topo.n}")
    L = leaderless_laplacian(topo)
    L[leaders, :] = 0.0
    return L


def is_strongly_connected(topo: Topology) -> bool:
    if topo.n <= 1:
        return True
    ncomp, _ = connected_components(
        csr_matrix(topo.adjacency), directed=True, connection="strong"
    )
    return ncomp == 1


def _disk_graph(positions: np.ndarray, comm_range: float) -> np.ndarray:
    diff = positions[:, None, :] - positions[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=-1))
    adj = dist <= comm_range
    np.fill_diagonal(adj, False)
    return adj


def _draw_weights(rng, n, weight_range, symmetric):
    lo, hi = weight_range
    w = rng.uniform(lo, hi, size=(n, n))
    if symmetric:
        w = np.triu(w, 1)
        w = w + w.T
    np.fill_diagonal(w, 0.0)
    return w


def gen_geometric(
    n: int,
    area_side: float,
    comm_range: float,
    weight_range: tuple[float, float] = (0.0, 50.0),
    rng=None,
    *,
    symmetric: bool = False,
    max_attempts: int = 1000,
) -> Topology:
    """Random geometric graph in a square, resampled until strongly connected.

    Links are bidirectional whenever two nodes are within ``comm_range``;
    each direction gets its own uniform weight unless ``symmetric``.
    """
    if n < 2:
        raise ValueError("need at least two nodes")
    if comm_range <= 0:
        raise GenerationError("comm_range must be positive; no edges are possible")
    rng = np.random.default_rng(rng)
    for _ in range(max_attempts):
        pos = rng.uniform(0.0, area_side, size=(n, 2))
        adj = _disk_graph(pos, comm_range)
        w = _draw_weights(rng, n, weight_range, symmetric) * adj
        topo = Topology(adj, w, positions=pos)
        if is_strongly_connected(topo):
            return topo
    raise GenerationError(
        f"no strongly connected placement found after {max_attempts} attempts"
    )


def _undirected_links(adj: np.ndarray) -> np.ndarray:
    upper = np.triu(adj | adj.T, 1)
    return np.argwhere(upper)


@dataclass(frozen=True, eq=False)
class LinkFailureModel:
    """Each undirected link of ``base`` fails independently in every epoch."""

    base: Topology
    fail_prob: float

    def __post_init__(self):
        if not 0.0 <= self.fail_prob < 1.0:
            raise ValueError(f"fail_prob must be in [0, 1), got {self.fail_prob}")

    def sample_topology(self, rng) -> Topology:
        links = _undirected_links(self.base.adjacency)
        failed = rng.random(len(links)) < self.fail_prob
        adj = self.base.adjacency.copy()
        i, j = links[failed].T
        adj[i, j] = False
        adj[j, i] = False
        return Topology(adj, self.base.weights * adj, positions=self.base.positions)

    def sample_sequence(self, epochs: int, dwell: float, rng) -> EpochSequence:
        return EpochSequence(tuple((self.sample_topology(rng), dwell) for _ in range(epochs)))


def gen_link_failures(
    base: Topology, fail_prob: float, epochs: int, dwell: float, rng=None
) -> EpochSequence:
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    rng = np.random.default_rng(rng)
    return LinkFailureModel(base, fail_prob).sample_sequence(epochs, dwell, rng)


@dataclass(frozen=True, eq=False)
class WaypointModel:
    """Group mobility around a moving reference point.

    Node ``i`` sits at ``reference + offsets[i] + disturbance`` where the
    disturbance has a uniform magnitude in ``disturbance_range`` and a uniform
    direction.  The reference takes one straight step of ``ref_speed * dwell``
    per epoch in a random direction, reflected at the area boundary.  Link
    weights are fixed per ordered node pair.
    """

    offsets: np.ndarray
    weights: np.ndarray
    area_side: float
    comm_range: float
    ref_speed: float
    disturbance_range: tuple[float, float]

    @classmethod
    def random(
        cls,
        n,
        area_side,
        comm_range,
        ref_speed,
        disturbance_range,
        rng,
        weight_range=(0.0, 50.0),
        symmetric=False,
    ) -> "WaypointModel":
        if n < 2:
            raise ValueError("need at least two nodes")
        offsets = rng.uniform(0.0, area_side, size=(n, 2))
        weights = _draw_weights(rng, n, weight_range, symmetric)
        return cls(offsets, weights, area_side, comm_range, ref_speed, tuple(disturbance_range))

    @property
    def n(self) -> int:
        return len(self.offsets)

    def sample_topology(self, rng, reference=(0.0, 0.0)) -> Topology:
        lo, hi = self.disturbance_range
        mag = rng.uniform(lo, hi, size=self.n)
        ang = rng.uniform(0.0, 2 * np.pi, size=self.n)
        dist = np.column_stack([mag * np.cos(ang), mag * np.sin(ang)])
        pos = np.asarray(reference) + self.offsets + dist
        adj = _disk_graph(pos, self.comm_range)
        return Topology(adj, self.weights * adj, positions=pos)

    def step_reference(self, reference, dwell, rng) -> np.ndarray:
        ang = rng.uniform(0.0, 2 * np.pi)
        ref = np.asarray(reference, float) + self.ref_speed * dwell * np.array(
            [np.cos(ang), np.sin(ang)]
        )
        side = self.area_side
        # reflect into [0, side]
        ref = np.mod(ref, 2 * side)
        return np.where(ref > side, 2 * side - ref, ref)

    def sample_sequence(self, epochs: int, dwell: float, rng, reference=None) -> EpochSequence:
        if reference is None:
            reference = np.full(2, self.area_side / 2)
        out = []
        for _ in range(epochs):
            out.append((self.sample_topology(rng, reference), dwell))
            reference = self.step_reference(reference, dwell, rng)
        return EpochSequence(tuple(out))


def gen_waypoint(
    n: int,
    area_side: float,
    comm_range: float,
    ref_speed: float,
    disturbance_range: tuple[float, float],
    epochs: int,
    dwell: float,
    rng=None,
    *,
    weight_range: tuple[float, float] = (0.0, 50.0),
    symmetric: bool = False,
) -> EpochSequence:
    rng = np.random.default_rng(rng)
    model = WaypointModel.random(
        n, area_side, comm_range, ref_speed, disturbance_range, rng, weight_range, symmetric
    )
    return model.sample_sequence(epochs, dwell, rng)


# -- JSON ------------------------------------------------------------------


def topology_to_json(topo: Topology) -> dict:
    edges = [
        {"source": i + 1, "target": j + 1, "weight": float(topo.weights[i, j])}
        for i, j in topo.edges
    ]
    return {"type": "topology", "n": topo.n, "edges": edges}


def topology_from_json(doc: dict) -> Topology:
    if doc.get("type", "topology") != "topology":
        raise ValueError(f"expected a topology document, got type={doc.get('type')!r}")
    n = int(doc["n"])
    return Topology.from_edges(
        n, [(e["source"] - 1, e["target"] - 1, float(e["weight"])) for e in doc["edges"]]
    )


def sequence_to_json(seq: EpochSequence) -> dict:
    return {
        "type": "epoch_sequence",
        "start_time": seq.start_time,
        "epochs": [
            {"dwell": dwell, "topology": topology_to_json(topo)} for topo, dwell in seq.epochs
        ],
    }


def sequence_from_json(doc: dict) -> EpochSequence:
    if doc.get("type") != "epoch_sequence":
        raise ValueError(f"expected an epoch_sequence document, got type={doc.get('type')!r}")
    epochs = tuple(
        (topology_from_json(e["topology"]), float(e["dwell"])) for e in doc["epochs"]
    )
    return EpochSequence(epochs, float(doc.get("start_time", 0.0)))


def save_json(obj, path) -> None:
    if isinstance(obj, Topology):
        doc = topology_to_json(obj)
    elif isinstance(obj, EpochSequence):
        doc = sequence_to_json(obj)
    else:
        doc = obj
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)


def load_json(path) -> Topology | EpochSequence:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("type") == "epoch_sequence":
        return sequence_from_json(doc)
    return topology_from_json(doc)
