"""Omniscient observer metrics: communication graph, Fiedler value, link counts."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .model import ROOT_ID, Pose2D, RobotState, Role, Target

CONNECTIVITY_TOL = 1e-8


@dataclass(frozen=True)
class ConnectivityGraph:
    n: int
    adjacency: np.ndarray
    degree: np.ndarray
    edges: list[tuple[int, int]]
    # position in the node set -> robot id
    node_ids: list[int] = field(default_factory=list)

    @property
    def laplacian(self) -> np.ndarray:
        return np.diag(self.degree) - self.adjacency

    @classmethod
    def from_adjacency(cls, adjacency: np.ndarray, node_ids: Sequence[int] | None = None) -> ConnectivityGraph:
        a = np.asarray(adjacency, dtype=float)
        if a.shape[0] != a.shape[1] or not np.array_equal(a, a.T):
            raise ValueError("adjacency must be square and symmetric")
        if np.any(np.diag(a) != 0):
            raise ValueError("adjacency must have a zero diagonal")
        n = a.shape[0]
        ii, jj = np.nonzero(np.triu(a, k=1))
        return cls(
            n=n,
            adjacency=a,
            degree=a.sum(axis=1),
            edges=list(zip(ii.tolist(), jj.tolist())),
            node_ids=list(node_ids) if node_ids is not None else list(range(n)),
        )


@dataclass
class ConnectivityReport:
    lambda2: float
    is_connected: bool
    links_per_target: dict[int, int]
    targets_reached: dict[int, bool]
    backbone_robot_count: int


def build_graph(positions: Sequence[Pose2D], alive: Sequence[bool], comm_range: float) -> ConnectivityGraph:
    """Disc graph over the alive robots; edge iff distance <= comm_range."""
    if len(positions) != len(alive):
        raise ValueError("positions and alive differ in length")
    node_ids = [i for i, a in enumerate(alive) if a]
    if not node_ids:
        raise ValueError("no alive robots")
    xy = np.array([[positions[i].x, positions[i].y] for i in node_ids])
    return graph_from_xy(xy, comm_range, node_ids)


def graph_from_xy(xy: np.ndarray, comm_range: float, node_ids: Sequence[int] | None = None) -> ConnectivityGraph:
    diff = xy[:, None, :] - xy[None, :, :]
    dist = np.sqrt((diff**2).sum(-1))
    adjacency = (dist <= comm_range).astype(float)
    np.fill_diagonal(adjacency, 0.0)
    return ConnectivityGraph.from_adjacency(adjacency, node_ids)


def fiedler_value(graph: ConnectivityGraph) -> float:
    """Second-smallest Laplacian eigenvalue (0 for a single node)."""
    if graph.n < 2:
        return 0.0
    eigenvalues = np.linalg.eigvalsh(graph.laplacian)
    return float(eigenvalues[1])


def laplacian_spectrum(graph: ConnectivityGraph) -> np.ndarray:
    return np.linalg.eigvalsh(graph.laplacian)


def is_connected_bfs(graph: ConnectivityGraph) -> bool:
    if graph.n <= 1:
        return True
    neighbours = [np.flatnonzero(row).tolist() for row in graph.adjacency]
    seen = {0}
    queue = deque([0])
    while queue:
        u = queue.popleft()
        for v in neighbours[u]:
            if v not in seen:
                seen.add(v)
                queue.append(v)
    return len(seen) == graph.n


def chain_links(robots: Sequence[RobotState], worker: RobotState, comm_range: float) -> int:
    """Count the worker's intact labelled chains to the root.

    A chain counts when every hop (worker -> parent -> ... -> root) is an
    alive robot within comm_range of the previous one, and no robot other
    than the root and the worker is shared with a chain already counted.
    """
    if not worker.alive or worker.role is not Role.WORKER:
        return 0
    by_id = {r.id: r for r in robots}
    used: set[int] = set()
    count = 0
    for chain, parent in worker.parents.items():
        members: list[int] = []
        prev = worker
        current = parent
        ok = False
        for _ in range(len(robots) + 1):
            node = by_id.get(current)
            if node is None or not node.alive or current in members or current == worker.id:
                break
            if prev.pose.distance_to(node.pose) > comm_range:
                break
            if current == ROOT_ID:
                ok = True
                break
            if node.role is not Role.NETWORKER or node.target_chain != chain:
                break
            members.append(current)
            prev = node
            current = node.parents.get(chain, -1)
        if ok and used.isdisjoint(members):
            used.update(members)
            count += 1
    return count


def evaluate_constraints(
    robots: Sequence[RobotState],
    targets: Sequence[Target],
    comm_range: float,
    move_threshold: float,
    lambda2: float | None = None,
) -> ConnectivityReport:
    if lambda2 is None:
        graph = build_graph([r.pose for r in robots], [r.alive for r in robots], comm_range)
        lambda2 = fiedler_value(graph)
    workers = {}
    for r in robots:
        if r.alive and r.role is Role.WORKER and r.target_id is not None and not r.parked:
            workers.setdefault(r.target_id, r)
    links: dict[int, int] = {}
    reached: dict[int, bool] = {}
    for t in targets:
        w = workers.get(t.id)
        if w is None:
            links[t.id] = 0
            reached[t.id] = False
            continue
        links[t.id] = chain_links(robots, w, comm_range)
        reached[t.id] = w.pose.distance_to(t.position) <= move_threshold
    backbone = sum(1 for r in robots if r.alive and r.role is Role.NETWORKER)
    return ConnectivityReport(
        lambda2=lambda2,
        is_connected=lambda2 > CONNECTIVITY_TOL,
        links_per_target=links,
        targets_reached=reached,
        backbone_robot_count=backbone,
    )
