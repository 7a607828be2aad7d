"""Mesh connectivity graphs, K-way partitioning, and overlap extension.

The partitioner grows K BFS fronts from farthest-point-sampled seeds
(smallest front claims next), then runs one boundary refinement pass that
moves vertices to a neighboring part when that lowers the edge cut without
disconnecting anything.  Balance (max part <= 1.5 n/K) is enforced by
reseeded retries.
"""
from __future__ import annotations

import heapq
import warnings
from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import PartitionError
from .geometry import TriMesh

BALANCE_FACTOR = 1.5
_PARTITION_RETRIES = 10


@dataclass
class AdjGraph:
    """Symmetric adjacency with sorted neighbor lists and no self-loops."""

    n: int
    neighbors: list[np.ndarray]

    def degree(self, v: int) -> int:
        return len(self.neighbors[v])

    def n_edges(self) -> int:
        return sum(len(nb) for nb in self.neighbors) // 2


def build_adjacency(mesh: TriMesh) -> AdjGraph:
    """Vertices are adjacent iff they share a mesh edge."""
    edges = mesh.edges()
    nb: list[set[int]] = [set() for _ in range(mesh.n_vertices)]
    for i, j in edges:
        nb[int(i)].add(int(j))
        nb[int(j)].add(int(i))
    return AdjGraph(mesh.n_vertices, [np.array(sorted(s), dtype=np.int64) for s in nb])


def _bfs_distances(graph: AdjGraph, sources: list[int]) -> np.ndarray:
    dist = np.full(graph.n, -1, dtype=np.int64)
    queue = deque()
    for s in sources:
        dist[s] = 0
        queue.append(s)
    while queue:
        v = queue.popleft()
        for w in graph.neighbors[v]:
            if dist[w] < 0:
                dist[w] = dist[v] + 1
                queue.append(int(w))
    return dist


def connected_components(graph: AdjGraph) -> list[np.ndarray]:
    seen = np.zeros(graph.n, dtype=bool)
    comps = []
    for start in range(graph.n):
        if seen[start]:
            continue
        queue = deque([start])
        seen[start] = True
        comp = [start]
        while queue:
            v = queue.popleft()
            for w in graph.neighbors[v]:
                if not seen[w]:
                    seen[w] = True
                    comp.append(int(w))
                    queue.append(int(w))
        comps.append(np.array(sorted(comp), dtype=np.int64))
    return comps


def is_connected_subset(graph: AdjGraph, vertices: np.ndarray) -> bool:
    verts = set(int(v) for v in vertices)
    if not verts:
        return False
    start = next(iter(verts))
    seen = {start}
    queue = deque([start])
    while queue:
        v = queue.popleft()
        for w in graph.neighbors[v]:
            if int(w) in verts and int(w) not in seen:
                seen.add(int(w))
                queue.append(int(w))
    return len(seen) == len(verts)


@dataclass
class Decomposition:
    """Overlapping vertex cover: extended parts over disjoint connected cores."""

    parts: list[np.ndarray]
    core_parts: list[np.ndarray]
    depth: int
    overlap_factor: int

    @property
    def k(self) -> int:
        return len(self.parts)

    def to_dict(self) -> dict:
        return {
            "parts": [p.tolist() for p in self.parts],
            "core_parts": [p.tolist() for p in self.core_parts],
            "depth": int(self.depth),
            "overlap_factor": int(self.overlap_factor),
        }


def decomposition_from_dict(d: dict) -> Decomposition:
    return Decomposition(
        parts=[np.asarray(p, dtype=np.int64) for p in d["parts"]],
        core_parts=[np.asarray(p, dtype=np.int64) for p in d["core_parts"]],
        depth=int(d["depth"]),
        overlap_factor=int(d["overlap_factor"]),
    )


def _grow_fronts(graph: AdjGraph, seeds: list[int]) -> np.ndarray:
    """Assign every vertex to a part by smallest-part-first BFS growth."""
    k = len(seeds)
    owner = np.full(graph.n, -1, dtype=np.int64)
    frontiers: list[deque] = [deque([s]) for s in seeds]
    sizes = [1] * k
    for p, s in enumerate(seeds):
        owner[s] = p
    heap = [(1, p) for p in range(k)]
    heapq.heapify(heap)
    claimed = k
    while heap and claimed < graph.n:
        size, p = heapq.heappop(heap)
        if size != sizes[p]:
            continue  # stale entry
        grabbed = False
        while frontiers[p]:
            v = frontiers[p].popleft()
            for w in graph.neighbors[v]:
                if owner[w] < 0:
                    owner[w] = p
                    frontiers[p].append(int(w))
                    sizes[p] += 1
                    claimed += 1
                    grabbed = True
                    break
            if grabbed:
                frontiers[p].appendleft(v)
                break
        if grabbed:
            heapq.heappush(heap, (sizes[p], p))
    return owner


def _edge_cut_gain(graph: AdjGraph, owner: np.ndarray, v: int, target: int) -> int:
    """Cut reduction if v moves from owner[v] to target."""
    same = sum(1 for w in graph.neighbors[v] if owner[w] == owner[v])
    tgt = sum(1 for w in graph.neighbors[v] if owner[w] == target)
    return tgt - same


def _movable(graph: AdjGraph, owner: np.ndarray, v: int) -> bool:
    p = int(owner[v])
    rest = np.array([u for u in np.where(owner == p)[0] if u != v], dtype=np.int64)
    return len(rest) > 0 and is_connected_subset(graph, rest)


def _balance_pass(graph: AdjGraph, owner: np.ndarray, k: int, max_moves: int) -> None:
    """Shed boundary vertices from oversized parts into smaller neighbors."""
    sizes = np.bincount(owner, minlength=k)
    for _ in range(max_moves):
        order = np.argsort(-sizes)
        moved = False
        for p in order:
            best = None
            for v in np.where(owner == p)[0]:
                targets = {int(owner[w]) for w in graph.neighbors[v]} - {int(p)}
                for q in sorted(targets):
                    if sizes[q] + 1 >= sizes[p]:
                        continue
                    key = (sizes[q], -_edge_cut_gain(graph, owner, v, q))
                    if (best is None or key < best[0]) and _movable(graph, owner, int(v)):
                        best = (key, int(v), q)
            if best is not None:
                _, v, q = best
                sizes[owner[v]] -= 1
                owner[v] = q
                sizes[q] += 1
                moved = True
                break
        if not moved:
            return


def _refine_boundary(graph: AdjGraph, owner: np.ndarray, max_size: int) -> None:
    sizes = np.bincount(owner, minlength=owner.max() + 1)
    for v in range(graph.n):
        p = int(owner[v])
        if sizes[p] <= 1:
            continue
        foreign = {int(owner[w]) for w in graph.neighbors[v] if owner[w] != p}
        if not foreign:
            continue
        best_target, best_gain = -1, 0
        for q in sorted(foreign):
            if sizes[q] + 1 > max_size:
                continue
            gain = _edge_cut_gain(graph, owner, v, q)
            if gain > best_gain:
                best_gain, best_target = gain, q
        if best_target < 0:
            continue
        rest = np.array([u for u in np.where(owner == p)[0] if u != v], dtype=np.int64)
        if len(rest) == 0 or not is_connected_subset(graph, rest):
            continue
        owner[v] = best_target
        sizes[p] -= 1
        sizes[best_target] += 1


def partition(graph: AdjGraph, k: int, rng_seed: int = 0) -> list[np.ndarray]:
    """K disjoint connected parts covering all vertices, balanced to 1.5 n/K."""
    if k < 1:
        raise PartitionError("K must be at least 1")
    if k > graph.n:
        raise PartitionError(f"K={k} exceeds vertex count {graph.n}")
    comps = connected_components(graph)
    if len(comps) > 1:
        sizes = [len(c) for c in comps]
        raise PartitionError(
            f"graph is disconnected: {len(comps)} components of sizes {sizes}"
        )
    if k == 1:
        return [np.arange(graph.n, dtype=np.int64)]

    rng = np.random.default_rng(rng_seed)
    max_size = int(np.ceil(BALANCE_FACTOR * graph.n / k))
    for _ in range(_PARTITION_RETRIES):
        seeds = [int(rng.integers(graph.n))]
        while len(seeds) < k:
            dist = _bfs_distances(graph, seeds)
            far = int(np.argmax(dist))
            if far in seeds or dist[far] <= 0:
                # fall back to any unseeded vertex
                pool = np.setdiff1d(np.arange(graph.n), np.array(seeds))
                far = int(rng.choice(pool))
            seeds.append(far)
        owner = _grow_fronts(graph, seeds)
        if np.any(owner < 0):
            continue
        _balance_pass(graph, owner, k, max_moves=2 * graph.n)
        _refine_boundary(graph, owner, max_size)
        parts = [np.where(owner == p)[0].astype(np.int64) for p in range(k)]
        if any(len(p) == 0 for p in parts):
            continue
        if max(len(p) for p in parts) > max_size:
            continue
        if not all(is_connected_subset(graph, p) for p in parts):
            continue
        return parts
    raise PartitionError(
        f"no balanced connected {k}-way partition found in {_PARTITION_RETRIES} tries"
    )


def extend(graph: AdjGraph, core_parts: list[np.ndarray], d: int) -> Decomposition:
    """Close each core under d rounds of neighbor inclusion; measure overlap."""
    if d < 0:
        raise ValueError("extension depth must be nonnegative")
    parts = []
    for core in core_parts:
        current = set(int(v) for v in core)
        frontier = set(current)
        for _ in range(d):
            new = set()
            for v in frontier:
                for w in graph.neighbors[v]:
                    if int(w) not in current:
                        new.add(int(w))
            current |= new
            frontier = new
            if not frontier:
                break
        parts.append(np.array(sorted(current), dtype=np.int64))

    coverage = np.zeros(graph.n, dtype=np.int64)
    for p in parts:
        coverage[p] += 1
    if np.any(coverage == 0):
        raise PartitionError("extension left vertices uncovered")
    t = int(coverage.max())
    if d >= 1 and len(core_parts) >= 2 and t < 2:
        raise PartitionError("expected overlap of at least 2 after extension")
    return Decomposition(parts=parts, core_parts=[np.asarray(c, dtype=np.int64) for c in core_parts],
                         depth=d, overlap_factor=t)


def restrict(u: np.ndarray, part: np.ndarray) -> np.ndarray:
    """Pick the entries of `u` listed in `part`, in part order."""
    return np.asarray(u)[np.asarray(part, dtype=np.int64)]


def extend_by_zero(w: np.ndarray, part: np.ndarray, n: int) -> np.ndarray:
    """Scatter local values into a length-n vector, zero elsewhere."""
    part = np.asarray(part, dtype=np.int64)
    w = np.asarray(w, dtype=float)
    if len(w) != len(part):
        raise ValueError("local vector length does not match the part")
    if part.size and (part.min() < 0 or part.max() >= n):
        raise IndexError("part index out of range")
    out = np.zeros(n)
    out[part] = w
    return out


def boundary_component_diagnostic(
    mesh: TriMesh, decomposition: Decomposition
) -> list[dict[str, int]]:
    """Count Dirichlet/Neumann boundary components per subdomain.

    Surrogate training assumes at most two components of either type on a
    local boundary; exact local solvers do not care.  Emits a warning when a
    subdomain exceeds that budget.
    """
    tag_of: dict[tuple[int, int], str] = {}
    for (i, j), tag in zip(mesh.boundary_edges, mesh.boundary_tags):
        tag_of[(min(int(i), int(j)), max(int(i), int(j)))] = tag
    out = []
    for k, part in enumerate(decomposition.parts):
        inside = set(int(v) for v in part)
        kinds = {"dirichlet": [], "neumann": []}
        for (i, j), tag in tag_of.items():
            if i in inside and j in inside:
                kinds[tag.split(":")[0]].append((i, j))
        counts = {}
        for kind, edges in kinds.items():
            nb: dict[int, set[int]] = {}
            for i, j in edges:
                nb.setdefault(i, set()).add(j)
                nb.setdefault(j, set()).add(i)
            seen: set[int] = set()
            comps = 0
            for start in nb:
                if start in seen:
                    continue
                comps += 1
                queue = deque([start])
                seen.add(start)
                while queue:
                    v = queue.popleft()
                    for w in nb[v]:
                        if w not in seen:
                            seen.add(w)
                            queue.append(w)
            counts[kind] = comps
        if counts.get("dirichlet", 0) > 2 or counts.get("neumann", 0) > 2:
            warnings.warn(
                f"subdomain {k} has {counts} boundary components; "
                "surrogate local solvers may be out of their training regime",
                stacklevel=2,
            )
        out.append(counts)
    return out
