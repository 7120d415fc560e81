"""Weighted phase graph of a Hamiltonian: cycle phases, curing, and generators.

Each off-diagonal pair {i, j} becomes one edge carrying a magnitude
r > 0 and a phase phi.  The stored phi is the phase picked up hopping
i -> j, defined by writing the hop coefficient H[j, i] as -r e^{-i phi};
hopping j -> i contributes -phi.  A Hamiltonian admits positive
expansion weights exactly when every cycle's phase sum vanishes mod 2pi,
in which case a diagonal rotation e^{i theta_z} makes it stoquastic.
"""

from __future__ import annotations

import cmath
import math
from collections import deque
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import MissingEdge, NotVgp
from .model import Hamiltonian, TOL_ZERO

TOL_PHASE = 1e-8
MAX_CYCLE_LEN = 12
MAX_CYCLE_COUNT = 100_000

_TAU = 2.0 * math.pi


def wrap_angle(x):
    """Reduce an angle (scalar or array) into (-pi, pi]."""
    wrapped = math.pi - np.remainder(math.pi - np.asarray(x, dtype=float), _TAU)
    if np.ndim(x) == 0:
        return float(wrapped)
    return wrapped


@dataclass(frozen=True)
class PhaseGraph:
    """Vertices carry classical energies; edges carry (r, phi) in i<j orientation."""

    n_vertices: int
    energy: np.ndarray
    edges: dict[tuple[int, int], tuple[float, float]]
    _adj: dict[int, tuple[int, ...]]

    def neighbors(self, v: int) -> tuple[int, ...]:
        return self._adj.get(v, ())

    def has_edge(self, u: int, v: int) -> bool:
        return (u, v) in self.edges or (v, u) in self.edges

    def edge_phase(self, u: int, v: int) -> float:
        """Phase contributed by traversing u -> v."""
        if (u, v) in self.edges:
            return self.edges[(u, v)][1]
        if (v, u) in self.edges:
            return -self.edges[(v, u)][1]
        raise MissingEdge(f"no edge between {u} and {v}")

    def edge_magnitude(self, u: int, v: int) -> float:
        key = (u, v) if (u, v) in self.edges else (v, u)
        if key not in self.edges:
            raise MissingEdge(f"no edge between {u} and {v}")
        return self.edges[key][0]


@dataclass(frozen=True)
class Cycle:
    """Closed non-repeating path; phase is the sum of oriented edge phases."""

    vertices: tuple[int, ...]
    phase: float


@dataclass(frozen=True)
class PhaseRotation:
    """Diagonal rotation angles theta_z, reported in (-pi, pi]."""

    theta: np.ndarray

    def __post_init__(self):
        theta = wrap_angle(np.asarray(self.theta, dtype=float))
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)

    def __len__(self):
        return self.theta.size


@dataclass(frozen=True)
class VgpReport:
    is_vgp: bool
    components: int
    violations: tuple[tuple[Cycle, float], ...]
    rotation: PhaseRotation | None

    def to_json_dict(self) -> dict:
        return {
            "is_vgp": self.is_vgp,
            "components": self.components,
            "violations": [
                {"cycle": list(cycle.vertices), "phase": phase}
                for cycle, phase in self.violations
            ],
            "theta": self.rotation.theta.tolist() if self.rotation else None,
        }


class ChordlessCycles(NamedTuple):
    cycles: list[Cycle]
    truncated: bool


def build_graph(H: Hamiltonian, tol_zero: float = TOL_ZERO) -> PhaseGraph:
    """Polar form of the off-diagonal part of H as a weighted graph."""
    edges = {}
    adj: dict[int, list[int]] = {}
    for (i, j), value in H.off_diag_items():
        if i >= j or abs(value) <= tol_zero:
            continue
        hop = H.entries[(j, i)]  # coefficient for the hop i -> j
        r = abs(hop)
        phi = wrap_angle(-cmath.phase(-hop))
        edges[(i, j)] = (r, phi)
        adj.setdefault(i, []).append(j)
        adj.setdefault(j, []).append(i)
    adj_sorted = {v: tuple(sorted(nbrs)) for v, nbrs in adj.items()}
    return PhaseGraph(H.dim, H.diagonal(), edges, adj_sorted)


def cycle_phase(graph: PhaseGraph, vertices) -> float:
    """Sum of oriented edge phases around a closed traversal, in (-pi, pi]."""
    verts = list(vertices)
    if len(verts) < 3:
        raise ValueError("a cycle needs at least three vertices")
    total = 0.0
    for u, v in zip(verts, verts[1:] + verts[:1]):
        total += graph.edge_phase(u, v)
    return wrap_angle(total)


def is_vgp(graph: PhaseGraph, tol_phase: float = TOL_PHASE) -> VgpReport:
    """Spanning-tree test: assign potentials, then check every non-tree edge.

    Tree edges force theta_j = theta_i + phi_ij; the graph has vanishing
    geometric phases iff every remaining edge satisfies
    phi_ij + theta_i - theta_j = 0 (mod 2pi) within tol_phase.
    """
    n = graph.n_vertices
    theta = np.zeros(n)
    parent = np.full(n, -2, dtype=int)  # -2 unvisited, -1 root
    depth = np.zeros(n, dtype=int)
    components = 0
    for root in range(n):
        if parent[root] != -2:
            continue
        components += 1
        parent[root] = -1
        queue = deque([root])
        while queue:
            u = queue.popleft()
            for v in graph.neighbors(u):
                if parent[v] == -2:
                    parent[v] = u
                    depth[v] = depth[u] + 1
                    theta[v] = wrap_angle(theta[u] + graph.edge_phase(u, v))
                    queue.append(v)
    violations = []
    for (i, j), (_r, phi) in sorted(graph.edges.items()):
        if parent[j] == i or parent[i] == j:
            continue
        defect = wrap_angle(phi + theta[i] - theta[j])
        if abs(defect) > tol_phase:
            verts = _fundamental_cycle(i, j, parent, depth)
            violations.append((Cycle(verts, cycle_phase(graph, verts)), defect))
    ok = not violations
    return VgpReport(ok, components, tuple(violations),
                     PhaseRotation(theta) if ok else None)


def _fundamental_cycle(i, j, parent, depth):
    """Vertices [i, j, ...tree path from j back to i...] for a non-tree edge."""
    up_i, up_j = [i], [j]
    a, b = i, j
    while depth[a] > depth[b]:
        a = parent[a]
        up_i.append(a)
    while depth[b] > depth[a]:
        b = parent[b]
        up_j.append(b)
    while a != b:
        a, b = parent[a], parent[b]
        up_i.append(a)
        up_j.append(b)
    lca = a
    path = [i, j]
    path.extend(up_j[1:-1])
    if lca not in (i, j):
        path.append(lca)
    path.extend(reversed(up_i[1:-1]))
    return tuple(path)


def cure_phases(graph: PhaseGraph, tol_phase: float = TOL_PHASE) -> PhaseRotation:
    """Rotation theta with phi_ij + theta_i - theta_j = 0 (mod 2pi) on every edge.

    Raises NotVgp when some fundamental cycle carries a nonzero phase.
    """
    report = is_vgp(graph, tol_phase)
    if not report.is_vgp:
        worst = max(abs(d) for _, d in report.violations)
        raise NotVgp(
            f"{len(report.violations)} cycle(s) carry nonzero phase (worst {worst:.3g} rad)",
            report.violations,
        )
    return report.rotation


def apply_rotation(H: Hamiltonian, rotation) -> Hamiltonian:
    """Conjugate H by the diagonal phase matrix: H'_ij = H_ij e^{i(theta_i - theta_j)}."""
    theta = rotation.theta if isinstance(rotation, PhaseRotation) else np.asarray(rotation, float)
    if theta.shape != (H.dim,):
        raise ValueError("rotation length must equal the Hamiltonian dimension")
    entries = {}
    for (i, j), value in H.entries.items():
        if i == j:
            entries[(i, j)] = value
        else:
            entries[(i, j)] = value * cmath.exp(1j * (theta[i] - theta[j]))
    return Hamiltonian(H.dim, entries, H.pauli_masks)


def generate_stoquastic(n: int, density: float, seed) -> Hamiltonian:
    """Random real symmetric matrix with nonpositive off-diagonal entries.

    Every unordered pair is present with probability ``density`` and its
    value drawn uniform in [-1, 0); the diagonal is uniform in [-1, 1].
    The value stream is drawn for all pairs so the sparsity pattern and
    the values decouple under a fixed seed.
    """
    if n < 2:
        raise ValueError("need at least two basis states")
    if not 0 < density <= 1:
        raise ValueError("density must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    diag = rng.uniform(-1.0, 1.0, n)
    iu, ju = np.triu_indices(n, 1)
    present = rng.random(iu.size) < density
    values = rng.uniform(-1.0, 0.0, iu.size)
    entries = {(int(i), int(i)): complex(diag[i]) for i in range(n)}
    for i, j, keep, v in zip(iu, ju, present, values):
        if keep:
            entries[(int(i), int(j))] = complex(v)
            entries[(int(j), int(i))] = complex(v)
    return Hamiltonian(n, entries)


def generate_spf(n: int, density: float, seed) -> tuple[Hamiltonian, PhaseRotation]:
    """Rotated stoquastic instance: sign-problem-free but generally non-stoquastic.

    Returns the Hamiltonian together with the generating rotation.
    """
    ss = np.random.SeedSequence(seed) if not isinstance(seed, np.random.SeedSequence) else seed
    seed_matrix, seed_theta = ss.spawn(2)
    base = generate_stoquastic(n, density, seed_matrix)
    theta = wrap_angle(np.random.default_rng(seed_theta).uniform(-math.pi, math.pi, n))
    rotation = PhaseRotation(theta)
    return apply_rotation(base, rotation), rotation


def generate_sign_problem(n: int, density: float, seed,
                          max_attempts: int = 10_000) -> tuple[Hamiltonian, dict]:
    """Rotated stoquastic instance with one edge phase shifted by delta ~ U(pi/4, pi).

    The shifted edge is a non-tree edge whose fundamental cycle is as
    short as possible, so a violated cycle of known length is guaranteed.
    Edge sets without any cycle are redrawn from sub-seeds.  Returns the
    instance plus metadata: the perturbed edge, delta, and the cycle.
    """
    if n < 3:
        raise ValueError("sign-problem instances need at least three states")
    for attempt in range(max_attempts):
        ss = np.random.SeedSequence(seed, spawn_key=(attempt,))
        H, rotation = generate_spf(n, density, ss)
        graph = build_graph(H)
        candidates = _nontree_edges_with_cycles(graph)
        if not candidates:
            continue
        length, (i, j), verts = min(candidates)
        delta = float(np.random.default_rng(ss.spawn(1)[0]).uniform(math.pi / 4, math.pi))
        entries = dict(H.entries)
        entries[(j, i)] = entries[(j, i)] * cmath.exp(-1j * delta)
        entries[(i, j)] = entries[(j, i)].conjugate()
        perturbed = Hamiltonian(n, entries)
        meta = {
            "edge": (i, j),
            "delta": delta,
            "cycle": list(verts),
            "cycle_len": length,
            "attempt": attempt,
            "theta": rotation.theta.tolist(),
        }
        return perturbed, meta
    raise ValueError(
        f"no cyclic instance found for n={n}, density={density} after {max_attempts} draws"
    )


def _nontree_edges_with_cycles(graph: PhaseGraph):
    report_parent = np.full(graph.n_vertices, -2, dtype=int)
    depth = np.zeros(graph.n_vertices, dtype=int)
    for root in range(graph.n_vertices):
        if report_parent[root] != -2:
            continue
        report_parent[root] = -1
        queue = deque([root])
        while queue:
            u = queue.popleft()
            for v in graph.neighbors(u):
                if report_parent[v] == -2:
                    report_parent[v] = u
                    depth[v] = depth[u] + 1
                    queue.append(v)
    out = []
    for (i, j) in sorted(graph.edges):
        if report_parent[j] == i or report_parent[i] == j:
            continue
        verts = _fundamental_cycle(i, j, report_parent, depth)
        out.append((len(verts), (i, j), verts))
    return out


def first_negative_cos_multiple(x: float, m_max: int):
    """Smallest m <= m_max with cos(m*x) < 0, or None.

    None is guaranteed correct only for x = 0; for any x in (0, 2pi) a
    witness exists at some finite m, and m_max merely caps the search.
    """
    if not 0 <= x < _TAU:
        raise ValueError("x must lie in [0, 2*pi)")
    if m_max < 1:
        raise ValueError("m_max must be at least 1")
    chunk = 65_536
    for start in range(1, m_max + 1, chunk):
        ms = np.arange(start, min(start + chunk, m_max + 1))
        neg = np.cos(ms * x) < 0.0
        if neg.any():
            return int(ms[int(np.argmax(neg))])
    return None


def enumerate_chordless_cycles(graph: PhaseGraph, max_len: int = MAX_CYCLE_LEN,
                               max_count: int = MAX_CYCLE_COUNT) -> ChordlessCycles:
    """All induced cycles up to max_len vertices, each reported once.

    Canonical orientation: lowest vertex first, then the smaller of its
    two cycle neighbors.  DFS path extension prunes any partial path
    that acquires a chord, so emitted cycles are chordless by
    construction.  Decision-making should rely on the spanning-tree
    test; this enumeration exists for reporting and cross-validation.
    """
    if max_len < 3:
        raise ValueError("max_len must be at least 3")
    adjset = {v: set(graph.neighbors(v)) for v in range(graph.n_vertices)}
    cycles: list[Cycle] = []
    truncated = False

    def extend(start, path, on_path):
        nonlocal truncated
        if truncated:
            return
        last = path[-1]
        for nxt in adjset[last]:
            if truncated:
                return
            if nxt <= start or nxt in on_path:
                continue
            # any adjacency to an interior vertex would be a chord
            if any(nxt in adjset[mid] for mid in path[1:-1]):
                continue
            if nxt in adjset[start]:
                if len(path) >= 2 and path[1] < nxt and len(path) + 1 <= max_len:
                    verts = tuple(path) + (nxt,)
                    cycles.append(Cycle(verts, cycle_phase(graph, verts)))
                    if len(cycles) >= max_count:
                        truncated = True
                # extending past nxt would keep the chord {start, nxt}
                continue
            if len(path) + 1 < max_len:
                path.append(nxt)
                on_path.add(nxt)
                extend(start, path, on_path)
                on_path.discard(nxt)
                path.pop()

    for start in range(graph.n_vertices):
        if truncated:
            break
        for first in sorted(adjset[start]):
            if first <= start or truncated:
                continue
            extend(start, [start, first], {start, first})
    cycles.sort(key=lambda c: (len(c.vertices), c.vertices))
    return ChordlessCycles(cycles, truncated)
