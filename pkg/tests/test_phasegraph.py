import itertools
import math

import numpy as np
import pytest

from vgpqmc.errors import MissingEdge, NotVgp
from vgpqmc.model import Hamiltonian, is_stoquastic, load_hamiltonian
from vgpqmc.phasegraph import (
    Cycle,
    PhaseRotation,
    apply_rotation,
    build_graph,
    cure_phases,
    cycle_phase,
    enumerate_chordless_cycles,
    first_negative_cos_multiple,
    generate_sign_problem,
    generate_spf,
    generate_stoquastic,
    is_vgp,
    wrap_angle,
)


def hermitian(n, upper):
    entries = {}
    for (i, j), v in upper.items():
        entries[(i, j)] = v
        if i != j:
            entries[(j, i)] = np.conj(complex(v))
    return Hamiltonian(n, entries)


def triangle(h01, h12, h02, diag=(0.0, 0.0, 0.0)):
    upper = {(0, 1): h01, (1, 2): h12, (0, 2): h02}
    for k, d in enumerate(diag):
        if d:
            upper[(k, k)] = d
    return hermitian(3, upper)


def two_qubit_mask_graph(masks):
    entries = {}
    for mask in masks:
        for z in range(4):
            entries[(z ^ mask, z)] = -1.0
    return build_graph(Hamiltonian(4, entries))


def test_wrap_angle():
    assert wrap_angle(math.pi) == pytest.approx(math.pi)
    assert wrap_angle(-math.pi) == pytest.approx(math.pi)
    assert wrap_angle(3 * math.pi / 2) == pytest.approx(-math.pi / 2)
    assert wrap_angle(0.0) == 0.0
    arr = wrap_angle(np.array([0.0, 2 * math.pi, -math.pi]))
    assert arr == pytest.approx([0.0, 0.0, math.pi])


def test_build_graph_phase_convention():
    g = build_graph(hermitian(2, {(0, 1): -1.0}))
    assert g.edges[(0, 1)] == pytest.approx((1.0, 0.0))

    g = build_graph(hermitian(2, {(0, 1): 1.0}))
    r, phi = g.edges[(0, 1)]
    assert (r, phi) == pytest.approx((1.0, math.pi))

    # H_01 = i stores the phase of the 0 -> 1 hop coefficient H_10 = -i
    g = build_graph(hermitian(2, {(0, 1): 1j}))
    r, phi = g.edges[(0, 1)]
    assert (r, phi) == pytest.approx((1.0, -math.pi / 2))
    # both orientations are conjugate
    assert g.edge_phase(1, 0) == pytest.approx(math.pi / 2)


def test_build_graph_energy_and_missing_edges():
    H = triangle(1.0, 1.0, 0.0, diag=(0.5, -0.5, 0.25))
    g = build_graph(H)
    assert g.energy == pytest.approx([0.5, -0.5, 0.25])
    assert g.has_edge(0, 1) and not g.has_edge(0, 2)
    with pytest.raises(MissingEdge):
        g.edge_phase(0, 2)


def test_cycle_phase_examples():
    g = build_graph(triangle(1.0, 1.0, -1.0))
    assert cycle_phase(g, [0, 1, 2]) == pytest.approx(0.0, abs=1e-12)

    g = build_graph(triangle(1.0, 1.0, 1.0))
    assert abs(cycle_phase(g, [0, 1, 2])) == pytest.approx(math.pi)

    # reversed traversal negates the phase
    g = build_graph(triangle(1j, 1.0, 1.0))
    fwd = cycle_phase(g, [0, 1, 2])
    rev = cycle_phase(g, [0, 2, 1])
    assert wrap_angle(fwd + rev) == pytest.approx(0.0, abs=1e-12)

    with pytest.raises(MissingEdge):
        cycle_phase(build_graph(triangle(1.0, 1.0, 0.0)), [0, 1, 2])


def test_is_vgp_stoquastic_and_violations():
    g = build_graph(generate_stoquastic(8, 0.6, seed=1))
    report = is_vgp(g)
    assert report.is_vgp
    assert report.rotation is not None
    assert np.allclose(report.rotation.theta, 0.0)

    g = build_graph(triangle(1.0, 1.0, 1.0))
    report = is_vgp(g)
    assert not report.is_vgp
    assert report.rotation is None
    assert len(report.violations) == 1
    cyc, defect = report.violations[0]
    assert sorted(cyc.vertices) == [0, 1, 2]
    assert abs(defect) == pytest.approx(math.pi, abs=1e-9)
    assert wrap_angle(cyc.phase - defect) == pytest.approx(0.0, abs=1e-9)


def test_is_vgp_counts_components():
    entries = {(0, 1): -1.0, (1, 0): -1.0, (2, 3): -0.5, (3, 2): -0.5}
    H = Hamiltonian(5, entries)  # vertex 4 isolated
    report = is_vgp(build_graph(H))
    assert report.components == 3
    assert report.is_vgp


def test_cure_phases_triangle_example():
    H = triangle(1.0, 1.0, -1.0)
    rot = cure_phases(build_graph(H))
    assert rot.theta == pytest.approx([0.0, math.pi, 0.0])
    cured = apply_rotation(H, rot)
    assert cured.entries[(0, 1)] == pytest.approx(-1.0)
    assert cured.entries[(1, 2)] == pytest.approx(-1.0)
    assert cured.entries[(0, 2)] == pytest.approx(-1.0)
    assert is_stoquastic(cured, 1e-9)


def test_cure_phases_stoquastic_is_zero():
    H = generate_stoquastic(6, 0.8, seed=3)
    rot = cure_phases(build_graph(H))
    assert np.allclose(rot.theta, 0.0)


def test_cure_phases_rejects_nonvgp():
    with pytest.raises(NotVgp) as info:
        cure_phases(build_graph(triangle(1.0, 1.0, 1.0)))
    assert info.value.violations


def test_apply_rotation_basics():
    H = triangle(1j, 1.0, -0.5, diag=(0.1, 0.2, 0.3))
    same = apply_rotation(H, PhaseRotation(np.zeros(3)))
    assert same.allclose(H, 1e-15)
    theta = np.array([0.3, -1.2, 2.2])
    there = apply_rotation(H, theta)
    back = apply_rotation(there, -theta)
    assert back.allclose(H, 1e-12)
    assert there.entries[(0, 0)] == H.entries[(0, 0)]


def test_apply_rotation_minus_x_example():
    H = hermitian(2, {(0, 1): -1.0})
    rotated = apply_rotation(H, np.array([0.0, math.pi]))
    assert rotated.entries[(0, 1)].real == pytest.approx(1.0)
    assert not is_stoquastic(rotated)
    assert is_vgp(build_graph(rotated)).is_vgp


def test_generate_stoquastic_properties():
    for seed in range(5):
        H = generate_stoquastic(7, 0.5, seed)
        assert is_stoquastic(H)
        assert is_vgp(build_graph(H)).is_vgp
    a = generate_stoquastic(9, 0.4, 123)
    b = generate_stoquastic(9, 0.4, 123)
    assert a.entries == b.entries


def test_generate_spf_properties():
    n_nonstoq = 0
    for seed in range(10):
        H, rot = generate_spf(8, 0.7, seed)
        g = build_graph(H)
        report = is_vgp(g)
        assert report.is_vgp
        if not is_stoquastic(H):
            n_nonstoq += 1
        # curing undoes the generating rotation up to a per-component shift:
        # recovered differences negate the generator differences on every edge
        cure = report.rotation.theta
        gen = rot.theta
        for (i, j) in g.edges:
            mismatch = wrap_angle((cure[i] - cure[j]) + (gen[i] - gen[j]))
            assert abs(mismatch) < 1e-9
        cured = apply_rotation(H, report.rotation)
        assert is_stoquastic(cured, 1e-9)
    assert n_nonstoq >= 9  # stoquastic draws are measure-zero flukes


def test_generate_spf_deterministic():
    a, ra = generate_spf(6, 0.5, 77)
    b, rb = generate_spf(6, 0.5, 77)
    assert a.entries == b.entries
    assert np.array_equal(ra.theta, rb.theta)


def test_generate_sign_problem():
    for seed in range(8):
        H, meta = generate_sign_problem(6, 0.6, seed)
        report = is_vgp(build_graph(H))
        assert not report.is_vgp
        assert math.pi / 4 < meta["delta"] < math.pi
        assert meta["cycle_len"] >= 3
    with pytest.raises(ValueError):
        generate_sign_problem(2, 1.0, 0)


def test_gauge_invariance_of_cycle_phases():
    rng = np.random.default_rng(31)
    for _ in range(15):
        n = int(rng.integers(4, 9))
        H, _ = generate_spf(n, 0.8, int(rng.integers(0, 2**31)))
        g = build_graph(H)
        cycles = enumerate_chordless_cycles(g, max_len=6).cycles
        theta = rng.uniform(-math.pi, math.pi, n)
        g2 = build_graph(apply_rotation(H, theta))
        for cyc in cycles[:20]:
            before = cycle_phase(g, cyc.vertices)
            after = cycle_phase(g2, cyc.vertices)
            assert abs(wrap_angle(before - after)) < 1e-9


def test_vgp_iff_curable():
    rng = np.random.default_rng(37)
    for trial in range(30):
        n = int(rng.integers(3, 9))
        seed = int(rng.integers(0, 2**31))
        if trial % 3 == 0:
            H = generate_stoquastic(n, 0.6, seed)
        elif trial % 3 == 1:
            H, _ = generate_spf(n, 0.7, seed)
        else:
            try:
                H, _ = generate_sign_problem(n, 0.7, seed)
            except ValueError:
                continue
        g = build_graph(H)
        report = is_vgp(g)
        if report.is_vgp:
            rot = cure_phases(g)
            assert is_stoquastic(apply_rotation(H, rot), 1e-9)
        else:
            with pytest.raises(NotVgp):
                cure_phases(g)


def test_spanning_tree_matches_chordless_scan():
    rng = np.random.default_rng(41)
    for trial in range(25):
        n = int(rng.integers(4, 9))
        seed = int(rng.integers(0, 2**31))
        if trial % 2:
            H, _ = generate_spf(n, 0.8, seed)
        else:
            try:
                H, _ = generate_sign_problem(n, 0.8, seed)
            except ValueError:
                continue
        g = build_graph(H)
        report = is_vgp(g)
        cycles = enumerate_chordless_cycles(g, max_len=n).cycles
        all_zero = all(abs(c.phase) <= 1e-8 for c in cycles)
        assert report.is_vgp == all_zero


def test_walk_phase_is_sum_of_fundamental_cycle_defects():
    # phase of any closed walk == signed sum of the defects of its
    # non-tree edges (mod 2pi); tree-edge contributions telescope away
    rng = np.random.default_rng(43)
    for _ in range(10):
        n = 7
        H, _ = generate_sign_problem(n, 0.8, int(rng.integers(0, 2**31)))
        g = build_graph(H)
        parent = {}
        theta = np.zeros(n)
        seen = set()
        from collections import deque
        for root in range(n):
            if root in seen:
                continue
            seen.add(root)
            parent[root] = -1
            dq = deque([root])
            while dq:
                u = dq.popleft()
                for v in g.neighbors(u):
                    if v not in seen:
                        seen.add(v)
                        parent[v] = u
                        theta[v] = theta[u] + g.edge_phase(u, v)
                        dq.append(v)
        # random closed walk by rejection
        for _walk in range(5):
            start = int(rng.integers(0, n))
            walk = [start]
            for _step in range(12):
                nbrs = g.neighbors(walk[-1])
                if not nbrs:
                    break
                walk.append(int(rng.choice(nbrs)))
            while len(walk) > 1 and walk[-1] != start:
                walk.pop()
            if len(walk) < 2:
                continue
            total = sum(g.edge_phase(u, v) for u, v in zip(walk, walk[1:]))
            defect_sum = 0.0
            for u, v in zip(walk, walk[1:]):
                if parent.get(v) != u and parent.get(u) != v:
                    defect_sum += wrap_angle(g.edge_phase(u, v) + theta[u] - theta[v])
            assert abs(wrap_angle(total - defect_sum)) < 1e-9


def test_chordless_square_from_masks():
    g = two_qubit_mask_graph([0b01, 0b10])
    found = enumerate_chordless_cycles(g)
    assert not found.truncated
    assert len(found.cycles) == 1
    assert found.cycles[0].vertices == (0, 1, 3, 2)


def test_chordless_k4_triangles():
    g = two_qubit_mask_graph([0b01, 0b10, 0b11])
    found = enumerate_chordless_cycles(g)
    assert len(found.cycles) == 4
    assert all(len(c.vertices) == 3 for c in found.cycles)


def test_chordless_edgeless():
    g = build_graph(Hamiltonian(4, {(0, 0): 1.0}))
    found = enumerate_chordless_cycles(g)
    assert found.cycles == [] and not found.truncated


def test_chordless_truncation_flag():
    g = two_qubit_mask_graph([0b01, 0b10, 0b11])
    found = enumerate_chordless_cycles(g, max_count=2)
    assert found.truncated
    assert len(found.cycles) == 2


def brute_force_induced_cycles(g):
    """All vertex subsets that induce a connected 2-regular subgraph."""
    n = g.n_vertices
    out = set()
    for size in range(3, n + 1):
        for subset in itertools.combinations(range(n), size):
            sub = set(subset)
            degs = {v: sum(1 for u in g.neighbors(v) if u in sub) for v in subset}
            if any(d != 2 for d in degs.values()):
                continue
            # check connectivity by walking the unique cycle
            start = subset[0]
            prev, cur = None, start
            count = 0
            while True:
                nbrs = [u for u in g.neighbors(cur) if u in sub and u != prev]
                prev, cur = cur, nbrs[0]
                count += 1
                if cur == start:
                    break
            if count == size:
                out.add(frozenset(subset))
    return out


def test_chordless_matches_brute_force():
    rng = np.random.default_rng(47)
    for _ in range(12):
        n = int(rng.integers(5, 11))
        H, _ = generate_spf(n, float(rng.uniform(0.3, 0.9)), int(rng.integers(0, 2**31)))
        g = build_graph(H)
        found = enumerate_chordless_cycles(g, max_len=n)
        assert not found.truncated
        got = {frozenset(c.vertices) for c in found.cycles}
        assert got == brute_force_induced_cycles(g)
        # certified chordless: no edge joins non-consecutive cycle vertices
        for cyc in found.cycles:
            verts = cyc.vertices
            k = len(verts)
            for a in range(k):
                for b in range(a + 2, k):
                    if a == 0 and b == k - 1:
                        continue
                    assert not g.has_edge(verts[a], verts[b])


def test_first_negative_cos_multiple():
    assert first_negative_cos_multiple(0.0, 10**6) is None
    assert first_negative_cos_multiple(math.pi, 100) == 1
    assert first_negative_cos_multiple(math.pi / 3, 100) == 2
    rng = np.random.default_rng(53)
    for _ in range(200):
        x = float(rng.uniform(1e-6, 2 * math.pi - 1e-6))
        m = first_negative_cos_multiple(x, 10**6)
        assert m is not None
        assert math.cos(m * x) < 0
        assert all(math.cos(k * x) >= 0 for k in range(1, m))


def test_cycle_dataclass():
    c = Cycle((0, 1, 2), 0.5)
    assert c.vertices == (0, 1, 2)
