from collections import deque

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_topology, two_node
from leaderselect import (
    EpochSequence,
    GenerationError,
    LeaderConfig,
    LinkFailureModel,
    Topology,
    WaypointModel,
    build_laplacian,
    gen_geometric,
    gen_link_failures,
    gen_waypoint,
    is_strongly_connected,
    load_json,
    save_json,
)


def bfs_strongly_connected(topo):
    # one search from every node
    n = topo.n
    for s in range(n):
        seen = {s}
        q = deque([s])
        while q:
            u = q.popleft()
            for v in np.flatnonzero(topo.adjacency[u]):
                if v not in seen:
                    seen.add(int(v))
                    q.append(int(v))
        if len(seen) < n:
            return False
    return True


def test_laplacian_two_node():
    L = build_laplacian(two_node(), {1})
    np.testing.assert_array_equal(L, [[1, -1], [0, 0]])


def test_laplacian_all_leaders_is_zero(rng):
    topo = random_topology(rng, 6)
    assert not build_laplacian(topo, range(6)).any()


def test_laplacian_directed_cycle():
    topo = Topology.from_edges(3, {(0, 1): 1.0, (1, 2): 1.0, (2, 0): 1.0})
    np.testing.assert_array_equal(build_laplacian(topo), [[1, -1, 0], [0, 1, -1], [-1, 0, 1]])


def test_laplacian_rejects_bad_leader(rng):
    with pytest.raises(ValueError):
        build_laplacian(random_topology(rng, 4), {4})


def test_topology_rejects_negative_weight_and_self_loop():
    with pytest.raises(ValueError):
        Topology.from_edges(2, {(0, 1): -1.0})
    with pytest.raises(ValueError):
        Topology.from_edges(2, {(0, 0): 1.0})


def test_topology_is_immutable(rng):
    topo = random_topology(rng, 4)
    with pytest.raises(ValueError):
        topo.weights[0, 1] = 3.0


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 10), k=st.integers(0, 10))
def test_laplacian_invariants(seed, n, k):
    rng = np.random.default_rng(seed)
    topo = random_topology(rng, n, connected=False) if n > 1 else Topology.from_edges(1, {})
    S = set(rng.choice(n, min(k, n), replace=False).tolist())
    L = build_laplacian(topo, S)
    np.testing.assert_allclose(L.sum(axis=1), 0.0, atol=1e-12)
    off = L - np.diag(np.diag(L))
    assert (off <= 0).all()
    zero_rows = {i for i in range(n) if not L[i].any()}
    assert S <= zero_rows
    # a non-leader row is zero only when the node has no out-links
    assert zero_rows - S == {i for i in range(n) if i not in S and topo.out_degree()[i] == 0}


def test_strong_connectivity_small():
    assert is_strongly_connected(two_node())
    assert not is_strongly_connected(Topology.from_edges(2, {(0, 1): 1.0}))


def test_strong_connectivity_matches_bfs(rng):
    for _ in range(100):
        topo = random_topology(rng, int(rng.integers(2, 12)), density=rng.uniform(0.05, 0.4), connected=False)
        assert is_strongly_connected(topo) == bfs_strongly_connected(topo)


def test_geometric_default_density_connected_and_deterministic():
    a = gen_geometric(100, 1000.0, 300.0, (0.0, 50.0), np.random.default_rng(7))
    b = gen_geometric(100, 1000.0, 300.0, (0.0, 50.0), np.random.default_rng(7))
    assert bfs_strongly_connected(a)
    assert a == b
    np.testing.assert_array_equal(a.adjacency, a.adjacency.T)
    assert a.out_degree().mean() == b.out_degree().mean()


def test_geometric_tiny_area_complete():
    topo = gen_geometric(2, 10.0, 20.0, (0.0, 50.0), np.random.default_rng(0))
    assert topo.adjacency[0, 1] and topo.adjacency[1, 0]


def test_geometric_zero_range_fails():
    with pytest.raises(GenerationError):
        gen_geometric(3, 10.0, 0.0, (0.0, 50.0), np.random.default_rng(0))


def test_geometric_retry_budget_reported():
    with pytest.raises(GenerationError, match="5 attempts"):
        gen_geometric(30, 1000.0, 1.0, (0.0, 50.0), np.random.default_rng(0), max_attempts=5)


def test_geometric_symmetric_weights():
    topo = gen_geometric(20, 1000.0, 400.0, (0.0, 50.0), np.random.default_rng(1), symmetric=True)
    np.testing.assert_array_equal(topo.weights, topo.weights.T)


def test_link_failures_zero_prob_keeps_base(rng):
    base = gen_geometric(15, 1000.0, 400.0, (0.0, 50.0), rng)
    seq = gen_link_failures(base, 0.0, 5, 0.1, rng)
    assert all(topo == base for topo in seq.topologies)


def test_link_failures_one_epoch(rng):
    base = gen_geometric(10, 1000.0, 400.0, (0.0, 50.0), rng)
    assert gen_link_failures(base, 0.1, 1, 0.1, rng).r == 1


def test_link_failures_survival_rate(rng):
    base = gen_geometric(30, 1000.0, 400.0, (0.0, 50.0), rng)
    links = np.triu(base.adjacency, 1).sum()
    seq = gen_link_failures(base, 0.15, 400, 0.1, rng)
    alive = np.array([np.triu(t.adjacency, 1).sum() for t in seq.topologies])
    frac = alive.sum() / (links * seq.r)
    se = np.sqrt(0.15 * 0.85 / (links * seq.r))
    assert abs(frac - 0.85) < 3 * se
    # both directions fail together
    assert all(np.array_equal(t.adjacency, t.adjacency.T) for t in seq.topologies)


def test_link_failure_prob_range(rng):
    base = gen_geometric(5, 100.0, 400.0, (0.0, 50.0), rng)
    with pytest.raises(ValueError):
        LinkFailureModel(base, 1.0)


def test_waypoint_static_when_no_motion(rng):
    seq = gen_waypoint(20, 1000.0, 300.0, 0.0, (0.0, 0.0), 5, 1.0, rng)
    first = seq.topologies[0]
    assert all(t == first for t in seq.topologies)


def test_waypoint_complete_when_range_covers_area(rng):
    seq = gen_waypoint(2, 100.0, 1000.0, 100.0, (0.0, 50.0), 4, 1.0, rng)
    assert all(t.adjacency[0, 1] and t.adjacency[1, 0] for t in seq.topologies)


def test_waypoint_overlap_strictly_between(rng):
    overlaps = []
    for seed in range(50):
        seq = gen_waypoint(100, 1000.0, 300.0, 100.0, (0.0, 50.0), 8, 1.0, np.random.default_rng(seed))
        for a, b in zip(seq.topologies, seq.topologies[1:]):
            ea, eb = a.adjacency, b.adjacency
            overlaps.append((ea & eb).sum() / max((ea | eb).sum(), 1))
    m = np.mean(overlaps)
    assert 0.0 < m < 1.0


def test_waypoint_reference_stays_in_area(rng):
    model = WaypointModel.random(5, 100.0, 30.0, 1000.0, (0.0, 5.0), rng)
    ref = np.array([50.0, 50.0])
    for _ in range(200):
        ref = model.step_reference(ref, 0.37, rng)
        assert ((0 <= ref) & (ref <= 100.0)).all()


def test_generators_deterministic():
    a = gen_waypoint(30, 1000.0, 300.0, 100.0, (0.0, 50.0), 4, 1.0, np.random.default_rng(3))
    b = gen_waypoint(30, 1000.0, 300.0, 100.0, (0.0, 50.0), 4, 1.0, np.random.default_rng(3))
    assert all(x == y for x, y in zip(a.topologies, b.topologies))


def test_leader_config_validation():
    with pytest.raises(ValueError):
        LeaderConfig((0, 0), {0: 1.0})
    with pytest.raises(ValueError):
        LeaderConfig((0, 1), {0: 1.0})
    cfg = LeaderConfig((0, 2), {0: 3.0, 2: -1.0})
    assert cfg.hull == (-1.0, 3.0)
    with pytest.raises(ValueError):
        cfg.validate(2)


def test_epoch_sequence_validation(rng):
    t1 = random_topology(rng, 3)
    with pytest.raises(ValueError):
        EpochSequence(())
    with pytest.raises(ValueError):
        EpochSequence(((t1, 0.0),))
    with pytest.raises(ValueError):
        EpochSequence(((t1, 1.0), (random_topology(rng, 4), 1.0)))
    seq = EpochSequence(((t1, 1.0), (t1, 2.0)), start_time=0.5)
    assert seq.gamma == 1.0
    np.testing.assert_allclose(seq.switch_times, [0.5, 1.5, 3.5])
    assert seq.duration == 3.0


def test_json_round_trip(tmp_path, rng):
    topo = gen_geometric(12, 1000.0, 400.0, (0.0, 50.0), rng)
    save_json(topo, tmp_path / "t.json")
    assert load_json(tmp_path / "t.json") == topo
    seq = gen_link_failures(topo, 0.2, 3, 0.25, rng)
    save_json(seq, tmp_path / "s.json")
    back = load_json(tmp_path / "s.json")
    assert back.r == 3 and all(a == b for a, b in zip(back.topologies, seq.topologies))
    assert list(back.dwells) == [0.25] * 3


def test_json_is_one_based(tmp_path):
    save_json(Topology.from_edges(2, {(0, 1): 2.0}), tmp_path / "t.json")
    import json

    doc = json.loads((tmp_path / "t.json").read_text())
    assert doc["edges"] == [{"source": 1, "target": 2, "weight": 2.0}]
