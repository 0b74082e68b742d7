import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lpbfspatter import segment as sg
from lpbfspatter import track as tr
from lpbfspatter.track import TrackerConfig
from oracles import exhaustive_assignment


def blob(c, u=(0.0, 0.0, 0.0), bid=0):
    u = np.asarray(u, dtype=np.float64)
    return sg.Blob(id=bid, cells=np.array([0]), n_cells=1, volume=1.0,
                   centroid=np.asarray(c, dtype=np.float64), mean_u=u,
                   speed=float(np.linalg.norm(u)), mean_T=2000.0, mean_rho=7000.0,
                   mean_p=1e5)


def test_prediction_cases(make):
    assert np.array_equal(tr.predict_positions([blob((1, 2, 3))], 5.0), [[1, 2, 3]])
    assert tr.predict_positions([blob((0, 0, 0), (10, 0, 0))], 5.0).tolist() == [[50, 0, 0]]
    u = np.zeros((1, 1, 2, 3))
    u[0, 0, :, 0] = [1.0, 3.0]
    b = sg.blob_properties(make(np.zeros((1, 1, 2)), u=u), [0, 1])
    pred = tr.predict_positions([b], 5.0)
    assert pred[0, 0] - b.centroid[0] == pytest.approx(10.0, abs=1e-12)
    with pytest.raises(tr.TrackingError):
        tr.predict_positions([b], 0.0)


def test_config_validation():
    with pytest.raises(tr.TrackingError):
        TrackerConfig(dt=0)
    with pytest.raises(tr.TrackingError):
        TrackerConfig(max_dist=-1)


def test_link_basic_cases():
    cfg = TrackerConfig(dt=5.0, max_dist=40.0)
    r = tr.link_frames([blob((0, 0, 0))], [blob((0, 0, 0))], cfg)
    assert r.continued == {0: 0} and r.terminated == [] and r.born == []
    r = tr.link_frames([blob((0, 0, 0))], [blob((50, 0, 0))], cfg)
    assert r.continued == {} and r.terminated == [0] and r.born == [0]


def test_greedy_conflict_closer_wins():
    cfg = TrackerConfig(dt=1.0, max_dist=20.0)
    prev = [blob((9, 0, 0)), blob((-5, 0, 0))]
    r = tr.link_frames(prev, [blob((0, 0, 0))], cfg)
    assert r.continued == {1: 0} and r.terminated == [0]
    assert exhaustive_assignment([[9, 0, 0], [-5, 0, 0]], [[0, 0, 0]], 20.0) == {1: 0}


@given(st.integers(0, 6), st.integers(0, 6), st.integers(0, 10**6))
def test_index_equals_brute_force_and_conservation(n_prev, n_next, seed):
    rng = np.random.default_rng(seed)
    prev = [blob(rng.uniform(0, 100, 3), rng.normal(0, 3, 3)) for _ in range(n_prev)]
    nxt = [blob(rng.uniform(0, 100, 3)) for _ in range(n_next)]
    cfg = TrackerConfig(dt=2.0, max_dist=30.0)
    a = tr.link_frames(prev, nxt, cfg, use_index=True)
    b = tr.link_frames(prev, nxt, cfg, use_index=False)
    assert a == b
    assert len(a.continued) + len(a.terminated) == n_prev
    assert len(a.continued) + len(a.born) == n_next
    pred = tr.predict_positions(prev, cfg.dt)
    for p, n in a.continued.items():
        assert np.linalg.norm(pred[p] - nxt[n].centroid) <= cfg.max_dist


def test_index_equals_brute_force_many_pairs():
    rng = np.random.default_rng(7)
    cfg = TrackerConfig(dt=5.0, max_dist=25.0)
    for _ in range(1000):
        prev = [blob(rng.uniform(0, 120, 3), rng.normal(0, 2, 3))
                for _ in range(rng.integers(0, 8))]
        nxt = [blob(rng.uniform(0, 120, 3)) for _ in range(rng.integers(0, 8))]
        assert tr.link_frames(prev, nxt, cfg) == tr.link_frames(prev, nxt, cfg, use_index=False)


@given(st.integers(0, 10**6))
def test_greedy_equals_exhaustive_when_sparse(seed):
    rng = np.random.default_rng(seed)
    # well separated targets with small jitter: greedy must be optimal
    targets = np.array([[60.0 * n, 0, 0] for n in range(5)])
    pred = targets + rng.uniform(-5, 5, targets.shape)
    keep = rng.random(5) < 0.8
    prev = [blob(p) for p in pred]
    nxt = [blob(t) for t, k in zip(targets, keep) if k]
    cfg = TrackerConfig(dt=1.0, max_dist=25.0)
    r = tr.link_frames(prev, nxt, cfg)
    assert r.continued == exhaustive_assignment(pred, [b.centroid for b in nxt], 25.0)


def test_update_trajectories_lifecycle():
    b3 = [blob((n * 100.0, 0, 0)) for n in range(3)]
    state = tr.update_trajectories([], tr.LinkResult({}, [], [0, 1, 2]), b3, 0.0)
    assert [t.id for t in state] == [0, 1, 2]
    assert all(t.status == "active" and len(t.observations) == 1 for t in state)
    link = tr.LinkResult({0: 0, 2: 1}, [1], [])
    state = tr.update_trajectories(state, link, b3[:2], 5.0)
    assert state[1].status == "terminated" and len(state[1].observations) == 1
    assert len(state[0].observations) == 2 and state[2].current == 1
    with pytest.raises(tr.TrackingError):
        tr.update_trajectories(state, tr.LinkResult({7: 0}, [], []), b3, 10.0)
    with pytest.raises(tr.TrackingError):
        tr.update_trajectories(state, tr.LinkResult({}, [0, 2], [9]), b3, 10.0)


def test_ballistic_run_times_and_speed():
    dt = 5.0
    vel = np.array([[4.0, 0.0, 2.0], [-3.0, 1.0, 3.0], [0.0, -2.0, 5.0]])
    start = np.array([[0.0, 0, 0], [200.0, 0, 0], [0.0, 200.0, 0]])
    frames, times = [], []
    for f in range(10):
        frames.append([blob(s + v * dt * f, v) for s, v in zip(start, vel)])
        times.append(dt * f)
    trajs, links = tr.track(frames, times, TrackerConfig(dt=dt, max_dist=25.0))
    assert len(trajs) == 3 and len(links) == 9
    for t, v in zip(trajs, vel):
        assert np.allclose(np.diff(t.times), dt)
        k = tr.kinematics(t)
        assert np.allclose(k["speed"], np.linalg.norm(v), rtol=1e-9)


def test_kinematics_cases():
    t = tr.Trajectory(0, ((0.0, blob((0, 0, 0))), (5.0, blob((50, 0, 0)))))
    k = tr.kinematics(t)
    assert k["speed"].tolist() == [10.0] and k["direction"].tolist() == [[1.0, 0.0, 0.0]]
    still = tr.kinematics(tr.Trajectory(0, ((0.0, blob((1, 1, 1))), (5.0, blob((1, 1, 1))))))
    assert still["speed"].tolist() == [0.0] and still["undefined"].tolist() == [True]
    with pytest.raises(tr.TrackingError):
        tr.kinematics(tr.Trajectory(0, ((0.0, blob((0, 0, 0))),)))


def test_track_errors():
    with pytest.raises(tr.TrackingError):
        tr.track([[]], [0.0, 1.0], TrackerConfig())
    assert tr.track([], [], TrackerConfig()) == ([], [])
