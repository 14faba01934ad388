import numpy as np
import pytest

from lmapf.grid import DELTAS, MOVE_DIRECTIONS
from lmapf.guidance import GuidanceGraph
from lmapf.policies import (EPS_WEIGHT, GuidancePolicy, cnn_forward,
                            cnn_param_count, cnn_policy, contra_outflow_policy,
                            contra_outflow_weight, normalize_channels,
                            reduced_quadratic_policy, reduced_quadratic_weight,
                            reduced_theta_matching_contra_outflow, static_forward,
                            static_policy, window_observation, wq_forward,
                            wq_param_count, wq_policy,
                            wq_theta_matching_contra_outflow)

from conftest import make_map, random_usage_field
from oracles import opposing_flow_reference


def test_parameter_counts():
    assert wq_param_count(5) == 560
    assert reduced_quadratic_policy().param_count == 48
    assert contra_outflow_policy().param_count == 0
    # 6->40 3x3 conv + affine, 40->16 1x1 + affine, 16->5 1x1 linear
    assert cnn_param_count() == 3053
    assert abs(cnn_param_count() - 3119) / 3119 < 0.05


def test_cnn_zero_theta_constant_output(empty8):
    pol = cnn_policy()
    obs = np.random.default_rng(0).uniform(size=(6, 8, 8))
    out = cnn_forward(pol, obs)
    assert out.shape == (5, 8, 8)
    assert np.all(out == 0.0)


def test_cnn_translation_equivariance():
    rng = np.random.default_rng(1)
    pol = cnn_policy().with_theta(rng.normal(size=cnn_param_count()) * 0.3)
    obs = np.zeros((6, 12, 12))
    obs[:, 4:7, 3:6] = rng.uniform(size=(6, 3, 3))
    shifted = np.roll(obs, 1, axis=2)
    out = cnn_forward(pol, obs)
    out_shifted = cnn_forward(pol, shifted)
    # interior columns shift with the input; 3x3 receptive field keeps
    # everything 2+ columns away from the edges boundary-free
    assert np.allclose(out_shifted[:, :, 3:10], np.roll(out, 1, axis=2)[:, :, 3:10])


def test_cnn_shape_checks():
    pol = cnn_policy()
    with pytest.raises(ValueError):
        cnn_forward(pol, np.zeros((5, 8, 8)))
    with pytest.raises(ValueError):
        cnn_forward(wq_policy(), np.zeros((6, 8, 8)))


def test_normalize_channels():
    obs = np.stack([np.full((4, 4), 3.0), np.arange(16.0).reshape(4, 4)])
    out = normalize_channels(obs)
    assert np.all(out[0] == 0.0)  # constant channel guard
    assert out[1].min() == 0.0 and out[1].max() == 1.0


def test_wq_zero_cases():
    pol = wq_policy()
    assert np.all(wq_forward(pol, np.zeros((4, 5, 5))) == 0.0)
    rng = np.random.default_rng(2)
    pol2 = pol.with_theta(rng.normal(size=560))
    # homogeneous in the usage: no usage, no score, regardless of theta
    assert np.all(wq_forward(pol2, np.zeros((4, 5, 5))) == 0.0)
    assert wq_forward(pol2, rng.uniform(size=(4, 5, 5))).shape == (4,)


def test_wq_feature_decomposition():
    # one linear coefficient: score equals the matching usage entry
    pol = wq_policy()
    theta = np.zeros((4, 140))
    theta[2, 37] = 1.0
    pol = pol.with_theta(theta.reshape(-1))
    obs = np.zeros((4, 5, 5))
    obs.reshape(4, 25)[37 // 25, 37 % 25] = 4.5
    out = wq_forward(pol, obs)
    assert out[2] == 4.5 and out[0] == out[1] == out[3] == 0.0

    # one horizontal contra product: channels 0 and 2 on adjacent cells
    theta = np.zeros((4, 140))
    theta[0, 100] = 1.0  # first horizontal pair: (0, row0 col0) x (2, row0 col1)
    pol = pol.with_theta(theta.reshape(-1))
    obs = np.zeros((4, 5, 5))
    obs[0, 0, 0] = 3.0
    obs[2, 0, 1] = 2.0
    assert wq_forward(pol, obs)[0] == 6.0


def test_window_observation_padding():
    usage = np.zeros((4, 6, 6))
    usage[0, 2, :] = 1.0
    win = window_observation(usage, (0, 0), window=5)
    assert win.shape == (4, 5, 5)
    # centered at the corner: rows above and cols left are outside the map
    assert np.all(win[:, :2, :] == 0.0) and np.all(win[:, :, :2] == 0.0)
    assert np.all(win[0, 4, 2:] == 1.0)  # map row 2 lands at window row 4
    full = window_observation(usage, (2, 2), window=5)
    assert np.all(full[0, 2, :] == 1.0)


def test_contra_outflow_hand_case():
    grid = make_map("""
        ...
        ...
        ...
    """)
    usage = np.zeros((4, 3, 3))
    u, v = (1, 0), (1, 1)
    usage[0, 1, 0] = 2.0  # opposing flow out of u toward v
    usage[2, 1, 1] = 3.0  # flow out of v back toward u
    usage[1, 1, 1] = 1.0  # extra outflow from v, upward
    got = contra_outflow_weight(usage, grid, u, v)
    # product + opposing flow + half of ALL outflow from v (back-edge included)
    assert got == 2 * 3 + 3 + 0.5 * (3 + 1)


def test_contra_outflow_zero_usage(empty8):
    assert contra_outflow_weight(np.zeros((4, 8, 8)), empty8, (0, 0), (0, 1)) == 0.0
    with pytest.raises(ValueError):
        contra_outflow_weight(np.zeros((4, 8, 8)), empty8, (0, 0), (3, 3))


def test_contra_outflow_matches_reference(empty8, random32):
    rng = np.random.default_rng(7)
    for grid in (empty8, random32):
        usage = random_usage_field(grid, rng)
        nbr = grid.neighbor_table()
        cells = grid.traversable_cells()
        for _ in range(60):
            u = cells[int(rng.integers(len(cells)))]
            opts = [d for d in MOVE_DIRECTIONS if nbr[grid.flat(u), int(d)] >= 0]
            if not opts:
                continue
            d = opts[int(rng.integers(len(opts)))]
            v = (u[0] + DELTAS[d][0], u[1] + DELTAS[d][1])
            assert contra_outflow_weight(usage, grid, u, v) == opposing_flow_reference(usage, grid, u, v)


def test_reduced_quadratic_reproduces_contra_outflow(empty8):
    rng = np.random.default_rng(8)
    pol = reduced_quadratic_policy().with_theta(reduced_theta_matching_contra_outflow())
    nbr = empty8.neighbor_table()
    cells = empty8.traversable_cells()
    for _ in range(50):
        usage = random_usage_field(empty8, rng)
        u = cells[int(rng.integers(len(cells)))]
        opts = [d for d in MOVE_DIRECTIONS if nbr[empty8.flat(u), int(d)] >= 0]
        d = opts[int(rng.integers(len(opts)))]
        v = (u[0] + DELTAS[d][0], u[1] + DELTAS[d][1])
        assert reduced_quadratic_weight(pol, usage, empty8, u, v) == pytest.approx(
            contra_outflow_weight(usage, empty8, u, v), abs=0.0)


def test_reduced_zero_theta(empty8):
    pol = reduced_quadratic_policy()
    usage = random_usage_field(empty8, np.random.default_rng(3))
    assert reduced_quadratic_weight(pol, usage, empty8, (2, 2), (2, 3)) == 0.0


def test_wq_theta_reproduces_contra_outflow(random32):
    rng = np.random.default_rng(0x77AA)
    pol = wq_policy().with_theta(wq_theta_matching_contra_outflow())
    nbr = random32.neighbor_table()
    cells = random32.traversable_cells()
    for _ in range(40):
        usage = random_usage_field(random32, rng)
        u = cells[int(rng.integers(len(cells)))]
        scores = wq_forward(pol, window_observation(usage, u))
        for d in MOVE_DIRECTIONS:
            if nbr[random32.flat(u), int(d)] < 0:
                continue
            v = (u[0] + DELTAS[d][0], u[1] + DELTAS[d][1])
            assert scores[int(d)] == contra_outflow_weight(usage, random32, u, v)


def test_wq_theta_matching_window_guard():
    with pytest.raises(ValueError, match="odd"):
        wq_theta_matching_contra_outflow(4)
    assert wq_theta_matching_contra_outflow(7).shape == (4 * (4 * 49 + 2 * 42),)


def test_static_zero_theta_uniform(empty8):
    pol = static_policy(empty8, with_wait=True)
    w = static_forward(pol, empty8)
    g = GuidanceGraph(empty8, with_wait=True)
    vals = w[g.mask]
    assert np.allclose(vals, vals[0])
    assert vals[0] > 0


def test_static_monotone_single_edge(empty8):
    pol = static_policy(empty8, with_wait=False)
    base = static_forward(pol, empty8)
    theta = np.zeros(pol.param_count)
    theta[17] = 2.0
    bumped = static_forward(pol.with_theta(theta), empty8)
    g = GuidanceGraph(empty8, with_wait=False)
    diff = bumped[g.mask] - base[g.mask]
    assert diff[17] > 0
    assert np.count_nonzero(diff) == 1


def test_static_wrong_map_rejected(empty8, empty16):
    pol = static_policy(empty8, with_wait=True)
    with pytest.raises(ValueError):
        static_forward(pol, empty16)
    other = make_map("\n".join(["@" + "." * 7] + ["." * 8] * 7))
    with pytest.raises(ValueError, match="layout"):
        static_forward(pol, other)


def test_policy_file_roundtrip(tmp_path, empty8):
    rng = np.random.default_rng(4)
    for pol in (wq_policy().with_theta(rng.normal(size=560)),
                static_policy(empty8, with_wait=False).with_theta(
                    rng.normal(size=static_policy(empty8, with_wait=False).param_count))):
        p = tmp_path / f"{pol.arch}.json"
        pol.save(p)
        back = GuidancePolicy.load(p)
        assert back.arch == pol.arch
        assert np.array_equal(back.theta, pol.theta)
        if pol.arch == "static_weights":
            assert np.array_equal(static_forward(back, empty8), static_forward(pol, empty8))


def test_policy_file_size_check(tmp_path):
    pol = wq_policy()
    p = tmp_path / "t.json"
    pol.save(p)
    import json
    payload = json.loads(p.read_text())
    payload["theta"] = payload["theta"][:-1]
    p.write_text(json.dumps(payload))
    with pytest.raises(ValueError, match="560"):
        GuidancePolicy.load(p)


def test_install_floor_positive():
    # periodic installs clamp then offset; floor must stay strictly positive
    out = np.array([-3.0, 0.0, 2.0])
    installed = np.maximum(out, 0.0) + EPS_WEIGHT
    assert (installed > 0).all() and installed[0] == EPS_WEIGHT
