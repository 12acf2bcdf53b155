import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pseudolidar.detector import (MLP, Batch, NumericalError, RobustLossParams, TrainConfig, batch_loss,
                                  ce_logits, concat_batches, detect, finetune_online, forward, frame_samples,
                                  from_beam_frame, loss_ce, loss_partial_huber, lr_at, mixup_pairs,
                                  partial_huber_base, partial_huber_base_grad, partial_huber_logits, predict,
                                  sigmoid, to_beam_frame, train, train_step, vote_and_group, window_features)
from pseudolidar.pseudo_label import IGNORE, NEG, POS, PointLabels, labels_from_centers
from pseudolidar.synth_world import Person, Scene, SensorConfig, raycast_scan

from conftest import make_scan


def central_diff(f, x, h=1e-6):
    return (f(x + h) - f(x - h)) / (2 * h)


def rel_err(a, b):
    return np.abs(a - b) / np.maximum(1e-8, np.abs(a) + np.abs(b))


# --------------------------------------------------------------------------
# features and forward pass


@given(st.lists(st.floats(0.1, 30.0), min_size=3, max_size=60))
def test_window_feature_invariants(ranges):
    f = window_features(np.asarray(ranges), 17)
    assert f.shape == (len(ranges), 17)
    assert np.all(f >= -1) and np.all(f <= 1)
    assert np.all(f[:, 8] == 0)


def test_window_wraps_around():
    r = np.array([1.0, 2.0, 3.0, 4.0, 5.5])
    f = window_features(r, 3)
    np.testing.assert_allclose(f[0], [1.0, 0.0, (2.0 - 1.0) / 1.5])
    np.testing.assert_allclose(f[4], [(4.0 - 5.5) / 1.5, 0.0, -1.0])
    with pytest.raises(ValueError):
        window_features(r, 4)


def test_beam_frame_round_trip():
    rng = np.random.default_rng(0)
    v = rng.normal(size=(50, 2))
    phi = rng.uniform(-3, 3, 50)
    np.testing.assert_allclose(from_beam_frame(to_beam_frame(v, phi), phi), v, atol=1e-12)
    # along-beam offset moves the point outwards along its own beam
    np.testing.assert_allclose(from_beam_frame([[1.0, 0.0]], np.array([math.pi / 2])), [[0.0, 1.0]], atol=1e-12)


def test_zero_model_outputs():
    m = MLP(zero=True)
    p, off = forward(m, np.random.default_rng(0).uniform(-1, 1, (10, 17)))
    assert np.all(p == 0.5) and np.all(off == 0.0)


@given(st.integers(0, 1000))
def test_probabilities_inside_unit_interval(seed):
    m = MLP(seed=seed)
    x = np.random.default_rng(seed).uniform(-1, 1, (20, 17)) * 50
    p, _ = forward(m, x)
    assert np.all((p >= 0) & (p <= 1))
    assert np.all(np.isfinite(p))


def test_sigmoid_stable():
    z = np.array([-1000.0, -30.0, 0.0, 30.0, 1000.0])
    p = sigmoid(z)
    assert np.all(np.isfinite(p)) and p[2] == 0.5


# --------------------------------------------------------------------------
# losses


def test_loss_examples():
    assert loss_ce(1 - 1e-15, 1.0) == pytest.approx(0.0, abs=1e-12)
    assert loss_partial_huber(1 - 1e-15, 1.0, 5.0) == pytest.approx(0.0, abs=1e-12)
    assert partial_huber_base(1.0, 5.0) == 0.0
    assert partial_huber_base(0.2, 5.0) == pytest.approx(math.log(5))
    assert -math.log(0.2) == pytest.approx(math.log(5))
    assert partial_huber_base(0.1, 5.0) == pytest.approx(2.1094379124341003, abs=1e-12)
    assert loss_partial_huber(0.1, 1.0, 5.0) == pytest.approx(2.1094379124341003)
    # negative class uses 1 - p
    assert loss_partial_huber(0.9, 0.0, 5.0) == pytest.approx(2.1094379124341003)


@pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.2, np.nan])
def test_loss_rejects_probabilities_outside_open_interval(p):
    with pytest.raises(ValueError):
        loss_ce(p, 1.0)
    with pytest.raises(ValueError):
        loss_partial_huber(p, 1.0)


def test_continuity_at_branch_point():
    for tau in (2.0, 5.0, 17.0):
        b = 1.0 / tau
        lin = -tau * b + math.log(tau) + 1.0
        assert abs(lin - (-math.log(b))) < 1e-9
        left = partial_huber_base(b - 1e-12, tau)
        right = partial_huber_base(b + 1e-12, tau)
        assert abs(left - right) < 1e-9
        # derivatives agree too
        assert partial_huber_base_grad(b, tau) == pytest.approx(-tau)
        assert -1.0 / b == pytest.approx(-tau)


@given(st.floats(1e-6, 1.0), st.floats(1.01, 100.0))
def test_partial_huber_nonnegative_and_clipped(py, tau):
    assert partial_huber_base(py, tau) >= -1e-12
    assert abs(partial_huber_base_grad(py, tau)) <= tau + 1e-9


def test_large_tau_matches_ce():
    py = np.linspace(0.01, 1.0, 2000)
    assert np.max(np.abs(partial_huber_base(py, 1e6) - (-np.log(py)))) < 1e-5


def test_logit_losses_agree_with_probability_losses():
    z = np.linspace(-8, 8, 41)
    p = sigmoid(z)
    for y in (0.0, 1.0, 0.3):
        ce, _ = ce_logits(z, y)
        np.testing.assert_allclose(ce, loss_ce(p, y), rtol=1e-9, atol=1e-12)
        ph, _ = partial_huber_logits(z, y, 5.0)
        np.testing.assert_allclose(ph, loss_partial_huber(p, y, 5.0), rtol=1e-9, atol=1e-12)


def test_loss_gradients_match_finite_differences():
    rng = np.random.default_rng(42)
    tau = 5.0
    checked = 0
    while checked < 100:
        z = rng.uniform(-6, 6)
        y = float(rng.choice([0.0, 1.0, rng.uniform()]))
        py = y * sigmoid(np.array([z]))[0] + (1 - y) * (1 - sigmoid(np.array([z]))[0])
        if abs(py - 1 / tau) < 1e-6 or abs(2 * y - 1) < 1e-3:
            continue
        for fn in (lambda a: ce_logits(a, y), lambda a: partial_huber_logits(a, y, tau)):
            num = central_diff(lambda a: fn(np.array([a]))[0][0], z)
            ana = fn(np.array([z]))[1][0]
            assert rel_err(num, ana) < 1e-4 or abs(num - ana) < 1e-9
        # base loss directly in p_y
        num = central_diff(lambda a: partial_huber_base(a, tau), py, 1e-7)
        assert rel_err(num, partial_huber_base_grad(py, tau)) < 1e-4
        checked += 1


def test_network_gradients_match_finite_differences():
    rng = np.random.default_rng(3)
    m = MLP(seed=1)
    n = 12
    x = rng.uniform(-1, 1, (n, 17))
    y = (rng.random(n) < 0.5).astype(float)
    reg = rng.normal(size=(n, 2))
    reg[::3] = np.nan
    batch = Batch(x, y, reg)
    from pseudolidar.detector import _objective
    for params in (RobustLossParams(), RobustLossParams(use_partial_huber=True)):
        _, _, _, grads = _objective(m, batch, params, 0.6, 1.0)
        for _ in range(100):
            k = int(rng.integers(len(m.params)))
            idx = tuple(int(rng.integers(s)) for s in m.params[k].shape)
            orig = m.params[k][idx]

            def f(v):
                m.params[k][idx] = v
                out = _objective(m, batch, params, 0.6, 1.0)[0]
                m.params[k][idx] = orig
                return out

            num = central_diff(f, orig, 1e-6)
            ana = grads[k][idx]
            assert rel_err(num, ana) < 1e-4 or abs(num - ana) < 1e-8, (k, idx, num, ana)


# --------------------------------------------------------------------------
# mixup and updates


def test_mixup_examples():
    rng = np.random.default_rng(0)
    x = np.array([[1.0, 2.0], [3.0, 4.0]])
    y = np.array([1.0, 0.0])
    xm, ym, lam = mixup_pairs(x, y, 0.2, rng, lam=1.0)
    assert np.array_equal(xm, x) and np.array_equal(ym, y) and lam == 1.0
    xm, ym, _ = mixup_pairs(x, y, 0.2, np.random.default_rng(1), lam=0.5)
    assert set(np.round(ym, 12)) <= {0.0, 0.5, 1.0}
    with pytest.raises(ValueError):
        mixup_pairs(x[:1], y[:1], 0.2, rng)


def test_mixup_midpoint_value():
    # partner forced by a two-sample batch where sample 0 pairs with sample 1
    x = np.array([[0.0], [2.0]])
    y = np.array([1.0, 0.0])
    for seed in range(50):
        rng = np.random.default_rng(seed)
        partner = np.random.default_rng(seed).integers(0, 2, size=2)
        xm, ym, _ = mixup_pairs(x, y, 0.2, rng, lam=0.5)
        if partner[0] == 1:
            assert ym[0] == 0.5 and xm[0, 0] == 1.0
            return
    pytest.fail("no seed paired sample 0 with sample 1")


def test_mixup_lambda_mean():
    rng = np.random.default_rng(5)
    x = np.zeros((2, 1))
    lam = np.array([mixup_pairs(x, np.zeros(2), 0.2, rng)[2] for _ in range(100_000)])
    assert abs(lam.mean() - 0.5) < 3 * lam.std() / math.sqrt(len(lam))


def test_robust_params_validation():
    with pytest.raises(ValueError):
        RobustLossParams(tau=1.0)
    with pytest.raises(ValueError):
        RobustLossParams(mixup_alpha=0.0)
    with pytest.raises(ValueError):
        RobustLossParams(mixup_weight=1.5)


def _toy_batch(n=64, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, (n, 17))
    y = (x[:, 7] + x[:, 9] < 0).astype(float)
    reg = np.where(y[:, None] > 0, rng.normal(0, 0.1, (n, 2)), np.nan)
    return Batch(x, y, reg)


def test_ignore_only_batch_is_noop():
    scan = make_scan(np.linspace(1, 5, 100))
    labels = PointLabels(0, np.full(100, IGNORE), np.zeros((100, 2)))
    batch = frame_samples(scan, labels)
    assert len(batch) == 0
    m = MLP(seed=0)
    before = [p.copy() for p in m.params]
    rep = train_step(m, batch, RobustLossParams(use_mixup=True))
    assert rep["updates"] == 0
    assert all(np.array_equal(a, b) for a, b in zip(before, m.params))


def test_zero_mixup_weight_equals_plain_step():
    batch = _toy_batch()
    a, b = MLP(seed=2), MLP(seed=2)
    for _ in range(3):
        train_step(a, batch, RobustLossParams(use_mixup=True, mixup_weight=0.0), np.random.default_rng(0))
        train_step(b, batch, RobustLossParams(use_mixup=False), np.random.default_rng(0))
    for pa, pb in zip(a.params, b.params):
        assert np.max(np.abs(pa - pb)) <= 1e-12


def test_mixup_makes_two_updates():
    m = MLP(seed=2)
    rep = train_step(m, _toy_batch(), RobustLossParams(use_mixup=True), np.random.default_rng(0))
    assert rep["updates"] == 2 and m.opt.t == 2 and rep["l_mixup"] > 0


def test_single_step_descends():
    batch = _toy_batch(1, seed=4)
    for params in (RobustLossParams(), RobustLossParams(use_partial_huber=True)):
        m = MLP(seed=0)
        before = batch_loss(m, batch, params)
        train_step(m, batch, params, lr=1e-4)
        assert batch_loss(m, batch, params) < before


def test_nan_loss_aborts():
    m = MLP(seed=0)
    batch = _toy_batch()
    m.params[0][0, 0] = np.nan
    with pytest.raises(NumericalError, match="non-finite"):
        train_step(m, batch)


def test_lr_schedule():
    cfg = TrainConfig(epochs=4, lr=1e-3, lr_final=1e-6)
    total = 100
    assert lr_at(cfg, 0, total) == 1e-3
    assert lr_at(cfg, 24, total) == 1e-3
    assert lr_at(cfg, 99, total) == pytest.approx(1e-6)
    lrs = [lr_at(cfg, s, total) for s in range(total)]
    assert all(a >= b for a, b in zip(lrs, lrs[1:]))
    mid = TrainConfig(decay_start=0.5)
    assert lr_at(mid, 49, total) == 1e-3 and lr_at(mid, 51, total) < 1e-3


# --------------------------------------------------------------------------
# grouping


def test_vote_grouping_examples():
    assert vote_and_group(np.array([0.1, 0.2]), np.zeros((2, 2))).shape == (0, 3)
    det = vote_and_group(np.array([0.9, 0.8]), np.array([[1.0, 0.0], [1.1, 0.0]]))
    assert det.shape == (1, 3)
    assert det[0, 2] == 0.9
    np.testing.assert_allclose(det[0, :2], [(0.9 * 1.0 + 0.8 * 1.1) / 1.7, 0.0])
    det = vote_and_group(np.array([0.9, 0.8]), np.array([[1.0, 0.0], [3.0, 0.0]]))
    assert det.shape == (2, 3) and det[0, 2] == 0.9 and det[1, 2] == 0.8


@given(st.lists(st.tuples(st.floats(0, 1), st.floats(-5, 5), st.floats(-5, 5)), max_size=30), st.randoms())
def test_vote_grouping_order_invariant(votes, rnd):
    v = np.array(votes, dtype=float).reshape(-1, 3)
    perm = list(range(len(v)))
    rnd.shuffle(perm)
    a = vote_and_group(v[:, 0], v[:, 1:])
    b = vote_and_group(v[perm, 0], v[perm, 1:])
    assert np.array_equal(a, b)
    if len(a):
        assert np.all(np.diff(a[:, 2]) <= 0)


# --------------------------------------------------------------------------
# training drivers


def _person_scan(d, y=0.0, wall=9.0, seed=0):
    person = Person(np.array([[d, y], [d + 1e-4, y]]), 0.0, 0.0)
    scene = Scene(np.array([[wall, -30, wall, 30]]), np.zeros((0, 3)), [person], np.zeros(3), np.zeros(3))
    sensor = SensorConfig(range_noise_sigma=0.01)
    scan, owner = raycast_scan(scene, np.zeros(3), sensor, np.random.default_rng(seed), seed)
    return scan, owner, scene


def _toy_frames(n, seed):
    rng = np.random.default_rng(seed)
    frames = []
    for i in range(n):
        d, y, wall = rng.uniform(2, 6), rng.uniform(-1, 1), rng.uniform(7, 10)
        scan, _, _ = _person_scan(d, y, wall, seed * 1000 + i)
        frames.append((scan, labels_from_centers(scan, [(d, y)])))
    return frames


@pytest.mark.slow
def test_toy_model_recognises_leg_pair():
    m = MLP(seed=0)
    train(m, _toy_frames(40, 1), TrainConfig(epochs=30, batch_size=1, seed=0))
    scan, owner, scene = _person_scan(4.0, 0.2, 8.5, seed=999)
    p, centers = predict(m, scan)
    legs = np.flatnonzero(owner >= scene.first_leg_id)
    # middle beam of the first leg
    mid = legs[len(legs) // 4]
    assert p[mid] > 0.9
    det = detect(m, scan)
    assert np.hypot(det[0, 0] - 4.0, det[0, 1] - 0.2) < 0.3


def test_training_is_bit_deterministic():
    frames = _toy_frames(6, 2)
    a, b = MLP(seed=5), MLP(seed=5)
    cfg = TrainConfig(epochs=2, batch_size=2, seed=3)
    params = RobustLossParams(use_mixup=True, use_partial_huber=True)
    train(a, frames, cfg, params)
    train(b, frames, cfg, params)
    assert all(np.array_equal(x, y) for x, y in zip(a.params, b.params))
    assert a.to_dict() == b.to_dict()


def test_model_json_round_trip(tmp_path):
    m = MLP(seed=1)
    train(m, _toy_frames(2, 0), TrainConfig(epochs=1, batch_size=2))
    m.save(tmp_path / "m.json")
    back = MLP.load(tmp_path / "m.json")
    assert all(np.array_equal(x, y) for x, y in zip(m.params, back.params))
    assert back.provenance["seed"] == 0 and len(back.provenance["config_hash"]) == 16
    x = np.random.default_rng(0).uniform(-1, 1, (5, 17))
    assert np.array_equal(forward(m, x)[0], forward(back, x)[0])
    d = m.to_dict()
    d["layers"][0]["shape"] = [16, 64]
    with pytest.raises(ValueError):
        MLP.from_dict(d)


def test_finetune_trajectory_endpoints():
    frames = _toy_frames(4, 3)
    seqs = [frames[:2], frames[2:]]
    scans = [s for s, _ in frames]
    gts = [lab.centers for _, lab in frames]
    m = MLP(seed=0)
    traj = finetune_online(m, seqs, scans, gts, "sequence", track_every=1000, batch_size=1)
    assert [r["step"] for r in traj] == [0, 4]
    traj = finetune_online(MLP(seed=0), seqs, scans, gts, "global", track_every=1, batch_size=1)
    assert [r["step"] for r in traj] == [0, 1, 2, 3, 4]
    with pytest.raises(ValueError):
        finetune_online(m, seqs, scans, gts, "random")


def test_concat_and_frame_samples():
    scan = make_scan(np.linspace(1, 5, 50))
    cls = np.full(50, NEG, dtype=np.int8)
    cls[:5] = IGNORE
    cls[10:13] = POS
    reg = np.full((50, 2), np.nan)
    reg[10:13] = 0.1
    b = frame_samples(scan, PointLabels(0, cls, reg))
    assert len(b) == 45 and b.y.sum() == 3 and b.has_reg.sum() == 3
    both = concat_batches([b, b])
    assert len(both) == 90
    with pytest.raises(ValueError):
        frame_samples(make_scan(np.ones(10)), PointLabels(0, cls, reg))
