import numpy as np
import pytest

from rialto2d import nn, policies, sim
from rialto2d.scene import scene_signature
from rialto2d.scenes import bundled_scene, inject_distractors


def test_state_encode_dimensions():
    for name, want in (("drawer2d", 22), ("cabinet2d", 22), ("shelf2d", 21)):
        scene = bundled_scene(name)
        assert policies.state_dim(scene) == want
        st = sim.reset(scene, np.random.default_rng(0))
        vec = policies.state_encode(scene, st)
        assert vec.shape == (want,) and vec.dtype == np.float32


def test_state_encode_ignores_distractors():
    scene = bundled_scene("shelf2d")
    st = sim.reset(scene, np.random.default_rng(1))
    s2, st2 = inject_distractors(scene, st, 5, np.random.default_rng(2))
    np.testing.assert_array_equal(policies.state_encode(scene, st),
                                  policies.state_encode(s2, st2))
    assert policies.state_dim(s2) == policies.state_dim(scene)


def test_state_encode_reflects_motion():
    scene = bundled_scene("drawer2d")
    st = sim.reset(scene, np.random.default_rng(0))
    v0 = policies.state_encode(scene, st)
    st2, _, _ = sim.step(scene, st, 0)  # +x
    v1 = policies.state_encode(scene, st2)
    assert v1[-5] == pytest.approx(v0[-5] + 0.03, abs=1e-6)  # ee x moved
    assert not np.array_equal(v0, v1)


def test_state_policy_shapes_and_init_entropy():
    pol = policies.StatePolicy(22, seed=3)
    x = np.random.default_rng(0).normal(size=(7, 22)).astype(np.float32)
    logits, values, _ = pol.forward(x)
    assert logits.shape == (7, 8) and values.shape == (7,)
    # tiny output gain at init: the policy starts near uniform
    ent = nn.Categorical(logits).entropy()
    assert np.all(ent > np.log(8) - 0.01)


def test_state_policy_seed_determinism():
    a = policies.StatePolicy(10, seed=5)
    b = policies.StatePolicy(10, seed=5)
    c = policies.StatePolicy(10, seed=6)
    for pa, pb in zip(a.params(), b.params()):
        np.testing.assert_array_equal(pa, pb)
    assert any(not np.array_equal(pa, pc) for pa, pc in zip(a.params(), c.params()))


def test_act_modes():
    pol = policies.StatePolicy(6, hidden=(16, 16), seed=1)
    x = np.ones(6, dtype=np.float32)
    a1, lp1, v1 = pol.act(x, mode="greedy")
    a2, lp2, v2 = pol.act(x, mode="greedy")
    assert (a1, lp1, v1) == (a2, lp2, v2)
    rng = np.random.default_rng(4)
    draws = {pol.act(x, mode="sample", rng=rng)[0] for _ in range(64)}
    assert len(draws) > 1  # near-uniform init explores
    with pytest.raises(ValueError):
        pol.act(x, mode="sample")
    with pytest.raises(ValueError):
        pol.act(x, mode="argmax")


def _fd_check(policy, inputs, seed, tol=1e-4):
    # scalar loss: weighted sums of logits and values, double precision
    p64 = policy.astype(np.float64)
    rng = np.random.default_rng(seed)
    logits, values, cache = p64.forward(*inputs)
    wl = rng.normal(size=logits.shape)
    wv = rng.normal(size=values.shape)
    grads = p64.backward(cache, wl, wv)
    h = 1e-4
    worst = 0.0
    for p, g in zip(p64.params(), grads):
        it = np.nditer(p, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            orig = p[idx]
            p[idx] = orig + h
            lu, vu, _ = p64.forward(*inputs)
            p[idx] = orig - h
            ld, vd, _ = p64.forward(*inputs)
            p[idx] = orig
            fd = (np.sum((lu - ld) * wl) + np.sum((vu - vd) * wv)) / (2 * h)
            denom = max(abs(fd), 1e-6)
            worst = max(worst, abs(g[idx] - fd) / denom)
            it.iternext()
    assert worst <= tol, f"worst relative error {worst:.3e}"


def test_state_policy_gradients_match_fd():
    pol = policies.StatePolicy(4, hidden=(6, 5), seed=7)
    x = np.random.default_rng(1).normal(size=(3, 4))
    _fd_check(pol, (x,), seed=2)


def test_obs_policy_gradients_match_fd():
    pol = policies.ObsPolicy(point_sizes=(5, 6), embed=4, hidden=(7, 5), seed=9)
    rng = np.random.default_rng(3)
    clouds = rng.normal(size=(2, 9, 2))
    robot = rng.normal(size=(2, 5))
    _fd_check(pol, (clouds, robot), seed=4)


def test_obs_policy_permutation_invariance():
    pol = policies.ObsPolicy(seed=11)
    rng = np.random.default_rng(5)
    cloud = rng.normal(size=(1, 50, 2)).astype(np.float32)
    robot = rng.normal(size=(1, 5)).astype(np.float32)
    l1, v1, _ = pol.forward(cloud, robot)
    perm = rng.permutation(50)
    l2, v2, _ = pol.forward(cloud[:, perm], robot)
    np.testing.assert_allclose(l1, l2, atol=1e-6)
    np.testing.assert_allclose(v1, v2, atol=1e-6)


def test_obs_policy_batch_consistency():
    pol = policies.ObsPolicy(point_sizes=(8, 12), embed=6, hidden=(10, 10), seed=2)
    rng = np.random.default_rng(6)
    clouds = rng.normal(size=(4, 17, 2)).astype(np.float32)
    robot = rng.normal(size=(4, 5)).astype(np.float32)
    lb, vb, _ = pol.forward(clouds, robot)
    for i in range(4):
        li, vi, _ = pol.forward(clouds[i][None], robot[i][None])
        np.testing.assert_allclose(lb[i], li[0], rtol=1e-5, atol=1e-6)
        np.testing.assert_allclose(vb[i], vi[0], rtol=1e-5, atol=1e-5)


def test_policy_checkpoint_round_trip_state(tmp_path):
    scene = bundled_scene("drawer2d")
    sig = scene_signature(scene)
    pol = policies.StatePolicy(22, seed=13)
    path = tmp_path / "teacher.policy"
    policies.save_policy(path, pol, sig)
    back, sig2 = policies.load_policy(path)
    assert sig2 == sig
    assert back.kind == "state" and back.in_dim == 22
    assert back.hidden == pol.hidden and back.n_actions == 8
    for a, b in zip(pol.params(), back.params()):
        np.testing.assert_array_equal(a, b)
    x = np.random.default_rng(0).normal(size=(3, 22)).astype(np.float32)
    l1, v1, _ = pol.forward(x)
    l2, v2, _ = back.forward(x)
    np.testing.assert_array_equal(l1, l2)
    np.testing.assert_array_equal(v1, v2)


def test_policy_checkpoint_round_trip_obs(tmp_path):
    scene = bundled_scene("shelf2d")
    sig = scene_signature(scene)
    pol = policies.ObsPolicy(seed=17)
    path = tmp_path / "student.policy"
    policies.save_policy(path, pol, sig)
    back, _ = policies.load_policy(path, expect_sig=sig)
    assert back.kind == "obs"
    assert back.point_sizes == (64, 128) and back.embed == 128
    for a, b in zip(pol.params(), back.params()):
        np.testing.assert_array_equal(a, b)


def test_policy_checkpoint_signature_mismatch(tmp_path):
    pol = policies.StatePolicy(8, hidden=(8, 8), seed=0)
    path = tmp_path / "p.policy"
    policies.save_policy(path, pol, scene_signature(bundled_scene("drawer2d")))
    with pytest.raises(ValueError) as ei:
        policies.load_policy(path, expect_sig=scene_signature(bundled_scene("shelf2d")))
    assert "signature" in str(ei.value)


def test_policy_checkpoint_header_layout(tmp_path):
    pol = policies.StatePolicy(4, hidden=(3, 3), seed=0)
    sig = bytes(range(32))
    path = tmp_path / "p.policy"
    policies.save_policy(path, pol, sig)
    raw = path.read_bytes()
    assert raw[:9] == b"RIALTO-NN"
    assert int.from_bytes(raw[9:13], "little") == 1
    assert raw[13] == policies.STATE_KIND
    assert raw[14:46] == sig


def test_copy_set_params():
    pol = policies.StatePolicy(5, hidden=(6, 6), seed=1)
    snap = policies.copy_params(pol)
    for p in pol.params():
        p += 1.0
    assert any(not np.array_equal(a, b) for a, b in zip(snap, pol.params()))
    policies.set_params(pol, snap)
    for a, b in zip(snap, pol.params()):
        np.testing.assert_array_equal(a, b)
