import dataclasses
import json

import numpy as np
import pytest

from rialto2d import bc, distill, geometry as geo, perception, policies, proxy, sim
from rialto2d.perception import AugmentConfig
from rialto2d.scene import scene_signature
from rialto2d.scenes import bundled_scene


def small_cfg(scene):
    return AugmentConfig.for_scene(scene, total=40, robot_points=16)


def constant_action(policy, k, strength=20.0):
    """Pin the actor head so greedy (and nearly every sample) is action k."""
    policy.actor.weights[-1][:] = 0.0
    policy.actor.biases[-1][:] = 0.0
    policy.actor.biases[-1][k] = strength
    return policy


def instant_success(name="drawer2d"):
    """Scene whose success predicate already holds at reset."""
    return dataclasses.replace(bundled_scene(name),
                               success={"kind": "joint_above", "joint": "slide",
                                        "threshold": -1.0})


def constant_label_dataset(label, n, cfg, seed=0):
    rng = np.random.default_rng(seed)
    clouds = [rng.random((cfg.scene_points, 2)).astype(np.float32) for _ in range(n)]
    robot = rng.random((n, 5)).astype(np.float32)
    return bc.DemoDataset.from_arrays(clouds, robot, np.full(n, label), cfg)


# --- seeding -------------------------------------------------------------------

def test_subseed_distinct_and_stable():
    assert distill.subseed(3, 1) == distill.subseed(3, 1)
    assert distill.subseed(3, 1) != distill.subseed(3, 2)
    assert distill.subseed(4, 1) != distill.subseed(3, 1)


# --- mixture sampling ----------------------------------------------------------

def test_mixture_draws_each_source_equally():
    scene = bundled_scene("drawer2d")
    cfg = small_cfg(scene)
    for k in (2, 4):
        sources = [(f"s{i}", constant_label_dataset(i, 5, cfg, seed=i))
                   for i in range(k)]
        mix = distill.MixedDataset(sources)
        _, _, actions = mix.sample(100_000, np.random.default_rng(0))
        frac = np.bincount(actions, minlength=k) / actions.size
        assert np.all(np.abs(frac[:k] - 1.0 / k) <= 0.01), frac


def test_mixture_drops_empty_sources():
    scene = bundled_scene("drawer2d")
    cfg = small_cfg(scene)
    with pytest.raises(ValueError, match="nonempty"):
        distill.MixedDataset([])
    empty = bc.DemoDataset.from_arrays([], np.zeros((0, 5), np.float32),
                                       np.zeros(0, np.int64), cfg)
    mix = distill.MixedDataset([("a", constant_label_dataset(0, 3, cfg)),
                                ("empty", empty),
                                ("b", constant_label_dataset(1, 3, cfg))])
    assert mix.names() == ["a", "b"]
    _, _, actions = mix.sample(64, np.random.default_rng(1))
    assert set(actions) <= {0, 1}


def test_single_source_mixture_trains_bitwise_like_plain_bc():
    scene = bundled_scene("drawer2d")
    cfg = small_cfg(scene)
    demos = bc.collect_demos(scene, 1, seed=3, obs_cfg=cfg)
    plain = bc.DemoDataset(demos, cfg)
    mix = distill.MixedDataset([("only", bc.DemoDataset(demos, cfg))])
    a = policies.ObsPolicy(point_sizes=(8, 16), embed=16, hidden=(32,), seed=5)
    b = policies.ObsPolicy(point_sizes=(8, 16), embed=16, hidden=(32,), seed=5)
    bc_cfg = bc.BcConfig(updates=8, batch=4)
    la = bc.train_bc(a, plain, bc_cfg, np.random.default_rng(9))
    lb = bc.train_bc(b, mix, bc_cfg, np.random.default_rng(9))
    assert la == lb
    for pa, pb in zip(a.params(), b.params()):
        np.testing.assert_array_equal(pa, pb)


# --- inverse distillation -------------------------------------------------------

def test_inverse_distill_requires_sensor_policy():
    scene = bundled_scene("drawer2d")
    teacher = policies.StatePolicy(policies.state_dim(scene), seed=0)
    with pytest.raises(ValueError, match="sensor"):
        distill.inverse_distill(teacher, scene, m=1)


def test_inverse_distill_hopeless_policy_errors_with_rate():
    scene = bundled_scene("drawer2d")
    policy = policies.ObsPolicy(point_sizes=(8, 16), embed=16, hidden=(32,), seed=0)
    with pytest.raises(distill.DistillError, match="rate"):
        distill.inverse_distill(policy, scene, m=2, seed=0, max_attempts=5,
                                obs_cfg=small_cfg(scene))


def test_inverse_distill_keeps_priv_and_replays_to_success():
    scene = instant_success()
    cfg = small_cfg(scene)
    policy = policies.ObsPolicy(point_sizes=(8, 16), embed=16, hidden=(32,), seed=0)
    demos = distill.inverse_distill(policy, scene, m=3, seed=7, obs_cfg=cfg)
    assert len(demos) == 3
    for demo in demos:
        assert demo.success and demo.domain == "sim"
        assert all(s.priv is not None and s.priv.size > 0 for s in demo.steps)
        state = sim.state_from_dict(demo.initial)
        reward = 0.0
        for step in demo.steps:
            np.testing.assert_array_equal(step.priv, policies.state_encode(scene, state))
            state, reward, done = sim.step(scene, state, step.action)
        assert reward == 1.0 and done
    again = distill.inverse_distill(policy, scene, m=3, seed=7, obs_cfg=cfg)
    assert [d.seed for d in again] == [d.seed for d in demos]
    assert [[s.action for s in d.steps] for d in again] == \
           [[s.action for s in d.steps] for d in demos]


# --- source collection ----------------------------------------------------------

def test_sources_respect_counts_and_flags():
    scene = instant_success()
    cfg = small_cfg(scene)
    teacher = constant_action(policies.StatePolicy(policies.state_dim(scene), seed=0), 6)
    counts = distill.SourceCounts(full=2, camera=2, distractor=1, real=2)
    prox, _ = proxy.collect_proxy_demos(scene, proxy.ProxyConfig.zero(), 2, seed=1,
                                        obs_cfg=cfg)
    sources = distill.collect_distill_sources(teacher, scene, counts, prox, seed=0,
                                              obs_cfg=cfg)
    assert {k: len(v) for k, v in sources.items()} == \
           {"full": 2, "camera": 2, "distractor": 1, "real": 2}
    no_real = distill.collect_distill_sources(teacher, scene, counts, None, seed=0,
                                              obs_cfg=cfg)
    assert "real" not in no_real
    lean = distill.collect_distill_sources(
        teacher, scene, dataclasses.replace(counts, distractor=0, full=0), prox,
        seed=0, obs_cfg=cfg)
    assert set(lean) == {"camera", "real"}


def test_full_source_clouds_are_occlusion_free():
    scene = bundled_scene("drawer2d")
    cfg = AugmentConfig.for_scene(scene, total=400, robot_points=200)
    teacher = constant_action(policies.StatePolicy(policies.state_dim(scene), seed=0),
                              sim.ACTIONS.index("open"))
    fast = instant_success()
    sources = distill.collect_distill_sources(
        teacher, fast, distill.SourceCounts(full=3, camera=0, distractor=0, real=0),
        None, seed=2, obs_cfg=cfg)
    for demo in sources["full"]:
        state = sim.state_from_dict(demo.initial)
        for step in demo.steps:
            polys = [geo.transform_polygon(state.poses[b.id], b.polygon)
                     for b in fast.bodies]
            for b, poly in zip(fast.bodies, polys):
                near = min(geo.polygon_boundary_distance(poly, tuple(p))
                           for p in step.cloud)
                assert near <= 1e-9, f"{b.id} missing from full cloud"
            state, _, _ = sim.step(fast, state, step.action)


def test_distractor_source_scenes_carry_clutter():
    scene = instant_success()
    cfg = small_cfg(scene)
    teacher = constant_action(policies.StatePolicy(policies.state_dim(scene), seed=0), 6)
    sources = distill.collect_distill_sources(
        teacher, scene, distill.SourceCounts(full=0, camera=0, distractor=3, real=0),
        None, seed=4, obs_cfg=cfg)
    for demo in sources["distractor"]:
        clutter = [k for k in demo.initial["poses"] if k.startswith("distractor")]
        assert 1 <= len(clutter) <= 4
        assert demo.scene_sig != scene_signature(scene)


def test_teacher_labels_match_greedy_exactly():
    scene = bundled_scene("drawer2d")
    cfg = small_cfg(scene)
    teacher = policies.StatePolicy(policies.state_dim(scene), seed=8)
    demos = bc.collect_demos(scene, 2, seed=5, obs_cfg=cfg)
    labels = distill.teacher_labels(teacher, demos)
    assert len(labels) == 2
    for demo, lab in zip(demos, labels):
        assert lab.shape == (len(demo.steps),)
        for step, l in zip(demo.steps, lab):
            greedy, _, _ = teacher.act(step.priv, "greedy")
            assert greedy == l


# --- manifest -------------------------------------------------------------------

def test_source_manifest_round_trip(tmp_path):
    scene = instant_success()
    cfg = small_cfg(scene)
    teacher = constant_action(policies.StatePolicy(policies.state_dim(scene), seed=0), 6)
    prox, _ = proxy.collect_proxy_demos(scene, proxy.ProxyConfig.zero(), 2, seed=1,
                                        obs_cfg=cfg)
    sources = distill.collect_distill_sources(
        teacher, scene, distill.SourceCounts(full=2, camera=1, distractor=0, real=2),
        prox, seed=0, obs_cfg=cfg)
    root = tmp_path / "dataset"
    distill.save_distill_sources(root, sources)
    manifest = json.loads((root / "manifest.json").read_text())
    assert manifest["sources"]["full"]["count"] == 2
    assert len(manifest["sources"]["full"]["files"]) == 2
    back = distill.load_distill_sources(root)
    assert set(back) == set(sources)
    for name in sources:
        for a, b in zip(sources[name], back[name]):
            assert a.seed == b.seed and a.initial == b.initial
            assert [s.action for s in a.steps] == [s.action for s in b.steps]
            for sa, sb in zip(a.steps, b.steps):
                np.testing.assert_array_equal(sa.cloud, sb.cloud)
                if sa.priv is None:
                    assert sb.priv is None
                else:
                    np.testing.assert_array_equal(sa.priv, sb.priv)


# --- training stages ------------------------------------------------------------

def test_stage1_loss_decreases_epoch_over_epoch():
    scene = bundled_scene("drawer2d")
    cfg = small_cfg(scene)
    demos = bc.collect_demos(scene, 4, seed=6, obs_cfg=cfg)
    epochs = 3
    for seed in range(5):
        teacher = policies.StatePolicy(policies.state_dim(scene), seed=seed)
        ds = distill.dataset_from_sources({"camera": demos}, teacher, cfg)
        student = policies.ObsPolicy(point_sizes=(8, 16), embed=16, hidden=(32,),
                                     seed=seed)
        bc_cfg = bc.BcConfig(batch=16, lr=1e-3)
        losses = distill.distill_stage1(student, ds, epochs=epochs,
                                        rng=np.random.default_rng(seed), cfg=bc_cfg)
        per_epoch = np.array(losses).reshape(epochs, -1).mean(axis=1)
        assert np.all(np.diff(per_epoch) < 0), f"seed {seed}: {per_epoch}"


def test_dagger_fixpoint_policies_agree_loss_near_zero():
    scene = instant_success()
    cfg = small_cfg(scene)
    k = sim.ACTIONS.index("open")
    teacher = constant_action(policies.StatePolicy(policies.state_dim(scene), seed=0), k)
    student = constant_action(
        policies.ObsPolicy(point_sizes=(8, 16), embed=16, hidden=(32,), seed=1), k)
    counts = distill.SourceCounts(full=0, camera=3, distractor=0, real=0)
    losses = distill.dagger_round(student, teacher, scene, counts, None, seed=2,
                                  obs_cfg=cfg, epochs=1, cfg=bc.BcConfig(batch=8))
    assert max(losses) < 1e-4
    g, _, _ = student.act(np.zeros((cfg.total, 2), np.float32),
                          np.zeros(5, np.float32), "greedy")
    assert g == k


def test_dagger_labels_are_teacher_greedy_on_student_states():
    scene = bundled_scene("drawer2d")
    cfg = small_cfg(scene)
    student = policies.ObsPolicy(point_sizes=(8, 16), embed=16, hidden=(32,), seed=3)
    teacher = policies.StatePolicy(policies.state_dim(scene), seed=4)
    demos = distill.collect_dagger_demos(student, scene, 3, seed=5, obs_cfg=cfg)
    assert len(demos) == 3
    labels = distill.teacher_labels(teacher, demos)
    for demo, lab in zip(demos, labels):
        state = sim.state_from_dict(demo.initial)
        for step, l in zip(demo.steps, lab):
            np.testing.assert_array_equal(step.priv, policies.state_encode(scene, state))
            greedy, _, _ = teacher.act(step.priv, "greedy")
            assert greedy == l
            state, _, _ = sim.step(scene, state, step.action)
