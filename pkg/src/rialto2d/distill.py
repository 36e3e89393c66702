"""Teacher-to-student transfer: harvesting trajectories, mixing sources, DAgger.

The teacher acts on privileged state, the student on rendered point clouds.
Stage 1 clones the teacher from a mixed dataset; a DAgger round then corrects
the student on the states the student itself reaches. Proxy-domain demos can
be co-trained into every stage to pull the student toward the target domain.
"""

import dataclasses
import json
import os

import numpy as np

from . import bc, perception, policies, rl, scenes, sim
from .bc import BcConfig, Demo, DemoDataset, DemoStep, episode_rngs, episode_seed
from .scene import scene_signature


class DistillError(RuntimeError):
    pass


def subseed(seed, tag):
    """Independent integer seed for one stage of a seeded procedure."""
    return int(np.random.SeedSequence((seed, tag)).generate_state(1, np.uint64)[0])


# --- trajectory harvesting ----------------------------------------------------

def inverse_distill(policy, scene, m=15, seed=0, obs_cfg=None, max_attempts=None,
                    mode="sample"):
    """Successful rollouts of a sensor policy, recorded WITH privileged state.

    The policy only ever sees augmented clouds, but the simulator knows the
    full state, so every kept step carries the vector a teacher trains on.
    """
    if m < 1:
        raise ValueError("need m >= 1")
    if getattr(policy, "kind", None) != "obs":
        raise ValueError("inverse distillation rolls out a sensor policy")
    if obs_cfg is None:
        obs_cfg = perception.AugmentConfig.for_scene(scene)
    if max_attempts is None:
        max_attempts = max(4 * m, m + 20)
    sig = scene_signature(scene)
    demos = []
    attempts = 0
    for attempt in range(max_attempts):
        if len(demos) == m:
            break
        ep_seed = episode_seed(seed, attempt)
        reset_rng, obs_rng, _, act_rng = episode_rngs(ep_seed)
        try:
            state = sim.reset(scene, reset_rng)
        except sim.SimError:
            continue
        attempts += 1
        initial = sim.state_to_dict(state)
        steps = []
        success = False
        while True:
            raw = perception.render_camera_pcd(scene, state, obs_cfg.scene_points,
                                               obs_rng).astype(np.float32)
            obs = perception.augment_pcd(raw, state.ee, obs_cfg, obs_rng)
            a, _, _ = policy.act(obs, perception.robot_state_vec(state), mode, act_rng)
            steps.append(DemoStep(cloud=raw, robot=perception.robot_state_vec(state),
                                  priv=policies.state_encode(scene, state), action=int(a)))
            state, reward, done = sim.step(scene, state, a)
            if reward > 0:
                success = True
            if done:
                break
        if success:
            demos.append(Demo(scene_name=scene.name, scene_sig=sig, domain="sim",
                              seed=ep_seed, success=True, initial=initial, steps=steps))
    if len(demos) < m:
        rate = len(demos) / max(attempts, 1)
        raise DistillError(f"policy produced {len(demos)}/{m} successes in "
                           f"{attempts} attempts (rate {rate:.2f}) on {scene.name!r}")
    return demos


SOURCE_KINDS = ("full", "camera", "distractor")


def _collect_source(teacher, scene, kind, n_traj, seed, obs_cfg, mode="sample",
                    max_attempts=None):
    """n_traj successful teacher episodes observed through one cloud source."""
    if kind not in SOURCE_KINDS:
        raise ValueError(f"kind must be one of {SOURCE_KINDS}, got {kind!r}")
    if max_attempts is None:
        max_attempts = max(4 * n_traj, n_traj + 20)
    demos = []
    attempts = 0
    for attempt in range(max_attempts):
        if len(demos) == n_traj:
            break
        ep_seed = episode_seed(seed, attempt)
        reset_rng, obs_rng, _, act_rng = episode_rngs(ep_seed)
        scn = scene
        try:
            state = sim.reset(scn, reset_rng)
            if kind == "distractor":
                k = int(reset_rng.integers(1, 5))
                scn, state = scenes.inject_distractors(scn, state, k, reset_rng)
        except sim.SimError:
            continue
        attempts += 1
        initial = sim.state_to_dict(state)
        steps = []
        success = False
        while True:
            if kind == "full":
                raw = perception.render_full_pcd(scn, state, obs_cfg.scene_points, obs_rng)
            else:
                raw = perception.render_camera_pcd(scn, state, obs_cfg.scene_points, obs_rng)
            priv = policies.state_encode(scn, state)
            a, _, _ = teacher.act(priv, mode, act_rng)
            steps.append(DemoStep(cloud=raw.astype(np.float32),
                                  robot=perception.robot_state_vec(state),
                                  priv=priv, action=int(a)))
            state, reward, done = sim.step(scn, state, a)
            if reward > 0:
                success = True
            if done:
                break
        if success:
            demos.append(Demo(scene_name=scn.name, scene_sig=scene_signature(scn),
                              domain="sim", seed=ep_seed, success=True,
                              initial=initial, steps=steps))
    if len(demos) < n_traj:
        rate = len(demos) / max(attempts, 1)
        raise DistillError(f"teacher produced {len(demos)}/{n_traj} successes in "
                           f"{attempts} attempts (rate {rate:.2f}) on "
                           f"{kind!r} source of {scene.name!r}")
    return demos


def teacher_labels(teacher, demos):
    """Greedy teacher action for every recorded privileged state, per demo."""
    labels = []
    for demo in demos:
        priv = np.stack([s.priv for s in demo.steps])
        logits, _, _ = teacher.forward(priv)
        labels.append(np.argmax(logits, axis=1).astype(np.int64))
    return labels


def _labeled_dataset(teacher, demos, obs_cfg):
    """Demo clouds paired with teacher labels instead of executed actions."""
    labels = np.concatenate(teacher_labels(teacher, demos))
    clouds, robot = [], []
    for demo in demos:
        for step in demo.steps:
            clouds.append(np.asarray(step.cloud, dtype=np.float32))
            robot.append(np.asarray(step.robot, dtype=np.float32))
    return DemoDataset.from_arrays(clouds, np.stack(robot), labels, obs_cfg)


# --- dataset mixing -----------------------------------------------------------

class MixedDataset:
    """Uniform mixture over named sources; one source collapses to passthrough."""

    def __init__(self, sources):
        sources = [(name, ds) for name, ds in sources if len(ds) > 0]
        if not sources:
            raise ValueError("no nonempty sources")
        self.sources = sources

    def __len__(self):
        return sum(len(ds) for _, ds in self.sources)

    def names(self):
        return [name for name, _ in self.sources]

    def sample(self, batch, rng):
        if len(self.sources) == 1:
            return self.sources[0][1].sample(batch, rng)
        pick = rng.integers(0, len(self.sources), size=batch)
        parts = [ds.sample(int((pick == i).sum()), rng)
                 for i, (_, ds) in enumerate(self.sources)]
        return tuple(np.concatenate([p[j] for p in parts]) for j in range(3))


@dataclasses.dataclass
class SourceCounts:
    full: int = 600
    camera: int = 200
    distractor: int = 80
    real: int = 15


def collect_distill_sources(teacher, scene, counts=None, proxy_demos=None, seed=0,
                            obs_cfg=None, mode="sample"):
    """Raw demos per source name, fresh teacher rollouts for the sim sources."""
    if counts is None:
        counts = SourceCounts()
    if obs_cfg is None:
        obs_cfg = perception.AugmentConfig.for_scene(scene)
    out = {}
    for tag, kind in enumerate(SOURCE_KINDS):
        n = getattr(counts, kind)
        if n > 0:
            out[kind] = _collect_source(teacher, scene, kind, n,
                                        subseed(seed, tag), obs_cfg, mode)
    if proxy_demos and counts.real > 0:
        out["real"] = list(proxy_demos[:counts.real])
    return out


def dataset_from_sources(sources, teacher, obs_cfg):
    """Mixture over sources; sim sources are relabeled with teacher actions."""
    named = []
    for name in ("full", "camera", "distractor", "real"):
        demos = sources.get(name)
        if not demos:
            continue
        if name == "real":
            named.append((name, DemoDataset(demos, obs_cfg)))
        else:
            named.append((name, _labeled_dataset(teacher, demos, obs_cfg)))
    return MixedDataset(named)


def build_distill_dataset(teacher, scene, counts=None, proxy_demos=None, seed=0,
                          obs_cfg=None, mode="sample"):
    if obs_cfg is None:
        obs_cfg = perception.AugmentConfig.for_scene(scene)
    sources = collect_distill_sources(teacher, scene, counts, proxy_demos,
                                      seed, obs_cfg, mode)
    return dataset_from_sources(sources, teacher, obs_cfg)


def save_distill_sources(path, sources):
    """Demo files per source plus a manifest for resuming."""
    os.makedirs(path, exist_ok=True)
    manifest = {"sources": {}}
    for name, demos in sources.items():
        paths = bc.save_demos(os.path.join(path, name), demos, prefix=name)
        manifest["sources"][name] = {"dir": name, "count": len(demos),
                                     "files": [os.path.basename(p) for p in paths]}
    with open(os.path.join(path, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)


def load_distill_sources(path):
    with open(os.path.join(path, "manifest.json")) as f:
        manifest = json.load(f)
    out = {}
    for name, entry in manifest["sources"].items():
        demos = [bc.load_demo(os.path.join(path, entry["dir"], f))
                 for f in entry["files"]]
        if len(demos) != entry["count"]:
            raise DistillError(f"manifest promises {entry['count']} demos for "
                               f"{name!r}, found {len(demos)}")
        out[name] = demos
    return out


# --- training stages ----------------------------------------------------------

def _train_updates(dataset, epochs, batch):
    return epochs * max(1, len(dataset) // batch)


def distill_stage1(student, dataset, epochs=2, rng=None, cfg=None):
    """Clone the mixture into the student; returns per-update losses."""
    if cfg is None:
        cfg = BcConfig()
    cfg = dataclasses.replace(cfg, updates=_train_updates(dataset, epochs, cfg.batch))
    if rng is None:
        rng = np.random.default_rng(0)
    return bc.train_bc(student, dataset, cfg, rng)


def collect_dagger_demos(student, scene, n_traj, seed=0, obs_cfg=None, mode="sample"):
    """Student-driven episodes, kept successful or not: DAgger wants the states
    the student actually visits, and the failures are the informative ones."""
    if obs_cfg is None:
        obs_cfg = perception.AugmentConfig.for_scene(scene)
    sig = scene_signature(scene)
    demos = []
    attempt = 0
    while len(demos) < n_traj:
        ep_seed = episode_seed(seed, attempt)
        attempt += 1
        reset_rng, obs_rng, _, act_rng = episode_rngs(ep_seed)
        try:
            state = sim.reset(scene, reset_rng)
        except sim.SimError:
            continue
        initial = sim.state_to_dict(state)
        steps = []
        success = False
        while True:
            raw = perception.render_camera_pcd(scene, state, obs_cfg.scene_points,
                                               obs_rng).astype(np.float32)
            obs = perception.augment_pcd(raw, state.ee, obs_cfg, obs_rng)
            a, _, _ = student.act(obs, perception.robot_state_vec(state), mode, act_rng)
            steps.append(DemoStep(cloud=raw, robot=perception.robot_state_vec(state),
                                  priv=policies.state_encode(scene, state), action=int(a)))
            state, reward, done = sim.step(scene, state, a)
            if reward > 0:
                success = True
            if done:
                break
        demos.append(Demo(scene_name=scene.name, scene_sig=sig, domain="sim",
                          seed=ep_seed, success=success, initial=initial, steps=steps))
    return demos


def dagger_round(student, teacher, scene, counts=None, proxy_demos=None, seed=0,
                 obs_cfg=None, epochs=2, cfg=None, mode="sample"):
    """One aggregation round: relabel student states, mix, retrain.

    The mixture is student-visited states with teacher labels, fresh
    distractor trajectories, and the proxy demos, drawn equally.
    """
    if counts is None:
        counts = SourceCounts()
    if obs_cfg is None:
        obs_cfg = perception.AugmentConfig.for_scene(scene)
    dag = collect_dagger_demos(student, scene, counts.camera, subseed(seed, 10),
                               obs_cfg, mode)
    named = [("dagger", _labeled_dataset(teacher, dag, obs_cfg))]
    if counts.distractor > 0:
        dis = _collect_source(teacher, scene, "distractor", counts.distractor,
                              subseed(seed, 11), obs_cfg, mode)
        named.append(("distractor", _labeled_dataset(teacher, dis, obs_cfg)))
    if proxy_demos and counts.real > 0:
        named.append(("real", DemoDataset(list(proxy_demos[:counts.real]), obs_cfg)))
    dataset = MixedDataset(named)
    if cfg is None:
        cfg = BcConfig()
    cfg = dataclasses.replace(cfg, updates=_train_updates(dataset, epochs, cfg.batch))
    losses = bc.train_bc(student, dataset, cfg, np.random.default_rng(subseed(seed, 12)))
    return losses


# --- full procedure -----------------------------------------------------------

@dataclasses.dataclass
class DistillConfig:
    counts: SourceCounts = dataclasses.field(default_factory=SourceCounts)
    rounds: int = 1
    epochs: int = 2
    batch: int = 32
    lr: float = 3e-4
    grad_clip: float = 5.0
    cotrain: bool = True
    distractor: bool = True
    eval_episodes: int = 20
    student_seed: int = 0
    point_sizes: tuple = (64, 128)
    embed: int = 128
    hidden: tuple = (256, 256)


def distill(teacher, scene, proxy_demos=None, cfg=None, seed=0, obs_cfg=None, log=None):
    """Stage 1 plus DAgger rounds; returns (student, report).

    The student returned is the best of the stage checkpoints by sim success
    at the pose level, so a round that hurts cannot ship.
    """
    if cfg is None:
        cfg = DistillConfig()
    if obs_cfg is None:
        obs_cfg = perception.AugmentConfig.for_scene(scene)
    counts = cfg.counts
    if not cfg.distractor:
        counts = dataclasses.replace(counts, distractor=0)
    demos = proxy_demos if cfg.cotrain else None
    bc_cfg = BcConfig(batch=cfg.batch, lr=cfg.lr, grad_clip=cfg.grad_clip)
    student = policies.ObsPolicy(point_sizes=cfg.point_sizes, embed=cfg.embed,
                                 hidden=cfg.hidden, seed=cfg.student_seed)
    eval_seed = subseed(seed, 99)

    def probe(stage):
        success = rl.eval_policy(scene, student, cfg.eval_episodes, eval_seed,
                                 obs_cfg=obs_cfg)
        if log is not None:
            log({"stage": stage, "eval_success": success})
        return success

    dataset = build_distill_dataset(teacher, scene, counts, demos, seed, obs_cfg)
    stage1_losses = distill_stage1(student, dataset, cfg.epochs,
                                   np.random.default_rng(subseed(seed, 98)), bc_cfg)
    report = {"stage1": {"loss": float(np.mean(stage1_losses[-50:])),
                         "eval_success": probe("stage1")},
              "rounds": []}
    best = (report["stage1"]["eval_success"], policies.copy_params(student))
    for r in range(cfg.rounds):
        losses = dagger_round(student, teacher, scene, counts, demos,
                              subseed(seed, r), obs_cfg, cfg.epochs, bc_cfg)
        entry = {"loss": float(np.mean(losses[-50:])),
                 "eval_success": probe(f"dagger{r}")}
        report["rounds"].append(entry)
        if entry["eval_success"] > best[0]:
            best = (entry["eval_success"], policies.copy_params(student))
    policies.set_params(student, best[1])
    report["best_eval_success"] = best[0]
    return student, report
