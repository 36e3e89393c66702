"""The stand-in for the physical world: a perturbed twin of the simulator.

Geometry, actuation, and sensing each get an independent, configurable error
source, so the sim-to-real gap is a measured quantity instead of an excuse.
A zero-noise proxy is bitwise identical to the simulator, which anchors every
perturbation test to a regression baseline.
"""

import dataclasses
import json

import numpy as np

from . import geometry as geo
from . import perception, policies, scenes, sim
from .bc import Demo, DemoStep, episode_rngs, episode_seed, scripted_expert
from .scene import scene_signature
from .sim import SimError


class ProxyError(RuntimeError):
    pass


@dataclasses.dataclass
class ProxyConfig:
    vertex_noise: float = 0.003  # m, frozen per-vertex shape error
    exec_noise_xy: float = 0.003  # m, zero-mean per-step actuation noise
    exec_noise_rot: float = 0.02  # rad
    camera_offset: tuple = (0.02, 0.02, 0.03)  # miscalibrated extrinsics
    cloud_noise: float = 0.002  # m, per-point sensor noise
    pose_offsets: dict = dataclasses.field(default_factory=dict)  # id -> (dx, dy, dth)

    def __post_init__(self):
        for name in ("vertex_noise", "exec_noise_xy", "exec_noise_rot", "cloud_noise"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    @classmethod
    def zero(cls):
        return cls(vertex_noise=0.0, exec_noise_xy=0.0, exec_noise_rot=0.0,
                   camera_offset=(0.0, 0.0, 0.0), cloud_noise=0.0)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "camera_offset" in d:
            d["camera_offset"] = tuple(d["camera_offset"])
        if "pose_offsets" in d:
            d["pose_offsets"] = {k: tuple(v) for k, v in d["pose_offsets"].items()}
        return cls(**d)

    def to_dict(self):
        out = dataclasses.asdict(self)
        out["camera_offset"] = list(self.camera_offset)
        out["pose_offsets"] = {k: list(v) for k, v in self.pose_offsets.items()}
        return out


def _jitter_polygon(poly, std, rng, tries=100):
    """Gaussian vertex noise, resampled until the shape stays a sane twin.

    A draw is kept only if the polygon stays convex-CCW and its area moves by
    at most 5%: unconstrained jitter at these stds can swallow the smallest
    bodies, and a scanned twin that is 20% off in size is not a scan error.
    """
    base = np.asarray(poly, dtype=np.float64)
    area0 = abs(geo.polygon_area(poly))
    for _ in range(tries):
        cand = tuple(map(tuple, base + rng.normal(0.0, std, size=base.shape)))
        if not geo.is_convex_ccw(cand):
            continue
        if abs(abs(geo.polygon_area(cand)) - area0) > 0.05 * area0:
            continue
        return cand
    raise ProxyError(f"no acceptable vertex jitter in {tries} tries (std {std})")


def perturb_scene(scene, cfg, seed):
    """Frozen geometric twin: jittered vertices, shifted nominals and camera."""
    rng = sim.env_rng(seed, 0, stream=5)
    out = scene
    if cfg.vertex_noise > 0:
        bodies = tuple(dataclasses.replace(b, polygon=_jitter_polygon(b.polygon, cfg.vertex_noise, rng))
                       for b in out.bodies)
        out = dataclasses.replace(out, bodies=bodies)
    if cfg.pose_offsets:
        bodies = []
        for b in out.bodies:
            off = cfg.pose_offsets.get(b.id)
            if off is not None:
                pose = (b.pose[0] + off[0], b.pose[1] + off[1], b.pose[2] + off[2])
                b = dataclasses.replace(b, pose=pose)
            bodies.append(b)
        out = dataclasses.replace(out, bodies=tuple(bodies))
    ox, oy, oth = cfg.camera_offset
    if (ox, oy, oth) != (0.0, 0.0, 0.0):
        cam = dataclasses.replace(out.camera, pose=(out.camera.pose[0] + ox,
                                                    out.camera.pose[1] + oy,
                                                    out.camera.pose[2] + oth))
        out = dataclasses.replace(out, camera=cam)
    return out


class SimDomain:
    """The simulator itself, wrapped in the domain interface."""

    name = "sim"

    def __init__(self, scene):
        self.scene = scene

    def reset(self, rng):
        return sim.reset(self.scene, rng)

    def step(self, scene, state, action, rng):
        return sim.step(scene, state, action)

    def render(self, scene, state, n, rng):
        return perception.render_camera_pcd(scene, state, n, rng)

    def observe(self, scene, state, cfg, rng):
        raw = self.render(scene, state, cfg.scene_points, rng)
        return perception.augment_pcd(raw, state.ee, cfg, rng)


class ProxyDomain(SimDomain):
    """Perturbed twin: noisy actuation and sensing over a jittered scene.

    Zero-noise branches skip their rng draws entirely, so an all-zero config
    consumes exactly the simulator's random stream and reproduces it bitwise.
    """

    name = "proxy"

    def __init__(self, scene, cfg=None, seed=0):
        self.cfg = cfg if cfg is not None else ProxyConfig()
        self.base = scene
        super().__init__(perturb_scene(scene, self.cfg, seed))

    def step(self, scene, state, action, rng):
        # noise stays within the commanded degree of freedom: a noisy pull must
        # not read as a wrist rotation, which cannot drag a slider
        dx, dy, dth = sim.action_delta(action)
        c = self.cfg
        if (dx, dy) != (0.0, 0.0) and c.exec_noise_xy > 0:
            dx += rng.normal(0.0, c.exec_noise_xy)
            dy += rng.normal(0.0, c.exec_noise_xy)
        if dth != 0.0 and c.exec_noise_rot > 0:
            dth += rng.normal(0.0, c.exec_noise_rot)
        return sim.step_delta(scene, state, int(action), dx, dy, dth)

    def render(self, scene, state, n, rng):
        raw = perception.render_camera_pcd(scene, state, n, rng)
        if self.cfg.cloud_noise > 0:
            raw = raw + rng.normal(0.0, self.cfg.cloud_noise, size=raw.shape)
        return raw


def make_proxy(scene, cfg=None, seed=0):
    return ProxyDomain(scene, cfg, seed)


# --- robustness evaluation ---------------------------------------------------

LEVELS = ("pose", "distractor", "disturbance")


def run_episode(policy, domain, rng, level="pose", obs_cfg=None, mode="sample",
                distractor_k=None):
    """One randomized episode at a disturbance level; returns 1.0 on success."""
    scn = domain.scene
    state = domain.reset(rng)
    if level == "distractor":
        k = int(rng.integers(1, 5)) if distractor_k is None else int(distractor_k)
        if k > 0:
            scn, state = scenes.inject_distractors(scn, state, k, rng)
    hit_kind, hit_t = None, -1
    if level == "disturbance":
        hit_kind = sim.DISTURBANCES[int(rng.integers(len(sim.DISTURBANCES)))]
        lo = int(round(0.25 * scn.episode_length))
        hi = int(round(0.75 * scn.episode_length))
        hit_t = int(rng.integers(lo, hi + 1))
    if policy.kind == "obs" and obs_cfg is None:
        obs_cfg = perception.AugmentConfig.for_scene(scn)
    while True:
        if state.t == hit_t:
            state = sim.apply_disturbance(scn, state, hit_kind, rng)
        if policy.kind == "state":
            a, _, _ = policy.act(policies.state_encode(scn, state), mode, rng)
        else:
            cloud = domain.observe(scn, state, obs_cfg, rng)
            a, _, _ = policy.act(cloud, perception.robot_state_vec(state), mode, rng)
        state, reward, done = domain.step(scn, state, a, rng)
        if done:
            return float(reward > 0)


def bootstrap_std(outcomes, rng, resamples=1000):
    """Std of the success rate under resampling with replacement."""
    x = np.asarray(outcomes, dtype=np.float64)
    idx = rng.integers(0, x.size, size=(resamples, x.size))
    return float(x[idx].mean(axis=1).std())


def evaluate(policy, domain, level="pose", n_episodes=10, seed=0, obs_cfg=None,
             mode="sample", base_index=0, distractor_k=None):
    """Success rate with a bootstrapped error bar at one disturbance level."""
    if level not in LEVELS:
        raise ValueError(f"level must be one of {LEVELS}, got {level!r}")
    if n_episodes < 10:
        raise ValueError("evaluation needs at least 10 episodes")
    if policy.kind == "obs" and obs_cfg is None:
        obs_cfg = perception.AugmentConfig.for_scene(domain.scene)
    outcomes = []
    for i in range(n_episodes):
        rng = sim.env_rng(seed, base_index + i, stream=4)
        outcomes.append(run_episode(policy, domain, rng, level, obs_cfg, mode,
                                    distractor_k))
    return {
        "level": level,
        "success": float(np.mean(outcomes)),
        "std": bootstrap_std(outcomes, sim.env_rng(seed, base_index, stream=6)),
        "episodes": n_episodes,
        "outcomes": [int(o) for o in outcomes],
    }


@dataclasses.dataclass
class EvalReport:
    scene_name: str
    domain: str
    levels: dict  # level -> evaluate() entry

    def to_json(self):
        return json.dumps({"scene": self.scene_name, "domain": self.domain,
                           "levels": self.levels}, indent=2, sort_keys=True)

    def table(self):
        width = max(len(lv) for lv in self.levels)
        lines = [f"{self.scene_name} ({self.domain})"]
        for lv, e in self.levels.items():
            lines.append(f"  {lv:<{width}}  {e['success']:.2f} +- {e['std']:.2f}"
                         f"  ({e['episodes']} episodes)")
        return "\n".join(lines)


def evaluate_report(policy, domain, levels=LEVELS, n_episodes=10, seed=0,
                    obs_cfg=None, mode="sample"):
    """Full robustness sweep; episodes at different levels use disjoint seeds."""
    entries = {}
    for li, level in enumerate(levels):
        entries[level] = evaluate(policy, domain, level, n_episodes, seed,
                                  obs_cfg, mode, base_index=li * n_episodes)
    return EvalReport(scene_name=domain.scene.name, domain=domain.name, levels=entries)


# --- demo collection in the proxy --------------------------------------------

def _rollout_withheld(domain, state, expert, obs_rng, exec_rng, obs_cfg):
    """Expert episode recorded without privileged state; returns it as a sidecar."""
    scn = domain.scene
    steps, sidecar = [], []
    success = False
    while True:
        cloud = domain.render(scn, state, obs_cfg.scene_points, obs_rng)
        sidecar.append(policies.state_encode(scn, state))
        action = expert(scn, state)
        steps.append(DemoStep(cloud=np.asarray(cloud, dtype=np.float32),
                              robot=perception.robot_state_vec(state),
                              priv=None, action=int(action)))
        state, reward, done = domain.step(scn, state, action, exec_rng)
        if reward > 0:
            success = True
        if done:
            return steps, np.asarray(sidecar, dtype=np.float32), success, state


def collect_proxy_demos(scene, cfg, n, seed=0, source="scripted", expert=None,
                        obs_cfg=None, max_attempts=None, domain_seed=0):
    """n successful expert episodes under proxy sensing and actuation.

    Returns (demos, sidecars): the demos withhold privileged state (the world
    outside sim does not offer one), the sidecars carry the true per-step
    state vectors so test oracles can audit what the stream hides.
    """
    if source != "scripted":
        raise ValueError(f"only scripted collection runs headless, got {source!r}; "
                         "teleop demos are recorded through the bridge")
    domain = make_proxy(scene, cfg, domain_seed)
    if expert is None:
        expert = scripted_expert(domain.scene)
    if obs_cfg is None:
        obs_cfg = perception.AugmentConfig.for_scene(domain.scene)
    if max_attempts is None:
        max_attempts = max(4 * n, n + 20)
    sig = scene_signature(domain.scene)
    demos, sidecars = [], []
    for attempt in range(max_attempts):
        if len(demos) == n:
            break
        ep_seed = episode_seed(seed, attempt)
        reset_rng, obs_rng, exec_rng, _ = episode_rngs(ep_seed)
        try:
            state = domain.reset(reset_rng)
        except SimError:
            continue
        initial = sim.state_to_dict(state)
        steps, sidecar, success, _ = _rollout_withheld(domain, state, expert,
                                                       obs_rng, exec_rng, obs_cfg)
        if not success:
            continue
        demos.append(Demo(scene_name=scene.name, scene_sig=sig, domain="proxy",
                          seed=ep_seed, success=True, initial=initial, steps=steps))
        sidecars.append(sidecar)
    if len(demos) < n:
        rate = len(demos) / max_attempts
        raise ProxyError(f"expert produced {len(demos)}/{n} successes in "
                         f"{max_attempts} attempts (rate {rate:.2f}) on the "
                         f"proxy of {scene.name!r}")
    return demos, sidecars


def replay_demo(domain, demo):
    """Re-execute a demo's actions from its snapshot; returns (success, state).

    The execution stream is rebuilt from the seed stored in the file, so a
    noisy-actuation episode retraces the exact motions that were recorded.
    """
    _, _, exec_rng, _ = episode_rngs(demo.seed)
    state = sim.state_from_dict(demo.initial)
    success = False
    for step in demo.steps:
        state, reward, done = domain.step(domain.scene, state, step.action, exec_rng)
        if reward > 0:
            success = True
        if done:
            break
    return success, state
