"""Demonstrations: on-disk format, scripted experts, collection, cloning."""

import dataclasses
import json
import math
import os
import struct

import numpy as np

from . import nn, perception, policies, sim
from . import geometry as geo
from .scene import scene_signature
from .sim import SimError

DEMO_MAGIC = b"RIALTO-DEMO"
DEMO_VERSION = 1

A_OPEN = sim.ACTIONS.index("open")
A_CLOSE = sim.ACTIONS.index("close")


@dataclasses.dataclass
class DemoStep:
    cloud: np.ndarray  # (P, 2) float32, raw camera points in world frame
    robot: np.ndarray  # (5,) float32
    priv: "np.ndarray | None"  # privileged state vector, None when withheld
    action: int


@dataclasses.dataclass
class Demo:
    scene_name: str
    scene_sig: bytes
    domain: str  # "sim" or "proxy"
    seed: int
    success: bool
    initial: dict  # state snapshot at t=0
    steps: list


def write_demo(f, demo):
    """Binary demo layout; the privileged channel stores length 0 when withheld."""
    f.write(DEMO_MAGIC)
    f.write(struct.pack("<I", DEMO_VERSION))
    name = demo.scene_name.encode()
    f.write(struct.pack("<H", len(name)))
    f.write(name)
    if len(demo.scene_sig) != 32:
        raise ValueError("scene signature must be 32 bytes")
    f.write(demo.scene_sig)
    dom = demo.domain.encode()
    f.write(struct.pack("<H", len(dom)))
    f.write(dom)
    f.write(struct.pack("<Q", demo.seed & 0xFFFFFFFFFFFFFFFF))
    f.write(struct.pack("<B", 1 if demo.success else 0))
    init = json.dumps(demo.initial, sort_keys=True).encode()
    f.write(struct.pack("<I", len(init)))
    f.write(init)
    f.write(struct.pack("<I", len(demo.steps)))
    for step in demo.steps:
        cloud = np.ascontiguousarray(step.cloud, dtype=np.float32)
        if cloud.ndim != 2 or cloud.shape[1] != 2:
            raise ValueError("demo cloud must have shape (P, 2)")
        f.write(struct.pack("<I", cloud.shape[0]))
        f.write(cloud.tobytes())
        robot = np.ascontiguousarray(step.robot, dtype=np.float32)
        if robot.shape != (5,):
            raise ValueError("robot vector must have shape (5,)")
        f.write(robot.tobytes())
        if step.priv is None:
            f.write(struct.pack("<I", 0))
        else:
            priv = np.ascontiguousarray(step.priv, dtype=np.float32)
            f.write(struct.pack("<I", priv.shape[0]))
            f.write(priv.tobytes())
        f.write(struct.pack("<B", int(step.action)))


def _read_exact(f, n):
    buf = f.read(n)
    if len(buf) != n:
        raise ValueError("truncated demo file")
    return buf


def read_demo(f):
    if _read_exact(f, len(DEMO_MAGIC)) != DEMO_MAGIC:
        raise ValueError("not a demo file")
    version, = struct.unpack("<I", _read_exact(f, 4))
    if version != DEMO_VERSION:
        raise ValueError(f"unsupported demo version {version}")
    name_len, = struct.unpack("<H", _read_exact(f, 2))
    name = _read_exact(f, name_len).decode()
    sig = _read_exact(f, 32)
    dom_len, = struct.unpack("<H", _read_exact(f, 2))
    domain = _read_exact(f, dom_len).decode()
    seed, = struct.unpack("<Q", _read_exact(f, 8))
    success = _read_exact(f, 1)[0] != 0
    init_len, = struct.unpack("<I", _read_exact(f, 4))
    initial = json.loads(_read_exact(f, init_len).decode())
    n_steps, = struct.unpack("<I", _read_exact(f, 4))
    steps = []
    for _ in range(n_steps):
        npts, = struct.unpack("<I", _read_exact(f, 4))
        cloud = np.frombuffer(_read_exact(f, 8 * npts), dtype="<f4").reshape(npts, 2).copy()
        robot = np.frombuffer(_read_exact(f, 20), dtype="<f4").copy()
        priv_len, = struct.unpack("<I", _read_exact(f, 4))
        priv = None
        if priv_len:
            priv = np.frombuffer(_read_exact(f, 4 * priv_len), dtype="<f4").copy()
        action = _read_exact(f, 1)[0]
        steps.append(DemoStep(cloud=cloud, robot=robot, priv=priv, action=action))
    return Demo(scene_name=name, scene_sig=sig, domain=domain, seed=seed,
                success=success, initial=initial, steps=steps)


def save_demo(path, demo):
    with open(path, "wb") as f:
        write_demo(f, demo)


def load_demo(path):
    with open(path, "rb") as f:
        demo = read_demo(f)
        if f.read(1):
            raise ValueError("trailing bytes after demo data")
    return demo


def save_demos(dirpath, demos, prefix="demo"):
    """Write one .demo file per episode; returns the paths."""
    os.makedirs(dirpath, exist_ok=True)
    paths = []
    for i, demo in enumerate(demos):
        path = os.path.join(dirpath, f"{prefix}{i:04d}.demo")
        save_demo(path, demo)
        paths.append(path)
    return paths


def load_demos(dirpath):
    names = sorted(n for n in os.listdir(dirpath) if n.endswith(".demo"))
    if not names:
        raise ValueError(f"no .demo files in {dirpath}")
    return [load_demo(os.path.join(dirpath, n)) for n in names]


def demo_to_json(demo):
    """Lossy human-readable view (floats go through repr)."""
    return {
        "scene": demo.scene_name,
        "scene_sig": demo.scene_sig.hex(),
        "domain": demo.domain,
        "seed": demo.seed,
        "success": demo.success,
        "initial": demo.initial,
        "steps": [
            {
                "cloud": np.asarray(s.cloud, dtype=float).tolist(),
                "robot": np.asarray(s.robot, dtype=float).tolist(),
                "priv": None if s.priv is None else np.asarray(s.priv, dtype=float).tolist(),
                "action": int(s.action),
            }
            for s in demo.steps
        ],
    }


# --- scripted experts -------------------------------------------------------

_TRANS = [(a, sim.action_delta(a)[0], sim.action_delta(a)[1]) for a in range(4)]


def _moves(scene, state, action):
    s2, _, _ = sim.step(scene, state, action)
    return s2.ee != state.ee or s2.poses != state.poses


def _step_toward(scene, state, target, tol):
    """Greedy unblocked translation toward a world point; None once inside tol."""
    ex, ey, _ = state.ee
    if math.hypot(target[0] - ex, target[1] - ey) <= tol:
        return None
    ranked = sorted(_TRANS, key=lambda t: math.hypot(target[0] - (ex + t[1]),
                                                     target[1] - (ey + t[2])))
    for a, _, _ in ranked:
        if _moves(scene, state, a):
            return a
    return ranked[0][0]


def _best_pull(scene, state, score):
    """Translation with the largest positive score((dx, dy)) that is not blocked."""
    ranked = sorted(_TRANS, key=lambda t: -score((t[1], t[2])))
    for a, dx, dy in ranked:
        if score((dx, dy)) <= 0.0:
            break
        if _moves(scene, state, a):
            return a
    return ranked[0][0]


def _approach(scene, state, h, u, stage, lead=0.06, depth=0.01):
    """Chase a carrot on the approach axis through h along u.

    The carrot sits `lead` ahead of the gripper's axial coordinate, clamped
    between `stage` (outside the scene geometry) and `depth` past the handle,
    so lateral error washes out before the gripper commits to the channel.
    """
    ex, ey, _ = state.ee
    s = (ex - h[0]) * u[0] + (ey - h[1]) * u[1]
    a = min(max(s - lead, -depth), stage)
    return _step_toward(scene, state, (h[0] + a * u[0], h[1] + a * u[1]), 0.0)


def _drawer_expert(scene, state):
    if state.attached is not None:
        if state.joints["slide"] > 0.13:
            return A_OPEN
        u = geo.pose_rotate_vector(state.poses["frame_back"], (0.0, -1.0))
        return _best_pull(scene, state, lambda d: d[0] * u[0] + d[1] * u[1])
    if not state.gripper_open:
        return A_OPEN  # closed on air; release and retry
    if sim.grasp_candidate(scene, state) == "drawer":
        return A_CLOSE
    h = sim.site_world(scene, state, "drawer", "handle")
    u = geo.pose_rotate_vector(state.poses["frame_back"], (0.0, -1.0))
    return _approach(scene, state, h, u, stage=0.19)


def _cabinet_expert(scene, state):
    if state.attached is not None:
        if state.joints["hinge"] >= 0.7:
            return A_OPEN
        anchor = geo.pose_apply(state.poses["cabinet_back"],
                                scene.joint("hinge").anchor)
        ex, ey, _ = state.ee
        rx, ry = ex - anchor[0], ey - anchor[1]
        rn = math.hypot(rx, ry)
        if rn < 1e-9:
            return A_OPEN
        tx, ty = -ry / rn, rx / rn
        return _best_pull(scene, state, lambda d: (d[0] * tx + d[1] * ty) / rn)
    if not state.gripper_open:
        return A_OPEN
    if sim.grasp_candidate(scene, state) == "door":
        return A_CLOSE
    h = sim.site_world(scene, state, "door", "handle")
    n = geo.pose_rotate_vector(state.poses["door"], (0.0, -1.0))
    return _approach(scene, state, h, n, stage=0.16)


def _shelf_expert(scene, state):
    if state.attached is not None:
        slot = sim.site_world(scene, state, "shelf_back", "slot")
        book = sim.site_world(scene, state, "book", "center")
        if math.hypot(book[0] - slot[0], book[1] - slot[1]) <= 0.03:
            return A_OPEN
        ex, ey, _ = state.ee
        offs = (ex - book[0], ey - book[1])
        return _step_toward(scene, state, (slot[0] + offs[0], slot[1] + offs[1]), 0.0)
    if not state.gripper_open:
        return A_OPEN
    bx, by, _ = state.poses["book"]
    ex, ey, _ = state.ee
    if sim.grasp_candidate(scene, state) == "book" and abs(ex - bx) <= 0.035:
        return A_CLOSE
    return _approach(scene, state, (bx, by), (0.0, -1.0), stage=0.085,
                     lead=0.05, depth=0.005)


_EXPERTS = {
    "drawer2d": _drawer_expert,
    "cabinet2d": _cabinet_expert,
    "shelf2d": _shelf_expert,
}


def scripted_expert(scene):
    """Hand-written controller for a bundled scene."""
    try:
        return _EXPERTS[scene.name]
    except KeyError:
        raise ValueError(f"no scripted expert for scene {scene.name!r}") from None


# --- collection -------------------------------------------------------------

def episode_seed(seed, attempt):
    """The u64 written into a demo file; every episode stream derives from it."""
    return int(np.random.SeedSequence((seed, attempt)).generate_state(1, np.uint64)[0])


def episode_rngs(ep_seed):
    """(reset, observation, execution, action) streams for one episode.

    Derived from the stored seed alone so a demo file is replayable without
    knowing the collection-time seed or attempt index. The execution stream
    feeds actuation-noise domains and is never drawn from in plain sim; the
    action stream feeds policies that sample, and experts never touch it.
    """
    kids = np.random.SeedSequence(int(ep_seed)).spawn(4)
    return tuple(np.random.Generator(np.random.PCG64(s)) for s in kids)


def rollout_expert(scene, state, expert, rng, obs_cfg, record=True):
    """Run an expert to episode end; returns (steps, success, final_state)."""
    steps = []
    success = False
    while True:
        cloud = None
        priv = None
        if record:
            cloud = perception.render_camera_pcd(scene, state, obs_cfg.scene_points,
                                                 rng).astype(np.float32)
            priv = policies.state_encode(scene, state)
        action = expert(scene, state)
        if record:
            steps.append(DemoStep(cloud=cloud,
                                  robot=perception.robot_state_vec(state),
                                  priv=priv, action=int(action)))
        state, reward, done = sim.step(scene, state, action)
        if reward > 0:
            success = True
        if done:
            return steps, success, state


def collect_demos(scene, n, seed=0, expert=None, obs_cfg=None, max_attempts=None):
    """n successful expert episodes under the scene's reset randomization."""
    if expert is None:
        expert = scripted_expert(scene)
    if obs_cfg is None:
        obs_cfg = perception.AugmentConfig.for_scene(scene)
    if max_attempts is None:
        max_attempts = max(4 * n, n + 20)
    sig = scene_signature(scene)
    demos = []
    for attempt in range(max_attempts):
        if len(demos) == n:
            break
        ep_seed = episode_seed(seed, attempt)
        reset_rng, obs_rng, _, _ = episode_rngs(ep_seed)
        try:
            state = sim.reset(scene, reset_rng)
        except SimError:
            continue
        initial = sim.state_to_dict(state)
        steps, success, _ = rollout_expert(scene, state, expert, obs_rng, obs_cfg)
        if not success:
            continue
        demos.append(Demo(scene_name=scene.name, scene_sig=sig, domain="sim",
                          seed=ep_seed, success=True, initial=initial, steps=steps))
    if len(demos) < n:
        raise SimError(f"expert produced {len(demos)}/{n} successes "
                       f"in {max_attempts} attempts on {scene.name!r}")
    return demos


# --- behavior cloning -------------------------------------------------------

class DemoDataset:
    """Flat (cloud, robot, action) samples with augmentation applied per draw."""

    def __init__(self, demos, cfg):
        clouds, robot, actions = [], [], []
        for demo in demos:
            for step in demo.steps:
                clouds.append(np.asarray(step.cloud, dtype=np.float32))
                robot.append(np.asarray(step.robot, dtype=np.float32))
                actions.append(step.action)
        if not clouds:
            raise ValueError("no demo steps")
        self._init_arrays(clouds, np.stack(robot),
                          np.asarray(actions, dtype=np.int64), cfg)

    def _init_arrays(self, clouds, robot, actions, cfg):
        self.cfg = cfg
        self.clouds = clouds
        self.robot = robot
        self.actions = actions

    @classmethod
    def from_arrays(cls, clouds, robot, actions, cfg):
        """Build from parallel arrays; actions may be relabeled, not as recorded."""
        out = cls.__new__(cls)
        out._init_arrays(list(clouds), np.asarray(robot, dtype=np.float32),
                         np.asarray(actions, dtype=np.int64), cfg)
        return out

    def __len__(self):
        return len(self.actions)

    def sample(self, batch, rng):
        idx = rng.integers(0, len(self), size=batch)
        obs = np.empty((batch, self.cfg.total, 2), dtype=np.float32)
        for j, i in enumerate(idx):
            x, y, c, s = (float(v) for v in self.robot[i][:4])
            obs[j] = perception.augment_pcd(self.clouds[i], (x, y, math.atan2(s, c)),
                                            self.cfg, rng)
        return obs, self.robot[idx], self.actions[idx]


class StateDataset:
    """Privileged-state samples; refuses demos whose state channel was withheld."""

    def __init__(self, demos):
        xs, actions = [], []
        for demo in demos:
            for step in demo.steps:
                if step.priv is None:
                    raise ValueError("demo withholds privileged state")
                xs.append(np.asarray(step.priv, dtype=np.float32))
                actions.append(step.action)
        if not xs:
            raise ValueError("no demo steps")
        self.x = np.stack(xs)
        self.actions = np.asarray(actions, dtype=np.int64)

    def __len__(self):
        return len(self.actions)

    def sample(self, batch, rng):
        idx = rng.integers(0, len(self), size=batch)
        return self.x[idx], self.actions[idx]


@dataclasses.dataclass
class BcConfig:
    updates: int = 2000
    batch: int = 32
    lr: float = 3e-4
    weight_decay: float = 0.0
    grad_clip: float = 5.0


def bc_batch_grads(policy, batch):
    """Cross-entropy loss and gradients for one sampled batch."""
    if len(batch) == 3:
        clouds, robot, actions = batch
        logits, _, cache = policy.forward(clouds, robot)
    else:
        x, actions = batch
        logits, _, cache = policy.forward(x)
    logp = nn.log_softmax(logits)
    b = len(actions)
    loss = -float(np.mean(logp[np.arange(b), actions]))
    dlogits = np.exp(logp)
    dlogits[np.arange(b), actions] -= 1.0
    dlogits /= b
    grads = policy.backward(cache, dlogits.astype(logits.dtype),
                            np.zeros(b, dtype=logits.dtype))
    return loss, grads


def train_bc(policy, dataset, cfg, rng):
    """Clone actions from a dataset sampler; returns per-update losses."""
    opt = nn.AdamW(policy.params(), lr=cfg.lr, weight_decay=cfg.weight_decay)
    losses = []
    for _ in range(cfg.updates):
        loss, grads = bc_batch_grads(policy, dataset.sample(cfg.batch, rng))
        nn.clip_grad_norm(grads, cfg.grad_clip)
        opt.step(grads)
        losses.append(loss)
    return losses
