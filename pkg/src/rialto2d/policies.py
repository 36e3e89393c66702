"""Policies: privileged-state actor-critic and point-cloud actor-critic.

Both kinds share the trunk between actor and value heads (first hidden layer
is common). The observation policy encodes clouds with a per-point MLP and
max+mean pooling so the cloud is consumed as a set, then concatenates the
robot's own state before the trunk.
"""

import math
import struct

import numpy as np

from . import nn
from .sim import N_ACTIONS

STATE_KIND = 1
OBS_KIND = 2
ROBOT_DIM = 5


def derive_seed(seed, k):
    return int(np.random.SeedSequence((seed, k)).generate_state(1)[0])


def state_dim(scene):
    n_bodies = sum(1 for b in scene.bodies if not b.distractor)
    n_joints = sum(1 for j in scene.joints if j.kind != "fixed")
    return 4 * n_bodies + n_joints + ROBOT_DIM


def state_encode(scene, state):
    """Privileged vector: body poses, articulation values, gripper state.

    Distractor bodies and fixed joints are skipped so the layout depends only
    on the task-relevant structure; a cluttered variant of a scene encodes to
    the same dimensions as the clean one.
    """
    out = []
    for b in scene.bodies:
        if b.distractor:
            continue
        x, y, th = state.poses[b.id]
        out += [x, y, math.cos(th), math.sin(th)]
    for j in scene.joints:
        if j.kind != "fixed":
            out.append(state.joints[j.id])
    ex, ey, eth = state.ee
    out += [ex, ey, math.cos(eth), math.sin(eth), 1.0 if state.gripper_open else 0.0]
    return np.array(out, dtype=np.float32)


class StatePolicy:
    kind = "state"

    def __init__(self, in_dim, hidden=(256, 256), n_actions=N_ACTIONS, seed=0):
        self.in_dim = int(in_dim)
        self.hidden = tuple(hidden)
        self.n_actions = int(n_actions)
        h0 = self.hidden[0]
        rest = list(self.hidden[1:])
        self.shared = nn.Mlp([self.in_dim, h0], seed=derive_seed(seed, 0), tanh_output=True)
        self.actor = nn.Mlp([h0] + rest + [self.n_actions], seed=derive_seed(seed, 1), out_gain=0.01)
        self.value = nn.Mlp([h0] + rest + [1], seed=derive_seed(seed, 2))

    def nets(self):
        return [self.shared, self.actor, self.value]

    def params(self):
        out = []
        for net in self.nets():
            out += net.params()
        return out

    def forward(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=np.float32))
        h, c_sh = self.shared.forward(x)
        logits, c_a = self.actor.forward(h)
        v, c_v = self.value.forward(h)
        return logits, v[:, 0], (c_sh, c_a, c_v)

    def backward(self, cache, dlogits, dvalues):
        c_sh, c_a, c_v = cache
        g_a, dh_a = self.actor.backward(c_a, dlogits)
        g_v, dh_v = self.value.backward(c_v, np.asarray(dvalues)[:, None])
        g_sh, _ = self.shared.backward(c_sh, dh_a + dh_v)
        return g_sh + g_a + g_v

    def act(self, x, mode="sample", rng=None):
        logits, values, _ = self.forward(x)
        return _pick(logits, values, mode, rng)

    def astype(self, dtype):
        out = StatePolicy.__new__(StatePolicy)
        out.in_dim, out.hidden, out.n_actions = self.in_dim, self.hidden, self.n_actions
        out.shared = self.shared.astype(dtype)
        out.actor = self.actor.astype(dtype)
        out.value = self.value.astype(dtype)
        return out


class ObsPolicy:
    kind = "obs"

    def __init__(self, point_sizes=(64, 128), embed=128, hidden=(256, 256),
                 n_actions=N_ACTIONS, seed=0):
        self.point_sizes = tuple(point_sizes)
        self.embed = int(embed)
        self.hidden = tuple(hidden)
        self.n_actions = int(n_actions)
        feat = self.point_sizes[-1]
        h0 = self.hidden[0]
        rest = list(self.hidden[1:])
        self.pernet = nn.Mlp([2] + list(self.point_sizes), seed=derive_seed(seed, 0), tanh_output=True)
        self.proj = nn.Mlp([2 * feat, self.embed], seed=derive_seed(seed, 1))
        self.trunk = nn.Mlp([self.embed + ROBOT_DIM, h0], seed=derive_seed(seed, 2), tanh_output=True)
        self.actor = nn.Mlp([h0] + rest + [self.n_actions], seed=derive_seed(seed, 3), out_gain=0.01)
        self.value = nn.Mlp([h0] + rest + [1], seed=derive_seed(seed, 4))

    def nets(self):
        return [self.pernet, self.proj, self.trunk, self.actor, self.value]

    def params(self):
        out = []
        for net in self.nets():
            out += net.params()
        return out

    def encode(self, clouds):
        """Set embedding of clouds (B, P, 2) -> (B, embed) plus cache."""
        clouds = np.asarray(clouds, dtype=np.float32)
        single = clouds.ndim == 2
        if single:
            clouds = clouds[None]
        bsz, npts, _ = clouds.shape
        flat = clouds.reshape(bsz * npts, 2)
        f, c_per = self.pernet.forward(flat)
        feat = f.reshape(bsz, npts, -1)
        amax = feat.argmax(axis=1)
        mx = np.take_along_axis(feat, amax[:, None, :], axis=1)[:, 0, :]
        av = feat.mean(axis=1)
        pooled = np.concatenate([mx, av], axis=1)
        emb, c_proj = self.proj.forward(pooled)
        cache = (c_per, amax, (bsz, npts, feat.shape[-1]), c_proj)
        return (emb[0] if single else emb), cache

    def forward(self, clouds, robot):
        emb, c_enc = self.encode(clouds)
        emb = np.atleast_2d(emb)
        robot = np.atleast_2d(np.asarray(robot, dtype=np.float32))
        h = np.concatenate([emb, robot], axis=1)
        s, c_tr = self.trunk.forward(h)
        logits, c_a = self.actor.forward(s)
        v, c_v = self.value.forward(s)
        return logits, v[:, 0], (c_enc, c_tr, c_a, c_v)

    def backward(self, cache, dlogits, dvalues):
        (c_per, amax, (bsz, npts, feat_dim), c_proj), c_tr, c_a, c_v = cache
        g_a, ds_a = self.actor.backward(c_a, dlogits)
        g_v, ds_v = self.value.backward(c_v, np.asarray(dvalues)[:, None])
        g_tr, dh = self.trunk.backward(c_tr, ds_a + ds_v)
        demb = dh[:, :self.embed]
        g_proj, dpooled = self.proj.backward(c_proj, demb)
        dmx = dpooled[:, :feat_dim]
        dav = dpooled[:, feat_dim:]
        dfeat = np.zeros((bsz, npts, feat_dim), dtype=np.float32)
        dfeat += (dav / npts)[:, None, :]
        np.add.at(dfeat, (np.arange(bsz)[:, None], amax, np.arange(feat_dim)[None, :]), dmx)
        g_per, _ = self.pernet.backward(c_per, dfeat.reshape(bsz * npts, feat_dim))
        return g_per + g_proj + g_tr + g_a + g_v

    def act(self, cloud, robot, mode="sample", rng=None):
        logits, values, _ = self.forward(cloud[None] if np.asarray(cloud).ndim == 2 else cloud,
                                         robot)
        return _pick(logits, values, mode, rng)

    def astype(self, dtype):
        out = ObsPolicy.__new__(ObsPolicy)
        out.point_sizes, out.embed = self.point_sizes, self.embed
        out.hidden, out.n_actions = self.hidden, self.n_actions
        out.pernet = self.pernet.astype(dtype)
        out.proj = self.proj.astype(dtype)
        out.trunk = self.trunk.astype(dtype)
        out.actor = self.actor.astype(dtype)
        out.value = self.value.astype(dtype)
        return out


def _pick(logits, values, mode, rng):
    cat = nn.Categorical(logits)
    if mode == "greedy":
        a = cat.argmax()
    elif mode == "sample":
        if rng is None:
            raise ValueError("sampling needs an rng")
        a = cat.sample(rng)
    else:
        raise ValueError(f"unknown act mode {mode!r}")
    return int(a[0]), float(cat.log_prob(a)[0]), float(values[0])


def copy_params(policy):
    return [p.copy() for p in policy.params()]


def set_params(policy, params):
    for p, src in zip(policy.params(), params):
        p[...] = src


# --- checkpoints ------------------------------------------------------------

def save_policy(path, policy, scene_sig):
    """Policy checkpoint: net container plus kind byte and scene signature."""
    if len(scene_sig) != 32:
        raise ValueError("scene signature must be 32 bytes")
    with open(path, "wb") as f:
        f.write(nn.CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", nn.CHECKPOINT_VERSION))
        f.write(struct.pack("<B", STATE_KIND if policy.kind == "state" else OBS_KIND))
        f.write(scene_sig)
        if policy.kind == "state":
            f.write(struct.pack("<I", policy.in_dim))
        for net in policy.nets():
            nn.write_net(f, net)


def load_policy(path, expect_sig=None):
    """Returns (policy, scene_sig); checks the signature when one is expected."""
    with open(path, "rb") as f:
        magic = f.read(len(nn.CHECKPOINT_MAGIC))
        if magic != nn.CHECKPOINT_MAGIC:
            raise ValueError("not a policy checkpoint: bad magic")
        (version,) = struct.unpack("<I", f.read(4))
        if version != nn.CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        (kind,) = struct.unpack("<B", f.read(1))
        sig = f.read(32)
        if kind == STATE_KIND:
            (in_dim,) = struct.unpack("<I", f.read(4))
            policy = StatePolicy.__new__(StatePolicy)
            policy.shared = nn.read_net(f, tanh_output=True)
            policy.actor = nn.read_net(f)
            policy.value = nn.read_net(f)
            policy.in_dim = in_dim
            policy.hidden = (policy.shared.sizes[1],) + tuple(policy.actor.sizes[1:-1])
            policy.n_actions = policy.actor.sizes[-1]
        elif kind == OBS_KIND:
            policy = ObsPolicy.__new__(ObsPolicy)
            policy.pernet = nn.read_net(f, tanh_output=True)
            policy.proj = nn.read_net(f)
            policy.trunk = nn.read_net(f, tanh_output=True)
            policy.actor = nn.read_net(f)
            policy.value = nn.read_net(f)
            policy.point_sizes = policy.pernet.sizes[1:]
            policy.embed = policy.proj.sizes[-1]
            policy.hidden = (policy.trunk.sizes[1],) + tuple(policy.actor.sizes[1:-1])
            policy.n_actions = policy.actor.sizes[-1]
        else:
            raise ValueError(f"unknown policy kind byte {kind}")
    if expect_sig is not None and sig != expect_sig:
        raise ValueError("policy was trained for a different scene (signature mismatch)")
    return policy, sig
