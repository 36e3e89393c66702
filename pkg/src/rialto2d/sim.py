"""Quasistatic planar simulator.

No velocities or contact forces: each discrete action either realizes a
kinematically consistent new state or is a no-op. The gripper is the only
actuated element; grasped joint children move by projecting the commanded
gripper motion onto the joint's single degree of freedom.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from . import geometry as geo
from .scene import joint_motion, predicate_joints, predicate_site_bodies

ACTIONS = ("+x", "-x", "+y", "-y", "+rot", "-rot", "open", "close")
N_ACTIONS = len(ACTIONS)
TRANS_DELTA = 0.03
ROT_DELTA = 0.2


class SimError(RuntimeError):
    pass


@dataclass(frozen=True)
class SimState:
    poses: dict  # body id -> world pose (x, y, theta)
    joints: dict  # joint id -> value
    ee: tuple  # gripper pose
    gripper_open: bool
    attached: tuple  # (body id, gripper->body transform) or None
    t: int


def env_rng(master_seed, env_index, stream=0):
    """Per-environment stream keyed on (master seed, env index, purpose)."""
    key = (master_seed, env_index) if stream == 0 else (master_seed, env_index, stream)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(key)))


def action_delta(action):
    """Commanded (dx, dy, dtheta) for a motion action; zeros for open/close."""
    name = ACTIONS[action]
    return {
        "+x": (TRANS_DELTA, 0.0, 0.0), "-x": (-TRANS_DELTA, 0.0, 0.0),
        "+y": (0.0, TRANS_DELTA, 0.0), "-y": (0.0, -TRANS_DELTA, 0.0),
        "+rot": (0.0, 0.0, ROT_DELTA), "-rot": (0.0, 0.0, -ROT_DELTA),
    }.get(name, (0.0, 0.0, 0.0))


def ee_polygon(scene, ee_pose):
    x, y, th = ee_pose
    return geo.regular_polygon((x, y), scene.robot.ee_radius, n=8, phase=th)


def fk_poses(scene, root_poses, joint_values):
    """World poses for every body from root poses and joint values."""
    kin = scene.kin()
    poses = dict(root_poses)
    for bid in kin.order:
        j = kin.parent_joint.get(bid)
        if j is None:
            continue
        m = joint_motion(j, joint_values[j.id])
        poses[bid] = geo.pose_compose(geo.pose_compose(poses[j.parent], m), kin.rel0[j.id])
    return poses


def world_polygon(scene, state_poses, body):
    return geo.transform_polygon(state_poses[body.id], body.polygon)


def _root_of(scene, body_id):
    kin = scene.kin()
    cur = body_id
    while cur in kin.parent_joint:
        cur = kin.parent_joint[cur].parent
    return cur


def _ee_blocked(scene, poses, ee_pose):
    ee_poly = ee_polygon(scene, ee_pose)
    for b in scene.bodies:
        if not b.fixed:
            continue
        if geo.polygons_overlap(ee_poly, geo.transform_polygon(poses[b.id], b.polygon)):
            return True
    return False


def site_world(scene, state, body_id, site):
    return geo.pose_apply(state.poses[body_id], scene.body(body_id).sites[site])


def check_success(scene, state):
    if not scene.success:
        return False
    return _eval_pred(scene.success, scene, state)


def _eval_pred(pred, scene, state):
    kind = pred["kind"]
    if kind == "all":
        return all(_eval_pred(t, scene, state) for t in pred["terms"])
    if kind == "joint_above":
        return state.joints[pred["joint"]] > pred["threshold"]
    if kind == "sites_within":
        ax, ay = site_world(scene, state, pred["a"][0], pred["a"][1])
        bx, by = site_world(scene, state, pred["b"][0], pred["b"][1])
        return math.hypot(ax - bx, ay - by) < pred["threshold"]
    if kind == "gripper_open":
        return state.gripper_open
    raise SimError(f"unknown predicate kind {kind!r}")


def nominal_state(scene):
    """State with every body at its authored pose and joints at rest."""
    joints = {j.id: j.value for j in scene.joints}
    roots = {bid: scene.body(bid).pose for bid in scene.kin().roots}
    return SimState(poses=fk_poses(scene, roots, joints), joints=joints,
                    ee=scene.robot.start, gripper_open=True, attached=None, t=0)


def _sample_pose(nominal, pose_range, rng):
    ox = rng.uniform(pose_range.pos_lo[0], pose_range.pos_hi[0])
    oy = rng.uniform(pose_range.pos_lo[1], pose_range.pos_hi[1])
    oth = rng.uniform(pose_range.rot[0], pose_range.rot[1])
    return (nominal[0] + ox, nominal[1] + oy, nominal[2] + oth)


def _start_collision_free(scene, poses, ee):
    ee_poly = ee_polygon(scene, ee)
    world = {b.id: geo.transform_polygon(poses[b.id], b.polygon) for b in scene.bodies}
    roots = {b.id: _root_of(scene, b.id) for b in scene.bodies}
    ids = [b.id for b in scene.bodies]
    for i, a in enumerate(ids):
        if geo.polygons_overlap(ee_poly, world[a]):
            return False
        for b in ids[i + 1:]:
            if roots[a] != roots[b] and geo.polygons_overlap(world[a], world[b]):
                return False
    return True


def reset(scene, rng, max_tries=100):
    """Sample a start: randomized roots, joints, and gripper, collision-free."""
    rand = scene.randomization
    kin = scene.kin()
    for _ in range(max_tries):
        joints = {}
        for j in scene.joints:
            jr = rand.joints.get(j.id)
            joints[j.id] = float(rng.uniform(jr[0], jr[1])) if jr is not None else j.value
        roots = {}
        for bid in kin.roots:
            body = scene.body(bid)
            pr = rand.bodies.get(bid)
            roots[bid] = _sample_pose(body.pose, pr, rng) if pr is not None else body.pose
        ee = _sample_pose(scene.robot.start, rand.robot, rng) if rand.robot is not None else scene.robot.start
        poses = fk_poses(scene, roots, joints)
        if _start_collision_free(scene, poses, ee):
            return SimState(poses=poses, joints=joints, ee=ee,
                            gripper_open=True, attached=None, t=0)
    raise SimError(f"reset: no collision-free start in {max_tries} tries for scene {scene.name!r}")


def grasp_candidate(scene, state):
    """Body id the gripper would attach to if it closed right now, or None."""
    att = _resolve_grasp(scene, state)
    return None if att is None else att[0]


def state_to_dict(state):
    return {
        "poses": {k: list(v) for k, v in state.poses.items()},
        "joints": dict(state.joints),
        "ee": list(state.ee),
        "gripper_open": state.gripper_open,
        "attached": None if state.attached is None else
                    [state.attached[0], list(state.attached[1])],
        "t": state.t,
    }


def state_from_dict(d):
    return SimState(
        poses={k: tuple(v) for k, v in d["poses"].items()},
        joints={k: float(v) for k, v in d["joints"].items()},
        ee=tuple(d["ee"]),
        gripper_open=bool(d["gripper_open"]),
        attached=None if d.get("attached") is None else
                 (d["attached"][0], tuple(d["attached"][1])),
        t=int(d["t"]),
    )


def _resolve_grasp(scene, state):
    best = None
    ee_pos = (state.ee[0], state.ee[1])
    for b in scene.bodies:
        if not b.graspable:
            continue
        d = geo.polygon_boundary_distance(world_polygon(scene, state.poses, b), ee_pos)
        if d <= scene.robot.grasp_radius and (best is None or (d, b.id) < best[:2]):
            best = (d, b.id)
    if best is None:
        return None
    bid = best[1]
    return (bid, geo.pose_compose(geo.pose_inverse(state.ee), state.poses[bid]))


def _recompute_subtree(scene, state_poses, joints):
    kin = scene.kin()
    roots = {bid: state_poses[bid] for bid in kin.roots}
    return fk_poses(scene, roots, joints)


def _drag_joint(scene, state, joint, dx, dy, dth, t2):
    v = state.joints[joint.id]
    lo, hi = joint.limits
    parent_world = state.poses[joint.parent]
    ex, ey, eth = state.ee
    if joint.kind == "prismatic":
        if dth != 0.0:
            return replace(state, t=t2)  # wrist rotation cannot move a slider
        ux, uy = geo.pose_rotate_vector(parent_world, joint.axis)
        dv = dx * ux + dy * uy
        v2 = min(max(v + dv, lo), hi)
        ee2 = (ex + ux * (v2 - v), ey + uy * (v2 - v), eth)
    else:  # revolute
        c = geo.pose_apply(parent_world, joint.anchor)
        rx, ry = ex - c[0], ey - c[1]
        rn = math.hypot(rx, ry)
        if dth != 0.0:
            dv = dth
        elif rn < 1e-9:
            dv = 0.0
        else:
            tx, ty = -ry / rn, rx / rn
            dv = (dx * tx + dy * ty) / rn
        v2 = min(max(v + dv, lo), hi)
        rot = geo.rotation_about(c, v2 - v)
        ee2 = geo.pose_compose(rot, state.ee)
    if v2 == v and ee2 == state.ee:
        return replace(state, t=t2)
    if _ee_blocked(scene, state.poses, ee2):
        return replace(state, t=t2)
    joints2 = dict(state.joints)
    joints2[joint.id] = v2
    poses2 = _recompute_subtree(scene, state.poses, joints2)
    return replace(state, poses=poses2, joints=joints2, ee=ee2, t=t2)


def _motion(scene, state, dx, dy, dth, t2):
    kin = scene.kin()
    if state.attached is not None:
        bid, grasp = state.attached
        j = kin.parent_joint.get(bid)
        if j is not None and j.kind == "fixed":
            return replace(state, t=t2)  # welded to its parent; nothing moves
        if j is not None:
            return _drag_joint(scene, state, j, dx, dy, dth, t2)
        # free root in hand: the pair moves rigidly with the gripper
        ee2 = (state.ee[0] + dx, state.ee[1] + dy, state.ee[2] + dth)
        if _ee_blocked(scene, state.poses, ee2):
            return replace(state, t=t2)
        poses2 = dict(state.poses)
        poses2[bid] = geo.pose_compose(ee2, grasp)
        if kin.children[bid]:
            joints2 = state.joints
            full = _recompute_subtree(scene, poses2, joints2)
            poses2 = full
        return replace(state, poses=poses2, ee=ee2, t=t2)
    ee2 = (state.ee[0] + dx, state.ee[1] + dy, state.ee[2] + dth)
    if _ee_blocked(scene, state.poses, ee2):
        return replace(state, t=t2)
    return replace(state, ee=ee2, t=t2)


def step_delta(scene, state, action, dx, dy, dth):
    """Step with an explicit motion delta (noise models perturb it)."""
    t2 = state.t + 1
    name = ACTIONS[action]
    if name == "open":
        new = replace(state, gripper_open=True, attached=None, t=t2)
    elif name == "close":
        if state.gripper_open:
            new = replace(state, gripper_open=False, attached=_resolve_grasp(scene, state), t=t2)
        else:
            new = replace(state, t=t2)
    else:
        new = _motion(scene, state, dx, dy, dth, t2)
    reward = 1.0 if check_success(scene, new) else 0.0
    done = reward == 1.0 or new.t >= scene.episode_length
    return new, reward, done


def step(scene, state, action):
    """Apply one discrete action; returns (state, reward, done)."""
    dx, dy, dth = action_delta(action)
    return step_delta(scene, state, int(action), dx, dy, dth)


# --- disturbances -----------------------------------------------------------

DISTURBANCES = ("move_object", "move_target", "close_joint", "shift_robot")


def _detach_if(state, cond):
    if state.attached is not None and cond(state.attached[0]):
        return replace(state, attached=None)
    return state


def _try_repose_root(scene, state, root_id, rng, tries=20):
    body = scene.body(root_id)
    pr = scene.randomization.bodies.get(root_id)
    for _ in range(tries):
        if pr is not None:
            pose = _sample_pose(body.pose, pr, rng)
        else:
            pose = (state.poses[root_id][0] + rng.uniform(-0.05, 0.05),
                    state.poses[root_id][1] + rng.uniform(-0.05, 0.05),
                    state.poses[root_id][2] + rng.uniform(-0.2, 0.2))
        roots = {bid: state.poses[bid] for bid in scene.kin().roots}
        roots[root_id] = pose
        poses = fk_poses(scene, roots, state.joints)
        if _start_collision_free(scene, poses, state.ee):
            return replace(state, poses=poses)
    return state


def apply_disturbance(scene, state, kind, rng):
    """Mid-episode perturbation; always returns a kinematically valid state."""
    kin = scene.kin()
    if kind == "move_object":
        candidates = [bid for bid in kin.roots
                      if bid in scene.randomization.bodies or not scene.body(bid).fixed]
        candidates = [bid for bid in candidates if not scene.body(bid).distractor]
        if not candidates:
            return state
        root_id = candidates[int(rng.integers(len(candidates)))]
        state = _detach_if(state, lambda bid: _root_of(scene, bid) == root_id)
        return _try_repose_root(scene, state, root_id, rng)

    if kind == "move_target":
        site_bodies = {bid for bid in predicate_site_bodies(scene.success or {})
                       if not scene.body(bid).graspable}
        if not site_bodies:
            return state
        root_id = _root_of(scene, sorted(site_bodies)[0])
        state = _detach_if(state, lambda bid: _root_of(scene, bid) == root_id)
        return _try_repose_root(scene, state, root_id, rng)

    if kind == "close_joint":
        jids = predicate_joints(scene.success or {})
        if not jids:
            return state
        joints2 = dict(state.joints)
        for jid in jids:
            j = scene.joint(jid)
            joints2[jid] = j.limits[0]
        poses2 = _recompute_subtree(scene, state.poses, joints2)
        new = replace(state, poses=poses2, joints=joints2)
        if new.attached is not None:
            bid, grasp = new.attached
            if kin.parent_joint.get(bid) is not None:
                ee2 = geo.pose_compose(poses2[bid], geo.pose_inverse(grasp))
                if _ee_blocked(scene, poses2, ee2):
                    new = replace(new, attached=None)  # wrenched out of the gripper
                else:
                    new = replace(new, ee=ee2)
        return new

    if kind == "shift_robot":
        for _ in range(20):
            ee2 = (state.ee[0] + rng.uniform(-0.06, 0.06),
                   state.ee[1] + rng.uniform(-0.06, 0.06),
                   state.ee[2] + rng.uniform(-0.3, 0.3))
            if _ee_blocked(scene, state.poses, ee2):
                continue
            new = replace(state, ee=ee2)
            if new.attached is not None:
                bid, grasp = new.attached
                if kin.parent_joint.get(bid) is not None:
                    new = replace(new, attached=None)  # yanked off the handle
                else:
                    poses2 = dict(new.poses)
                    poses2[bid] = geo.pose_compose(ee2, grasp)
                    if kin.children[bid]:
                        poses2 = _recompute_subtree(scene, poses2, new.joints)
                    new = replace(new, poses=poses2)
            return new
        return state

    raise SimError(f"unknown disturbance kind {kind!r}")


# --- batched envs -----------------------------------------------------------

_WORKER_SCENE = None


def _worker_init(scene):
    global _WORKER_SCENE
    _WORKER_SCENE = scene


def _worker_step(payload):
    state, action = payload
    return step(_WORKER_SCENE, state, action)


class EnvBatch:
    """N independent copies of a scene with per-env seeded streams.

    `workers > 1` fans stepping out to processes; results are merged in env
    order so serial and parallel stepping are bitwise identical.
    """

    def __init__(self, scene, n_envs, seed, workers=1):
        self.scene = scene
        self.n = int(n_envs)
        self.rngs = [env_rng(seed, i) for i in range(self.n)]
        self.states = [reset(scene, r) for r in self.rngs]
        self.workers = int(workers)
        self._pool = None
        if self.workers > 1:
            import multiprocessing as mp

            ctx = mp.get_context("fork")
            self._pool = ctx.Pool(self.workers, initializer=_worker_init, initargs=(scene,))

    def step(self, actions):
        """Step every env; finished envs auto-reset. Returns (rewards, dones)."""
        rewards = np.zeros(self.n, dtype=np.float64)
        dones = np.zeros(self.n, dtype=bool)
        if self._pool is not None:
            payloads = [(self.states[i], int(actions[i])) for i in range(self.n)]
            results = self._pool.map(_worker_step, payloads)
        else:
            results = [step(self.scene, self.states[i], int(actions[i])) for i in range(self.n)]
        for i, (s, r, d) in enumerate(results):
            rewards[i] = r
            dones[i] = d
            self.states[i] = reset(self.scene, self.rngs[i]) if d else s
        return rewards, dones

    def close(self):
        if self._pool is not None:
            self._pool.terminate()
            self._pool.join()
            self._pool = None
