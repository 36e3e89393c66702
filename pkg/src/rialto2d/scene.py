"""Scene model: bodies, joints, robot, camera, success predicates, randomization.

Scenes are immutable value objects serialized as canonical JSON (sorted keys,
2-space indent, repr floats) so equal scenes produce byte-identical files.
Edit operations return new scenes and never mutate their input.
"""

import hashlib
import json
from dataclasses import dataclass, field, replace

from . import geometry as geo

SCENE_FORMAT = "rialto2d-scene"
SCENE_VERSION = 1

JOINT_KINDS = ("prismatic", "revolute", "fixed")


class SceneError(ValueError):
    """Scene file or scene graph is invalid; message lists the diagnostics."""


@dataclass(frozen=True)
class Body:
    id: str
    polygon: tuple  # CCW convex, body-local coords
    pose: tuple = (0.0, 0.0, 0.0)  # nominal world pose
    fixed: bool = False
    graspable: bool = False
    mass: float = 0.41
    friction: float = 0.5
    sites: dict = field(default_factory=dict)  # name -> local (x, y)
    distractor: bool = False


@dataclass(frozen=True)
class Joint:
    id: str
    parent: str
    child: str
    kind: str  # prismatic | revolute | fixed
    axis: tuple = None  # parent-frame unit vector (prismatic)
    anchor: tuple = None  # parent-frame point (revolute)
    limits: tuple = (0.0, 0.0)
    value: float = 0.0  # nominal joint value the stored poses correspond to
    friction: float = 0.1


@dataclass(frozen=True)
class RobotSpec:
    start: tuple = (0.0, 0.0, 0.0)
    grasp_radius: float = 0.02
    ee_radius: float = 0.012


@dataclass(frozen=True)
class Camera:
    pose: tuple = (0.0, 0.0, 0.0)
    fov: float = 1.4


@dataclass(frozen=True)
class PoseRange:
    pos_lo: tuple = (0.0, 0.0)
    pos_hi: tuple = (0.0, 0.0)
    rot: tuple = (0.0, 0.0)


@dataclass(frozen=True)
class Randomization:
    bodies: dict = field(default_factory=dict)  # body id -> PoseRange (offsets)
    robot: PoseRange = None
    joints: dict = field(default_factory=dict)  # joint id -> (lo, hi)


@dataclass(frozen=True)
class Scene:
    name: str
    bodies: tuple
    joints: tuple = ()
    robot: RobotSpec = field(default_factory=RobotSpec)
    camera: Camera = field(default_factory=Camera)
    success: dict = field(default_factory=dict)
    randomization: Randomization = field(default_factory=Randomization)
    episode_length: int = 100
    workspace: tuple = ((-1.0, -1.0), (1.0, 1.0))
    cloud_offset: tuple = (0.0, 0.0)
    cloud_scale: float = 1.0

    def body(self, body_id):
        for b in self.bodies:
            if b.id == body_id:
                return b
        raise KeyError(f"no body {body_id!r}")

    def joint(self, joint_id):
        for j in self.joints:
            if j.id == joint_id:
                return j
        raise KeyError(f"no joint {joint_id!r}")

    def kin(self):
        """Kinematic cache; lazily built, scenes are immutable so this is safe."""
        cache = object.__getattribute__(self, "__dict__").get("_kin")
        if cache is None:
            cache = KinCache(self)
            object.__setattr__(self, "_kin", cache)
        return cache


class KinCache:
    """Forest structure: parent joints, traversal order, joint rest transforms."""

    def __init__(self, scene):
        self.parent_joint = {}  # child body id -> Joint
        self.children = {b.id: [] for b in scene.bodies}
        for j in scene.joints:
            self.parent_joint[j.child] = j
            self.children[j.parent].append(j)
        self.roots = [b.id for b in scene.bodies if b.id not in self.parent_joint]
        # BFS from roots gives a parent-before-child order
        self.order = []
        queue = list(self.roots)
        while queue:
            bid = queue.pop(0)
            self.order.append(bid)
            for j in self.children[bid]:
                queue.append(j.child)
        # rest transform: child pose relative to the parent at the nominal value
        self.rel0 = {}
        poses = {b.id: b.pose for b in scene.bodies}
        for j in scene.joints:
            m = joint_motion(j, j.value)
            base = geo.pose_compose(poses[j.parent], m)
            self.rel0[j.id] = geo.pose_compose(geo.pose_inverse(base), poses[j.child])


def joint_motion(joint, value):
    """Pose contribution of a joint at `value`, expressed in the parent frame."""
    if joint.kind == "prismatic":
        ax, ay = joint.axis
        return (ax * value, ay * value, 0.0)
    if joint.kind == "revolute":
        return geo.rotation_about(joint.anchor, value)
    return (0.0, 0.0, 0.0)


# --- success predicates ---------------------------------------------------

PREDICATE_KINDS = ("all", "joint_above", "sites_within", "gripper_open")


def predicate_diagnostics(pred, scene, path="success"):
    out = []
    if not isinstance(pred, dict) or "kind" not in pred:
        return [f"{path}: predicate must be an object with a 'kind'"]
    kind = pred["kind"]
    if kind == "all":
        terms = pred.get("terms")
        if not isinstance(terms, list) or not terms:
            return [f"{path}: 'all' needs a non-empty 'terms' list"]
        for i, t in enumerate(terms):
            out += predicate_diagnostics(t, scene, f"{path}.terms[{i}]")
    elif kind == "joint_above":
        jid = pred.get("joint")
        if not any(j.id == jid for j in scene.joints):
            out.append(f"{path}: unknown joint {jid!r}")
        if not isinstance(pred.get("threshold"), (int, float)):
            out.append(f"{path}: missing numeric 'threshold'")
    elif kind == "sites_within":
        for key in ("a", "b"):
            ref = pred.get(key)
            if not (isinstance(ref, (list, tuple)) and len(ref) == 2):
                out.append(f"{path}: '{key}' must be [body, site]")
                continue
            bid, site = ref
            b = next((b for b in scene.bodies if b.id == bid), None)
            if b is None:
                out.append(f"{path}: unknown body {bid!r}")
            elif site not in b.sites:
                out.append(f"{path}: body {bid!r} has no site {site!r}")
        if not isinstance(pred.get("threshold"), (int, float)):
            out.append(f"{path}: missing numeric 'threshold'")
    elif kind == "gripper_open":
        pass
    else:
        out.append(f"{path}: unknown predicate kind {kind!r}")
    return out


def predicate_joints(pred):
    """Joint ids a predicate depends on (used by joint disturbances)."""
    if pred.get("kind") == "joint_above":
        return [pred["joint"]]
    if pred.get("kind") == "all":
        out = []
        for t in pred["terms"]:
            out += predicate_joints(t)
        return out
    return []


def predicate_site_bodies(pred):
    """Body ids referenced through sites (used by target disturbances)."""
    if pred.get("kind") == "sites_within":
        return [pred["a"][0], pred["b"][0]]
    if pred.get("kind") == "all":
        out = []
        for t in pred["terms"]:
            out += predicate_site_bodies(t)
        return out
    return []


# --- validation -----------------------------------------------------------

def validate_scene(scene):
    """Return a list of human-readable diagnostics; empty means valid."""
    out = []
    seen = set()
    for b in scene.bodies:
        if b.id in seen:
            out.append(f"duplicate body id {b.id!r}")
        seen.add(b.id)
        if len(b.polygon) < 3:
            out.append(f"body {b.id!r}: polygon needs at least 3 vertices")
        elif not geo.is_convex_ccw(b.polygon):
            out.append(f"body {b.id!r}: polygon must be convex with CCW winding")
        elif geo.polygon_area(b.polygon) < 1e-8:
            out.append(f"body {b.id!r}: polygon area is degenerate")
        if b.mass <= 0:
            out.append(f"body {b.id!r}: mass must be positive")
        if b.friction < 0:
            out.append(f"body {b.id!r}: friction must be non-negative")
        if b.distractor and b.graspable:
            out.append(f"body {b.id!r}: distractors cannot be graspable")
    body_ids = {b.id for b in scene.bodies}

    jseen = set()
    child_seen = set()
    for j in scene.joints:
        if j.id in jseen:
            out.append(f"duplicate joint id {j.id!r}")
        jseen.add(j.id)
        if j.parent not in body_ids:
            out.append(f"joint {j.id!r}: unknown parent {j.parent!r}")
        if j.child not in body_ids:
            out.append(f"joint {j.id!r}: unknown child {j.child!r}")
        if j.parent == j.child:
            out.append(f"joint {j.id!r}: parent and child must differ")
        if j.kind not in JOINT_KINDS:
            out.append(f"joint {j.id!r}: unknown kind {j.kind!r}")
        if j.kind == "prismatic":
            if j.axis is None:
                out.append(f"joint {j.id!r}: prismatic joints need an axis")
            else:
                n = (j.axis[0] ** 2 + j.axis[1] ** 2) ** 0.5
                if abs(n - 1.0) > 1e-6:
                    out.append(f"joint {j.id!r}: axis must be unit length")
        if j.kind == "revolute" and j.anchor is None:
            out.append(f"joint {j.id!r}: revolute joints need an anchor")
        lo, hi = j.limits
        if lo > hi:
            out.append(f"joint {j.id!r}: limits must satisfy lo <= hi")
        elif not (lo <= j.value <= hi):
            out.append(f"joint {j.id!r}: value {j.value} outside limits [{lo}, {hi}]")
        if j.child in child_seen:
            out.append(f"joint {j.id!r}: body {j.child!r} already has a parent joint")
        child_seen.add(j.child)

    # forest check: walking up from any body must terminate
    parent_of = {j.child: j.parent for j in scene.joints}
    for b in scene.bodies:
        hops = 0
        cur = b.id
        while cur in parent_of and hops <= len(scene.bodies):
            cur = parent_of[cur]
            hops += 1
        if hops > len(scene.bodies):
            out.append(f"kinematic graph has a cycle through {b.id!r}")
            break

    out += predicate_diagnostics(scene.success, scene) if scene.success else []

    for bid, pr in scene.randomization.bodies.items():
        if bid not in body_ids:
            out.append(f"randomization: unknown body {bid!r}")
        elif bid in parent_of:
            out.append(f"randomization: body {bid!r} is a joint child; randomize its root instead")
        if pr.pos_lo[0] > pr.pos_hi[0] or pr.pos_lo[1] > pr.pos_hi[1] or pr.rot[0] > pr.rot[1]:
            out.append(f"randomization for {bid!r}: min must not exceed max")
    if scene.randomization.robot is not None:
        pr = scene.randomization.robot
        if pr.pos_lo[0] > pr.pos_hi[0] or pr.pos_lo[1] > pr.pos_hi[1] or pr.rot[0] > pr.rot[1]:
            out.append("robot randomization: min must not exceed max")
    for jid, rng in scene.randomization.joints.items():
        j = next((j for j in scene.joints if j.id == jid), None)
        if j is None:
            out.append(f"randomization: unknown joint {jid!r}")
        elif not (j.limits[0] <= rng[0] <= rng[1] <= j.limits[1]):
            out.append(f"randomization for joint {jid!r}: range outside joint limits")

    if scene.episode_length <= 0:
        out.append("episode_length must be positive")
    if scene.camera.fov <= 0 or scene.camera.fov > geo.TWO_PI:
        out.append("camera fov must be in (0, 2*pi]")
    if scene.cloud_scale <= 0:
        out.append("cloud scale must be positive")
    (x0, y0), (x1, y1) = scene.workspace
    if x0 >= x1 or y0 >= y1:
        out.append("workspace min corner must be below max corner")
    if scene.robot.grasp_radius <= 0 or scene.robot.ee_radius <= 0:
        out.append("robot radii must be positive")
    return out


# --- (de)serialization ----------------------------------------------------

def _take(d, allowed, where, diags):
    unknown = set(d) - set(allowed)
    for k in sorted(unknown):
        diags.append(f"{where}: unknown field {k!r}")


def scene_from_dict(d):
    diags = []
    if d.get("format") != SCENE_FORMAT:
        raise SceneError(f"not a scene file (format {d.get('format')!r})")
    if d.get("version") != SCENE_VERSION:
        raise SceneError(f"unsupported scene version {d.get('version')!r}")
    _take(d, ("format", "version", "name", "bodies", "joints", "robot", "camera",
              "success", "randomization", "episode_length", "workspace", "cloud"), "scene", diags)

    bodies = []
    for i, bd in enumerate(d.get("bodies", [])):
        _take(bd, ("id", "polygon", "pose", "fixed", "graspable", "mass",
                   "friction", "sites", "distractor"), f"bodies[{i}]", diags)
        missing = [k for k in ("id", "polygon") if k not in bd]
        if missing:
            raise SceneError(f"invalid scene:\n  bodies[{i}]: missing fields {missing}")
        bodies.append(Body(
            id=bd["id"],
            polygon=tuple(tuple(p) for p in bd["polygon"]),
            pose=tuple(bd.get("pose", (0.0, 0.0, 0.0))),
            fixed=bool(bd.get("fixed", False)),
            graspable=bool(bd.get("graspable", False)),
            mass=float(bd.get("mass", 0.41)),
            friction=float(bd.get("friction", 0.5)),
            sites={k: tuple(v) for k, v in bd.get("sites", {}).items()},
            distractor=bool(bd.get("distractor", False)),
        ))
    joints = []
    for i, jd in enumerate(d.get("joints", [])):
        _take(jd, ("id", "parent", "child", "kind", "axis", "anchor",
                   "limits", "value", "friction"), f"joints[{i}]", diags)
        missing = [k for k in ("id", "parent", "child", "kind") if k not in jd]
        if missing:
            raise SceneError(f"invalid scene:\n  joints[{i}]: missing fields {missing}")
        joints.append(Joint(
            id=jd["id"], parent=jd["parent"], child=jd["child"], kind=jd["kind"],
            axis=tuple(jd["axis"]) if jd.get("axis") is not None else None,
            anchor=tuple(jd["anchor"]) if jd.get("anchor") is not None else None,
            limits=tuple(jd.get("limits", (0.0, 0.0))),
            value=float(jd.get("value", 0.0)),
            friction=float(jd.get("friction", 0.1)),
        ))
    rb = d.get("robot", {})
    robot = RobotSpec(start=tuple(rb.get("start", (0.0, 0.0, 0.0))),
                      grasp_radius=float(rb.get("grasp_radius", 0.02)),
                      ee_radius=float(rb.get("ee_radius", 0.012)))
    cm = d.get("camera", {})
    camera = Camera(pose=tuple(cm.get("pose", (0.0, 0.0, 0.0))), fov=float(cm.get("fov", 1.4)))

    rd = d.get("randomization", {})
    rand_bodies = {}
    for bid, pr in rd.get("bodies", {}).items():
        rand_bodies[bid] = PoseRange(pos_lo=tuple(pr["pos_lo"]), pos_hi=tuple(pr["pos_hi"]),
                                     rot=tuple(pr.get("rot", (0.0, 0.0))))
    rand_robot = None
    if rd.get("robot") is not None:
        pr = rd["robot"]
        rand_robot = PoseRange(pos_lo=tuple(pr["pos_lo"]), pos_hi=tuple(pr["pos_hi"]),
                               rot=tuple(pr.get("rot", (0.0, 0.0))))
    randomization = Randomization(
        bodies=rand_bodies, robot=rand_robot,
        joints={k: tuple(v) for k, v in rd.get("joints", {}).items()},
    )
    cl = d.get("cloud", {})
    scene = Scene(
        name=d.get("name", "scene"),
        bodies=tuple(bodies),
        joints=tuple(joints),
        robot=robot,
        camera=camera,
        success=d.get("success", {}),
        randomization=randomization,
        episode_length=int(d.get("episode_length", 100)),
        workspace=tuple(tuple(c) for c in d.get("workspace", ((-1.0, -1.0), (1.0, 1.0)))),
        cloud_offset=tuple(cl.get("offset", (0.0, 0.0))),
        cloud_scale=float(cl.get("scale", 1.0)),
    )
    diags += validate_scene(scene)
    if diags:
        raise SceneError("invalid scene:\n  " + "\n  ".join(diags))
    return scene


def scene_to_dict(scene):
    d = {
        "format": SCENE_FORMAT,
        "version": SCENE_VERSION,
        "name": scene.name,
        "workspace": [list(c) for c in scene.workspace],
        "bodies": [
            {
                "id": b.id,
                "polygon": [list(p) for p in b.polygon],
                "pose": list(b.pose),
                "fixed": b.fixed,
                "graspable": b.graspable,
                "mass": b.mass,
                "friction": b.friction,
                "sites": {k: list(v) for k, v in b.sites.items()},
                "distractor": b.distractor,
            }
            for b in scene.bodies
        ],
        "joints": [
            {
                "id": j.id, "parent": j.parent, "child": j.child, "kind": j.kind,
                "axis": list(j.axis) if j.axis is not None else None,
                "anchor": list(j.anchor) if j.anchor is not None else None,
                "limits": list(j.limits), "value": j.value, "friction": j.friction,
            }
            for j in scene.joints
        ],
        "robot": {"start": list(scene.robot.start), "grasp_radius": scene.robot.grasp_radius,
                  "ee_radius": scene.robot.ee_radius},
        "camera": {"pose": list(scene.camera.pose), "fov": scene.camera.fov},
        "success": scene.success,
        "randomization": {
            "bodies": {
                bid: {"pos_lo": list(pr.pos_lo), "pos_hi": list(pr.pos_hi), "rot": list(pr.rot)}
                for bid, pr in scene.randomization.bodies.items()
            },
            "robot": None if scene.randomization.robot is None else {
                "pos_lo": list(scene.randomization.robot.pos_lo),
                "pos_hi": list(scene.randomization.robot.pos_hi),
                "rot": list(scene.randomization.robot.rot),
            },
            "joints": {k: list(v) for k, v in scene.randomization.joints.items()},
        },
        "episode_length": scene.episode_length,
        "cloud": {"offset": list(scene.cloud_offset), "scale": scene.cloud_scale},
    }
    return d


def serialize_scene(scene):
    """Canonical text: sorted keys, fixed indent, repr floats."""
    return json.dumps(scene_to_dict(scene), sort_keys=True, indent=2) + "\n"


def parse_scene(text):
    try:
        d = json.loads(text)
    except json.JSONDecodeError as e:
        raise SceneError(f"scene JSON syntax error at line {e.lineno}, column {e.colno}: {e.msg}") from None
    return scene_from_dict(d)


def load_scene(path):
    with open(path, "r", encoding="utf-8") as f:
        return parse_scene(f.read())


def save_scene(path, scene):
    with open(path, "w", encoding="utf-8") as f:
        f.write(serialize_scene(scene))


def scene_signature(scene):
    """Hash of the canonical serialization; identifies a scene exactly."""
    return hashlib.sha256(serialize_scene(scene).encode("utf-8")).digest()


# --- edit operations ------------------------------------------------------

def _rewrite_site_refs(pred, site_owner):
    """Re-point [body, site] refs after a cut moved sites to new bodies."""
    if not isinstance(pred, dict):
        return pred
    if pred.get("kind") == "all":
        return {"kind": "all", "terms": [_rewrite_site_refs(t, site_owner) for t in pred["terms"]]}
    if pred.get("kind") == "sites_within":
        new = dict(pred)
        for key in ("a", "b"):
            bid, site = pred[key]
            new[key] = [site_owner.get((bid, site), bid), site]
        return new
    return pred


def cut_body(scene, body_id, p0, p1):
    """Split a convex body along the world-frame line p0 -> p1.

    Pieces keep the original local frame (so world geometry is unchanged),
    split the mass by area, and inherit sites by containment. Bodies wired
    into joints cannot be cut: the joint frames would be ambiguous.
    """
    body = scene.body(body_id)
    for j in scene.joints:
        if body_id in (j.parent, j.child):
            raise SceneError(f"cannot cut {body_id!r}: it participates in joint {j.id!r}")
    inv = geo.pose_inverse(body.pose)
    l0, l1 = geo.pose_apply(inv, p0), geo.pose_apply(inv, p1)
    try:
        left, right = geo.cut_convex(body.polygon, l0, l1)
    except ValueError as e:
        raise SceneError(f"cannot cut {body_id!r}: {e}") from None

    total = geo.polygon_area(body.polygon)
    pieces = []
    site_owner = {}
    taken = set()
    for suffix, poly in (("_a", left), ("_b", right)):
        pid = body_id + suffix
        if any(b.id == pid for b in scene.bodies):
            raise SceneError(f"cannot cut {body_id!r}: id {pid!r} already exists")
        sites = {}
        for name, pt in body.sites.items():
            if name in taken:
                continue
            if geo.point_in_polygon(poly, pt):
                sites[name] = pt
                taken.add(name)
                site_owner[(body_id, name)] = pid
        pieces.append(Body(
            id=pid, polygon=poly, pose=body.pose, fixed=body.fixed,
            graspable=body.graspable,
            mass=body.mass * geo.polygon_area(poly) / total,
            friction=body.friction, sites=sites, distractor=body.distractor,
        ))
    # sites outside both pieces go to the nearer one
    for name, pt in body.sites.items():
        if name in taken:
            continue
        da = geo.polygon_point_distance(pieces[0].polygon, pt)
        db = geo.polygon_point_distance(pieces[1].polygon, pt)
        k = 0 if da <= db else 1
        pieces[k].sites[name] = pt
        site_owner[(body_id, name)] = pieces[k].id

    bodies = []
    for b in scene.bodies:
        if b.id == body_id:
            bodies.extend(pieces)
        else:
            bodies.append(b)
    rand_bodies = dict(scene.randomization.bodies)
    if body_id in rand_bodies:
        pr = rand_bodies.pop(body_id)
        rand_bodies[pieces[0].id] = pr
        rand_bodies[pieces[1].id] = pr
    out = replace(
        scene,
        bodies=tuple(bodies),
        success=_rewrite_site_refs(scene.success, site_owner) if scene.success else scene.success,
        randomization=replace(scene.randomization, bodies=rand_bodies),
    )
    diags = validate_scene(out)
    if diags:
        raise SceneError("cut produced an invalid scene:\n  " + "\n  ".join(diags))
    return out


def add_joint(scene, joint):
    """Attach `joint.child` to `joint.parent`; returns the edited scene."""
    if isinstance(joint, dict):
        joint = Joint(
            id=joint["id"], parent=joint["parent"], child=joint["child"], kind=joint["kind"],
            axis=tuple(joint["axis"]) if joint.get("axis") is not None else None,
            anchor=tuple(joint["anchor"]) if joint.get("anchor") is not None else None,
            limits=tuple(joint.get("limits", (0.0, 0.0))),
            value=float(joint.get("value", 0.0)),
            friction=float(joint.get("friction", 0.1)),
        )
    out = replace(scene, joints=scene.joints + (joint,))
    diags = validate_scene(out)
    if diags:
        raise SceneError("add_joint produced an invalid scene:\n  " + "\n  ".join(diags))
    return out
