"""Bundled scenes (drawer2d, cabinet2d, shelf2d) and the clutter library.

All layouts are top-down views of a tabletop: the robot approaches from the
bottom (-y) and furniture sits near the top. Builders return ordinary Scene
values, so the bundled scenes round-trip through files like authored ones.
"""

import math

from . import geometry as geo
from .scene import Body, Camera, Joint, PoseRange, Randomization, RobotSpec, Scene, SceneError

BUNDLED = ("drawer2d", "cabinet2d", "shelf2d")


def rect(w, h):
    return ((-w / 2, -h / 2), (w / 2, -h / 2), (w / 2, h / 2), (-w / 2, h / 2))


def _child_pose(parent_pose, local):
    return geo.pose_compose(parent_pose, local)


def drawer2d():
    frame_pose = (0.0, 0.28, 0.0)
    bodies = (
        Body("frame_back", rect(0.40, 0.05), pose=frame_pose, fixed=True),
        Body("frame_left", rect(0.04, 0.26), pose=_child_pose(frame_pose, (-0.17, -0.155, 0.0)), fixed=True),
        Body("frame_right", rect(0.04, 0.26), pose=_child_pose(frame_pose, (0.17, -0.155, 0.0)), fixed=True),
        Body("drawer", rect(0.28, 0.22), pose=_child_pose(frame_pose, (0.0, -0.14, 0.0)),
             graspable=True, sites={"handle": (0.0, -0.11)}),
    )
    joints = (
        Joint("weld_left", "frame_back", "frame_left", "fixed"),
        Joint("weld_right", "frame_back", "frame_right", "fixed"),
        Joint("slide", "frame_back", "drawer", "prismatic", axis=(0.0, -1.0), limits=(0.0, 0.3)),
    )
    return Scene(
        name="drawer2d",
        bodies=bodies,
        joints=joints,
        robot=RobotSpec(start=(0.0, -0.35, math.pi / 2)),
        camera=Camera(pose=(0.0, -0.85, math.pi / 2), fov=1.4),
        success={"kind": "all", "terms": [
            {"kind": "joint_above", "joint": "slide", "threshold": 0.1},
            {"kind": "gripper_open"},
        ]},
        randomization=Randomization(bodies={
            "frame_back": PoseRange(pos_lo=(-0.26, -0.07), pos_hi=(0.16, 0.27), rot=(-0.5, 0.5)),
        }),
        episode_length=80,
        workspace=((-0.75, -0.75), (0.75, 0.85)),
        cloud_offset=(0.0, -0.85),
        cloud_scale=1.0,
    )


def cabinet2d():
    base_pose = (0.0, 0.34, 0.0)
    door_pose = _child_pose(base_pose, (0.01, -0.24, 0.0))
    bodies = (
        Body("cabinet_back", rect(0.34, 0.04), pose=base_pose, fixed=True),
        Body("wall_left", rect(0.04, 0.22), pose=_child_pose(base_pose, (-0.15, -0.13, 0.0)), fixed=True),
        Body("wall_right", rect(0.04, 0.22), pose=_child_pose(base_pose, (0.15, -0.13, 0.0)), fixed=True),
        Body("door", rect(0.26, 0.03), pose=door_pose,
             graspable=True, sites={"handle": (-0.11, 0.0)}),
    )
    joints = (
        Joint("weld_left", "cabinet_back", "wall_left", "fixed"),
        Joint("weld_right", "cabinet_back", "wall_right", "fixed"),
        Joint("hinge", "cabinet_back", "door", "revolute", anchor=(0.15, -0.24), limits=(0.0, 1.9)),
    )
    return Scene(
        name="cabinet2d",
        bodies=bodies,
        joints=joints,
        robot=RobotSpec(start=(-0.05, -0.38, math.pi / 2)),
        camera=Camera(pose=(0.0, -0.85, math.pi / 2), fov=1.4),
        success={"kind": "all", "terms": [
            {"kind": "joint_above", "joint": "hinge", "threshold": 0.5},
            {"kind": "gripper_open"},
        ]},
        randomization=Randomization(bodies={
            "cabinet_back": PoseRange(pos_lo=(-0.12, -0.08), pos_hi=(0.12, 0.10), rot=(-0.4, 0.4)),
        }),
        episode_length=90,
        workspace=((-0.75, -0.75), (0.75, 0.85)),
        cloud_offset=(0.0, -0.85),
        cloud_scale=1.0,
    )


def shelf2d():
    shelf_pose = (0.0, 0.42, 0.0)
    bodies = (
        Body("shelf_back", rect(0.50, 0.04), pose=shelf_pose, fixed=True,
             sites={"slot": (0.0, -0.10)}),
        Body("divider_left", rect(0.04, 0.16), pose=_child_pose(shelf_pose, (-0.10, -0.10, 0.0)), fixed=True),
        Body("divider_right", rect(0.04, 0.16), pose=_child_pose(shelf_pose, (0.10, -0.10, 0.0)), fixed=True),
        Body("book", rect(0.10, 0.05), pose=(0.0, -0.18, 0.0),
             graspable=True, mass=0.3, sites={"center": (0.0, 0.0)}),
    )
    joints = (
        Joint("weld_left", "shelf_back", "divider_left", "fixed"),
        Joint("weld_right", "shelf_back", "divider_right", "fixed"),
    )
    return Scene(
        name="shelf2d",
        bodies=bodies,
        joints=joints,
        robot=RobotSpec(start=(0.0, -0.45, math.pi / 2)),
        camera=Camera(pose=(0.0, -0.9, math.pi / 2), fov=1.4),
        success={"kind": "all", "terms": [
            {"kind": "sites_within", "a": ["book", "center"], "b": ["shelf_back", "slot"],
             "threshold": 0.04},
            {"kind": "gripper_open"},
        ]},
        randomization=Randomization(
            bodies={
                "shelf_back": PoseRange(pos_lo=(-0.10, -0.06), pos_hi=(0.10, 0.08), rot=(-0.3, 0.3)),
                "book": PoseRange(pos_lo=(-0.13, -0.08), pos_hi=(0.13, 0.08), rot=(-0.45, 0.45)),
            },
        ),
        episode_length=130,
        workspace=((-0.75, -0.8), (0.75, 0.85)),
        cloud_offset=(0.0, -0.9),
        cloud_scale=1.0,
    )


_BUILDERS = {"drawer2d": drawer2d, "cabinet2d": cabinet2d, "shelf2d": shelf2d}


def bundled_scene(name):
    try:
        return _BUILDERS[name]()
    except KeyError:
        raise SceneError(f"unknown bundled scene {name!r}; have {', '.join(BUNDLED)}") from None


def distractor_library():
    """Ten convex clutter shapes, desk-object sized."""
    return [
        ((-0.03, -0.03), (0.03, -0.03), (0.0, 0.045)),  # triangle
        rect(0.06, 0.06),
        rect(0.03, 0.1),
        rect(0.1, 0.035),
        geo.regular_polygon((0.0, 0.0), 0.04, n=5),
        geo.regular_polygon((0.0, 0.0), 0.045, n=6),
        geo.regular_polygon((0.0, 0.0), 0.035, n=8),
        ((-0.05, 0.0), (0.0, -0.028), (0.05, 0.0), (0.0, 0.028)),  # rhombus
        ((-0.05, -0.02), (0.05, -0.02), (0.03, 0.025), (-0.03, 0.025)),  # trapezoid
        ((-0.055, -0.012), (0.055, -0.006), (0.05, 0.015)),  # sliver
    ]


def _scaled(poly, factor):
    cx, cy = geo.polygon_centroid(poly)
    return tuple((cx + (x - cx) * factor, cy + (y - cy) * factor) for x, y in poly)


def inject_distractors(scene, state, k, rng, library=None, tries=100):
    """Add k clutter bodies at free poses; returns (scene, state) copies.

    Clutter never touches the task: success predicates and the privileged
    state vector ignore distractor bodies, but rendered clouds include them.
    """
    from dataclasses import replace

    from .sim import SimError, ee_polygon

    lib = library if library is not None else distractor_library()
    existing = sum(1 for b in scene.bodies if b.distractor)
    (wx0, wy0), (wx1, wy1) = scene.workspace
    world = [geo.transform_polygon(state.poses[b.id], b.polygon) for b in scene.bodies]
    world.append(ee_polygon(scene, state.ee))
    new_bodies = []
    new_poses = {}
    for i in range(k):
        shape = lib[int(rng.integers(len(lib)))]
        placed = False
        for _ in range(tries):
            pose = (float(rng.uniform(wx0, wx1)), float(rng.uniform(wy0, wy1)),
                    float(rng.uniform(-math.pi, math.pi)))
            poly = geo.transform_polygon(pose, _scaled(shape, 1.3))  # keep some clearance
            if any(geo.polygons_overlap(poly, w) for w in world):
                continue
            bid = f"distractor{existing + i:02d}"
            new_bodies.append(Body(bid, shape, pose=pose, fixed=True, distractor=True))
            new_poses[bid] = pose
            world.append(geo.transform_polygon(pose, shape))
            placed = True
            break
        if not placed:
            raise SimError(f"no room for distractor {i + 1} of {k} in scene {scene.name!r}")
    scene2 = replace(scene, bodies=scene.bodies + tuple(new_bodies))
    state2 = replace(state, poses={**state.poses, **new_poses})
    return scene2, state2
