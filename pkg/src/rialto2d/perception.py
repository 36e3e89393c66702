"""Point clouds: camera rendering, boundary sampling, and augmentation.

The camera is a planar depth sensor: rays fan out across the field of view
and return the first boundary they hit, so bodies occlude each other exactly
as a real depth camera would see them. Augmentation follows a fixed order --
append robot points, drop out, jitter, normalize, resample -- because the
training stack freezes statistics against that order.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import geometry as geo
from .sim import ee_polygon


class PerceptionError(RuntimeError):
    pass


@dataclass
class AugmentConfig:
    total: int = 400  # cloud size the policy consumes
    robot_points: int = 200  # appended from the known gripper pose
    dropout: tuple = (0.1, 0.3)  # uniform range for the dropped fraction
    jitter_ratio: float = 0.3  # fraction of points that get noise
    jitter_std: float = 0.01  # meters, per coordinate
    robot_radius: float = 0.012
    offset: tuple = (0.0, 0.0)  # subtracted before scaling
    scale: float = 1.0

    @classmethod
    def for_scene(cls, scene, **over):
        cfg = cls(robot_radius=scene.robot.ee_radius,
                  offset=tuple(scene.cloud_offset), scale=scene.cloud_scale)
        for k, v in over.items():
            setattr(cfg, k, v)
        return cfg

    @property
    def scene_points(self):
        return self.total - self.robot_points


def _world_segments(scene, state):
    """All body edges as arrays: starts (M,2), ends (M,2), body index (M,)."""
    a, b, owner = [], [], []
    for bi, body in enumerate(scene.bodies):
        poly = geo.transform_polygon(state.poses[body.id], body.polygon)
        n = len(poly)
        for i in range(n):
            a.append(poly[i])
            b.append(poly[(i + 1) % n])
            owner.append(bi)
    return np.asarray(a), np.asarray(b), np.asarray(owner)


def cast_rays(scene, state, origin, angles):
    """First-hit ray casting. Returns (points, body_index, hit_mask).

    points/body_index cover only the rays that hit; hit_mask says which.
    """
    a, b, owner = _world_segments(scene, state)
    angles = np.asarray(angles, dtype=np.float64)
    d = np.stack([np.cos(angles), np.sin(angles)], axis=1)  # (K,2)
    o = np.asarray(origin, dtype=np.float64)
    e = b - a  # (M,2)
    q = a - o[None, :]  # (M,2)
    denom = d[:, 0:1] * e[None, :, 1] - d[:, 1:2] * e[None, :, 0]  # (K,M)
    tnum = q[:, 0] * e[:, 1] - q[:, 1] * e[:, 0]  # (M,)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = tnum[None, :] / denom
        s = (q[None, :, 0] * d[:, 1:2] - q[None, :, 1] * d[:, 0:1]) / denom
    valid = (np.abs(denom) > 1e-15) & (t > 1e-9) & (s >= -1e-12) & (s <= 1 + 1e-12)
    t = np.where(valid, t, np.inf)
    nearest = np.argmin(t, axis=1)
    t_hit = t[np.arange(t.shape[0]), nearest]
    hit = np.isfinite(t_hit)
    pts = o[None, :] + d[hit] * t_hit[hit, None]
    return pts, owner[nearest[hit]], hit


def render_camera_pcd(scene, state, n, rng, max_factor=20):
    """n first-hit points from rays sampled uniformly over the camera fov.

    Missing rays are resampled up to max_factor * n casts, then the cloud is
    padded by duplicating hits. A state with no visible geometry is an error.
    """
    cx, cy, cth = scene.camera.pose
    fov = scene.camera.fov
    collected = []
    cast_budget = max_factor * n
    need = n
    while need > 0 and cast_budget > 0:
        k = min(need, cast_budget)
        angles = cth + (rng.random(k) - 0.5) * fov
        pts, _, hit = cast_rays(scene, state, (cx, cy), angles)
        cast_budget -= k
        if pts.shape[0]:
            collected.append(pts)
            need -= pts.shape[0]
    if not collected:
        raise PerceptionError(f"camera sees no geometry in scene {scene.name!r}")
    cloud = np.concatenate(collected, axis=0)
    if cloud.shape[0] < n:
        pad = rng.integers(0, cloud.shape[0], size=n - cloud.shape[0])
        cloud = np.concatenate([cloud, cloud[pad]], axis=0)
    return cloud[:n]


def _perimeter_table(polys):
    a, b = [], []
    for poly in polys:
        n = len(poly)
        for i in range(n):
            a.append(poly[i])
            b.append(poly[(i + 1) % n])
    a = np.asarray(a)
    b = np.asarray(b)
    lengths = np.hypot(*(b - a).T)
    return a, b, lengths


def sample_on_boundaries(polys, n, rng):
    """n points uniform over the total boundary length of the polygons."""
    a, b, lengths = _perimeter_table(polys)
    cum = np.cumsum(lengths)
    total = cum[-1]
    if total <= 0:
        raise PerceptionError("no boundary to sample")
    u = rng.random(n) * total
    idx = np.searchsorted(cum, u, side="right")
    idx = np.minimum(idx, len(lengths) - 1)
    prev = cum[idx] - lengths[idx]
    frac = np.where(lengths[idx] > 0, (u - prev) / np.maximum(lengths[idx], 1e-300), 0.0)
    return a[idx] + (b[idx] - a[idx]) * frac[:, None]


def render_full_pcd(scene, state, n, rng):
    """Occlusion-free cloud: boundary samples from every body in the scene."""
    polys = [geo.transform_polygon(state.poses[b.id], b.polygon) for b in scene.bodies]
    return sample_on_boundaries(polys, n, rng)


def robot_marker_points(scene, ee_pose, n, rng):
    """Analytic gripper points, sampled on its collision octagon."""
    return sample_on_boundaries([ee_polygon(scene, ee_pose)], n, rng)


def augment_pcd(points, ee_pose, cfg, rng):
    """Training-time cloud: robot points + dropout + jitter + normalize + resample.

    `points` are raw world-frame scene points; the robot marker is appended
    from the known gripper pose. Surviving points keep their input order so
    a no-dropout, size-matched config maps outputs 1:1 onto inputs.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if cfg.robot_points > 0:
        octagon = geo.regular_polygon((ee_pose[0], ee_pose[1]), cfg.robot_radius,
                                      n=8, phase=ee_pose[2])
        marker = sample_on_boundaries([octagon], cfg.robot_points, rng)
        pts = np.concatenate([pts, marker], axis=0)
    m = pts.shape[0]
    ratio = rng.uniform(cfg.dropout[0], cfg.dropout[1])
    n_drop = int(round(m * ratio))
    if n_drop > 0:
        keep = np.sort(rng.choice(m, m - n_drop, replace=False))
        pts = pts[keep]
    m = pts.shape[0]
    n_jit = int(round(m * cfg.jitter_ratio))
    if n_jit > 0:
        idx = rng.choice(m, n_jit, replace=False)
        pts[idx] += rng.normal(0.0, cfg.jitter_std, size=(n_jit, 2))
    pts = (pts - np.asarray(cfg.offset)) * cfg.scale
    if m > cfg.total:
        keep = np.sort(rng.choice(m, cfg.total, replace=False))
        pts = pts[keep]
    elif m < cfg.total:
        pad = rng.integers(0, m, size=cfg.total - m)
        pts = np.concatenate([pts, pts[pad]], axis=0)
    return pts.astype(np.float32)


def observe(scene, state, cfg, rng):
    """Full perception path: camera render then augmentation."""
    raw = render_camera_pcd(scene, state, cfg.scene_points, rng)
    return augment_pcd(raw, state.ee, cfg, rng)


def robot_state_vec(state):
    """What the policy knows about its own body: pose and gripper bit."""
    x, y, th = state.ee
    return np.array([x, y, math.cos(th), math.sin(th),
                     1.0 if state.gripper_open else 0.0], dtype=np.float32)
