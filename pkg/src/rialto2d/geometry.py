"""Planar geometry: SE(2) poses, convex polygons, rays.

Everything here works on plain Python floats and tuples so the simulator
hot path stays allocation-light and bitwise reproducible across runs.
Poses are (x, y, theta); polygons are tuples of (x, y) vertices in CCW order.
"""

import math

TWO_PI = 2.0 * math.pi


def wrap_angle(theta):
    """Map an angle to (-pi, pi]."""
    t = math.fmod(theta, TWO_PI)
    if t > math.pi:
        t -= TWO_PI
    elif t <= -math.pi:
        t += TWO_PI
    return t


def pose_compose(a, b):
    """Compose two SE(2) poses: result = a then b in a's frame."""
    ax, ay, at = a
    bx, by, bt = b
    c, s = math.cos(at), math.sin(at)
    return (ax + c * bx - s * by, ay + s * bx + c * by, at + bt)


def pose_inverse(a):
    ax, ay, at = a
    c, s = math.cos(at), math.sin(at)
    return (-(c * ax + s * ay), -(-s * ax + c * ay), -at)


def pose_apply(pose, point):
    """Transform a local point into the pose's parent frame."""
    px, py, pt = pose
    x, y = point
    c, s = math.cos(pt), math.sin(pt)
    return (px + c * x - s * y, py + s * x + c * y)


def pose_rotate_vector(pose, vec):
    """Rotate a local direction into the parent frame (no translation)."""
    _, _, pt = pose
    x, y = vec
    c, s = math.cos(pt), math.sin(pt)
    return (c * x - s * y, s * x + c * y)


def rotation_about(center, angle):
    """Pose performing a rotation by angle about a world point."""
    cx, cy = center
    c, s = math.cos(angle), math.sin(angle)
    # p' = R (p - c) + c  ==  pose (c - R c, angle) applied to p
    return (cx - (c * cx - s * cy), cy - (s * cx + c * cy), angle)


def transform_polygon(pose, poly):
    px, py, pt = pose
    c, s = math.cos(pt), math.sin(pt)
    return tuple((px + c * x - s * y, py + s * x + c * y) for x, y in poly)


def polygon_area(poly):
    """Signed shoelace area; positive for CCW winding."""
    n = len(poly)
    acc = 0.0
    for i in range(n):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % n]
        acc += x0 * y1 - x1 * y0
    return 0.5 * acc


def polygon_centroid(poly):
    a = polygon_area(poly)
    if abs(a) < 1e-12:
        xs = [p[0] for p in poly]
        ys = [p[1] for p in poly]
        return (sum(xs) / len(poly), sum(ys) / len(poly))
    n = len(poly)
    cx = cy = 0.0
    for i in range(n):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % n]
        cross = x0 * y1 - x1 * y0
        cx += (x0 + x1) * cross
        cy += (y0 + y1) * cross
    return (cx / (6.0 * a), cy / (6.0 * a))


def polygon_perimeter(poly):
    n = len(poly)
    total = 0.0
    for i in range(n):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % n]
        total += math.hypot(x1 - x0, y1 - y0)
    return total


def is_convex_ccw(poly):
    """True when vertices wind CCW and every interior angle is convex.

    Collinear runs are tolerated; reflex corners and CW winding are not.
    """
    n = len(poly)
    if n < 3:
        return False
    if polygon_area(poly) <= 0.0:
        return False
    for i in range(n):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % n]
        x2, y2 = poly[(i + 2) % n]
        cross = (x1 - x0) * (y2 - y1) - (y1 - y0) * (x2 - x1)
        # tolerance on the turn angle, not the raw cross, so clipped
        # polygons with short edges are judged fairly
        scale = math.hypot(x1 - x0, y1 - y0) * math.hypot(x2 - x1, y2 - y1)
        if cross < -1e-9 * max(scale, 1e-300):
            return False
    return True


def point_in_polygon(poly, point):
    """Convex containment test; boundary counts as inside."""
    px, py = point
    n = len(poly)
    for i in range(n):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % n]
        if (x1 - x0) * (py - y0) - (y1 - y0) * (px - x0) < -1e-12:
            return False
    return True


def point_segment_distance(point, a, b):
    px, py = point
    ax, ay = a
    bx, by = b
    dx, dy = bx - ax, by - ay
    denom = dx * dx + dy * dy
    if denom <= 0.0:
        return math.hypot(px - ax, py - ay)
    t = ((px - ax) * dx + (py - ay) * dy) / denom
    if t < 0.0:
        t = 0.0
    elif t > 1.0:
        t = 1.0
    return math.hypot(px - (ax + t * dx), py - (ay + t * dy))


def polygon_boundary_distance(poly, point):
    """Distance from a point to the polygon boundary (0 only on the boundary)."""
    n = len(poly)
    best = math.inf
    for i in range(n):
        d = point_segment_distance(point, poly[i], poly[(i + 1) % n])
        if d < best:
            best = d
    return best


def polygon_point_distance(poly, point):
    """Distance from a point to the polygon as a filled set (0 inside)."""
    if point_in_polygon(poly, point):
        return 0.0
    return polygon_boundary_distance(poly, point)


def _project(poly, ax, ay):
    lo = hi = poly[0][0] * ax + poly[0][1] * ay
    for x, y in poly:
        v = x * ax + y * ay
        if v < lo:
            lo = v
        elif v > hi:
            hi = v
    return lo, hi


def polygons_overlap(pa, pb, margin=1e-9):
    """Separating-axis test for two convex polygons.

    Returns True only for genuine interpenetration deeper than `margin`;
    touching edges or vertices do not count as overlap.
    """
    for poly in (pa, pb):
        n = len(poly)
        for i in range(n):
            x0, y0 = poly[i]
            x1, y1 = poly[(i + 1) % n]
            ax, ay = y0 - y1, x1 - x0  # outward-ish normal; direction irrelevant
            norm = math.hypot(ax, ay)
            if norm <= 0.0:
                continue
            ax /= norm
            ay /= norm
            lo_a, hi_a = _project(pa, ax, ay)
            lo_b, hi_b = _project(pb, ax, ay)
            if hi_a - lo_b <= margin or hi_b - lo_a <= margin:
                return False
    return True


def clip_halfplane(poly, point, normal):
    """Sutherland-Hodgman clip keeping the side with (p - point).normal >= 0."""
    px, py = point
    nx, ny = normal
    out = []
    n = len(poly)
    for i in range(n):
        ax, ay = poly[i]
        bx, by = poly[(i + 1) % n]
        da = (ax - px) * nx + (ay - py) * ny
        db = (bx - px) * nx + (by - py) * ny
        if da >= -1e-12:
            out.append((ax, ay))
        if (da > 1e-12 and db < -1e-12) or (da < -1e-12 and db > 1e-12):
            t = da / (da - db)
            out.append((ax + t * (bx - ax), ay + t * (by - ay)))
    # drop consecutive duplicates introduced by vertices sitting on the line
    dedup = []
    for p in out:
        if not dedup or math.hypot(p[0] - dedup[-1][0], p[1] - dedup[-1][1]) > 1e-12:
            dedup.append(p)
    if len(dedup) > 1 and math.hypot(dedup[0][0] - dedup[-1][0], dedup[0][1] - dedup[-1][1]) <= 1e-12:
        dedup.pop()
    return tuple(dedup)


def cut_convex(poly, p0, p1):
    """Split a convex polygon by the infinite line through p0 -> p1.

    Returns (left, right) where `left` is the piece on the left of the
    directed line. Raises ValueError when the line misses the interior.
    """
    dx, dy = p1[0] - p0[0], p1[1] - p0[1]
    norm = math.hypot(dx, dy)
    if norm <= 1e-12:
        raise ValueError("cut segment is degenerate")
    # left normal of the direction
    nl = (-dy / norm, dx / norm)
    left = clip_halfplane(poly, p0, nl)
    right = clip_halfplane(poly, p0, (-nl[0], -nl[1]))
    min_piece = 1e-10
    if len(left) < 3 or len(right) < 3 or polygon_area(left) < min_piece or polygon_area(right) < min_piece:
        raise ValueError("cut line does not pass through the polygon interior")
    return left, right


def regular_polygon(center, radius, n=8, phase=0.0):
    cx, cy = center
    pts = []
    for i in range(n):
        a = phase + TWO_PI * i / n
        pts.append((cx + radius * math.cos(a), cy + radius * math.sin(a)))
    return tuple(pts)


def ray_segment_hit(origin, direction, a, b):
    """Parameter t >= 0 where origin + t*direction crosses segment ab, else None."""
    ox, oy = origin
    dx, dy = direction
    ax, ay = a
    bx, by = b
    ex, ey = bx - ax, by - ay
    denom = dx * ey - dy * ex
    if abs(denom) < 1e-15:
        return None
    qx, qy = ax - ox, ay - oy
    t = (qx * ey - qy * ex) / denom
    s = (qx * dy - qy * dx) / denom
    if t > 1e-9 and -1e-12 <= s <= 1.0 + 1e-12:
        return t
    return None
