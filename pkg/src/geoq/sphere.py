"""Analytic geometry on the unit sphere: curves, sampling, distances, intersections.

Points are numpy arrays of shape (3,) with unit norm; polylines are (n, 3) arrays.
All operations are pure functions over immutable values.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInput, OutOfRange

UNIT_TOL = 1e-9

# sampling defaults shared by callers
DEFAULT_STEP = np.pi / 2000
DEFAULT_MERGE_TOL = np.pi / 1000


def unit_vector(v) -> np.ndarray:
    """Normalize v to a unit 3-vector."""
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if n < 1e-15:
        raise DegenerateInput("cannot normalize a zero vector")
    return v / n


def require_unit(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if abs(float(p @ p) - 1.0) > 1e-6:
        raise DegenerateInput(f"point is not unit norm: |p|^2 = {float(p @ p)}")
    return p


def antipode(p) -> np.ndarray:
    """The antipodal point -p."""
    return -require_unit(p)


def geodesic_distance(p, q) -> float:
    """Angle between two unit vectors, in [0, pi]."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    return float(np.arccos(np.clip(p @ q, -1.0, 1.0)))


def perpendicular_basis(axis) -> tuple[np.ndarray, np.ndarray]:
    """A deterministic orthonormal pair spanning the plane perpendicular to axis."""
    axis = np.asarray(axis, dtype=float)
    ref = np.array([1.0, 0.0, 0.0]) if abs(axis[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(axis, ref)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(axis, e1)
    return e1, e2


def rotation_to_south_pole(node) -> np.ndarray:
    """Rotation matrix R with R @ node = (0, 0, -1)."""
    node = require_unit(node)
    target = np.array([0.0, 0.0, -1.0])
    v = np.cross(node, target)
    c = float(node @ target)
    s = float(np.linalg.norm(v))
    if s < 1e-12:
        if c > 0:
            return np.eye(3)
        # node at the north pole: rotate pi about the x axis
        return np.diag([1.0, -1.0, -1.0])
    vx = np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])
    return np.eye(3) + vx + vx @ vx * ((1.0 - c) / (s * s))


@dataclass(frozen=True)
class SphericalCircle:
    """Circle of geodesic radius rho (polar angle from axis); rho = pi/2 is a great circle.

    start, when given, is a point on the circle where sampling begins (used to
    give closed read curves a deterministic traversal origin).
    """

    axis: np.ndarray
    rho: float
    start: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "axis", unit_vector(self.axis))
        if not (0.0 < self.rho <= np.pi / 2 + 1e-12):
            raise OutOfRange(f"circle radius must be in (0, pi/2], got {self.rho}")

    @property
    def is_great(self) -> bool:
        return abs(self.rho - np.pi / 2) < 1e-9

    def circumference(self) -> float:
        return 2 * np.pi * np.sin(self.rho)


@dataclass(frozen=True)
class SphericalSpiral:
    """Spiral with latitude proportional to longitude: phi = a * theta.

    In the local frame the curve is
        (cos(theta + theta0) cos(phi), sin(theta + theta0) cos(phi), sin(phi)),
    swept over phi_range; `frame` rotates the accessing node to the local south
    pole, so the world curve is local @ frame.
    """

    frame: np.ndarray
    a: float
    theta0: float
    phi_range: tuple[float, float] = (-np.pi / 2, np.pi / 2)

    def __post_init__(self):
        if self.a <= 0:
            raise OutOfRange(f"spiral pitch must be positive, got {self.a}")

    def local_points(self, theta: np.ndarray) -> np.ndarray:
        phi = self.a * theta
        return np.stack([
            np.cos(theta + self.theta0) * np.cos(phi),
            np.sin(theta + self.theta0) * np.cos(phi),
            np.sin(phi),
        ], axis=-1)

    def points(self, theta: np.ndarray) -> np.ndarray:
        return self.local_points(theta) @ self.frame

    def theta_range(self) -> tuple[float, float]:
        lo, hi = self.phi_range
        return lo / self.a, hi / self.a

    def loop_spacing(self) -> float:
        """Latitude gap between consecutive loops."""
        return 2 * self.a * np.pi


@dataclass(frozen=True)
class GeodesicPolyline:
    """Ordered samples along a curve with target geodesic spacing `step`."""

    points: np.ndarray
    step: float
    closed: bool = False

    def length(self) -> float:
        p = self.points
        dots = np.clip(np.einsum("ij,ij->i", p[:-1], p[1:]), -1.0, 1.0)
        return float(np.arccos(dots).sum())


SphericalCurve = SphericalCircle | SphericalSpiral | GeodesicPolyline


def great_circle_through(p, q) -> SphericalCircle:
    """The unique great circle through two non-coincident, non-antipodal points."""
    p = require_unit(p)
    q = require_unit(q)
    axis = np.cross(p, q)
    n = np.linalg.norm(axis)
    if n < UNIT_TOL:
        raise DegenerateInput("points are identical or antipodal; great circle not unique")
    return SphericalCircle(axis=axis / n, rho=np.pi / 2, start=p.copy())


def circle_with_radius(center, rho: float) -> SphericalCircle:
    """Circle of all points at polar angle rho from center."""
    if not (0.0 < rho <= np.pi / 2 + 1e-12):
        raise OutOfRange(f"rho must be in (0, pi/2], got {rho}")
    return SphericalCircle(axis=require_unit(center), rho=float(rho))


def latitude_circle(axis, through) -> SphericalCircle:
    """Circle around `axis` passing through `through`.

    When `through` lies more than pi/2 from the axis the circle is expressed
    around the antipodal axis so the stored radius stays in (0, pi/2]; the
    Euclidean radius equals sin(polar angle) either way.
    """
    axis = require_unit(axis)
    through = require_unit(through)
    polar = geodesic_distance(axis, through)
    if polar < UNIT_TOL or polar > np.pi - UNIT_TOL:
        raise DegenerateInput("point coincides with the circle axis or its antipode")
    if polar > np.pi / 2:
        axis, polar = -axis, np.pi - polar
    return SphericalCircle(axis=axis, rho=polar, start=through.copy())


def spiral_for(node, a: float, theta0: float) -> SphericalSpiral:
    """Read-quorum spiral from `node` with pitch a and phase theta0.

    The sweep covers latitudes [-pi/2, pi/2] (node to antipode); for a >= 0.5
    the sweep is extended past the far pole to keep the loop spacing meaningful,
    returning to the node.
    """
    if a <= 0:
        raise OutOfRange(f"spiral pitch must be positive, got {a}")
    frame = rotation_to_south_pole(node)
    phi_range = (-np.pi / 2, 3 * np.pi / 2) if a >= 0.5 else (-np.pi / 2, np.pi / 2)
    return SphericalSpiral(frame=frame, a=float(a), theta0=float(theta0 % (2 * np.pi)),
                           phi_range=phi_range)


def _sample_circle(circle: SphericalCircle, step: float) -> GeodesicPolyline:
    if circle.start is not None:
        e1 = circle.start - float(circle.start @ circle.axis) * circle.axis
        n1 = np.linalg.norm(e1)
        if n1 > 1e-12:
            e1 = e1 / n1
            e2 = np.cross(circle.axis, e1)
        else:
            e1, e2 = perpendicular_basis(circle.axis)
    else:
        e1, e2 = perpendicular_basis(circle.axis)
    circ = circle.circumference()
    n = max(int(np.ceil(circ / step)), 8)
    t = np.linspace(0.0, 2 * np.pi, n + 1)  # repeats the first point last
    pts = (np.cos(circle.rho) * circle.axis[None, :]
           + np.sin(circle.rho) * (np.cos(t)[:, None] * e1[None, :]
                                   + np.sin(t)[:, None] * e2[None, :]))
    return GeodesicPolyline(points=pts, step=step, closed=True)


def _sample_spiral(spiral: SphericalSpiral, step: float) -> GeodesicPolyline:
    t0, t1 = spiral.theta_range()
    speed_max = np.sqrt(spiral.a ** 2 + 1.0)  # |C'(theta)| = sqrt(a^2 + cos^2 phi)
    n = max(int(np.ceil((t1 - t0) * speed_max / step)), 8)
    theta = np.linspace(t0, t1, n + 1)
    return GeodesicPolyline(points=spiral.points(theta), step=step, closed=False)


def sample(curve: SphericalCurve, step: float) -> GeodesicPolyline:
    """Sample a curve with geodesic spacing <= step; closed curves repeat the
    first point last."""
    if step <= 0:
        raise OutOfRange(f"step must be positive, got {step}")
    if isinstance(curve, GeodesicPolyline):
        return curve
    if isinstance(curve, SphericalCircle):
        return _sample_circle(curve, step)
    if isinstance(curve, SphericalSpiral):
        return _sample_spiral(curve, step)
    raise TypeError(f"not a spherical curve: {type(curve)!r}")


def _on_segment(a, b, p, slack_factor: float = 0.75) -> bool:
    """True when p lies on the geodesic arc from a to b (with slack for the
    chord-vs-arc gap of sampled curves)."""
    seg = geodesic_distance(a, b)
    excess = geodesic_distance(a, p) + geodesic_distance(p, b) - seg
    return excess <= slack_factor * seg + 1e-12


def _crossing_points(A: np.ndarray, B: np.ndarray, chunk: int = 1024) -> np.ndarray:
    """Transversal crossings between polylines A and B (arrays of unit points).

    A segment pair crosses when each polyline straddles the other's segment
    plane (strict sign change; boundary zeros are pushed to +1 so exact
    tangency is not double counted). Work is chunked over B's segments so the
    sign matrices stay bounded regardless of curve length.
    """
    if len(A) < 2 or len(B) < 2:
        return np.zeros((0, 3))
    if len(A) > len(B):  # keep the dense matrices (|A| x chunk)-shaped and small
        A, B = B, A
    nA = np.cross(A[:-1], A[1:])
    tol_a = 1e-9 * np.linalg.norm(nA, axis=1)                 # points this close to a
    pts = []                                                  # plane count as "on it"
    m1 = len(B) - 1
    for lo in range(0, m1, chunk):
        hi = min(lo + chunk, m1)
        Bc = B[lo:hi + 1]
        nBc = np.cross(Bc[:-1], Bc[1:])
        tol_b = 1e-9 * np.linalg.norm(nBc, axis=1)
        posB = (Bc @ nA.T) >= -tol_a[None, :]     # (chunk+1, |A|-1) bool side flags
        crossB = posB[:-1] ^ posB[1:]             # (chunk, |A|-1)
        posA = (A @ nBc.T) >= -tol_b[None, :]     # (|A|, chunk)
        crossA = posA[:-1] ^ posA[1:]             # (|A|-1, chunk)
        hits = np.argwhere(crossA & crossB.T)
        for i, j0 in hits:
            j = j0 + lo
            d = np.cross(nA[i], np.cross(B[j], B[j + 1]))
            nd = np.linalg.norm(d)
            mid = A[i] + A[i + 1] + B[j] + B[j + 1]
            if nd < 1e-14:
                p = mid / np.linalg.norm(mid)
            else:
                d = d / nd
                p = d if float(d @ mid) > 0 else -d
            # the straddle tests use full great-circle planes; confirm the
            # candidate actually lies on both segments (angle-sum containment)
            if not (_on_segment(A[i], A[i + 1], p) and _on_segment(B[j], B[j + 1], p)):
                # try the antipodal representative before discarding
                p = -p
                if not (_on_segment(A[i], A[i + 1], p) and _on_segment(B[j], B[j + 1], p)):
                    continue
            pts.append(p)
    if not pts:
        return np.zeros((0, 3))
    return np.array(pts)


def _merge_points(pts: np.ndarray, merge_tol: float) -> np.ndarray:
    """Greedy clustering of near-coincident crossing points."""
    if len(pts) == 0:
        return pts
    reps = []
    used = np.zeros(len(pts), bool)
    for i in range(len(pts)):
        if used[i]:
            continue
        ang = np.arccos(np.clip(pts @ pts[i], -1.0, 1.0))
        grp = (ang < merge_tol) & ~used
        used |= grp
        rep = pts[grp].mean(axis=0)
        reps.append(rep / np.linalg.norm(rep))
    return np.array(reps)


def count_intersections(c1: SphericalCurve, c2: SphericalCurve,
                        step: float = DEFAULT_STEP,
                        merge_tol: float = DEFAULT_MERGE_TOL):
    """Count transversal crossings of two sampled curves.

    Returns (count, points). Crossings closer than merge_tol merge into one;
    exact tangency (no sign change) is not counted, which undercounts
    conservatively.
    """
    if step <= 0:
        raise OutOfRange("step must be positive")
    if merge_tol > 2 * step * (1 + 1e-9):
        raise OutOfRange("merge_tol must not exceed 2 * step")
    A = sample(c1, step).points
    B = sample(c2, step).points
    pts = _crossing_points(A, B)
    merged = _merge_points(pts, merge_tol)
    return len(merged), merged
