"""Quorum-curve construction and access strategies for the five system kinds.

Kinds:
  QG        symmetric; write pure great circle through (writer, hash);
            read mixed-uniform over great circles through the hash.
  QGm       QG with the write made mixed-uniform over great circles through
            the writer.
  QL        write as QG; read pure latitude circle around the hash through
            the reader.
  QLd       dual of QL: write latitude circle, read great circle.
  GeoQuorum write mixed-uniform over radius-R_W circles through the writer;
            read spiral from the reader with random phase. The dual flag
            swaps the two roles.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import OutOfRange
from .sphere import (SphericalCircle, SphericalCurve, circle_with_radius,
                     count_intersections, geodesic_distance,
                     great_circle_through, latitude_circle,
                     perpendicular_basis, require_unit, spiral_for)

KIND_NAMES = ("QG", "QGm", "QL", "QLd", "GeoQuorum")


@dataclass(frozen=True)
class QuorumSystemKind:
    """Tagged quorum-system identifier plus GeoQuorum parameters."""

    name: str
    r_w: float | None = None
    a: float | None = None
    dual: bool = False

    def __post_init__(self):
        if self.name not in KIND_NAMES:
            raise OutOfRange(f"unknown quorum system kind {self.name!r}")
        if self.name == "GeoQuorum":
            if self.r_w is None or self.a is None:
                raise OutOfRange("GeoQuorum needs r_w and a")
            # radii beyond pi/2 are realized by the complementary circle
            # around the antipodal center (the same point set)
            if not (0 < self.r_w < np.pi):
                raise OutOfRange(f"GeoQuorum r_w must be in (0, pi), got {self.r_w}")
            if self.a <= 0:
                raise OutOfRange(f"GeoQuorum a must be positive, got {self.a}")
            if self.robustness_target() < 1:
                raise OutOfRange(f"GeoQuorum r_w={self.r_w}, a={self.a} gives "
                                 f"robustness target k < 1")

    def robustness_target(self) -> int:
        """k = floor(R_W / (a pi)); the guaranteed intersection count is 2k."""
        if self.name != "GeoQuorum":
            return 1
        return int(np.floor(self.r_w / (self.a * np.pi) + 1e-9))

    @classmethod
    def qg(cls):
        return cls("QG")

    @classmethod
    def qgm(cls):
        return cls("QGm")

    @classmethod
    def ql(cls):
        return cls("QL")

    @classmethod
    def qld(cls):
        return cls("QLd")

    @classmethod
    def geoquorum(cls, r_w: float, a: float, dual: bool = False):
        return cls("GeoQuorum", r_w=float(r_w), a=float(a), dual=dual)


@dataclass(frozen=True)
class DataType:
    """A stored data type: its hash location and who writes/reads it."""

    id: str
    hash_point: np.ndarray
    contributors: tuple = ()
    queriers: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "hash_point", require_unit(self.hash_point))
        object.__setattr__(self, "contributors", tuple(self.contributors))
        object.__setattr__(self, "queriers", tuple(self.queriers))


@dataclass(frozen=True)
class AccessStrategy:
    """Access rate plus either a pure curve choice or a seeded mixed draw."""

    rate: float
    mixed: bool

    def __post_init__(self):
        if self.rate < 0:
            raise OutOfRange("access rate must be nonnegative")


def hash_location(data_id: str, seed: int, override=None) -> np.ndarray:
    """Deterministic, approximately uniform sphere point for a data id.

    An explicit override point wins when supplied (e.g. to place the hash at
    the region center image).
    """
    if override is not None:
        return require_unit(np.asarray(override, dtype=float))
    digest = hashlib.blake2b(f"{seed}:{data_id}".encode(), digest_size=16).digest()
    u1 = int.from_bytes(digest[:8], "big") / 2 ** 64
    u2 = int.from_bytes(digest[8:], "big") / 2 ** 64
    z = 2.0 * u1 - 1.0
    phi = 2.0 * np.pi * u2
    r = np.sqrt(max(1.0 - z * z, 0.0))
    return np.array([r * np.cos(phi), r * np.sin(phi), z])


def _random_great_circle_through(point, rng) -> SphericalCircle:
    """Uniform-orientation great circle through a fixed point."""
    e1, e2 = perpendicular_basis(point)
    psi = rng.uniform(0.0, 2.0 * np.pi)
    axis = np.cos(psi) * e1 + np.sin(psi) * e2
    return SphericalCircle(axis=axis, rho=np.pi / 2, start=np.asarray(point, float).copy())


def _random_circle_through(point, rho: float, rng) -> SphericalCircle:
    """Uniform choice among circles of geodesic radius rho through a point.

    Radii above pi/2 are expressed as the complementary circle around the
    antipodal center, which is the identical point set.
    """
    point = require_unit(point)
    e1, e2 = perpendicular_basis(point)
    psi = rng.uniform(0.0, 2.0 * np.pi)
    center = (np.cos(rho) * point
              + np.sin(rho) * (np.cos(psi) * e1 + np.sin(psi) * e2))
    if rho > np.pi / 2:
        center, rho = -center, np.pi - rho
    circ = circle_with_radius(center, rho)
    return SphericalCircle(axis=circ.axis, rho=circ.rho, start=point.copy())


def _geo_write(node, kind: QuorumSystemKind, rng) -> SphericalCurve:
    return _random_circle_through(node, kind.r_w, rng)


def _geo_read(node, kind: QuorumSystemKind, rng) -> SphericalCurve:
    theta0 = rng.uniform(0.0, 2.0 * np.pi)
    return spiral_for(node, kind.a, theta0)


def write_quorum(kind: QuorumSystemKind, writer, data: DataType, rng) -> SphericalCurve:
    """Curve contacted by a write access from `writer` for `data`."""
    writer = require_unit(writer)
    if kind.name in ("QG", "QL"):
        return great_circle_through(writer, data.hash_point)
    if kind.name == "QGm":
        return _random_great_circle_through(writer, rng)
    if kind.name == "QLd":
        return latitude_circle(data.hash_point, writer)
    if kind.name == "GeoQuorum":
        if kind.dual:
            return _geo_read(writer, kind, rng)
        return _geo_write(writer, kind, rng)
    raise OutOfRange(f"unhandled kind {kind.name}")


def read_quorum(kind: QuorumSystemKind, reader, data: DataType, rng) -> SphericalCurve:
    """Curve contacted by a read access from `reader` for `data`."""
    reader = require_unit(reader)
    if kind.name in ("QG", "QGm"):
        return _random_great_circle_through(data.hash_point, rng)
    if kind.name == "QL":
        return latitude_circle(data.hash_point, reader)
    if kind.name == "QLd":
        return great_circle_through(reader, data.hash_point)
    if kind.name == "GeoQuorum":
        if kind.dual:
            return _geo_write(reader, kind, rng)
        return _geo_read(reader, kind, rng)
    raise OutOfRange(f"unhandled kind {kind.name}")


def is_write_pure(kind: QuorumSystemKind) -> bool:
    return kind.name in ("QG", "QL", "QLd")


def is_read_pure(kind: QuorumSystemKind) -> bool:
    return kind.name in ("QL", "QLd")


def random_unit(rng, n: int | None = None) -> np.ndarray:
    v = rng.normal(size=(n or 1, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return v[0] if n is None else v


def _far_enough(p, q, eps=1e-6) -> bool:
    d = geodesic_distance(p, q)
    return eps < d < np.pi - eps


def geometric_robustness(kind: QuorumSystemKind, data: DataType, trials: int, rng,
                         step: float | None = None,
                         merge_tol: float | None = None) -> int:
    """Minimum write/read curve intersection count over sampled access pairs."""
    if trials < 1:
        raise OutOfRange("trials must be >= 1")
    kwargs = {}
    if step is not None:
        kwargs["step"] = step
        kwargs["merge_tol"] = merge_tol if merge_tol is not None else 2 * step
    best = None
    for _ in range(trials):
        while True:
            writer = random_unit(rng)
            if _far_enough(writer, data.hash_point):
                break
        while True:
            reader = random_unit(rng)
            if _far_enough(reader, data.hash_point):
                break
        wq = write_quorum(kind, writer, data, rng)
        rq = read_quorum(kind, reader, data, rng)
        n, _ = count_intersections(wq, rq, **kwargs)
        best = n if best is None else min(best, n)
    return int(best)
