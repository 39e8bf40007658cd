"""Rasterize quorum curves onto the embedded mesh and account per-node load.

Charging rule: every vertex of every triangle traversed by an access's curve
receives the access weight once (set semantics per access); loads of mirror
copies accrue to the physical (original) vertex.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .embedding import SphericalEmbedding, locate_many
from .errors import ConfigError, OutOfRange
from .quorums import (DataType, QuorumSystemKind, is_read_pure, is_write_pure,
                      read_quorum, write_quorum)
from .sphere import (GeodesicPolyline, SphericalCircle, SphericalCurve,
                     circle_with_radius, perpendicular_basis, sample,
                     spiral_for)

RASTER_STEP_FACTOR = 0.25  # sampling step as a fraction of the median edge length


def raster_step(emb: SphericalEmbedding) -> float:
    return RASTER_STEP_FACTOR * emb.median_edge_length()


def _fill_gaps(pts, tids, emb, depth: int = 10, corner_levels: int = 2):
    """Bisect between consecutive samples whose triangles differ, so grazed
    triangles shorter than the sampling step still get collected.

    Adjacent-triangle gaps are still refined for the first few levels: the
    curve may clip a third triangle at the corner shared by the pair.
    Midpoint locations are batched per refinement round.
    """
    nb = emb.neighbors()
    seen = set(int(t) for t in tids)
    gaps_p1, gaps_p2, gaps_t1, gaps_t2 = [], [], [], []
    for i in range(len(pts) - 1):
        if tids[i] != tids[i + 1]:
            gaps_p1.append(pts[i])
            gaps_p2.append(pts[i + 1])
            gaps_t1.append(int(tids[i]))
            gaps_t2.append(int(tids[i + 1]))
    for level in range(depth):
        if not gaps_p1:
            break
        p1 = np.asarray(gaps_p1)
        p2 = np.asarray(gaps_p2)
        t1 = np.asarray(gaps_t1)
        t2 = np.asarray(gaps_t2)
        mid = p1 + p2
        mid /= np.linalg.norm(mid, axis=1, keepdims=True)
        tm = locate_many(mid, emb)
        gaps_p1, gaps_p2, gaps_t1, gaps_t2 = [], [], [], []
        for k in range(len(tm)):
            m = int(tm[k])
            if m not in seen:
                seen.add(m)
            elif (m in (t1[k], t2[k]) and t2[k] in nb[t1[k]]
                  and level >= corner_levels):
                continue  # adjacent pair probed past corner depth: stop
            if m != t1[k]:
                gaps_p1.append(p1[k]); gaps_p2.append(mid[k])
                gaps_t1.append(t1[k]); gaps_t2.append(m)
            if m != t2[k]:
                gaps_p1.append(mid[k]); gaps_p2.append(p2[k])
                gaps_t1.append(m); gaps_t2.append(t2[k])
    return np.array(sorted(seen), dtype=int)


def _traverse(poly: GeodesicPolyline, emb: SphericalEmbedding) -> np.ndarray:
    tids = locate_many(poly.points, emb)
    return _fill_gaps(poly.points, tids, emb)


def rasterize(curve: SphericalCurve, emb: SphericalEmbedding,
              step: float | None = None) -> np.ndarray:
    """Sorted unique indices of mesh triangles traversed by the curve."""
    if step is None:
        step = raster_step(emb)
    return _traverse(sample(curve, step), emb)


def charge(load: np.ndarray, triangles, emb: SphericalEmbedding, weight: float) -> np.ndarray:
    """Add `weight` once to every physical node incident to the triangles."""
    if weight < 0:
        raise OutOfRange("charge weight must be nonnegative")
    tris = np.asarray(triangles, dtype=int)
    if len(tris) == 0:
        return load
    verts = np.unique(emb.mesh.triangles[tris].ravel())
    nodes = np.unique(emb.mesh.original_vertex(verts))
    load[nodes] += weight
    return load


@dataclass(frozen=True)
class Workload:
    """Access pattern: data types, relative write rate, and the event model.

    write_rate_r is the per-contributor data production rate relative to a
    per-querier query rate of 1. MonteCarlo mode draws `events` accesses per
    accessor (each carrying rate/events weight); Expected mode charges pure
    strategies once at full rate and mixed strategies through a deterministic
    mixing quadrature of `mix_samples` curves.
    """

    data_types: tuple
    write_rate_r: float
    read_rate: float = 1.0
    mode: str = "montecarlo"
    events: int = 1
    mix_samples: int = 16

    def __post_init__(self):
        if self.write_rate_r <= 0:
            raise OutOfRange("write_rate_r must be positive")
        if self.mode not in ("montecarlo", "expected"):
            raise ConfigError(f"unknown workload mode {self.mode!r}")
        if self.events < 1 or self.mix_samples < 1:
            raise OutOfRange("events and mix_samples must be >= 1")


@dataclass(frozen=True)
class Metrics:
    system_load: float
    total_load: float
    robustness_geometric: int | None = None
    robustness_discrete: int | None = None


def _validate_nodes(data: DataType, n_nodes: int) -> None:
    for group in (data.contributors, data.queriers):
        for i in group:
            if not (0 <= int(i) < n_nodes):
                raise ConfigError(f"node id {i} outside deployment of {n_nodes}")


def _curve_with_start(curve: SphericalCurve, start) -> SphericalCurve:
    if isinstance(curve, SphericalCircle) and curve.start is None:
        return SphericalCircle(axis=curve.axis, rho=curve.rho, start=start)
    return curve


def _mixed_write_family(kind: QuorumSystemKind, node, k: int):
    """Deterministic quadrature over the write mixing parameter."""
    e1, e2 = perpendicular_basis(node)
    curves = []
    for j in range(k):
        psi = 2 * np.pi * (j + 0.5) / k
        if kind.name == "QGm" or (kind.name == "GeoQuorum" and kind.dual):
            axis = np.cos(psi) * e1 + np.sin(psi) * e2
            curves.append(SphericalCircle(axis=axis, rho=np.pi / 2, start=np.asarray(node, float)))
        elif kind.name == "GeoQuorum":
            center = (np.cos(kind.r_w) * np.asarray(node, float)
                      + np.sin(kind.r_w) * (np.cos(psi) * e1 + np.sin(psi) * e2))
            rho = kind.r_w
            if rho > np.pi / 2:
                center, rho = -center, np.pi - rho
            base = circle_with_radius(center, rho)
            curves.append(SphericalCircle(axis=base.axis, rho=base.rho,
                                          start=np.asarray(node, float)))
        else:
            raise ConfigError(f"{kind.name} write strategy is pure")
    return curves


def _mixed_read_family(kind: QuorumSystemKind, node, hash_point, k: int):
    curves = []
    for j in range(k):
        psi = 2 * np.pi * (j + 0.5) / k
        if kind.name in ("QG", "QGm"):
            e1, e2 = perpendicular_basis(hash_point)
            axis = np.cos(psi) * e1 + np.sin(psi) * e2
            curves.append(SphericalCircle(axis=axis, rho=np.pi / 2,
                                          start=np.asarray(hash_point, float)))
        elif kind.name == "GeoQuorum" and not kind.dual:
            curves.append(spiral_for(node, kind.a, psi))
        elif kind.name == "GeoQuorum" and kind.dual:
            e1, e2 = perpendicular_basis(node)
            center = (np.cos(kind.r_w) * np.asarray(node, float)
                      + np.sin(kind.r_w) * (np.cos(psi) * e1 + np.sin(psi) * e2))
            rho = kind.r_w
            if rho > np.pi / 2:
                center, rho = -center, np.pi - rho
            base = circle_with_radius(center, rho)
            curves.append(SphericalCircle(axis=base.axis, rho=base.rho,
                                          start=np.asarray(node, float)))
        else:
            raise ConfigError(f"{kind.name} read strategy is pure")
    return curves


def _first_hit_truncate(read_poly: GeodesicPolyline,
                        write_polys: list) -> GeodesicPolyline:
    """Cut the read polyline at its first crossing with any write polyline."""
    a = read_poly.points
    n_a = np.cross(a[:-1], a[1:])
    cut = len(a)
    for wp in write_polys:
        b = wp.points
        n_b = np.cross(b[:-1], b[1:])
        s_a = np.where((a @ n_b.T) >= 0, 1.0, -1.0)
        cross_a = s_a[:-1] * s_a[1:] < 0                    # (|a|-1, |b|-1)
        s_b = np.where((b @ n_a.T) >= 0, 1.0, -1.0)
        cross_b = (s_b[:-1] * s_b[1:] < 0).T                # (|a|-1, |b|-1)
        hits = np.where((cross_a & cross_b).any(axis=1))[0]
        if len(hits):
            cut = min(cut, int(hits[0]) + 2)  # keep the crossing segment
    return GeodesicPolyline(points=a[:cut], step=read_poly.step, closed=False)


def run(workload: Workload, kind: QuorumSystemKind, emb: SphericalEmbedding,
        rng, read_termination: str = "full",
        robustness_trials: int = 0, robustness_rng=None):
    """Execute the workload; returns (Metrics, load array indexed by node id).

    read_termination="first_hit" truncates each read curve at its first
    intersection with a write quorum of the same data type; "full" charges the
    entire curve.
    """
    if read_termination not in ("full", "first_hit"):
        raise ConfigError(f"unknown read_termination {read_termination!r}")
    n_nodes = emb.n_nodes
    load = np.zeros(n_nodes)
    node_pos = emb.node_positions()
    step = raster_step(emb)

    for data in workload.data_types:
        _validate_nodes(data, n_nodes)
        write_polys: list[GeodesicPolyline] = []  # realized writes, for first_hit

        def charge_curve(curve, weight, keep=False):
            poly = sample(curve, step)
            if keep:
                write_polys.append(poly)
            charge(load, _traverse(poly, emb), emb, weight)

        keep_writes = read_termination == "first_hit"
        # writes
        for i in data.contributors:
            node = node_pos[int(i)]
            if workload.mode == "expected":
                if is_write_pure(kind):
                    charge_curve(write_quorum(kind, node, data, rng),
                                 workload.write_rate_r, keep=keep_writes)
                else:
                    for c in _mixed_write_family(kind, node, workload.mix_samples):
                        charge_curve(c, workload.write_rate_r / workload.mix_samples,
                                     keep=keep_writes)
            else:
                for _ in range(workload.events):
                    charge_curve(write_quorum(kind, node, data, rng),
                                 workload.write_rate_r / workload.events,
                                 keep=keep_writes)

        # reads
        def charge_read(curve, weight):
            poly = sample(curve, step)
            if read_termination == "first_hit":
                poly = _first_hit_truncate(poly, write_polys)
            charge(load, _traverse(poly, emb), emb, weight)

        if workload.mode == "expected" and kind.name in ("QG", "QGm"):
            # the read family depends only on the hash; share it across queriers
            total = workload.read_rate * len(data.queriers)
            if total > 0:
                for c in _mixed_read_family(kind, None, data.hash_point,
                                            workload.mix_samples):
                    charge_read(c, total / workload.mix_samples)
        else:
            for i in data.queriers:
                node = node_pos[int(i)]
                if workload.mode == "expected":
                    if is_read_pure(kind):
                        charge_read(read_quorum(kind, node, data, rng),
                                    workload.read_rate)
                    else:
                        for c in _mixed_read_family(kind, node, data.hash_point,
                                                    workload.mix_samples):
                            charge_read(c, workload.read_rate / workload.mix_samples)
                else:
                    for _ in range(workload.events):
                        charge_read(read_quorum(kind, node, data, rng),
                                    workload.read_rate / workload.events)

    rg = rd = None
    if robustness_trials > 0:
        rr = robustness_rng if robustness_rng is not None else rng
        from .quorums import geometric_robustness
        coarse = max(step, np.pi / 400)
        rg = geometric_robustness(kind, workload.data_types[0], robustness_trials,
                                  rr, step=coarse)
        rd = discrete_robustness(kind, workload.data_types[0], emb,
                                 robustness_trials, rr)
    metrics = Metrics(system_load=float(load.max()), total_load=float(load.sum()),
                      robustness_geometric=rg, robustness_discrete=rd)
    return metrics, load


def discrete_robustness(kind: QuorumSystemKind, data: DataType,
                        emb: SphericalEmbedding, trials: int, rng) -> int:
    """Minimum count of shared charged physical nodes over write/read pairs."""
    if trials < 1:
        raise OutOfRange("trials must be >= 1")
    node_pos = emb.node_positions()
    contributors = data.contributors or tuple(range(emb.n_nodes))
    queriers = data.queriers or tuple(range(emb.n_nodes))
    best = None
    for _ in range(trials):
        wi = int(rng.choice(len(contributors)))
        ri = int(rng.choice(len(queriers)))
        writer = node_pos[int(contributors[wi])]
        reader = node_pos[int(queriers[ri])]
        try:
            wq = write_quorum(kind, writer, data, rng)
            rq = read_quorum(kind, reader, data, rng)
        except Exception:
            continue
        wt = rasterize(wq, emb)
        rt = rasterize(rq, emb)
        wv = np.unique(emb.mesh.original_vertex(np.unique(emb.mesh.triangles[wt].ravel())))
        rv = np.unique(emb.mesh.original_vertex(np.unique(emb.mesh.triangles[rt].ravel())))
        shared = len(np.intersect1d(wv, rv, assume_unique=True))
        best = shared if best is None else min(best, shared)
    return int(best) if best is not None else 0
