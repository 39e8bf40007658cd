"""Harmonic embedding of the doubled mesh on the unit sphere, plus transport.

The solve minimizes the cotangent-weighted Dirichlet energy of the sphere map
directly, in a symmetric parameterization: the upper copy is tracked through
stereographic coordinates (interior) and equator angles (boundary), and the
mirror copy is the z-reflection by construction, so mirror symmetry and the
boundary-on-equator property hold exactly at every iterate.

Phases: (A) L-BFGS with three boundary angles pinned (fixes the residual
Moebius gauge and blocks collapse), (B) damped Newton polish that refuses
steps introducing boundary folds or flipped triangles, (C) alternation of
exact conformal recentering with short Newton re-solves until the
area-weighted centroid is driven under tolerance.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.optimize import minimize
from scipy.sparse.linalg import splu
from scipy.spatial import cKDTree

from .errors import DegenerateMesh, NoConvergence, NotFound
from .mesh import DoubledMesh, PlanarMesh, mesh_from_text, mesh_to_text
from .sphere import GeodesicPolyline

DEFAULT_TOL = 1e-7
DEFAULT_MAX_ITERS = 20000
WEIGHT_FLOOR = 1e-3  # keeps seam triangles strictly oriented; raising weights preserves PSD

_Z = np.array([1.0, 1.0, -1.0])


def cot_weights(points, triangles, n_vertices: int, floor: float | None = None):
    """Symmetric cotangent edge-weight matrix; optionally floored from below."""
    pts = np.asarray(points, dtype=float)[:, :2]
    tri = np.asarray(triangles)
    p0, p1, p2 = pts[tri[:, 0]], pts[tri[:, 1]], pts[tri[:, 2]]

    def cot_at(a, b, c):
        u, v = b - a, c - a
        crossn = np.abs(u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0])
        if np.any(crossn < 1e-14):
            raise DegenerateMesh("zero-area triangle; cotangent weights undefined")
        return (u * v).sum(axis=1) / crossn

    c0, c1, c2 = cot_at(p0, p1, p2), cot_at(p1, p2, p0), cot_at(p2, p0, p1)
    i = np.concatenate([tri[:, 1], tri[:, 2], tri[:, 0]])
    j = np.concatenate([tri[:, 2], tri[:, 0], tri[:, 1]])
    w = 0.5 * np.concatenate([c0, c1, c2])
    m = sparse.coo_matrix((w, (i, j)), shape=(n_vertices, n_vertices))
    m = (m + m.T).tocsr()
    if floor is not None:
        m.data = np.maximum(m.data, floor)
    return m


@dataclass
class SphericalEmbedding:
    """Doubled mesh with unit-sphere vertex positions.

    residual is the final stationarity measure (max tangential energy-gradient
    component over the free degrees of freedom).
    """

    mesh: DoubledMesh
    positions: np.ndarray
    residual: float
    energy: float = 0.0
    energy_trace: np.ndarray = field(default_factory=lambda: np.zeros(0))
    _tri_centroids: np.ndarray | None = field(default=None, repr=False)
    _kdtree: cKDTree | None = field(default=None, repr=False)
    _neighbors: np.ndarray | None = field(default=None, repr=False)
    _orient: float = field(default=0.0, repr=False)
    _median_edge: float = field(default=0.0, repr=False)

    @property
    def n_nodes(self) -> int:
        return self.mesh.n_original

    def node_positions(self) -> np.ndarray:
        """Sphere positions of the physical nodes (original-copy vertices)."""
        return self.positions[:self.mesh.n_original]

    def triangle_positions(self, t) -> np.ndarray:
        return self.positions[self.mesh.triangles[t]]

    def orientation(self) -> float:
        """Sign of the (shared) signed triple product of triangle vertices."""
        if self._orient == 0.0:
            tri = self.mesh.triangles
            p = self.positions
            det = np.einsum("ij,ij->i", p[tri[:, 0]], np.cross(p[tri[:, 1]], p[tri[:, 2]]))
            self._orient = 1.0 if np.median(det) > 0 else -1.0
        return self._orient

    def flipped_triangles(self, tol: float = 1e-12) -> np.ndarray:
        tri = self.mesh.triangles
        p = self.positions
        det = np.einsum("ij,ij->i", p[tri[:, 0]], np.cross(p[tri[:, 1]], p[tri[:, 2]]))
        return np.where(self.orientation() * det < -tol)[0]

    def median_edge_length(self) -> float:
        if self._median_edge == 0.0:
            tri = self.mesh.triangles
            p = self.positions
            lens = []
            for a, b in ((0, 1), (1, 2), (2, 0)):
                d = np.clip(np.einsum("ij,ij->i", p[tri[:, a]], p[tri[:, b]]), -1, 1)
                lens.append(np.arccos(d))
            self._median_edge = float(np.median(np.concatenate(lens)))
        return self._median_edge

    def kdtree(self) -> cKDTree:
        if self._kdtree is None:
            cent = self.positions[self.mesh.triangles].mean(axis=1)
            self._tri_centroids = cent / np.linalg.norm(cent, axis=1, keepdims=True)
            self._kdtree = cKDTree(self._tri_centroids)
        return self._kdtree

    def neighbors(self) -> np.ndarray:
        """neighbors[t, i] = triangle across the edge opposite vertex i (-1 at none)."""
        if self._neighbors is None:
            tri = self.mesh.triangles
            edge_to_tris: dict = {}
            for t, tv in enumerate(tri):
                for i in range(3):
                    a, b = int(tv[(i + 1) % 3]), int(tv[(i + 2) % 3])
                    edge_to_tris.setdefault((min(a, b), max(a, b)), []).append((t, i))
            nb = -np.ones((len(tri), 3), dtype=int)
            for pair in edge_to_tris.values():
                if len(pair) == 2:
                    (t1, i1), (t2, i2) = pair
                    nb[t1, i1] = t2
                    nb[t2, i2] = t1
            self._neighbors = nb
        return self._neighbors

    def vertex_areas(self) -> np.ndarray:
        tri = self.mesh.triangles
        p = self.positions
        ar = 0.5 * np.linalg.norm(np.cross(p[tri[:, 1]] - p[tri[:, 0]],
                                           p[tri[:, 2]] - p[tri[:, 0]]), axis=1)
        m = np.zeros(self.mesh.n_vertices)
        for k in range(3):
            np.add.at(m, tri[:, k], ar / 3.0)
        return m

    def area_centroid(self) -> np.ndarray:
        m = self.vertex_areas()
        return (m[:, None] * self.positions).sum(axis=0) / m.sum()


# ---------------------------------------------------------------------------
# solver

class _System:
    """Index plumbing and energy/gradient/hessian for the symmetric solve."""

    def __init__(self, dbl: DoubledMesh):
        self.dbl = dbl
        n = dbl.n_original
        on_b = np.zeros(n, bool)
        on_b[dbl.boundary] = True
        self.boundary = dbl.boundary
        self.interior = np.where(~on_b)[0]
        self.mirror_ids = n + np.arange(len(self.interior))
        self.nI, self.nB = len(self.interior), len(dbl.boundary)
        self.Vd = dbl.n_vertices
        self.W = cot_weights(dbl.planar, dbl.triangles, self.Vd, floor=WEIGHT_FLOOR)
        deg = np.asarray(self.W.sum(axis=1)).ravel()
        self.L = (sparse.diags(deg) - self.W).tocsr()
        self.L2 = (2.0 * self.L).tocsr()
        # pins at arc-length thirds of the boundary
        pts = dbl.source.vertices
        seg = np.linalg.norm(pts[np.roll(self.boundary, -1)] - pts[self.boundary], axis=1)
        self.seg = seg
        cums = np.concatenate([[0.0], np.cumsum(seg)[:-1]]) / seg.sum()
        self.arc_param = cums * 2 * np.pi
        self.pin_pos = np.array(sorted(int(np.argmin(np.abs(cums - f)))
                                       for f in (0.0, 1.0 / 3.0, 2.0 / 3.0)))
        if len(set(self.pin_pos.tolist())) < 3:
            self.pin_pos = np.array([0, self.nB // 3, (2 * self.nB) // 3])
        self.free_b = np.setdiff1d(np.arange(self.nB), self.pin_pos)
        self.ndof = 2 * self.nI + len(self.free_b)
        self.pin_val = self.arc_param[self.pin_pos].copy()

    def positions(self, u_int, th):
        P = np.zeros((self.Vd, 3))
        r2 = (u_int ** 2).sum(axis=1)
        d = 1.0 + r2
        P[self.interior, 0] = 2 * u_int[:, 0] / d
        P[self.interior, 1] = 2 * u_int[:, 1] / d
        P[self.interior, 2] = (1.0 - r2) / d
        P[self.boundary, 0] = np.cos(th)
        P[self.boundary, 1] = np.sin(th)
        P[self.mirror_ids] = P[self.interior] * _Z
        return P

    def coords_from_positions(self, P):
        u_int = P[self.interior, :2] / (1.0 + P[self.interior, 2])[:, None]
        th = np.unwrap(np.arctan2(P[self.boundary, 1], P[self.boundary, 0]))
        return u_int, th

    def energy(self, P) -> float:
        return float((P * (self.L @ P)).sum())

    def grad(self, u_int, th):
        P = self.positions(u_int, th)
        LP = self.L @ P
        E = float((P * LP).sum())
        g_P = 2.0 * LP
        gU = g_P[self.interior] + g_P[self.mirror_ids] * _Z
        r2 = (u_int ** 2).sum(axis=1)
        f = 2.0 / (1.0 + r2)
        ux, uy = u_int[:, 0], u_int[:, 1]
        f2 = f * f
        gI = np.empty((self.nI, 2))
        gI[:, 0] = gU[:, 0] * (f - f2 * ux * ux) + gU[:, 1] * (-f2 * ux * uy) + gU[:, 2] * (-f2 * ux)
        gI[:, 1] = gU[:, 0] * (-f2 * ux * uy) + gU[:, 1] * (f - f2 * uy * uy) + gU[:, 2] * (-f2 * uy)
        gB = g_P[self.boundary]
        gth = -gB[:, 0] * np.sin(th) + gB[:, 1] * np.cos(th)
        return E, gI, gth, g_P

    def pack_grad(self, gI, gth):
        return np.concatenate([gI.ravel(), gth[self.free_b]])

    def hessian(self, u_int, th, g_P):
        r2 = (u_int ** 2).sum(axis=1)
        f = 2.0 / (1.0 + r2)
        ux, uy = u_int[:, 0], u_int[:, 1]
        f2, f3 = f * f, f * f * f
        jac = {
            0: (f - f2 * ux * ux, -f2 * ux * uy),
            1: (-f2 * ux * uy, f - f2 * uy * uy),
            2: (-f2 * ux, -f2 * uy),
        }
        colsx = 2 * np.arange(self.nI)
        colsy = colsx + 1
        bcols = 2 * self.nI + np.arange(len(self.free_b))
        bverts = self.boundary[self.free_b]
        H = None
        for a in range(3):
            dx, dy = jac[a]
            sgn = -1.0 if a == 2 else 1.0
            if a == 0:
                bval = -np.sin(th[self.free_b])
            elif a == 1:
                bval = np.cos(th[self.free_b])
            else:
                bval = np.zeros(len(self.free_b))
            Ja = sparse.coo_matrix(
                (np.concatenate([dx, dy, sgn * dx, sgn * dy, bval]),
                 (np.concatenate([self.interior, self.interior,
                                  self.mirror_ids, self.mirror_ids, bverts]),
                  np.concatenate([colsx, colsy, colsx, colsy, bcols]))),
                shape=(self.Vd, self.ndof)).tocsr()
            Ha = Ja.T @ self.L2 @ Ja
            H = Ha if H is None else H + Ha
        gU = g_P[self.interior] + g_P[self.mirror_ids] * _Z
        cxx = (gU[:, 0] * (-3 * f2 * ux + 2 * f3 * ux ** 3)
               + gU[:, 1] * (-f2 * uy + 2 * f3 * ux * ux * uy)
               + gU[:, 2] * (2 * f3 * ux * ux - f2))
        cxy = (gU[:, 0] * (-f2 * uy + 2 * f3 * ux * ux * uy)
               + gU[:, 1] * (-f2 * ux + 2 * f3 * ux * uy * uy)
               + gU[:, 2] * (2 * f3 * ux * uy))
        cyy = (gU[:, 0] * (-f2 * ux + 2 * f3 * ux * uy * uy)
               + gU[:, 1] * (-3 * f2 * uy + 2 * f3 * uy ** 3)
               + gU[:, 2] * (2 * f3 * uy * uy - f2))
        gB = g_P[self.boundary][self.free_b]
        cth = -(gB[:, 0] * np.cos(th[self.free_b]) + gB[:, 1] * np.sin(th[self.free_b]))
        ii = colsx
        curv = sparse.coo_matrix(
            (np.concatenate([cxx, cxy, cxy, cyy, cth]),
             (np.concatenate([ii, ii, ii + 1, ii + 1, bcols]),
              np.concatenate([ii, ii + 1, ii, ii + 1, bcols]))),
            shape=(self.ndof, self.ndof))
        return (H + curv).tocsc()


def _fold_count(th) -> int:
    return int((np.diff(np.unwrap(th)) < 0).sum())


def _flip_count(sys_: _System, P) -> int:
    tri = sys_.dbl.triangles
    det = np.einsum("ij,ij->i", P[tri[:, 0]], np.cross(P[tri[:, 1]], P[tri[:, 2]]))
    return int(min((det > 1e-14).sum(), (det < -1e-14).sum()))


def _repair_folds(th):
    thw = np.unwrap(th).copy()
    for _ in range(32):
        d = np.diff(thw)
        bad = np.where(d < 0)[0]
        if len(bad) == 0:
            break
        for k in bad:
            mid = 0.5 * (thw[k] + thw[k + 1])
            thw[k], thw[k + 1] = mid - 1e-6, mid + 1e-6
    return thw


def _newton(sys_: _System, u_int, th, iters: int, grad_target: float = 1e-12):
    """Damped Newton; accepts only gradient-decreasing, fold/flip-safe steps."""
    E, gI, gth, g_P = sys_.grad(u_int, th)
    g = sys_.pack_grad(gI, gth)
    base_folds = _fold_count(th)
    base_flips = _flip_count(sys_, sys_.positions(u_int, th))
    tau = 1e-6
    eye = sparse.identity(sys_.ndof, format="csc")
    for _ in range(iters):
        ginf = float(np.abs(g).max())
        if ginf < grad_target:
            break
        H = sys_.hessian(u_int, th, g_P)
        accepted = False
        for _ in range(40):
            try:
                dx = splu(H + tau * eye).solve(-g)
            except RuntimeError:
                tau *= 10
                continue
            u_new = u_int + dx[:2 * sys_.nI].reshape(sys_.nI, 2)
            th_new = th.copy()
            th_new[sys_.free_b] = th[sys_.free_b] + dx[2 * sys_.nI:]
            if (_fold_count(th_new) > base_folds
                    or _flip_count(sys_, sys_.positions(u_new, th_new)) > base_flips):
                tau *= 10
                continue
            E_new, gI_new, gth_new, gP_new = sys_.grad(u_new, th_new)
            g_new = sys_.pack_grad(gI_new, gth_new)
            if np.abs(g_new).max() < np.abs(g).max():
                accepted = True
                break
            tau *= 10
        if not accepted:
            break
        u_int, th, E, g, g_P = u_new, th_new, E_new, g_new, gP_new
        gI, gth = gI_new, gth_new
        tau = max(tau * 0.25, 1e-14)
    return u_int, th, float(np.abs(g).max())


def _conformal_dilate(P, axis, s):
    """Moebius dilation toward `axis`: tan(theta'/2) = s tan(theta/2)."""
    cu = P @ axis
    w = P - cu[:, None] * axis[None, :]
    wn = np.linalg.norm(w, axis=1)
    theta = np.arctan2(wn, cu)
    tp = 2.0 * np.arctan(s * np.tan(theta / 2.0))
    what = np.zeros_like(w)
    ok = wn > 1e-12
    what[ok] = w[ok] / wn[ok, None]
    Q = np.cos(tp)[:, None] * axis[None, :] + np.sin(tp)[:, None] * what
    return Q / np.linalg.norm(Q, axis=1, keepdims=True)


def _tutte_disk(mesh: PlanarMesh, sys_: _System) -> np.ndarray:
    """Barycentric map of the region to the unit disk (positive weights)."""
    n = mesh.n_vertices
    W = cot_weights(mesh.vertices, mesh.triangles, n, floor=None)
    W.data = np.clip(W.data, 1e-3, 1e3)  # positivity for a bijective disk map
    deg = np.asarray(W.sum(axis=1)).ravel()
    L = sparse.diags(deg) - W
    disk = np.zeros((n, 2))
    bl = sys_.boundary
    disk[bl] = np.stack([np.cos(sys_.arc_param), np.sin(sys_.arc_param)], axis=1)
    idx = sys_.interior
    lhs = L[idx][:, idx].tocsc()
    rhs = -L[idx][:, bl] @ disk[bl]
    disk[idx] = splu(lhs).solve(rhs)
    return disk


def harmonic_sphere_map(dbl: DoubledMesh, tol: float = DEFAULT_TOL,
                        max_iters: int = DEFAULT_MAX_ITERS) -> SphericalEmbedding:
    """Compute the symmetric harmonic map of the doubled mesh to the unit sphere.

    Raises NoConvergence (carrying the best embedding) if the stationarity
    residual stays above tol.
    """
    from .mesh import chord_edges

    ch = chord_edges(dbl.source)
    if ch:
        raise DegenerateMesh(
            f"{len(ch)} interior edge(s) join boundary vertices; the doubled "
            f"surface is not simplicial there and cannot be embedded")
    sys_ = _System(dbl)
    disk = _tutte_disk(dbl.source, sys_)
    u0 = disk[sys_.interior]

    energy_trace: list[float] = []

    def objective(x):
        uI = x[:2 * sys_.nI].reshape(sys_.nI, 2)
        th = np.empty(sys_.nB)
        th[sys_.free_b] = x[2 * sys_.nI:]
        th[sys_.pin_pos] = sys_.pin_val
        E, gI, gth, _ = sys_.grad(uI, th)
        return E, sys_.pack_grad(gI, gth)

    x0 = np.concatenate([u0.ravel(), sys_.arc_param[sys_.free_b]])
    res = minimize(objective, x0, jac=True, method="L-BFGS-B",
                   callback=lambda xk: energy_trace.append(objective(xk)[0]),
                   options=dict(maxiter=max_iters, maxfun=2 * max_iters,
                                ftol=1e-16, gtol=1e-12, maxcor=40))
    u_int = res.x[:2 * sys_.nI].reshape(sys_.nI, 2)
    th = np.empty(sys_.nB)
    th[sys_.free_b] = res.x[2 * sys_.nI:]
    th[sys_.pin_pos] = sys_.pin_val

    if _fold_count(th):
        th = _repair_folds(th)
        sys_.pin_val = th[sys_.pin_pos].copy()
    u_int, th, ginf = _newton(sys_, u_int, th, iters=40)

    # recentering rounds: exact equatorial dilations + short re-solves
    P = sys_.positions(u_int, th)
    for _ in range(24):
        m = None
        c = _area_centroid(sys_, P)
        c[2] = 0.0  # z component vanishes by symmetry
        nc = float(np.linalg.norm(c))
        if nc < 5e-7 and ginf < tol:
            break
        guard = 0
        while nc > 5e-8 and guard < 300:
            P = _conformal_dilate(P, -c / nc, 1.0 - 0.8 * min(nc, 1.0))
            c = _area_centroid(sys_, P)
            c[2] = 0.0
            nc = float(np.linalg.norm(c))
            guard += 1
        u_int, th = sys_.coords_from_positions(P)
        sys_.pin_val = th[sys_.pin_pos].copy()
        u_int, th, ginf = _newton(sys_, u_int, th, iters=8)
        P = sys_.positions(u_int, th)

    emb = SphericalEmbedding(mesh=dbl, positions=P, residual=ginf,
                             energy=sys_.energy(P),
                             energy_trace=np.array(energy_trace))
    if ginf > tol:
        raise NoConvergence(f"embedding residual {ginf:.3e} above tol {tol:.1e}",
                            residual=ginf, best=emb)
    return emb


def _area_centroid(sys_: _System, P) -> np.ndarray:
    tri = sys_.dbl.triangles
    ar = 0.5 * np.linalg.norm(np.cross(P[tri[:, 1]] - P[tri[:, 0]],
                                       P[tri[:, 2]] - P[tri[:, 0]]), axis=1)
    m = np.zeros(len(P))
    for k in range(3):
        np.add.at(m, tri[:, k], ar / 3.0)
    return (m[:, None] * P).sum(axis=0) / m.sum()


def embedding_residual(emb: SphericalEmbedding) -> float:
    """Recompute the stationarity residual from scratch (used after loading)."""
    sys_ = _System(emb.mesh)
    u_int, th = sys_.coords_from_positions(emb.positions)
    _, gI, gth, _ = sys_.grad(u_int, th)
    return float(np.abs(sys_.pack_grad(gI, gth)).max())


# ---------------------------------------------------------------------------
# point location and transport

def _containment(emb: SphericalEmbedding, tris, p, tol=1e-10):
    """Boolean mask: which of the candidate triangles contain p (gnomonically)."""
    tv = emb.mesh.triangles[tris]
    a, b, c = emb.positions[tv[:, 0]], emb.positions[tv[:, 1]], emb.positions[tv[:, 2]]
    orient = emb.orientation()
    s1 = np.einsum("ij,ij->i", np.cross(a, b), p[None, :].repeat(len(tv), 0)) * orient
    s2 = np.einsum("ij,ij->i", np.cross(b, c), p[None, :].repeat(len(tv), 0)) * orient
    s3 = np.einsum("ij,ij->i", np.cross(c, a), p[None, :].repeat(len(tv), 0)) * orient
    hemi = ((a + b + c) @ p) > 0
    return (s1 >= -tol) & (s2 >= -tol) & (s3 >= -tol) & hemi


def locate(p, emb: SphericalEmbedding, hint: int | None = None) -> int:
    """Triangle whose gnomonic projection contains p; walks from hint if given."""
    p = np.asarray(p, dtype=float)
    if hint is not None:
        t = _walk(emb, p, hint)
        if t >= 0:
            return t
    k = min(16, emb.mesh.n_triangles)
    _, cand = emb.kdtree().query(p, k=k)
    cand = np.atleast_1d(cand)
    mask = _containment(emb, cand, p)
    if mask.any():
        return int(cand[np.argmax(mask)])
    full = np.arange(emb.mesh.n_triangles)
    mask = _containment(emb, full, p)
    if mask.any():
        return int(full[np.argmax(mask)])
    raise NotFound("no triangle contains the query point; embedding may be folded")


def _walk(emb: SphericalEmbedding, p, start: int, max_steps: int = 400) -> int:
    nb = emb.neighbors()
    tri = emb.mesh.triangles
    pos = emb.positions
    orient = emb.orientation()
    t = start
    for _ in range(max_steps):
        tv = tri[t]
        a, b, c = pos[tv[0]], pos[tv[1]], pos[tv[2]]
        # edge planes opposite each vertex
        s = np.array([
            orient * float(np.cross(b, c) @ p),   # opposite vertex 0
            orient * float(np.cross(c, a) @ p),   # opposite vertex 1
            orient * float(np.cross(a, b) @ p),   # opposite vertex 2
        ])
        if (s >= -1e-10).all() and float((a + b + c) @ p) > 0:
            return t
        step = int(np.argmin(s))
        nxt = nb[t, step]
        if nxt < 0:
            return -1
        t = nxt
    return -1


def locate_many(points, emb: SphericalEmbedding) -> np.ndarray:
    """Vectorized location of many points (nearest-centroid candidates with
    chained-walk fallback)."""
    pts = np.asarray(points, dtype=float)
    k = min(12, emb.mesh.n_triangles)
    _, cand = emb.kdtree().query(pts, k=k)
    cand = np.atleast_2d(cand)
    tri = emb.mesh.triangles
    pos = emb.positions
    orient = emb.orientation()
    tv = tri[cand]                                   # (n, k, 3)
    a = pos[tv[..., 0]]
    b = pos[tv[..., 1]]
    c = pos[tv[..., 2]]
    pp = pts[:, None, :]
    s1 = np.einsum("nkj,nkj->nk", np.cross(a, b), np.broadcast_to(pp, a.shape)) * orient
    s2 = np.einsum("nkj,nkj->nk", np.cross(b, c), np.broadcast_to(pp, a.shape)) * orient
    s3 = np.einsum("nkj,nkj->nk", np.cross(c, a), np.broadcast_to(pp, a.shape)) * orient
    hemi = np.einsum("nkj,nkj->nk", a + b + c, np.broadcast_to(pp, a.shape)) > 0
    ok = (s1 >= -1e-10) & (s2 >= -1e-10) & (s3 >= -1e-10) & hemi
    out = np.full(len(pts), -1, dtype=int)
    has = ok.any(axis=1)
    out[has] = cand[np.arange(len(pts)), np.argmax(ok, axis=1)][has]
    misses = np.where(~has)[0]
    last = int(out[has][0]) if has.any() else 0
    for i in misses:
        out[i] = locate(pts[i], emb, hint=last)
        last = int(out[i])
    return out


def spherical_barycentric(emb: SphericalEmbedding, t: int, p) -> np.ndarray:
    """Gnomonic barycentric weights of p inside triangle t (sum to one)."""
    tv = emb.mesh.triangles[t]
    m = emb.positions[tv].T  # columns a, b, c
    w = np.linalg.solve(m, np.asarray(p, dtype=float))
    s = w.sum()
    if abs(s) < 1e-300:
        raise NotFound("degenerate barycentric solve")
    return w / s


@dataclass(frozen=True)
class PlanarSection:
    """One contiguous piece of a pulled-back curve, on one side of the double."""

    points: np.ndarray
    mirrored: bool


def pull_back_path(poly: GeodesicPolyline, emb: SphericalEmbedding) -> list[PlanarSection]:
    """Map a spherical polyline back to the planar region, split at equator
    crossings (side changes of the containing triangles)."""
    pts = poly.points
    tids = locate_many(pts, emb)
    planar = np.empty((len(pts), 2))
    for i, (p, t) in enumerate(zip(pts, tids)):
        w = spherical_barycentric(emb, int(t), p)
        planar[i] = w @ emb.mesh.planar[emb.mesh.triangles[int(t)]]
    sides = emb.mesh.side[tids]
    sections = []
    start = 0
    for i in range(1, len(pts) + 1):
        if i == len(pts) or sides[i] != sides[start]:
            sections.append(PlanarSection(points=planar[start:i].copy(),
                                          mirrored=bool(sides[start])))
            start = i
    return sections


def push_forward_point(planar_pt, emb: SphericalEmbedding, mirrored: bool = False) -> np.ndarray:
    """Map a planar point to its sphere position through the embedding."""
    src = emb.mesh.source
    q = np.asarray(planar_pt, dtype=float)
    tris = src.triangles
    v = src.vertices
    a, b, c = v[tris[:, 0]], v[tris[:, 1]], v[tris[:, 2]]
    d = ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1])
         - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))
    wa = ((b[:, 0] - q[0]) * (c[:, 1] - q[1]) - (b[:, 1] - q[1]) * (c[:, 0] - q[0])) / d
    wb = ((c[:, 0] - q[0]) * (a[:, 1] - q[1]) - (c[:, 1] - q[1]) * (a[:, 0] - q[0])) / d
    wc = 1.0 - wa - wb
    tol = -1e-9
    ok = (wa >= tol) & (wb >= tol) & (wc >= tol)
    if not ok.any():
        raise NotFound("planar point outside the region")
    t = int(np.argmax(ok))
    tri_doubled = t + (emb.mesh.source.n_triangles if mirrored else 0)
    w = np.array([wa[t], wb[t], wc[t]])
    p = w @ emb.positions[emb.mesh.triangles[tri_doubled]]
    return p / np.linalg.norm(p)


# ---------------------------------------------------------------------------
# distortion

@dataclass(frozen=True)
class DistortionReport:
    mean_angle_error: float
    max_angle_error: float
    percentiles: dict
    mean_dilatation: float
    max_dilatation: float


def _planar_angles(pts, tris):
    a, b, c = pts[tris[:, 0]], pts[tris[:, 1]], pts[tris[:, 2]]

    def ang(p0, p1, p2):
        u, v = p1 - p0, p2 - p0
        cu = (u * v).sum(axis=1) / (np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))
        return np.arccos(np.clip(cu, -1, 1))

    return np.stack([ang(a, b, c), ang(b, c, a), ang(c, a, b)], axis=1)


def _spherical_angles(pos, tris):
    a, b, c = pos[tris[:, 0]], pos[tris[:, 1]], pos[tris[:, 2]]

    def ang(p0, p1, p2):
        u = p1 - (p1 * p0).sum(axis=1, keepdims=True) * p0
        v = p2 - (p2 * p0).sum(axis=1, keepdims=True) * p0
        nu = np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1)
        cu = (u * v).sum(axis=1) / np.maximum(nu, 1e-300)
        return np.arccos(np.clip(cu, -1, 1))

    return np.stack([ang(a, b, c), ang(b, c, a), ang(c, a, b)], axis=1)


def distortion_report(emb: SphericalEmbedding) -> DistortionReport:
    """Per-triangle angle distortion (planar vs spherical) and dilatation."""
    tris = emb.mesh.triangles
    ap = _planar_angles(emb.mesh.planar, tris)
    asph = _spherical_angles(emb.positions, tris)
    rel = (np.abs(asph - ap) / ap).mean(axis=1)
    # quasi-conformal dilatation from angle pairs: ratio of singular values of
    # the per-triangle linear map, computed from edge vectors
    p2 = emb.mesh.planar
    e1p = p2[tris[:, 1]] - p2[tris[:, 0]]
    e2p = p2[tris[:, 2]] - p2[tris[:, 0]]
    a3 = emb.positions[tris[:, 0]]
    e1s = emb.positions[tris[:, 1]] - a3
    e2s = emb.positions[tris[:, 2]] - a3
    # orthonormal frame of the planar triangle and the embedded triangle
    dil = np.empty(len(tris))
    for i in range(len(tris)):
        m_src = np.stack([e1p[i], e2p[i]], axis=1)
        f1 = e1s[i] / (np.linalg.norm(e1s[i]) + 1e-300)
        n = np.cross(e1s[i], e2s[i])
        nn = np.linalg.norm(n)
        if nn < 1e-300:
            dil[i] = np.inf
            continue
        f2 = np.cross(n / nn, f1)
        m_dst = np.stack([
            [float(e1s[i] @ f1), float(e2s[i] @ f1)],
            [float(e1s[i] @ f2), float(e2s[i] @ f2)],
        ])
        try:
            j = m_dst @ np.linalg.inv(m_src)
        except np.linalg.LinAlgError:
            dil[i] = np.inf
            continue
        sv = np.linalg.svd(j, compute_uv=False)
        dil[i] = sv[0] / max(sv[1], 1e-300)
    finite = dil[np.isfinite(dil)]
    return DistortionReport(
        mean_angle_error=float(rel.mean()),
        max_angle_error=float(rel.max()),
        percentiles={p: float(np.percentile(rel, p)) for p in (50, 90, 99)},
        mean_dilatation=float(finite.mean()) if len(finite) else float("inf"),
        max_dilatation=float(finite.max()) if len(finite) else float("inf"),
    )


# ---------------------------------------------------------------------------
# embedding text format: the planar mesh block, then one "x y z" line per
# original vertex (mirror positions follow from the z reflection)

def embedding_to_text(emb: SphericalEmbedding) -> str:
    head = mesh_to_text(emb.mesh.source)
    pos = emb.positions[:emb.mesh.n_original]
    lines = [f"{x:.12g} {y:.12g} {z:.12g}" for x, y, z in pos]
    return head + "\n".join(lines) + "\n"


def embedding_from_text(text: str) -> SphericalEmbedding:
    from .mesh import double_cover

    rows = [ln for ln in text.splitlines() if ln.strip()]
    nv, nf, nb = (int(x) for x in rows[0].split())
    mesh_rows = rows[:1 + nv + nf + nb]
    mesh = mesh_from_text("\n".join(mesh_rows))
    pos_rows = rows[1 + nv + nf + nb:]
    if len(pos_rows) != nv:
        raise DegenerateMesh(f"embedding text has {len(pos_rows)} position lines, "
                             f"expected {nv}")
    upper = np.array([[float(x) for x in r.split()] for r in pos_rows])
    dbl = double_cover(mesh)
    P = np.empty((dbl.n_vertices, 3))
    P[:nv] = upper
    on_b = np.zeros(nv, bool)
    on_b[dbl.boundary] = True
    interior = np.where(~on_b)[0]
    P[nv:] = upper[interior] * _Z
    emb = SphericalEmbedding(mesh=dbl, positions=P, residual=float("nan"))
    emb.residual = embedding_residual(emb)
    return emb


def save_embedding(emb: SphericalEmbedding, path) -> None:
    with open(path, "w") as fh:
        fh.write(embedding_to_text(emb))


def load_embedding(path) -> SphericalEmbedding:
    with open(path) as fh:
        return embedding_from_text(fh.read())
