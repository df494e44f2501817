"""Profile triangulation, extrusion to sheet meshes, and symmetry detection.

Meshes are millimeter-unit triangle soups with a guaranteed-watertight
topology: a flat profile is triangulated (holes bridged into the outer loop,
then ear clipping), both caps are emitted with opposite winding, and side
quads stitch the rims. The model origin sits at the centroid of the
profile's bounding box with the sheet centered in z.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import ConvexHull, cKDTree

from .docparse import Profile2D, polygon_area
from .errors import TriangulationError
from .transforms import rotation_about_axis, rotation_angle, rotation_z


# ---------------------------------------------------------------------------
# mesh type and basic measures


@dataclass(eq=False)
class TriMesh:
    """Triangle mesh; ``triangles`` holds vertex-index triples."""

    vertices: np.ndarray           # (V, 3) float64, mm
    triangles: np.ndarray          # (F, 3) int32
    category_id: int = 0
    diameter: float = field(default=0.0)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int32).reshape(-1, 3)
        if self.diameter == 0.0 and len(self.vertices):
            self.diameter = mesh_diameter(self.vertices)


def mesh_diameter(vertices: np.ndarray) -> float:
    """Max pairwise vertex distance (via convex hull for large meshes)."""
    pts = vertices
    if len(pts) > 512:
        try:
            pts = pts[ConvexHull(pts).vertices]
        except Exception:
            pass  # degenerate (flat) input: fall through to brute force
    d2 = np.sum((pts[:, None, :] - pts[None, :, :]) ** 2, axis=-1)
    return float(np.sqrt(d2.max()))


def signed_volume(mesh: TriMesh) -> float:
    """Divergence-theorem volume; positive for outward-consistent winding."""
    v = mesh.vertices
    a, b, c = (v[mesh.triangles[:, k]] for k in range(3))
    return float(np.einsum("ij,ij->i", a, np.cross(b, c)).sum() / 6.0)


def _edge_counts(mesh: TriMesh) -> dict[tuple[int, int], int]:
    counts: dict[tuple[int, int], int] = {}
    for tri in mesh.triangles:
        for i in range(3):
            a, b = int(tri[i]), int(tri[(i + 1) % 3])
            key = (a, b) if a < b else (b, a)
            counts[key] = counts.get(key, 0) + 1
    return counts


def is_watertight(mesh: TriMesh) -> bool:
    """Every undirected edge shared by exactly two triangles."""
    return all(c == 2 for c in _edge_counts(mesh).values())


def euler_characteristic(mesh: TriMesh) -> int:
    v = len(np.unique(mesh.triangles))
    e = len(_edge_counts(mesh))
    f = len(mesh.triangles)
    return v - e + f


# ---------------------------------------------------------------------------
# triangulation: hole bridging + ear clipping


def _bridge_hole(poly: list[np.ndarray], hole: np.ndarray) -> list[np.ndarray]:
    """Splice one hole (CW) into a CCW polygon via a mutually visible pair."""
    m_idx = 0
    for i in range(1, len(hole)):
        if (hole[i][0], hole[i][1]) > (hole[m_idx][0], hole[m_idx][1]):
            m_idx = i
    M = hole[m_idx]

    # closest hit of the +x ray from M against the polygon: a vertex lying
    # exactly on the ray counts as a hit in its own right, otherwise a ray
    # grazing a corner can slip between the half-open edge tests and anchor
    # the bridge across another hole
    n = len(poly)
    best_x = math.inf
    best_edge = -1
    best_vertex = -1
    for i in range(n):
        a, b = poly[i], poly[(i + 1) % n]
        ay, by = a[1] - M[1], b[1] - M[1]
        if abs(ay) < 1e-9:
            if a[0] > M[0] + 1e-9 and a[0] < best_x - 1e-9:
                best_x = a[0]
                best_vertex = i
                best_edge = -1
            continue
        if abs(by) < 1e-9 or (ay > 0) == (by > 0):
            continue  # b is some edge's a; genuine crossings straddle strictly
        x = a[0] + (M[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1])
        if x > M[0] + 1e-9 and x < best_x - 1e-9:
            best_x = x
            best_edge = i
            best_vertex = -1
    if best_edge < 0 and best_vertex < 0:
        raise TriangulationError("hole has no visible point on the outer loop")

    I = np.array([best_x, M[1]])
    if best_vertex >= 0:
        p_idx = best_vertex
    else:
        # endpoint of the hit edge with the larger x is the candidate;
        # any reflex vertex inside triangle (M, I, P) preempts it
        a_idx, b_idx = best_edge, (best_edge + 1) % n
        p_idx = a_idx if poly[a_idx][0] > poly[b_idx][0] else b_idx
        P = poly[p_idx]
        tri = np.array([M, I, P]) if polygon_area(np.array([M, I, P])) > 0 \
            else np.array([M, P, I])

        def cross2(u, v):
            return u[0] * v[1] - u[1] * v[0]

        best_key = None
        for j in range(n):
            v = poly[j]
            prev_v, next_v = poly[j - 1], poly[(j + 1) % n]
            if cross2(v - prev_v, next_v - v) >= 0:
                continue  # only reflex vertices can occlude the bridge
            d0 = cross2(tri[1] - tri[0], v - tri[0])
            d1 = cross2(tri[2] - tri[1], v - tri[1])
            d2 = cross2(tri[0] - tri[2], v - tri[2])
            if d0 > 1e-12 and d1 > 1e-12 and d2 > 1e-12:
                dv = v - M
                key = (math.atan2(abs(dv[1]), dv[0]), float(dv @ dv))
                if best_key is None or key < best_key:
                    best_key = key
                    p_idx = j

    # earlier bridges leave coordinate-equal twins of their anchor in the
    # chain; splicing at the wrong twin threads this slit through an old one
    # and flips a whole stretch of the traversal, so pick the copy whose
    # interior wedge actually contains the direction back toward the hole
    anchor = poly[p_idx]
    twins = [j for j in range(n)
             if abs(poly[j][0] - anchor[0]) < 1e-12
             and abs(poly[j][1] - anchor[1]) < 1e-12]
    if len(twins) > 1:
        d = M - anchor
        for j in sorted(twins, key=lambda j: j != p_idx):
            u = poly[j] - poly[j - 1]
            w = poly[(j + 1) % n] - poly[j]
            cwd = w[0] * d[1] - w[1] * d[0]
            cud = u[0] * d[1] - u[1] * d[0]
            if (u[0] * w[1] - u[1] * w[0]) >= 0:
                inside = cwd > 0 and cud > 0
            else:
                inside = cwd > 0 or cud > 0
            if inside:
                p_idx = j
                break
    rotated = [hole[(m_idx + k) % len(hole)] for k in range(len(hole))]
    return (poly[: p_idx + 1] + rotated + [hole[m_idx].copy()]
            + [poly[p_idx].copy()] + poly[p_idx + 1:])


def _ear_clip(poly: list[np.ndarray], eps_area: float,
              span: float) -> list[tuple[int, int, int]]:
    """Ear clipping robust to the zero-width slits left by hole bridging.

    An ear is rejected not only when another vertex sits strictly inside it
    but also when a vertex rests on its boundary (bridge twins coincident
    with the ear's own corners are exempt) or when any remaining polygon
    edge properly crosses it; slit edges can slice through a large ear
    while both their endpoints stay outside.
    """
    n = len(poly)
    pts = np.array(poly)
    nxt = list(range(1, n)) + [0]
    prv = [n - 1] + list(range(n - 1))
    alive = np.ones(n, dtype=bool)
    remaining = n
    tris: list[tuple[int, int, int]] = []
    eps_band = 1e-9 * max(span, 1.0)

    def cross_at(i: int) -> float:
        a, b, c = pts[prv[i]], pts[i], pts[nxt[i]]
        return float((b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0]))

    def blocked(i: int) -> bool:
        a, b, c = pts[prv[i]], pts[i], pts[nxt[i]]
        mask = alive.copy()
        mask[[prv[i], i, nxt[i]]] = False
        if mask.any():
            q = pts[mask]
            d0 = (b[0] - a[0]) * (q[:, 1] - a[1]) - (b[1] - a[1]) * (q[:, 0] - a[0])
            d1 = (c[0] - b[0]) * (q[:, 1] - b[1]) - (c[1] - b[1]) * (q[:, 0] - b[0])
            d2 = (a[0] - c[0]) * (q[:, 1] - c[1]) - (a[1] - c[1]) * (q[:, 0] - c[0])
            onin = (d0 > -eps_band) & (d1 > -eps_band) & (d2 > -eps_band)
            if onin.any():
                qb = q[onin]
                near_corner = np.zeros(len(qb), dtype=bool)
                for corner in (a, b, c):
                    dd = np.einsum("ij,ij->i", qb - corner, qb - corner)
                    near_corner |= dd < 1e-18
                if np.any(~near_corner):
                    return True
        # proper crossings of remaining edges against the ear triangle
        src = np.flatnonzero(alive)
        e0 = pts[src]
        e1 = pts[[nxt[j] for j in src]]
        ex, ey = e1[:, 0] - e0[:, 0], e1[:, 1] - e0[:, 1]
        for s0, s1 in ((a, b), (b, c), (c, a)):
            tx, ty = s1[0] - s0[0], s1[1] - s0[1]
            g1 = tx * (e0[:, 1] - s0[1]) - ty * (e0[:, 0] - s0[0])
            g2 = tx * (e1[:, 1] - s0[1]) - ty * (e1[:, 0] - s0[0])
            h1 = ex * (s0[1] - e0[:, 1]) - ey * (s0[0] - e0[:, 0])
            h2 = ex * (s1[1] - e0[:, 1]) - ey * (s1[0] - e0[:, 0])
            if np.any((g1 * g2 < -1e-18) & (h1 * h2 < -1e-18)):
                return True
        return False

    def clip(i: int) -> int:
        nonlocal remaining
        tris.append((prv[i], i, nxt[i]))
        alive[i] = False
        nxt[prv[i]] = nxt[i]
        prv[nxt[i]] = prv[i]
        remaining -= 1
        return prv[nxt[i]]

    cursor = 0
    while remaining > 3:
        found = False
        for _ in range(remaining):
            i = cursor
            cursor = nxt[cursor]
            if cross_at(i) > eps_area and not blocked(i):
                cursor = clip(i)
                found = True
                break
        if not found:
            # numeric fallback: clip a collinear spike (zero-area ear)
            i = cursor
            for _ in range(remaining):
                if abs(cross_at(i)) <= eps_area and not blocked(i):
                    cursor = clip(i)
                    found = True
                    break
                i = nxt[i]
            if not found:
                raise TriangulationError("no ear found; polygon may self-intersect")
    i = int(np.flatnonzero(alive)[0])
    tris.append((prv[i], i, nxt[i]))
    return tris


def triangulate(profile: Profile2D) -> np.ndarray:
    """Decompose the profile's material region into triangles.

    Returns an (F, 3, 2) coordinate array; triangle vertices are CCW and
    reuse profile vertex coordinates exactly. Total triangle area equals the
    profile area.
    """
    poly = [p.copy() for p in profile.outer]
    holes = sorted(profile.holes, key=lambda h: -float(h[:, 0].max()))
    for hole in holes:
        poly = _bridge_hole(poly, hole)

    span = max(np.ptp([p[0] for p in poly]), np.ptp([p[1] for p in poly]))
    eps_area = 1e-12 * max(span, 1.0) ** 2
    tris = _ear_clip(poly, eps_area, span)

    pts = np.array(poly)
    coords = pts[np.array(tris, dtype=np.intp)]
    # drop degenerate slivers produced at bridge seams
    areas = 0.5 * ((coords[:, 1, 0] - coords[:, 0, 0])
                   * (coords[:, 2, 1] - coords[:, 0, 1])
                   - (coords[:, 1, 1] - coords[:, 0, 1])
                   * (coords[:, 2, 0] - coords[:, 0, 0]))
    return coords[areas > eps_area]


# ---------------------------------------------------------------------------
# extrusion


def centered_profile(profile: Profile2D) -> tuple[Profile2D, np.ndarray]:
    """Shift a profile so its bbox centroid lands on the origin."""
    x0, y0 = profile.outer.min(axis=0)
    x1, y1 = profile.outer.max(axis=0)
    offset = np.array([(x0 + x1) / 2.0, (y0 + y1) / 2.0])
    return Profile2D(
        outer=profile.outer - offset,
        holes=[h - offset for h in profile.holes],
        category_id=profile.category_id,
    ), offset


def extrude(profile: Profile2D, thickness: float = 1.0) -> TriMesh:
    """Sweep the profile to a sheet of the given thickness.

    The result is watertight with outward winding; caps sit at z = ±t/2.
    """
    if thickness <= 0:
        raise ValueError("thickness must be positive")
    centered, _ = centered_profile(profile)
    tri_coords = triangulate(centered)

    rings = [centered.outer, *centered.holes]
    flat = np.vstack(rings)
    index_of = {(x, y): i for i, (x, y) in enumerate(map(tuple, flat))}
    nv = len(flat)
    h = thickness / 2.0
    vertices = np.empty((2 * nv, 3))
    vertices[:nv, :2] = flat
    vertices[:nv, 2] = h
    vertices[nv:, :2] = flat
    vertices[nv:, 2] = -h

    tris: list[tuple[int, int, int]] = []
    for (a, b, c) in tri_coords:
        ia = index_of[(a[0], a[1])]
        ib = index_of[(b[0], b[1])]
        ic = index_of[(c[0], c[1])]
        tris.append((ia, ib, ic))                      # top cap, +z normal
        tris.append((ia + nv, ic + nv, ib + nv))       # bottom cap, -z normal

    base = 0
    for ring in rings:
        k = len(ring)
        for i in range(k):
            a = base + i
            b = base + (i + 1) % k
            tris.append((a, a + nv, b + nv))           # side, outward normal
            tris.append((a, b + nv, b))
        base += k

    return TriMesh(vertices=vertices, triangles=np.array(tris, dtype=np.int32),
                   category_id=profile.category_id)


# ---------------------------------------------------------------------------
# symmetry detection


@dataclass
class SymmetrySet:
    """Discrete rotations (about the model origin) mapping the mesh to itself.

    Element 0 is always the identity; the set is closed under composition
    within the detection tolerance.
    """

    transforms: list[np.ndarray] = field(default_factory=lambda: [np.eye(3)])

    def __len__(self) -> int:
        return len(self.transforms)


def _hausdorff_within(tree: cKDTree, verts: np.ndarray, r: np.ndarray,
                      tol: float, probe: np.ndarray) -> bool:
    """Symmetric Hausdorff(verts, r@verts) <= tol, with a cheap probe first."""
    rot = verts @ r.T
    d_probe, _ = tree.query(rot[probe], k=1)
    if d_probe.max() > tol:   # lower bound on the Hausdorff distance
        return False
    d1, _ = tree.query(rot, k=1)
    if d1.max() > tol:
        return False
    d2, _ = cKDTree(rot).query(verts, k=1)
    return bool(d2.max() <= tol)


def detect_symmetries(mesh: TriMesh, angular_step: float = 1.0,
                      tolerance: float = 0.05) -> SymmetrySet:
    """Find discrete rotational symmetries of a sheet mesh.

    Candidates are z-axis rotations on a grid of ``angular_step`` degrees
    plus 180-degree flips about in-plane axes (the principal axes and the
    coordinate axes). Accepted transforms are completed into a group by
    composing pairs and re-verifying each product. A transform is accepted
    when the symmetric Hausdorff distance between the vertex set and its
    image stays within ``tolerance``.
    """
    if angular_step <= 0 or abs(360.0 / angular_step - round(360.0 / angular_step)) > 1e-9:
        raise ValueError("angular_step must evenly divide 360 degrees")
    verts = mesh.vertices
    tree = cKDTree(verts)
    probe = np.unique(np.linspace(0, len(verts) - 1, min(24, len(verts)),
                                  dtype=np.intp))

    def ok(r: np.ndarray) -> bool:
        return _hausdorff_within(tree, verts, r, tolerance, probe)

    candidates: list[np.ndarray] = []
    steps = int(round(360.0 / angular_step))
    for k in range(1, steps):
        candidates.append(rotation_z(math.radians(k * angular_step)))

    xy = verts[:, :2] - verts[:, :2].mean(axis=0)
    cov = xy.T @ xy
    _, eigvec = np.linalg.eigh(cov)
    angles = {0.0, math.pi / 2.0}
    for v in eigvec.T:
        angles.add(math.atan2(v[1], v[0]) % math.pi)
    for alpha in angles:
        candidates.append(
            rotation_about_axis([math.cos(alpha), math.sin(alpha), 0.0], math.pi))

    accepted: list[np.ndarray] = [np.eye(3)]

    def known(r: np.ndarray) -> bool:
        return any(np.abs(r - a).max() < 1e-6 for a in accepted)

    for r in candidates:
        if not known(r) and ok(r):
            accepted.append(r)

    # group closure with re-verification
    changed = True
    while changed and len(accepted) < 1440:
        changed = False
        for a in list(accepted):
            for b in list(accepted):
                p = a @ b
                if not known(p) and ok(p):
                    accepted.append(p)
                    changed = True

    ident = accepted[0]
    rest = sorted(accepted[1:],
                  key=lambda r: (round(rotation_angle(r), 9),
                                 tuple(np.round(r.ravel(), 9))))
    return SymmetrySet(transforms=[ident, *rest])


# ---------------------------------------------------------------------------
# PLY and model-directory IO


def export_ply(mesh: TriMesh, path) -> None:
    lines = [
        "ply",
        "format ascii 1.0",
        "comment units: millimeters",
        f"element vertex {len(mesh.vertices)}",
        "property float x",
        "property float y",
        "property float z",
        f"element face {len(mesh.triangles)}",
        "property list uchar int vertex_indices",
        "end_header",
    ]
    for x, y, z in mesh.vertices:
        lines.append(f"{x:.6f} {y:.6f} {z:.6f}")
    for a, b, c in mesh.triangles:
        lines.append(f"3 {a} {b} {c}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def import_ply(path, category_id: int = 0) -> TriMesh:
    """Minimal ASCII PLY reader for meshes written by :func:`export_ply`."""
    text = Path(path).read_text(encoding="ascii").splitlines()
    if not text or text[0].strip() != "ply":
        raise ValueError(f"{path}: not a PLY file")
    nv = nf = 0
    i = 1
    while i < len(text):
        line = text[i].strip()
        i += 1
        if line.startswith("element vertex"):
            nv = int(line.split()[-1])
        elif line.startswith("element face"):
            nf = int(line.split()[-1])
        elif line == "end_header":
            break
    verts = np.array([[float(v) for v in text[i + k].split()[:3]]
                      for k in range(nv)])
    faces = []
    for k in range(nf):
        parts = text[i + nv + k].split()
        cnt = int(parts[0])
        idx = [int(p) for p in parts[1:1 + cnt]]
        for j in range(1, cnt - 1):  # fan for the general case
            faces.append((idx[0], idx[j], idx[j + 1]))
    return TriMesh(vertices=verts, triangles=np.array(faces, dtype=np.int32),
                   category_id=category_id)


def _bbox_corners(vertices: np.ndarray) -> np.ndarray:
    lo = vertices.min(axis=0)
    hi = vertices.max(axis=0)
    return np.array([[x, y, z] for x in (lo[0], hi[0])
                     for y in (lo[1], hi[1]) for z in (lo[2], hi[2])])


_BOX_EDGES = [[0, 1], [0, 2], [1, 3], [2, 3],
              [4, 5], [4, 6], [5, 7], [6, 7],
              [0, 4], [1, 5], [2, 6], [3, 7]]


def write_models(models: dict[int, tuple[TriMesh, SymmetrySet]], out_dir) -> None:
    """Write obj_XXXXXX.ply files plus models_info.json and models_edges.json.

    models_info carries the diameter and the discrete symmetries as
    row-major 3x3 rotation lists (identity included). models_edges holds
    bounding-box corners and edge pairs for wireframe overlays.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    info: dict[str, dict] = {}
    edges: dict[str, dict] = {}
    for cat in sorted(models):
        mesh, syms = models[cat]
        export_ply(mesh, out / f"obj_{cat:06d}.ply")
        info[str(cat)] = {
            "diameter": round(float(mesh.diameter), 6),
            "symmetries_discrete": [
                [round(float(v), 12) for v in r.ravel()]
                for r in syms.transforms
            ],
        }
        edges[str(cat)] = {
            "corners": [[round(float(v), 6) for v in c]
                        for c in _bbox_corners(mesh.vertices)],
            "edges": _BOX_EDGES,
        }
    (out / "models_info.json").write_text(
        json.dumps(info, indent=1, sort_keys=True), encoding="utf-8")
    (out / "models_edges.json").write_text(
        json.dumps(edges, indent=1, sort_keys=True), encoding="utf-8")


def read_models(models_dir) -> dict[int, tuple[TriMesh, SymmetrySet]]:
    root = Path(models_dir)
    info = json.loads((root / "models_info.json").read_text(encoding="utf-8"))
    models: dict[int, tuple[TriMesh, SymmetrySet]] = {}
    for key, meta in info.items():
        cat = int(key)
        mesh = import_ply(root / f"obj_{cat:06d}.ply", category_id=cat)
        mesh.diameter = float(meta["diameter"])
        syms = SymmetrySet(transforms=[
            np.array(m, dtype=np.float64).reshape(3, 3)
            for m in meta["symmetries_discrete"]
        ])
        models[cat] = (mesh, syms)
    return models
