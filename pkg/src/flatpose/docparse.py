"""Manufacturing-document and SVG outline parsing.

A manufacturing document is an XML file listing parts; each part carries an
SVG payload whose path elements describe the flat outline of a sheet-metal
part in millimeters. This module tokenizes path data (all 20 SVG path
commands), flattens curves to polylines under a chord-distance tolerance,
and classifies closed loops into one outer boundary (CCW) plus hole loops
(CW).
"""

from __future__ import annotations

import json
import math
import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateProfileError,
    DocumentParseError,
    DocumentSchemaError,
    LoopNestingError,
    OpenSubpathError,
    PathCommandError,
)

DEFAULT_TOLERANCE = 0.1  # mm, max chord deviation when flattening curves

_DUP_EPS = 1e-9  # consecutive points closer than this collapse to one


# ---------------------------------------------------------------------------
# polygon helpers (shared with the meshing layer)


def polygon_area(loop: np.ndarray) -> float:
    """Signed shoelace area; positive for counter-clockwise loops."""
    x, y = loop[:, 0], loop[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def polygon_perimeter(loop: np.ndarray) -> float:
    d = np.roll(loop, -1, axis=0) - loop
    return float(np.hypot(d[:, 0], d[:, 1]).sum())


def point_in_polygon(point, loop: np.ndarray, boundary_eps: float = 1e-9) -> bool:
    """Strict interior test; points on the boundary count as outside."""
    px, py = float(point[0]), float(point[1])
    a = loop
    b = np.roll(loop, -1, axis=0)
    # distance to each edge segment
    ab = b - a
    ap = np.array([px, py]) - a
    denom = np.einsum("ij,ij->i", ab, ab)
    t = np.clip(np.divide(np.einsum("ij,ij->i", ap, ab), denom,
                          out=np.zeros_like(denom), where=denom > 0), 0.0, 1.0)
    closest = a + t[:, None] * ab
    d2 = np.einsum("ij,ij->i", closest - [px, py], closest - [px, py])
    if d2.min() <= boundary_eps * boundary_eps:
        return False
    # even-odd crossing count against a +x ray
    cond = (a[:, 1] > py) != (b[:, 1] > py)
    with np.errstate(divide="ignore", invalid="ignore"):
        xs = a[:, 0] + (py - a[:, 1]) * ab[:, 0] / ab[:, 1]
    crossings = np.count_nonzero(cond & (xs > px))
    return bool(crossings % 2)


def _segments_intersect(a: np.ndarray, b: np.ndarray) -> bool:
    """True if any segment of loop ``a`` properly crosses a segment of ``b``."""
    a0, a1 = a, np.roll(a, -1, axis=0)
    b0, b1 = b, np.roll(b, -1, axis=0)

    def cross(o, p, q):
        return ((p[..., 0] - o[..., 0]) * (q[..., 1] - o[..., 1])
                - (p[..., 1] - o[..., 1]) * (q[..., 0] - o[..., 0]))

    o = a0[:, None, :]
    p = a1[:, None, :]
    d1 = cross(o, p, b0[None, :, :])
    d2 = cross(o, p, b1[None, :, :])
    d3 = cross(b0[None, :, :], b1[None, :, :], o)
    d4 = cross(b0[None, :, :], b1[None, :, :], p)
    return bool(np.any((d1 * d2 < 0) & (d3 * d4 < 0)))


def loop_bbox(loop: np.ndarray) -> tuple[float, float, float, float]:
    """(xmin, ymin, xmax, ymax) of a loop."""
    return (float(loop[:, 0].min()), float(loop[:, 1].min()),
            float(loop[:, 0].max()), float(loop[:, 1].max()))


# ---------------------------------------------------------------------------
# data types


@dataclass
class Profile2D:
    """Closed flat outline: one outer loop (CCW) and zero or more holes (CW).

    Loops are (N, 2) float64 arrays in millimeters, implicitly closed
    (last vertex connects back to the first).
    """

    outer: np.ndarray
    holes: list[np.ndarray] = field(default_factory=list)
    category_id: int = 0

    def area(self) -> float:
        """Material area: outer minus holes."""
        return polygon_area(self.outer) + sum(polygon_area(h) for h in self.holes)

    def perimeter(self) -> float:
        """Total boundary length including hole rims."""
        return polygon_perimeter(self.outer) + sum(
            polygon_perimeter(h) for h in self.holes)


@dataclass(frozen=True)
class PartEntry:
    category_id: int
    svg_source: str


@dataclass(frozen=True)
class ManufacturingDoc:
    parts: tuple[PartEntry, ...]


# ---------------------------------------------------------------------------
# path tokenizer / interpreter

_SCANNER = re.compile(
    r"\s+|,"
    r"|(?P<cmd>[MmLlHhVvCcSsQqTtAaZz])"
    r"|(?P<num>[-+]?(?:\d*\.\d+|\d+\.?)(?:[eE][-+]?\d+)?)"
    r"|(?P<bad>.)"
)

_ARG_COUNT = {
    "M": 2, "L": 2, "H": 1, "V": 1, "C": 6, "S": 4, "Q": 4, "T": 2, "A": 7, "Z": 0,
}


def _tokenize(d: str) -> list[str | float]:
    tokens: list[str | float] = []
    for m in _SCANNER.finditer(d):
        if m.group("cmd"):
            tokens.append(m.group("cmd"))
        elif m.group("num"):
            tokens.append(float(m.group("num")))
        elif m.group("bad"):
            raise PathCommandError(
                f"unsupported path command {m.group('bad')!r} at offset {m.start()}")
    return tokens


def _flatten_cubic(p0, p1, p2, p3, tol: float, out: list, depth: int = 0) -> None:
    """Adaptive de Casteljau bisection; emits points after p0."""
    chord = p3 - p0
    L = math.hypot(chord[0], chord[1])
    if L < 1e-12:
        d1 = math.hypot(*(p1 - p0))
        d2 = math.hypot(*(p2 - p0))
        flat = max(d1, d2) <= tol
    else:
        # perpendicular distance of both control points to the chord
        d1 = abs(chord[0] * (p0[1] - p1[1]) - chord[1] * (p0[0] - p1[0])) / L
        d2 = abs(chord[0] * (p0[1] - p2[1]) - chord[1] * (p0[0] - p2[0])) / L
        flat = max(d1, d2) <= tol
    if flat or depth >= 24:
        out.append(p3)
        return
    p01 = 0.5 * (p0 + p1)
    p12 = 0.5 * (p1 + p2)
    p23 = 0.5 * (p2 + p3)
    p012 = 0.5 * (p01 + p12)
    p123 = 0.5 * (p12 + p23)
    mid = 0.5 * (p012 + p123)
    _flatten_cubic(p0, p01, p012, mid, tol, out, depth + 1)
    _flatten_cubic(mid, p123, p23, p3, tol, out, depth + 1)


def _flatten_quadratic(p0, p1, p2, tol: float, out: list) -> None:
    # exact degree elevation to a cubic, then reuse the cubic path
    c1 = p0 + (2.0 / 3.0) * (p1 - p0)
    c2 = p2 + (2.0 / 3.0) * (p1 - p2)
    _flatten_cubic(p0, c1, c2, p2, tol, out)


def _flatten_arc(p0, rx, ry, phi_deg, large, sweep, p1, tol: float, out: list) -> None:
    """Endpoint-parameterized elliptical arc to polyline.

    Conversion to center parameterization follows the standard endpoint-to-
    center equations; subdivision picks the largest angular step whose
    circular sag R(1 - cos(step/2)) stays within tolerance.
    """
    if p0[0] == p1[0] and p0[1] == p1[1]:
        return
    rx, ry = abs(rx), abs(ry)
    if rx < 1e-12 or ry < 1e-12:
        out.append(p1)
        return
    phi = math.radians(phi_deg)
    cphi, sphi = math.cos(phi), math.sin(phi)

    # to the ellipse-aligned frame
    dx, dy = (p0[0] - p1[0]) / 2.0, (p0[1] - p1[1]) / 2.0
    x1p = cphi * dx + sphi * dy
    y1p = -sphi * dx + cphi * dy

    lam = (x1p / rx) ** 2 + (y1p / ry) ** 2
    if lam > 1.0:  # radii too small: scale up uniformly per the SVG rules
        s = math.sqrt(lam)
        rx *= s
        ry *= s

    num = rx * rx * ry * ry - rx * rx * y1p * y1p - ry * ry * x1p * x1p
    den = rx * rx * y1p * y1p + ry * ry * x1p * x1p
    coef = math.sqrt(max(0.0, num / den)) if den > 0 else 0.0
    if large == sweep:
        coef = -coef
    cxp = coef * rx * y1p / ry
    cyp = -coef * ry * x1p / rx
    cx = cphi * cxp - sphi * cyp + (p0[0] + p1[0]) / 2.0
    cy = sphi * cxp + cphi * cyp + (p0[1] + p1[1]) / 2.0

    def angle(ux, uy, vx, vy):
        dot = ux * vx + uy * vy
        n = math.hypot(ux, uy) * math.hypot(vx, vy)
        a = math.acos(max(-1.0, min(1.0, dot / n)))
        if ux * vy - uy * vx < 0:
            a = -a
        return a

    th1 = angle(1.0, 0.0, (x1p - cxp) / rx, (y1p - cyp) / ry)
    dth = angle((x1p - cxp) / rx, (y1p - cyp) / ry,
                (-x1p - cxp) / rx, (-y1p - cyp) / ry)
    if not sweep and dth > 0:
        dth -= 2.0 * math.pi
    elif sweep and dth < 0:
        dth += 2.0 * math.pi

    rmax = max(rx, ry)
    if tol >= rmax:
        step = math.pi
    else:
        step = 2.0 * math.acos(1.0 - tol / rmax)
    n = max(1, int(math.ceil(abs(dth) / step)))
    for i in range(1, n + 1):
        th = th1 + dth * i / n
        ex = rx * math.cos(th)
        ey = ry * math.sin(th)
        out.append(np.array([cphi * ex - sphi * ey + cx,
                             sphi * ex + cphi * ey + cy]))
    out[-1] = np.array([p1[0], p1[1]])  # pin the endpoint exactly


def _interpret_path(d: str, tol: float) -> list[tuple[list[np.ndarray], bool]]:
    """Run the command stream; returns [(points, closed_by_z), ...] per subpath."""
    tokens = _tokenize(d)
    subpaths: list[tuple[list[np.ndarray], bool]] = []
    cur = np.zeros(2)
    start = np.zeros(2)
    points: list[np.ndarray] | None = None
    prev_cmd = ""
    prev_ctrl = np.zeros(2)  # last control point of a C/S or Q/T

    i = 0

    def take(n: int, cmd: str) -> list[float]:
        nonlocal i
        if i + n > len(tokens) or not all(
                isinstance(t, float) for t in tokens[i:i + n]):
            raise PathCommandError(f"command {cmd!r} expects {n} numbers")
        vals = [float(tokens[i + k]) for k in range(n)]
        i += n
        return vals

    def emit(pt: np.ndarray) -> None:
        nonlocal cur
        if points is None:
            raise PathCommandError("path data must start with a moveto")
        if math.hypot(pt[0] - cur[0], pt[1] - cur[1]) > _DUP_EPS:
            points.append(pt)
        cur = pt

    def close_current(by_z: bool) -> None:
        nonlocal points
        if points is not None:
            subpaths.append((points, by_z))
            points = None

    while i < len(tokens):
        tok = tokens[i]
        if isinstance(tok, str):
            cmd = tok
            i += 1
        else:
            # implicit command repeat; an M/m repeat becomes lineto
            if prev_cmd in ("M", "m"):
                cmd = "L" if prev_cmd == "M" else "l"
            elif not prev_cmd:
                raise PathCommandError("path data must start with a command")
            else:
                cmd = prev_cmd
        rel = cmd.islower()
        u = cmd.upper()

        if u == "M":
            x, y = take(2, cmd)
            close_current(False)
            cur = cur + [x, y] if rel else np.array([x, y])
            start = cur.copy()
            points = [cur.copy()]
        elif u == "Z":
            if points is None:
                raise PathCommandError("close command outside a subpath")
            close_current(True)
            cur = start.copy()
        elif u == "L":
            x, y = take(2, cmd)
            emit(cur + [x, y] if rel else np.array([x, y]))
        elif u == "H":
            (x,) = take(1, cmd)
            emit(np.array([cur[0] + x if rel else x, cur[1]]))
        elif u == "V":
            (y,) = take(1, cmd)
            emit(np.array([cur[0], cur[1] + y if rel else y]))
        elif u in ("C", "S"):
            vals = take(_ARG_COUNT[u], cmd)
            if u == "C":
                c1 = cur + vals[0:2] if rel else np.array(vals[0:2])
                c2 = cur + vals[2:4] if rel else np.array(vals[2:4])
                end = cur + vals[4:6] if rel else np.array(vals[4:6])
            else:
                c1 = (2.0 * cur - prev_ctrl
                      if prev_cmd.upper() in ("C", "S") else cur.copy())
                c2 = cur + vals[0:2] if rel else np.array(vals[0:2])
                end = cur + vals[2:4] if rel else np.array(vals[2:4])
            if points is None:
                raise PathCommandError("path data must start with a moveto")
            seg: list[np.ndarray] = []
            _flatten_cubic(cur.copy(), c1, c2, end, tol, seg)
            for p in seg:
                emit(p)
            cur = end  # keep the analytic endpoint even if emit deduped
            prev_ctrl = c2
        elif u in ("Q", "T"):
            vals = take(_ARG_COUNT[u], cmd)
            if u == "Q":
                c1 = cur + vals[0:2] if rel else np.array(vals[0:2])
                end = cur + vals[2:4] if rel else np.array(vals[2:4])
            else:
                c1 = (2.0 * cur - prev_ctrl
                      if prev_cmd.upper() in ("Q", "T") else cur.copy())
                end = cur + vals[0:2] if rel else np.array(vals[0:2])
            if points is None:
                raise PathCommandError("path data must start with a moveto")
            seg = []
            _flatten_quadratic(cur.copy(), c1, end, tol, seg)
            for p in seg:
                emit(p)
            cur = end
            prev_ctrl = c1
        elif u == "A":
            vals = take(7, cmd)
            rx, ry, rot, large, sweep = vals[0], vals[1], vals[2], vals[3], vals[4]
            if large not in (0.0, 1.0) or sweep not in (0.0, 1.0):
                raise PathCommandError("arc flags must be 0 or 1")
            end = cur + vals[5:7] if rel else np.array(vals[5:7])
            if points is None:
                raise PathCommandError("path data must start with a moveto")
            seg = []
            _flatten_arc(cur.copy(), rx, ry, rot, bool(large), bool(sweep),
                         end, tol, seg)
            for p in seg:
                emit(p)
            cur = end
        else:  # pragma: no cover - scanner already limits the alphabet
            raise PathCommandError(f"unsupported path command {cmd!r}")
        prev_cmd = cmd

    close_current(False)
    return subpaths


# ---------------------------------------------------------------------------
# loop assembly and classification


def _assemble_loops(subpaths, tol: float) -> list[np.ndarray]:
    loops = []
    for points, closed_by_z in subpaths:
        if len(points) >= 2 and np.hypot(
                *(points[-1] - points[0])) <= (tol if not closed_by_z else _DUP_EPS):
            points = points[:-1]
        elif not closed_by_z:
            gap = float(np.hypot(*(points[-1] - points[0]))) if len(points) > 1 else 0.0
            raise OpenSubpathError(
                f"subpath does not close: endpoint gap {gap:.4f} mm exceeds "
                f"tolerance {tol:.4f} mm")
        if len(points) < 3:
            raise DegenerateProfileError(
                "closed subpath has fewer than 3 distinct vertices")
        loops.append(np.array(points))
    if not loops:
        raise DegenerateProfileError("path contains no closed subpath")
    return loops


def _classify_loops(loops: list[np.ndarray], category_id: int) -> Profile2D:
    areas = [abs(polygon_area(lp)) for lp in loops]
    outer_idx = int(np.argmax(areas))
    outer = loops[outer_idx]
    if polygon_area(outer) < 0:
        outer = outer[::-1].copy()
    holes = []
    for k, lp in enumerate(loops):
        if k == outer_idx:
            continue
        if polygon_area(lp) > 0:
            lp = lp[::-1].copy()
        holes.append(lp)

    for h in holes:
        if not all(point_in_polygon(v, outer) for v in h):
            raise LoopNestingError("hole loop is not strictly inside the outer loop")
        if _segments_intersect(h, outer):
            raise LoopNestingError("hole loop crosses the outer loop")
    for a in range(len(holes)):
        for b in range(a + 1, len(holes)):
            ha, hb = holes[a], holes[b]
            xa = loop_bbox(ha)
            xb = loop_bbox(hb)
            if xa[2] < xb[0] or xb[2] < xa[0] or xa[3] < xb[1] or xb[3] < xa[1]:
                continue
            if (any(point_in_polygon(v, hb) for v in ha)
                    or any(point_in_polygon(v, ha) for v in hb)
                    or _segments_intersect(ha, hb)):
                raise LoopNestingError("hole loops nest or overlap")

    profile = Profile2D(outer=outer, holes=holes, category_id=category_id)
    validate_profile(profile)
    return profile


def validate_profile(profile: Profile2D) -> None:
    """Check the structural contract; raises on violation."""
    if polygon_area(profile.outer) <= 0:
        raise DegenerateProfileError("outer loop must be counter-clockwise")
    if abs(polygon_area(profile.outer)) < 1.0:
        raise DegenerateProfileError(
            "outer loop area is below 1 mm^2; not a manufacturable part")
    for h in profile.holes:
        if polygon_area(h) >= 0:
            raise DegenerateProfileError("hole loops must be clockwise")
    if profile.area() <= 0:
        raise DegenerateProfileError("holes consume the whole material area")


def parse_svg_path(source: str, tolerance: float = DEFAULT_TOLERANCE,
                   category_id: int = 0) -> Profile2D:
    """Parse SVG path data (or a fragment containing path elements).

    ``source`` may be raw path data ("M 0 0 ...") or an XML fragment; in the
    latter case the subpaths of every ``path`` element are combined into one
    profile. Curves are flattened so no chord deviates more than
    ``tolerance`` millimeters from the true curve.
    """
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    text = source.strip()
    if text.startswith("<"):
        try:
            root = ET.fromstring(f"<wrap>{text}</wrap>")
        except ET.ParseError as e:
            raise DocumentParseError(f"svg payload is not well-formed: {e}") from e
        d_parts = []
        for el in root.iter():
            tag = el.tag.rsplit("}", 1)[-1]
            if tag != "path":
                continue
            if "transform" in el.attrib:
                raise DocumentSchemaError(
                    "path transform attributes are not supported")
            d = el.get("d")
            if d is None:
                raise DocumentSchemaError("path element has no d attribute")
            d_parts.append(d)
        if not d_parts:
            raise DegenerateProfileError("svg payload contains no path elements")
        text = " ".join(d_parts)
    loops = _assemble_loops(_interpret_path(text, tolerance), tolerance)
    return _classify_loops(loops, category_id)


def profile_bbox(profile: Profile2D) -> tuple[float, float]:
    """Axis-aligned (width, height) of the outer loop."""
    x0, y0, x1, y1 = loop_bbox(profile.outer)
    return (x1 - x0, y1 - y0)


# ---------------------------------------------------------------------------
# documents


def _byte_offset(data: bytes, line: int, col: int) -> int:
    lines = data.splitlines(keepends=True)
    return sum(len(ln) for ln in lines[: line - 1]) + col


def parse_document(data: bytes | str) -> ManufacturingDoc:
    """Parse a manufacturing document into its part list.

    Parts appear as ``<part category="N">`` elements; the element content is
    the part's SVG payload, preserved for later outline parsing. Categories
    must be unique positive integers.
    """
    raw = data.encode("utf-8") if isinstance(data, str) else data
    try:
        root = ET.fromstring(raw)
    except ET.ParseError as e:
        line, col = e.position
        raise DocumentParseError(
            f"document is not well-formed XML at byte offset "
            f"{_byte_offset(raw, line, col)}: {e.msg if hasattr(e, 'msg') else e}"
        ) from e

    parts = []
    seen: set[int] = set()
    for idx, el in enumerate(root.iter("part")):
        cat_raw = el.get("category")
        if cat_raw is None:
            raise DocumentSchemaError(f"part #{idx} has no category attribute")
        try:
            cat = int(cat_raw)
        except ValueError:
            raise DocumentSchemaError(
                f"part #{idx} category {cat_raw!r} is not an integer") from None
        if cat < 1:
            raise DocumentSchemaError(f"part #{idx} category must be >= 1, got {cat}")
        if cat in seen:
            raise DocumentSchemaError(f"duplicate category {cat}")
        seen.add(cat)
        inner = (el.text or "") + "".join(
            ET.tostring(child, encoding="unicode") for child in el)
        parts.append(PartEntry(category_id=cat, svg_source=inner.strip()))
    return ManufacturingDoc(parts=tuple(parts))


def profiles_from_document(doc: ManufacturingDoc,
                           tolerance: float = DEFAULT_TOLERANCE) -> list[Profile2D]:
    return [parse_svg_path(p.svg_source, tolerance, category_id=p.category_id)
            for p in doc.parts]


# ---------------------------------------------------------------------------
# serialization


def _fmt(v: float) -> str:
    s = f"{v:.6f}".rstrip("0").rstrip(".")
    return s if s not in ("-0", "") else "0"


def profile_to_path_data(profile: Profile2D) -> str:
    """Serialize back to SVG path data (one subpath per loop)."""
    chunks = []
    for loop in [profile.outer, *profile.holes]:
        head = f"M {_fmt(loop[0, 0])} {_fmt(loop[0, 1])}"
        body = " ".join(f"L {_fmt(x)} {_fmt(y)}" for x, y in loop[1:])
        chunks.append(f"{head} {body} Z" if len(loop) > 1 else f"{head} Z")
    return " ".join(chunks)


def profile_to_json(profile: Profile2D) -> str:
    def rub(loop):
        return [[round(float(x), 6), round(float(y), 6)] for x, y in loop]

    return json.dumps({
        "category_id": profile.category_id,
        "outer": rub(profile.outer),
        "holes": [rub(h) for h in profile.holes],
    })


def profile_from_json(text: str) -> Profile2D:
    obj = json.loads(text)
    profile = Profile2D(
        outer=np.array(obj["outer"], dtype=np.float64),
        holes=[np.array(h, dtype=np.float64) for h in obj.get("holes", [])],
        category_id=int(obj.get("category_id", 0)),
    )
    validate_profile(profile)
    return profile
