"""Built-in corpus of 15 flat-part outlines.

These parts mirror a realistic sheet-metal catalog: long strips, brackets,
plates with cutouts, clips. Each entry has a known nominal bounding box
(mm) and the path data collectively exercises every supported SVG path
command, absolute and relative forms included.

Run ``python -m flatpose.fixtures out.xml`` to write the corpus as a
manufacturing document.
"""

from __future__ import annotations

import sys


def _n(v: float) -> str:
    return f"{v:g}"


def _circle(cx: float, cy: float, r: float) -> str:
    """Full circle as two relative half-arcs."""
    return (f"M {_n(cx - r)} {_n(cy)} "
            f"a {_n(r)} {_n(r)} 0 1 1 {_n(2 * r)} 0 "
            f"a {_n(r)} {_n(r)} 0 1 1 {_n(-2 * r)} 0 Z")


def _stadium(x0: float, x1: float, cy: float, r: float) -> str:
    """Horizontal slot: straight sides, semicircular caps."""
    return (f"M {_n(x0)} {_n(cy - r)} H {_n(x1)} "
            f"A {_n(r)} {_n(r)} 0 0 1 {_n(x1)} {_n(cy + r)} "
            f"H {_n(x0)} A {_n(r)} {_n(r)} 0 0 1 {_n(x0)} {_n(cy - r)} Z")


def _rounded_rect(w: float, h: float, r: float) -> str:
    return (f"M {_n(r)} 0 H {_n(w - r)} A {_n(r)} {_n(r)} 0 0 1 {_n(w)} {_n(r)} "
            f"V {_n(h - r)} A {_n(r)} {_n(r)} 0 0 1 {_n(w - r)} {_n(h)} "
            f"H {_n(r)} A {_n(r)} {_n(r)} 0 0 1 0 {_n(h - r)} "
            f"V {_n(r)} A {_n(r)} {_n(r)} 0 0 1 {_n(r)} 0 Z")


# nominal outer bounding boxes, mm (width, height)
PART_DIMENSIONS: dict[int, tuple[float, float]] = {
    1: (260.0, 35.0),
    2: (191.0, 57.0),
    3: (794.0, 81.0),
    4: (92.0, 53.0),
    5: (120.0, 60.0),
    6: (150.0, 118.0),
    7: (156.0, 117.0),
    8: (364.0, 116.0),
    9: (159.0, 99.0),
    10: (60.0, 38.0),
    11: (394.0, 220.0),
    12: (89.0, 20.0),
    13: (125.0, 55.0),
    14: (46.0, 49.0),
    15: (609.0, 117.0),
}

# number of hole loops per part, used by mesh-topology checks
PART_HOLE_COUNTS: dict[int, int] = {
    1: 2, 2: 1, 3: 5, 4: 0, 5: 1, 6: 0, 7: 1, 8: 2,
    9: 5, 10: 0, 11: 2, 12: 1, 13: 2, 14: 1, 15: 2,
}


def fixture_path_data() -> dict[int, str]:
    """SVG path data per category id (holes appended as extra subpaths)."""
    parts: dict[int, str] = {}

    # 1: stadium link strip, two round holes; caps split at their apex so
    # the extreme points survive flattening exactly
    parts[1] = (
        "M 17.5 0 L 242.5 0 "
        "A 17.5 17.5 0 0 1 260 17.5 A 17.5 17.5 0 0 1 242.5 35 "
        "L 17.5 35 "
        "A 17.5 17.5 0 0 1 0 17.5 A 17.5 17.5 0 0 1 17.5 0 Z "
        + _circle(40, 17.5, 6) + " " + _circle(220, 17.5, 6)
    )

    # 2: chamfered mounting plate with a slot
    parts[2] = (
        "M 8 0 H 183 L 191 8 V 49 L 183 57 H 8 L 0 49 V 8 Z "
        + _stadium(35, 75, 28.5, 5)
    )

    # 3: long rail, rounded corners, five round holes (relative arcs)
    holes3 = " ".join(_circle(x, 40.5, 8) for x in (100, 250, 400, 550, 700))
    parts[3] = _rounded_rect(794, 81, 10) + " " + holes3

    # 4: L-bracket, relative commands only
    parts[4] = "M 0 0 h 92 v 20 h -62 v 33 h -30 z"

    # 5: small plate, one large center hole
    parts[5] = _rounded_rect(120, 60, 6) + " " + _circle(60, 30, 10)

    # 6: isosceles trapezoid gusset
    parts[6] = "M 0 118 l 25 -118 l 100 0 l 25 118 z"

    # 7: rectangular frame (window cutout)
    parts[7] = "M 0 0 H 156 V 117 H 0 Z M 24 24 H 132 V 93 H 24 Z"

    # 8: wide panel with a concave swept top edge, two holes
    parts[8] = (
        "M 0 0 C 120 28 244 28 364 0 L 364 116 L 0 116 Z "
        + _circle(60, 70, 9) + " " + _circle(304, 70, 9)
    )

    # 9: plate with cubic-rounded corners, four corner holes, S-curve slot
    k = 4.418  # cubic approximation of a radius-8 corner
    parts[9] = (
        f"M 8 0 H 151 C {_n(151 + k)} 0 159 {_n(8 - k)} 159 8 "
        f"V 91 C 159 {_n(91 + k)} {_n(151 + k)} 99 151 99 "
        f"H 8 C {_n(8 - k)} 99 0 {_n(91 + k)} 0 91 "
        f"V 8 C 0 {_n(8 - k)} {_n(8 - k)} 0 8 0 Z "
        + " ".join(_circle(cx, cy, 5)
                   for cx, cy in ((18, 18), (141, 18), (18, 81), (141, 81)))
        + " M 40 30 C 48 22 56 22 64 30 S 80 38 88 30 "
          "L 88 42 C 80 50 72 50 64 42 S 48 34 40 42 Z"
    )

    # 10: tab with a quadratic notch
    parts[10] = "M 0 0 H 60 V 38 H 38 Q 30 24 22 38 H 0 Z"

    # 11: large panel, two rectangular cutouts
    parts[11] = (
        "M 0 0 H 394 V 220 H 0 Z "
        "M 40 40 H 160 V 180 H 40 Z M 234 40 H 354 V 180 H 234 Z"
    )

    # 12: narrow stay strip with one slot
    parts[12] = _rounded_rect(89, 20, 4) + " " + _stadium(28, 61, 10, 3)

    # 13: plate with two medium holes
    parts[13] = (_rounded_rect(125, 55, 6) + " "
                 + _circle(35, 27.5, 7) + " " + _circle(90, 27.5, 7))

    # 14: corner clip with a teardrop hole (quadratic + smooth continuation)
    parts[14] = ("M 0 8 L 8 0 H 46 V 49 H 0 Z "
                 "M 16 24.5 Q 23 14.5 30 24.5 T 16 24.5 Z")

    # 15: long cover plate, chamfered lower corners, wavy vent + round hole
    parts[15] = (
        "M 0 0 L 609 0 L 609 87 L 579 117 L 30 117 L 0 87 Z "
        "M 100 48 C 150 28 250 68 300 48 S 450 28 500 48 "
        "L 500 69 C 450 89 350 49 300 69 S 150 89 100 69 Z "
        + _circle(550, 35, 10)
    )

    return parts


def fixture_document_xml() -> str:
    """The 15-part corpus as a manufacturing document.

    Payload style is deliberately mixed: bare path elements, multi-path
    payloads, and one namespaced svg wrapper, matching the variety seen in
    exported documents.
    """
    parts = fixture_path_data()
    chunks = ["<document>"]
    for cat in sorted(parts):
        d = parts[cat]
        if cat == 5:
            # split outline and hole into separate path elements
            outline, _, hole = d.partition(" M ")
            payload = f'<path d="{outline}"/><path d="M {hole}"/>'
        elif cat == 7:
            payload = (f'<svg xmlns="http://www.w3.org/2000/svg">'
                       f'<g><path d="{d}"/></g></svg>')
        else:
            payload = f'<path d="{d}"/>'
        chunks.append(f'  <part category="{cat}">{payload}</part>')
    chunks.append("</document>")
    return "\n".join(chunks)


def write_fixture_document(path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(fixture_document_xml())
        f.write("\n")


if __name__ == "__main__":
    out = sys.argv[1] if len(sys.argv) > 1 else "parts.xml"
    write_fixture_document(out)
    print(f"wrote {len(PART_DIMENSIONS)} parts to {out}")
