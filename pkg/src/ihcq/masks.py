"""Binary-mask algebra: run-length coding, polygon rasterization, areas,
intersection/union and IoU.

Masks are stored run-length encoded, row-major, runs alternating
background/foreground with the first run counting background. The
encoding is canonical (only the leading run may be zero), so equal
bitmaps always have byte-equal runs. Set operations merge runs directly
and never decode the full bitmap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    EmptyMaskError,
    InvalidInputError,
    MalformedMaskError,
    MaskShapeError,
    UndefinedIoUError,
)


def encode(bitmap) -> tuple[int, ...]:
    """Encode a 2D boolean bitmap into canonical run lengths."""
    flat = np.asarray(bitmap, dtype=bool).ravel()
    if flat.size == 0:
        raise MalformedMaskError("cannot encode an empty bitmap")
    flips = np.nonzero(flat[1:] != flat[:-1])[0] + 1
    bounds = np.concatenate(([0], flips, [flat.size]))
    runs = np.diff(bounds).tolist()
    if flat[0]:
        runs.insert(0, 0)
    return tuple(int(r) for r in runs)


def decode(runs, width: int, height: int) -> np.ndarray:
    """Decode run lengths back into a (height, width) boolean bitmap."""
    _validate_runs(runs, width, height)
    values = np.zeros(len(runs), dtype=bool)
    values[1::2] = True
    flat = np.repeat(values, np.asarray(runs, dtype=np.int64))
    return flat.reshape(height, width)


def _validate_runs(runs, width: int, height: int) -> None:
    if width <= 0 or height <= 0:
        raise MalformedMaskError("mask dimensions must be positive")
    runs = tuple(runs)
    if not runs:
        raise MalformedMaskError("runs must be non-empty")
    if any(r < 0 for r in runs):
        raise MalformedMaskError("run lengths must be non-negative")
    if any(r == 0 for r in runs[1:]):
        raise MalformedMaskError("only the leading background run may be zero")
    total = sum(runs)
    if total != width * height:
        raise MalformedMaskError(
            f"runs cover {total} pixels, expected {width * height}"
        )


@dataclass(frozen=True)
class BinaryMask:
    """Run-length-encoded pixel mask of one cell instance within a patch."""

    width: int
    height: int
    runs: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "runs", tuple(int(r) for r in self.runs))
        _validate_runs(self.runs, self.width, self.height)

    @classmethod
    def from_bitmap(cls, bitmap) -> "BinaryMask":
        arr = np.asarray(bitmap, dtype=bool)
        if arr.ndim != 2:
            raise MalformedMaskError("bitmap must be 2-dimensional")
        h, w = arr.shape
        return cls(width=w, height=h, runs=encode(arr))

    def to_bitmap(self) -> np.ndarray:
        return decode(self.runs, self.width, self.height)

    def area(self) -> int:
        return int(sum(self.runs[1::2]))

    def foreground_intervals(self) -> tuple[np.ndarray, np.ndarray]:
        """(starts, ends) of foreground runs as flat row-major offsets."""
        cum = np.cumsum(np.asarray(self.runs, dtype=np.int64))
        idx = np.arange(1, len(self.runs), 2)
        return cum[idx - 1], cum[idx]

    def to_json(self) -> dict:
        return {"size": [self.height, self.width], "runs": list(self.runs)}

    @classmethod
    def from_json(cls, data: dict) -> "BinaryMask":
        try:
            h, w = data["size"]
            runs = data["runs"]
        except (KeyError, TypeError, ValueError):
            raise MalformedMaskError(f"malformed mask object: {data!r}") from None
        return cls(width=int(w), height=int(h), runs=tuple(runs))


def _check_same_shape(a: BinaryMask, b: BinaryMask) -> None:
    if (a.width, a.height) != (b.width, b.height):
        raise MaskShapeError(
            f"mask dimensions differ: {a.width}x{a.height} vs {b.width}x{b.height}"
        )


def area(mask: BinaryMask) -> int:
    return mask.area()


def intersection_area(a: BinaryMask, b: BinaryMask) -> int:
    """Foreground overlap in pixels, by merging run boundaries.

    Both run lists are turned into interval endpoints; a sweep over the
    merged endpoints accumulates the length where both masks are
    foreground. Exact integer arithmetic throughout.
    """
    _check_same_shape(a, b)
    sa, ea = a.foreground_intervals()
    sb, eb = b.foreground_intervals()
    if sa.size == 0 or sb.size == 0:
        return 0
    pos = np.concatenate((sa, ea, sb, eb))
    delta = np.concatenate(
        (
            np.ones(sa.size, dtype=np.int64),
            -np.ones(ea.size, dtype=np.int64),
            np.ones(sb.size, dtype=np.int64),
            -np.ones(eb.size, dtype=np.int64),
        )
    )
    order = np.argsort(pos, kind="stable")
    pos = pos[order]
    depth = np.cumsum(delta[order])
    seg = np.diff(pos)
    return int(seg[depth[:-1] == 2].sum())


def union_area(a: BinaryMask, b: BinaryMask) -> int:
    return a.area() + b.area() - intersection_area(a, b)


def iou(a: BinaryMask, b: BinaryMask) -> float:
    """Intersection over union; 1 means the masks coincide, 0 no overlap."""
    inter = intersection_area(a, b)
    union = a.area() + b.area() - inter
    if union == 0:
        raise UndefinedIoUError("IoU is undefined for two empty masks")
    return inter / union


@dataclass(frozen=True)
class Polygon:
    """Closed polygon in patch coordinates; vertices may be sub-pixel."""

    vertices: tuple[tuple[float, float], ...]

    def __post_init__(self):
        verts = tuple((float(x), float(y)) for x, y in self.vertices)
        object.__setattr__(self, "vertices", verts)
        if len(verts) < 3:
            raise InvalidInputError("polygon needs at least 3 vertices")

    def bounds_violations(self, width: int, height: int) -> list[str]:
        """Vertices must stay within the patch bounds with 0.5 px slack."""
        out = []
        for x, y in self.vertices:
            if not (-0.5 <= x <= width + 0.5 and -0.5 <= y <= height + 0.5):
                out.append(f"vertex ({x}, {y}) outside {width}x{height} patch")
        return out

    def to_json(self) -> list[list[float]]:
        return [[x, y] for x, y in self.vertices]

    @classmethod
    def from_json(cls, data) -> "Polygon":
        try:
            return cls(tuple((float(p[0]), float(p[1])) for p in data))
        except (TypeError, ValueError, IndexError):
            raise InvalidInputError(f"malformed polygon: {data!r}") from None


def rasterize(poly: Polygon, width: int, height: int) -> BinaryMask:
    """Rasterize under the even-odd rule sampled at pixel centers.

    Pixel (row, col) is foreground iff its center (col+0.5, row+0.5) lies
    inside the polygon. Scanline crossings use the half-open convention
    (an edge crosses y iff exactly one endpoint satisfies v_y <= y), which
    makes the result independent of vertex order and orientation.
    """
    violations = poly.bounds_violations(width, height)
    if violations:
        raise InvalidInputError("; ".join(violations))
    verts = np.asarray(poly.vertices, dtype=float)
    x1, y1 = verts[:, 0], verts[:, 1]
    x2, y2 = np.roll(x1, -1), np.roll(y1, -1)

    row_lo = max(0, int(math.floor(y1.min() - 0.5)))
    row_hi = min(height, int(math.ceil(y1.max() + 0.5)))
    bitmap = np.zeros((height, width), dtype=bool)
    for row in range(row_lo, row_hi):
        yc = row + 0.5
        crossing = (y1 <= yc) != (y2 <= yc)
        if not crossing.any():
            continue
        xs = x1[crossing] + (yc - y1[crossing]) * (x2[crossing] - x1[crossing]) / (
            y2[crossing] - y1[crossing]
        )
        xs.sort()
        for k in range(0, len(xs) - 1, 2):
            lo, hi = xs[k], xs[k + 1]
            j0 = max(0, math.ceil(lo - 0.5))
            j1 = min(width, math.ceil(hi - 0.5))
            if j1 > j0:
                bitmap[row, j0:j1] = True
    if not bitmap.any():
        raise EmptyMaskError("polygon covers no pixel centers")
    return BinaryMask.from_bitmap(bitmap)


_ROT_RIGHT = {(1, 0): (0, 1), (0, 1): (-1, 0), (-1, 0): (0, -1), (0, -1): (1, 0)}
_ROT_LEFT = {v: k for k, v in _ROT_RIGHT.items()}


def trace_boundaries(mask: BinaryMask) -> list[Polygon]:
    """Trace the mask's boundary as closed polygons along pixel edges.

    Vertices sit on the integer lattice, so rasterizing a returned loop
    (even-odd, pixel centers) reproduces the pixels it encloses exactly.
    A mask with holes yields one loop per boundary; loops are returned in
    deterministic order. At corner junctions the walk prefers the
    interior-hugging (right) turn.
    """
    bm = mask.to_bitmap()
    if not bm.any():
        raise EmptyMaskError("cannot trace an empty mask")
    padded = np.zeros((mask.height + 2, mask.width + 2), dtype=bool)
    padded[1:-1, 1:-1] = bm

    outgoing: dict[tuple[int, int], list[tuple[int, int]]] = {}

    def add_edge(start, end):
        outgoing.setdefault(start, []).append(end)

    rows, cols = np.nonzero(bm)
    for r, c in zip(rows.tolist(), cols.tolist()):
        pr, pc = r + 1, c + 1
        if not padded[pr - 1, pc]:
            add_edge((c, r), (c + 1, r))
        if not padded[pr, pc + 1]:
            add_edge((c + 1, r), (c + 1, r + 1))
        if not padded[pr + 1, pc]:
            add_edge((c + 1, r + 1), (c, r + 1))
        if not padded[pr, pc - 1]:
            add_edge((c, r + 1), (c, r))

    loops = []
    for start in sorted(outgoing):
        while outgoing.get(start):
            path = [start]
            current = start
            direction = None
            while True:
                candidates = outgoing[current]
                if direction is None or len(candidates) == 1:
                    nxt = min(candidates)
                else:
                    prefer = (_ROT_RIGHT[direction], direction, _ROT_LEFT[direction])
                    by_dir = {
                        (e[0] - current[0], e[1] - current[1]): e for e in candidates
                    }
                    nxt = next(by_dir[d] for d in prefer if d in by_dir)
                candidates.remove(nxt)
                if not candidates:
                    del outgoing[current]
                direction = (nxt[0] - current[0], nxt[1] - current[1])
                current = nxt
                if current == start:
                    break
                path.append(current)
            loops.append(_simplify_collinear(path))
    return [Polygon(tuple((float(x), float(y)) for x, y in loop)) for loop in loops]


def _simplify_collinear(path: list[tuple[int, int]]) -> list[tuple[int, int]]:
    """Drop vertices lying on a straight run of unit steps."""
    n = len(path)
    out = []
    for i in range(n):
        prev, cur, nxt = path[i - 1], path[i], path[(i + 1) % n]
        d1 = (cur[0] - prev[0], cur[1] - prev[1])
        d2 = (nxt[0] - cur[0], nxt[1] - cur[1])
        if (d1[0] * d2[1] - d1[1] * d2[0]) != 0:
            out.append(cur)
    return out


def _loop_area(poly: Polygon) -> float:
    verts = poly.vertices
    acc = 0.0
    for (x1, y1), (x2, y2) in zip(verts, verts[1:] + verts[:1]):
        acc += x1 * y2 - x2 * y1
    return abs(acc) / 2.0


def mask_to_polygon(mask: BinaryMask) -> Polygon:
    """Single editable polygon for a mask: its largest boundary loop.

    For a simply-connected component this round-trips through `rasterize`
    exactly; holes are filled and detached fragments dropped.
    """
    loops = trace_boundaries(mask)
    return max(loops, key=_loop_area)
