"""Planar geometry and the discretization of a rectangular region into unit-regions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np


class Point(NamedTuple):
    x: float  # meters east
    y: float  # meters north


@dataclass(frozen=True)
class UnitRegion:
    index: int
    center: Point
    col: int
    row: int


@dataclass(frozen=True)
class HexGrid:
    """Unit-regions covering a ``width`` x ``height`` rectangle.

    ``points`` holds the sample points as an (N, 2) array in index order; it is
    what the vectorized consumption code works on.
    """

    region_width: float
    region_height: float
    hex_side: float
    columns: int
    rows: int
    mode: str
    unit_regions: tuple[UnitRegion, ...]
    points: np.ndarray = field(repr=False, compare=False)

    def __len__(self) -> int:
        return len(self.unit_regions)

    @property
    def count(self) -> int:
        return len(self.unit_regions)


def build_grid(width: float, height: float, hex_side: float,
               layout_mode: str = "hex_pack", cols: int | None = None,
               rows: int | None = None) -> HexGrid:
    """Build the unit-region grid.

    ``layout_mode`` is ``"hex_pack"`` (hexagonal lattice of side ``hex_side``)
    or ``"fixed_count"`` (``cols`` x ``rows`` uniform rectangular cells).
    """
    if not (width > 0 and height > 0 and hex_side > 0):
        raise ValueError("region dimensions and hex side must be positive")
    if hex_side > min(width, height):
        raise ValueError(f"hex side {hex_side} m larger than region {width} x {height} m")

    if layout_mode == "fixed_count":
        if cols is None or rows is None or cols < 1 or rows < 1:
            raise ValueError("fixed_count layout needs cols >= 1 and rows >= 1")
        cw, ch = width / cols, height / rows
        centers = [((c + 0.5) * cw, (r + 0.5) * ch, c, r)
                   for c in range(cols) for r in range(rows)]
    elif layout_mode == "hex_pack":
        col_pitch = 1.5 * hex_side
        row_pitch = math.sqrt(3.0) * hex_side
        cols = 0
        while hex_side + cols * col_pitch < width:
            cols += 1
        # odd columns sit half a row lower; size rows on them so every column matches
        rows = 0
        while row_pitch + rows * row_pitch < height:
            rows += 1
        if cols == 0 or rows == 0:
            raise ValueError("region too small for a single hexagon")
        centers = []
        for c in range(cols):
            y0 = row_pitch / 2 * (2 if c % 2 else 1)
            x = hex_side + c * col_pitch
            for r in range(rows):
                centers.append((x, y0 + r * row_pitch, c, r))
    else:
        raise ValueError(f"unknown layout mode {layout_mode!r}")

    units = tuple(UnitRegion(i, Point(x, y), c, r) for i, (x, y, c, r) in enumerate(centers))
    pts = np.array([[u.center.x, u.center.y] for u in units], dtype=float)
    pts.setflags(write=False)
    return HexGrid(width, height, hex_side, cols, rows, layout_mode, units, pts)


def paper26_grid(width: float = 4300.0, height: float = 3700.0, hex_side: float = 100.0) -> HexGrid:
    """26 x 26 = 676 cells; matches the 676-unit total-space accounting."""
    return build_grid(width, height, hex_side, "fixed_count", 26, 26)


def grid_for_mode(mode: str, width: float, height: float, hex_side: float) -> HexGrid:
    if mode == "paper26":
        return paper26_grid(width, height, hex_side)
    if mode == "hex_pack":
        return build_grid(width, height, hex_side, "hex_pack")
    raise ValueError(f"unknown grid mode {mode!r} (expected paper26 or hex_pack)")


def distance(a: Point, b: Point) -> float:
    return float(np.hypot(a[0] - b[0], a[1] - b[1]))


def bearing(src: Point, dst: Point) -> float:
    """Counterclockwise angle from +x of the vector ``dst - src``, in [0, 2*pi)."""
    dx, dy = dst[0] - src[0], dst[1] - src[1]
    if dx == 0 and dy == 0:
        raise ValueError("bearing undefined for coincident points")
    ang = float(np.mod(np.arctan2(dy, dx), 2 * np.pi))
    return 0.0 if ang >= 2 * np.pi else ang
