"""Random city layouts built from ITU built-up parameters.

Four generators share one output type, :class:`CityModel`, describing a
1 km x 1 km square populated with flat-roofed, axis-aligned building prisms:

* ``manhattan`` -- regular grid of identical W x W squares separated by streets S
* ``rm``  -- Random-Manhattan: one jittered building centred in each grid block
* ``ru``  -- Random-Urban: Dirichlet-distributed areas dropped at random free
  spots of an occupancy grid
* ``rh``  -- Random-Highway: ``ru`` with building-free highway strips

All randomness comes from the ``numpy.random.Generator`` passed in, so a given
generator state always yields the same city.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    CapUnsatisfiable,
    DimensionOverflow,
    HighwayOverlap,
    NonPositiveStreet,
    ValidationError,
)

log = logging.getLogger(__name__)

SIDE = 1000.0
A_TOTAL = SIDE * SIDE
LAYOUTS = ("manhattan", "rm", "ru", "rh")

DEFAULT_GRID_RESOLUTION = 50
DEFAULT_RECT_FRACTION = 0.5
DEFAULT_CAP_FRACTION = 0.03
CAP_ATTEMPTS = 1000
ANCHOR_ATTEMPTS = 1000
RM_BLOCK_FILL = 0.95
PLACEMENT_ORDERS = ("largest-first", "sampled")


@dataclass(frozen=True)
class BuiltUpParams:
    """ITU built-up triple: built area fraction, buildings/km^2, Rayleigh scale (m)."""

    alpha: float
    beta: int
    gamma: float

    def __post_init__(self):
        if not (0.0 < self.alpha <= 1.0) or math.isnan(self.alpha):
            raise ValidationError("alpha must be in (0,1]")
        if int(self.beta) != self.beta or self.beta < 1:
            raise ValidationError("beta must be a positive integer")
        object.__setattr__(self, "beta", int(self.beta))
        if not self.gamma > 0.0 or math.isinf(self.gamma):
            raise ValidationError("gamma must be a positive finite number")

    def to_dict(self) -> dict:
        return {"alpha": float(self.alpha), "beta": int(self.beta), "gamma": float(self.gamma)}


PRESETS = {
    "suburban": BuiltUpParams(0.1, 750, 8.0),
    "urban": BuiltUpParams(0.3, 500, 15.0),
    "dense-urban": BuiltUpParams(0.5, 300, 20.0),
    "high-rise": BuiltUpParams(0.5, 300, 50.0),
}


def preset(name: str) -> BuiltUpParams:
    try:
        return PRESETS[name.lower()]
    except KeyError:
        raise ValidationError(
            f"unknown environment {name!r}; expected one of {', '.join(PRESETS)}"
        ) from None


@dataclass(frozen=True)
class Building:
    x: float
    y: float
    w: float
    l: float
    h: float
    shape: str = "square"

    @property
    def area(self) -> float:
        return self.w * self.l


@dataclass(frozen=True)
class Highway:
    """Building-free strip. ``offset`` is the near edge across the strip,
    ``start`` the near end along it."""

    axis: str
    offset: float
    width: float
    length: float = SIDE
    start: float = 0.0

    def __post_init__(self):
        if self.axis not in ("horizontal", "vertical"):
            raise ValidationError("highway axis must be 'horizontal' or 'vertical'")
        if self.width <= 0 or self.length <= 0:
            raise ValidationError("highway width and length must be positive")
        x0, y0, x1, y1 = self.rect
        eps = 1e-9
        if x0 < -eps or y0 < -eps or x1 > SIDE + eps or y1 > SIDE + eps:
            raise ValidationError("highway strip must lie inside the city square")

    @property
    def rect(self) -> tuple[float, float, float, float]:
        """(x0, y0, x1, y1) of the strip."""
        if self.axis == "horizontal":
            return (self.start, self.offset, self.start + self.length, self.offset + self.width)
        return (self.offset, self.start, self.offset + self.width, self.start + self.length)

    @property
    def area(self) -> float:
        return self.width * self.length


@dataclass(frozen=True)
class PlacementEvent:
    """Something a generator had to adjust: ``drop`` (building not placed),
    ``clamp`` (RM footprint shrunk to its block, area kept) or
    ``clamp-area`` (area could not be kept)."""

    category: str
    building: int
    message: str


@dataclass(frozen=True)
class CityModel:
    layout: str
    params: BuiltUpParams
    buildings: tuple[Building, ...]
    highways: tuple[Highway, ...] = ()
    seed: int = 0
    side: float = SIDE
    requested: int = 0
    events: tuple[PlacementEvent, ...] = ()

    @property
    def achieved_alpha(self) -> float:
        return float(sum(b.area for b in self.buildings)) / (self.side * self.side)

    @cached_property
    def arrays(self) -> dict[str, np.ndarray]:
        """Columnar footprint data: x0, y0, x1, y1, h (float64, one entry per building)."""
        n = len(self.buildings)
        out = {k: np.empty(n) for k in ("x0", "y0", "x1", "y1", "h")}
        for i, b in enumerate(self.buildings):
            out["x0"][i] = b.x
            out["y0"][i] = b.y
            out["x1"][i] = b.x + b.w
            out["y1"][i] = b.y + b.l
            out["h"][i] = b.h
        for v in out.values():
            v.flags.writeable = False
        return out

    def without_buildings(self) -> "CityModel":
        return CityModel(self.layout, self.params, (), self.highways, self.seed, self.side, 0, ())


class OccupancyGrid:
    """G_r x G_r boolean raster over the city, ``cells[ix, iy]`` true when occupied."""

    def __init__(self, resolution: int = DEFAULT_GRID_RESOLUTION, side: float = SIDE):
        if resolution < 1:
            raise ValidationError("grid resolution must be >= 1")
        self.resolution = int(resolution)
        self.side = side
        self.cell = side / resolution
        self.cells = np.zeros((resolution, resolution), dtype=bool)

    def cells_for(self, w: float, l: float) -> tuple[int, int]:
        # guard against 40.000000001 / 20 -> 3 cells
        cx = math.ceil(w / self.cell - 1e-9)
        cy = math.ceil(l / self.cell - 1e-9)
        return max(cx, 1), max(cy, 1)

    def is_free(self, ix: int, iy: int, cx: int, cy: int) -> bool:
        return not self.cells[ix : ix + cx, iy : iy + cy].any()

    def mark(self, ix: int, iy: int, cx: int, cy: int) -> None:
        self.cells[ix : ix + cx, iy : iy + cy] = True

    def mark_rect(self, x0: float, y0: float, x1: float, y1: float) -> None:
        """Mark every cell whose interior meets the open rectangle."""
        c = self.cell
        ix0 = max(int(math.floor(x0 / c)), 0)
        iy0 = max(int(math.floor(y0 / c)), 0)
        ix1 = min(int(math.ceil(x1 / c)), self.resolution)
        iy1 = min(int(math.ceil(y1 / c)), self.resolution)
        self.cells[ix0:ix1, iy0:iy1] = True

    def free_anchors(self, cx: int, cy: int) -> np.ndarray:
        """All anchors (ix, iy) whose cx x cy block is free, shape (k, 2), row-major order."""
        g = self.resolution
        if cx > g or cy > g:
            return np.empty((0, 2), dtype=np.int64)
        occ = np.zeros((g + 1, g + 1), dtype=np.int64)
        occ[1:, 1:] = np.cumsum(np.cumsum(self.cells, axis=0), axis=1)
        block = occ[cx:, cy:] - occ[:-cx, cy:] - occ[cx:, :-cy] + occ[:-cx, :-cy]
        return np.argwhere(block == 0)


@dataclass(frozen=True)
class ManhattanGridSpec:
    W: float
    S: float
    per_side: int

    @property
    def pitch(self) -> float:
        return self.W + self.S


def width_and_street(params: BuiltUpParams) -> ManhattanGridSpec:
    W = SIDE * math.sqrt(params.alpha / params.beta)
    S = SIDE / math.sqrt(params.beta) - W
    if S <= 0:
        raise NonPositiveStreet(
            f"alpha={params.alpha} leaves no street width (S={S:.6g} m)"
        )
    return ManhattanGridSpec(W, S, int(math.floor(SIDE / (W + S) + 1e-9)))


def rayleigh_pdf(h, gamma: float):
    h = np.asarray(h, dtype=float)
    return np.where(h >= 0, h / gamma**2 * np.exp(-(h**2) / (2 * gamma**2)), 0.0)


def rayleigh_cdf(h, gamma: float):
    h = np.asarray(h, dtype=float)
    return np.where(h >= 0, -np.expm1(-(h**2) / (2 * gamma**2)), 0.0)


def height_from_uniform(u, gamma: float):
    """Inverse Rayleigh CDF; u in [0, 1)."""
    return gamma * np.sqrt(-2.0 * np.log1p(-np.asarray(u, dtype=float)))


def sample_height(gamma: float, rng: np.random.Generator, size=None):
    if gamma <= 0:
        raise ValidationError("gamma must be positive")
    h = height_from_uniform(rng.random(size), gamma)
    return float(h) if size is None else h


def generate_manhattan(params: BuiltUpParams, rng: np.random.Generator, seed: int = 0) -> CityModel:
    spec = width_and_street(params)
    k = spec.per_side
    margin = (SIDE - (k * spec.W + (k - 1) * spec.S)) / 2.0
    heights = sample_height(params.gamma, rng, k * k)
    buildings = []
    for iy in range(k):
        for ix in range(k):
            buildings.append(
                Building(
                    margin + ix * spec.pitch,
                    margin + iy * spec.pitch,
                    spec.W,
                    spec.W,
                    float(heights[iy * k + ix]),
                )
            )
    return CityModel("manhattan", params, tuple(buildings), seed=seed, requested=k * k)


def rm_block_grid(beta: int) -> tuple[int, int]:
    nx = math.isqrt(beta)
    if nx * nx < beta:
        nx += 1
    ny = -(-beta // nx)
    return nx, ny


def _clamp_footprint(area, w, l, wmax, lmax):
    """Shrink (w, l) into (wmax, lmax), moving area to the other side first."""
    if w > wmax:
        w = wmax
        l = area / w
    if l > lmax:
        l = lmax
        w = min(area / l, wmax)
    return w, l


def generate_rm(
    params: BuiltUpParams,
    rng: np.random.Generator,
    rect_fraction: float = DEFAULT_RECT_FRACTION,
    seed: int = 0,
) -> CityModel:
    beta = params.beta
    b_avg = params.alpha * A_TOTAL / beta
    nx, ny = rm_block_grid(beta)
    w_block, l_block = SIDE / nx, SIDE / ny
    wmax, lmax = RM_BLOCK_FILL * w_block, RM_BLOCK_FILL * l_block
    if 0.6 * b_avg > wmax * lmax:
        raise DimensionOverflow(
            f"average building area {b_avg:.6g} m^2 cannot fit a {w_block:.4g} x {l_block:.4g} m block"
        )

    # which blocks hold a building when nx*ny > beta
    blocks = np.sort(rng.choice(nx * ny, size=beta, replace=False))
    jitter = rng.random(beta)
    is_rect = rng.random(beta) < rect_fraction
    aspect = rng.random(beta)
    heights = sample_height(params.gamma, rng, beta)

    buildings, events = [], []
    for i in range(beta):
        area = b_avg * (0.6 + 0.8 * jitter[i])
        if is_rect[i]:
            w = math.sqrt(area) * (0.5 + aspect[i])
            l = area / w
        else:
            w = l = math.sqrt(area)
        cw, cl = _clamp_footprint(area, w, l, wmax, lmax)
        if (cw, cl) != (w, l):
            lost = cw * cl < area * (1 - 1e-12)
            events.append(
                PlacementEvent(
                    "clamp-area" if lost else "clamp",
                    i,
                    f"{w:.4g}x{l:.4g} m clamped to {cw:.4g}x{cl:.4g} m",
                )
            )
        iy, ix = divmod(int(blocks[i]), nx)
        x = ix * w_block + (w_block - cw) / 2.0
        y = iy * l_block + (l_block - cl) / 2.0
        buildings.append(
            Building(x, y, cw, cl, float(heights[i]), "rectangle" if is_rect[i] else "square")
        )
    return CityModel("rm", params, tuple(buildings), seed=seed, requested=beta, events=tuple(events))


def sample_dirichlet_areas(
    beta: int,
    total: float,
    rng: np.random.Generator,
    cap: float | None = DEFAULT_CAP_FRACTION * A_TOTAL,
    attempts: int = CAP_ATTEMPTS,
) -> np.ndarray:
    """``total`` split by a flat Dirichlet draw; redrawn until every part <= ``cap``."""
    if beta < 1 or total <= 0:
        raise ValidationError("beta must be >= 1 and total > 0")
    if cap is not None and cap * beta < total:
        raise CapUnsatisfiable(f"{beta} buildings of at most {cap:.6g} m^2 cannot cover {total:.6g} m^2")
    for _ in range(attempts):
        e = rng.standard_exponential(beta)
        areas = e / e.sum() * total
        if cap is None or areas.max() <= cap:
            return areas
    raise CapUnsatisfiable(f"no Dirichlet draw met the {cap:.6g} m^2 cap in {attempts} attempts")


def validate_highways(highways: Sequence[Highway]) -> None:
    for i, a in enumerate(highways):
        ax0, ay0, ax1, ay1 = a.rect
        for j in range(i + 1, len(highways)):
            bx0, by0, bx1, by1 = highways[j].rect
            if min(ax1, bx1) > max(ax0, bx0) and min(ay1, by1) > max(ay0, by0):
                raise HighwayOverlap(f"highways {i} and {j} intersect")


def default_highways(n: int = 3, width: float = 50.0, length: float = SIDE) -> list[Highway]:
    """``n`` horizontal strips with equal gaps between them and the city edges."""
    gap = (SIDE - n * width) / (n + 1)
    if gap < 0:
        raise ValidationError(f"{n} highways of width {width} m do not fit")
    return [Highway("horizontal", gap * (i + 1) + width * i, width, length) for i in range(n)]


def _place_on_grid(
    params: BuiltUpParams,
    rng: np.random.Generator,
    grid: OccupancyGrid,
    rect_fraction: float,
    cap: float | None,
    order: str,
) -> tuple[list[Building], list[PlacementEvent]]:
    beta = params.beta
    areas = sample_dirichlet_areas(beta, params.alpha * A_TOTAL, rng, cap)
    is_rect = rng.random(beta) < rect_fraction
    heights = sample_height(params.gamma, rng, beta)
    if order == "largest-first":
        # big footprints first keeps the dense presets from stranding area
        sequence = np.argsort(-areas, kind="stable")
    elif order == "sampled":
        sequence = np.arange(beta)
    else:
        raise ValidationError(f"placement order must be one of {', '.join(PLACEMENT_ORDERS)}")
    g = grid.resolution
    buildings, events = [], []
    for i in (int(k) for k in sequence):
        a = float(areas[i])
        if is_rect[i]:
            w = 1.5 * math.sqrt(a)
            l = a / w
        else:
            w = l = math.sqrt(a)
        cx, cy = grid.cells_for(w, l)
        anchor = None
        if cx <= g and cy <= g:
            for _ in range(ANCHOR_ATTEMPTS):
                ix = int(rng.integers(0, g - cx + 1))
                iy = int(rng.integers(0, g - cy + 1))
                if grid.is_free(ix, iy, cx, cy):
                    anchor = (ix, iy)
                    break
            else:
                free = grid.free_anchors(cx, cy)
                if len(free):
                    ix, iy = free[int(rng.integers(len(free)))]
                    anchor = (int(ix), int(iy))
        if anchor is None:
            events.append(PlacementEvent("drop", i, f"no free {cx}x{cy}-cell spot for {a:.6g} m^2"))
            log.debug("dropped building %d (%d x %d cells)", i, cx, cy)
            continue
        ix, iy = anchor
        grid.mark(ix, iy, cx, cy)
        # footprint centred in its cell block
        x = ix * grid.cell + (cx * grid.cell - w) / 2.0
        y = iy * grid.cell + (cy * grid.cell - l) / 2.0
        buildings.append(Building(x, y, w, l, float(heights[i]), "rectangle" if is_rect[i] else "square"))
    return buildings, events


def _cap_value(params: BuiltUpParams, cap_fraction: float | None, cap_referent: str) -> float | None:
    if cap_fraction is None:
        return None
    if cap_referent == "total":
        return cap_fraction * A_TOTAL
    if cap_referent == "built":
        return cap_fraction * params.alpha * A_TOTAL
    raise ValidationError("cap_referent must be 'total' or 'built'")


def generate_ru(
    params: BuiltUpParams,
    rng: np.random.Generator,
    grid_resolution: int = DEFAULT_GRID_RESOLUTION,
    rect_fraction: float = DEFAULT_RECT_FRACTION,
    cap_fraction: float | None = DEFAULT_CAP_FRACTION,
    cap_referent: str = "total",
    placement_order: str = "largest-first",
    seed: int = 0,
) -> CityModel:
    grid = OccupancyGrid(grid_resolution)
    cap = _cap_value(params, cap_fraction, cap_referent)
    buildings, events = _place_on_grid(params, rng, grid, rect_fraction, cap, placement_order)
    return CityModel("ru", params, tuple(buildings), seed=seed, requested=params.beta, events=tuple(events))


def generate_rh(
    params: BuiltUpParams,
    highways: Iterable[Highway],
    rng: np.random.Generator,
    grid_resolution: int = DEFAULT_GRID_RESOLUTION,
    rect_fraction: float = DEFAULT_RECT_FRACTION,
    cap_fraction: float | None = DEFAULT_CAP_FRACTION,
    cap_referent: str = "total",
    placement_order: str = "largest-first",
    seed: int = 0,
) -> CityModel:
    highways = tuple(highways)
    validate_highways(highways)
    grid = OccupancyGrid(grid_resolution)
    for hw in highways:
        grid.mark_rect(*hw.rect)
    cap = _cap_value(params, cap_fraction, cap_referent)
    buildings, events = _place_on_grid(params, rng, grid, rect_fraction, cap, placement_order)
    return CityModel(
        "rh", params, tuple(buildings), highways, seed=seed, requested=params.beta, events=tuple(events)
    )


@dataclass(frozen=True)
class LayoutOptions:
    """Knobs shared by the random generators."""

    grid_resolution: int = DEFAULT_GRID_RESOLUTION
    rect_fraction: float = DEFAULT_RECT_FRACTION
    cap_fraction: float | None = DEFAULT_CAP_FRACTION
    cap_referent: str = "total"
    placement_order: str = "largest-first"
    highways: tuple[Highway, ...] | None = None  # None -> default_highways() for rh

    def __post_init__(self):
        if not 0.0 <= self.rect_fraction <= 1.0:
            raise ValidationError("rect_fraction must be in [0,1]")
        if self.cap_referent not in ("total", "built"):
            raise ValidationError("cap_referent must be 'total' or 'built'")
        if self.placement_order not in PLACEMENT_ORDERS:
            raise ValidationError(f"placement_order must be one of {', '.join(PLACEMENT_ORDERS)}")


def generate(
    layout: str,
    params: BuiltUpParams,
    rng: np.random.Generator,
    options: LayoutOptions = LayoutOptions(),
    seed: int = 0,
) -> CityModel:
    layout = layout.lower()
    if layout == "manhattan":
        return generate_manhattan(params, rng, seed=seed)
    if layout == "rm":
        return generate_rm(params, rng, options.rect_fraction, seed=seed)
    common = dict(
        grid_resolution=options.grid_resolution,
        rect_fraction=options.rect_fraction,
        cap_fraction=options.cap_fraction,
        cap_referent=options.cap_referent,
        placement_order=options.placement_order,
        seed=seed,
    )
    if layout == "ru":
        return generate_ru(params, rng, **common)
    if layout == "rh":
        hws = default_highways() if options.highways is None else options.highways
        return generate_rh(params, hws, rng, **common)
    raise ValidationError(f"unknown layout {layout!r}; expected one of {', '.join(LAYOUTS)}")
