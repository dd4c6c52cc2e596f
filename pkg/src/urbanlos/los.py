"""Geometric line-of-sight between an aerial base station and ground users.

A link is the straight 3-D segment ABS -> UE.  Its ground projection is
clipped against every building footprint (slab method); over each clipped
interval the segment height is affine in the horizontal distance ``r_i`` from
the ABS, so a flat roof blocks the link exactly when the lower of the two
interval-end heights does not clear it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .citygen import CityModel
from .errors import DegenerateLink

# Heights closer than this to a rooftop count as blocked.
TIE_TOL = 1e-9
# Footprint crossings shorter than this (metres) are grazing contacts.
GRAZE_TOL = 1e-9
CHUNK = 1024


class Point3D(NamedTuple):
    x: float
    y: float
    z: float


@dataclass(frozen=True)
class PathObstruction:
    building: int
    r_entry: float
    r_exit: float
    h_entry: float
    h_exit: float

    @property
    def r_i(self) -> float:
        """Distance at which the segment is lowest over this footprint."""
        return self.r_exit if self.h_exit <= self.h_entry else self.r_entry

    @property
    def line_height(self) -> float:
        return min(self.h_entry, self.h_exit)


def obstruction_height(h_abs: float, h_ue: float, r: float, r_i: float) -> float:
    """Height of the ABS-UE segment at horizontal distance ``r_i`` from the ABS."""
    if r <= 0:
        raise DegenerateLink("horizontal ABS-UE distance must be positive")
    return h_abs - r_i * (h_abs - h_ue) / r


def elevation_angle_deg(abs_pt, ue) -> float:
    dz = abs_pt[2] - ue[2]
    r = math.hypot(abs_pt[0] - ue[0], abs_pt[1] - ue[1])
    if r == 0.0:
        return 90.0
    return math.degrees(math.atan2(dz, r))


def elevation_angles_deg(dz: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Vectorised :func:`elevation_angle_deg` from vertical offsets and horizontal distances."""
    dz = np.asarray(dz, dtype=float)
    r = np.asarray(r, dtype=float)
    theta = np.degrees(np.arctan2(dz, r))
    return np.where(r == 0.0, 90.0, theta)


def _slab(a, d, lo, hi):
    """Parameter interval where a + t*d lies in (lo, hi); broadcasting."""
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (lo - a) / d
        t2 = (hi - a) / d
    t_lo = np.minimum(t1, t2)
    t_hi = np.maximum(t1, t2)
    parallel = d == 0
    inside = (a > lo) & (a < hi)
    t_lo = np.where(parallel, np.where(inside, -np.inf, np.inf), t_lo)
    t_hi = np.where(parallel, np.where(inside, np.inf, -np.inf), t_hi)
    return t_lo, t_hi


def footprint_intervals(ax, ay, ux, uy, x0, y0, x1, y1):
    """Clip ground segments A->U against footprints.

    Segment arrays broadcast against footprint arrays (typically ``(n, 1)``
    against ``(m,)``).  Returns ``(t_in, t_out, hit)`` with t in [0, 1]
    measured from A; ``hit`` requires a crossing longer than GRAZE_TOL.
    """
    dx = np.asarray(ux, dtype=float) - ax
    dy = np.asarray(uy, dtype=float) - ay
    tx_lo, tx_hi = _slab(ax, dx, x0, x1)
    ty_lo, ty_hi = _slab(ay, dy, y0, y1)
    t_in = np.maximum(np.maximum(tx_lo, ty_lo), 0.0)
    t_out = np.minimum(np.minimum(tx_hi, ty_hi), 1.0)
    length = np.hypot(dx, dy)
    hit = (t_out - t_in) * length > GRAZE_TOL
    return t_in, t_out, hit


def buildings_on_path(city: CityModel, abs_pt, ue) -> list[PathObstruction]:
    arr = city.arrays
    r = math.hypot(ue[0] - abs_pt[0], ue[1] - abs_pt[1])
    if r == 0.0 or len(city.buildings) == 0:
        return []
    t_in, t_out, hit = footprint_intervals(
        abs_pt[0], abs_pt[1], ue[0], ue[1], arr["x0"], arr["y0"], arr["x1"], arr["y1"]
    )
    out = []
    for i in np.flatnonzero(hit):
        r_in, r_out = float(t_in[i]) * r, float(t_out[i]) * r
        out.append(
            PathObstruction(
                int(i),
                r_in,
                r_out,
                obstruction_height(abs_pt[2], ue[2], r, r_in),
                obstruction_height(abs_pt[2], ue[2], r, r_out),
            )
        )
    return out


def is_los(city: CityModel, abs_pt, ue) -> bool:
    heights = city.arrays["h"]
    return all(ob.line_height > heights[ob.building] + TIE_TOL for ob in buildings_on_path(city, abs_pt, ue))


def los_mask(city: CityModel, abs_pt, ue_xy: np.ndarray, ue_z=0.0) -> np.ndarray:
    """LoS verdict for one ABS against many UEs; ``ue_xy`` has shape (n, 2)."""
    ue_xy = np.asarray(ue_xy, dtype=float).reshape(-1, 2)
    n = len(ue_xy)
    ue_z = np.broadcast_to(np.asarray(ue_z, dtype=float), (n,))
    out = np.ones(n, dtype=bool)
    arr = city.arrays
    if n == 0 or len(arr["h"]) == 0:
        return out
    ax, ay, az = float(abs_pt[0]), float(abs_pt[1]), float(abs_pt[2])
    x0, y0, x1, y1, hb = arr["x0"], arr["y0"], arr["x1"], arr["y1"], arr["h"]
    for s in range(0, n, CHUNK):
        ux = ue_xy[s : s + CHUNK, 0:1]
        uy = ue_xy[s : s + CHUNK, 1:2]
        uz = ue_z[s : s + CHUNK, None]
        t_in, t_out, hit = footprint_intervals(ax, ay, ux, uy, x0, y0, x1, y1)
        # segment height at parameter t: az + t * (uz - az)
        low = np.minimum(az + t_in * (uz - az), az + t_out * (uz - az))
        blocked = hit & (low <= hb + TIE_TOL)
        out[s : s + CHUNK] = ~blocked.any(axis=1)
    return out
