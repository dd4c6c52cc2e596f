"""Monte Carlo estimation of P_LoS(theta) over random cities.

For each city index ``i`` the driver derives an independent stream from the
master seed, builds the city, drops one (or ``abs_per_city``) collision-free
ABS at a uniform random altitude below ``h_abs_max``, scatters ``n_ue`` ground
users outside the building footprints and bins every link's LoS verdict by
its integer elevation angle.  Per-city accumulators are integer-valued and
reduced in city order, so the result does not depend on the worker count.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields

import numpy as np

from . import __version__
from .citygen import (
    LAYOUTS,
    BuiltUpParams,
    CityModel,
    Highway,
    LayoutOptions,
    default_highways,
    generate,
    validate_highways,
)
from .errors import NoHighways, PlacementExhausted, UrbanLosError, ValidationError
from .los import elevation_angles_deg, los_mask
from .rng import CITY_STREAM, HIGHWAY_UE_STREAM, PLACEMENT_STREAM, generator

log = logging.getLogger(__name__)

N_BINS = 91
THETA = np.arange(N_BINS)
MAX_REJECTIONS = 100_000
BINNINGS = ("nearest", "ceil")


@dataclass(frozen=True)
class SimulationConfig:
    params: BuiltUpParams
    layout: str
    h_abs_max: float
    n_ue: int
    n_cities: int
    seed: int = 0
    highways: tuple[Highway, ...] | None = None
    ue_height: float = 0.0
    min_count_per_bin: int = 30
    binning: str = "nearest"
    abs_per_city: int = 1
    rect_fraction: float = 0.5
    grid_resolution: int = 50
    cap_fraction: float | None = 0.03
    cap_referent: str = "total"
    placement_order: str = "largest-first"
    no_buildings: bool = False

    def __post_init__(self):
        # canonical numeric types so equal configs hash equally
        casts = {"h_abs_max": float, "ue_height": float, "rect_fraction": float, "n_ue": int, "n_cities": int,
                 "seed": int, "min_count_per_bin": int, "abs_per_city": int, "grid_resolution": int}
        if self.cap_fraction is not None:
            casts["cap_fraction"] = float
        for name, cast in casts.items():
            try:
                object.__setattr__(self, name, cast(getattr(self, name)))
            except (TypeError, ValueError):
                raise ValidationError(f"{name} must be a number") from None
        if self.layout not in LAYOUTS:
            raise ValidationError(f"layout must be one of {', '.join(LAYOUTS)}")
        if not self.h_abs_max > 0:
            raise ValidationError("h_abs_max must be > 0")
        if self.n_ue < 1:
            raise ValidationError("n_ue must be >= 1")
        if self.n_cities < 1:
            raise ValidationError("n_cities must be >= 1")
        if self.abs_per_city < 1:
            raise ValidationError("abs_per_city must be >= 1")
        if self.ue_height < 0:
            raise ValidationError("ue_height must be >= 0")
        if self.binning not in BINNINGS:
            raise ValidationError(f"binning must be one of {', '.join(BINNINGS)}")
        if not 0 <= self.seed < 2**64:
            raise ValidationError("seed must be a 64-bit unsigned integer")
        if self.highways is not None:
            object.__setattr__(self, "highways", tuple(self.highways))
            validate_highways(self.highways)
        self.layout_options()  # validates the generator knobs

    def layout_options(self) -> LayoutOptions:
        return LayoutOptions(
            grid_resolution=self.grid_resolution,
            rect_fraction=self.rect_fraction,
            cap_fraction=self.cap_fraction,
            cap_referent=self.cap_referent,
            placement_order=self.placement_order,
            highways=self.highways,
        )

    def effective_highways(self) -> tuple[Highway, ...]:
        if self.layout != "rh":
            return ()
        return tuple(default_highways()) if self.highways is None else self.highways

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "params":
                v = v.to_dict()
            elif f.name == "highways" and v is not None:
                v = [highway_to_dict(h) for h in v]
            out[f.name] = v
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "SimulationConfig":
        data = dict(data)
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"unknown config field(s): {', '.join(sorted(unknown))}")
        if "params" not in data:
            raise ValidationError("config needs 'params' {alpha, beta, gamma}")
        p = data["params"]
        if isinstance(p, dict):
            try:
                data["params"] = BuiltUpParams(p["alpha"], p["beta"], p["gamma"])
            except KeyError as e:
                raise ValidationError(f"params missing {e.args[0]}") from None
        if data.get("highways") is not None:
            data["highways"] = tuple(
                h if isinstance(h, Highway) else highway_from_dict(h) for h in data["highways"]
            )
        missing = [k for k in ("layout", "h_abs_max", "n_ue", "n_cities") if k not in data]
        if missing:
            raise ValidationError(f"config missing required field(s): {', '.join(missing)}")
        return cls(**data)

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def highway_to_dict(h: Highway) -> dict:
    return {"axis": h.axis, "offset": float(h.offset), "width": float(h.width), "length": float(h.length),
            "start": float(h.start)}


def highway_from_dict(d: dict) -> Highway:
    try:
        return Highway(d["axis"], float(d["offset"]), float(d["width"]), float(d.get("length", 1000.0)),
                       float(d.get("start", 0.0)))
    except KeyError as e:
        raise ValidationError(f"highway missing {e.args[0]}") from None


@dataclass(eq=False)
class PlosCurve:
    """P_LoS per integer elevation angle 0..90.

    Simulated curves carry ``los_sum``/``los_count``; analytic curves
    (closed-form models) have ``los_count is None`` and every bin defined.
    ``plos`` is NaN where a bin has no data.
    """

    plos: np.ndarray
    los_sum: np.ndarray | None = None
    los_count: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_accumulators(cls, los_sum, los_count, meta=None) -> "PlosCurve":
        los_sum = np.asarray(los_sum, dtype=float)
        los_count = np.asarray(los_count, dtype=np.int64)
        with np.errstate(invalid="ignore", divide="ignore"):
            plos = np.where(los_count > 0, los_sum / np.maximum(los_count, 1), np.nan)
        return cls(plos, los_sum, los_count, dict(meta or {}))

    @classmethod
    def from_values(cls, values, meta=None) -> "PlosCurve":
        values = np.asarray(values, dtype=float)
        if values.shape != (N_BINS,):
            raise ValidationError(f"a curve needs {N_BINS} values")
        return cls(values, None, None, dict(meta or {}))

    @property
    def theta(self) -> np.ndarray:
        return THETA

    @property
    def defined(self) -> np.ndarray:
        return ~np.isnan(self.plos)

    def eligible(self, min_count: int = 0) -> np.ndarray:
        mask = self.defined
        if self.los_count is not None:
            mask = mask & (self.los_count >= max(min_count, 1))
        return mask

    @property
    def total_count(self) -> int:
        return int(self.los_count.sum()) if self.los_count is not None else 0

    def mean(self, lo: int = 0, hi: int = 90, min_count: int = 0) -> float:
        """Unweighted mean of defined bins in [lo, hi]."""
        m = self.eligible(min_count) & (THETA >= lo) & (THETA <= hi)
        return float(np.mean(self.plos[m]))


@dataclass(frozen=True)
class CityRecord:
    index: int
    n_buildings: int
    requested: int
    achieved_alpha: float
    events: tuple
    abs_positions: tuple


@dataclass
class SimulationResult:
    config: SimulationConfig
    curve: PlosCurve
    highway_curve: PlosCurve | None
    cities: list[CityRecord]
    duration: float


def inside_footprints(city: CityModel, xy: np.ndarray) -> np.ndarray:
    """True where a ground point lies in (or on the boundary of) some footprint."""
    xy = np.asarray(xy, dtype=float).reshape(-1, 2)
    a = city.arrays
    if len(a["h"]) == 0:
        return np.zeros(len(xy), dtype=bool)
    out = np.zeros(len(xy), dtype=bool)
    for s in range(0, len(xy), 4096):
        x = xy[s : s + 4096, 0:1]
        y = xy[s : s + 4096, 1:2]
        out[s : s + 4096] = ((x >= a["x0"]) & (x <= a["x1"]) & (y >= a["y0"]) & (y <= a["y1"])).any(axis=1)
    return out


def collides(city: CityModel, point) -> bool:
    """Point strictly below the roof of a building whose footprint contains it."""
    a = city.arrays
    x, y, z = point
    hit = (x >= a["x0"]) & (x <= a["x1"]) & (y >= a["y0"]) & (y <= a["y1"]) & (z < a["h"])
    return bool(hit.any())


def place_abs(city: CityModel, h_abs_max: float, rng: np.random.Generator):
    if not h_abs_max > 0:
        raise ValidationError("h_abs_max must be > 0")
    side = city.side
    for _ in range(MAX_REJECTIONS + 1):
        x, y = rng.uniform(0.0, side, 2)
        z = rng.random() * h_abs_max
        p = (float(x), float(y), float(z))
        if not collides(city, p):
            return p
    raise PlacementExhausted(f"no collision-free ABS position after {MAX_REJECTIONS} draws")


def _rejection_sample(draw, reject, n: int) -> np.ndarray:
    """Draw batches until ``n`` accepted; raise after MAX_REJECTIONS consecutive rejects."""
    parts, have, streak = [], 0, 0
    while have < n:
        batch = draw(n - have)
        bad = reject(batch)
        ok = np.flatnonzero(~bad)
        if len(ok) == 0:
            streak += len(batch)
        else:
            streak = len(batch) - 1 - ok[-1]
        if streak >= MAX_REJECTIONS:
            raise PlacementExhausted(f"{MAX_REJECTIONS} consecutive UE draws landed inside buildings")
        parts.append(batch[ok])
        have += len(ok)
    return np.concatenate(parts)[:n]


def place_ues(city: CityModel, n: int, ue_height: float, rng: np.random.Generator) -> np.ndarray:
    """``n`` ground users uniform over the city minus footprints, shape (n, 3)."""
    if n < 1:
        raise ValidationError("n must be >= 1")
    side = city.side
    xy = _rejection_sample(lambda m: rng.uniform(0.0, side, (m, 2)), lambda p: inside_footprints(city, p), n)
    return np.column_stack([xy, np.full(n, float(ue_height))])


def place_ues_highway(city: CityModel, n: int, rng: np.random.Generator, ue_height: float = 0.0) -> np.ndarray:
    """``n`` users uniform over the union of highway strips, shape (n, 3)."""
    if not city.highways:
        raise NoHighways("city has no highways")
    rects = np.array([h.rect for h in city.highways])
    areas = np.array([h.area for h in city.highways])
    which = rng.choice(len(rects), size=n, p=areas / areas.sum())
    u = rng.random((n, 2))
    r = rects[which]
    x = r[:, 0] + u[:, 0] * (r[:, 2] - r[:, 0])
    y = r[:, 1] + u[:, 1] * (r[:, 3] - r[:, 1])
    return np.column_stack([x, y, np.full(n, float(ue_height))])


def bin_angles(theta_deg: np.ndarray, binning: str = "nearest") -> np.ndarray:
    theta_deg = np.asarray(theta_deg, dtype=float)
    if binning == "nearest":
        b = np.floor(theta_deg + 0.5)
    elif binning == "ceil":
        b = np.ceil(theta_deg)
    else:
        raise ValidationError(f"binning must be one of {', '.join(BINNINGS)}")
    return np.clip(b, 0, N_BINS - 1).astype(np.int64)


def accumulate(city: CityModel, abs_pt, ues: np.ndarray, binning: str = "nearest"):
    """(los_sum, los_count) contributions of one ABS against ``ues`` (n, 3)."""
    dz = abs_pt[2] - ues[:, 2]
    r = np.hypot(ues[:, 0] - abs_pt[0], ues[:, 1] - abs_pt[1])
    bins = bin_angles(elevation_angles_deg(dz, r), binning)
    los = los_mask(city, abs_pt, ues[:, :2], ues[:, 2])
    return (
        np.bincount(bins, weights=los.astype(float), minlength=N_BINS),
        np.bincount(bins, minlength=N_BINS).astype(np.int64),
    )


def city_for(layout: str, params: BuiltUpParams, seed: int, index: int = 0,
             options: LayoutOptions = LayoutOptions()) -> CityModel:
    """City number ``index`` of the run seeded with ``seed``."""
    rng = generator(seed, index, CITY_STREAM)
    return generate(layout, params, rng, options, seed=seed)


def build_city(config: SimulationConfig, index: int) -> CityModel:
    return city_for(config.layout, config.params, config.seed, index, config.layout_options())


def _simulate_city(config: SimulationConfig, index: int, city: CityModel | None, split: bool):
    try:
        if city is None:
            city = build_city(config, index)
        if config.no_buildings:
            city = city.without_buildings()
        if split and not city.highways:
            raise NoHighways("city has no highways")
        rng = generator(config.seed, index, PLACEMENT_STREAM)
        hw_rng = generator(config.seed, index, HIGHWAY_UE_STREAM)
        s = np.zeros(N_BINS)
        c = np.zeros(N_BINS, dtype=np.int64)
        hs = np.zeros(N_BINS)
        hc = np.zeros(N_BINS, dtype=np.int64)
        positions = []
        for _ in range(config.abs_per_city):
            abs_pt = place_abs(city, config.h_abs_max, rng)
            positions.append(abs_pt)
            ues = place_ues(city, config.n_ue, config.ue_height, rng)
            ds, dc = accumulate(city, abs_pt, ues, config.binning)
            s += ds
            c += dc
            if split:
                hues = place_ues_highway(city, config.n_ue, hw_rng, config.ue_height)
                ds, dc = accumulate(city, abs_pt, hues, config.binning)
                hs += ds
                hc += dc
    except UrbanLosError as e:
        raise type(e)(f"city {index}: {e}") from e
    record = CityRecord(
        index,
        len(city.buildings),
        city.requested,
        city.achieved_alpha,
        tuple((index, ev.category, ev.building, ev.message) for ev in city.events),
        tuple(positions),
    )
    return s, c, (hs, hc) if split else None, record


def _worker(args):
    return _simulate_city(*args)


def resolve_threads(threads: int) -> int:
    if threads < 0:
        raise ValidationError("threads must be >= 0")
    return threads or (os.cpu_count() or 1)


def simulate(
    config: SimulationConfig,
    threads: int = 1,
    city: CityModel | None = None,
    split_highway: bool = False,
) -> SimulationResult:
    """Full run; ``city`` replaces generation for every index (e.g. a city read from JSON)."""
    if split_highway and config.layout != "rh" and (city is None or not city.highways):
        raise NoHighways("highway split needs the rh layout")
    t0 = time.perf_counter()
    jobs = [(config, i, city, split_highway) for i in range(config.n_cities)]
    workers = min(resolve_threads(threads), config.n_cities)
    if workers <= 1:
        results = [_worker(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_worker, jobs))

    los_sum = np.zeros(N_BINS)
    los_count = np.zeros(N_BINS, dtype=np.int64)
    hw_sum = np.zeros(N_BINS)
    hw_count = np.zeros(N_BINS, dtype=np.int64)
    records = []
    for s, c, hw, rec in results:  # fixed reduction order: city index
        los_sum += s
        los_count += c
        if hw is not None:
            hw_sum += hw[0]
            hw_count += hw[1]
        records.append(rec)
        for ev in rec.events:
            log.info("city %d: %s building %d: %s", *ev)

    meta = {"version": __version__, "config_hash": config.hash(), "seed": config.seed}
    curve = PlosCurve.from_accumulators(los_sum, los_count, {**meta, "users": "street"})
    hw_curve = None
    if split_highway:
        hw_curve = PlosCurve.from_accumulators(hw_sum, hw_count, {**meta, "users": "highway"})
    return SimulationResult(config, curve, hw_curve, records, time.perf_counter() - t0)


def run(config: SimulationConfig, threads: int = 1) -> PlosCurve:
    return simulate(config, threads).curve


def run_rh_split(config: SimulationConfig, threads: int = 1) -> tuple[PlosCurve, PlosCurve]:
    if config.layout != "rh":
        raise NoHighways("highway split needs the rh layout")
    if not config.effective_highways():
        raise NoHighways("rh config has no highways")
    res = simulate(config, threads, split_highway=True)
    return res.curve, res.highway_curve
