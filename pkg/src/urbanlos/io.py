"""Readers and writers for the exchange formats.

* city JSON    -- layout, params, seed, achieved_alpha, buildings, highways
* curve CSV    -- ``theta_deg,plos,los_sum,los_count``, 91 rows, optional
  ``#`` comment lines above the header carrying version and config hash
* fit JSON     -- model, params, rmse, support
* run manifest -- config echo, version, timing, per-city warnings
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from . import __version__
from .citygen import Building, BuiltUpParams, CityModel, PlacementEvent
from .errors import ValidationError
from .montecarlo import N_BINS, PlosCurve, SimulationResult, highway_from_dict, highway_to_dict

CURVE_HEADER = "theta_deg,plos,los_sum,los_count"


class FormatError(ValidationError):
    pass


def city_to_dict(city: CityModel) -> dict:
    return {
        "side": float(city.side),
        "layout": city.layout,
        "params": city.params.to_dict(),
        "seed": int(city.seed),
        "achieved_alpha": city.achieved_alpha,
        "buildings": [
            {"x": b.x, "y": b.y, "w": b.w, "l": b.l, "h": b.h, "shape": b.shape} for b in city.buildings
        ],
        "highways": [highway_to_dict(h) for h in city.highways],
        "requested": city.requested,
        "events": [{"category": e.category, "building": e.building, "message": e.message} for e in city.events],
    }


def city_from_dict(d: dict) -> CityModel:
    try:
        p = d["params"]
        params = BuiltUpParams(p["alpha"], p["beta"], p["gamma"])
        buildings = tuple(
            Building(float(b["x"]), float(b["y"]), float(b["w"]), float(b["l"]), float(b["h"]), b.get("shape", "square"))
            for b in d["buildings"]
        )
        side = float(d.get("side", 1000.0))
        highways = tuple(highway_from_dict(h) for h in d.get("highways", []))
        events = tuple(PlacementEvent(e["category"], int(e["building"]), e["message"]) for e in d.get("events", []))
        city = CityModel(
            d.get("layout", "ru"), params, buildings, highways, int(d.get("seed", 0)), side,
            int(d.get("requested", len(buildings))), events,
        )
    except (KeyError, TypeError) as e:
        raise FormatError(f"malformed city JSON: {e}") from None
    for i, b in enumerate(buildings):
        if b.w <= 0 or b.l <= 0 or b.h < 0 or b.x < 0 or b.y < 0 or b.x + b.w > side + 1e-9 or b.y + b.l > side + 1e-9:
            raise FormatError(f"building {i} lies outside the city or has non-positive size")
    return city


def write_city(city: CityModel, path) -> None:
    Path(path).write_text(json.dumps(city_to_dict(city), indent=1) + "\n")


def read_city(path) -> CityModel:
    try:
        return city_from_dict(json.loads(Path(path).read_text()))
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: not valid JSON ({e})") from None


def _num(v: float) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    if float(v).is_integer() and abs(v) < 2**53:
        return str(int(v))
    return f"{v:.6g}"


def format_curve(curve: PlosCurve) -> str:
    lines = [f"# urbanlos {curve.meta.get('version', __version__)}"]
    meta = {k: v for k, v in curve.meta.items() if k != "version"}
    if meta:
        lines.append("# " + " ".join(f"{k}={v}" for k, v in sorted(meta.items())))
    lines.append(CURVE_HEADER)
    for t in range(N_BINS):
        p = curve.plos[t]
        plos = "" if math.isnan(p) else f"{p:.6g}"
        if curve.los_count is None:
            s = c = ""
        else:
            c = str(int(curve.los_count[t]))
            s = _num(float(curve.los_sum[t]))
        lines.append(f"{t},{plos},{s},{c}")
    return "\n".join(lines) + "\n"


def write_curve(curve: PlosCurve, path) -> None:
    Path(path).write_text(format_curve(curve))


def parse_curve(text: str, source: str = "<curve>") -> PlosCurve:
    meta = {}
    rows = []
    header_seen = False
    for line in text.splitlines():
        if not line.strip():
            continue
        if line.startswith("#"):
            for tok in line[1:].split():
                if "=" in tok:
                    k, v = tok.split("=", 1)
                    meta[k] = v
            continue
        if not header_seen:
            if line.strip() != CURVE_HEADER:
                raise FormatError(f"{source}: expected header '{CURVE_HEADER}', got '{line.strip()}'")
            header_seen = True
            continue
        rows.append(line.split(","))
    if not header_seen:
        raise FormatError(f"{source}: expected header '{CURVE_HEADER}'")
    if len(rows) != N_BINS:
        raise FormatError(f"{source}: expected {N_BINS} rows (theta 0..90), got {len(rows)}")
    plos = np.full(N_BINS, np.nan)
    sums = np.zeros(N_BINS)
    counts = np.zeros(N_BINS, dtype=np.int64)
    have_counts = None
    for i, row in enumerate(rows):
        if len(row) != 4:
            raise FormatError(f"{source}: row {i + 1} needs 4 fields")
        try:
            if int(row[0]) != i:
                raise FormatError(f"{source}: row {i + 1} should have theta_deg={i}")
            if row[1]:
                plos[i] = float(row[1])
            row_has = bool(row[3])
            if have_counts is None:
                have_counts = row_has
            elif have_counts != row_has:
                raise FormatError(f"{source}: los_count must be filled on every row or on none")
            if row_has:
                counts[i] = int(row[3])
                sums[i] = float(row[2]) if row[2] else 0.0
        except ValueError:
            raise FormatError(f"{source}: row {i + 1} is not numeric") from None
    if not np.all(np.isnan(plos) | ((plos >= 0) & (plos <= 1))):
        raise FormatError(f"{source}: plos values must lie in [0,1]")
    if have_counts:
        if np.any(counts < 0) or np.any(sums < 0) or np.any(sums > counts):
            raise FormatError(f"{source}: los_sum must lie in [0, los_count]")
        return PlosCurve.from_accumulators(sums, counts, meta)
    return PlosCurve.from_values(plos, meta)


def read_curve(path) -> PlosCurve:
    return parse_curve(Path(path).read_text(), str(path))


def write_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2) + "\n")


def manifest(result: SimulationResult, threads: int, outputs: list[str]) -> dict:
    cfg = result.config
    return {
        "tool": "urbanlos",
        "version": __version__,
        "config": cfg.to_dict(),
        "config_hash": cfg.hash(),
        "threads": threads,
        "duration_s": round(result.duration, 3),
        "outputs": outputs,
        "total_links": result.curve.total_count,
        "cities": [
            {
                "index": r.index,
                "buildings": r.n_buildings,
                "requested": r.requested,
                "achieved_alpha": r.achieved_alpha,
                "abs": [list(p) for p in r.abs_positions],
            }
            for r in result.cities
        ],
        "warnings": [
            {"city": ev[0], "category": ev[1], "building": ev[2], "message": ev[3]}
            for r in result.cities
            for ev in r.events
        ],
    }
