"""``urbanlos`` command line: generate, simulate, fit, compare, table2.

Exit codes: 0 success, 2 validation, 3 generation/simulation failure,
4 insufficient data.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .citygen import LAYOUTS, PRESETS, BuiltUpParams, LayoutOptions, preset
from .errors import UrbanLosError, ValidationError
from .montecarlo import BINNINGS, SimulationConfig, city_for, highway_from_dict, simulate
from . import io

log = logging.getLogger("urbanlos")


def _shared(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON file with SimulationConfig fields; flags override it")
    p.add_argument("--env", choices=sorted(PRESETS), help="built-up parameter preset")
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=int)
    p.add_argument("--gamma", type=float)
    p.add_argument("--layout", choices=LAYOUTS)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", type=Path)
    p.add_argument("--threads", type=int, default=1, help="worker processes (0 = one per CPU); never changes results")
    p.add_argument("--highways", type=Path, help="JSON list of highway strips for the rh layout")
    p.add_argument("--rect-fraction", type=float, help="share of rectangular buildings")
    p.add_argument("--grid-resolution", type=int, help="occupancy grid cells per side (ru/rh)")
    p.add_argument("--plot", action="store_true", help="also render a PNG next to the output")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="urbanlos", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"urbanlos {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate one city and write it as JSON")
    _shared(g)

    s = sub.add_parser("simulate", help="Monte Carlo P_LoS curve")
    _shared(s)
    s.add_argument("--ues", type=int, dest="n_ue", help="ground users per city")
    s.add_argument("--cities", type=int, dest="n_cities")
    s.add_argument("--habs-max", type=float, dest="h_abs_max", help="maximum ABS altitude (m)")
    s.add_argument("--ue-height", type=float, dest="ue_height")
    s.add_argument("--abs-per-city", type=int, dest="abs_per_city")
    s.add_argument("--binning", choices=BINNINGS)
    s.add_argument("--min-count", type=int, dest="min_count_per_bin")
    s.add_argument("--no-buildings", action="store_true", default=None, dest="no_buildings")
    s.add_argument("--city", type=Path, help="use this city JSON instead of generating cities")
    s.add_argument("--split-highway", action="store_true", help="rh only: separate street and highway users")
    s.add_argument("--manifest", type=Path, help="run manifest path (default: <out>.manifest.json)")

    f = sub.add_parser("fit", help="fit sig1/sig2 to a curve CSV")
    f.add_argument("curve", type=Path)
    f.add_argument("--model", choices=("sig1", "sig2"), default="sig2")
    f.add_argument("--min-count", type=int, default=30)
    f.add_argument("--out", type=Path)
    f.add_argument("--plot", action="store_true")

    c = sub.add_parser("compare", help="RMSE, MAE and R^2 between two curve CSVs")
    c.add_argument("curve_a", type=Path, help="model curve")
    c.add_argument("curve_b", type=Path, help="reference curve")
    c.add_argument("--theta-min", type=int, default=0)
    c.add_argument("--theta-max", type=int, default=90)
    c.add_argument("--json", type=Path)

    t = sub.add_parser("table2", help="published reference curve as CSV")
    t.add_argument("--env", choices=sorted(PRESETS), required=True)
    t.add_argument("--layout", choices=("rm", "ru", "rh"), required=True)
    t.add_argument("--model", choices=("sig1", "sig2"), default="sig2")
    t.add_argument("--out", type=Path)
    return ap


def _load_config_file(path: Path | None) -> dict:
    if path is None:
        return {}
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ValidationError(f"{path}: invalid JSON ({e})") from None
    if not isinstance(data, dict):
        raise ValidationError(f"{path}: config must be a JSON object")
    return data


def _params(args, base) -> BuiltUpParams | None:
    if args.env:
        base = preset(args.env).to_dict()
    elif isinstance(base, BuiltUpParams):
        base = base.to_dict()
    base = dict(base or {})
    for k in ("alpha", "beta", "gamma"):
        v = getattr(args, k)
        if v is not None:
            base[k] = v
    if not base:
        return None
    missing = [k for k in ("alpha", "beta", "gamma") if k not in base]
    if missing:
        raise ValidationError(f"missing built-up parameter(s): {', '.join(missing)} (or use --env)")
    return BuiltUpParams(base["alpha"], base["beta"], base["gamma"])


def _highways(path: Path | None):
    if path is None:
        return None
    data = json.loads(path.read_text())
    if isinstance(data, dict):
        data = data.get("highways", [])
    return tuple(highway_from_dict(h) for h in data)


def _merged_config(args, city=None) -> dict:
    cfg = _load_config_file(args.config)
    params = _params(args, cfg.get("params"))
    if params is None and city is not None:
        params = city.params
    if params is None:
        raise ValidationError("no built-up parameters: give --env or --alpha/--beta/--gamma")
    cfg["params"] = params
    for key in ("layout", "seed", "rect_fraction", "grid_resolution"):
        v = getattr(args, key, None)
        if v is not None:
            cfg[key] = v
    if "layout" not in cfg and city is not None:
        cfg["layout"] = city.layout
    hws = _highways(args.highways)
    if hws is not None:
        cfg["highways"] = hws
    elif cfg.get("highways") is not None:
        cfg["highways"] = tuple(highway_from_dict(h) for h in cfg["highways"])
    return cfg


def cmd_generate(args) -> int:
    cfg = _merged_config(args)
    layout = cfg.get("layout")
    if layout is None:
        raise ValidationError("--layout is required")
    options = LayoutOptions(
        grid_resolution=cfg.get("grid_resolution", 50),
        rect_fraction=cfg.get("rect_fraction", 0.5),
        cap_fraction=cfg.get("cap_fraction", 0.03),
        cap_referent=cfg.get("cap_referent", "total"),
        placement_order=cfg.get("placement_order", "largest-first"),
        highways=cfg.get("highways"),
    )
    seed = int(cfg.get("seed", 0))
    city = city_for(layout, cfg["params"], seed, 0, options)
    if args.out:
        io.write_city(city, args.out)
        if args.plot:
            from .plotting import plot_city

            plot_city(city, args.out.with_suffix(".png"))
        print(f"achieved_alpha={city.achieved_alpha:.6f} buildings={len(city.buildings)}")
    else:
        sys.stdout.write(json.dumps(io.city_to_dict(city), indent=1) + "\n")
        print(f"achieved_alpha={city.achieved_alpha:.6f} buildings={len(city.buildings)}", file=sys.stderr)
    return 0


def _with_suffix(out: Path, tag: str) -> Path:
    stem = out.name[: -len(".csv")] if out.name.endswith(".csv") else out.name
    return out.with_name(f"{stem}.{tag}")


def cmd_simulate(args) -> int:
    city = io.read_city(args.city) if args.city else None
    cfg = _merged_config(args, city)
    for key in ("n_ue", "n_cities", "h_abs_max", "ue_height", "abs_per_city", "binning",
                "min_count_per_bin", "no_buildings"):
        v = getattr(args, key)
        if v is not None:
            cfg[key] = v
    if city is not None:
        cfg.setdefault("n_cities", 1)
    flags = {"n_ue": "--ues", "n_cities": "--cities", "h_abs_max": "--habs-max"}
    missing = [flag for k, flag in flags.items() if k not in cfg]
    if missing:
        raise ValidationError(f"missing {', '.join(missing)} (flag or config file)")
    if args.out is None:
        raise ValidationError("--out is required")
    config = SimulationConfig.from_dict(cfg)

    result = simulate(config, threads=args.threads, city=city, split_highway=args.split_highway)
    if args.split_highway:
        outputs = {_with_suffix(args.out, "street.csv"): result.curve,
                   _with_suffix(args.out, "highway.csv"): result.highway_curve}
    else:
        outputs = {args.out: result.curve}
    for path, curve in outputs.items():
        io.write_curve(curve, path)
    if args.plot:
        from .plotting import plot_curves

        labels = {p.name: c for p, c in outputs.items()}
        plot_curves(labels, _with_suffix(args.out, "png"), title=f"{config.layout} {config.params.to_dict()}")
    man_path = args.manifest or _with_suffix(args.out, "manifest.json")
    io.write_json(io.manifest(result, args.threads, [str(p) for p in outputs]), man_path)
    for r in result.cities:
        drops = sum(1 for ev in r.events if ev[1] == "drop")
        if drops:
            log.warning("city %d: %d building(s) dropped, achieved alpha %.4f", r.index, drops, r.achieved_alpha)
    print(f"links={result.curve.total_count} mean_plos={result.curve.mean():.4f} -> {', '.join(map(str, outputs))}")
    return 0


def cmd_fit(args) -> int:
    from .fitting import fit

    curve = io.read_curve(args.curve)
    res = fit(curve, args.model, args.min_count)
    if args.out:
        io.write_json(res.to_dict(), args.out)
    if args.plot:
        from .plotting import plot_curves

        target = args.out.with_suffix(".png") if args.out else args.curve.with_suffix(f".{args.model}.png")
        plot_curves({args.curve.name: curve}, target, {args.curve.name: res.curve()}, title=args.model)
    print(f"model={res.model} rmse={res.rmse:.6g} params={json.dumps(res.to_dict()['params'])}")
    if not res.converged:
        log.warning("fit stopped at the iteration budget; best iterate reported")
    return 0


def cmd_compare(args) -> int:
    from .fitting import compare

    a = io.read_curve(args.curve_a)
    b = io.read_curve(args.curve_b)
    if not 0 <= args.theta_min <= args.theta_max <= 90:
        raise ValidationError("need 0 <= --theta-min <= --theta-max <= 90")
    m = compare(a, b, range(args.theta_min, args.theta_max + 1))
    print(f"rmse={m.rmse:.6g} mae={m.mae:.6g} r2={m.r2:.6g} n={m.n}")
    if args.json:
        io.write_json({"rmse": m.rmse, "mae": m.mae, "r2": m.r2, "n": m.n}, args.json)
    return 0


def cmd_table2(args) -> int:
    from .reference import reference_curve

    curve = reference_curve(args.env, args.layout, args.model)
    text = io.format_curve(curve)
    if args.out:
        args.out.write_text(text)
    else:
        sys.stdout.write(text)
    return 0


COMMANDS = {
    "generate": cmd_generate,
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "compare": cmd_compare,
    "table2": cmd_table2,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UrbanLosError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except (OSError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
