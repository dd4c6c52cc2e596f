"""Bundled published coefficient table for the sig1/sig2 models."""

from __future__ import annotations

import csv
import io
from functools import lru_cache
from importlib import resources

from .errors import ValidationError
from .fitting import Sig1Params, Sig2Params, model_curve
from .montecarlo import PlosCurve


@lru_cache(maxsize=1)
def load_table2() -> dict[tuple[str, str], tuple[Sig1Params, Sig2Params]]:
    """Map (layout, environment) -> (Sig1Params, Sig2Params)."""
    text = resources.files("urbanlos").joinpath("data/table2.csv").read_text()
    rows = csv.DictReader(io.StringIO("\n".join(l for l in text.splitlines() if not l.startswith("#"))))
    table = {}
    for row in rows:
        f = {k: float(row[k]) for k in ("a", "b", "x1", "x2", "x3", "x4")}
        table[(row["layout"], row["environment"])] = (
            Sig1Params(f["a"], f["b"]),
            Sig2Params(f["x1"], f["x2"], f["x3"], f["x4"]),
        )
    return table


def reference_params(env: str, layout: str, model: str) -> Sig1Params | Sig2Params:
    table = load_table2()
    key = (layout.lower(), env.lower())
    if key not in table or model not in ("sig1", "sig2"):
        raise ValidationError(
            f"no published {model} coefficients for environment {env!r} / layout {layout!r}"
        )
    s1, s2 = table[key]
    return s1 if model == "sig1" else s2


def reference_curve(env: str, layout: str, model: str = "sig2") -> PlosCurve:
    p = reference_params(env, layout, model)
    return model_curve(p, {"source": "table2", "environment": env, "layout": layout, "model": model})
