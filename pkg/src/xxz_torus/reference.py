"""Loader for the bundled reference tables (printed roots and energy deltas)."""
from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources

import numpy as np


@lru_cache(maxsize=1)
def _load():
    path = resources.files("xxz_torus").joinpath("data/reference_tables.json")
    with path.open("r") as fh:
        return json.load(fh)


def roots_table(table_id: int):
    """Printed ground-state roots: (eta, {n_sites: complex array}, decimals)."""
    if table_id not in (1, 2):
        raise ValueError("roots tables are 1 and 2")
    doc = _load()[f"table{table_id}"]
    cols = {int(n): np.array([complex(re, im) for re, im in col])
            for n, col in doc["columns"].items()}
    return doc["eta"], cols, doc["printed_decimals"]


def delta_table():
    """Printed ground-energy deltas: (etas, {n_sites: row array}, decimals)."""
    doc = _load()["table3"]
    rows = {int(n): np.asarray(vals, dtype=float)
            for n, vals in doc["rows"].items()}
    return list(doc["etas"]), rows, doc["printed_decimals"]


def reference_fit(name: str):
    """(amplitude, rate) of one of the published exponential-decay fits."""
    fits = _load()["reference_fits"]
    if name not in fits:
        raise KeyError(f"unknown fit {name!r}; have {sorted(fits)}")
    f = fits[name]
    return f["amplitude"], f["rate"]
