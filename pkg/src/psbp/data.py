"""Shipment tables: ingestion, cleaning and a synthetic generator."""

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .model import (CATEGORICAL_BLOCKS, CATEGORICAL_FIELDS, ShipmentRecord,
                    records_to_columns, stick_breaking_weights)
from .stats import normal_cdf, rng_stream

log = logging.getLogger(__name__)

# input column -> internal field
DEFAULT_SCHEMA = {
    "y_hours": "y",
    "airline": "airline",
    "route": "route",
    "month": "month",
    "legs": "legs",
    "dev_start_days": "dev_start",
    "dur_days": "dur",
    "wgt_kg": "wgt",
    "pcs": "pcs",
}
NUMERIC = ("y", "dev_start", "dur", "wgt", "pcs")
COLUMNS = ("y",) + CATEGORICAL_FIELDS + ("dev_start", "dur", "wgt", "pcs",
                                         "log_wgt", "log_pcs")
DAY_PEAKS = (-24.0, 0.0, 24.0, 48.0, 72.0)


class SchemaError(ValueError):
    pass


class Dataset:
    """Column store of shipment records.

    Categorical columns hold strings; ``log_wgt`` and ``log_pcs`` are derived
    at construction.  ``log`` lists every record removed by ingestion or
    cleaning with a reason code.
    """

    def __init__(self, columns, provenance=None, log=None):
        cols = {}
        n = len(columns["y"])
        for f in ("y", "dev_start", "dur", "wgt", "pcs"):
            cols[f] = np.asarray(columns[f], dtype=float).reshape(n)
        for f in CATEGORICAL_FIELDS:
            cols[f] = np.asarray([str(v) for v in columns[f]], dtype=object).reshape(n)
        with np.errstate(divide="ignore", invalid="ignore"):
            cols["log_wgt"] = np.log(cols["wgt"])
            cols["log_pcs"] = np.log(cols["pcs"])
        self.columns = cols
        self.provenance = dict(provenance or {})
        self.log = list(log or [])

    @classmethod
    def from_records(cls, records, **kw):
        records = list(records)
        if not records:
            return cls.empty(**kw)
        return cls(records_to_columns(records), **kw)

    @classmethod
    def empty(cls, **kw):
        cols = {f: [] for f in ("y",) + CATEGORICAL_FIELDS + NUMERIC[1:]}
        return cls(cols, **kw)

    def __len__(self):
        return len(self.columns["y"])

    def __getitem__(self, name):
        return self.columns[name]

    def __contains__(self, name):
        return name in self.columns

    @property
    def y(self):
        return self.columns["y"]

    def subset(self, idx, note=None):
        cols = {k: v[idx] for k, v in self.columns.items()}
        prov = dict(self.provenance)
        if note:
            prov["subset"] = note
        return Dataset(cols, prov, self.log)

    def concat(self, other):
        cols = {k: np.concatenate([self.columns[k], other.columns[k]])
                for k in self.columns}
        return Dataset(cols, self.provenance, self.log + other.log)

    def with_values(self, **overrides):
        """Copy with some columns replaced by constants or arrays."""
        cols = dict(self.columns)
        n = len(self)
        for k, v in overrides.items():
            if k in CATEGORICAL_FIELDS:
                cols[k] = np.asarray([str(v)] * n, dtype=object) if np.ndim(v) == 0 \
                    else np.asarray([str(x) for x in v], dtype=object)
            else:
                cols[k] = np.broadcast_to(np.asarray(v, dtype=float), (n,)).copy()
        return Dataset(cols, self.provenance, self.log)

    def records(self):
        for i in range(len(self)):
            yield ShipmentRecord(**{f: self.columns[f][i]
                                    for f in ("y",) + CATEGORICAL_FIELDS + NUMERIC[1:]})

    def pair_keys(self):
        return [f"{a}|{r}" for a, r in zip(self["airline"], self["route"])]

    def to_csv(self, path, delimiter=","):
        inv = {v: k for k, v in DEFAULT_SCHEMA.items()}
        names = [inv[f] for f in ("y",) + CATEGORICAL_FIELDS + NUMERIC[1:]]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
            w.writerow(names)
            for i in range(len(self)):
                row = []
                for f in ("y",) + CATEGORICAL_FIELDS + NUMERIC[1:]:
                    v = self.columns[f][i]
                    row.append(v if f in CATEGORICAL_FIELDS else repr(float(v)))
                w.writerow(row)


def ingest(path, schema=None, delimiter=","):
    """Read a delimiter-separated shipment table with a header row.

    Malformed rows are skipped and logged in ``Dataset.log``; a missing
    required column raises :class:`SchemaError`.
    """
    schema = dict(DEFAULT_SCHEMA if schema is None else schema)
    cols = {f: [] for f in schema.values()}
    skipped = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError("file has no header row")
        missing = [c for c in schema if c not in header]
        if missing:
            raise SchemaError(f"missing required column: {missing[0]}")
        pos = {schema[c]: header.index(c) for c in schema}
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            reason = None
            vals = {}
            if len(row) != len(header):
                reason = "wrong field count"
            else:
                for f, i in pos.items():
                    raw = row[i].strip()
                    if f in NUMERIC:
                        try:
                            v = float(raw)
                        except ValueError:
                            reason = f"non-numeric {f}"
                            break
                        if not math.isfinite(v):
                            reason = f"non-finite {f}"
                            break
                        vals[f] = v
                    else:
                        if not raw:
                            reason = f"missing {f}"
                            break
                        vals[f] = raw
            if reason is None:
                if vals["wgt"] <= 0:
                    reason = "non-positive weight"
                elif vals["pcs"] <= 0:
                    reason = "non-positive pieces"
                elif vals["pcs"] < 1:
                    reason = "pieces below one"
                elif vals["legs"] not in ("1", "2", "3"):
                    reason = "legs outside {1,2,3}"
            if reason is not None:
                skipped.append({"line": lineno, "reason": reason, "stage": "ingest"})
                continue
            for f, v in vals.items():
                cols[f].append(v)
    if skipped:
        log.info("ingest skipped %d row(s)", len(skipped))
    return Dataset(cols, {"source": str(path), "delimiter": delimiter}, skipped)


def clean(data, min_pair=10, min_route=20):
    """Drop sparse airline-route pairs and routes until nothing changes.

    Each pass removes pairs with fewer than ``min_pair`` records, then routes
    with fewer than ``min_route``; passes repeat because removal can push
    other groups under their threshold.
    """
    keep = np.ones(len(data), dtype=bool)
    route = data["route"]
    pair = np.asarray(data.pair_keys(), dtype=object)
    entries = []
    n_pass = 0
    while True:
        n_pass += 1
        changed = False
        for key, thresh, code in ((pair, min_pair, "pair"), (route, min_route, "route")):
            live = np.nonzero(keep)[0]
            labels, inv, counts = np.unique(key[live], return_inverse=True,
                                            return_counts=True)
            bad = counts[inv] < thresh
            if np.any(bad):
                changed = True
                for i in live[bad]:
                    entries.append({"index": int(i), "reason": f"{code}<{thresh}",
                                    "pass": n_pass, "stage": "clean"})
                keep[live[bad]] = False
        if not changed:
            break
    out = data.subset(np.nonzero(keep)[0])
    out.log = data.log + entries
    out.provenance["clean_passes"] = n_pass
    out.provenance["clean_dropped"] = len(entries)
    return out


@dataclass
class SynthSpec:
    """Known-truth PSBP generator over a grid of airline x route x month cells.

    ``effects[block][label]`` gives the true shared predictor shift for a
    categorical level (missing labels are 0); ``curves[field]`` maps a
    continuous column to an additive shift.  Continuous predictors are drawn
    uniformly from ``ranges`` when given, else held at ``constants``.
    """

    level: tuple = (-1.5, 0.0, 0.0, 0.5, 0.0)
    mu: tuple = DAY_PEAKS
    sd: tuple = (6.0, 4.0, 5.0, 6.0, 8.0)
    airlines: tuple = ("A1", "A2")
    routes: tuple = ("R1", "R2")
    months: tuple = ("1",)
    legs: tuple = ("1",)
    n_per_cell: int = 500
    effects: dict = field(default_factory=dict)
    curves: dict = field(default_factory=dict)
    ranges: dict = field(default_factory=dict)
    constants: dict = field(default_factory=lambda: {
        "dev_start": 0.0, "dur": 3.0, "wgt": math.exp(5.0), "pcs": math.exp(2.0)})
    seed: int = 0

    def __post_init__(self):
        if len(self.level) != len(self.mu) or len(self.mu) != len(self.sd):
            raise ValueError("level, mu and sd must share the component count")
        if any(s <= 0 for s in self.sd):
            raise ValueError("kernel sd must be positive")


class SynthTruth:
    """Ground truth attached to a synthetic dataset."""

    def __init__(self, spec):
        self.spec = spec
        self.mu = np.asarray(spec.mu, dtype=float)
        self.phi = 1.0 / np.asarray(spec.sd, dtype=float) ** 2
        self.level = np.asarray(spec.level, dtype=float)

    def eta(self, columns):
        n = len(columns["airline"])
        out = np.zeros(n)
        for block, table in self.spec.effects.items():
            fs = CATEGORICAL_BLOCKS[block]
            for i in range(n):
                key = tuple(str(columns[f][i]) for f in fs)
                key = key[0] if len(key) == 1 else key
                out[i] += table.get(key, 0.0)
        for f, fn in self.spec.curves.items():
            out += fn(np.asarray(columns[f], dtype=float))
        return out

    def weights(self, columns):
        g = self.level[None, :] + self.eta(columns)[:, None]
        return stick_breaking_weights(g)

    def density(self, grid, columns):
        """True density on ``grid`` for each row of ``columns``: ``(n, G)``."""
        w = self.weights(columns)
        grid = np.asarray(grid, dtype=float)
        comp = np.sqrt(self.phi / (2 * np.pi)) * np.exp(
            -0.5 * self.phi * (grid[:, None] - self.mu) ** 2)
        return w @ comp.T

    def cdf(self, t, columns):
        w = self.weights(columns)
        return w @ normal_cdf((t - self.mu) * np.sqrt(self.phi))

    def to_dict(self):
        s = self.spec
        return {"level": list(s.level), "mu": list(s.mu), "sd": list(s.sd),
                "effects": {b: {("|".join(k) if isinstance(k, tuple) else k): v
                                for k, v in t.items()} for b, t in s.effects.items()},
                "curves": sorted(s.curves), "seed": s.seed}


def synth_cells(spec):
    return [{"airline": a, "route": r, "month": m, "legs": g}
            for a in spec.airlines for r in spec.routes
            for m in spec.months for g in spec.legs]


def synth_generate(spec):
    """Sample a dataset from the PSBP mixture described by ``spec``.

    Returns ``(Dataset, SynthTruth)``.  Each cell draws from its own stream so
    that output is independent of cell iteration order.
    """
    truth = SynthTruth(spec)
    cells = synth_cells(spec)
    parts = {f: [] for f in ("y",) + CATEGORICAL_FIELDS + NUMERIC[1:]}
    for ci, cell in enumerate(cells):
        rng = rng_stream(spec.seed, ci)
        n = spec.n_per_cell
        cols = {f: np.asarray([cell[f]] * n, dtype=object) for f in CATEGORICAL_FIELDS}
        for f in NUMERIC[1:]:
            if f in spec.ranges:
                lo, hi = spec.ranges[f]
                cols[f] = rng.uniform(lo, hi, n)
            else:
                cols[f] = np.full(n, float(spec.constants.get(f, 1.0)))
        cols["log_wgt"] = np.log(cols["wgt"])
        cols["log_pcs"] = np.log(cols["pcs"])
        w = truth.weights(cols)
        u = rng.random(n)
        s = np.minimum((np.cumsum(w, axis=1) < u[:, None]).sum(axis=1), w.shape[1] - 1)
        y = truth.mu[s] + rng.standard_normal(n) / np.sqrt(truth.phi[s])
        cols["y"] = y
        for f in parts:
            parts[f].append(cols[f])
    merged = {f: np.concatenate(v) for f, v in parts.items()}
    ds = Dataset(merged, {"source": "synthetic", "seed": spec.seed})
    return ds, truth


def bimodal_spec(seed=0, n_per_cell=250, **kw):
    """Multimodal test bed: day peaks at 0/24/48 h whose weights depend on
    airline, route and a non-monotone duration curve."""
    base = dict(
        level=(0.6, 0.3, 0.0),
        mu=(0.0, 24.0, 48.0),
        sd=(4.0, 5.0, 6.0),
        airlines=("A1", "A2"),
        routes=("R1", "R2"),
        effects={"airline": {"A2": -0.5}, "route": {"R2": 0.4}},
        curves={"dur": lambda d: 1.2 * np.cos(np.pi * (d - 1.0) / 4.5)},
        ranges={"dur": (1.0, 10.0)},
        n_per_cell=n_per_cell,
        seed=seed,
    )
    base.update(kw)
    return SynthSpec(**base)

