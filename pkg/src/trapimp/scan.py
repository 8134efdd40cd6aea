"""Parameter sweeps, level tracking, avoided-crossing detection, exports.

A scan sweeps one knob (separation, scattering length, or the symmetry
breaking displacement of one impurity), solving the spectrum at each value.
Levels are tracked by parity-constrained energy ordering; avoided crossings
show up as local minima of adjacent same-parity gaps and are refined by a
local re-solve on a finer sweep grid.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ExportError, SolverError
from .freespace import bound_state_kappa
from .solver import (
    RootScanOptions,
    SpectralState,
    SystemSpec,
    find_roots,
    solve_state,
    wavefunction_samples,
)

SCHEMA_VERSION = 1
SWEEP_VARIABLES = ("separation_2d", "scattering_a", "asym_dz")
TABLE_COLUMNS = ("sweep_var", "value", "level_index", "energy", "parity", "flags")
CROSSING_COLUMNS = ("sweep_var", "value", "gap", "lower_index", "upper_index",
                    "parity_lower", "parity_upper")


@dataclass(frozen=True)
class ScanSpec:
    """One sweep: variable, range, fixed parameters, energy window."""

    variable: str
    lo: float
    hi: float
    steps: int
    fixed: dict = field(default_factory=dict)
    e_min: float = -6.0
    e_max: float = 6.0
    include_free: bool = False

    def __post_init__(self):
        if self.variable not in SWEEP_VARIABLES:
            raise ConfigurationError(
                f"sweep variable must be one of {SWEEP_VARIABLES}, got {self.variable!r}")
        if not self.lo < self.hi:
            raise ConfigurationError("scan range needs lo < hi")
        if self.steps < 2:
            raise ConfigurationError("scan needs at least 2 steps")
        if not self.e_min < self.e_max:
            raise ConfigurationError("energy window needs e_min < e_max")

    def values(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.steps)


@dataclass(frozen=True)
class ScanRow:
    sweep_var: str
    value: float
    level_index: int
    energy: float
    parity: str
    flags: str = ""


@dataclass(frozen=True)
class ScanTable:
    sweep_var: str
    rows: tuple[ScanRow, ...]

    def values(self) -> list[float]:
        seen = []
        for r in self.rows:
            if not seen or r.value != seen[-1]:
                seen.append(r.value)
        return seen

    def levels_at(self, value: float, include_free: bool = False) -> list[ScanRow]:
        out = [r for r in self.rows if r.value == value and r.level_index >= 0]
        if include_free:
            out += [r for r in self.rows if r.value == value and r.level_index < 0]
        return out


@dataclass(frozen=True)
class CrossingRecord:
    """An avoided crossing: sweep location of the minimal gap and its width."""

    sweep_value: float
    gap: float
    lower_index: int
    upper_index: int
    parity_lower: str
    parity_upper: str

    def __post_init__(self):
        if self.gap < 0:
            raise ValueError("gap must be nonnegative")


def spec_for_sweep_value(scan: ScanSpec, base: SystemSpec, value: float) -> SystemSpec:
    """The configuration at one sweep point."""
    if scan.variable == "separation_2d":
        a = scan.fixed.get("a")
        if a is None:
            a = base.scattering_lengths[0]
        dz = float(scan.fixed.get("dz", 0.0))
        d = value / 2.0
        return SystemSpec(positions=((0.0, 0.0, d + dz), (0.0, 0.0, -d)),
                          scattering_lengths=(a, a))
    if scan.variable == "scattering_a":
        return SystemSpec(positions=base.positions,
                          scattering_lengths=tuple(value for _ in base.positions))
    # asym_dz: displace the first impurity by the sweep value
    d = scan.fixed.get("d")
    if d is None:
        d = abs(base.positions[0][2])
    a = scan.fixed.get("a")
    if a is None:
        a = base.scattering_lengths[0]
    return SystemSpec(positions=((0.0, 0.0, d + value), (0.0, 0.0, -d)),
                      scattering_lengths=(a, a))


def run_scan(scan: ScanSpec, spec: SystemSpec,
             options: RootScanOptions = RootScanOptions()) -> ScanTable:
    """Solve the spectrum along the sweep; per-point failures become rows
    flagged ``error`` and the scan continues."""
    rows: list[ScanRow] = []
    for value in scan.values():
        value = float(value)
        try:
            point_spec = spec_for_sweep_value(scan, spec, value)
            states = find_roots(point_spec, scan.e_min, scan.e_max, options)
            for idx, st in enumerate(states):
                rows.append(ScanRow(scan.variable, value, idx, st.energy, st.parity,
                                    "|".join(st.flags)))
            if scan.include_free:
                d = point_spec.symmetric_pair_half_separation()
                a = point_spec.scattering_lengths[0]
                if d is not None and not math.isinf(a):
                    for parity in ("even", "odd"):
                        kappa = bound_state_kappa(d, a, parity)
                        if kappa is not None:
                            rows.append(ScanRow(scan.variable, value, -1,
                                                -0.5 * kappa * kappa, parity, "free_space"))
        except Exception as exc:  # recorded inline, scan continues
            rows.append(ScanRow(scan.variable, value, -1, math.nan, "none",
                                f"error:{type(exc).__name__}"))
    table = ScanTable(sweep_var=scan.variable, rows=tuple(rows))
    return _flag_tracking_jumps(table)


def _flag_tracking_jumps(table: ScanTable) -> ScanTable:
    """Flag level-tracking discontinuities; never reassign levels silently.

    Tracked levels are (parity, rank) pairs; between adjacent sweep points
    their energy may move at most by a heuristic bound from the local sweep
    resolution (median level motion plus a floor).
    """
    values = table.values()
    if len(values) < 3:
        return table
    rows = list(table.rows)
    by_value = {}
    for i, r in enumerate(rows):
        if r.level_index >= 0 and math.isfinite(r.energy):
            by_value.setdefault(r.value, []).append(i)
    flagged = set()
    for v_prev, v_next in zip(values[:-1], values[1:]):
        prev = [rows[i] for i in by_value.get(v_prev, [])]
        for parity in ("even", "odd", "none"):
            track_prev = sorted([r for r in prev if r.parity == parity],
                                key=lambda r: r.energy)
            idx_next = [i for i in by_value.get(v_next, [])
                        if rows[i].parity == parity]
            track_next = sorted(idx_next, key=lambda i: rows[i].energy)
            if not track_prev or not track_next:
                continue
            moves = [abs(rows[i].energy - p.energy)
                     for i, p in zip(track_next, track_prev)]
            bound = 4.0 * float(np.median(moves)) + 0.2
            for i, p in zip(track_next, track_prev):
                if abs(rows[i].energy - p.energy) > bound:
                    flagged.add(i)
    if not flagged:
        return table
    new_rows = []
    for i, r in enumerate(rows):
        if i in flagged:
            flags = (r.flags + "|tracking_jump").lstrip("|")
            new_rows.append(ScanRow(r.sweep_var, r.value, r.level_index, r.energy,
                                    r.parity, flags))
        else:
            new_rows.append(r)
    return ScanTable(sweep_var=table.sweep_var, rows=tuple(new_rows))


def detect_crossings(table: ScanTable, spec: SystemSpec | None = None,
                     scan: ScanSpec | None = None,
                     options: RootScanOptions = RootScanOptions()) -> list[CrossingRecord]:
    """Local minima of adjacent same-parity gaps along the sweep.

    Opposite-parity levels cross exactly in symmetric configurations and are
    never paired.  With ``spec`` and ``scan`` provided, each minimum is
    refined by re-solving on an 8x finer local sweep grid.
    """
    values = table.values()
    records: list[CrossingRecord] = []
    by_value = {v: sorted([r for r in table.levels_at(v) if math.isfinite(r.energy)],
                          key=lambda r: r.energy) for v in values}
    parities = sorted({r.parity for rows in by_value.values() for r in rows})
    for parity in parities:
        # gap g_k(v) between consecutive same-parity levels, rank k and k+1
        series: dict[int, list[tuple[float, float, int, int]]] = {}
        for v in values:
            levels = [r for r in by_value[v] if r.parity == parity]
            for k in range(len(levels) - 1):
                gap = levels[k + 1].energy - levels[k].energy
                series.setdefault(k, []).append(
                    (v, gap, levels[k].level_index, levels[k + 1].level_index))
        for k, data in series.items():
            if len(data) < 3:
                continue
            gaps = [g for _, g, _, _ in data]
            for m in range(1, len(data) - 1):
                if gaps[m] <= gaps[m - 1] and gaps[m] < gaps[m + 1]:
                    v, gap, lo_idx, hi_idx = data[m]
                    if spec is not None and scan is not None:
                        v, gap = _refine_crossing(
                            scan, spec, parity, k,
                            data[m - 1][0], data[m + 1][0], options)
                    records.append(CrossingRecord(
                        sweep_value=v, gap=gap, lower_index=lo_idx,
                        upper_index=hi_idx, parity_lower=parity, parity_upper=parity))
    records.sort(key=lambda r: (r.sweep_value, r.gap))
    return records


def _refine_crossing(scan, spec, parity, rank, v_lo, v_hi, options):
    """Gap minimum on an 8x finer local grid around a coarse minimum."""
    best = (math.inf, 0.5 * (v_lo + v_hi))
    for v in np.linspace(v_lo, v_hi, 17):
        point_spec = spec_for_sweep_value(scan, spec, float(v))
        try:
            states = [s for s in find_roots(point_spec, scan.e_min, scan.e_max, options)
                      if s.parity == parity]
        except SolverError:
            continue
        if len(states) < rank + 2:
            continue
        gap = states[rank + 1].energy - states[rank].energy
        if gap < best[0]:
            best = (gap, float(v))
    return best[1], best[0]


def wavefunction_cut(state: SpectralState, spec: SystemSpec, cut: str = "z",
                     rendering: str = "raw", extent: float = 5.0, n: int = 201):
    """Sample Psi along the z-axis or over the x-z plane.

    ``pole_tamed`` multiplies by prod_i |r - d_i| so the samples stay finite
    at the impurities (for a symmetric on-axis pair this equals |z^2 - d^2|
    on the axis); ``raw`` drops samples within 1e-3 of an impurity.
    """
    if rendering not in ("raw", "pole_tamed"):
        raise ConfigurationError(f"rendering must be 'raw' or 'pole_tamed', got {rendering!r}")
    pos = spec.positions_array
    if cut == "z":
        z = np.linspace(-extent, extent, n)
        pts = np.column_stack([np.zeros_like(z), np.zeros_like(z), z])
        axes = {"z": z}
    elif cut == "xz":
        g = np.linspace(-extent, extent, n)
        X, Z = np.meshgrid(g, g)
        pts = np.column_stack([X.ravel(), np.zeros(X.size), Z.ravel()])
        axes = {"x": g, "z": g}
    else:
        raise ConfigurationError(f"cut must be 'z' or 'xz', got {cut!r}")
    dist = np.stack([np.linalg.norm(pts - p, axis=1) for p in pos])
    if rendering == "raw":
        keep = np.min(dist, axis=0) > 1e-3
        pts = pts[keep]
        dist = dist[:, keep]
        if cut == "z":
            axes = {"z": axes["z"][keep]}
        psi = wavefunction_samples(state, spec, pts, pole_guard=5e-4)
        out = dict(axes)
        out["psi"] = psi
        if cut == "xz":
            out["points"] = pts
        return out
    # pole_tamed: nudge exact hits, then multiply by the product of distances
    hits = np.min(dist, axis=0) < 1e-9
    if np.any(hits):
        pts = pts.copy()
        pts[hits, 2] += 2e-6
        dist = np.stack([np.linalg.norm(pts - p, axis=1) for p in pos])
    psi = wavefunction_samples(state, spec, pts, pole_guard=1e-9)
    tamed = psi * np.prod(dist, axis=0)
    out = dict(axes)
    out["psi"] = tamed if cut == "z" else tamed.reshape(n, n)
    return out


# ----------------------------------------------------------------------------
# Export / ingest


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _table_records(table: ScanTable):
    for r in table.rows:
        yield {"sweep_var": r.sweep_var, "value": _fmt(r.value),
               "level_index": str(r.level_index), "energy": _fmt(r.energy),
               "parity": r.parity, "flags": r.flags}


def _crossing_records(records, sweep_var: str):
    for r in records:
        yield {"sweep_var": sweep_var, "value": _fmt(r.sweep_value),
               "gap": _fmt(r.gap), "lower_index": str(r.lower_index),
               "upper_index": str(r.upper_index), "parity_lower": r.parity_lower,
               "parity_upper": r.parity_upper}


def export(obj, fmt: str, path, sweep_var: str = "") -> None:
    """Write a scan table or crossing records as CSV or JSON.

    Column order is fixed; floats carry 17 significant digits so a
    round-trip through text is bit exact.
    """
    if isinstance(obj, ScanTable):
        columns, records = TABLE_COLUMNS, list(_table_records(obj))
    elif isinstance(obj, list) and all(isinstance(r, CrossingRecord) for r in obj):
        columns, records = CROSSING_COLUMNS, list(_crossing_records(obj, sweep_var))
    else:
        raise ExportError(f"cannot export object of type {type(obj).__name__}", path=path)
    try:
        if fmt == "csv":
            with open(path, "w", newline="") as fh:
                writer = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
                writer.writeheader()
                writer.writerows(records)
        elif fmt == "json":
            payload = {"schema_version": SCHEMA_VERSION, "columns": list(columns),
                       "rows": records}
            with open(path, "w") as fh:
                json.dump(payload, fh, indent=1)
                fh.write("\n")
        else:
            raise ExportError(f"unknown export format {fmt!r}", path=path)
    except OSError as exc:
        raise ExportError(f"failed to write {path}: {exc}", path=path) from exc


def ingest_table(path) -> ScanTable:
    """Read back a table exported by :func:`export` (CSV or JSON)."""
    try:
        text = open(path).read()
    except OSError as exc:
        raise ExportError(f"failed to read {path}: {exc}", path=path) from exc
    rows = []
    if str(path).endswith(".json") or text.lstrip().startswith("{"):
        payload = json.loads(text)
        if "schema_version" not in payload:
            raise ExportError("missing schema_version in JSON artifact", path=path)
        records = payload["rows"]
    else:
        records = list(csv.DictReader(text.splitlines()))
    for rec in records:
        rows.append(ScanRow(rec["sweep_var"], float(rec["value"]),
                            int(rec["level_index"]), float(rec["energy"]),
                            rec["parity"], rec.get("flags", "")))
    sweep_var = rows[0].sweep_var if rows else ""
    return ScanTable(sweep_var=sweep_var, rows=tuple(rows))
