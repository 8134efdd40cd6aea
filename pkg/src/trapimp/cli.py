"""Command-line interface: spectra, sweeps, crossings, bound states, cuts.

Configuration is a JSON file; every quantity is dimensionless (lengths in
l0, energies in hbar*omega).  An optional ``physical`` block with the atom
mass and trap frequency converts units at the output boundary only.

Exit codes: 0 success, 2 configuration error, 3 solver failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from .errors import ConfigurationError, ExportError, TrapImpError
from .freespace import bound_branches
from .scan import (
    CROSSING_COLUMNS,
    ScanSpec,
    ScanRow,
    ScanTable,
    detect_crossings,
    export,
    run_scan,
    wavefunction_cut,
)
from .solver import (
    RootScanOptions,
    SystemSpec,
    find_roots,
    normalize,
    solve_state,
    unaffected_levels,
)
from .variational import solve_variational, three_state_basis, two_state_basis

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_IO = 4

HBAR = 1.054571817e-34  # J s


def oscillator_scales(mass_kg: float, trap_frequency_hz: float) -> dict:
    """l0 (meters) and E0 (joules) for dimensional restoration at the boundary."""
    if mass_kg <= 0 or trap_frequency_hz <= 0:
        raise ConfigurationError("physical block needs positive mass and frequency")
    omega = 2.0 * math.pi * trap_frequency_hz
    return {"l0_m": math.sqrt(HBAR / (mass_kg * omega)), "E0_J": HBAR * omega,
            "omega_rad_s": omega}


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict) or "impurities" not in cfg:
        raise ConfigurationError("config must be an object with an 'impurities' list")
    return cfg


def system_from_config(cfg: dict) -> SystemSpec:
    imps = cfg["impurities"]
    if not isinstance(imps, list) or not imps:
        raise ConfigurationError("'impurities' must be a non-empty list")
    positions, lengths = [], []
    for entry in imps:
        try:
            positions.append(tuple(float(c) for c in entry["position"]))
            a = entry["scattering_length"]
            lengths.append(math.inf if a in ("inf", "unitary") else float(a))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigurationError(f"bad impurity entry {entry!r}: {exc}") from exc
        if len(positions[-1]) != 3:
            raise ConfigurationError("impurity positions need three components")
    return SystemSpec(positions=tuple(positions), scattering_lengths=tuple(lengths))


def solver_options(cfg: dict, args) -> tuple[float, float, RootScanOptions]:
    sol = dict(cfg.get("solver", {}))
    e_min = float(args.e_min if args.e_min is not None else sol.get("e_min", -6.0))
    e_max = float(args.e_max if args.e_max is not None else sol.get("e_max", 6.0))
    opts = RootScanOptions(grid_per_unit=int(sol.get("grid_per_unit", 400)))
    return e_min, e_max, opts


def scan_from_config(cfg: dict, args) -> ScanSpec:
    sc = dict(cfg.get("scan", {}))
    for name in ("variable", "lo", "hi", "steps"):
        v = getattr(args, name, None)
        if v is not None:
            sc[name] = v
    if "variable" not in sc:
        raise ConfigurationError("scan needs a 'variable' (config or --variable)")
    sol = dict(cfg.get("solver", {}))
    e_min = float(args.e_min if args.e_min is not None else sol.get("e_min", -6.0))
    e_max = float(args.e_max if args.e_max is not None else sol.get("e_max", 6.0))
    return ScanSpec(variable=sc["variable"], lo=float(sc["lo"]), hi=float(sc["hi"]),
                    steps=int(sc["steps"]), fixed=dict(sc.get("fixed", {})),
                    e_min=e_min, e_max=e_max,
                    include_free=bool(sc.get("include_free", args.include_free)))


def _emit(obj, args, sweep_var=""):
    if args.output:
        fmt = "json" if str(args.output).endswith(".json") else "csv"
        export(obj, fmt, args.output, sweep_var=sweep_var)
        print(f"wrote {args.output}")
    else:
        if isinstance(obj, ScanTable):
            print(",".join(("sweep_var", "value", "level_index", "energy", "parity", "flags")))
            for r in obj.rows:
                print(f"{r.sweep_var},{r.value:.17g},{r.level_index},"
                      f"{r.energy:.17g},{r.parity},{r.flags}")
        else:
            print(",".join(CROSSING_COLUMNS))
            for r in obj:
                print(f"{sweep_var},{r.sweep_value:.17g},{r.gap:.17g},"
                      f"{r.lower_index},{r.upper_index},{r.parity_lower},{r.parity_upper}")


def cmd_spectrum(args) -> int:
    cfg = load_config(args.config)
    spec = system_from_config(cfg)
    e_min, e_max, opts = solver_options(cfg, args)
    states = find_roots(spec, e_min, e_max, opts)
    rows = [ScanRow("none", 0.0, i, s.energy, s.parity, "|".join(s.flags))
            for i, s in enumerate(states)]
    if args.include_unaffected:
        for energy, mult in unaffected_levels(spec, e_min, e_max):
            rows.append(ScanRow("none", 0.0, -1, energy, "none",
                                f"unaffected:x{mult}"))
    table = ScanTable(sweep_var="none", rows=tuple(rows))
    _emit(table, args)
    if "physical" in cfg:
        scales = oscillator_scales(cfg["physical"]["mass_kg"],
                                   cfg["physical"]["trap_frequency_hz"])
        print(f"# l0 = {scales['l0_m']:.6e} m, E0 = {scales['E0_J']:.6e} J")
    return EXIT_OK


def cmd_scan(args) -> int:
    cfg = load_config(args.config)
    spec = system_from_config(cfg)
    scan = scan_from_config(cfg, args)
    _, _, opts = solver_options(cfg, args)
    table = run_scan(scan, spec, opts)
    _emit(table, args)
    return EXIT_OK


def cmd_crossings(args) -> int:
    cfg = load_config(args.config)
    spec = system_from_config(cfg)
    scan = scan_from_config(cfg, args)
    _, _, opts = solver_options(cfg, args)
    table = run_scan(scan, spec, opts)
    records = detect_crossings(table, spec=spec, scan=scan, options=opts)
    _emit(records, args, sweep_var=scan.variable)
    return EXIT_OK


def cmd_bound_states(args) -> int:
    cfg = load_config(args.config)
    spec = system_from_config(cfg)
    d = spec.symmetric_pair_half_separation()
    if d is None:
        raise ConfigurationError("bound-states needs a symmetric on-axis pair")
    a = spec.scattering_lengths[0]
    if math.isinf(a):
        raise ConfigurationError("bound-states needs a finite scattering length")
    lo = args.lo if args.lo is not None else max(0.05, d / 4.0)
    hi = args.hi if args.hi is not None else 2.0 * d
    steps = args.steps if args.steps is not None else 41
    d_values = np.linspace(lo / 2.0, hi / 2.0, steps)  # sweep is in 2d
    rows = []
    for branch in bound_branches(a, d_values):
        for dd, energy, kappa in branch.samples:
            rows.append(ScanRow("separation_2d", 2.0 * dd, -1, energy,
                                branch.parity, f"free_space|kappa={kappa:.17g}"))
    table = ScanTable(sweep_var="separation_2d", rows=tuple(rows))
    _emit(table, args)
    return EXIT_OK


def cmd_variational(args) -> int:
    cfg = load_config(args.config)
    spec = system_from_config(cfg)
    scan = scan_from_config(cfg, args)
    if scan.variable != "separation_2d":
        raise ConfigurationError("variational sweep supports separation_2d")
    rows = []
    from .scan import spec_for_sweep_value
    for value in scan.values():
        point = spec_for_sweep_value(scan, spec, float(value))
        basis = three_state_basis(point) if args.states == 3 else two_state_basis(point)
        sol = solve_variational(basis, point)
        for i, (energy, parity) in enumerate(zip(sol.energies, sol.parities)):
            rows.append(ScanRow(scan.variable, float(value), i, energy, parity,
                                f"variational_{args.states}state"))
    table = ScanTable(sweep_var=scan.variable, rows=tuple(rows))
    _emit(table, args)
    return EXIT_OK


def cmd_wavefunction(args) -> int:
    cfg = load_config(args.config)
    spec = system_from_config(cfg)
    e_min, e_max, opts = solver_options(cfg, args)
    states = find_roots(spec, e_min, e_max, opts)
    if not states:
        raise ConfigurationError("no states in the energy window")
    if not 0 <= args.state_index < len(states):
        raise ConfigurationError(
            f"state index {args.state_index} outside 0..{len(states) - 1}")
    st = normalize(solve_state(spec, states[args.state_index].energy), spec)
    cut = wavefunction_cut(st, spec, cut=args.cut, rendering=args.rendering,
                           extent=args.extent, n=args.points)
    payload = {"schema_version": 1, "energy": st.energy, "parity": st.parity,
               "cut": args.cut, "rendering": args.rendering,
               "axes": {k: list(map(float, v)) for k, v in cut.items()
                        if k in ("x", "z")},
               "psi": np.asarray(cut["psi"]).tolist()}
    try:
        if args.output:
            with open(args.output, "w") as fh:
                json.dump(payload, fh, indent=1)
                fh.write("\n")
            print(f"wrote {args.output}")
        else:
            json.dump(payload, sys.stdout, indent=1)
            print()
    except OSError as exc:
        raise ExportError(f"failed to write {args.output}: {exc}", path=args.output) from exc
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="trapimp",
        description="Spectra of a trapped atom coupled to static zero-range impurities")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="JSON configuration file")
        p.add_argument("-o", "--output", default=None,
                       help="output file (.csv or .json); stdout if omitted")
        p.add_argument("--e-min", type=float, default=None)
        p.add_argument("--e-max", type=float, default=None)

    p = sub.add_parser("spectrum", help="eigenenergies for one configuration")
    common(p)
    p.add_argument("--include-unaffected", action="store_true",
                   help="append symmetry-protected unshifted oscillator levels")
    p.set_defaults(fn=cmd_spectrum)

    def scanargs(p):
        common(p)
        p.add_argument("--variable", choices=("separation_2d", "scattering_a", "asym_dz"))
        p.add_argument("--lo", type=float, default=None)
        p.add_argument("--hi", type=float, default=None)
        p.add_argument("--steps", type=int, default=None)
        p.add_argument("--include-free", action="store_true",
                       help="append free-space bound branches")

    p = sub.add_parser("scan", help="sweep a parameter and export the levels")
    scanargs(p)
    p.set_defaults(fn=cmd_scan)

    p = sub.add_parser("crossings", help="detect avoided crossings along a sweep")
    scanargs(p)
    p.set_defaults(fn=cmd_crossings)

    p = sub.add_parser("bound-states", help="free-space bound branches vs separation")
    scanargs(p)
    p.set_defaults(fn=cmd_bound_states)

    p = sub.add_parser("variational", help="two/three-state variational sweep")
    scanargs(p)
    p.add_argument("--states", type=int, choices=(2, 3), default=3)
    p.set_defaults(fn=cmd_variational)

    p = sub.add_parser("wavefunction", help="sample a stationary state")
    common(p)
    p.add_argument("--state-index", type=int, default=0)
    p.add_argument("--cut", choices=("z", "xz"), default="z")
    p.add_argument("--rendering", choices=("raw", "pole_tamed"), default="pole_tamed")
    p.add_argument("--extent", type=float, default=5.0)
    p.add_argument("--points", type=int, default=201)
    p.set_defaults(fn=cmd_wavefunction)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ExportError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except TrapImpError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    raise SystemExit(main())
