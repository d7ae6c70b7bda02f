"""Command-line interface: ``ivtest test`` on a CSV file and ``ivtest simulate``."""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from dataclasses import asdict, dataclass

import numpy as np

from . import __version__
from .bootstrap import prepare, run_test
from .core import (
    COVARIATE_MODES,
    DEFAULT_XI_GRID,
    MODES,
    ConfigError,
    DataError,
    Dataset,
    NuMeasure,
    TestConfig,
    encode_dataset,
)
from .simulation import CATALOG, TABLES, DgpSpec, reproduce_table, warp_speed_mc
from .statistic import empirical_sigma_bound

EXIT_OK, EXIT_DATA, EXIT_CONFIG = 0, 2, 3


@dataclass
class RunReport:
    """Everything needed to audit one test run; serializes to stable JSON."""

    version: str
    seed: int
    config: dict
    nu: dict
    dataset: dict
    result: dict
    timing: dict | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        return cls(**json.loads(text))


def read_csv(path: str, column_map: dict) -> Dataset:
    """Load a CSV with a header row.

    ``column_map`` has keys ``y``, ``d``, ``z`` naming single columns and an
    optional ``x`` listing covariate columns; several covariates are joined
    into one cell label. ``instrument_order`` may be given as well.
    """
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames
            if not header:
                raise DataError(f"{path}: empty file")
            covs = list(column_map.get("x") or [])
            wanted = [column_map["y"], column_map["d"], column_map["z"], *covs]
            missing = [c for c in wanted if c not in header]
            if missing:
                raise DataError(f"{path}: missing column(s) {', '.join(missing)}")
            rows = []
            # header is line 1
            for line, rec in enumerate(reader, start=2):
                raw_y = rec[column_map["y"]]
                try:
                    y = float(raw_y)
                except (TypeError, ValueError):
                    raise DataError(f"{path}, row {line}: {column_map['y']}={raw_y!r} is not numeric") from None
                if not math.isfinite(y):
                    raise DataError(f"{path}, row {line}: {column_map['y']}={raw_y!r} is not finite")
                row = [y, rec[column_map["d"]], rec[column_map["z"]]]
                for c in [column_map["d"], column_map["z"], *covs]:
                    if rec[c] is None or rec[c].strip() == "":
                        raise DataError(f"{path}, row {line}: {c} is empty")
                if covs:
                    row.append("|".join(rec[c] for c in covs))
                rows.append(row)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None
    if not rows:
        raise DataError(f"{path}: no data rows")
    return encode_dataset(rows, column_map.get("instrument_order"))


def parse_c_set(text: str | None) -> tuple:
    if not text:
        return ()
    out = []
    for item in text.split(","):
        parts = item.strip().split(":")
        if len(parts) != 3:
            raise ConfigError(f"--c-set entry {item!r} is not of the form d:z:z'")
        out.append(tuple(parts))
    return tuple(out)


def parse_xi_grid(text: str) -> tuple[float, ...]:
    """``start:stop:step`` ranges (stop inclusive) and single values, comma separated."""
    points = []
    try:
        for item in text.split(","):
            item = item.strip()
            if ":" in item:
                start, stop, step = (float(v) for v in item.split(":"))
                if step <= 0:
                    raise ConfigError("--xi-grid step must be positive")
                count = int(math.floor((stop - start) / step + 1e-9)) + 1
                points.extend(round(start + k * step, 12) for k in range(count))
                points.append(stop)
            else:
                points.append(float(item))
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"cannot parse --xi-grid {text!r}") from None
    return tuple(sorted(set(points)))


def parse_floats(text: str, flag: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise ConfigError(f"cannot parse {flag} {text!r}") from None


def build_nu(args, default_points) -> NuMeasure:
    """Measure from ``--xi``/``--xi-grid`` and ``--nu``."""
    if args.xi is not None:
        points = parse_floats(args.xi, "--xi")
    elif args.xi_grid is not None:
        points = parse_xi_grid(args.xi_grid)
    else:
        points = tuple(default_points)
    kind = args.nu or ("dirac" if len(points) == 1 else "uniform")
    if kind == "dirac":
        if len(points) != 1:
            raise ConfigError("--nu dirac needs exactly one trimming value")
        return NuMeasure.dirac(points[0])
    if kind == "uniform":
        return NuMeasure.uniform(points)
    if args.weights is None:
        raise ConfigError("--nu custom needs --weights")
    weights = parse_floats(args.weights, "--weights")
    if len(weights) != len(points):
        raise ConfigError("--weights must match the number of trimming values")
    order = np.argsort(points)
    return NuMeasure(tuple(float(points[i]) for i in order), tuple(float(weights[i]) for i in order))


def covariate_grid(bound: float) -> tuple[float, ...]:
    """Nine points from 0.1 to 0.9 times ``bound``, then ``bound`` itself."""
    if not 0.0 < bound <= 1.0:
        return DEFAULT_XI_GRID
    return tuple(float(round(f * bound, 12)) for f in np.linspace(0.1, 1.0, 10))


def resolve_threads(value: int | None) -> int:
    if value is None:
        env = os.environ.get("IVTEST_THREADS")
        if env is None:
            return 1
        try:
            value = int(env)
        except ValueError:
            raise ConfigError(f"IVTEST_THREADS={env!r} is not an integer") from None
    if value < 1:
        raise ConfigError("--threads must be at least 1")
    return value


def parse_tau(text: str) -> float:
    if text.lower() in ("inf", "infinity"):
        return math.inf
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid tau {text!r}") from None


def _nu_dict(nu: NuMeasure) -> dict:
    return {"points": list(nu.points), "weights": list(nu.weights)}


def cmd_test(args) -> int:
    threads = resolve_threads(args.threads)
    column_map = {"y": args.y, "d": args.d, "z": args.z, "x": args.covariates}
    if args.instrument_order:
        column_map["instrument_order"] = tuple(args.instrument_order.split(","))
    mode = args.mode
    if args.covariates and mode in ("ordered", "unordered"):
        mode = f"{mode}-with-covariates"
    config = TestConfig(
        mode=mode,
        tau_n=args.tau,
        xi0=args.xi0,
        n_bootstrap=args.bootstrap,
        alpha=args.alpha,
        eta=args.eta,
        seed=args.seed,
        c_set=parse_c_set(args.c_set),
    )
    if mode in COVARIATE_MODES and not args.covariates:
        raise ConfigError(f"mode {mode} needs --covariates")
    dataset = read_csv(args.csv, column_map)
    default = DEFAULT_XI_GRID
    if mode in COVARIATE_MODES and args.xi is None and args.xi_grid is None:
        family, _ = prepare(dataset, config)
        default = covariate_grid(empirical_sigma_bound(dataset, family))
    nu = build_nu(args, default)

    start = time.perf_counter()
    result = run_test(dataset, config, nu, threads=threads)
    elapsed = time.perf_counter() - start

    report = RunReport(
        version=__version__,
        seed=config.seed,
        config=config.to_dict(),
        nu=_nu_dict(nu),
        dataset={"n": dataset.n, "levels": dataset.level_counts()},
        result=result.to_dict(),
        timing={"seconds": elapsed, "threads": threads} if args.timing else None,
    )
    if args.json:
        print(report.to_json())
    else:
        print(f"n = {dataset.n}, mode = {config.mode}, tau = {args.tau:g}, B = {config.n_bootstrap}")
        print(f"trimming values: {', '.join(f'{p:g}' for p in nu.points)}")
        for xi, v in result.per_xi_sup.items():
            print(f"  sup at xi={xi:<8g} {v:.6f}")
        print(f"statistic       {result.ts:.6f}")
        print(f"critical value  {result.critical_value:.6f}")
        print(f"p-value         {result.p_value:.3f}")
        print(f"contact set     {result.contact_set_size} of {result.total_indices}")
        print("decision        " + ("reject instrument validity" if result.reject else "do not reject"))
        for msg in result.diagnostics:
            print(f"note: {msg}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    threads = resolve_threads(args.threads)
    if (args.table is None) == (args.dgp is None):
        raise ConfigError("give exactly one of --table or --dgp")
    if args.table is not None:
        if args.table not in TABLES:
            raise ConfigError(f"unknown table {args.table!r}; choose from {', '.join(sorted(TABLES))}")
        table = reproduce_table(args.table, args.mc, n_override=args.n, seed=args.seed,
                                alpha=args.alpha, xi0=args.xi0, threads=threads)
        print(json.dumps(table.to_dict(), indent=2) if args.json else table.to_text())
        return EXIT_OK

    if args.dgp not in CATALOG:
        raise ConfigError(f"unknown DGP {args.dgp!r}; choose from {', '.join(sorted(CATALOG))}")
    recipe = CATALOG[args.dgp]
    spec = DgpSpec(args.dgp, args.n or recipe.default_n, args.r)
    config = TestConfig(mode=recipe.mode, tau_n=args.tau, xi0=args.xi0, alpha=args.alpha,
                        eta=args.eta, seed=args.seed, c_set=recipe.c_set)
    nu = build_nu(args, recipe.xi_grid)
    res = warp_speed_mc(spec, config, nu, args.mc, seed=args.seed, threads=threads)
    out = {
        "version": __version__,
        "dgp": spec.name,
        "n": spec.n,
        "r_n": spec.r,
        "config": config.to_dict(),
        "nu": _nu_dict(nu),
        "rate": res.rate,
        "mc_se": res.mc_se,
        "n_mc": res.n_mc,
        "critical_value": res.critical_value,
    }
    if args.json:
        print(json.dumps(out, indent=2))
    else:
        print(f"{spec.name}: n = {spec.n}, r = {spec.r:g}, tau = {args.tau:g}, n_mc = {res.n_mc}")
        print(f"rejection rate {res.rate:.3f} (MC s.e. {res.mc_se:.3f}), pooled critical value {res.critical_value:.4f}")
    return EXIT_OK


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--xi", help="trimming value, or comma-separated values")
    p.add_argument("--xi-grid", help="grid such as 0.07:0.3:0.03,1 (ranges include their stop)")
    p.add_argument("--nu", choices=("dirac", "uniform", "custom"), help="measure over the trimming values")
    p.add_argument("--weights", help="comma-separated weights for --nu custom")
    p.add_argument("--tau", type=parse_tau, default=2.0, help="contact-set threshold; 'inf' uses every index")
    p.add_argument("--xi0", type=float, default=0.001)
    p.add_argument("--eta", type=float, default=0.0)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None, help="worker threads (default: $IVTEST_THREADS or 1)")
    p.add_argument("--json", action="store_true", help="machine-readable output")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ivtest", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    t = sub.add_parser("test", help="test instrument validity on a CSV file")
    t.add_argument("--csv", required=True)
    t.add_argument("--y", required=True, help="outcome column")
    t.add_argument("--d", required=True, help="treatment column")
    t.add_argument("--z", required=True, help="instrument column")
    t.add_argument("--covariates", type=lambda s: [c.strip() for c in s.split(",")], default=None,
                   help="comma-separated discrete covariate columns")
    t.add_argument("--mode", choices=MODES, default="ordered")
    t.add_argument("--c-set", help="monotonicity triples d:z:z', comma separated")
    t.add_argument("--instrument-order", help="comma-separated instrument levels, lowest first")
    t.add_argument("--bootstrap", type=int, default=1000)
    t.add_argument("--timing", action="store_true", help="include wall time in the report")
    _add_common(t)
    t.set_defaults(func=cmd_test)

    s = sub.add_parser("simulate", help="warp-speed Monte Carlo rejection rates")
    s.add_argument("--table", help=f"one of {', '.join(sorted(TABLES))}")
    s.add_argument("--dgp", help="design name from the catalog")
    s.add_argument("--n", type=int, default=None, help="sample size")
    s.add_argument("--r", type=float, default=None, help="instrument mixing probability")
    s.add_argument("--mc", type=int, default=300, help="Monte Carlo iterations")
    _add_common(s)
    s.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
