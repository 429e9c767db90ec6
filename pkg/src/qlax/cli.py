"""Command-line driver: ``qlax {verify,simulate,factorize,sweep}``.

Exit codes: 0 all checks pass, 1 some check failed, 2 usage error, 3 I/O error.
Precedence of settings: command-line flag > ``--config`` file > built-in default.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass

import numpy as np

from . import chain as ch
from . import evolution as ev
from .errors import CapacityError, ParameterError, QlaxError
from .report import (
    OBSERVABLES,
    SUITES,
    TOL,
    Grid,
    SweepRow,
    rows_to_csv,
    run_suite,
    sweep,
)
from .rmatrix import build_r
from .tensor import aux_blocks, identity, rel_residual

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3

DEFAULTS = {
    "q": 1.3,
    "sites": 2,
    "tower_depth": 3,
    "t": [0.1, 0.5, 1.0],
    "tol": 1e-9,
    "suite": "all",
    "observable": "lax-residual",
    "out": None,
    "format": None,
    "full_grid": False,
}

_CONFIG_KEYS = {
    "q": float,
    "sites": int,
    "tower-depth": int,
    "t": lambda s: [float(x) for x in s.split(",") if x.strip()],
    "tol": float,
    "suite": str,
    "observable": str,
    "out": str,
    "format": str,
    "full-grid": lambda s: s.strip().lower() in ("1", "true", "yes", "on"),
}


class _IOFailure(Exception):
    pass


@dataclass
class CliConfig:
    q: float
    n_sites: int
    tower_depth: int
    times: list[float]
    tolerance: float
    suite: str
    observable: str
    out: str | None
    format: str | None
    full_grid: bool

    def grid(self) -> Grid:
        if self.full_grid:
            return Grid(tower_depth=self.tower_depth)
        return Grid(
            qs=(self.q,),
            sizes=(self.n_sites,),
            times=tuple(self.times),
            tower_depth=self.tower_depth,
        )

    def echo(self) -> dict:
        return {
            "q": self.q,
            "n_sites": self.n_sites,
            "tower_depth": self.tower_depth,
            "t": list(self.times),
            "tol": self.tolerance,
        }


def read_config_file(path: str) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise _IOFailure(f"cannot read config {path}: {exc}") from exc
    values = {}
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value")
        key, val = (s.strip() for s in line.split("=", 1))
        key = key.replace("_", "-")
        if key not in _CONFIG_KEYS:
            raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            values[key.replace("-", "_")] = _CONFIG_KEYS[key](val)
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: bad value for {key}: {exc}") from None
    return values


def _common_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--q", type=float, help=f"deformation parameter, nonzero (default: {DEFAULTS['q']})")
    p.add_argument("--sites", type=int, help=f"chain length N, 1..{ch.MAX_SITES} (default: {DEFAULTS['sites']})")
    p.add_argument(
        "--tower-depth", type=int, dest="tower_depth",
        help=f"number of trace-tower charges h_k (default: {DEFAULTS['tower_depth']})",
    )
    p.add_argument(
        "--t", type=float, action="append",
        help="time point, repeatable, |t| <= 2 (default: 0.1 0.5 1.0)",
    )
    p.add_argument(
        "--tol", type=float,
        help=f"pass threshold for simulate and sweep values (default: {DEFAULTS['tol']})",
    )
    p.add_argument("--out", help="output path (default: stdout)")
    p.add_argument("--format", choices=("json", "csv"), help="output format (default: per subcommand)")
    p.add_argument("--config", help="key=value config file mirroring these flags (default: none)")
    p.add_argument(
        "--full-grid", action="store_true", default=None, dest="full_grid",
        help="use q in {0.7,1,1.3,2}, N in {1,2,3}, t in {0.1,0.5,1} (default: off)",
    )
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qlax",
        description="Verify quantized Lax equations and their factorized solutions on a q-deformed chain.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common_flags()

    v = sub.add_parser("verify", parents=[common], help="run a verification suite, write a JSON report")
    v.add_argument(
        "--suite", choices=SUITES + ("all",),
        help=f"suite to run (default: {DEFAULTS['suite']})",
    )
    v.add_argument("--observable", help=argparse.SUPPRESS)

    s = sub.add_parser("simulate", parents=[common], help="time series of T(t) and L^n(t) entries")
    s.add_argument("--suite", help=argparse.SUPPRESS)
    s.add_argument("--observable", help=argparse.SUPPRESS)

    f = sub.add_parser("factorize", parents=[common], help="block Gauss factorization of g(t)")
    f.add_argument("--suite", help=argparse.SUPPRESS)
    f.add_argument("--observable", help=argparse.SUPPRESS)

    w = sub.add_parser("sweep", parents=[common], help="tabulate one observable over a grid")
    w.add_argument(
        "--observable", choices=OBSERVABLES,
        help=f"quantity to tabulate (default: {DEFAULTS['observable']})",
    )
    w.add_argument("--suite", help=argparse.SUPPRESS)
    return parser


def resolve_config(args: argparse.Namespace, parser: argparse.ArgumentParser) -> CliConfig:
    merged = dict(DEFAULTS)
    if args.config:
        try:
            merged.update(read_config_file(args.config))
        except ValueError as exc:
            parser.error(f"--config: {exc}")
    for key in DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            merged[key] = val
    cfg = CliConfig(
        q=merged["q"],
        n_sites=merged["sites"],
        tower_depth=merged["tower_depth"],
        times=list(merged["t"]),
        tolerance=merged["tol"],
        suite=merged["suite"],
        observable=merged["observable"],
        out=merged["out"],
        format=merged["format"],
        full_grid=bool(merged["full_grid"]),
    )
    if cfg.q == 0 or not np.isfinite(cfg.q):
        parser.error(f"--q must be finite and nonzero, got {cfg.q}")
    if not 1 <= cfg.n_sites <= ch.MAX_SITES:
        parser.error(f"--sites must be in 1..{ch.MAX_SITES}, got {cfg.n_sites}")
    if cfg.tower_depth < 1:
        parser.error(f"--tower-depth must be >= 1, got {cfg.tower_depth}")
    if not cfg.times:
        parser.error("--t: at least one time point is required")
    if not all(np.isfinite(t) for t in cfg.times):
        parser.error(f"--t values must be finite, got {cfg.times}")
    if not cfg.tolerance > 0:
        parser.error(f"--tol must be positive, got {cfg.tolerance}")
    if args.command == "verify" and cfg.suite not in SUITES + ("all",):
        parser.error(f"--suite: unknown suite {cfg.suite!r}")
    if args.command == "sweep" and cfg.observable not in OBSERVABLES:
        parser.error(f"--observable: unknown observable {cfg.observable!r}")
    if cfg.format not in (None, "json", "csv"):
        parser.error(f"--format must be json or csv, got {cfg.format!r}")
    return cfg


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    try:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise _IOFailure(f"cannot write {out}: {exc}") from exc


def _rows_json(config: dict, rows: list[SweepRow]) -> str:
    payload = {
        "config": config,
        "rows": [
            {"q": r.q, "n_sites": r.n_sites, "t": r.t, "site": r.site,
             "observable": r.observable, "value": r.value}
            for r in rows
        ],
    }
    return json.dumps(payload, indent=2) + "\n"


def cmd_verify(cfg: CliConfig) -> int:
    report = run_suite(cfg.suite, cfg.grid())
    if cfg.format == "csv":
        rows = [
            SweepRow(c.q if c.q is not None else float("nan"), c.n_sites or 0,
                     c.t if c.t is not None else float("nan"), c.site, c.name, c.residual)
            for c in report.checks
        ]
        _emit(rows_to_csv(rows), cfg.out)
    else:
        _emit(report.to_json(), cfg.out)
    s = report.summary
    print(f"{cfg.suite}: {s['passed']}/{s['total']} checks passed", file=sys.stderr)
    for c in report.checks:
        if not c.passed:
            print(f"FAIL {c.name} q={c.q} N={c.n_sites} t={c.t} site={c.site} "
                  f"residual={c.residual:.3e} tol={c.tolerance:.1e}", file=sys.stderr)
    return EXIT_OK if report.ok else EXIT_FAIL


def _block_entries(x, prefix: str) -> dict[str, complex]:
    """The [0, 0] site entry of every aux block of ``x``."""
    blocks = aux_blocks(x, "a")
    d = blocks.shape[0]
    return {f"{prefix}_{i}{j}": complex(blocks[i, j, 0, 0]) for i in range(d) for j in range(d)}


def simulate_rows(cfg: CliConfig) -> list[SweepRow]:
    rows: list[SweepRow] = []
    grid = cfg.grid()
    for q in grid.qs:
        for n_sites in grid.sizes:
            c = ch.build_chain(build_r(q), n_sites, 1)
            for t in grid.times:
                forms = ev.solve_lax_forms(c, t)
                entries = [(None, _block_entries(forms.plus, "T"))]
                residuals = [(None, "T.residual", rel_residual(forms.plus, forms.heisenberg))]
                for n in range(1, n_sites + 1):
                    lf = ev.solve_chain_lax_forms(c, n, t)
                    entries.append((n, _block_entries(lf.plus, "L")))
                    residuals.append((n, "L.residual", rel_residual(lf.plus, lf.heisenberg)))
                for site, vals in entries:
                    for name, z in vals.items():
                        rows.append(SweepRow(q, n_sites, t, site, f"{name}.re", z.real))
                        rows.append(SweepRow(q, n_sites, t, site, f"{name}.im", z.imag))
                for site, name, val in residuals:
                    rows.append(SweepRow(q, n_sites, t, site, name, val))
    return rows


def cmd_simulate(cfg: CliConfig) -> int:
    rows = simulate_rows(cfg)
    if cfg.format == "json":
        _emit(_rows_json(cfg.echo(), rows), cfg.out)
    else:
        _emit(rows_to_csv(rows), cfg.out)
    worst = max((r.value for r in rows if r.observable.endswith("residual")), default=0.0)
    print(f"simulate: max residual {worst:.3e} (tol {cfg.tolerance:.1e})", file=sys.stderr)
    return EXIT_OK if worst < cfg.tolerance else EXIT_FAIL


def factorize_results(cfg: CliConfig) -> list[dict]:
    results = []
    grid = cfg.grid()
    for q in grid.qs:
        for n_sites in grid.sizes:
            c = ch.build_chain(build_r(q), n_sites, 1)
            one = identity(c.shape)
            for t in grid.times:
                entry = {"q": q, "n_sites": n_sites, "t": t}
                try:
                    fr = ev.gauss_factorize(ev.g_full(c, t), "unit-lower", reference_lower=ev.g_minus(c, t))
                except QlaxError as exc:
                    entry.update(error=f"{type(exc).__name__}: {exc}", **{"pass": False})
                    results.append(entry)
                    continue
                entry.update(
                    reconstruction_residual=fr.reconstruction_residual,
                    lower_triangular_residual=fr.lower_residual(),
                    upper_triangular_residual=fr.upper_residual(),
                    gauge_residual=fr.gauge_residual,
                    lower_identity_residual=rel_residual(fr.lower, one),
                    upper_identity_residual=rel_residual(fr.upper, one),
                )
                entry["pass"] = bool(
                    fr.reconstruction_residual < TOL["gauss_recon"]
                    and fr.lower_residual() < TOL["gauss_tri"]
                    and fr.upper_residual() < TOL["gauss_tri"]
                    and fr.gauge_residual < TOL["gauge"]
                )
                results.append(entry)
    return results


def cmd_factorize(cfg: CliConfig) -> int:
    results = factorize_results(cfg)
    passed = sum(r["pass"] for r in results)
    payload = {
        "config": cfg.echo(),
        "tolerances": {
            "reconstruction": TOL["gauss_recon"],
            "triangular": TOL["gauss_tri"],
            "gauge": TOL["gauge"],
        },
        "results": results,
        "summary": {"total": len(results), "passed": passed, "failed": len(results) - passed},
    }
    if cfg.format == "csv":
        rows = [
            SweepRow(r["q"], r["n_sites"], r["t"], None, key, r[key])
            for r in results
            for key in sorted(r)
            if key.endswith("_residual")
        ]
        _emit(rows_to_csv(rows), cfg.out)
    else:
        _emit(json.dumps(payload, indent=2) + "\n", cfg.out)
    print(f"factorize: {passed}/{len(results)} time points passed", file=sys.stderr)
    return EXIT_OK if passed == len(results) else EXIT_FAIL


def cmd_sweep(cfg: CliConfig) -> int:
    rows = sweep(cfg.observable, cfg.grid())
    if cfg.format == "json":
        _emit(_rows_json({**cfg.echo(), "observable": cfg.observable}, rows), cfg.out)
    else:
        _emit(rows_to_csv(rows), cfg.out)
    worst = max((r.value for r in rows), default=0.0)
    print(f"sweep {cfg.observable}: max {worst:.3e} (tol {cfg.tolerance:.1e})", file=sys.stderr)
    return EXIT_OK if worst < cfg.tolerance else EXIT_FAIL


COMMANDS = {
    "verify": cmd_verify,
    "simulate": cmd_simulate,
    "factorize": cmd_factorize,
    "sweep": cmd_sweep,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args, parser)
        return COMMANDS[args.command](cfg)
    except _IOFailure as exc:
        print(f"qlax: {exc}", file=sys.stderr)
        return EXIT_IO
    except (CapacityError, ParameterError) as exc:
        print(f"qlax: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except QlaxError as exc:
        print(f"qlax: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
