"""Verification suites over parameter grids, JSON reports and CSV sweeps."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from . import chain as ch
from . import evolution as ev
from .errors import QlaxError, UsageError
from .rmatrix import (
    build_r,
    hecke_residual,
    inverse_residual,
    qtrace_residual,
    quantum_trace_matrix,
    triangular_split_residual,
    yang_baxter_residual,
)
from .tensor import (
    commutator,
    embed,
    mat_exp,
    mat_inv,
    partial_trace,
    rel_residual,
    triangular_residual,
)

# Pinned per-check tolerances; a check passes iff residual < tolerance.
TOL = {
    "ybe": 1e-12,
    "hecke": 1e-12,
    "r_inverse": 1e-12,
    "split": 1e-12,
    "qtrace": 1e-11,
    "qtrace_diagonal": 1e-12,
    "qtrace_classical": 1e-15,
    "rtt": 1e-11,
    "ultralocal": 1e-12,
    "tower": 1e-11,
    "cyclicity": 1e-11,
    "prop1": 1e-10,
    "prop5": 1e-10,
    "closure": 1e-11,
    "commzero": 1e-10,
    "factorization": 1e-10,
    "solution": 1e-9,
    "g_ode": 1e-6,
    "triangular": 1e-10,
    "g_commutes": 1e-10,
    "thm2_conj": 1e-11,
    "gauss_recon": 1e-10,
    "gauss_tri": 1e-11,
    "gauge": 1e-9,
    "drift": 1e-10,
    "spectrum": 1e-8,
    "ode_match": 1e-6,
    "ode_order": 0.25,
    "ode_stationary": 1e-12,
}

SUITES = (
    "ybe",
    "rmatrix",
    "rtt",
    "prop1",
    "prop5",
    "thm1",
    "thm2",
    "app1",
    "app2",
    "conservation",
    "ode-oracle",
)
OBSERVABLES = (
    "lax-residual",
    "conservation-drift",
    "factorization-residual",
    "triangularity-residual",
)

FD_EPS = 1e-4
ODE_ORDER_STEPS = (0.25, 0.125, 0.0625)
STATIONARY_FIELD = 1e-12


@dataclass(frozen=True)
class Grid:
    qs: tuple[float, ...] = (0.7, 1.0, 1.3, 2.0)
    sizes: tuple[int, ...] = (1, 2, 3)
    times: tuple[float, ...] = (0.1, 0.5, 1.0)
    tower_depth: int = 3
    ode_t: float = 0.5
    ode_dt: float = 1e-3

    def to_dict(self) -> dict:
        return {
            "q": list(self.qs),
            "n_sites": list(self.sizes),
            "t": list(self.times),
            "tower_depth": self.tower_depth,
            "ode_t": self.ode_t,
            "ode_dt": self.ode_dt,
        }


@dataclass(frozen=True)
class CheckResult:
    name: str
    residual: float
    tolerance: float
    q: float | None = None
    n_sites: int | None = None
    t: float | None = None
    site: int | None = None
    error: str | None = None

    @property
    def passed(self) -> bool:
        return math.isfinite(self.residual) and self.residual < self.tolerance

    @property
    def suite(self) -> str:
        return self.name.split(".", 1)[0]

    def sort_key(self) -> tuple:
        def num(x):
            return (0, 0.0) if x is None else (1, x)

        return (self.suite, num(self.q), num(self.n_sites), num(self.t), num(self.site), self.name)

    def to_dict(self) -> dict:
        out = {
            "name": self.name,
            "q": self.q,
            "n_sites": self.n_sites,
            "t": self.t,
            "site": self.site,
            "residual": self.residual if math.isfinite(self.residual) else None,
            "tolerance": self.tolerance,
            "pass": self.passed,
        }
        if self.error is not None:
            out["error"] = self.error
        return out


@dataclass
class VerificationReport:
    config: dict
    checks: list[CheckResult]
    timings: dict[str, float] = field(default_factory=dict)

    @property
    def summary(self) -> dict:
        passed = sum(c.passed for c in self.checks)
        return {"total": len(self.checks), "passed": passed, "failed": len(self.checks) - passed}

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self, include_timings: bool = False) -> dict:
        out = {
            "config": self.config,
            "checks": [c.to_dict() for c in self.checks],
            "summary": self.summary,
        }
        if include_timings:
            out["timings"] = self.timings
        return out

    def to_json(self, include_timings: bool = False) -> str:
        return json.dumps(self.to_dict(include_timings), indent=2) + "\n"


def _check(name: str, tol_key: str, fn: Callable[[], float], **params) -> CheckResult:
    try:
        value = float(fn())
        err = None
    except (QlaxError, np.linalg.LinAlgError) as exc:
        value, err = math.inf, f"{type(exc).__name__}: {exc}"
    return CheckResult(name=name, residual=value, tolerance=TOL[tol_key], error=err, **params)


# --- per-suite checks ------------------------------------------------------


def _ybe_checks(q: float) -> list[CheckResult]:
    r = build_r(q)
    return [_check("ybe.residual", "ybe", lambda: yang_baxter_residual(r), q=q)]


def _rmatrix_checks(q: float) -> list[CheckResult]:
    r = build_r(q)
    out = [
        _check("rmatrix.hecke", "hecke", lambda: hecke_residual(r), q=q),
        _check("rmatrix.inverse", "r_inverse", lambda: inverse_residual(r), q=q),
        _check("rmatrix.triangular_split", "split", lambda: triangular_split_residual(r), q=q),
        _check("rmatrix.qtrace", "qtrace", lambda: qtrace_residual(r, quantum_trace_matrix(r)), q=q),
    ]

    def offdiag() -> float:
        dm = quantum_trace_matrix(r).dmat
        return float(np.linalg.norm(dm - np.diag(np.diag(dm))))

    out.append(_check("rmatrix.qtrace_diagonal", "qtrace_diagonal", offdiag, q=q))
    if q == 1.0:
        out.append(
            _check(
                "rmatrix.qtrace_classical",
                "qtrace_classical",
                lambda: float(np.max(np.abs(quantum_trace_matrix(r).dmat - np.eye(r.d)))),
                q=q,
            )
        )
    return out


def _rtt_checks(c: ch.ChainSystem, q: float) -> list[CheckResult]:
    p = dict(q=q, n_sites=c.n_sites)
    out = [
        _check("rtt.monodromy", "rtt", lambda: ch.rtt_residual(c.r, c.monodromy), **p),
        _check("rtt.ultralocality", "ultralocal", lambda: ch.ultralocality_residual(c), **p),
        _check("rtt.tower_commute", "tower", lambda: ch.tower_commutator_residual(c), **p),
    ]
    for n in range(1, c.n_sites + 2):
        out.append(_check("rtt.psi", "rtt", lambda n=n: ch.rtt_residual(c.r, c.psi[n - 1]), site=n, **p))
        out.append(
            _check("rtt.trace_cyclicity", "cyclicity", lambda n=n: ch.trace_cyclicity_residual(c, n), site=n, **p)
        )
    for n in range(1, c.n_sites + 1):
        out.append(
            _check("rtt.site", "rtt", lambda n=n: ch.rtt_residual(c.r, c.site_ops[n - 1]), site=n, **p)
        )
    return out


def _prop1_checks(c: ch.ChainSystem, q: float) -> list[CheckResult]:
    p = dict(q=q, n_sites=c.n_sites)
    return [
        _check("prop1.plus", "prop1", lambda: ch.prop1_residuals(c)[0], **p),
        _check("prop1.minus", "prop1", lambda: ch.prop1_residuals(c)[1], **p),
    ]


_SIGNS = (("plus", "+"), ("minus", "-"))


def _prop5_checks(c: ch.ChainSystem, q: float) -> list[CheckResult]:
    p = dict(q=q, n_sites=c.n_sites)
    out = []
    for word, s in _SIGNS:
        for n in range(1, c.n_sites + 1):
            out.append(
                _check(f"prop5.{word}", "prop5", lambda n=n, s=s: ch.prop5_residual(c, n, s), site=n, **p)
            )
        out.append(_check(f"prop5.closure.{word}", "closure", lambda s=s: ch.closure_residual(c, s), **p))
    return out


def _app1_checks(c: ch.ChainSystem, q: float) -> list[CheckResult]:
    def commzero() -> float:
        a = c.one_h() - c.lax.m_minus
        b = c.one_h() - c.lax.m_plus
        return rel_residual(a @ b, b @ a)

    return [_check("app1.commzero", "commzero", commzero, q=q, n_sites=c.n_sites)]


def _g_ode_residual(c: ch.ChainSystem, t: float, sign: str) -> float:
    """Central difference of g_± against the right-hand side of its ODE."""
    tt = ev.solve_lax(c, t)
    if sign == "+":
        g = ev.g_plus
        rhs = ev.lax_m_at(c, tt, "+") @ g(c, t)
    else:
        g = ev.g_minus
        rhs = -(g(c, t) @ ev.lax_m_at(c, tt, "-"))
    deriv = 1j * (g(c, t + FD_EPS).data - g(c, t - FD_EPS).data) / (2 * FD_EPS)
    return rel_residual(deriv, rhs.data)


def _thm1_checks(c: ch.ChainSystem, q: float, t: float) -> list[CheckResult]:
    p = dict(q=q, n_sites=c.n_sites, t=t)

    def factorization() -> float:
        return rel_residual(ev.g_minus(c, t) @ ev.g_plus(c, t), ev.g_full(c, t))

    def solution(which: str) -> float:
        forms = ev.solve_lax_forms(c, t)
        return rel_residual(getattr(forms, which), forms.heisenberg)

    def commutes() -> float:
        g = ev.g_full(c, t)
        return rel_residual(g @ c.monodromy, c.monodromy @ g)

    return [
        _check("thm1.factorization", "factorization", factorization, **p),
        _check("thm1.solution.plus", "solution", lambda: solution("plus"), **p),
        _check("thm1.solution.minus", "solution", lambda: solution("minus"), **p),
        _check("thm1.ode.plus", "g_ode", lambda: _g_ode_residual(c, t, "+"), **p),
        _check("thm1.ode.minus", "g_ode", lambda: _g_ode_residual(c, t, "-"), **p),
        _check(
            "thm1.triangular.plus",
            "triangular",
            lambda: triangular_residual(ev.g_plus(c, t), "a", "lower"),
            **p,
        ),
        _check(
            "thm1.triangular.minus",
            "triangular",
            lambda: triangular_residual(ev.g_minus(c, t), "a", "upper"),
            **p,
        ),
        _check("thm1.g_commutes_T", "g_commutes", commutes, **p),
    ]


def _thm2_static_checks(c: ch.ChainSystem, q: float) -> list[CheckResult]:
    p = dict(q=q, n_sites=c.n_sites)
    out = []
    for word, s in _SIGNS:
        for n in range(1, c.n_sites + 1):
            out.append(
                _check(
                    f"thm2.conjugation.{word}",
                    "thm2_conj",
                    lambda n=n, s=s: ch.thm2_conjugation_residual(c, n, s),
                    site=n,
                    **p,
                )
            )
            out.append(
                _check(
                    f"thm2.conjugation_traced.{word}",
                    "thm2_conj",
                    lambda n=n, s=s: ch.thm2_conjugation_traced_residual(c, n, s),
                    site=n,
                    **p,
                )
            )
    return out


def _thm2_checks(c: ch.ChainSystem, q: float, t: float) -> list[CheckResult]:
    p = dict(q=q, n_sites=c.n_sites, t=t)
    out = []
    for n in range(1, c.n_sites + 2):

        def shift(n=n) -> float:
            m = ch.lax_m_site(c, n, "+") - ch.lax_m_site(c, n, "-")
            return rel_residual(ev.g_site(c, n, t).full, mat_exp(-1j * t * m))

        def factor(n=n) -> float:
            f = ev.g_site(c, n, t)
            return rel_residual(f.minus @ f.plus, f.full)

        out.append(_check("thm2.shift", "solution", shift, site=n, **p))
        out.append(_check("thm2.factorization", "solution", factor, site=n, **p))
    for n in range(1, c.n_sites + 1):

        def chain_sol(which: str, n=n) -> float:
            forms = ev.solve_chain_lax_forms(c, n, t)
            return rel_residual(getattr(forms, which), forms.heisenberg)

        out.append(_check("thm2.chain.plus", "solution", lambda n=n: chain_sol("plus", n), site=n, **p))
        out.append(_check("thm2.chain.minus", "solution", lambda n=n: chain_sol("minus", n), site=n, **p))
    return out


def _app2_checks(c: ch.ChainSystem, q: float, t: float) -> list[CheckResult]:
    p = dict(q=q, n_sites=c.n_sites, t=t)
    g = ev.g_full(c, t)
    gm = ev.g_minus(c, t)
    holder: dict = {}

    def result() -> ev.FactorizationResult:
        if "r" not in holder:
            holder["r"] = ev.gauss_factorize(g, "unit-lower", reference_lower=gm)
        return holder["r"]

    def uniqueness() -> float:
        other = ev.gauss_factorize(g, "unit-upper")
        return triangular_residual(mat_inv(result().lower) @ other.lower, "a", "offdiag")

    return [
        _check("app2.reconstruction", "gauss_recon", lambda: result().reconstruction_residual, **p),
        _check("app2.lower_triangular", "gauss_tri", lambda: result().lower_residual(), **p),
        _check("app2.upper_triangular", "gauss_tri", lambda: result().upper_residual(), **p),
        _check("app2.gauge", "gauge", lambda: result().gauge_residual, **p),
        _check("app2.gauge_uniqueness", "gauge", uniqueness, **p),
    ]


def spectrum_residual(a: np.ndarray, b: np.ndarray) -> float:
    """Max distance between sorted spectra, relative to max(1, spectral radius)."""
    ea = np.sort_complex(np.linalg.eigvals(a))
    eb = np.sort_complex(np.linalg.eigvals(b))
    return float(np.max(np.abs(ea - eb)) / max(1.0, np.max(np.abs(eb))))


def _conservation_checks(c: ch.ChainSystem, q: float, t: float) -> list[CheckResult]:
    p = dict(q=q, n_sites=c.n_sites, t=t)
    out = []
    depth = min(3, c.tower_depth)
    for k in range(1, depth + 1):
        out.append(
            _check(
                f"conservation.h{k}",
                "drift",
                lambda k=k: rel_residual(ev.evolved_tower(c, t)[k - 1], c.ham_tower[k - 1]),
                **p,
            )
        )
    out.append(
        _check(
            "conservation.spectrum",
            "spectrum",
            lambda: spectrum_residual(ev.solve_lax(c, t).data, c.monodromy.data),
            **p,
        )
    )
    return out


def ode_errors(c: ch.ChainSystem, t_end: float, steps: Iterable[float]) -> list[float]:
    exact = ev.solve_lax(c, t_end)
    return [rel_residual(ev.lax_ode_integrate(c, t_end, dt), exact) for dt in steps]


def _ode_checks(c: ch.ChainSystem, q: float, grid: Grid) -> list[CheckResult]:
    p = dict(q=q, n_sites=c.n_sites, t=grid.ode_t)
    out = [
        _check("ode-oracle.match", "ode_match", lambda: ode_errors(c, grid.ode_t, [grid.ode_dt])[0], **p)
    ]
    field_norm = commutator(c.lax.m_plus, c.monodromy).norm()
    if field_norm < STATIONARY_FIELD:
        # stationary flow: RK4 must reproduce T(0) at every step size
        out.append(
            _check(
                "ode-oracle.stationary",
                "ode_stationary",
                lambda: max(ode_errors(c, grid.ode_t, ODE_ORDER_STEPS)),
                **p,
            )
        )
    else:

        def order() -> float:
            errs = ode_errors(c, grid.ode_t, ODE_ORDER_STEPS)
            return abs(math.log2(errs[-2] / errs[-1]) - 4.0)

        out.append(_check("ode-oracle.order", "ode_order", order, **p))
    return out


# --- driver ----------------------------------------------------------------


def thread_count() -> int:
    raw = os.environ.get("QLAX_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"QLAX_THREADS must be an integer, got {raw!r}") from None
    if n < 0:
        raise UsageError(f"QLAX_THREADS must be >= 0, got {n}")
    return n or (os.cpu_count() or 1)


def _map(fn, items: list) -> list:
    workers = min(thread_count(), max(1, len(items)))
    if workers == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _suite_tasks(suite: str, grid: Grid) -> list[Callable[[], list[CheckResult]]]:
    if suite == "ybe":
        return [lambda q=q: _ybe_checks(q) for q in grid.qs]
    if suite == "rmatrix":
        return [lambda q=q: _rmatrix_checks(q) for q in grid.qs]

    per_chain = {
        "rtt": lambda c, q: _rtt_checks(c, q),
        "prop1": lambda c, q: _prop1_checks(c, q),
        "prop5": lambda c, q: _prop5_checks(c, q),
        "app1": lambda c, q: _app1_checks(c, q),
        "ode-oracle": lambda c, q: _ode_checks(c, q, grid),
        "thm1": lambda c, q: [x for t in grid.times for x in _thm1_checks(c, q, t)],
        "thm2": lambda c, q: _thm2_static_checks(c, q)
        + [x for t in grid.times for x in _thm2_checks(c, q, t)],
        "app2": lambda c, q: [x for t in grid.times for x in _app2_checks(c, q, t)],
        "conservation": lambda c, q: [x for t in grid.times for x in _conservation_checks(c, q, t)],
    }
    body = per_chain[suite]
    depth = grid.tower_depth if suite == "conservation" or suite == "rtt" else 1

    def task(q: float, n: int) -> list[CheckResult]:
        try:
            c = ch.build_chain(build_r(q), n, depth)
        except QlaxError as exc:
            return [
                CheckResult(
                    name=f"{suite}.build",
                    residual=math.inf,
                    tolerance=1.0,
                    q=q,
                    n_sites=n,
                    error=f"{type(exc).__name__}: {exc}",
                )
            ]
        return body(c, q)

    return [lambda q=q, n=n: task(q, n) for q in grid.qs for n in grid.sizes]


def run_suite(suite: str, grid: Grid | None = None) -> VerificationReport:
    """Run one suite (or ``"all"``) over ``grid``; failures are recorded, never raised."""
    grid = grid or Grid()
    if suite != "all" and suite not in SUITES:
        raise UsageError(f"unknown suite {suite!r}; choose from {', '.join(SUITES + ('all',))}")
    names = SUITES if suite == "all" else (suite,)
    checks: list[CheckResult] = []
    timings = {}
    for name in names:
        start = time.perf_counter()
        for chunk in _map(lambda task: task(), _suite_tasks(name, grid)):
            checks.extend(chunk)
        timings[name] = time.perf_counter() - start
    checks.sort(key=CheckResult.sort_key)
    config = {"suite": suite, **grid.to_dict()}
    return VerificationReport(config=config, checks=checks, timings=timings)


# --- sweeps ----------------------------------------------------------------


@dataclass(frozen=True)
class SweepRow:
    q: float
    n_sites: int
    t: float
    site: int | None
    observable: str
    value: float


def _observable(name: str, c: ch.ChainSystem, t: float) -> float:
    if name == "lax-residual":
        tt = ev.solve_lax(c, t)
        h_t = partial_trace(tt, "a")
        lhs = commutator(embed(h_t, c.shape), tt)
        return max(
            rel_residual(lhs, commutator(ev.lax_m_at(c, tt, s), tt)) for s in ("+", "-")
        )
    if name == "conservation-drift":
        return max(
            rel_residual(a, b) for a, b in zip(ev.evolved_tower(c, t), c.ham_tower)
        )
    if name == "factorization-residual":
        return rel_residual(ev.g_minus(c, t) @ ev.g_plus(c, t), ev.g_full(c, t))
    if name == "triangularity-residual":
        return max(
            triangular_residual(ev.g_plus(c, t), "a", "lower"),
            triangular_residual(ev.g_minus(c, t), "a", "upper"),
        )
    raise UsageError(f"unknown observable {name!r}; choose from {', '.join(OBSERVABLES)}")


def sweep(observable: str, grid: Grid | None = None) -> list[SweepRow]:
    grid = grid or Grid()
    if observable not in OBSERVABLES:
        raise UsageError(f"unknown observable {observable!r}; choose from {', '.join(OBSERVABLES)}")
    depth = grid.tower_depth if observable == "conservation-drift" else 1

    def point(qn: tuple[float, int]) -> list[SweepRow]:
        q, n = qn
        c = ch.build_chain(build_r(q), n, depth)
        return [SweepRow(q, n, t, None, observable, _observable(observable, c, t)) for t in grid.times]

    pts = [(q, n) for q in grid.qs for n in grid.sizes]
    rows = [row for chunk in _map(point, pts) for row in chunk]
    rows.sort(key=lambda r: (r.q, r.n_sites, r.t))
    return rows


CSV_HEADER = ("q", "n_sites", "t", "site", "observable", "value")


def format_value(x: float) -> str:
    return f"{x:.9e}"


def rows_to_csv(rows: Iterable[SweepRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in rows:
        writer.writerow(
            [repr(float(r.q)), r.n_sites, repr(float(r.t)), "" if r.site is None else r.site,
             r.observable, format_value(r.value)]
        )
    return buf.getvalue()
