"""Convergence studies: sweep time steps, measure final-time errors, fit slopes, write CSV."""
from __future__ import annotations

import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence, TextIO

import numpy as np

from .integrator import IntegrationError, NewtonSettings, ODESystem, integrate
from .tableau import ButcherTableau, load, parse, serialize

__all__ = [
    "ProblemDef",
    "PROBLEMS",
    "StudySpec",
    "ConvergenceRow",
    "ConvergenceTable",
    "SlopeFit",
    "StudyError",
    "WindowError",
    "build_problem",
    "default_dt_list",
    "dt_sequence",
    "fit_slope",
    "measure_errors",
    "run_study",
    "emit_csv",
    "parse_csv",
]

OBSERVABLES = ("u", "u_x", "u_xx")
_CSV_NAMES = {"u": "err_u", "u_x": "err_ux", "u_xx": "err_uxx"}


class StudyError(RuntimeError):
    """Every row of a study failed."""


class WindowError(ValueError):
    """Fewer than three usable rows inside the slope window."""


@dataclass(frozen=True)
class ProblemDef:
    factory: Callable[..., ODESystem]
    T: float
    defaults: dict
    dt_list: Callable[[float], list[float]]
    window: tuple[float, float]
    observables: tuple[str, ...]


def dt_sequence(T: float, n_values: Iterable[int]) -> list[float]:
    """``T / n`` for distinct integers ``n``, largest step first."""
    ns = sorted({int(n) for n in n_values if int(n) >= 1})
    return [T / n for n in ns]


def _log_counts(T: float, dt_lo: float, dt_hi: float, count: int) -> list[float]:
    ns = np.rint(np.geomspace(T / dt_hi, T / dt_lo, count)).astype(int)
    return dt_sequence(T, ns)


def _make_decay(rate=1.0):
    from .problems import linear_decay
    return linear_decay(float(rate))


def _make_pr(lam=-1e4):
    from .problems import prothero_robinson
    return prothero_robinson(complex(lam) if isinstance(lam, complex) else float(lam))


def _make_schrodinger(N=2000, omega=2 * math.pi, k=5.0):
    from .problems import GridSpec, schrodinger_mol
    return schrodinger_mol(float(omega), float(k), GridSpec(int(N), "dirichlet"))


def _make_burgers(N=2048, nu=0.1):
    from .problems import GridSpec, burgers_mol
    return burgers_mol(float(nu), GridSpec(int(N), "neumann"))


def _make_vdp(mu=500.0, cache_dir=None):
    from .problems import van_der_pol
    return van_der_pol(float(mu), cache_dir=cache_dir)


PROBLEMS: dict[str, ProblemDef] = {
    "decay": ProblemDef(
        _make_decay, 1.0, {"rate": 1.0},
        lambda T: dt_sequence(T, [2**p for p in range(1, 9)]), (1.0 / 128, 1.0 / 8), ("u",)),
    "pr": ProblemDef(
        _make_pr, 10.0, {"lam": -1e4},
        lambda T: _log_counts(T, 1e-5, 1.0, 24), (1e-3, 1e-1), ("u",)),
    "schrodinger": ProblemDef(
        _make_schrodinger, 1.2, {"N": 2000, "omega": 2 * math.pi, "k": 5.0},
        lambda T: dt_sequence(T, [2**p for p in range(4, 16)]),
        (1.2 / 512, 1.2 / 128), OBSERVABLES),
    "burgers": ProblemDef(
        _make_burgers, 1.0, {"N": 2048, "nu": 0.1},
        lambda T: dt_sequence(T, [2**p for p in range(4, 16)]),
        (1.0 / 512, 1.0 / 128), OBSERVABLES),
    "vdp": ProblemDef(
        _make_vdp, 10.0, {"mu": 500.0},
        lambda T: _log_counts(T, 1e-4, 1e-1, 16), (3e-3, 3e-2), ("u",)),
}


def build_problem(name: str, **params) -> ODESystem:
    try:
        pdef = PROBLEMS[name]
    except KeyError:
        raise KeyError(f"unknown problem {name!r}; available: {', '.join(PROBLEMS)}") from None
    given = {k: v for k, v in params.items() if v is not None}
    _check_params(name, given)
    return pdef.factory(**{**pdef.defaults, **given})


def _check_params(name: str, params: Mapping[str, object]) -> None:
    allowed = set(PROBLEMS[name].defaults) | ({"cache_dir"} if name == "vdp" else set())
    bad = sorted(set(params) - allowed)
    if bad:
        raise ValueError(f"problem {name!r} takes no parameter(s) {bad}; known: {sorted(allowed)}")


def default_dt_list(problem: str, T: float | None = None) -> list[float]:
    pdef = PROBLEMS[problem]
    return pdef.dt_list(pdef.T if T is None else T)


@dataclass
class StudySpec:
    scheme: str
    problem: str
    params: dict = field(default_factory=dict)
    dt_list: Sequence[float] | None = None
    observables: Sequence[str] | None = None
    slope_window: tuple[float, float] | None = None
    T: float | None = None
    newton: NewtonSettings = field(default_factory=NewtonSettings)
    tableau: ButcherTableau | None = None

    def resolved(self) -> "StudySpec":
        """Copy with every default filled in and validated."""
        if self.problem not in PROBLEMS:
            raise KeyError(f"unknown problem {self.problem!r}; available: {', '.join(PROBLEMS)}")
        pdef = PROBLEMS[self.problem]
        T = pdef.T if self.T is None else float(self.T)
        dts = list(self.dt_list) if self.dt_list is not None else pdef.dt_list(T)
        if any(not dt > 0 for dt in dts):
            raise ValueError("time steps must be positive")
        dts = sorted(dts, reverse=True)
        obs = tuple(self.observables) if self.observables else pdef.observables
        bad = [o for o in obs if o not in pdef.observables]
        if bad:
            raise ValueError(f"problem {self.problem!r} has no observables {bad}")
        _check_params(self.problem, self.params)
        tab = self.tableau if self.tableau is not None else load(self.scheme)
        return StudySpec(
            scheme=self.scheme, problem=self.problem,
            params={**pdef.defaults, **self.params}, dt_list=dts, observables=obs,
            slope_window=self.slope_window or pdef.window, T=T, newton=self.newton,
            tableau=tab,
        )


@dataclass
class ConvergenceRow:
    dt: float
    errors: dict[str, float]
    steps: int = 0
    failure: str | None = None

    @property
    def ok(self) -> bool:
        return self.failure is None


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    residual: float
    points: int


@dataclass
class ConvergenceTable:
    scheme: str
    problem: str
    params: dict
    T: float
    observables: tuple[str, ...]
    window: tuple[float, float]
    rows: list[ConvergenceRow] = field(default_factory=list)
    slopes: dict[str, SlopeFit | None] = field(default_factory=dict)

    def refit(self) -> None:
        self.slopes = {}
        for obs in self.observables:
            try:
                self.slopes[obs] = fit_slope(self.rows, self.window, obs)
            except WindowError:
                self.slopes[obs] = None

    def slope(self, observable: str = "u") -> float | None:
        fit = self.slopes.get(observable)
        return None if fit is None else fit.slope

    def column(self, observable: str = "u") -> np.ndarray:
        return np.array([r.errors.get(observable, np.nan) for r in self.rows])


def _in_window(dt: float, window: tuple[float, float]) -> bool:
    lo, hi = window
    return lo * (1 - 1e-9) <= dt <= hi * (1 + 1e-9)


def fit_slope(rows: Sequence[ConvergenceRow], window: tuple[float, float],
              observable: str = "u") -> SlopeFit:
    """Least-squares slope of ``log err`` against ``log dt`` inside ``window``.

    Failed rows and non-positive or non-finite errors are skipped.
    """
    pts = [
        (r.dt, r.errors[observable]) for r in rows
        if r.ok and _in_window(r.dt, window)
        and observable in r.errors and np.isfinite(r.errors[observable]) and r.errors[observable] > 0
    ]
    if len(pts) < 3:
        raise WindowError(f"only {len(pts)} usable rows in window {window} for {observable}")
    x = np.log([p[0] for p in pts])
    y = np.log([p[1] for p in pts])
    V = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(V, y, rcond=None)
    resid = y - V @ coef
    return SlopeFit(float(coef[0]), float(np.sqrt(np.mean(resid**2))), len(pts))


def measure_errors(sys: ODESystem, t: float, u: np.ndarray, observables: Sequence[str],
                   reference: np.ndarray | None = None) -> dict[str, float]:
    """Max-norm errors at time ``t``; derivatives act on the grid error."""
    ref = sys.exact(t) if reference is None else reference
    e = np.asarray(sys.grid(t, u)) - np.asarray(sys.grid(t, ref))
    out = {}
    for obs in observables:
        if obs == "u":
            out[obs] = float(np.max(np.abs(e)))
        else:
            out[obs] = float(np.max(np.abs(sys.derivatives[obs](e))))
    return out


def _run_row(args) -> ConvergenceRow:
    tableau_text, problem, params, T, dt, observables, newton = args
    tab = parse(tableau_text)
    sys = build_problem(problem, **params)
    try:
        res = integrate(tab, sys, sys.t0, sys.u0, T, dt, newton)
        errs = measure_errors(sys, T, res.u, observables)
        if not all(np.isfinite(v) for v in errs.values()):
            return ConvergenceRow(dt, errs, res.steps, "non-finite error")
        return ConvergenceRow(dt, errs, res.steps)
    except (IntegrationError, FloatingPointError, ValueError) as exc:
        return ConvergenceRow(dt, {o: math.nan for o in observables}, 0, str(exc))


def run_study(spec: StudySpec, jobs: int = 1) -> ConvergenceTable:
    """Integrate once per time step and tabulate errors and fitted slopes.

    Rows are independent; with ``jobs > 1`` they run in worker processes and
    are returned in the order of ``dt_list`` (largest first).
    """
    spec = spec.resolved()
    text = serialize(spec.tableau)
    if spec.problem == "vdp":
        # build the reference once before fanning out
        build_problem("vdp", **spec.params).exact(spec.T)
    tasks = [(text, spec.problem, spec.params, spec.T, dt, spec.observables, spec.newton)
             for dt in spec.dt_list]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_run_row, tasks))
    else:
        rows = [_run_row(task) for task in tasks]
    if rows and not any(r.ok for r in rows):
        raise StudyError("every row failed: " + "; ".join(f"dt={r.dt:.3g}: {r.failure}" for r in rows))
    table = ConvergenceTable(
        scheme=spec.tableau.name or spec.scheme, problem=spec.problem, params=dict(spec.params),
        T=spec.T, observables=tuple(spec.observables), window=tuple(spec.slope_window), rows=rows,
    )
    table.refit()
    return table


def _g(x: float) -> str:
    return format(float(x), ".17g")


def emit_csv(table: ConvergenceTable, dest: TextIO | None = None,
             extra_header: Mapping[str, object] | None = None) -> str:
    """Write ``#`` header lines then ``dt,err_u[,err_ux,err_uxx]`` rows.

    ``extra_header`` adds ``# key: value`` lines (ignored by :func:`parse_csv`).
    """
    out = io.StringIO()
    out.write(f"# scheme: {table.scheme}\n")
    out.write(f"# problem: {table.problem}\n")
    params = " ".join(f"{k}={v!r}" for k, v in sorted(table.params.items()))
    out.write(f"# params: {params}\n")
    out.write(f"# T: {_g(table.T)}\n")
    out.write(f"# slope_window: {_g(table.window[0])} {_g(table.window[1])}\n")
    for obs in table.observables:
        fit = table.slopes.get(obs)
        if fit is None:
            out.write(f"# slope {obs}: none\n")
        else:
            out.write(f"# slope {obs}: {_g(fit.slope)} residual {_g(fit.residual)} points {fit.points}\n")
    for k, v in (extra_header or {}).items():
        out.write(f"# {k}: {v}\n")
    for r in table.rows:
        if not r.ok:
            out.write(f"# failed dt={_g(r.dt)}: {r.failure}\n")
    out.write(",".join(["dt"] + [_CSV_NAMES[o] for o in table.observables]) + "\n")
    for r in table.rows:
        out.write(",".join([_g(r.dt)] + [_g(r.errors.get(o, math.nan)) for o in table.observables]) + "\n")
    text = out.getvalue()
    if dest is not None:
        dest.write(text)
    return text


def parse_csv(text: str) -> ConvergenceTable:
    """Inverse of :func:`emit_csv` (slopes are refitted from the rows)."""
    meta: dict[str, str] = {}
    body: list[str] = []
    failures: dict[float, str] = {}
    for line in text.splitlines():
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition(":")
            if key.startswith("failed dt="):
                failures[float(key[len("failed dt="):])] = val.strip()
            else:
                meta[key.strip()] = val.strip()
        elif line.strip():
            body.append(line.strip())
    names = {v: k for k, v in _CSV_NAMES.items()}
    header = body[0].split(",") if body else ["dt", "err_u"]
    observables = tuple(names[h] for h in header[1:])
    rows = []
    for line in body[1:]:
        vals = [float(v) for v in line.split(",")]
        rows.append(ConvergenceRow(vals[0], dict(zip(observables, vals[1:])),
                                   failure=failures.get(vals[0])))
    params = {}
    for item in meta.get("params", "").split():
        k, _, v = item.partition("=")
        try:
            params[k] = float(v)
        except ValueError:
            params[k] = v
    lo, hi = (float(v) for v in meta.get("slope_window", "nan nan").split())
    table = ConvergenceTable(
        scheme=meta.get("scheme", ""), problem=meta.get("problem", ""), params=params,
        T=float(meta.get("T", "nan")), observables=observables, window=(lo, hi), rows=rows,
    )
    table.refit()
    return table
