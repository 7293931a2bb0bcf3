"""Search for stiffly accurate DIRK schemes with a prescribed order and WSO eigenvector order.

Decision variables are the lower triangle of ``A`` (diagonal included),
row by row; ``b`` is the last row of ``A`` and ``c`` its row sums. Each
start projects random draws onto the equality constraints until one passes
verification, then refines it with a quadratic-penalty Nelder-Mead descent
on the truncation-error objective and projects again. Nothing is returned unless :func:`wsodirk.analysis.analyze`
confirms the requested properties.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares, minimize

from . import analysis
from .analysis import ORDER_TREES
from .tableau import ButcherTableau

__all__ = [
    "SearchSpec",
    "SearchResult",
    "SearchFailure",
    "MAX_EIGENVECTOR_ORDER",
    "constraint_residuals",
    "params_from_tableau",
    "tableau_from_params",
    "search",
    "verify",
]

log = logging.getLogger(__name__)

# DIRK schemes with invertible A satisfy the eigenvector criterion at most to order 3.
MAX_EIGENVECTOR_ORDER = 3


class SearchFailure(RuntimeError):
    """No verified scheme was found within the budget."""

    def __init__(self, msg: str, best_residuals: dict[str, float] | None = None):
        super().__init__(msg)
        self.best_residuals = best_residuals or {}


@dataclass(frozen=True)
class SearchSpec:
    s: int
    p: int
    qe: int
    multistarts: int = 8
    seed: int = 0
    eq_weight: float = 1e4
    ineq_weight: float = 1e4
    bounds: tuple[float, float] = (-4.0, 4.0)
    diag_min: float = 1e-3
    nm_maxiter: int = 4000
    max_draws: int = 40
    tol: float = analysis.DEFAULT_TOL
    imag_samples: int = 256

    def validate(self) -> None:
        if self.qe > MAX_EIGENVECTOR_ORDER:
            raise ValueError(
                f"qe={self.qe} is impossible: DIRK schemes with invertible A satisfy the "
                f"WSO eigenvector criterion at most to order {MAX_EIGENVECTOR_ORDER}"
            )
        if self.s < 1 or self.p < 1 or self.qe < 1:
            raise ValueError("s, p and qe must be positive")
        if self.p > 4:
            raise ValueError("order conditions are available through p = 4")
        if self.multistarts < 1 or self.max_draws < 1:
            raise ValueError("multistarts and max_draws must be >= 1")
        if not self.diag_min > 0:
            raise ValueError("diag_min must be positive")


@dataclass
class SearchResult:
    tableau: ButcherTableau
    report: analysis.SchemeReport
    objective: float
    start: int
    residuals: dict[str, float] = field(default_factory=dict)


def _n_params(s: int) -> int:
    return s * (s + 1) // 2


def tableau_from_params(x: np.ndarray, s: int, name: str = "") -> ButcherTableau:
    A = np.zeros((s, s))
    A[np.tril_indices(s)] = x
    return ButcherTableau(A, A[-1].copy(), name=name)


def params_from_tableau(t: ButcherTableau) -> np.ndarray:
    if not t.is_dirk:
        raise ValueError("search parameters describe DIRK tableaux only")
    return t.A[np.tril_indices(t.s)].copy()


def _imag_samples(n: int) -> np.ndarray:
    return 1j * np.logspace(-3, 6, n)


def _equalities(A, b, c, spec: SearchSpec) -> dict[str, float]:
    res = {f"order[{label}]": float(f(A, b, c)) for label, k, f in ORDER_TREES if k <= spec.p}
    mu = A[0, 0]
    for j in range(2, spec.qe + 1):
        tau = A @ c ** (j - 1) - c**j / j
        ev = A @ tau - mu * tau
        for i in range(1, len(b)):
            res[f"eig[{j}][{i + 1}]"] = float(ev[i])
        res[f"btau[{j}]"] = float(b @ tau)
    return res


def _inequalities(A, b, spec: SearchSpec, zs: np.ndarray) -> dict[str, float]:
    s = len(b)
    res = {f"diag[{i + 1}]": max(0.0, spec.diag_min - A[i, i]) for i in range(s)}
    M = np.eye(s)[None] - zs[:, None, None] * A[None]
    with np.errstate(all="ignore"):
        try:
            x = np.linalg.solve(M, np.ones((len(zs), s, 1), dtype=complex))[..., 0]
            R = np.abs(1.0 + zs * (x @ b))
            excess = float(np.max(R)) - 1.0
        except np.linalg.LinAlgError:
            excess = np.inf
    res["astab"] = max(0.0, excess) if np.isfinite(excess) else 1e6
    return res


def constraint_residuals(x, spec: SearchSpec) -> dict[str, float]:
    """Named constraint residuals at parameter vector ``x``.

    Equality residuals are signed; inequality residuals (``diag[i]``,
    ``astab``) are violations, zero when satisfied.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (_n_params(spec.s),):
        raise ValueError(f"expected {_n_params(spec.s)} parameters for s={spec.s}, got {x.shape}")
    s = spec.s
    A = np.zeros((s, s))
    A[np.tril_indices(s)] = x
    b = A[-1]
    c = A.sum(axis=1)
    return {**_equalities(A, b, c, spec), **_inequalities(A, b, spec, _imag_samples(spec.imag_samples))}


def _split(res: dict[str, float]) -> tuple[np.ndarray, np.ndarray]:
    eq = np.array([v for k, v in res.items() if not (k.startswith("diag") or k == "astab")])
    ineq = np.array([v for k, v in res.items() if k.startswith("diag") or k == "astab"])
    return eq, ineq


def _objective(x: np.ndarray, spec: SearchSpec) -> float:
    if spec.p > 3:
        return 0.0  # no order-5 trees; p = 4 searches are feasibility only
    s = spec.s
    A = np.zeros((s, s))
    A[np.tril_indices(s)] = x
    b, c = A[-1], A.sum(axis=1)
    return float(np.linalg.norm([f(A, b, c) for _, k, f in ORDER_TREES if k == spec.p + 1]))


def verify(t: ButcherTableau, spec: SearchSpec) -> tuple[bool, analysis.SchemeReport, list[str]]:
    """Independent check of a candidate with the analysis engine."""
    rep = analysis.analyze(t, tol=spec.tol)
    problems = []
    if rep.classical_order < spec.p:
        problems.append(f"classical order {rep.classical_order} < {spec.p}")
    if rep.wso_eigenvector < spec.qe:
        problems.append(f"WSO eigenvector order {rep.wso_eigenvector} < {spec.qe}")
    if not rep.a_stable:
        problems.append(f"not A-stable (max |R(iy)| = {rep.max_abs_R_imag:.6g})")
    if not t.is_stiffly_accurate:
        problems.append("not stiffly accurate")
    if np.any(t.A.diagonal() < spec.diag_min):
        problems.append("diagonal entry below the lower bound")
    return not problems, rep, problems


def _unpack(x: np.ndarray, s: int):
    A = np.zeros((s, s))
    A[np.tril_indices(s)] = x
    return A, A[-1], A.sum(axis=1)


def _project(x: np.ndarray, spec: SearchSpec) -> np.ndarray:
    """Least-squares projection onto the equality constraints."""
    lo, hi = spec.bounds

    def eqs(x):
        A, b, c = _unpack(x, spec.s)
        return np.array(list(_equalities(A, b, c, spec).values()))

    return least_squares(eqs, np.clip(x, lo, hi), bounds=(lo, hi),
                         xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=2000).x


def _refine(x0: np.ndarray, spec: SearchSpec) -> np.ndarray:
    """Penalty Nelder-Mead on the objective, then projection back onto the equalities."""
    zs = _imag_samples(spec.imag_samples)
    lo, hi = spec.bounds

    def penalized(x):
        if np.any(x < lo) or np.any(x > hi):
            return 1e12
        A, b, c = _unpack(x, spec.s)
        eq = np.array(list(_equalities(A, b, c, spec).values()))
        ineq = np.array(list(_inequalities(A, b, spec, zs).values()))
        return _objective(x, spec) + spec.eq_weight * float(eq @ eq) + spec.ineq_weight * float(ineq @ ineq)

    x = minimize(penalized, x0, method="Nelder-Mead",
                 options={"maxiter": spec.nm_maxiter, "xatol": 1e-12, "fatol": 1e-16, "adaptive": True}).x
    return _project(x, spec)


def _draw(rng: np.random.Generator, s: int) -> np.ndarray:
    A0 = np.tril(rng.uniform(-1.0, 1.0, (s, s)), -1)
    A0[np.diag_indices(s)] = rng.uniform(0.1, 0.8, s)
    return A0[np.tril_indices(s)]


def search(spec: SearchSpec, name: str | None = None) -> SearchResult:
    """Multistart search; returns the best verified scheme or raises :class:`SearchFailure`."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    s = spec.s
    best: SearchResult | None = None
    best_res: dict[str, float] | None = None
    best_violation = np.inf
    label = name or f"search-s{s}-p{spec.p}-qe{spec.qe}-seed{spec.seed}"

    def assess(x, k, stage):
        nonlocal best, best_res, best_violation
        res = constraint_residuals(x, spec)
        eq, ineq = _split(res)
        violation = float(max(np.max(np.abs(eq), initial=0.0), np.max(ineq, initial=0.0)))
        if violation < best_violation:
            best_violation, best_res = violation, res
        cand = tableau_from_params(x, s, label)
        ok, rep, why = verify(cand, spec)
        obj = _objective(x, spec)
        log.debug("start %d %s: violation %.3e objective %.6g verified=%s %s",
                  k, stage, violation, obj, ok, "; ".join(why))
        if ok and (best is None or obj < best.objective):
            best = SearchResult(cand, rep, obj, k, res)
        return ok

    for k in range(spec.multistarts):
        # feasibility phase: random draws projected onto the equalities until one verifies
        for _ in range(spec.max_draws):
            x = _project(_draw(rng, s), spec)
            if assess(x, k, "seed"):
                break
        else:
            log.info("start %d: no feasible draw in %d attempts", k, spec.max_draws)
            continue
        assess(_refine(x, spec), k, "refined")
        log.info("start %d: best objective so far %.6g", k, best.objective)
    if best is None:
        raise SearchFailure(
            f"no verified scheme found in {spec.multistarts} starts "
            f"(smallest constraint violation {best_violation:.3e})", best_res)
    best.tableau = ButcherTableau(best.tableau.A, best.tableau.b, name=best.tableau.name,
                                  claimed_order=spec.p, claimed_wso=spec.qe,
                                  source=f"search seed={spec.seed} start={best.start}")
    return best
