"""Damped Newton minimisation of the dual ``log Z(lambda) + <lambda, mu>``.

The gradient is ``mu - E_lambda[y**alpha]`` and the Hessian is the
covariance matrix of the basis functions ``y**alpha_i``. For harmonic
exponents these functions are nearly collinear, so the Newton system is
equilibrated before the Cholesky factorisation and jitter proportional to
the trace is added when the factorisation fails.
"""

from __future__ import annotations

import logging
from fractions import Fraction
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg, optimize

from .errors import Infeasible, MaxIterations, QuadratureError
from .problem import (EXTENDED_PRECISION_LAMBDA, MaxEntDensity, MomentProblem, QuadratureSpec,
                      require_valid)
from .quadrature import DEFAULT_SPEC, covariance, hessian, partition_function, variances

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverConfig:
    residual_tol: float = 1e-8
    max_iterations: int = 200
    jitter_base: float = 1e-12
    shrink: float = 0.5
    sufficient_decrease: float = 1e-4
    lambda_cap: float = 1e4
    # smallest admissible min(1 - mu_1, mu_K); see boundary_margin
    min_margin: float = 5e-3
    max_backtracks: int = 60
    # bound on half the Newton decrement, i.e. on the estimated dual excess
    decrement_tol: float = 1e-12
    polish_steps: int = 12

    def __post_init__(self):
        for name in ("residual_tol", "jitter_base", "lambda_cap", "min_margin", "decrement_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not 0 < self.shrink < 1:
            raise ValueError("shrink must lie in (0, 1)")
        if not 0 < self.sufficient_decrease < 0.5:
            raise ValueError("sufficient_decrease must lie in (0, 1/2)")


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    dual: float
    grad_norm: float
    residual: float
    step: float
    jitter: float

    def as_dict(self) -> dict:
        return {"iteration": self.iteration, "dual": self.dual, "grad_norm": self.grad_norm,
                "residual": self.residual, "step": self.step, "jitter": self.jitter}


@dataclass
class SolveTrace:
    records: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def duals(self) -> np.ndarray:
        return np.array([r.dual for r in self.records])

    def summary(self) -> dict:
        if not self.records:
            return {"iterations": 0}
        first, last = self.records[0], self.records[-1]
        return {
            "iterations": last.iteration,
            "initial_dual": first.dual,
            "final_dual": last.dual,
            "final_grad_norm": last.grad_norm,
            "final_residual": last.residual,
            "max_jitter": max(r.jitter for r in self.records),
            "min_step": min(r.step for r in self.records[1:]) if len(self.records) > 1 else 1.0,
        }


def dual_value(lambdas, p: MomentProblem, q: QuadratureSpec = DEFAULT_SPEC) -> float:
    """``log Z(lambda) + <lambda, mu>``."""
    lambdas = np.asarray(lambdas, dtype=np.float64)
    log_z, _ = partition_function(lambdas, p.alphas, q)
    return _dual(log_z, lambdas, p.mus)


def dual_gradient(lambdas, p: MomentProblem, q: QuadratureSpec = DEFAULT_SPEC) -> np.ndarray:
    _, moments = partition_function(lambdas, p.alphas, q)
    return p.mus - moments


def dual_hessian(lambdas, p: MomentProblem, q: QuadratureSpec = DEFAULT_SPEC) -> np.ndarray:
    return hessian(lambdas, p.alphas, q)


def relative_residual(moments, mus) -> float:
    return float(np.max(np.abs(moments - mus) / mus))


def boundary_margin(p: MomentProblem) -> float:
    """Distance of the moment vector from the point masses at y = 1 and y = 0.

    A point mass at y = 1 has every moment 1 and one at y = 0 every moment
    0. ``1 - mu_1`` (largest exponent) and ``mu_K`` (smallest exponent) are
    the tightest of these gaps; both are unchanged by the rescaling
    ``S -> c S, alpha -> alpha / c``. When either is small, every basis
    function ``y**alpha_i`` is nearly affine in ``log y`` over the bulk of
    the mass and the Newton system degenerates.
    """
    return float(min(1.0 - p.mus[0], p.mus[-1]))


class _Singular(Exception):
    pass


def newton_direction(h: np.ndarray, grad: np.ndarray, jitter_base: float):
    """Solve ``h d = -grad`` by equilibrated Cholesky with escalating jitter.

    Returns ``(d, jitter)`` where ``jitter`` is the diagonal shift that was
    added to the scaled matrix (0 when none was needed).
    """
    k = h.shape[0]
    diag = np.diag(h).copy()
    if not np.all(diag > 0):
        diag = np.where(diag > 0, diag, np.max(np.abs(diag)) + np.finfo(float).tiny)
    scale = 1.0 / np.sqrt(diag)
    hs = h * scale[:, None] * scale[None, :]
    gs = grad * scale
    base = jitter_base * np.trace(hs) / k
    jitter = 0.0
    for j in range(80):
        try:
            c = linalg.cho_factor(hs + jitter * np.eye(k), lower=True, check_finite=True)
            ds = -linalg.cho_solve(c, gs)
            if np.all(np.isfinite(ds)):
                return ds * scale, jitter
        except linalg.LinAlgError:
            pass
        jitter = base * 2.0 ** j
    raise _Singular("Hessian could not be factorised even with jitter")


def solve(p: MomentProblem, cfg: SolverConfig = SolverConfig(),
          q: QuadratureSpec = DEFAULT_SPEC):
    """Maximum entropy density matching the moments of ``p``.

    Newton iterations start from the uniform density (``lambda = 0``) and
    run until ``max_i |E[y**alpha_i] - mu_i| / mu_i <= cfg.residual_tol``.
    For nearly collinear bases a small residual can leave the dual well
    above its minimum, so the iterate is then polished with Newton steps
    computed in a unit-variance eigenbasis until half the Newton decrement
    ``grad^T H^-1 grad``, an estimate of the remaining dual excess, is at
    most ``cfg.decrement_tol``. The reported entropy is
    ``log Z(lambda*) + <lambda*, mu>``.

    Raises Infeasible when the moment vector is within ``cfg.min_margin``
    of the degenerate boundary, or when the multipliers exceed
    ``cfg.lambda_cap`` and their direction certifies that the dual is
    unbounded below (see :func:`separation_margin`); MaxIterations when the
    iteration budget runs out or the line search stalls without such a
    certificate.
    """
    require_valid(p)
    trace = SolveTrace()
    margin = boundary_margin(p)
    if margin < cfg.min_margin:
        raise Infeasible(
            f"moment vector lies within {margin:.3g} of the degenerate boundary "
            f"(minimum margin {cfg.min_margin:.3g})", trace=trace)

    mus = p.mus
    lam = np.zeros(p.k)
    log_z, moments = partition_function(lam, p.alphas, q)
    dual = _dual(log_z, lam, mus)
    step = 1.0
    jitter = 0.0
    best = None
    final = None
    polished = 0
    for it in range(cfg.max_iterations + 1):
        grad = mus - moments
        res = relative_residual(moments, mus)
        trace.records.append(TraceRecord(it, dual, float(np.linalg.norm(grad)), res, step, jitter))
        log.debug("iter %d dual %.17g residual %.3e", it, dual, res)
        polishing = best is not None or res <= cfg.residual_tol
        # the plain Hessian loses its small eigenvalues once the multipliers are large
        refined = polishing or float(np.max(np.abs(lam))) > cfg.lambda_cap
        try:
            try:
                d, jitter, measure = _direction(p, q, cfg, lam, moments, refined=refined)
            except _Singular:
                if refined:
                    raise
                # the plain Hessian may have lost its small eigenvalues to rounding
                refined = True
                d, jitter, measure = _direction(p, q, cfg, lam, moments, refined=True)
        except _Singular as exc:
            if best is not None:
                break
            if res <= cfg.residual_tol:
                best = (lam, log_z, dual, res, it)
                break
            raise MaxIterations(f"iteration {it}: {exc} (residual {res:.3e})", trace=trace) from None
        decrement = max(-float(grad @ d), 0.0)
        if res <= cfg.residual_tol and (best is None or dual <= best[2]):
            best = (lam, log_z, dual, res, it)
        if final is not None:
            # one last Newton step past the decrement test, kept if it helped
            if res > final[3]:
                best = final
            break
        if polishing:
            if res <= cfg.residual_tol and 0.5 * decrement <= cfg.decrement_tol:
                best = final = (lam, log_z, dual, res, it)
            elif polished >= cfg.polish_steps:
                break
            polished += 1
        if it == cfg.max_iterations:
            break
        beyond_cap = float(np.max(np.abs(lam))) > cfg.lambda_cap
        if best is None and beyond_cap:
            sep = separation_margin(lam, p)
            if sep > 0:
                raise Infeasible(
                    f"multipliers exceed cap {cfg.lambda_cap:g} along a direction that "
                    f"separates the moments from every point mass (margin {sep:.3g})",
                    trace=trace)
        try:
            step_result = _line_search(p, q, cfg, lam, log_z, moments, dual, d, measure)
        except _LineSearchFailed as exc:
            if not refined and best is None:
                try:
                    d, jitter, measure = _direction(p, q, cfg, lam, moments, refined=True)
                    step_result = _line_search(p, q, cfg, lam, log_z, moments, dual, d, measure)
                except (_Singular, _LineSearchFailed):
                    step_result = None
            else:
                step_result = None
            if step_result is None:
                if best is not None:
                    break
                if beyond_cap and separation_margin(lam, p) > 0:
                    raise Infeasible(f"no descent with multipliers beyond the cap: {exc}",
                                     trace=trace) from None
                raise MaxIterations(f"iteration {it}: {exc} (residual {res:.3e})",
                                    trace=trace) from None
        lam, log_z, moments, dual, step = step_result

    if best is None:
        raise MaxIterations(
            f"no convergence in {cfg.max_iterations} iterations (residual {res:.3e})", trace=trace)
    lam, log_z, dual, res, it = best
    density = MaxEntDensity(alphas=p.alphas, lambdas=lam, log_z=log_z, entropy=dual,
                            residual=res, iterations=it, mus=mus, label=p.label)
    return density, trace


class _LineSearchFailed(Exception):
    pass


def _dual(log_z, lam, mus) -> float:
    # the products cancel to O(1) from O(max|lambda|); sum them exactly
    inner = sum(Fraction(float(a)) * Fraction(float(b)) for a, b in zip(lam, mus))
    return float(Fraction(float(log_z)) + inner)


def _dual_noise(log_z, lam, mus, q) -> float:
    # beyond EXTENDED_PRECISION_LAMBDA the exponent is formed in double-double
    # and the inner product is exact, leaving log Z and its quadrature error
    spread = min(float(np.abs(lam) @ mus), EXTENDED_PRECISION_LAMBDA * lam.size)
    return 64 * np.finfo(float).eps * (1.0 + abs(log_z) + spread) + q.rel_tol


def _refined_basis(lam, p, q, moments, h):
    """Hessian in the eigenbasis of ``h``, each direction scaled to unit variance.

    Returns ``(b, c)`` with ``c = b^T H b`` integrated directly, so that
    directions whose variance is far below the rounding level of ``h``
    keep their relative accuracy.
    """
    _, v = np.linalg.eigh(h)
    # squared integrands are positive: a relative tolerance alone is enough
    var = variances(lam, p.alphas, v, moments, replace(q, abs_tol=np.finfo(float).tiny))
    if not np.all(var > 0):
        raise _Singular("a rotated basis function has zero variance")
    b = v / np.sqrt(var)
    return b, covariance(lam, p.alphas, b, moments, q)


def _direction(p, q, cfg, lam, moments, refined):
    """Newton direction and the progress measure used by the line search."""
    mus = p.mus
    grad = mus - moments
    try:
        h = hessian(lam, p.alphas, q, moments=moments)
        if refined:
            b, c = _refined_basis(lam, p, q, moments, h)
    except QuadratureError as exc:
        raise _Singular(str(exc)) from None
    if refined:
        y, jitter = newton_direction(c, b.T @ grad, cfg.jitter_base)
        # gradient in the unit-variance basis
        return b @ y, jitter, lambda g: float(np.linalg.norm(b.T @ g))
    d, jitter = newton_direction(h, grad, cfg.jitter_base)
    return d, jitter, lambda g: relative_residual(mus - g, mus)


def _line_search(p, q, cfg, lam, log_z, moments, dual, d, measure):
    mus = p.mus
    grad = mus - moments
    current = measure(grad)
    slope = float(grad @ d)
    noise = _dual_noise(log_z, lam, mus, q)
    step = 1.0
    for _ in range(cfg.max_backtracks):
        trial = lam + step * d
        try:
            t_log_z, t_moments = partition_function(trial, p.alphas, q)
        except QuadratureError:
            step *= cfg.shrink
            continue
        t_dual = _dual(t_log_z, trial, mus)
        if t_dual <= dual + cfg.sufficient_decrease * step * slope:
            return trial, t_log_z, t_moments, t_dual, step
        # below the rounding level of the dual, judge the step by the gradient
        if abs(step * slope) <= noise and t_dual <= dual + noise \
                and measure(mus - t_moments) < current:
            return trial, t_log_z, t_moments, t_dual, step
        step *= cfg.shrink
    raise _LineSearchFailed("line search found no acceptable step")


def separation_margin(direction, p: MomentProblem, n_grid: int = 4000) -> float:
    """Certificate that ``p`` has no density: ``min_y <v, y**alpha - mu>``, scaled.

    With ``v = direction / max|direction|``, a positive value means every
    point mass, hence every density on [0, 1], has ``<v, E[y**alpha]>``
    strictly above ``<v, mu>``. The dual then decreases without bound
    along ``v``. The minimum is taken over a grid in ``s = -log y`` plus
    ``y = 0``, refined by a bounded scalar search around the smallest
    grid values; values within rounding of zero count as not separated.
    """
    v = np.asarray(direction, dtype=np.float64)
    scale = float(np.max(np.abs(v)))
    if scale == 0:
        return 0.0
    v = v / scale
    alphas = p.alphas
    offset = float(v @ p.mus)

    def g(s):
        return np.exp(-np.multiply.outer(np.atleast_1d(s), alphas)) @ v - offset

    s = np.concatenate([[0.0], np.geomspace(1e-10, 800.0 / alphas[-1], n_grid)])
    vals = g(s)
    best = min(float(vals.min()), -offset)  # -offset is the value at y = 0
    for i in np.argsort(vals)[:3]:
        lo, hi = s[max(i - 1, 0)], s[min(i + 1, s.size - 1)]
        if hi > lo:
            r = optimize.minimize_scalar(lambda t: float(g(t)[0]), bounds=(lo, hi),
                                         method="bounded", options={"xatol": 1e-12 * hi})
            best = min(best, float(r.fun))
    noise = 64 * np.finfo(float).eps * (1.0 + float(np.abs(v).sum()))
    return best if best > noise else 0.0
