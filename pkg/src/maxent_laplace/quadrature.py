"""Adaptive Gauss-Kronrod quadrature on (0, 1] and the partition function.

Integrands are vectorised: they receive a 1-d array of abscissae and return
either a 1-d array of values or a 2-d array ``(n_nodes, n_components)``, in
which case every component is integrated over the same panel set and each
must meet its own tolerance.

Panels accumulate geometrically toward y = 0, where the integrands of this
package (``y**alpha`` with small ``alpha``, ``log y`` factors) are smooth
but have unbounded derivatives. The innermost panel ``[0, h]`` is split
geometrically rather than bisected, so integrable singularities such as
``y**(alpha - 1)`` are resolved without evaluating at 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import _dd
from .errors import NoConvergence, NonFinite, Overflow
from .problem import QuadratureSpec, basis_and_exponent

DEFAULT_SPEC = QuadratureSpec()

# 15-point Kronrod extension of the 7-point Gauss rule (QUADPACK qk15).
_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])

NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
KRONROD_WEIGHTS = np.concatenate([_WGK[:-1], _WGK[::-1]])
GAUSS_WEIGHTS = np.zeros(15)
GAUSS_WEIGHTS[1:14:2] = np.concatenate([_WG[:-1], _WG[::-1]])

# y**alpha underflows for y below this; stop refining toward 0 there.
_TINY_EDGE = 1e-300
_ROUNDOFF = 50.0 * np.finfo(float).eps
# exponents this far below the shift force a re-shift
_RESHIFT_MARGIN = 30.0


@dataclass(frozen=True)
class Integrand:
    """Vectorised function on (0, 1] plus an endpoint-singularity hint."""

    func: Callable[[np.ndarray], np.ndarray]
    singular_at_zero: bool = True

    def __call__(self, y):
        return self.func(y)


def _as_integrand(f) -> Integrand:
    return f if isinstance(f, Integrand) else Integrand(f)


def _initial_edges(a, b, points, geometric, spec):
    if geometric and a == 0.0:
        r = spec.endpoint_refinement
        n = int(np.ceil(np.log(spec.min_edge / b) / np.log(r)))
        ladder = b * r ** np.arange(max(n, 0) + 1)
        edges = np.concatenate([[0.0], ladder[::-1]])
    else:
        edges = np.array([a, b], dtype=np.float64)
    if points is not None:
        extra = np.asarray(points, dtype=np.float64).reshape(-1)
        extra = extra[(extra > a) & (extra < b)]
        edges = np.union1d(edges, extra)
    return np.unique(edges)


def _gk_panels(func, lo, hi):
    """Kronrod estimates, error estimates and round-off floors per panel.

    The error estimate is the QUADPACK one: ``|K15 - G7|`` sharpened by
    ``(200 |K - G| / resasc)**1.5`` and bounded below by ``50 eps resabs``.
    """
    half = 0.5 * (hi - lo)
    center = 0.5 * (hi + lo)
    y = (center[:, None] + half[:, None] * NODES[None, :]).reshape(-1)
    vals = np.asarray(func(y), dtype=np.float64)
    if vals.shape[0] != y.size:
        raise ValueError("integrand must return one row per abscissa")
    if not np.all(np.isfinite(vals)):
        bad = y[~np.isfinite(vals.reshape(y.size, -1)).all(axis=1)]
        raise NonFinite(f"integrand is not finite at y = {float(bad[0])!r}")
    scalar = vals.ndim == 1
    vals = vals.reshape(lo.size, 15, -1)
    h = half[:, None]
    k = np.einsum("j,pjc->pc", KRONROD_WEIGHTS, vals) * h
    g = np.einsum("j,pjc->pc", GAUSS_WEIGHTS, vals) * h
    resabs = np.einsum("j,pjc->pc", KRONROD_WEIGHTS, np.abs(vals)) * h
    mean = np.einsum("j,pjc->pc", KRONROD_WEIGHTS, vals) * 0.5
    resasc = np.einsum("j,pjc->pc", KRONROD_WEIGHTS, np.abs(vals - mean[:, None, :])) * h
    err = np.abs(k - g)
    with np.errstate(divide="ignore", invalid="ignore"):
        sharp = resasc * np.minimum(1.0, (200.0 * err / resasc) ** 1.5)
    err = np.where((resasc > 0) & (err > 0), sharp, err)
    floor = _ROUNDOFF * resabs
    return k, np.maximum(err, floor), floor, scalar


def integrate(f, spec: QuadratureSpec = DEFAULT_SPEC, *, a: float = 0.0,
              b: float = 1.0, points=None):
    """Integrate ``f`` over ``[a, b]`` (a sub-interval of [0, 1]).

    Returns ``(value, err_estimate)``; both are scalars for scalar integrands
    and arrays for vector-valued ones. ``points`` are extra breakpoints, such
    as known kinks, placed as panel edges.

    Tolerances below the rounding level of the panel sums are met as far as
    rounding allows; the returned error estimate then exceeds the request.
    Raises NoConvergence when ``spec.max_panels`` is reached first and
    NonFinite when the integrand returns NaN or infinity.
    """
    integrand = _as_integrand(f)
    if not 0.0 <= a < b <= 1.0:
        raise ValueError(f"integration bounds must satisfy 0 <= a < b <= 1, got [{a}, {b}]")
    edges = _initial_edges(a, b, points, integrand.singular_at_zero, spec)
    lo, hi = edges[:-1], edges[1:]
    k, e, fl, scalar = _gk_panels(integrand, lo, hi)
    r = spec.endpoint_refinement
    while True:
        total = k.sum(axis=0)
        err = e.sum(axis=0)
        tol = np.maximum(spec.abs_tol, spec.rel_tol * np.abs(total))
        if np.all(err <= tol):
            break
        n = lo.size
        # panels at their round-off floor cannot improve by splitting
        over = np.any((e * n > tol) & (e > fl), axis=1)
        if not np.any(over):
            # the remaining error is rounding in the panel sums: accept it
            break
        # never split the panel that has already shrunk to underflow scale
        over &= ~((lo == 0.0) & (hi <= _TINY_EDGE)) & (hi - lo > 4 * np.spacing(hi))
        if not np.any(over):
            raise NoConvergence(
                f"quadrature limited by round-off or panel size; error {err.max():.3g} > tolerance {tol.min():.3g}"
            )
        budget = spec.max_panels - n
        if budget <= 0:
            raise NoConvergence(
                f"panel budget {spec.max_panels} exhausted; error {err.max():.3g} > tolerance {tol.min():.3g}"
            )
        idx = np.flatnonzero(over)
        if idx.size > budget:
            worst = np.argsort(-e[idx].max(axis=1), kind="stable")[:budget]
            idx = np.sort(idx[worst])
        plo, phi = lo[idx], hi[idx]
        mid = np.where(plo == 0.0, phi * r, 0.5 * (plo + phi))
        nlo = np.concatenate([plo, mid])
        nhi = np.concatenate([mid, phi])
        nk, ne, nfl, _ = _gk_panels(integrand, nlo, nhi)
        keep = np.ones(n, dtype=bool)
        keep[idx] = False
        lo = np.concatenate([lo[keep], nlo])
        hi = np.concatenate([hi[keep], nhi])
        k = np.concatenate([k[keep], nk])
        e = np.concatenate([e[keep], ne])
        fl = np.concatenate([fl[keep], nfl])
        # accumulate in position order so results do not depend on split history
        order = np.argsort(lo, kind="stable")
        lo, hi, k, e, fl = lo[order], hi[order], k[order], e[order], fl[order]
    if scalar:
        return float(total[0]), float(err[0])
    return total, err


def _exponent_min(lambdas, alphas, spec):
    """Minimum of <lambdas, y**alphas> over a probe grid that includes y -> 0 and y = 1."""
    edges = _initial_edges(0.0, 1.0, None, True, spec)
    lo, hi = edges[:-1], edges[1:]
    y = (0.5 * (hi + lo)[:, None] + 0.5 * (hi - lo)[:, None] * NODES[None, :]).reshape(-1)
    y = np.concatenate([y, edges[1:]])
    t = basis_and_exponent(y, alphas, lambdas)[1]
    return min(0.0, float(np.min(t)))


class _ShiftedWeight:
    """exp(-(t(y) - shift)) with bookkeeping of the smallest exponent seen."""

    def __init__(self, lambdas, alphas, shift):
        self.lambdas = lambdas
        self.alphas = alphas
        self.shift = shift
        self.t_min = np.inf

    def eval(self, y):
        p, th, tl = basis_and_exponent(y, self.alphas, self.lambdas)
        if not np.all(np.isfinite(th)):
            raise Overflow("exponent <lambda, y**alpha> is not finite")
        self.t_min = min(self.t_min, float(th.min()))
        # u = shift - t; exponents below the shift only occur if the probe grid
        # missed the minimum: clip them and let the caller re-shift and retry
        uh, ul = _dd.two_sum(self.shift - th, -tl)
        clipped = uh > _RESHIFT_MARGIN
        uh = np.where(clipped, _RESHIFT_MARGIN, uh)
        if not np.any(tl):
            return p, np.exp(uh)
        return p, _dd.exp(uh, np.where(clipped, 0.0, ul))[0]


def _weighted_integral(lambdas, alphas, spec, make_columns):
    """Integrate ``w(y) * make_columns(p, y)`` with the exponent shift applied.

    Returns ``(log_z, integrals / Z_shifted)`` where the first integrated
    column is always the shifted partition function.
    """
    lambdas = np.asarray(lambdas, dtype=np.float64).reshape(-1)
    alphas = np.asarray(alphas, dtype=np.float64).reshape(-1)
    if lambdas.shape != alphas.shape:
        raise ValueError("lambdas and alphas must have the same length")
    if not np.all(np.isfinite(lambdas)):
        raise Overflow("multipliers are not finite")
    shift = _exponent_min(lambdas, alphas, spec)
    for _ in range(8):
        weight = _ShiftedWeight(lambdas, alphas, shift)

        def func(y):
            p, w = weight.eval(y)
            return np.column_stack([w, w[:, None] * make_columns(p, y)])

        vals, _ = integrate(Integrand(func), spec)
        if weight.t_min >= shift - _RESHIFT_MARGIN:
            break
        shift = weight.t_min
    else:
        raise Overflow("could not stabilise the exponent shift")
    z = vals[0]
    if not z > 0:
        raise Overflow("partition function underflowed to zero")
    return float(np.log(z) - shift), vals[1:] / z


def partition_function(lambdas, alphas, spec: QuadratureSpec = DEFAULT_SPEC):
    """``log Z(lambda)`` and the moments ``E_lambda[y**alpha_i]``.

    ``Z(lambda) = int_0^1 exp(-<lambda, y**alpha>) dy``; the integrand is
    evaluated as ``exp(-(t - m))`` with ``m`` the smallest exponent, so
    large multipliers do not overflow.
    """
    log_z, moments = _weighted_integral(lambdas, alphas, spec, lambda p, y: p)
    return log_z, moments


def hessian(lambdas, alphas, spec: QuadratureSpec = DEFAULT_SPEC, moments=None):
    """Covariance matrix ``Cov_lambda(y**alpha_i, y**alpha_j)``, the Hessian of log Z.

    Computed in centred form, ``E[(y**a_i - m_i)(y**a_j - m_j)]``, which
    avoids the cancellation of ``E[y**(a_i + a_j)] - m_i m_j`` when the
    basis functions are nearly collinear. ``moments`` may be passed to skip
    the first pass.
    """
    alphas = np.asarray(alphas, dtype=np.float64).reshape(-1)
    if moments is None:
        _, moments = partition_function(lambdas, alphas, spec)
    moments = np.asarray(moments, dtype=np.float64)
    kdim = alphas.size
    iu = np.triu_indices(kdim)

    def columns(p, y):
        c = p - moments
        return c[:, iu[0]] * c[:, iu[1]]

    _, upper = _weighted_integral(lambdas, alphas, spec, columns)
    h = np.empty((kdim, kdim))
    h[iu] = upper
    h[(iu[1], iu[0])] = upper
    return h



def _rotated_basis(y, alphas, basis, center):
    """``(y**alpha - center) @ basis`` with the cancellation done in double-double."""
    lh, ll = _dd.log(y)
    xh, xl = _dd.mul_d(lh[:, None], ll[:, None], alphas)
    ph, pl = _dd.exp(xh, xl)
    dh, dl = _dd.add(ph, pl, -center, np.zeros_like(ph))
    out = np.empty((y.size, basis.shape[1]))
    for j in range(basis.shape[1]):
        sh, sl = _dd.mul_d(dh[:, 0], dl[:, 0], basis[0, j])
        for i in range(1, alphas.size):
            sh, sl = _dd.add(sh, sl, *_dd.mul_d(dh[:, i], dl[:, i], basis[i, j]))
        out[:, j] = sh + sl
    return out


def covariance(lambdas, alphas, basis, center, spec: QuadratureSpec = DEFAULT_SPEC):
    """``E[phi phi^T]`` for ``phi = (y**alpha - center) @ basis``.

    With ``basis`` close to the eigenvectors of the Hessian, scaled to unit
    variance, every entry is of order one and the small eigenvalues that
    :func:`hessian` loses to cancellation are resolved in relative terms.
    """
    alphas = np.asarray(alphas, dtype=np.float64).reshape(-1)
    basis = np.asarray(basis, dtype=np.float64)
    center = np.asarray(center, dtype=np.float64)
    kdim = basis.shape[1]
    iu = np.triu_indices(kdim)

    def columns(p, y):
        c = _rotated_basis(y, alphas, basis, center)
        return c[:, iu[0]] * c[:, iu[1]]

    _, upper = _weighted_integral(lambdas, alphas, spec, columns)
    out = np.empty((kdim, kdim))
    out[iu] = upper
    out[(iu[1], iu[0])] = upper
    return out


def variances(lambdas, alphas, basis, center, spec: QuadratureSpec = DEFAULT_SPEC):
    """Diagonal of :func:`covariance`; the integrands are positive, so
    ``spec.rel_tol`` applies to each entry however small."""
    alphas = np.asarray(alphas, dtype=np.float64).reshape(-1)
    basis = np.asarray(basis, dtype=np.float64)
    center = np.asarray(center, dtype=np.float64)
    _, diag = _weighted_integral(lambdas, alphas, spec,
                                 lambda p, y: _rotated_basis(y, alphas, basis, center) ** 2)
    return diag
