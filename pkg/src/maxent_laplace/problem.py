"""Validated data model for truncated fractional moment problems on [0, 1].

A :class:`MomentProblem` holds exponents ``alphas`` and target values
``mus = E[Y**alphas]``. A :class:`MaxEntDensity` is the solved exponential
family member ``exp(-<lambdas, y**alphas>) / Z``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _dd
from .errors import ValidationError

DUPLICATE_RTOL = 1e-12
def _frozen_array(values) -> np.ndarray:
    arr = np.array(values, dtype=np.float64).reshape(-1)
    arr.setflags(write=False)
    return arr


# above this multiplier size <lambda, y**alpha> cancels badly in float64
EXTENDED_PRECISION_LAMBDA = 256.0


def basis_and_exponent(y, alphas, lambdas):
    """Basis values ``y**alphas`` and ``<lambdas, y**alphas>`` as ``(p, t_hi, t_lo)``.

    Large multipliers of alternating sign make the inner product lose
    ``log10(max|lambda|)`` digits, so beyond EXTENDED_PRECISION_LAMBDA the
    powers and the sum are formed in double-double arithmetic and the
    exponent comes back as an unevaluated sum ``t_hi + t_lo``.
    """
    y = np.asarray(y, dtype=np.float64)
    alphas = np.asarray(alphas, dtype=np.float64)
    lambdas = np.asarray(lambdas, dtype=np.float64)
    if not (lambdas.size and np.max(np.abs(lambdas)) > EXTENDED_PRECISION_LAMBDA):
        p = np.power.outer(y, alphas)
        t = p @ lambdas
        return p, t, np.zeros_like(t)
    lh, ll = _dd.log(y)
    xh, xl = _dd.mul_d(lh[..., None], ll[..., None], alphas)
    ph, pl = _dd.exp(xh, xl)
    th, tl = _dd.mul_d(ph[..., 0], pl[..., 0], lambdas[0])
    for i in range(1, alphas.size):
        th, tl = _dd.add(th, tl, *_dd.mul_d(ph[..., i], pl[..., i], lambdas[i]))
    return ph, th, tl


@dataclass(frozen=True)
class QuadratureSpec:
    """Tolerances and panel strategy for integrals over (0, 1].

    ``endpoint_refinement`` is the geometric ratio of the initial panels
    accumulating at y = 0; ``min_edge`` is where that initial ladder stops.
    """

    abs_tol: float = 1e-11
    rel_tol: float = 1e-11
    max_panels: int = 4096
    endpoint_refinement: float = 0.25
    min_edge: float = 1e-15

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("quadrature tolerances must be positive")
        if int(self.max_panels) < 1:
            raise ValueError("max_panels must be >= 1")
        if not 0 < self.endpoint_refinement < 1:
            raise ValueError("endpoint_refinement must lie in (0, 1)")
        if not 0 < self.min_edge < 1:
            raise ValueError("min_edge must lie in (0, 1)")

    def tightened(self, factor: float = 10.0) -> "QuadratureSpec":
        return QuadratureSpec(
            abs_tol=self.abs_tol / factor,
            rel_tol=self.rel_tol / factor,
            max_panels=self.max_panels,
            endpoint_refinement=self.endpoint_refinement,
            min_edge=self.min_edge,
        )


@dataclass(frozen=True)
class MomentProblem:
    """Exponents and moments of ``E[Y**alpha_i] = mu_i``.

    Pairs are sorted into strictly decreasing ``alphas`` at construction.
    Structural defects (length mismatch, non-finite values, non-positive or
    duplicate exponents) raise :class:`ValidationError`; feasibility
    conditions on ``mus`` are left to :func:`validate_problem`.
    """

    alphas: np.ndarray
    mus: np.ndarray
    label: Optional[str] = None

    def __post_init__(self):
        alphas = np.array(self.alphas, dtype=np.float64).reshape(-1)
        mus = np.array(self.mus, dtype=np.float64).reshape(-1)
        if alphas.size == 0:
            raise ValidationError("a moment problem needs at least one exponent")
        if alphas.shape != mus.shape:
            raise ValidationError(
                f"alphas and mus differ in length ({alphas.size} != {mus.size})"
            )
        if not (np.all(np.isfinite(alphas)) and np.all(np.isfinite(mus))):
            raise ValidationError("alphas and mus must be finite")
        if np.any(alphas <= 0):
            bad = [i + 1 for i in np.flatnonzero(alphas <= 0)]
            raise ValidationError(f"exponents must be positive (indices {bad})")
        order = np.argsort(-alphas, kind="stable")
        alphas, mus = alphas[order], mus[order]
        if alphas.size > 1:
            gaps = alphas[:-1] - alphas[1:]
            dup = np.flatnonzero(gaps <= DUPLICATE_RTOL * alphas[:-1])
            if dup.size:
                i = int(dup[0])
                raise ValidationError(
                    f"duplicate exponent {float(alphas[i])!r} at indices ({i + 1}, {i + 2})"
                )
        object.__setattr__(self, "alphas", _frozen_array(alphas))
        object.__setattr__(self, "mus", _frozen_array(mus))

    @property
    def k(self) -> int:
        return int(self.alphas.size)

    def truncated(self, k: int) -> "MomentProblem":
        """The nested sub-problem built from the first ``k`` exponents."""
        if not 1 <= k <= self.k:
            raise ValueError(f"k must lie in [1, {self.k}], got {k}")
        return MomentProblem(self.alphas[:k], self.mus[:k], label=self.label)


@dataclass(frozen=True)
class MaxEntDensity:
    """Solved maximum entropy density ``exp(-<lambdas, y**alphas> - log_z)``."""

    alphas: np.ndarray
    lambdas: np.ndarray
    log_z: float
    entropy: float
    residual: float
    iterations: int
    mus: Optional[np.ndarray] = None
    label: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "alphas", _frozen_array(self.alphas))
        object.__setattr__(self, "lambdas", _frozen_array(self.lambdas))
        if self.mus is not None:
            object.__setattr__(self, "mus", _frozen_array(self.mus))
        if self.alphas.shape != self.lambdas.shape:
            raise ValueError("alphas and lambdas differ in length")

    @property
    def k(self) -> int:
        return int(self.alphas.size)

    def exponent(self, y) -> np.ndarray:
        """``<lambdas, y**alphas>`` evaluated elementwise."""
        _, th, tl = basis_and_exponent(y, self.alphas, self.lambdas)
        return th + tl

    def log_pdf(self, y) -> np.ndarray:
        _, th, tl = basis_and_exponent(y, self.alphas, self.lambdas)
        # log_z cancels the bulk of t_hi; add the low word afterwards
        return (-th - self.log_z) - tl

    def pdf(self, y) -> np.ndarray:
        return np.exp(self.log_pdf(y))

    def __call__(self, y):
        return self.pdf(y)


@dataclass(frozen=True)
class Violation:
    invariant: str
    indices: tuple
    message: str

    def as_dict(self) -> dict:
        return {"invariant": self.invariant, "indices": list(self.indices),
                "message": self.message}


@dataclass(frozen=True)
class ValidationReport:
    """Violated invariants of a problem; empty means valid.

    Indices are 1-based positions in decreasing-exponent order.
    """

    violations: tuple = field(default_factory=tuple)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok

    def __len__(self):
        return len(self.violations)

    def __iter__(self):
        return iter(self.violations)

    def invariants(self) -> set:
        return {v.invariant for v in self.violations}


INVARIANTS = (
    "alpha_positive",
    "alpha_strictly_decreasing",
    "mu_in_unit_interval",
    "monotonicity",
    "log_convexity",
)


def validate_problem(p: MomentProblem, rtol: float = 1e-12) -> ValidationReport:
    """Check every feasibility invariant of ``p`` without raising.

    ``rtol`` is a relative slack on the log-convexity slope comparison, so
    that moment tables which are log-linear up to rounding are not flagged.
    """
    return validate_columns(p.alphas, p.mus, rtol)


def validate_columns(alphas, mus, rtol: float = 1e-12) -> ValidationReport:
    """:func:`validate_problem` on raw columns, taken in the given order."""
    a = np.asarray(alphas, dtype=np.float64).reshape(-1)
    m = np.asarray(mus, dtype=np.float64).reshape(-1)
    if a.shape != m.shape:
        raise ValidationError(f"alphas and mus differ in length ({a.size} != {m.size})")
    out = []
    for i in np.flatnonzero(a <= 0):
        out.append(Violation("alpha_positive", (int(i) + 1,),
                             f"alpha_{i + 1} = {float(a[i])!r} is not positive"))
    for i in range(a.size - 1):
        if not a[i] > a[i + 1]:
            out.append(Violation("alpha_strictly_decreasing", (i + 1, i + 2),
                                 f"alpha_{i + 1} = {float(a[i])!r} <= alpha_{i + 2} = {float(a[i + 1])!r}"))
    with np.errstate(invalid="ignore"):
        in_range = (m > 0) & (m < 1)
    for i in np.flatnonzero(~in_range):
        out.append(Violation("mu_in_unit_interval", (int(i) + 1,),
                             f"mu_{i + 1} = {float(m[i])!r} is not in the open interval (0, 1)"))
    # larger exponent => smaller moment, since y**alpha decreases in alpha on (0, 1)
    for i in range(a.size - 1):
        if not m[i] < m[i + 1]:
            out.append(Violation("monotonicity", (i + 1, i + 2),
                                 f"alpha_{i + 1} > alpha_{i + 2} requires mu_{i + 1} < mu_{i + 2}, "
                                 f"got {float(m[i])!r} >= {float(m[i + 1])!r}"))
    if np.all(in_range):
        logm = np.log(m)
        for i in range(a.size - 2):
            if not a[i] > a[i + 1] > a[i + 2]:
                continue  # slopes undefined; the ordering check reports it
            upper = (logm[i] - logm[i + 1]) / (a[i] - a[i + 1])
            lower = (logm[i + 1] - logm[i + 2]) / (a[i + 1] - a[i + 2])
            slack = rtol * (1.0 + abs(upper) + abs(lower))
            if upper < lower - slack:
                out.append(Violation("log_convexity", (i + 1, i + 2, i + 3),
                                     f"log mu is not convex in alpha on indices ({i + 1}, {i + 2}, {i + 3}): "
                                     f"slope {upper:.6g} < {lower:.6g}"))
    return ValidationReport(tuple(out))


def require_valid(p: MomentProblem) -> None:
    report = validate_problem(p)
    if not report.ok:
        details = "; ".join(v.message for v in report)
        raise ValidationError(f"invalid moment problem: {details}", report=report)
