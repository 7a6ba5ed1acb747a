"""Evaluation of solved densities and the nested-K entropy sweep.

Densities on (0, 1] may be given as :class:`MaxEntDensity`, as a
:class:`~maxent_laplace.sources.SourceLaw` (its ``pdf_y`` is used), as a
:class:`DensityTable`, or as any vectorised callable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import integrate as sp_integrate
from scipy import optimize, special

from .errors import DomainError, MaxEntError, NotNested
from .problem import MaxEntDensity, MomentProblem, QuadratureSpec
from .quadrature import DEFAULT_SPEC, Integrand, integrate
from .solver import SolverConfig, solve
from .sources import AlphaScheme, SourceLaw, make_problem

DEFAULT_S_MAX = 50.0


@dataclass(frozen=True)
class DensityTable:
    """Sampled density on the unit interval (``space="Y"``) or half-line (``"S"``)."""

    space: str
    grid: np.ndarray
    values: np.ndarray
    tail_mass: float = 0.0

    def __post_init__(self):
        if self.space not in ("Y", "S"):
            raise ValueError("space must be 'Y' or 'S'")
        grid = np.asarray(self.grid, dtype=np.float64)
        values = np.asarray(self.values, dtype=np.float64)
        if grid.shape != values.shape or grid.ndim != 1:
            raise ValueError("grid and values must be 1-d arrays of equal length")
        if np.any(np.diff(grid) <= 0):
            raise ValueError("grid must be strictly increasing")
        if np.any(values < 0):
            raise ValueError("density values must be nonnegative")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)

    def mass(self) -> float:
        """Simpson estimate of the integral over the grid."""
        return float(sp_integrate.simpson(self.values, x=self.grid))


def _check_unit(y):
    y = np.asarray(y, dtype=np.float64)
    if np.any(~((y > 0) & (y <= 1))):
        raise DomainError("y must lie in (0, 1]")
    return y


def density_y(d: MaxEntDensity, y):
    """``exp(-<lambda*, y**alpha>) / Z(lambda*)`` using the stored ``log_z``."""
    y = _check_unit(y)
    out = d.pdf(y)
    return float(out) if out.ndim == 0 else out


def density_s(d: MaxEntDensity, s):
    """``exp(-s) f_Y(exp(-s))``, the density of ``S = -log Y``."""
    s = np.asarray(s, dtype=np.float64)
    if np.any(~(s >= 0)):
        raise DomainError("s must be nonnegative")
    out = np.exp(d.log_pdf(np.exp(-s)) - s)
    return float(out) if out.ndim == 0 else out


def _pdf(f):
    if isinstance(f, MaxEntDensity):
        return f.pdf
    if isinstance(f, SourceLaw):
        return f.pdf_y
    if callable(f):
        return f
    raise TypeError(f"cannot evaluate {type(f).__name__} as a density")


def _log_pdf(f):
    if isinstance(f, MaxEntDensity):
        return f.log_pdf
    pdf = _pdf(f)

    def logf(y):
        with np.errstate(divide="ignore"):
            return np.log(pdf(y))

    return logf


def entropy(f, q: QuadratureSpec = DEFAULT_SPEC) -> float:
    """``-int f log f`` over (0, 1] in nats, with ``0 log 0 = 0``.

    For a :class:`MaxEntDensity` this integrates directly and is independent
    of the stored ``entropy`` field, which comes from the dual value.
    A :class:`DensityTable` is integrated by Simpson's rule on its grid.
    """
    if isinstance(f, DensityTable):
        if f.space != "Y":
            raise ValueError("entropy is defined for densities on the unit interval")
        return float(-sp_integrate.simpson(special.xlogy(f.values, f.values), x=f.grid))
    if isinstance(f, MaxEntDensity):
        def func(y):
            lp = f.log_pdf(y)
            return -np.exp(lp) * lp
    else:
        pdf = _pdf(f)

        def func(y):
            v = pdf(y)
            return -special.xlogy(v, v)

    value, _ = integrate(Integrand(func), q)
    return value


def kullback(f, g, q: QuadratureSpec = DEFAULT_SPEC) -> float:
    """``int f log(f / g)`` over (0, 1].

    Returns ``inf`` when ``g`` vanishes at a node where ``f`` is positive.
    """
    logf, logg = _log_pdf(f), _log_pdf(g)
    mismatch = []

    def func(y):
        lf, lg = logf(y), logg(y)
        fy = np.exp(lf)
        bad = (fy > 0) & np.isneginf(lg)
        if np.any(bad):
            mismatch.append(True)
            lg = np.where(bad, 0.0, lg)
        with np.errstate(invalid="ignore"):
            out = fy * (lf - lg)
        return np.where(fy > 0, out, 0.0)

    value, _ = integrate(Integrand(func), q)
    if mismatch:
        return math.inf
    return value


def _probe_grid(n_geo=60, n_lin=400):
    geo = np.geomspace(1e-15, 1e-2, n_geo)
    lin = np.linspace(1e-2, 1.0, n_lin)
    return np.unique(np.concatenate([geo, lin]))


def _sign_changes(h, lo, hi, probe):
    """Roots of ``h`` bracketed by sign changes on ``probe`` within (lo, hi)."""
    x = probe[(probe > lo) & (probe <= hi)]
    v = h(x)
    roots = []
    for i in np.flatnonzero(np.sign(v[:-1]) * np.sign(v[1:]) < 0):
        roots.append(optimize.brentq(lambda t: float(h(np.array([t]))[0]), x[i], x[i + 1],
                                     xtol=1e-15, rtol=4 * np.finfo(float).eps))
    return roots


def l1_distance(f, g, q: QuadratureSpec = DEFAULT_SPEC, *, lower: float = 0.0) -> float:
    """``int |f - g|`` over ``(lower, 1]``, splitting panels at sign changes of ``f - g``."""
    pf, pg = _pdf(f), _pdf(g)

    def diff(y):
        return pf(y) - pg(y)

    roots = _sign_changes(diff, lower, 1.0, _probe_grid())
    value, _ = integrate(Integrand(lambda y: np.abs(diff(y))), q, a=lower, points=roots)
    return value


def l1_distance_s(f_s, g_s, s_max: float = DEFAULT_S_MAX,
                  q: QuadratureSpec = DEFAULT_SPEC) -> float:
    """``int_0^s_max |f_s - g_s| ds`` for densities on the half-line.

    Evaluated through ``s = -log y`` on ``[exp(-s_max), 1]``, where the
    half-line maps onto a bounded interval.
    """
    def h(y):
        s = -np.log(y)
        return (f_s(s) - g_s(s)) / y

    lower = math.exp(-s_max)
    roots = _sign_changes(h, lower, 1.0, _probe_grid())
    value, _ = integrate(Integrand(lambda y: np.abs(h(y)), singular_at_zero=False), q,
                         a=lower, points=roots)
    return value


def density_table(d: MaxEntDensity, space: str = "Y", n: int = 1001,
                  s_max: float = DEFAULT_S_MAX, q: QuadratureSpec = DEFAULT_SPEC) -> DensityTable:
    """Sample ``d`` on a uniform grid: ``(0, 1]`` for Y, ``[0, s_max]`` for S.

    S tables report the mass beyond ``s_max`` as ``tail_mass``.
    """
    if n < 2:
        raise ValueError("a density table needs at least two points")
    if space == "Y":
        grid = np.linspace(0.0, 1.0, n + 1)[1:]
        return DensityTable("Y", grid, density_y(d, grid))
    if space == "S":
        grid = np.linspace(0.0, s_max, n)
        tail, _ = integrate(Integrand(d.pdf), q, a=0.0, b=math.exp(-s_max))
        return DensityTable("S", grid, density_s(d, grid), tail_mass=tail)
    raise ValueError("space must be 'Y' or 'S'")


@dataclass
class SweepEntry:
    k: int
    status: str = "ok"
    density: Optional[MaxEntDensity] = None
    entropy: float = math.nan
    iterations: int = 0
    l1_to_truth: float = math.nan
    error: Optional[str] = None


@dataclass
class SweepPair:
    k_from: int
    k_to: int
    gap: float
    l1_bound: float
    l1_direct: float
    kl_direct: float


@dataclass
class SweepReport:
    """Per-K entropies and entropy-gap diagnostics of nested maxent solutions.

    ``pairs`` link consecutive successfully solved K values; for each the
    gap ``S(f_K) - S(f_M)`` equals the divergence ``K(f_M, f_K)`` and bounds
    ``||f_M - f_K||_1`` by ``sqrt(2 gap)``.
    """

    entries: list = field(default_factory=list)
    pairs: list = field(default_factory=list)
    truth_entropy: Optional[float] = None

    @property
    def k_values(self):
        return [e.k for e in self.entries]

    @property
    def entropies(self):
        return np.array([e.entropy for e in self.entries])

    @property
    def gaps(self):
        return np.array([p.gap for p in self.pairs])

    @property
    def l1_bounds(self):
        return np.array([p.l1_bound for p in self.pairs])

    @property
    def l1_direct(self):
        return np.array([p.l1_direct for p in self.pairs])

    @property
    def l1_to_truth(self):
        return np.array([e.l1_to_truth for e in self.entries])

    def entry(self, k: int) -> SweepEntry:
        for e in self.entries:
            if e.k == k:
                return e
        raise KeyError(k)

    def pair_into(self, k: int) -> Optional[SweepPair]:
        for p in self.pairs:
            if p.k_to == k:
                return p
        return None

    def gap_between(self, k_from: int, k_to: int) -> float:
        return self.entry(k_from).entropy - self.entry(k_to).entropy


def check_nested(problems: Sequence[MomentProblem]) -> None:
    """Raise NotNested unless each problem is a prefix of the next."""
    for small, big in zip(problems, problems[1:]):
        k = small.k
        if big.k < k or not (np.array_equal(big.alphas[:k], small.alphas)
                             and np.array_equal(big.mus[:k], small.mus)):
            raise NotNested(f"problem with K={k} is not a prefix of the problem with K={big.k}")


def _nested_problems(source, scheme, k_values, q):
    if isinstance(source, SourceLaw):
        if scheme is None:
            scheme = AlphaScheme.harmonic(max(k_values))
        full = make_problem(source, scheme.with_count(max(k_values)), q)
        for k in k_values:
            if not np.array_equal(scheme.with_count(k).alphas(), full.alphas[:k]):
                raise NotNested(f"alpha scheme for K={k} is not a prefix of K={max(k_values)}")
        return [full.truncated(k) for k in k_values]
    if isinstance(source, MomentProblem):
        if max(k_values) > source.k:
            raise ValueError(f"problem has {source.k} moments, sweep asks for {max(k_values)}")
        return [source.truncated(k) for k in k_values]
    problems = list(source)
    if [p.k for p in problems] != list(k_values):
        raise ValueError("one problem per k value is required")
    check_nested(problems)
    return problems


def sweep(source, scheme: Optional[AlphaScheme] = None, k_values: Sequence[int] = (2, 4, 6, 8),
          cfg: SolverConfig = SolverConfig(), q: QuadratureSpec = DEFAULT_SPEC,
          truth=None) -> SweepReport:
    """Solve nested truncated problems and collect the entropy-gap diagnostics.

    ``source`` is a SourceLaw (moments from ``scheme``, truth density known),
    a MomentProblem (its exponent prefixes are used), or a sequence of
    already nested MomentProblems. ``truth`` overrides the reference density
    for ``l1_to_truth``. Solver failures are recorded per entry.
    """
    k_values = [int(k) for k in k_values]
    if not k_values or any(b <= a for a, b in zip(k_values, k_values[1:])) or k_values[0] < 1:
        raise ValueError("k_values must be strictly increasing positive integers")
    if truth is None and isinstance(source, SourceLaw):
        truth = source
    problems = _nested_problems(source, scheme, k_values, q)

    report = SweepReport()
    if truth is not None:
        report.truth_entropy = entropy(truth, q)
    for k, prob in zip(k_values, problems):
        entry = SweepEntry(k)
        try:
            d, _ = solve(prob, cfg, q)
        except MaxEntError as exc:
            entry.status = type(exc).__name__
            entry.error = str(exc)
        else:
            entry.density = d
            entry.entropy = d.entropy
            entry.iterations = d.iterations
            if truth is not None:
                entry.l1_to_truth = l1_distance(d, truth, q)
        report.entries.append(entry)

    solved = [e for e in report.entries if e.density is not None]
    for a, b in zip(solved, solved[1:]):
        gap = a.entropy - b.entropy
        report.pairs.append(SweepPair(
            k_from=a.k, k_to=b.k, gap=gap,
            l1_bound=math.sqrt(2.0 * max(gap, 0.0)),
            l1_direct=l1_distance(b.density, a.density, q),
            kl_direct=kullback(b.density, a.density, q),
        ))
    return report
