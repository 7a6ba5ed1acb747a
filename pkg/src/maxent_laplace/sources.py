"""Moment problems from analytic laws, samples, or exponent schemes.

A nonnegative variable ``S`` is mapped to ``Y = exp(-S)`` on (0, 1], so the
Laplace transform ``E[exp(-alpha S)]`` equals the fractional moment
``E[Y**alpha]`` and ``f_Y(y) = f_S(-log y) / y``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import special

from .errors import NegativeSample, TooFewSamples
from .problem import MomentProblem, QuadratureSpec
from .quadrature import DEFAULT_SPEC, Integrand, integrate

MIN_SAMPLES = 100
_CHUNK = 1 << 16
_S_AT_ONE = 2.0 ** -54


class SourceLaw:
    """Base class of the built-in laws of ``S >= 0``."""

    def laplace(self, alpha: float, spec: QuadratureSpec = DEFAULT_SPEC) -> float:
        raise NotImplementedError

    def logpdf_s(self, s):
        raise NotImplementedError

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def pdf_s(self, s):
        s = np.asarray(s, dtype=np.float64)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            out = np.exp(self.logpdf_s(s))
        return np.where(s >= 0, np.nan_to_num(out, nan=0.0, posinf=np.inf), 0.0)

    def pdf_y(self, y):
        """Density of ``Y = exp(-S)`` on (0, 1].

        ``y == 1.0`` stands for its rounding neighbourhood, evaluated at
        ``s = 2**-54``, so laws with ``f_S(0) = inf`` stay finite.
        """
        y = np.asarray(y, dtype=np.float64)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            s = np.maximum(-np.log(y), _S_AT_ONE)
            out = np.exp(self.logpdf_s(s) + s)
        return np.nan_to_num(out, nan=0.0)

    def __call__(self, y):
        return self.pdf_y(y)


@dataclass(frozen=True)
class Exponential(SourceLaw):
    rate: float

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError("exponential rate must be positive")

    def laplace(self, alpha, spec=DEFAULT_SPEC):
        return self.rate / (self.rate + alpha)

    def logpdf_s(self, s):
        return math.log(self.rate) - self.rate * np.asarray(s, dtype=np.float64)

    def sample(self, n, rng):
        return rng.exponential(1.0 / self.rate, size=n)


@dataclass(frozen=True)
class Gamma(SourceLaw):
    shape: float
    rate: float

    def __post_init__(self):
        if not (self.shape > 0 and self.rate > 0):
            raise ValueError("gamma shape and rate must be positive")

    def laplace(self, alpha, spec=DEFAULT_SPEC):
        return (self.rate / (self.rate + alpha)) ** self.shape

    def logpdf_s(self, s):
        s = np.asarray(s, dtype=np.float64)
        return (self.shape * math.log(self.rate) - special.gammaln(self.shape)
                + special.xlogy(self.shape - 1.0, s) - self.rate * s)

    def sample(self, n, rng):
        return rng.gamma(self.shape, 1.0 / self.rate, size=n)


@dataclass(frozen=True)
class LogNormal(SourceLaw):
    mu_log: float
    sigma_log: float

    def __post_init__(self):
        if not self.sigma_log > 0:
            raise ValueError("lognormal sigma must be positive")

    def laplace(self, alpha, spec=DEFAULT_SPEC):
        # E[exp(-alpha S)] = int_0^1 y**(alpha - 1) f_S(-log y) dy
        def func(y):
            s = -np.log(y)
            with np.errstate(divide="ignore", over="ignore"):
                return np.exp((1.0 - alpha) * s + self.logpdf_s(s))

        value, _ = integrate(Integrand(func), spec)
        return value

    def logpdf_s(self, s):
        s = np.asarray(s, dtype=np.float64)
        with np.errstate(divide="ignore"):
            ls = np.log(s)
        z = (ls - self.mu_log) / self.sigma_log
        return -0.5 * z * z - ls - math.log(self.sigma_log * math.sqrt(2.0 * math.pi))

    def sample(self, n, rng):
        return rng.lognormal(self.mu_log, self.sigma_log, size=n)


@dataclass(frozen=True)
class Mixture(SourceLaw):
    weights: tuple
    components: tuple

    def __post_init__(self):
        w = tuple(float(x) for x in self.weights)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "components", tuple(self.components))
        if len(w) != len(self.components) or not w:
            raise ValueError("mixture needs one weight per component")
        if any(x < 0 for x in w) or abs(math.fsum(w) - 1.0) > 1e-12:
            raise ValueError("mixture weights must be nonnegative and sum to 1")

    def laplace(self, alpha, spec=DEFAULT_SPEC):
        return math.fsum(w * c.laplace(alpha, spec) for w, c in zip(self.weights, self.components))

    def pdf_s(self, s):
        return sum(w * c.pdf_s(s) for w, c in zip(self.weights, self.components))

    def pdf_y(self, y):
        return sum(w * c.pdf_y(y) for w, c in zip(self.weights, self.components))

    def logpdf_s(self, s):
        with np.errstate(divide="ignore"):
            return np.log(self.pdf_s(s))

    def sample(self, n, rng):
        which = rng.choice(len(self.weights), size=n, p=np.asarray(self.weights))
        out = np.empty(n)
        for j, comp in enumerate(self.components):
            mask = which == j
            out[mask] = comp.sample(int(mask.sum()), rng)
        return out


@dataclass(frozen=True)
class AlphaScheme:
    """Exponent sequence ``alpha_n``: harmonic ``1/n``, scaled ``c/n``, or explicit.

    Harmonic and scaled sequences decrease to 0 with divergent sum, so any
    prefix extends to a determining sequence for laws on [0, 1].
    """

    kind: str
    count: int
    scale: float = 1.0
    values: tuple = ()

    def __post_init__(self):
        if self.kind not in ("harmonic", "scaled", "explicit"):
            raise ValueError(f"unknown alpha scheme {self.kind!r}")
        if self.kind == "explicit":
            vals = tuple(float(v) for v in self.values)
            object.__setattr__(self, "values", vals)
            if self.count != len(vals):
                object.__setattr__(self, "count", len(vals))
            arr = np.asarray(vals)
            if arr.size == 0 or np.any(arr <= 0) or np.any(np.diff(arr) >= 0):
                raise ValueError("explicit exponents must be positive and strictly decreasing")
        elif self.kind == "scaled" and not self.scale > 0:
            raise ValueError("scale must be positive")
        if self.count < 1:
            raise ValueError("an alpha scheme needs count >= 1")

    @classmethod
    def harmonic(cls, k: int) -> "AlphaScheme":
        return cls("harmonic", int(k))

    @classmethod
    def scaled(cls, c: float, k: int) -> "AlphaScheme":
        return cls("scaled", int(k), scale=float(c))

    @classmethod
    def explicit(cls, values: Sequence[float]) -> "AlphaScheme":
        return cls("explicit", len(values), values=tuple(values))

    def alphas(self, k: int | None = None) -> np.ndarray:
        k = self.count if k is None else int(k)
        if not 1 <= k <= self.count:
            raise ValueError(f"scheme provides {self.count} exponents, asked for {k}")
        if self.kind == "explicit":
            return np.asarray(self.values[:k])
        c = 1.0 if self.kind == "harmonic" else self.scale
        return c / np.arange(1, k + 1, dtype=np.float64)

    def with_count(self, k: int) -> "AlphaScheme":
        if self.kind == "explicit":
            return AlphaScheme.explicit(self.values[:k])
        return AlphaScheme(self.kind, int(k), scale=self.scale)


def laplace_at(law: SourceLaw, alpha: float, spec: QuadratureSpec = DEFAULT_SPEC) -> float:
    """``E[exp(-alpha S)]`` for ``alpha > 0``."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    return float(law.laplace(float(alpha), spec))


def make_problem(law: SourceLaw, scheme: AlphaScheme, spec: QuadratureSpec = DEFAULT_SPEC,
                 label: str | None = None) -> MomentProblem:
    alphas = scheme.alphas()
    mus = [laplace_at(law, a, spec) for a in alphas]
    return MomentProblem(alphas, mus, label=label)


def empirical_moments(samples, alphas) -> np.ndarray:
    """Plug-in estimates ``mean(exp(-alpha_i s_j))``, accumulated chunk by chunk."""
    samples = np.asarray(samples, dtype=np.float64).reshape(-1)
    alphas = np.asarray(alphas, dtype=np.float64)
    acc = np.zeros(alphas.size)
    for start in range(0, samples.size, _CHUNK):
        chunk = samples[start:start + _CHUNK]
        acc += np.exp(-np.multiply.outer(chunk, alphas)).sum(axis=0)
    return acc / samples.size


def empirical_problem(samples, scheme: AlphaScheme, label: str | None = None) -> MomentProblem:
    samples = np.asarray(samples, dtype=np.float64).reshape(-1)
    if samples.size < MIN_SAMPLES:
        raise TooFewSamples(f"need at least {MIN_SAMPLES} samples, got {samples.size}")
    if not np.all(np.isfinite(samples)):
        raise ValueError("samples must be finite")
    if np.any(samples < 0):
        i = int(np.flatnonzero(samples < 0)[0])
        raise NegativeSample(f"sample {i} is negative ({float(samples[i])!r})")
    alphas = scheme.alphas()
    return MomentProblem(alphas, empirical_moments(samples, alphas), label=label)
