"""Vectorised double-double arithmetic (pairs hi + lo of float64 arrays).

Only what the exponent ``<lambda, y**alpha>`` needs: error-free sums and
products, exp and log. Relative accuracy is about 1e-30 away from
overflow and underflow.
"""

import numpy as np

_SPLITTER = 134217729.0  # 2**27 + 1
_LN2_HI = 6.93147180559945286227e-01
_LN2_LO = 2.31904681384629955842e-17
_EXP_HALVINGS = 10
_EXP_TERMS = 11


def two_sum(a, b):
    s = a + b
    bb = s - a
    return s, (a - (s - bb)) + (b - bb)


def quick_two_sum(a, b):
    s = a + b
    return s, b - (s - a)


def _split(a):
    c = _SPLITTER * a
    hi = c - (c - a)
    return hi, a - hi


def two_prod(a, b):
    p = a * b
    ah, al = _split(a)
    bh, bl = _split(b)
    return p, ((ah * bh - p) + ah * bl + al * bh) + al * bl


def add(ah, al, bh, bl):
    s1, s2 = two_sum(ah, bh)
    t1, t2 = two_sum(al, bl)
    s1, s2 = quick_two_sum(s1, s2 + t1)
    return quick_two_sum(s1, s2 + t2)


def mul(ah, al, bh, bl):
    p, e = two_prod(ah, bh)
    return quick_two_sum(p, e + (ah * bl + al * bh))


def mul_d(ah, al, b):
    p, e = two_prod(ah, b)
    return quick_two_sum(p, e + al * b)


def div_d(ah, al, b):
    q = ah / b
    p, e = two_prod(q, b)
    r = ((ah - p) - e + al) / b
    return quick_two_sum(q, r)


def exp(ah, al):
    """exp of a double-double; entries with ah < -745 give 0."""
    ah = np.asarray(ah, dtype=np.float64)
    al = np.asarray(al, dtype=np.float64)
    k = np.rint(ah / _LN2_HI)
    ph, pl = two_prod(k, _LN2_HI)
    rh, rl = add(ah, al, -ph, -pl)
    rh, rl = add(rh, rl, -k * _LN2_LO, np.zeros_like(rh))
    scale = 2.0 ** -_EXP_HALVINGS
    rh, rl = rh * scale, rl * scale
    # Horner form of sum r**n / n!
    sh = np.ones_like(rh)
    sl = np.zeros_like(rh)
    for n in range(_EXP_TERMS, 0, -1):
        th, tl = div_d(*mul(sh, sl, rh, rl), float(n))
        sh, sl = add(np.ones_like(rh), np.zeros_like(rh), th, tl)
    for _ in range(_EXP_HALVINGS):
        sh, sl = mul(sh, sl, sh, sl)
    with np.errstate(over="ignore", under="ignore", invalid="ignore"):
        kk = k.astype(np.int64) if k.shape else int(k)
        hi = np.ldexp(sh, kk)
        lo = np.ldexp(sl, kk)
    lo = np.where(np.isfinite(hi), lo, 0.0)
    dead = ah < -745.5
    return np.where(dead, 0.0, hi), np.where(dead | (hi == 0), 0.0, lo)


def log(y):
    """log of positive float64 values as a double-double.

    ``y = m 2**e`` with ``m`` in [0.5, 1); one Newton step refines
    ``log m`` and ``e log 2`` is added exactly.
    """
    y = np.asarray(y, dtype=np.float64)
    m, e = np.frexp(y)
    l0 = np.log(m)
    eh, el = exp(-l0, np.zeros_like(l0))
    ph, pl = mul_d(eh, el, m)
    corr = (ph - 1.0) + pl
    mh, ml = two_sum(l0, corr)
    e = e.astype(np.float64)
    kh, kl = two_prod(e, _LN2_HI)
    return add(mh, ml, kh, kl + e * _LN2_LO)
