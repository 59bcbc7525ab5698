"""Pure-Python reduction kernels (fallback backend).

Every reduction is Kahan-compensated and runs in ascending index order.
The compiled backend executes the identical operation sequence with the
same libm calls, so results agree bit for bit; tests assert that.

Callers are expected to pass C-contiguous float64 arrays (the facade in
``kernels`` takes care of conversion).
"""

from __future__ import annotations

import math

import numpy as np

BACKEND = "python"

_INF = math.inf


def kahan_sum(values) -> float:
    """Compensated sum of ``values`` in ascending index order."""
    s = 0.0
    c = 0.0
    for v in values.tolist():
        y = v - c
        t = s + y
        c = (t - s) - y
        s = t
    return s


def weighted_sum(f, m) -> float:
    """Sum of f[k]*m[k] with the convention 0*(+-inf) = 0.

    Terms with m[k] == 0 are skipped outright.  A +inf value carried by
    positive mass raises OverflowError; a -inf value carried by positive
    mass makes the result -inf (unless a later +inf raises first).
    """
    s = 0.0
    c = 0.0
    saw_neg_inf = False
    fl = f.tolist()
    ml = m.tolist()
    for k in range(len(fl)):
        mk = ml[k]
        if mk == 0.0:
            continue
        fk = fl[k]
        if fk == _INF:
            raise OverflowError("+inf integrand on a set of positive mass")
        if fk == -_INF:
            saw_neg_inf = True
            continue
        term = fk * mk
        y = term - c
        t = s + y
        c = (t - s) - y
        s = t
    if saw_neg_inf:
        return -_INF
    return s


def kl_sum(p, q) -> float:
    """Sum of p[k]*log(p[k]/q[k]); +inf as soon as p charges a q-null node."""
    s = 0.0
    c = 0.0
    pl = p.tolist()
    ql = q.tolist()
    for k in range(len(pl)):
        pk = pl[k]
        if pk == 0.0:
            continue
        qk = ql[k]
        if qk == 0.0:
            return _INF
        term = pk * math.log(pk / qk)
        y = term - c
        t = s + y
        c = (t - s) - y
        s = t
    return s


def logsumexp_weighted(y, m) -> float:
    """log of sum of exp(y[k])*m[k] over nodes with m[k] > 0, max-shifted.

    Returns -inf when y == -inf on the whole support.  Raises ValueError
    when m has no positive entry and OverflowError when a +inf value sits
    on positive mass.
    """
    yl = y.tolist()
    ml = m.tolist()
    n = len(yl)
    shift = -_INF
    any_mass = False
    for k in range(n):
        if ml[k] > 0.0:
            any_mass = True
            yk = yl[k]
            if yk == _INF:
                raise OverflowError("+inf exponent on a set of positive mass")
            if yk > shift:
                shift = yk
    if not any_mass:
        raise ValueError("measure has no positive mass")
    if shift == -_INF:
        return -_INF
    s = 0.0
    c = 0.0
    for k in range(n):
        mk = ml[k]
        if mk == 0.0:
            continue
        term = math.exp(yl[k] - shift) * mk
        u = term - c
        t = s + u
        c = (t - s) - u
        s = t
    return shift + math.log(s)


def tilted_moments(z, m, alpha: float) -> tuple[float, float, float]:
    """Log-partition and first two tilted moments of z under m.

    Returns (phi, dphi, d2phi) where phi = log sum exp(alpha*z[k])*m[k],
    dphi is the tilted mean of z and d2phi the tilted variance.  z must be
    finite wherever m carries mass; raises ValueError on an empty support.
    """
    zl = z.tolist()
    ml = m.tolist()
    n = len(zl)
    shift = -_INF
    any_mass = False
    for k in range(n):
        if ml[k] > 0.0:
            any_mass = True
            e = alpha * zl[k]
            if e > shift:
                shift = e
    if not any_mass:
        raise ValueError("measure has no positive mass")
    s0 = 0.0
    c0 = 0.0
    s1 = 0.0
    c1 = 0.0
    s2 = 0.0
    c2 = 0.0
    for k in range(n):
        mk = ml[k]
        if mk == 0.0:
            continue
        zk = zl[k]
        w = math.exp(alpha * zk - shift) * mk
        y = w - c0
        t = s0 + y
        c0 = (t - s0) - y
        s0 = t
        term1 = w * zk
        y = term1 - c1
        t = s1 + y
        c1 = (t - s1) - y
        s1 = t
        term2 = w * zk * zk
        y = term2 - c2
        t = s2 + y
        c2 = (t - s2) - y
        s2 = t
    phi = shift + math.log(s0)
    dphi = s1 / s0
    d2phi = s2 / s0 - dphi * dphi
    return phi, dphi, d2phi


def abs_diff_sum(a, b) -> float:
    """Sum of |a[k] - b[k]| in ascending index order (total variation)."""
    s = 0.0
    c = 0.0
    al = a.tolist()
    bl = b.tolist()
    for k in range(len(al)):
        term = abs(al[k] - bl[k])
        y = term - c
        t = s + y
        c = (t - s) - y
        s = t
    return s


def pava(values, weights):
    """Weighted isotonic regression by pool-adjacent-violators.

    Pools only strict descents of adjacent block means, so ties are left
    alone.  Preserves the weighted mean exactly up to rounding.
    """
    vl = values.tolist()
    wl = weights.tolist()
    n = len(vl)
    # parallel stacks of block aggregates
    bw = [0.0] * n   # block weight
    bwv = [0.0] * n  # block weight*value sum
    cnt = [0] * n    # block length
    top = -1
    for k in range(n):
        top += 1
        bw[top] = wl[k]
        bwv[top] = wl[k] * vl[k]
        cnt[top] = 1
        while top > 0 and bwv[top - 1] * bw[top] > bwv[top] * bw[top - 1]:
            # previous block mean strictly exceeds current block mean: pool
            bw[top - 1] = bw[top - 1] + bw[top]
            bwv[top - 1] = bwv[top - 1] + bwv[top]
            cnt[top - 1] = cnt[top - 1] + cnt[top]
            top -= 1
    out = np.empty(n, dtype=np.float64)
    pos = 0
    for j in range(top + 1):
        mean = bwv[j] / bw[j]
        for _ in range(cnt[j]):
            out[pos] = mean
            pos += 1
    return out
