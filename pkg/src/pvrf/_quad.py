"""Adaptive Simpson quadrature for smooth scalar integrands."""

from __future__ import annotations


def adaptive_simpson(f, a, b, tol=1e-8, max_depth=50, breakpoints=()):
    """Integral of ``f`` over [a, b] to absolute tolerance ``tol``.

    Interior ``breakpoints`` (e.g. where ``f`` changes quickly) start their
    own panels so steep regions are not stepped over.  Each panel is
    bisected until the Richardson estimate |S2 - S1| / 15 falls below its
    share of the tolerance.
    """
    if b <= a:
        return 0.0
    edges = [a] + sorted(x for x in breakpoints if a < x < b) + [b]
    # a few starting panels per segment guard against symmetric cancellations
    panels = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        step = (hi - lo) / 4
        panels += [(lo + k * step, lo + (k + 1) * step) for k in range(4)]
    total = 0.0
    width = b - a
    for lo, hi in panels:
        mid = 0.5 * (lo + hi)
        flo, fmid, fhi = f(lo), f(mid), f(hi)
        stack = [(lo, hi, flo, fmid, fhi, (hi - lo) / 6 * (flo + 4 * fmid + fhi), 0)]
        while stack:
            lo_, hi_, f0, f1, f2, whole, depth = stack.pop()
            m = 0.5 * (lo_ + hi_)
            lm, rm = 0.5 * (lo_ + m), 0.5 * (m + hi_)
            flm, frm = f(lm), f(rm)
            left = (m - lo_) / 6 * (f0 + 4 * flm + f1)
            right = (hi_ - m) / 6 * (f1 + 4 * frm + f2)
            err = left + right - whole
            if depth >= max_depth or abs(err) <= 15 * tol * (hi_ - lo_) / width:
                total += left + right + err / 15
            else:
                stack.append((m, hi_, f1, frm, f2, right, depth + 1))
                stack.append((lo_, m, f0, flm, f1, left, depth + 1))
    return total
