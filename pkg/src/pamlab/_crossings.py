"""Exact leader tracking for families of lines v_i(s) = lam_i - pen_i * s.

Both the finite-time cost functional (s = 1/t) and the limiting penalized
functional (s = 1/theta) are affine in s with non-negative slopes, so the
running argmax is piecewise constant with breakpoints at pairwise
crossings.  Computing those crossings exactly avoids the missed
short-lived leaders a grid scan can produce.

Ties are broken by a caller-supplied key (the maximal key wins, matching
the lexicographic maximizer convention).  At an interior crossing the
incoming leader always has the strictly larger lam, hence the larger key,
which makes the switch right-continuous in theta = 1/s automatically.
"""

from __future__ import annotations

import numpy as np


def pick_leader(values, keys):
    """Index of the maximal value, ties resolved by maximal key."""
    values = np.asarray(values, dtype=float)
    top = np.nonzero(values == values.max())[0]
    if top.size == 1:
        return int(top[0])
    return int(max(top, key=lambda i: keys[i]))


def leader_segments(lams, pens, s_hi, s_lo, keys):
    """Leaders of v_i(s) = lam_i - pen_i s as s decreases from s_hi to s_lo.

    Returns (segments, crossings): segments is a list of (s_start, index)
    with s_start the (inclusive) upper end of the segment in s; crossings
    lists the s values where the leadership changed, in decreasing order.
    """
    lams = np.asarray(lams, dtype=float)
    pens = np.asarray(pens, dtype=float)
    if not (0 < s_lo <= s_hi):
        raise ValueError("need 0 < s_lo <= s_hi")
    cur = pick_leader(lams - pens * s_hi, keys)
    segments = [(s_hi, cur)]
    crossings = []
    s_cur = s_hi
    while True:
        dlam = lams - lams[cur]
        dpen = pens - pens[cur]
        with np.errstate(divide="ignore", invalid="ignore"):
            s_star = np.where(dpen > 0, dlam / dpen, -np.inf)
        s_star[cur] = -np.inf
        cand = (s_star >= s_lo) & (s_star < s_cur)
        if not np.any(cand):
            break
        s_next = float(s_star[cand].max())
        tied = np.nonzero(cand & (s_star == s_next))[0]
        nxt = int(max(tied, key=lambda i: keys[i]))
        crossings.append(s_next)
        segments.append((s_next, nxt))
        cur = nxt
        s_cur = s_next
    return segments, crossings
