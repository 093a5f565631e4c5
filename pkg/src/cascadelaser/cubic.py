"""Vectorized real-root solver for batches of cubic polynomials.

Closed-form (trigonometric / Cardano) solution followed by a Newton polish;
coefficients are normalized by the leading coefficient to limit cancellation.
Designed for the million-cell phase-diagram sweeps where per-root eigenvalue
methods would dominate the runtime.
"""

from __future__ import annotations

import numpy as np

__all__ = ["real_cubic_roots"]

_REL_DISC_TOL = 1e-12


def _polish(roots, b, c, d, iterations=3):
    """Newton-polish roots of x^3 + b x^2 + c x + d (NaN entries pass through)."""
    x = roots
    for _ in range(iterations):
        f = ((x + b) * x + c) * x + d
        fp = (3.0 * x + 2.0 * b) * x + c
        step = np.where(np.abs(fp) > 0, f / np.where(fp == 0, 1.0, fp), 0.0)
        x = x - step
    return x


def real_cubic_roots(c3, c2, c1, c0):
    """Real roots of c3 x^3 + c2 x^2 + c1 x + c0 with c3 > 0.

    Parameters are broadcastable arrays. Returns ``(roots, counts)`` where
    ``roots`` has shape ``(..., 3)``, holds real roots sorted ascending and
    NaN-padded, and ``counts`` is the number of real roots (1 or 3; a double
    root at a fold is reported as part of the three-root branch).
    """
    c3, c2, c1, c0 = np.broadcast_arrays(*np.atleast_1d(c3, c2, c1, c0))
    if np.any(c3 <= 0):
        raise ValueError("leading coefficient must be positive")
    b = c2 / c3
    c = c1 / c3
    d = c0 / c3
    # depressed cubic t^3 + p t + q with x = t - b/3
    p = c - b * b / 3.0
    q = 2.0 * b ** 3 / 27.0 - b * c / 3.0 + d
    disc = (q / 2.0) ** 2 + (p / 3.0) ** 3
    scale = np.maximum((q / 2.0) ** 2, np.abs(p / 3.0) ** 3)
    out = np.full(b.shape + (3,), np.nan)
    counts = np.ones(b.shape, dtype=int)

    three = disc < -_REL_DISC_TOL * scale
    border = np.abs(disc) <= _REL_DISC_TOL * scale
    one = ~(three | border)

    if np.any(three | border):
        m = three | border
        pm = p[m]
        qm = q[m]
        r = np.sqrt(np.maximum(-pm / 3.0, 0.0))
        # guard r == 0 (triple root)
        safe_r = np.where(r > 0, r, 1.0)
        arg = np.clip(qm / (2.0 * safe_r ** 3), -1.0, 1.0)
        theta = np.arccos(-arg)
        k = np.arange(3.0)
        t = 2.0 * safe_r[..., None] * np.cos(
            (theta[..., None] - 2.0 * np.pi * k) / 3.0)
        t = np.where(r[..., None] > 0, t, 0.0)
        out[m] = t - (b[m] / 3.0)[..., None]
        counts[m] = 3

    if np.any(one):
        pm = p[one]
        qm = q[one]
        sq = np.sqrt(np.maximum(disc[one], 0.0))
        # avoid cancellation: pick the large-magnitude cube-root branch
        u_arg = -qm / 2.0 - np.sign(qm) * sq
        u = np.cbrt(u_arg)
        safe_u = np.where(u != 0, u, 1.0)
        t = np.where(u != 0, u - pm / (3.0 * safe_u), 0.0)
        res = np.full((int(one.sum()), 3), np.nan)
        res[:, 0] = t - b[one] / 3.0
        out[one] = res

    out = _polish(out, b[..., None], c[..., None], d[..., None])
    out = np.sort(out, axis=-1)          # NaNs sort to the end
    return out, counts
