"""Planar polygon helpers: convex clipping, set differences, triangulation.

Polygons are (k, 2) float arrays of vertices in counter-clockwise order.
Only convex clip regions are supported; that is all the piecewise-affine
overlays need since every cell is a triangle.
"""
from __future__ import annotations

import numpy as np


def signed_area(poly) -> float:
    p = np.asarray(poly, dtype=float)
    if len(p) < 3:
        return 0.0
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def ccw(poly) -> np.ndarray:
    p = np.asarray(poly, dtype=float)
    return p if signed_area(p) >= 0 else p[::-1].copy()


def triangle_area(P) -> np.ndarray:
    """Signed areas of triangles ``P`` with shape (..., 3, 2)."""
    P = np.asarray(P, dtype=float)
    a, b, c = P[..., 0, :], P[..., 1, :], P[..., 2, :]
    return 0.5 * ((b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (c[..., 0] - a[..., 0]) * (b[..., 1] - a[..., 1]))


def _clip_halfplane(poly, a, b, keep_left=True):
    """Keep the part of ``poly`` left of the directed line a->b (right if not
    ``keep_left``)."""
    if len(poly) == 0:
        return poly
    d = b - a
    s = d[0] * (poly[:, 1] - a[1]) - d[1] * (poly[:, 0] - a[0])
    if not keep_left:
        s = -s
    out = []
    n = len(poly)
    for i in range(n):
        j = (i + 1) % n
        pi, pj, si, sj = poly[i], poly[j], s[i], s[j]
        if si >= 0:
            out.append(pi)
        if (si > 0 and sj < 0) or (si < 0 and sj > 0):
            t = si / (si - sj)
            out.append(pi + t * (pj - pi))
    return np.asarray(out, dtype=float).reshape(-1, 2)


def clip_convex(subject, clipper) -> np.ndarray:
    """Intersection of a convex ``subject`` with a convex ``clipper``
    (Sutherland-Hodgman)."""
    out = ccw(subject)
    c = ccw(clipper)
    for i in range(len(c)):
        out = _clip_halfplane(out, c[i], c[(i + 1) % len(c)])
        if len(out) == 0:
            break
    return _dedupe(out)


def convex_difference(subject, hole) -> list:
    """``subject minus hole`` for convex polygons, as disjoint convex pieces.

    Piece ``k`` is the subject clipped to the inside of hole edges ``0..k-1``
    and the outside of edge ``k``.
    """
    h = ccw(hole)
    rest = ccw(subject)
    pieces = []
    for i in range(len(h)):
        a, b = h[i], h[(i + 1) % len(h)]
        outside = _dedupe(_clip_halfplane(rest, a, b, keep_left=False))
        if len(outside) >= 3 and abs(signed_area(outside)) > 0:
            pieces.append(outside)
        rest = _dedupe(_clip_halfplane(rest, a, b, keep_left=True))
        if len(rest) < 3:
            break
    return pieces


def _dedupe(poly, tol=1e-15):
    if len(poly) == 0:
        return poly
    keep = [poly[0]]
    for p in poly[1:]:
        if np.max(np.abs(p - keep[-1])) > tol:
            keep.append(p)
    if len(keep) > 1 and np.max(np.abs(keep[0] - keep[-1])) <= tol:
        keep.pop()
    return np.asarray(keep)


def drop_collinear(poly, tol=1e-14) -> np.ndarray:
    p = np.asarray(poly, dtype=float)
    changed = True
    while changed and len(p) > 3:
        changed = False
        n = len(p)
        scale = max(1.0, float(np.max(np.abs(p))))
        for i in range(n):
            a, b, c = p[i - 1], p[i], p[(i + 1) % n]
            cr = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])
            if abs(cr) <= tol * scale * scale:
                p = np.delete(p, i, axis=0)
                changed = True
                break
    return p


def fan_triangulate(poly) -> list:
    """Triangles (3, 2) covering a convex polygon; collinear vertices are
    dropped first, so every triangle has positive area."""
    p = drop_collinear(ccw(poly))
    if len(p) < 3:
        return []
    return [np.array([p[0], p[i], p[i + 1]]) for i in range(1, len(p) - 1)]


def barycentric(P, q) -> np.ndarray:
    """Barycentric coordinates of points ``q`` (N, 2) in triangles ``P``
    (M, 3, 2); result shape (N, M, 3)."""
    P = np.asarray(P, dtype=float)
    q = np.atleast_2d(np.asarray(q, dtype=float))
    v0, v1, v2 = P[:, 0], P[:, 1], P[:, 2]
    d = (v1[:, 0] - v0[:, 0]) * (v2[:, 1] - v0[:, 1]) - (v2[:, 0] - v0[:, 0]) * (v1[:, 1] - v0[:, 1])
    qx = q[:, None, 0] - v0[None, :, 0]
    qy = q[:, None, 1] - v0[None, :, 1]
    l1 = (qx * (v2[None, :, 1] - v0[None, :, 1]) - (v2[None, :, 0] - v0[None, :, 0]) * qy) / d
    l2 = ((v1[None, :, 0] - v0[None, :, 0]) * qy - qx * (v1[None, :, 1] - v0[None, :, 1])) / d
    return np.stack([1 - l1 - l2, l1, l2], axis=-1)


def point_in_polygon(poly, q) -> np.ndarray:
    """Even-odd test for points ``q`` (N, 2) against a simple polygon;
    boundary points may go either way."""
    p = np.asarray(poly, dtype=float)
    q = np.atleast_2d(np.asarray(q, dtype=float))
    inside = np.zeros(len(q), dtype=bool)
    n = len(p)
    for i in range(n):
        a, b = p[i], p[(i + 1) % n]
        cond = (a[1] > q[:, 1]) != (b[1] > q[:, 1])
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = a[0] + (q[:, 1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1])
        inside ^= cond & (q[:, 0] < xint)
    return inside


def segment_distance(p, q, r, s) -> float:
    """Distance between closed segments ``pq`` and ``rs``."""
    p, q, r, s = (np.asarray(v, dtype=float) for v in (p, q, r, s))

    def cross(u, v):
        return u[0] * v[1] - u[1] * v[0]

    d1, d2 = q - p, s - r
    den = cross(d1, d2)
    if den != 0:
        t = cross(r - p, d2) / den
        u = cross(r - p, d1) / den
        if 0 <= t <= 1 and 0 <= u <= 1:
            return 0.0
    return min(
        point_segment_distance(p, r, s),
        point_segment_distance(q, r, s),
        point_segment_distance(r, p, q),
        point_segment_distance(s, p, q),
    )


def point_segment_distance(x, a, b) -> np.ndarray | float:
    x = np.asarray(x, dtype=float)
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    d = b - a
    t = np.clip(((x - a) @ d) / (d @ d), 0.0, 1.0)
    proj = a + np.multiply.outer(t, d)
    out = np.linalg.norm(x - proj, axis=-1)
    return float(out) if np.ndim(out) == 0 else out
