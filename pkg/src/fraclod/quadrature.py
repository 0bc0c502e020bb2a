"""Quadrature against the weight y^a on intervals and simplices.

The last coordinate of every point is the extension variable y. Simplices
whose vertices sit on exactly two y-levels (every element of a cylinder mesh)
are integrated through the join parametrization

    x = (1 - t) P + t Q,   P in bottom face, Q in top face,

whose volume density is proportional to (1 - t)^p t^q. When the bottom level
is y = 0 the weight becomes (dy t)^a and folds into a Gauss-Jacobi rule in t,
which makes the rule exact for polynomials. Above the plane y^a is analytic
and a Gauss rule with extra nodes is used.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.spatial import Delaunay

from .errors import DomainError

# t-nodes used when y^a is smooth on the element (bottom level above y = 0)
SMOOTH_NODES = 10


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray
    weight_exponent: float
    exactness_degree: int

    def integrate(self, g) -> float:
        return float(np.dot(self.weights, g(self.points)))


def beta_fn(x: float, y: float) -> float:
    return math.exp(math.lgamma(x) + math.lgamma(y) - math.lgamma(x + y))


@lru_cache(maxsize=None)
def jacobi_nodes(n: int, alpha: float, beta: float) -> tuple[np.ndarray, np.ndarray]:
    """Gauss rule on (0, 1) for the weight (1 - t)^alpha t^beta.

    Returns nodes and weights normalized to sum to one; multiply by
    B(alpha + 1, beta + 1) for the unnormalized rule. Golub-Welsch on the
    three-term recurrence of the Jacobi polynomials on [-1, 1].
    """
    if n < 1:
        raise DomainError("need at least one node")
    if alpha <= -1 or beta <= -1:
        raise DomainError("Jacobi exponents must exceed -1")
    s = alpha + beta
    k = np.arange(n, dtype=float)
    diag = np.empty(n)
    diag[0] = (beta - alpha) / (s + 2.0)
    kk = k[1:]
    diag[1:] = (beta**2 - alpha**2) / ((2 * kk + s) * (2 * kk + s + 2))
    off = np.empty(max(n - 1, 0))
    if n > 1:
        off[0] = 4.0 * (1 + alpha) * (1 + beta) / ((2 + s) ** 2 * (3 + s))
        kk = np.arange(2, n, dtype=float)
        off[1:] = (
            4.0 * kk * (kk + alpha) * (kk + beta) * (kk + s)
            / ((2 * kk + s) ** 2 * (2 * kk + s + 1) * (2 * kk + s - 1))
        )
    if n == 1:
        x, vecs = diag.copy(), np.ones((1, 1))
    else:
        x, vecs = eigh_tridiagonal(diag, np.sqrt(off))
    w = vecs[0] ** 2
    w = w / w.sum()
    t = 0.5 * (x + 1.0)
    t.setflags(write=False)
    w.setflags(write=False)
    return t, w


def jacobi_rule_1d(a: float, n: int) -> QuadratureRule:
    """n-point Gauss rule on (0, 1) for the weight y^a, exact to degree 2n - 1."""
    if not -1.0 < a < 1.0:
        raise DomainError(f"weight exponent must lie in (-1, 1), got {a!r}")
    t, w = jacobi_nodes(n, 0.0, float(a))
    return QuadratureRule(t[:, None].copy(), w / (1.0 + a), float(a), 2 * n - 1)


def _npts(degree: int) -> int:
    return max(1, (degree + 2) // 2)


@lru_cache(maxsize=None)
def simplex_bary_rule(r: int, degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Collapsed Gauss rule on the r-simplex in barycentric coordinates.

    Weights sum to one (the rule computes averages).
    """
    if r == 0:
        return np.ones((1, 1)), np.ones(1)
    t, wt = jacobi_nodes(_npts(degree), 0.0, float(r - 1))
    sub, wsub = simplex_bary_rule(r - 1, degree)
    bary = np.concatenate(
        [np.repeat(1.0 - t, len(wsub))[:, None], np.kron(t[:, None], sub)], axis=1
    )
    return bary, np.kron(wt, wsub)


@lru_cache(maxsize=None)
def _join_template(m_bottom: int, m_top: int, degree: int, t_alpha: float,
                   t_beta: float, n_t: int):
    p_bary, p_w = simplex_bary_rule(m_bottom - 1, degree)
    q_bary, q_w = simplex_bary_rule(m_top - 1, degree)
    t, wt = jacobi_nodes(n_t, t_alpha, t_beta)
    rows, ws, ts = [], [], []
    for ti, wti in zip(t, wt):
        for pb, pw in zip(p_bary, p_w):
            for qb, qw in zip(q_bary, q_w):
                rows.append(np.concatenate([(1.0 - ti) * pb, ti * qb]))
                ws.append(wti * pw * qw)
                ts.append(ti)
    return np.array(rows), np.array(ws), np.array(ts)


def join_rule(m_bottom: int, m_top: int, a: float, y_bottom, dy, degree: int):
    """Barycentric rule for a two-level simplex, bottom vertices listed first.

    ``y_bottom`` and ``dy`` may be arrays (one entry per element, all with the
    same bottom/top split and either all on or all above y = 0). Returns the
    barycentric points (nq, m_bottom + m_top) and weights (n_elem, nq) such that
    sum(w * g) equals the mean of g y^a over the element.
    """
    p, q = m_bottom - 1, m_top - 1
    y_bottom = np.atleast_1d(np.asarray(y_bottom, dtype=float))
    dy = np.atleast_1d(np.asarray(dy, dtype=float))
    if np.all(y_bottom == 0.0):
        bary, w, _ = _join_template(m_bottom, m_top, degree, float(p), q + a, _npts(degree))
        factor = beta_fn(q + a + 1, p + 1) / beta_fn(q + 1, p + 1)
        return bary, (dy**a)[:, None] * factor * w[None, :]
    if np.any(y_bottom <= 0.0):
        raise DomainError("elements on and above y = 0 must be grouped separately")
    n_t = max(_npts(degree), SMOOTH_NODES)
    bary, w, t = _join_template(m_bottom, m_top, degree, float(p), float(q), n_t)
    yq = y_bottom[:, None] + t[None, :] * dy[:, None]
    return bary, w[None, :] * yq**a


def _simplex_volume(v: np.ndarray) -> float:
    n = v.shape[0] - 1
    return abs(np.linalg.det(v[1:] - v[0])) / math.factorial(n)


def _split_levels(v: np.ndarray, tol: float):
    y = v[:, -1]
    order = np.argsort(y, kind="stable")
    v, y = v[order], y[order]
    m_b = int(np.sum(np.abs(y - y[0]) <= tol))
    if np.all(np.abs(y[m_b:] - y[-1]) <= tol):
        return v, m_b
    return v, None


def _two_level_pieces(v: np.ndarray, tol: float) -> list[np.ndarray]:
    """Cut a simplex by horizontal planes through its vertices into two-level simplices."""
    levels = np.unique(np.round(v[:, -1], 14))
    pieces = []
    n = v.shape[0]
    for lo, hi in zip(levels[:-1], levels[1:]):
        pts = []
        for i in range(n):
            if lo - tol <= v[i, -1] <= hi + tol:
                pts.append(v[i])
            for j in range(i + 1, n):
                yi, yj = v[i, -1], v[j, -1]
                for lev in (lo, hi):
                    if min(yi, yj) + tol < lev < max(yi, yj) - tol:
                        s = (lev - yi) / (yj - yi)
                        pts.append(v[i] + s * (v[j] - v[i]))
        pts = np.unique(np.round(np.array(pts), 14), axis=0)
        tri = Delaunay(pts)
        for simp in tri.simplices:
            sv = pts[simp]
            if _simplex_volume(sv) > 1e-14 * max(1.0, _simplex_volume(v)):
                pieces.append(sv)
    return pieces


def weighted_simplex_quadrature(simplex, a: float, degree: int = 2) -> QuadratureRule:
    """Rule on a simplex for integrals of g y^a, exact to ``degree`` on y = 0 elements.

    ``simplex`` holds vertex coordinates, one row per vertex, y last.
    """
    v = np.asarray(simplex, dtype=float)
    if np.any(v[:, -1] < 0.0):
        raise DomainError("simplex reaches below y = 0")
    if not -1.0 < a < 1.0:
        raise DomainError(f"weight exponent must lie in (-1, 1), got {a!r}")
    vol = _simplex_volume(v)
    if vol <= 0.0:
        raise DomainError("degenerate simplex")
    tol = 1e-13 * max(1.0, float(np.ptp(v[:, -1])))
    sorted_v, m_b = _split_levels(v, tol)
    if m_b is None:
        parts = [weighted_simplex_quadrature(p, a, degree) for p in _two_level_pieces(v, tol)]
        return QuadratureRule(
            np.concatenate([r.points for r in parts]),
            np.concatenate([r.weights for r in parts]),
            float(a),
            degree,
        )
    y_b = sorted_v[0, -1]
    dy = sorted_v[-1, -1] - y_b
    if abs(y_b) <= tol:
        y_b = 0.0
    bary, w = join_rule(m_b, len(v) - m_b, a, y_b, dy, degree)
    return QuadratureRule(bary @ sorted_v, vol * w[0], float(a), degree)


def interval_rule(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre on (0, 1), normalized weights."""
    return jacobi_nodes(_npts(degree), 0.0, 0.0)


def element_moments(m_bottom, y_bottom, dy, volume, a: float, nv: int):
    """Weighted moments of every element of a cylinder mesh.

    Returns (W0, M2) with W0[e] = int_e y^a and M2[e, i, j] = int_e b_i b_j y^a,
    b the barycentric coordinates with bottom vertices first.
    """
    ne = len(volume)
    W0 = np.empty(ne)
    M2 = np.empty((ne, nv, nv))
    for mb in np.unique(m_bottom):
        mb = int(mb)
        mt = nv - mb
        p, q = mb - 1, mt - 1
        for on_plane in (True, False):
            sel = (m_bottom == mb) & ((y_bottom == 0.0) == on_plane)
            if not np.any(sel):
                continue
            yb, h = y_bottom[sel], dy[sel]
            mom = {}
            if on_plane:
                b0 = beta_fn(q + 1, p + 1)
                for al, be in ((0, 0), (2, 0), (1, 1), (0, 2)):
                    mom[al, be] = h**a * beta_fn(q + be + a + 1, p + al + 1) / b0
            else:
                t, w = jacobi_nodes(SMOOTH_NODES, float(p), float(q))
                wy = (yb[:, None] + t[None, :] * h[:, None]) ** a
                for al, be in ((0, 0), (2, 0), (1, 1), (0, 2)):
                    mom[al, be] = wy @ (w * (1 - t) ** al * t**be)
            vol = volume[sel]
            W0[sel] = vol * mom[0, 0]
            blk = np.empty((int(sel.sum()), nv, nv))
            eye_b, eye_t = np.eye(mb), np.eye(mt)
            blk[:, :mb, :mb] = (mom[2, 0] / (mb * (mb + 1)))[:, None, None] * (1 + eye_b)
            blk[:, mb:, mb:] = (mom[0, 2] / (mt * (mt + 1)))[:, None, None] * (1 + eye_t)
            blk[:, :mb, mb:] = (mom[1, 1] / (mb * mt))[:, None, None]
            blk[:, mb:, :mb] = (mom[1, 1] / (mb * mt))[:, None, None]
            M2[sel] = vol[:, None, None] * blk
    return W0, M2


@dataclass(frozen=True)
class Box:
    lower: tuple
    upper: tuple


def muckenhoupt_ratio(region, a: float) -> float:
    """(mean of y^a) * (mean of y^-a) over a box or a set of mesh elements.

    ``region`` is a :class:`Box` or a pair ``(mesh, element_ids)``.
    """
    if not -1.0 < a < 1.0:
        raise DomainError(f"weight exponent must lie in (-1, 1), got {a!r}")
    if isinstance(region, Box):
        y0, y1 = float(region.lower[-1]), float(region.upper[-1])
        if y0 < 0.0:
            raise DomainError("region reaches below y = 0")
        if not y1 > y0 or any(u <= l for l, u in zip(region.lower, region.upper)):
            raise DomainError("region has zero volume")

        def mean(b):
            return (y1 ** (1 + b) - y0 ** (1 + b)) / ((1 + b) * (y1 - y0))

        return mean(a) * mean(-a)
    mesh, elements = region
    elements = np.asarray(elements)
    if np.any(mesh.vertices[mesh.simplices[elements], -1] < 0.0):
        raise DomainError("region reaches below y = 0")
    vol = mesh.volumes[elements].sum()
    if not vol > 0:
        raise DomainError("region has zero volume")
    wp = mesh.weighted_moments(a)[0][elements].sum()
    wm = mesh.weighted_moments(-a)[0][elements].sum()
    return float(wp * wm / vol**2)
