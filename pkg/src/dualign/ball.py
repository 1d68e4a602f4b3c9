"""Poincare-ball geometry at curvature -c: origin exp/log maps, projection,
and the geodesic distance used for diagnostics.

Points live in the open ball sqrt(c)*||x|| < 1. Rows of a Tensor are treated
as independent points (exp/log) or tangent vectors. Both maps handle zero
rows analytically: the map is the identity there and its Jacobian tends to
the identity, so gradients stay finite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .autodiff import DomainError, Tensor, _result, _send

# Rows are kept at L2 norm <= (1 - BALL_MARGIN)/sqrt(c); prevents artanh
# blow-up at the boundary.
BALL_MARGIN = 1e-5


@dataclass(frozen=True)
class Curvature:
    """Positive curvature magnitude c of the ball (curvature is -c)."""

    c: float

    def __post_init__(self):
        if not (self.c > 0.0):
            raise ValueError(f"curvature magnitude must be positive, got {self.c}")

    @property
    def sqrt(self) -> float:
        return math.sqrt(self.c)


def _cval(c) -> float:
    if isinstance(c, Curvature):
        return c.c
    c = float(c)
    if not c > 0.0:
        raise ValueError(f"curvature magnitude must be positive, got {c}")
    return c


@dataclass(frozen=True)
class BallPoint:
    """A single point strictly inside the ball, with margin."""

    coords: np.ndarray
    curvature: Curvature

    def __post_init__(self):
        r = float(np.linalg.norm(self.coords))
        if self.curvature.sqrt * r > 1.0 - BALL_MARGIN + 1e-12:
            raise ValueError(f"point with sqrt(c)*norm {self.curvature.sqrt * r} is outside the ball margin")


def _row_norms(a: np.ndarray) -> np.ndarray:
    return np.sqrt((a * a).sum(axis=1, keepdims=True))


def project_to_ball(x: Tensor, c=1.0) -> Tensor:
    """Rescale rows with sqrt(c)*norm > 1 - margin back onto the margin sphere.

    Idempotent; rows already inside pass through bit-identically.
    """
    cc = _cval(c)
    limit = (1.0 - BALL_MARGIN) / math.sqrt(cc)
    r = _row_norms(x.data)
    # tolerance keeps re-projection of an already-projected row a no-op
    mask = r > limit * (1.0 + 1e-12)
    if not mask.any():

        def bw_id(g, scr):
            _send(scr, x, g)

        return _result(x.data.copy(), (x,), bw_id)

    scale_col = np.where(mask, limit / np.where(mask, r, 1.0), 1.0)
    y = x.data * scale_col

    def bw(g, scr):
        dot = (g * x.data).sum(axis=1, keepdims=True)
        inside = g * scale_col
        shrunk = inside - np.where(mask, limit * dot / np.maximum(r, 1e-12) ** 3, 0.0) * x.data
        _send(scr, x, shrunk)

    return _result(y, (x,), bw)


def _exp_map0_raw(alpha: Tensor, cc: float) -> Tensor:
    sc = math.sqrt(cc)
    r = _row_norms(alpha.data)
    u = sc * r
    pos = u > 0.0
    safe_u = np.where(pos, u, 1.0)
    t = np.tanh(u)
    s = np.where(pos, t / safe_u, 1.0)
    y = alpha.data * s

    # d/d(alpha) of s(r)*alpha: s*I + (s'(r)/r) * alpha alpha^T, with
    # s'(r)/r = c*((1-t^2)u - t)/u^3 -> -2c/3 as u -> 0.
    small = u < 1e-2
    w_series = cc * (-2.0 / 3.0 + (8.0 / 15.0) * u * u)
    with np.errstate(divide="ignore", invalid="ignore"):
        w_direct = cc * ((1.0 - t * t) * u - t) / safe_u**3
    w = np.where(small, w_series, w_direct)

    def bw(g, scr):
        dot = (g * alpha.data).sum(axis=1, keepdims=True)
        _send(scr, alpha, g * s + w * dot * alpha.data)

    return _result(y, (alpha,), bw)


def exp_map0(alpha: Tensor, c=1.0) -> Tensor:
    """Map tangent rows at the origin into the ball:
    y = tanh(sqrt(c)||a||) * a / (sqrt(c)||a||), then ball projection."""
    cc = _cval(c)
    return project_to_ball(_exp_map0_raw(alpha, cc), cc)


def log_map0(beta: Tensor, c=1.0) -> Tensor:
    """Map ball rows back to the tangent space at the origin:
    x = artanh(sqrt(c)||b||) * b / (sqrt(c)||b||)."""
    cc = _cval(c)
    sc = math.sqrt(cc)
    r = _row_norms(beta.data)
    u = sc * r
    if (u >= 1.0).any():
        row = int(np.argwhere(u >= 1.0)[0][0])
        raise DomainError(f"log_map0: row {row} lies on or outside the ball boundary (sqrt(c)*norm={float(u[row, 0])!r})")
    pos = u > 0.0
    safe_u = np.where(pos, u, 1.0)
    at = np.arctanh(u)
    q = np.where(pos, at / safe_u, 1.0)
    y = beta.data * q

    # q'(r)/r = c*(u/(1-u^2) - artanh(u))/u^3 -> 2c/3 as u -> 0.
    small = u < 1e-2
    v_series = cc * (2.0 / 3.0 + (4.0 / 5.0) * u * u)
    with np.errstate(divide="ignore", invalid="ignore"):
        v_direct = cc * (u / (1.0 - u * u) - at) / safe_u**3
    v = np.where(small, v_series, v_direct)

    def bw(g, scr):
        dot = (g * beta.data).sum(axis=1, keepdims=True)
        _send(scr, beta, g * q + v * dot * beta.data)

    return _result(y, (beta,), bw)


def mobius_add(a: np.ndarray, b: np.ndarray, c=1.0) -> np.ndarray:
    """Mobius addition of two in-ball vectors (plain numpy, non-differentiable)."""
    cc = _cval(c)
    ab = float(np.dot(a, b))
    na2 = float(np.dot(a, a))
    nb2 = float(np.dot(b, b))
    num = (1.0 + 2.0 * cc * ab + cc * nb2) * a + (1.0 - cc * na2) * b
    den = 1.0 + 2.0 * cc * ab + cc * cc * na2 * nb2
    return num / den


def hyperbolic_distance(u: np.ndarray, v: np.ndarray, c=1.0) -> float:
    """Geodesic distance d(u, v) = (2/sqrt(c)) * artanh(sqrt(c)||(-u) + v||_Mobius).

    Diagnostic/test helper; not part of the differentiable training path.
    """
    cc = _cval(c)
    sc = math.sqrt(cc)
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    for name, x in (("u", u), ("v", v)):
        if sc * np.linalg.norm(x) >= 1.0:
            raise DomainError(f"hyperbolic_distance: {name} lies on or outside the ball")
    m = mobius_add(-u, v, cc)
    arg = min(sc * float(np.linalg.norm(m)), 1.0 - 1e-16)
    return (2.0 / sc) * math.atanh(arg)
