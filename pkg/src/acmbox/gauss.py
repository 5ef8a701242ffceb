"""Gaussian modelling of rotated boxes and distribution-based similarities.

A box ``(cx, cy, w, h, theta)`` becomes N(mu, Sigma) with ``mu = (cx, cy)``
and ``Sigma = R diag(w^2/4, h^2/4) R^T``. The component helpers prefixed
with ``_`` take the mean and the three distinct covariance entries
``(a, b, c)`` of ``[[a, b], [b, c]]`` and work on plain arrays or autodiff
variables alike; the public functions wrap them for :class:`Gaussian2`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import NonSPD
from .geom import RotatedBox


@dataclass(frozen=True)
class Gaussian2:
    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mu", np.asarray(self.mu, dtype=float).reshape(2))
        object.__setattr__(self, "sigma", np.asarray(self.sigma, dtype=float).reshape(2, 2))

    def validate(self) -> "Gaussian2":
        s = self.sigma
        tr = float(np.trace(s))
        if not np.all(np.isfinite(s)) or abs(s[0, 1] - s[1, 0]) > 1e-12 * max(abs(tr), 1.0):
            raise NonSPD(f"covariance is not symmetric: {s.tolist()}")
        if tr <= 0 or np.linalg.eigvalsh(s)[0] < 1e-12 * tr:
            raise NonSPD(f"covariance is not positive definite: {s.tolist()}")
        return self

    def components(self):
        s = self.sigma
        return (self.mu[0], self.mu[1], s[0, 0], 0.5 * (s[0, 1] + s[1, 0]), s[1, 1])


def box_to_gaussian(b: RotatedBox) -> Gaussian2:
    mx, my, a, bb, c = _box_components(b.cx, b.cy, b.w, b.h, b.theta)
    return Gaussian2(np.array([mx, my], dtype=float), np.array([[a, bb], [bb, c]], dtype=float))


def _box_components(cx, cy, w, h, theta):
    cs, sn = ad.cos(theta), ad.sin(theta)
    vw, vh = w * w / 4, h * h / 4
    a = vw * cs * cs + vh * sn * sn
    c = vw * sn * sn + vh * cs * cs
    b = (vw - vh) * sn * cs
    return cx, cy, a, b, c


def sqrtm_spd2(m: np.ndarray) -> np.ndarray:
    """Square root of a 2x2 SPD matrix in closed form."""
    m = np.asarray(m, dtype=float)
    a, b, c = _sqrtm_components(m[0, 0], 0.5 * (m[0, 1] + m[1, 0]), m[1, 1])
    return np.array([[a, b], [b, c]])


def _sqrtm_components(a, b, c):
    # M^(1/2) = (M + sqrt(det M) I) / sqrt(tr M + 2 sqrt(det M))
    s = ad.sqrt(a * c - b * b)
    t = ad.sqrt(a + c + 2 * s)
    return (a + s) / t, b / t, (c + s) / t


def _sym_product(p, q, r, a, b, c):
    """S B S for symmetric S = [[p, q], [q, r]] and B = [[a, b], [b, c]]."""
    u11, u12 = p * a + q * b, p * b + q * c
    u21, u22 = q * a + r * b, q * b + r * c
    return u11 * p + u12 * q, u11 * q + u12 * r, u21 * q + u22 * r


def _gwd(ga, gb):
    mx1, my1, a1, b1, c1 = ga
    mx2, my2, a2, b2, c2 = gb
    dx, dy = mx1 - mx2, my1 - my2
    p, q, r = _sqrtm_components(a1, b1, c1)
    m11, m12, m22 = _sym_product(p, q, r, a2, b2, c2)
    s11, _, s22 = _sqrtm_components(m11, m12, m22)
    return dx * dx + dy * dy + (a1 + c1) + (a2 + c2) - 2 * (s11 + s22)


def _kld(ga, gb):
    mx1, my1, a1, b1, c1 = ga
    mx2, my2, a2, b2, c2 = gb
    det1 = a1 * c1 - b1 * b1
    det2 = a2 * c2 - b2 * b2
    dx, dy = mx2 - mx1, my2 - my1
    trace_term = (c2 * a1 - 2 * b2 * b1 + a2 * c1) / det2
    maha = (c2 * dx * dx - 2 * b2 * dx * dy + a2 * dy * dy) / det2
    return 0.5 * (trace_term + maha - 2 + ad.log(det2 / det1))


def _kfiou(ga, gb):
    mx1, my1, a1, b1, c1 = ga
    mx2, my2, a2, b2, c2 = gb
    det1 = a1 * c1 - b1 * b1
    det2 = a2 * c2 - b2 * b2
    sa, sb, sc = a1 + a2, b1 + b2, c1 + c2
    det_sum = sa * sc - sb * sb
    dx, dy = mx1 - mx2, my1 - my2
    # det(A (A+B)^-1 B) = det A det B / det(A+B)
    v_inter = ad.sqrt(det1 * det2 / det_sum)
    v_inter = v_inter * ad.exp(-(dx * dx + dy * dy) / (2 * (sa + sc)))
    return v_inter / (ad.sqrt(det1) + ad.sqrt(det2) - v_inter)


def gwd(a: Gaussian2, b: Gaussian2) -> float:
    """Squared 2-Wasserstein distance."""
    d = float(_gwd(a.validate().components(), b.validate().components()))
    return max(d, 0.0)


def kld(a: Gaussian2, b: Gaussian2) -> float:
    """KL divergence D(a || b)."""
    d = float(_kld(a.validate().components(), b.validate().components()))
    return max(d, 0.0)


def kfiou(a: Gaussian2, b: Gaussian2) -> float:
    """Product-Gaussian overlap ratio, 1/3 for identical inputs."""
    return float(_kfiou(a.validate().components(), b.validate().components()))
