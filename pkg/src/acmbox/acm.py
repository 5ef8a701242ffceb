"""Angle Correct Module: polar encoding and decoding of box angles.

A box angle ``theta`` in [0, pi) is wrapped into ``(cos(w*theta), sin(w*theta))``
for an angular frequency ``w``. Frequency 2 makes the wrapped value continuous
across the pi breakpoint of rectangles; frequency 4 does the same for
square-like boxes but only unwraps to [0, pi/2). Two frequencies are fused by
letting the coarse frequency-2 angle select the half-period of the fine
frequency-4 angle.

Every function here also accepts :class:`acmbox.autodiff.Var` inputs.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from . import autodiff as ad
from .errors import ZeroVector
from .geom import HALF_PI, PI, TWO_PI

SUPPORTED_OMEGAS = (1, 2, 4)
MIN_NORM = 1e-12


class EncodedAngle(NamedTuple):
    fx2: float
    fy2: float
    fx4: float
    fy4: float


def _check_omega(omega):
    if omega not in SUPPORTED_OMEGAS:
        raise ValueError(f"omega must be one of {SUPPORTED_OMEGAS}, got {omega!r}")


def encode(theta, omega):
    """Return ``(fx, fy) = (cos(omega*theta), sin(omega*theta))``."""
    _check_omega(omega)
    arg = theta * omega
    return ad.cos(arg), ad.sin(arg)


def decode(fx, fy, omega):
    """Unwrap an encoded pair to an angle in [0, 2*pi/omega).

    Scale-invariant in ``(fx, fy)``; raises :class:`ZeroVector` when the pair's
    norm is below 1e-12.
    """
    _check_omega(omega)
    fxv, fyv = ad.value_of(fx), ad.value_of(fy)
    if np.any(np.hypot(fxv, fyv) < MIN_NORM):
        raise ZeroVector(f"encoded pair has norm below {MIN_NORM}")
    out = ad.mod(ad.atan2(fy, fx) + TWO_PI, TWO_PI) / omega
    if not ad.is_var(out) and np.ndim(out) == 0:
        return float(out)
    return out


def fuse(theta2, theta4, wrap=True):
    """Combine a coarse [0, pi) angle with a fine [0, pi/2) angle.

    Adds pi/2 to ``theta4`` when the coarse angle sits in the other
    half-period. With ``wrap`` the difference is taken modulo pi, so a coarse
    estimate that wrapped across 0/pi still selects the right half; with
    ``wrap=False`` the plain threshold ``theta2 - theta4 > pi/4`` is used.
    Both agree whenever the difference lies in [-pi/4, 3*pi/4].
    """
    diff = ad.value_of(theta2) - ad.value_of(theta4)
    if wrap:
        d = np.mod(diff, PI)
        shift = (d > PI / 4) & (d <= 3 * PI / 4)
    else:
        shift = diff > PI / 4
    out = theta4 + np.where(shift, HALF_PI, 0.0)
    if not ad.is_var(out) and np.ndim(out) == 0:
        return float(out)
    return out


def encode_full(theta) -> EncodedAngle:
    fx2, fy2 = encode(theta, 2)
    fx4, fy4 = encode(theta, 4)
    if ad.is_var(fx2) or np.ndim(fx2):
        return EncodedAngle(fx2, fy2, fx4, fy4)
    return EncodedAngle(float(fx2), float(fy2), float(fx4), float(fy4))


def decode_full(e, wrap=True):
    """Fused angle in [0, pi) from the four encoded components."""
    fx2, fy2, fx4, fy4 = e
    return fuse(decode(fx2, fy2, 2), decode(fx4, fy4, 4), wrap=wrap)
