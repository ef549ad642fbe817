"""Diffuse-field spatial correlation models and first-peak reference points.

A target moving through a diffuse sound field at speed v samples the
field's spatial correlation at separation x = v*tau.  For wavenumber
k = 2*pi*f/c the correlation is

    planar (2D) incidence:     J0(k x)
    spherical (3D) incidence:  sin(k x) / (k x)

Speed is recovered by locating the first strictly positive local maximum
of the measured correlation (abscissa x0 of the model curve) and solving
v = x0 * c / (2*pi*f*tau_s).

J0 and J1 are evaluated in-package (power series below x = 12, Hankel
asymptotic expansion above) so the model curve does not depend on an
external special-function library; tests validate the evaluators against
independent references.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq

from .exceptions import NoPeakError

SOUND_SPEED = 343.0   # m/s, in-air default

_SERIES_LIMIT = 12.0
_SERIES_TERMS = 40
_ASYMPTOTIC_TERMS = 11


def _hankel_coefficients(nu: int, count: int) -> np.ndarray:
    # a_k = prod_{j=1..k} (4 nu^2 - (2j-1)^2) / (k! 8^k)
    mu = 4 * nu * nu
    a = np.empty(count)
    a[0] = 1.0
    for k in range(1, count):
        a[k] = a[k - 1] * (mu - (2 * k - 1) ** 2) / (8.0 * k)
    return a


_A0 = _hankel_coefficients(0, 2 * _ASYMPTOTIC_TERMS)
_A1 = _hankel_coefficients(1, 2 * _ASYMPTOTIC_TERMS)


def _bessel_small(nu: int, x: np.ndarray) -> np.ndarray:
    # Ascending series: J_nu(x) = (x/2)^nu sum_m (-1)^m (x^2/4)^m / (m! (m+nu)!)
    z = 0.25 * x * x
    term = np.ones_like(x) if nu == 0 else 0.5 * x
    total = term.copy()
    for m in range(1, _SERIES_TERMS):
        term = term * (-z) / (m * (m + nu))
        total += term
    return total


def _bessel_large(nu: int, x: np.ndarray) -> np.ndarray:
    # Hankel expansion: sqrt(2/(pi x)) [P cos(w) - Q sin(w)], w = x - nu pi/2 - pi/4
    a = _A0 if nu == 0 else _A1
    inv2 = 1.0 / (x * x)
    p = np.zeros_like(x)
    q = np.zeros_like(x)
    for m in range(_ASYMPTOTIC_TERMS - 1, -1, -1):
        p = p * inv2 + (-1.0) ** m * a[2 * m]
        q = q * inv2 + (-1.0) ** m * a[2 * m + 1]
    q = q / x
    w = x - (2 * nu + 1) * math.pi / 4.0
    return np.sqrt(2.0 / (math.pi * x)) * (p * np.cos(w) - q * np.sin(w))


def _bessel(nu: int, x) -> np.ndarray | float:
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    ax = np.abs(np.atleast_1d(x))
    out = np.empty_like(ax)
    small = ax <= _SERIES_LIMIT
    if np.any(small):
        out[small] = _bessel_small(nu, ax[small])
    if np.any(~small):
        out[~small] = _bessel_large(nu, ax[~small])
    if nu == 1:
        out = np.where(np.atleast_1d(x) < 0, -out, out)
    return float(out[0]) if scalar else out


def bessel_j0(x):
    """Bessel function of the first kind, order zero."""
    return _bessel(0, x)


def bessel_j1(x):
    """Bessel function of the first kind, order one."""
    return _bessel(1, x)


def _sinc(x):
    # sin(x)/x with the x = 0 limit of 1
    return np.sinc(np.asarray(x, dtype=float) / math.pi)


PLANAR_2D = "planar2d"
SPHERICAL_3D = "spherical3d"
_KIND_ALIASES = {
    "planar2d": PLANAR_2D, "2d": PLANAR_2D, "planar": PLANAR_2D,
    "spherical3d": SPHERICAL_3D, "3d": SPHERICAL_3D, "spherical": SPHERICAL_3D,
}


def normalize_kind(kind: str) -> str:
    try:
        return _KIND_ALIASES[kind.lower()]
    except KeyError:
        raise ValueError(f"unknown diffusion model kind {kind!r}; "
                         f"use 'planar2d' or 'spherical3d'") from None


@lru_cache(maxsize=None)
def reference_point(kind: str) -> float:
    """Abscissa x0 of the first strictly positive local maximum of the model curve.

    Strictly positive is deliberate: x = 0 is also a maximum but carries no
    speed information.  Solved once by bracketed root finding (>= 10
    significant digits) and cached.
    """
    kind = normalize_kind(kind)
    if kind == SPHERICAL_3D:
        # maxima of sin(x)/x where x cos x - sin x = 0, i.e. tan x = x;
        # the first positive-lobe maximum lies in (2 pi, 5 pi / 2)
        x0 = brentq(lambda x: x * math.cos(x) - math.sin(x),
                    2.0 * math.pi + 1e-9, 2.5 * math.pi - 1e-9,
                    xtol=1e-13, rtol=4 * np.finfo(float).eps)
    else:
        # maxima of J0 at zeros of J1; the first with J0 > 0 is J1's second
        # positive zero, bracketed well inside (2 pi, 5 pi / 2) as well
        x0 = brentq(lambda x: bessel_j1(x), 6.5, 7.5,
                    xtol=1e-13, rtol=4 * np.finfo(float).eps)
    return float(x0)


@dataclass(frozen=True)
class DiffusionModel:
    """A diffuse-field correlation model with its cached reference point."""

    kind: str = SPHERICAL_3D
    sound_speed: float = SOUND_SPEED

    def __post_init__(self):
        object.__setattr__(self, "kind", normalize_kind(self.kind))
        if self.sound_speed <= 0:
            raise ValueError("sound_speed must be positive")

    @property
    def reference_point(self) -> float:
        return reference_point(self.kind)


def psi_directional(x, theta, k):
    """Correlation contribution of a single incidence direction: cos(k x cos(theta))."""
    return np.cos(np.asarray(k) * np.asarray(x) * np.cos(np.asarray(theta)))


def psi_p(model: DiffusionModel, v, tau, f):
    """Direction-averaged field correlation at separation v*tau and frequency f.

    Depends on v and tau only through their product.  Returns 1 at v*tau = 0.
    """
    v = np.asarray(v, dtype=float)
    tau = np.asarray(tau, dtype=float)
    if np.any(v < 0) or np.any(tau < 0):
        raise ValueError("v and tau must be nonnegative")
    k = 2.0 * math.pi * f / model.sound_speed
    kx = k * v * tau
    if model.kind == SPHERICAL_3D:
        return _sinc(kx)
    return bessel_j0(kx)


def speed_from_peak(model: DiffusionModel, tau_s: float, f_ref: float) -> float:
    """Closed-form speed from the first-peak delay: v = x0 c / (2 pi f_ref tau_s)."""
    if not tau_s > 0:
        raise NoPeakError(f"first-peak delay must be positive, got {tau_s}")
    if f_ref <= 0:
        raise ValueError("reference frequency must be positive")
    return model.reference_point * model.sound_speed / (2.0 * math.pi * f_ref * tau_s)


def psi_curve(model: DiffusionModel, v: float, f: float, max_tau: float,
              points: int = 500) -> tuple[np.ndarray, np.ndarray]:
    """Sampled model curve tau -> psi_p for plotting/export."""
    tau = np.linspace(0.0, max_tau, points)
    return tau, np.asarray(psi_p(model, v, tau, f))
