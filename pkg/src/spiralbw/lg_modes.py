"""Laguerre-Gaussian transverse modes at the beam waist."""
from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class LGMode:
    """LG_p^l mode with topological charge ``l``, radial index ``p`` and waist."""

    l: int
    p: int = 0
    waist: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.waist) and self.waist > 0):
            raise DomainError(f"waist must be positive and finite, got {self.waist}")
        if self.p < 0:
            raise DomainError(f"radial index must be non-negative, got {self.p}")
        object.__setattr__(self, "l", int(self.l))
        object.__setattr__(self, "p", int(self.p))

    @property
    def is_extension(self) -> bool:
        """True for p > 0 modes, which none of the shipped presets use."""
        return self.p > 0

    @property
    def log_norm(self) -> float:
        """log of sqrt(2 p! / (pi (p+|l|)!))."""
        return 0.5 * (
            math.log(2.0 / math.pi) + math.lgamma(self.p + 1) - math.lgamma(self.p + abs(self.l) + 1)
        )

    @property
    def ring_radius(self) -> float:
        """Radius of peak intensity, w*sqrt(|l|/2), for p = 0."""
        return self.waist * math.sqrt(abs(self.l) / 2.0)


@dataclass(frozen=True)
class AnnularComposite:
    """Inner mode for r < split_radius, outer mode beyond it."""

    inner: LGMode
    outer: LGMode
    split_radius: float

    def __post_init__(self):
        if not (self.split_radius > 0) or math.isnan(self.split_radius):
            raise DomainError(f"split_radius must be positive, got {self.split_radius}")

    def segments(self, r_max: float) -> list[tuple[float, float, LGMode]]:
        """Radial pieces ``(r_lo, r_hi, mode)`` clipped to ``[0, r_max]``."""
        if self.split_radius >= r_max:
            return [(0.0, r_max, self.inner)]
        return [(0.0, self.split_radius, self.inner), (self.split_radius, r_max, self.outer)]


def default_ring_pair(l_inner: int, l_outer: int, inner_waist: float = 1.0) -> AnnularComposite:
    """Composite with the default ring geometry: split at 1.2 w_in, outer waist 2.5 w_in."""
    return AnnularComposite(
        LGMode(l_inner, 0, inner_waist),
        LGMode(l_outer, 0, 2.5 * inner_waist),
        1.2 * inner_waist,
    )


def _check_coords(r, phi):
    r = np.asarray(r, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if not (np.all(np.isfinite(r)) and np.all(np.isfinite(phi))):
        raise DomainError("r and phi must be finite")
    if np.any(r < 0):
        raise DomainError("r must be non-negative")
    return r, phi


def radial_profile(mode: LGMode, r):
    """Real radial factor of the mode (the field without exp(i l phi))."""
    r = np.asarray(r, dtype=float)
    n = abs(mode.l)
    x = r / mode.waist
    base = np.exp(mode.log_norm) / mode.waist * np.exp(-(x**2))
    if n:
        # (sqrt2 x)^n split via logs so large |l| neither overflows nor underflows early
        with np.errstate(divide="ignore"):
            base = np.exp(mode.log_norm + n * np.log(math.sqrt(2.0) * x) - x**2) / mode.waist
    if mode.p:
        base = base * _genlaguerre(mode.p, n, 2.0 * x**2)
    return base


def _genlaguerre(p: int, alpha: int, x):
    # three-term recurrence for L_p^alpha
    l0 = np.ones_like(x)
    if p == 0:
        return l0
    l1 = 1.0 + alpha - x
    for k in range(1, p):
        l0, l1 = l1, ((2 * k + 1 + alpha - x) * l1 - (k + alpha) * l0) / (k + 1)
    return l1


def evaluate(mode: LGMode, r, phi):
    """Complex field LG_p^l(r, phi) at the waist plane."""
    r, phi = _check_coords(r, phi)
    out = radial_profile(mode, r) * np.exp(1j * mode.l * phi)
    return out[()] if out.ndim == 0 else out


def evaluate_annular(comp: AnnularComposite, r, phi):
    r, phi = _check_coords(r, phi)
    r, phi = np.broadcast_arrays(r, phi)
    inner = evaluate(comp.inner, r, phi)
    outer = evaluate(comp.outer, r, phi)
    out = np.where(r < comp.split_radius, inner, outer)
    return out[()] if out.ndim == 0 else out


@functools.lru_cache(maxsize=32)
def _reference_rule(order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_legendre(order: int, a: float, b: float):
    """Nodes and weights of the order-point Gauss-Legendre rule on [a, b]."""
    x, w = _reference_rule(int(order))
    half = 0.5 * (b - a)
    return half * x + 0.5 * (b + a), half * w


def min_r_max(mode: LGMode) -> float:
    return 6.0 * mode.waist * math.sqrt(max(abs(mode.l), 1))


def truncated_mass(mode: LGMode, r_max: float) -> float:
    """Power outside r_max for a p = 0 mode: Q(|l|+1, 2 r_max^2 / w^2)."""
    n = abs(mode.l)
    x = 2.0 * (r_max / mode.waist) ** 2
    # regularized upper incomplete gamma for integer shape: e^-x sum_{k<=n} x^k/k!
    log_terms = [k * math.log(x) - x - math.lgamma(k + 1) for k in range(n + 1)] if x > 0 else [0.0]
    m = max(log_terms)
    return math.exp(m) * sum(math.exp(t - m) for t in log_terms)


class ModeNorm(float):
    """Norm value that also carries a ``truncation_warning`` attribute."""

    truncation_warning: str | None = None


def mode_norm(mode: LGMode, r_max: float | None = None, quad_order: int = 128) -> ModeNorm:
    """Integral of |u|^2 over the disk of radius r_max (2 pi times a radial GL sum).

    With r_max = min_r_max(mode) (the default) and 128 nodes the result is 1 to
    ~1e-14 for every |l| <= 32; 64 nodes suffice up to |l| ~ 8.
    """
    if r_max is None:
        r_max = min_r_max(mode)
    if quad_order < 32:
        raise DomainError("quad_order must be at least 32")
    r, w = gauss_legendre(quad_order, 0.0, r_max)
    value = ModeNorm(2.0 * math.pi * float(np.sum(w * r * radial_profile(mode, r) ** 2)))
    if mode.p == 0:
        lost = truncated_mass(mode, r_max)
        if lost > 1e-6:
            value.truncation_warning = f"r_max={r_max} truncates an estimated {lost:.2e} of the mode power"
            warnings.warn(value.truncation_warning, RuntimeWarning, stacklevel=2)
    return value
