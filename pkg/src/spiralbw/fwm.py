"""Four-wave-mixing mode coupling between LG write/read pumps and signal photons."""
from __future__ import annotations

import enum
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import ConvergenceError, DomainError, EmptySubspaceError, RangeError, SingularityError
from .lg_modes import AnnularComposite, LGMode, gauss_legendre

TWO_PI = 2.0 * math.pi
MHZ = 1e6


class PumpConvention(str, enum.Enum):
    """How the write/read profiles enter the overlap integral.

    SQUARED_PUMP weights the overlap by (E_W E_R)^2 in the radial integrand;
    STANDARD_FWM uses each pump field once.
    """

    SQUARED_PUMP = "squared_pump"
    STANDARD_FWM = "standard"


@dataclass(frozen=True)
class FwmConfig:
    write: LGMode = field(default_factory=lambda: LGMode(0))
    read: LGMode = field(default_factory=lambda: LGMode(0))
    signal1_waist: float = 1.0
    signal2_waist: float = 1.0
    interaction_length: float = 1.0
    r_max: float | None = None
    quad_order: int = 256
    pump_profile_convention: PumpConvention = PumpConvention.STANDARD_FWM

    def __post_init__(self):
        for name in ("signal1_waist", "signal2_waist", "interaction_length"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise DomainError(f"{name} must be positive, got {v}")
        if self.r_max is not None and not (self.r_max > 0):
            raise DomainError(f"r_max must be positive, got {self.r_max}")
        if self.quad_order < 32:
            raise DomainError(f"quad_order must be >= 32, got {self.quad_order}")
        object.__setattr__(self, "pump_profile_convention", PumpConvention(self.pump_profile_convention))
        if self.r_max is not None:
            needed = self.required_r_max()
            if self.r_max < needed:
                warnings.warn(
                    f"r_max={self.r_max} is below 6*w*sqrt(|l|)={needed:.3g} for the pump charges",
                    RuntimeWarning,
                    stacklevel=3,
                )

    @property
    def l_w(self) -> int:
        return self.write.l

    @property
    def l_r(self) -> int:
        return self.read.l

    @property
    def waists(self) -> tuple[float, ...]:
        return (self.write.waist, self.read.waist, self.signal1_waist, self.signal2_waist)

    def required_r_max(self, *signal_charges: int) -> float:
        charges = [self.l_w, self.l_r, *signal_charges]
        return 6.0 * max(self.waists) * math.sqrt(max(max(abs(c) for c in charges), 1))

    def with_charges(self, l_w: int, l_r: int) -> "FwmConfig":
        return FwmConfig(
            LGMode(l_w, self.write.p, self.write.waist),
            LGMode(l_r, self.read.p, self.read.waist),
            self.signal1_waist,
            self.signal2_waist,
            self.interaction_length,
            self.r_max,
            self.quad_order,
            self.pump_profile_convention,
        )


@dataclass(frozen=True)
class Chi3Params:
    """Inputs of the third-order susceptibility; all rates are angular frequencies."""

    delta_w: float = TWO_PI * 70 * MHZ
    omega: float = 0.0
    rabi_r: float = TWO_PI * 10 * MHZ
    gamma_23: float = TWO_PI * 0.1 * MHZ
    gamma_24: float = TWO_PI * 0.1 * MHZ
    gamma_21: float = TWO_PI * 0.1 * MHZ
    dipole_product: float = 1.0
    density_n: float = 1.0

    def __post_init__(self):
        for name in ("gamma_23", "gamma_24", "gamma_21", "rabi_r"):
            if getattr(self, name) < 0:
                raise DomainError(f"{name} must be non-negative")


def chi3(params: Chi3Params) -> complex:
    """N mu^4/(eps0 hbar^3) / ((Delta_W + i g23)(|Omega_R|^2 - 4(w + i g24)(w + i g21)))."""
    write_factor = complex(params.delta_w, params.gamma_23)
    read_factor = abs(params.rabi_r) ** 2 - 4.0 * complex(params.omega, params.gamma_24) * complex(
        params.omega, params.gamma_21
    )
    if write_factor == 0:
        raise SingularityError("write-detuning factor (Delta_W + i gamma_23) vanishes")
    if read_factor == 0:
        raise SingularityError("read factor |Omega_R|^2 - 4(omega + i gamma_24)(omega + i gamma_21) vanishes")
    return params.density_n * params.dipole_product / (write_factor * read_factor)


def azimuthal_selection(l_w: int, l_r: int, l_s1: int, l_s2: int) -> bool:
    return l_w + l_r == l_s1 + l_s2


def _factor_row(mode: LGMode, power: float):
    if mode.p:
        raise DomainError("compiled overlap supports p = 0 only")
    return (abs(mode.l), mode.waist, mode.log_norm, power)


def _segment_integral(lo, hi, order, rows):
    r, w = gauss_legendre(order, lo, hi)
    return _kernels.overlap_sum(r, w, np.asarray(rows, dtype=np.float64))


def _pump_segments(profile, r_max):
    if isinstance(profile, AnnularComposite):
        return profile.segments(r_max)
    return [(0.0, r_max, profile)]


def _merged_segments(write, read, r_max):
    cuts = {0.0, r_max}
    for prof in (write, read):
        for lo, hi, _ in _pump_segments(prof, r_max):
            cuts.update((lo, hi))
    edges = sorted(c for c in cuts if 0.0 <= c <= r_max)

    def pick(prof, mid):
        for lo, hi, mode in _pump_segments(prof, r_max):
            if lo <= mid < hi:
                return mode
        return _pump_segments(prof, r_max)[-1][2]

    return [(a, b, pick(write, 0.5 * (a + b)), pick(read, 0.5 * (a + b))) for a, b in zip(edges, edges[1:])]


def radial_overlap(
    write,
    read,
    l_s1: int,
    l_s2: int,
    signal1_waist: float,
    signal2_waist: float,
    r_max: float,
    order: int,
    convention: PumpConvention,
    rtol: float = 1e-10,
) -> float:
    """Radial part of the coupling integral, with the azimuthal delta applied per segment.

    ``write``/``read`` may be LGMode or AnnularComposite. Convergence is confirmed
    by comparing against a rule of twice the order.
    """
    power = 2.0 if PumpConvention(convention) is PumpConvention.SQUARED_PUMP else 1.0
    s1 = LGMode(l_s1, 0, signal1_waist)
    s2 = LGMode(l_s2, 0, signal2_waist)
    total = 0.0
    total_fine = 0.0
    for lo, hi, wmode, rmode in _merged_segments(write, read, r_max):
        # the azimuthal integral of a segment vanishes unless charge is conserved there
        if not azimuthal_selection(wmode.l, rmode.l, l_s1, l_s2):
            continue
        if wmode.p or rmode.p:
            raise DomainError("overlap integrals support p = 0 modes only")
        rows = [_factor_row(wmode, power), _factor_row(rmode, power), _factor_row(s1, 1.0), _factor_row(s2, 1.0)]
        total += _segment_integral(lo, hi, order, rows)
        total_fine += _segment_integral(lo, hi, 2 * order, rows)
    scale = max(abs(total_fine), 1e-300)
    if abs(total - total_fine) > rtol * scale:
        raise ConvergenceError(
            f"radial quadrature not converged at order {order}: "
            f"relative change {abs(total - total_fine) / scale:.2e}",
            estimate=total_fine,
        )
    return total_fine


def coupling_amplitude(config: FwmConfig, chi: Chi3Params | complex, l_s1: int, l_s2: int | None = None) -> complex:
    """Mode-coupling amplitude c for signal charges (l_s1, l_s2).

    With ``l_s2`` omitted it is fixed by charge conservation. Any pair that
    violates conservation returns exactly 0.
    """
    l_s1 = int(l_s1)
    if l_s2 is None:
        l_s2 = config.l_w + config.l_r - l_s1
    l_s2 = int(l_s2)
    if not azimuthal_selection(config.l_w, config.l_r, l_s1, l_s2):
        return 0j
    return pumped_amplitude(config, chi, config.write, config.read, l_s1, l_s2)


def pumped_amplitude(config: FwmConfig, chi, write, read, l_s1: int, l_s2: int) -> complex:
    """Coupling amplitude for arbitrary (possibly annular) write/read pump profiles."""
    x = chi if isinstance(chi, complex) else chi3(chi)
    charges = [l_s1, l_s2]
    for prof in (write, read):
        if isinstance(prof, AnnularComposite):
            charges += [prof.inner.l, prof.outer.l]
    r_max = config.r_max if config.r_max is not None else config.required_r_max(*charges)
    if isinstance(write, AnnularComposite) or isinstance(read, AnnularComposite):
        widest = max(
            [config.signal1_waist, config.signal2_waist]
            + [m.waist for p in (write, read) for m in ((p.inner, p.outer) if isinstance(p, AnnularComposite) else (p,))]
        )
        r_max = max(r_max, 6.0 * widest * math.sqrt(max(max(abs(c) for c in charges), 1)))
    radial = radial_overlap(
        write,
        read,
        l_s1,
        l_s2,
        config.signal1_waist,
        config.signal2_waist,
        r_max,
        config.quad_order,
        config.pump_profile_convention,
    )
    return TWO_PI * x * config.interaction_length * radial


@dataclass(frozen=True)
class SpiralSpectrum:
    """Normalized |c_l|^2 over signal-1 charges for fixed pump charges."""

    l_w: int
    l_r: int
    ls: tuple[int, ...]
    weights: tuple[float, ...]
    amplitudes: tuple[complex, ...]
    normalized: bool = True
    flagged: tuple[int, ...] = ()
    tail_mass: float = 0.0

    def partner(self, l_s1: int) -> int:
        return self.l_w + self.l_r - l_s1

    def weight(self, l_s1: int) -> float:
        return self.weights[self.ls.index(l_s1)]

    def amplitude(self, l_s1: int) -> complex:
        return self.amplitudes[self.ls.index(l_s1)]

    @property
    def entries(self) -> list[tuple[int, float]]:
        return list(zip(self.ls, self.weights))

    def as_arrays(self):
        return np.asarray(self.ls, dtype=float), np.asarray(self.weights)


def _map(fn, items, threads):
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


def spiral_spectrum(
    config: FwmConfig,
    chi: Chi3Params | complex | None = None,
    l_range: tuple[int, int] = (-50, 50),
    *,
    threads: int = 1,
    tail_probe: int = 6,
    mass_tolerance: float = 1e-3,
) -> SpiralSpectrum:
    """Normalized spiral spectrum over ``l_range`` (inclusive).

    Raises RangeError if the mass beyond the range, estimated from a few probe
    charges past each end plus a geometric extrapolation, exceeds ``mass_tolerance``.
    """
    lo, hi = int(l_range[0]), int(l_range[1])
    if hi < lo:
        raise DomainError(f"empty l_range {l_range}")
    x = chi3(chi if chi is not None else Chi3Params()) if not isinstance(chi, complex) else chi
    ls = list(range(lo, hi + 1))
    probes = list(range(lo - tail_probe, lo)) + list(range(hi + 1, hi + 1 + tail_probe))
    amps = _map(lambda l: coupling_amplitude(config, x, l), ls + probes, threads)
    main = np.abs(np.asarray(amps[: len(ls)])) ** 2
    total = float(np.sum(main))
    if total <= 0:
        raise EmptySubspaceError("spectrum has zero total weight")
    probe_w = np.abs(np.asarray(amps[len(ls):])) ** 2
    tail = float(np.sum(probe_w)) + _geometric_tail(probe_w[:tail_probe][::-1]) + _geometric_tail(probe_w[tail_probe:])
    tail_mass = tail / (total + tail)
    if tail_mass > mass_tolerance:
        raise RangeError(
            f"l_range {lo}..{hi} misses an estimated {tail_mass:.2%} of the spectrum; widen the interval"
        )
    weights = main / total
    peak = float(np.max(weights))
    flagged = tuple(l for l, w in zip(ls, weights) if w < 1e-6 * peak)
    return SpiralSpectrum(
        config.l_w,
        config.l_r,
        tuple(ls),
        tuple(float(w) for w in weights),
        tuple(complex(a) for a in amps[: len(ls)]),
        True,
        flagged,
        tail_mass,
    )


def _geometric_tail(seq) -> float:
    # seq runs outward from the range edge; extrapolate its last ratio
    if len(seq) < 2 or seq[-2] <= 0:
        return 0.0
    ratio = seq[-1] / seq[-2]
    if ratio >= 1.0:
        return math.inf
    return float(seq[-1] * ratio / (1.0 - ratio))


def two_photon_state(spectrum: SpiralSpectrum, keep):
    """Post-selected two-photon state sum_l c_l |l>_S1 |l_W + l_R - l>_S2 over ``keep``.

    The result lives on the product basis of the kept S1 charges and their partners.
    """
    from .qstate import StateVector

    keep = sorted(set(int(k) for k in keep))
    if not keep:
        raise DomainError("keep must be non-empty")
    missing = [k for k in keep if k not in spectrum.ls]
    if missing:
        raise DomainError(f"labels {missing} not in spectrum")
    s1 = keep
    s2 = sorted({spectrum.partner(k) for k in keep})
    labels = [(a, b) for a in s1 for b in s2]
    amps = np.zeros(len(labels), dtype=complex)
    for k in keep:
        amps[labels.index((k, spectrum.partner(k)))] = spectrum.amplitude(k)
    norm = float(np.sum(np.abs(amps) ** 2))
    if norm == 0:
        raise EmptySubspaceError("kept labels carry zero weight")
    return StateVector(labels, amps / math.sqrt(norm))
