"""Detection chain: SLM projectors, Born-rule coincidences, Poisson counts, decay,
and the multiplexing configurations."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import DomainError
from .fwm import Chi3Params, FwmConfig, pumped_amplitude
from .lg_modes import AnnularComposite, LGMode, default_ring_pair
from .qstate import DensityMatrix, StateVector

SQRT_HALF = 1.0 / math.sqrt(2.0)


class Arm(str, enum.Enum):
    S1 = "S1"
    S2 = "S2"


@dataclass(frozen=True)
class Projector:
    """Rank-one single-photon projector |target><target| on one arm.

    ``name`` is a short descriptor used in CSV output, e.g. ``x+[-28,-32]``.
    """

    target: StateVector
    arm: Arm = Arm.S1
    name: str = ""
    theta: float | None = None

    def on(self, arm) -> "Projector":
        return Projector(self.target, Arm(arm), self.name, self.theta)

    def conjugate(self) -> "Projector":
        """Projector onto the complex-conjugate target (used for matched y analyzers)."""
        t = StateVector(self.target.labels, np.conj(self.target.amplitudes))
        return Projector(t, self.arm, self.name + "*", self.theta)


def _two_level(a, b, ca, cb, name, arm=Arm.S1, theta=None):
    if a == b:
        raise DomainError("projector labels must differ")
    labels = sorted({int(a), int(b)})
    amps = {int(a): ca, int(b): cb}
    return Projector(StateVector(labels, [amps[l] for l in labels]), Arm(arm), f"{name}[{a},{b}]", theta)


def tomography_basis(a: int, b: int, arm=Arm.S1) -> list[Projector]:
    """|a>, |b>, (|a> - i|b>)/sqrt2, (|a> + |b>)/sqrt2."""
    return [
        _two_level(a, b, 1.0, 0.0, "a", arm),
        _two_level(a, b, 0.0, 1.0, "b", arm),
        _two_level(a, b, SQRT_HALF, -1j * SQRT_HALF, "a-ib", arm),
        _two_level(a, b, SQRT_HALF, SQRT_HALF, "a+b", arm),
    ]


def analyzer_projector(a: int, b: int, theta: float, arm=Arm.S1) -> Projector:
    """(|a> + e^{2 i theta}|b>)/sqrt2, the SLM phase analyzer at angle theta."""
    return _two_level(a, b, SQRT_HALF, SQRT_HALF * np.exp(2j * theta), "theta", arm, float(theta))


def basis_projectors(a: int, b: int, basis: str, arm=Arm.S1) -> tuple[Projector, Projector]:
    """The two outcomes of the z, x or y basis in the {a, b} subspace."""
    if basis == "z":
        return _two_level(a, b, 1.0, 0.0, "z+", arm), _two_level(a, b, 0.0, 1.0, "z-", arm)
    if basis == "x":
        return _two_level(a, b, SQRT_HALF, SQRT_HALF, "x+", arm), _two_level(a, b, SQRT_HALF, -SQRT_HALF, "x-", arm)
    if basis == "y":
        return (
            _two_level(a, b, SQRT_HALF, 1j * SQRT_HALF, "y+", arm),
            _two_level(a, b, SQRT_HALF, -1j * SQRT_HALF, "y-", arm),
        )
    raise DomainError(f"unknown basis {basis!r}")


def _product_vector(rho: DensityMatrix, p1: Projector, p2: Projector):
    s1 = {l[0] for l in rho.labels}
    s2 = {l[1] for l in rho.labels}
    if not set(p1.target.labels) <= s1 or not set(p2.target.labels) <= s2:
        raise DomainError("projector labels are not part of the density-matrix basis")
    a1 = dict(zip(p1.target.labels, p1.target.amplitudes))
    a2 = dict(zip(p2.target.labels, p2.target.amplitudes))
    return np.array([a1.get(l1, 0.0) * a2.get(l2, 0.0) for l1, l2 in rho.labels], dtype=complex)


def coincidence_probability(rho: DensityMatrix, p1: Projector, p2: Projector) -> float:
    """Tr(rho P1 (x) P2) with P1 on signal 1 and P2 on signal 2."""
    phi = _product_vector(rho, p1, p2)
    return float(min(max(np.real(np.conj(phi) @ rho.matrix @ phi), 0.0), 1.0))


@dataclass(frozen=True)
class DecayModel:
    tau: float = 1655.0
    storage_time: float = 0.0

    def __post_init__(self):
        if not self.tau > 0:
            raise DomainError("tau must be positive")
        if self.storage_time < 0:
            raise DomainError("storage_time must be non-negative")

    @property
    def retention(self) -> float:
        return math.exp(-self.storage_time / self.tau)


@dataclass(frozen=True)
class NoiseModel:
    """Map Born probabilities to count rates: mean = p * scale * T + background * T."""

    background_rate: float = 0.0
    signal_rate_scale: float = 1.0

    def __post_init__(self):
        if self.background_rate < 0:
            raise DomainError("background_rate must be non-negative")
        if not self.signal_rate_scale > 0:
            raise DomainError("signal_rate_scale must be positive")


# Calibrated so an ideal Bell state gives E visibility 2.22/(2 sqrt2) over 3000 s
# runs with sigma_S ~ 0.07. See README "Noise presets".
CALIBRATED_NOISE = NoiseModel(background_rate=0.0101, signal_rate_scale=0.148)
CALIBRATED_DURATION_S = 3000.0
ZERO_NOISE = NoiseModel(0.0, 1.0)


@dataclass(frozen=True)
class CoincidenceRecord:
    setting_s1: str
    setting_s2: str
    counts: int
    duration_s: float
    seed: int
    theta_s1: float | None = None
    theta_s2: float | None = None
    mean: float | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.counts < 0:
            raise DomainError("counts must be non-negative")
        if not self.duration_s > 0:
            raise DomainError("duration_s must be positive")


def expected_counts(probability, decay: DecayModel, noise: NoiseModel, duration_s: float):
    p = np.asarray(probability, dtype=float)
    if np.any((p < 0) | (p > 1 + 1e-12)):
        raise DomainError("probability must lie in [0, 1]")
    mean = p * decay.retention * noise.signal_rate_scale * duration_s + noise.background_rate * duration_s
    if np.any(mean < 0):
        raise DomainError("negative Poisson mean")
    return mean


def sample_means(means, seed: int, stream: int = 0) -> np.ndarray:
    """Independent Poisson draws, one per mean; fully determined by (seed, stream)."""
    return _kernels.poisson_sample(np.asarray(means, dtype=float).reshape(-1), int(seed), int(stream))


def sample_counts(
    probability: float,
    decay: DecayModel,
    noise: NoiseModel,
    duration_s: float,
    seed: int,
    *,
    settings=("", ""),
    stream: int = 0,
    infinite: bool = False,
) -> CoincidenceRecord:
    """One Poisson-sampled coincidence record. ``infinite`` returns the rounded mean instead."""
    mean = float(expected_counts(probability, decay, noise, duration_s))
    counts = int(round(mean)) if infinite else int(sample_means([mean], seed, stream)[0])
    return CoincidenceRecord(str(settings[0]), str(settings[1]), counts, float(duration_s), int(seed), mean=mean)


def multiplex_coincidences(
    write_charge: int,
    read_charge: int,
    detect_s1: int,
    detect_s2: int,
    engine_config: FwmConfig,
    chi: Chi3Params | complex | None = None,
    rate_scale: float = 1.0,
) -> float:
    """Expected coincidence rate for one pump/detection quadruple.

    Rate = rate_scale * |c / c_ref|^2, with c_ref the all-Gaussian amplitude of
    the same geometry. Zero whenever charge is not conserved.
    """
    cfg = engine_config.with_charges(write_charge, read_charge)
    x = chi if isinstance(chi, complex) else None
    c = _amplitude(cfg, x, cfg.write, cfg.read, detect_s1, detect_s2)
    if c == 0:
        return 0.0
    ref = _amplitude(cfg, x, LGMode(0, 0, cfg.write.waist), LGMode(0, 0, cfg.read.waist), 0, 0)
    return rate_scale * abs(c / ref) ** 2


def _amplitude(cfg, chi, write, read, l1, l2):
    # chi3 is a global factor of every amplitude, so a unit susceptibility keeps rates exact
    return pumped_amplitude(cfg, chi if chi is not None else 1 + 0j, write, read, int(l1), int(l2))


def swapped_rings(comp: AnnularComposite) -> AnnularComposite:
    """Same geometry with the inner and outer charges exchanged."""
    return AnnularComposite(
        LGMode(comp.outer.l, comp.inner.p, comp.inner.waist),
        LGMode(comp.inner.l, comp.outer.p, comp.outer.waist),
        comp.split_radius,
    )


def default_detections(write: AnnularComposite, read: AnnularComposite):
    s1 = sorted({write.inner.l, write.outer.l})
    s2 = sorted({read.inner.l, read.outer.l})
    return [(a, b) for a in s1 for b in s2]


def ring_multiplex_coincidences(
    write: AnnularComposite,
    read: AnnularComposite,
    detections=None,
    engine_config: FwmConfig | None = None,
    chi: complex | None = None,
) -> tuple[float, float]:
    """(C_same, C_diff) for ring-encoded write/read beams.

    ``read`` is the matched assignment; the mismatched one swaps its inner and
    outer charges. Each C sums |c|^2 over the detection pairs (l_S1, l_S2), with
    the overlap evaluated segment by segment across the ring boundaries.
    """
    cfg = engine_config or FwmConfig()
    dets = detections if detections is not None else default_detections(write, read)
    diff_read = swapped_rings(read)
    same = sum(abs(_amplitude(cfg, chi, write, read, a, b)) ** 2 for a, b in dets)
    diff = sum(abs(_amplitude(cfg, chi, write, diff_read, a, b)) ** 2 for a, b in dets)
    return float(same), float(diff)


def ring_pair_for(delta_l: int, inner_waist: float = 1.0) -> tuple[AnnularComposite, AnnularComposite]:
    """Write rings (0 inside, delta_l outside) and the matched read rings (0, -delta_l)."""
    return default_ring_pair(0, delta_l, inner_waist), default_ring_pair(0, -delta_l, inner_waist)


def ring_contrast_scan(delta_ls, engine_config: FwmConfig | None = None, inner_waist: float = 1.0):
    """[(delta_l, C_same, C_diff)] for the default ring geometry."""
    rows = []
    for dl in delta_ls:
        write, read = ring_pair_for(int(dl), inner_waist)
        rows.append((int(dl), *ring_multiplex_coincidences(write, read, None, engine_config)))
    return rows
