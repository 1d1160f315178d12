"""Entanglement figures of merit: CHSH, visibilities, dimensionality witness, contrast."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, UndefinedError
from .measurement import (
    DecayModel,
    NoiseModel,
    analyzer_projector,
    basis_projectors,
    coincidence_probability,
    expected_counts,
    sample_means,
)
from .qstate import DensityMatrix

PERP = math.pi / 2


@dataclass(frozen=True)
class ChshSettings:
    theta_s1: float = 0.0
    theta_s1_prime: float = math.pi / 4
    theta_s2: float = math.pi / 8
    theta_s2_prime: float = -math.pi / 8

    def __post_init__(self):
        if not all(math.isfinite(v) for v in self.angle_pairs_flat()):
            raise DomainError("CHSH angles must be finite")

    def angle_pairs_flat(self):
        return (self.theta_s1, self.theta_s1_prime, self.theta_s2, self.theta_s2_prime)

    def pairs(self) -> list[tuple[float, float]]:
        """(theta_S2, theta_S1) in the order the four correlations enter S."""
        return [
            (self.theta_s2, self.theta_s1),
            (self.theta_s2, self.theta_s1_prime),
            (self.theta_s2_prime, self.theta_s1),
            (self.theta_s2_prime, self.theta_s1_prime),
        ]


CANONICAL_CHSH = ChshSettings()


def correlation_E(c11, c_pp, c1p, cp1) -> float:
    """(C11 + C_perp,perp - C1,perp - C_perp,1) / total."""
    total = c11 + c_pp + c1p + cp1
    if total <= 0:
        raise UndefinedError("correlation undefined for zero total counts")
    return (c11 + c_pp - c1p - cp1) / total


def chsh_S(settings: ChshSettings, e_values) -> float:
    """|E(t2,t1) - E(t2,t1') + E(t2',t1) + E(t2',t1')| with E in ``settings.pairs()`` order."""
    e = [float(v) for v in e_values]
    if len(e) != 4:
        raise DomainError("need four correlation values")
    return abs(e[0] - e[1] + e[2] + e[3])


def chsh_projector_grid(s1_pair, s2_pair, settings: ChshSettings):
    """For each E: the four analyzer pairs in correlation_E argument order."""
    grid = []
    for t2, t1 in settings.pairs():
        a1 = analyzer_projector(*s1_pair, t1, arm="S1")
        a1p = analyzer_projector(*s1_pair, t1 + PERP, arm="S1")
        a2 = analyzer_projector(*s2_pair, t2, arm="S2")
        a2p = analyzer_projector(*s2_pair, t2 + PERP, arm="S2")
        grid.append([(a1, a2), (a1p, a2p), (a1, a2p), (a1p, a2)])
    return grid


def chsh_probabilities(rho: DensityMatrix, s1_pair, s2_pair, settings: ChshSettings = CANONICAL_CHSH):
    """4x4 array of Born probabilities (rows: E terms, cols: correlation_E order)."""
    return np.array(
        [[coincidence_probability(rho, p1, p2) for p1, p2 in row] for row in chsh_projector_grid(s1_pair, s2_pair, settings)]
    )


def chsh_from_counts(counts, settings: ChshSettings = CANONICAL_CHSH) -> float:
    counts = np.asarray(counts, dtype=float).reshape(4, 4)
    return chsh_S(settings, [correlation_E(*row) for row in counts])


@dataclass(frozen=True)
class ChshRun:
    S: float
    sigma: float
    counts: np.ndarray = field(repr=False)
    correlations: tuple[float, ...] = ()


def simulate_chsh(
    rho: DensityMatrix,
    s1_pair,
    s2_pair,
    noise: NoiseModel,
    duration_s: float,
    seed: int = 0,
    *,
    settings: ChshSettings = CANONICAL_CHSH,
    decay: DecayModel | None = None,
    infinite: bool = False,
    replicas: int = 200,
) -> ChshRun:
    """Simulated CHSH run; sigma comes from Poisson resampling of the observed counts."""
    probs = chsh_probabilities(rho, s1_pair, s2_pair, settings)
    means = expected_counts(probs, decay or DecayModel(), noise, duration_s).reshape(-1)
    if infinite:
        counts = means
        sigma = 0.0
    else:
        counts = sample_means(means, seed).astype(float)
        reps = [chsh_from_counts(sample_means(counts, seed, 1 + r), settings) for r in range(replicas)]
        sigma = float(np.std(reps, ddof=1))
    es = tuple(correlation_E(*row) for row in counts.reshape(4, 4))
    return ChshRun(chsh_S(settings, es), sigma, counts.reshape(4, 4), es)


def visibility(c_max, c_min) -> float:
    total = c_max + c_min
    if total <= 0:
        raise UndefinedError("visibility undefined for zero total counts")
    return (c_max - c_min) / total


def contrast(c_same, c_diff) -> float:
    """(C_same - C_diff) / (C_same + C_diff)."""
    total = c_same + c_diff
    if total == 0:
        raise UndefinedError("contrast undefined for zero total counts")
    return (c_same - c_diff) / total


def witness_bound(D: int, d: int) -> float:
    """Dimensionality-witness threshold 3 D (D - 1) / 2 - D (D - d)."""
    if D < 2:
        raise DomainError("D must be at least 2")
    if not 1 <= d <= D:
        raise DomainError(f"d must lie in [1, {D}], got {d}")
    return 3 * D * (D - 1) / 2 - D * (D - d)


@dataclass(frozen=True)
class SubspaceVisibilities:
    mode_pair: tuple[int, int]
    v_x: float
    v_y: float
    v_z: float

    def __post_init__(self):
        for v in (self.v_x, self.v_y, self.v_z):
            if not -1.0 - 1e-12 <= v <= 1.0 + 1e-12:
                raise DomainError(f"visibility {v} outside [-1, 1]")

    @property
    def total(self) -> float:
        return self.v_x + self.v_y + self.v_z


@dataclass(frozen=True)
class WitnessReport:
    D: int
    W: float
    bounds: tuple[tuple[int, float], ...]
    certified_dimension: int
    sigma_W: float | None = None

    def significance(self, d: int) -> float | None:
        """(W - W_d) / sigma_W, or None without an uncertainty."""
        if not self.sigma_W:
            return None
        return (self.W - dict(self.bounds)[d]) / self.sigma_W

    def to_dict(self) -> dict:
        return {
            "D": self.D,
            "W": self.W,
            "sigma_W": self.sigma_W,
            "bounds": [{"d": d, "W_d": w} for d, w in self.bounds],
            "certified_dimension": self.certified_dimension,
        }


def certify(D: int, W: float) -> int:
    """Largest d + 1 with W > W_d (strict), or 1 when no bound is violated."""
    best = 1
    for d in range(1, D):
        if W > witness_bound(D, d):
            best = d + 1
    return best


def witness_W(subspaces, sigma_W: float | None = None) -> WitnessReport:
    subspaces = list(subspaces)
    pairs = [tuple(sorted(s.mode_pair)) for s in subspaces]
    if len(set(pairs)) != len(pairs):
        raise DomainError("duplicate mode pair")
    modes = sorted({m for p in pairs for m in p})
    D = len(modes)
    expected = set(itertools.combinations(modes, 2))
    if set(pairs) != expected or len(pairs) != D * (D - 1) // 2:
        raise DomainError(f"need one entry for each of the {D * (D - 1) // 2} mode pairs")
    W = float(sum(s.total for s in subspaces))
    bounds = tuple((d, witness_bound(D, d)) for d in range(1, D + 1))
    return WitnessReport(D, W, bounds, certify(D, W), sigma_W)


def witness_projector_table(modes, s1_sign=-1, s2_sign=1):
    """Analyzer pairs for every mode pair and basis.

    Returns {(a, b): {basis: [(p1, p2) matched..., (p1, p2) mismatched...]}} with
    two matched then two mismatched settings. Signal 1 carries charge
    s1_sign*l and signal 2 s2_sign*l. The matched y pairs use conjugate phases on
    signal 2, so a state sum_l |-l>|l> is perfectly correlated in all three bases.
    """
    table = {}
    for a, b in itertools.combinations(modes, 2):
        entry = {}
        for basis in ("z", "x", "y"):
            p_plus, p_minus = basis_projectors(s1_sign * a, s1_sign * b, basis, arm="S1")
            q_plus, q_minus = basis_projectors(s2_sign * a, s2_sign * b, basis, arm="S2")
            if basis == "y":
                q_plus, q_minus = q_minus, q_plus
            entry[basis] = [(p_plus, q_plus), (p_minus, q_minus), (p_plus, q_minus), (p_minus, q_plus)]
        table[(a, b)] = entry
    return table


def witness_probabilities(rho: DensityMatrix, modes, s1_sign=-1, s2_sign=1):
    """Born probabilities shaped (pairs, 3 bases, 4 settings)."""
    table = witness_projector_table(modes, s1_sign, s2_sign)
    keys = list(table)
    probs = np.array(
        [[[coincidence_probability(rho, p, q) for p, q in table[k][b]] for b in ("x", "y", "z")] for k in keys]
    )
    return keys, probs


def visibilities_from_counts(keys, counts) -> list[SubspaceVisibilities]:
    counts = np.asarray(counts, dtype=float)
    out = []
    for key, per_pair in zip(keys, counts):
        v = [visibility(c[0] + c[1], c[2] + c[3]) for c in per_pair]
        out.append(SubspaceVisibilities(key, *v))
    return out


def witness_from_state(
    rho: DensityMatrix,
    modes,
    noise: NoiseModel | None = None,
    duration_s: float = 1.0,
    seed: int = 0,
    *,
    infinite: bool = True,
    replicas: int = 200,
    s1_sign: int = -1,
    s2_sign: int = 1,
    decay: DecayModel | None = None,
) -> WitnessReport:
    """Witness report for ``rho`` measured through the simulated detection chain.

    Finite-count runs estimate sigma_W by Poisson resampling of the observed counts.
    """
    keys, probs = witness_probabilities(rho, modes, s1_sign, s2_sign)
    if infinite and noise is None:
        return witness_W(visibilities_from_counts(keys, probs), 0.0)
    means = expected_counts(probs, decay or DecayModel(), noise or NoiseModel(), duration_s)
    if infinite:
        return witness_W(visibilities_from_counts(keys, means), 0.0)
    counts = sample_means(means.reshape(-1), seed).reshape(means.shape).astype(float)
    sigma = witness_sigma(keys, counts, replicas, seed)
    return witness_W(visibilities_from_counts(keys, counts), sigma)


def witness_sigma(keys, counts, replicas=200, seed=0) -> float:
    counts = np.asarray(counts, dtype=float)
    ws = []
    for r in range(replicas):
        resampled = sample_means(counts.reshape(-1), seed, 1 + r).reshape(counts.shape)
        try:
            ws.append(sum(s.total for s in visibilities_from_counts(keys, resampled)))
        except UndefinedError:
            continue
    return float(np.std(ws, ddof=1))
