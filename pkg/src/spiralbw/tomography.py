"""Two-qubit OAM state tomography from 16 coincidence counts."""
from __future__ import annotations

import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import _kernels
from .errors import DomainError, SpiralBWError
from .fitting import minimize
from .measurement import (
    CALIBRATED_DURATION_S,
    CoincidenceRecord,
    DecayModel,
    NoiseModel,
    Projector,
    coincidence_probability,
    expected_counts,
    sample_means,
    tomography_basis,
)
from .qstate import DensityMatrix, hermitian_eig, product_labels, project_physical


@dataclass(frozen=True)
class TomographyRun:
    """16 records, one per (S1, S2) pair of the 4x4 projector grid."""

    s1_pair: tuple[int, int]
    s2_pair: tuple[int, int]
    records: tuple[CoincidenceRecord, ...]

    def __post_init__(self):
        if len(self.records) != 16:
            raise DomainError(f"tomography needs 16 records, got {len(self.records)}")
        if len({r.duration_s for r in self.records}) != 1:
            raise DomainError("all records must share one duration")

    @property
    def labels(self):
        return product_labels(self.s1_pair, self.s2_pair)

    @property
    def settings(self) -> list[tuple[Projector, Projector]]:
        return tomography_settings(self.s1_pair, self.s2_pair)

    @property
    def counts(self) -> np.ndarray:
        return np.array([r.counts for r in self.records], dtype=float)

    def with_counts(self, counts, seed=None) -> "TomographyRun":
        recs = tuple(
            CoincidenceRecord(r.setting_s1, r.setting_s2, int(c), r.duration_s, r.seed if seed is None else seed)
            for r, c in zip(self.records, counts)
        )
        return TomographyRun(self.s1_pair, self.s2_pair, recs)


def tomography_settings(s1_pair, s2_pair):
    b1 = tomography_basis(*s1_pair, arm="S1")
    b2 = tomography_basis(*s2_pair, arm="S2")
    return [(p1, p2) for p1 in b1 for p2 in b2]


_PAIR = re.compile(r"\[(-?\d+),(-?\d+)\]$")


def run_from_records(records) -> TomographyRun:
    """Rebuild a run from 16 records (e.g. read back from CSV).

    The subspace labels are parsed from the setting names, and the records must
    follow the S1-major order of ``tomography_settings``.
    """
    records = tuple(records)
    if len(records) != 16:
        raise DomainError(f"tomography needs 16 records, got {len(records)}")
    pairs = []
    for name in (records[0].setting_s1, records[0].setting_s2):
        m = _PAIR.search(name)
        if not m:
            raise DomainError(f"cannot read the mode pair from setting {name!r}")
        pairs.append((int(m.group(1)), int(m.group(2))))
    expected = [(p1.name, p2.name) for p1, p2 in tomography_settings(*pairs)]
    if [(r.setting_s1, r.setting_s2) for r in records] != expected:
        raise DomainError("records are not in tomography_settings order")
    return TomographyRun(pairs[0], pairs[1], records)


def _phis(run: TomographyRun) -> np.ndarray:
    labels = run.labels
    rows = []
    for p1, p2 in run.settings:
        a1 = dict(zip(p1.target.labels, p1.target.amplitudes))
        a2 = dict(zip(p2.target.labels, p2.target.amplitudes))
        rows.append([a1.get(l1, 0.0) * a2.get(l2, 0.0) for l1, l2 in labels])
    return np.asarray(rows, dtype=complex)


def simulate_run(
    rho: DensityMatrix,
    noise: NoiseModel,
    duration_s: float = CALIBRATED_DURATION_S,
    seed: int = 0,
    *,
    s1_pair=None,
    s2_pair=None,
    decay: DecayModel | None = None,
    infinite: bool = False,
) -> TomographyRun:
    """Forward-simulate the 16 tomography counts for ``rho``.

    ``infinite`` keeps the exact (non-integer) expected counts instead of
    sampling, which is the infinite-count limit used for round-trip checks.
    """
    s1 = s1_pair or tuple(sorted({l[0] for l in rho.labels}))
    s2 = s2_pair or tuple(sorted({l[1] for l in rho.labels}))
    settings = tomography_settings(s1, s2)
    probs = np.array([coincidence_probability(rho, p1, p2) for p1, p2 in settings])
    means = expected_counts(probs, decay or DecayModel(), noise, duration_s)
    counts = means if infinite else sample_means(means, seed)
    recs = tuple(
        _record(p1.name, p2.name, c, duration_s, seed, m) for (p1, p2), c, m in zip(settings, counts, means)
    )
    return TomographyRun(tuple(s1), tuple(s2), recs)


def _record(n1, n2, c, duration, seed, mean):
    # infinite-count runs carry fractional counts; CoincidenceRecord stores them as-is
    rec = CoincidenceRecord(n1, n2, 0, duration, int(seed), mean=float(mean))
    object.__setattr__(rec, "counts", c if isinstance(c, float) else int(c))
    return rec


def _hermitian_basis(d):
    basis = []
    for i in range(d):
        m = np.zeros((d, d), dtype=complex)
        m[i, i] = 1
        basis.append(m)
    for i in range(d):
        for j in range(i + 1, d):
            m = np.zeros((d, d), dtype=complex)
            m[i, j] = m[j, i] = 1
            basis.append(m)
            m = np.zeros((d, d), dtype=complex)
            m[i, j], m[j, i] = -1j, 1j
            basis.append(m)
    return basis


def linear_reconstruct(run: TomographyRun) -> DensityMatrix:
    """Unique Hermitian, trace-one matrix reproducing the normalized rates.

    Physicality is not enforced; check ``is_physical()`` on the result.
    """
    n = run.counts
    if n.sum() <= 0:
        raise DomainError("total counts must be positive")
    phis = _phis(run)
    d = phis.shape[1]
    basis = _hermitian_basis(d)
    design = np.array([[np.real(np.conj(phi) @ b @ phi) for b in basis] for phi in phis])
    if np.linalg.cond(design) > 1e12:
        raise DomainError("projector set is not informationally complete")
    x = np.linalg.solve(design, n)
    m = sum(xi * b for xi, b in zip(x, basis))
    tr = np.trace(m).real
    if tr <= 0:
        raise DomainError("reconstructed matrix has non-positive trace")
    m = m / tr
    return DensityMatrix(run.labels, 0.5 * (m + m.conj().T), check=False)


def _t_from_rho(rho_matrix):
    d = rho_matrix.shape[0]
    j = np.eye(d)[::-1]
    low = np.linalg.cholesky(j @ rho_matrix @ j)
    tmat = j @ low.conj().T @ j
    t = list(np.real(np.diag(tmat)))
    for i in range(1, d):
        for k in range(i):
            t += [tmat[i, k].real, tmat[i, k].imag]
    return np.array(t)


def rho_from_t(t, d):
    tmat = _kernels.fallback.cholesky_factor(np.asarray(t, dtype=float), d)
    m = tmat.conj().T @ tmat
    return m / np.trace(m).real


@dataclass(frozen=True)
class MleResult:
    rho: DensityMatrix
    converged: bool
    nll: float
    scale: float
    background: float
    iterations: int


def mle_reconstruct(
    run: TomographyRun,
    *,
    fit_background: bool = False,
    tolerance: float = 1e-8,
    max_iterations: int = 20000,
    seed_mixing: float = 1e-9,
) -> MleResult:
    """Poisson maximum-likelihood state over rho = T^dag T / Tr(T^dag T).

    With ``fit_background`` false the count scale is profiled out exactly and
    the background is zero; otherwise log-scale and sqrt-background join the
    simplex as two extra parameters. White noise in rho and a flat background
    cannot be told apart with this projector set, so the background fit reports
    the largest background consistent with the data and the purest state.
    """
    n = run.counts
    if n.sum() <= 0:
        raise DomainError("total counts must be positive")
    phis = _phis(run)
    d = phis.shape[1]
    try:
        seed = linear_reconstruct(run).matrix
        seed = project_physical(seed, run.labels).matrix
    except DomainError:
        seed = np.eye(d) / d
    seed = (1 - seed_mixing) * seed + seed_mixing * np.eye(d) / d
    t0 = _t_from_rho(0.5 * (seed + seed.conj().T))
    k = t0.size
    if fit_background:
        p0 = _kernels.tomo_probabilities(t0, phis)
        scale0 = max(n.sum() / p0.sum(), 1e-12)
        x0 = np.concatenate([t0, [math.log(scale0), math.sqrt(max(n.min(), 0.0) * 0.5)]])

        def objective(x):
            return _kernels.tomo_nll(x[:k], phis, n, math.exp(x[k]), x[k + 1] ** 2, False)

    else:
        x0 = t0

        def objective(x):
            return _kernels.tomo_nll(x, phis, n, 1.0, 0.0, True)

    res = minimize(objective, x0, tolerance, max_iterations)
    t = res.x[:k]
    rho = rho_from_t(t, d)
    if fit_background:
        scale, background = math.exp(res.x[k]), res.x[k + 1] ** 2
        # Every projector is a normalised rank-1 state, so Tr(P I/d) = 1/d for all
        # settings: an isotropic part of rho and a flat background give identical
        # rates. Pick the representative on that flat ridge where the background
        # absorbs all of it (rho ends with a zero eigenvalue); likelihood is unchanged.
        rho = 0.5 * (rho + rho.conj().T)
        e = max(float(hermitian_eig(rho)[0][-1]), 0.0)
        if 0.0 < e < 1.0 / d:
            background += scale * e
            scale *= 1.0 - d * e
            rho = (rho - e * np.eye(d)) / (1.0 - d * e)
    else:
        p = _kernels.tomo_probabilities(t, phis)
        scale, background = float(n.sum() / p.sum()), 0.0
    return MleResult(
        DensityMatrix(run.labels, 0.5 * (rho + rho.conj().T), check=False),
        res.converged,
        res.residual_sum_squares,
        scale,
        background,
        res.iterations,
    )


class McSummary(NamedTuple):
    mean: float
    std: float
    failed: int


def replica_seed(seed: int, index: int) -> int:
    """Per-replica seed, independent of scheduling order."""
    return int(_kernels.stream_key(int(seed), int(index)) & 0x7FFFFFFFFFFFFFFF)


def mc_uncertainty(
    run: TomographyRun,
    replicas: int,
    metric,
    seed: int = 0,
    *,
    threads: int = 1,
    **mle_kwargs,
) -> McSummary:
    """Mean and std of ``metric(rho)`` over Poisson resamplings of the observed counts."""
    if replicas < 2:
        raise DomainError("need at least two replicas")
    observed = run.counts

    def one(i):
        s = replica_seed(seed, i)
        counts = sample_means(observed, s)
        if counts.sum() <= 0:
            return None
        try:
            res = mle_reconstruct(run.with_counts(counts, s), **mle_kwargs)
        except SpiralBWError:
            return None
        return float(metric(res.rho))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            values = list(pool.map(one, range(replicas)))
    else:
        values = [one(i) for i in range(replicas)]
    ok = np.array([v for v in values if v is not None])
    if ok.size < 2:
        raise SpiralBWError("fewer than two Monte Carlo replicas succeeded")
    return McSummary(float(ok.mean()), float(ok.std(ddof=1)), replicas - ok.size)


def min_eigenvalue(rho: DensityMatrix) -> float:
    return float(hermitian_eig(rho.matrix)[0][-1])
