"""State vectors and density matrices over labeled OAM bases."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DomainError, EmptySubspaceError

HERMITIAN_TOL = 1e-10


def _norm_label(label):
    if isinstance(label, (tuple, list)):
        return tuple(int(v) for v in label)
    return int(label)


def _sort_key(label):
    return label if isinstance(label, tuple) else (label,)


@dataclass(frozen=True)
class StateVector:
    labels: tuple
    amplitudes: np.ndarray

    def __init__(self, labels, amplitudes, *, normalize=False):
        labels = tuple(_norm_label(l) for l in labels)
        amps = np.asarray(amplitudes, dtype=complex).reshape(-1)
        if len(labels) != amps.size:
            raise DomainError("labels and amplitudes differ in length")
        if len(set(labels)) != len(labels):
            raise DomainError("labels must be unique")
        norm = float(np.sum(np.abs(amps) ** 2))
        if normalize:
            if norm == 0:
                raise EmptySubspaceError("cannot normalize the zero vector")
            amps = amps / math.sqrt(norm)
        elif abs(norm - 1.0) > 1e-12:
            raise DomainError(f"state is not normalized (norm^2 = {norm!r})")
        amps.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def basis(cls, labels, which):
        labels = [_norm_label(l) for l in labels]
        amps = np.zeros(len(labels), dtype=complex)
        amps[labels.index(_norm_label(which))] = 1.0
        return cls(labels, amps)

    @classmethod
    def from_terms(cls, terms: dict, labels=None):
        """Build from {label: amplitude}, normalizing; ``labels`` fixes the basis."""
        labels = sorted((_norm_label(l) for l in (labels or terms)), key=_sort_key)
        terms = {_norm_label(k): v for k, v in terms.items()}
        amps = [terms.get(l, 0.0) for l in labels]
        return cls(labels, amps, normalize=True)

    def __len__(self):
        return len(self.labels)

    def amplitude(self, label) -> complex:
        return complex(self.amplitudes[self.labels.index(_norm_label(label))])

    def inner(self, other: "StateVector") -> complex:
        """<self|other>, matching amplitudes by label."""
        lookup = dict(zip(other.labels, other.amplitudes))
        return complex(sum(np.conj(a) * lookup.get(l, 0.0) for l, a in zip(self.labels, self.amplitudes)))

    def embed(self, labels) -> "StateVector":
        """The same state written on a larger basis."""
        labels = [_norm_label(l) for l in labels]
        missing = set(self.labels) - set(labels)
        if missing:
            raise DomainError(f"labels {sorted(missing, key=_sort_key)} missing from target basis")
        lookup = dict(zip(self.labels, self.amplitudes))
        return StateVector(labels, [lookup.get(l, 0.0) for l in labels])


def product_labels(s1_labels, s2_labels):
    """Lexicographically ordered product basis of two single-photon label sets."""
    return [(int(a), int(b)) for a in sorted(s1_labels) for b in sorted(s2_labels)]


def on_product_basis(psi: StateVector) -> StateVector:
    s1 = {l[0] for l in psi.labels}
    s2 = {l[1] for l in psi.labels}
    return psi.embed(product_labels(s1, s2))


@dataclass(frozen=True)
class DensityMatrix:
    labels: tuple
    matrix: np.ndarray

    def __init__(self, labels, matrix, *, check=True):
        labels = tuple(_norm_label(l) for l in labels)
        m = np.array(matrix, dtype=complex)
        if m.shape != (len(labels), len(labels)):
            raise DomainError("matrix shape does not match labels")
        if len(set(labels)) != len(labels):
            raise DomainError("labels must be unique")
        if check:
            if np.max(np.abs(m - m.conj().T), initial=0.0) > 1e-12:
                raise DomainError("density matrix is not Hermitian")
            if abs(np.trace(m).real - 1.0) > 1e-10:
                raise DomainError(f"trace is {np.trace(m).real!r}, not 1")
            if hermitian_eig(m)[0][-1] < -1e-10:
                raise DomainError("density matrix has negative eigenvalues")
        m.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return len(self.labels)

    def eigenvalues(self):
        return hermitian_eig(self.matrix)[0]

    def is_physical(self, tol=1e-10) -> bool:
        return bool(self.eigenvalues()[-1] >= -tol)

    def purity(self) -> float:
        return float(np.real(np.trace(self.matrix @ self.matrix)))


def pure_density(psi: StateVector) -> DensityMatrix:
    a = psi.amplitudes
    return DensityMatrix(psi.labels, np.outer(a, a.conj()), check=False)


def maximally_mixed(labels) -> DensityMatrix:
    n = len(labels)
    return DensityMatrix(labels, np.eye(n) / n, check=False)


def hermitian_eig(m):
    """Eigen-decomposition of a Hermitian matrix by cyclic Jacobi rotations.

    Returns eigenvalues in descending order and orthonormal eigenvector columns.
    """
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DomainError("matrix must be square")
    if np.max(np.abs(m - m.conj().T), initial=0.0) > HERMITIAN_TOL:
        raise DomainError("matrix is not Hermitian within 1e-10")
    m = 0.5 * (m + m.conj().T)
    w, v, _ = _kernels.jacobi_eigh(m)
    order = np.argsort(-w, kind="stable")
    return w[order], v[:, order]


def _clamped(w):
    cutoff = 64.0 * np.finfo(float).eps * max(float(np.max(np.abs(w), initial=0.0)), 1e-300) * w.size
    return np.where(w > cutoff, w, 0.0)


def psd_sqrt(m):
    """Square root of a PSD matrix; tolerance-level negative eigenvalues are clamped."""
    w, v = hermitian_eig(m)
    return (v * np.sqrt(_clamped(w))) @ v.conj().T


def _require_same_labels(a: DensityMatrix, b: DensityMatrix):
    if a.labels != b.labels:
        raise DomainError("density matrices are defined on different labels")


def uhlmann_fidelity(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    """(Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2 evaluated through eigen-decompositions."""
    _require_same_labels(rho, sigma)
    s = psd_sqrt(rho.matrix)
    inner = s @ sigma.matrix @ s
    w, _ = hermitian_eig(0.5 * (inner + inner.conj().T))
    return float(np.sum(np.sqrt(_clamped(w))) ** 2)


def pure_vector(rho: DensityMatrix, tol=1e-10):
    """Return the state vector if rho is rank one within ``tol``, else None."""
    w, v = hermitian_eig(rho.matrix)
    if abs(w[0] - 1.0) <= tol and np.all(np.abs(w[1:]) <= tol):
        return v[:, 0]
    return None


def fidelity(rho: DensityMatrix, rho_ideal: DensityMatrix) -> float:
    """Uhlmann fidelity, clipped to [0, 1].

    A pure ``rho_ideal`` takes the <psi|rho|psi> route; the full formula is
    evaluated as well and must agree within 1e-9.
    """
    _require_same_labels(rho, rho_ideal)
    psi = pure_vector(rho_ideal)
    if psi is None:
        psi_rho = pure_vector(rho)
        if psi_rho is None:
            return float(min(max(uhlmann_fidelity(rho, rho_ideal), 0.0), 1.0))
        rho, rho_ideal, psi = rho_ideal, rho, psi_rho
    shortcut = float(np.real(np.conj(psi) @ rho.matrix @ psi))
    full = uhlmann_fidelity(rho, rho_ideal)
    if abs(shortcut - full) > 1e-8:
        raise ArithmeticError(f"pure-state fidelity cross-check failed: {shortcut} vs {full}")
    return float(min(max(shortcut, 0.0), 1.0))


def trace_distance(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    _require_same_labels(rho, sigma)
    w, _ = hermitian_eig(rho.matrix - sigma.matrix)
    return 0.5 * float(np.sum(np.abs(w)))


def post_select(psi: StateVector, keep) -> StateVector:
    """Restrict psi to the ``keep`` labels and renormalize."""
    keep = [_norm_label(l) for l in keep]
    unknown = [l for l in keep if l not in psi.labels]
    if unknown:
        raise DomainError(f"labels {unknown} not present in state")
    labels = [l for l in psi.labels if l in set(keep)]
    amps = np.array([psi.amplitude(l) for l in labels])
    norm = float(np.sum(np.abs(amps) ** 2))
    if norm == 0:
        raise EmptySubspaceError("post-selection keeps zero weight")
    return StateVector(labels, amps / math.sqrt(norm))


def project_physical(matrix, labels) -> DensityMatrix:
    """Clamp negative eigenvalues to zero and renormalize the trace."""
    m = np.asarray(matrix, dtype=complex)
    w, v = hermitian_eig(0.5 * (m + m.conj().T))
    w = np.clip(w, 0.0, None)
    if w.sum() <= 0:
        raise DomainError("matrix has no positive spectrum to project")
    out = (v * (w / w.sum())) @ v.conj().T
    return DensityMatrix(labels, 0.5 * (out + out.conj().T), check=False)


def random_density(dim, rng, rank=None, labels=None) -> DensityMatrix:
    """Ginibre-distributed random state (for tests and benchmarks)."""
    rank = rank or dim
    g = rng.standard_normal((dim, rank)) + 1j * rng.standard_normal((dim, rank))
    m = g @ g.conj().T
    m = m / np.trace(m).real
    return DensityMatrix(labels or list(range(dim)), 0.5 * (m + m.conj().T), check=False)


def random_pure(labels, rng) -> StateVector:
    a = rng.standard_normal(len(labels)) + 1j * rng.standard_normal(len(labels))
    return StateVector(labels, a, normalize=True)
