"""Complex linear algebra and random sampling primitives.

Matrices are plain ``numpy`` arrays of dtype ``complex128``; the helpers here
add shape validation and the error contracts the rest of the package relies
on. Random streams are keyed by ``(seed, stream_id)`` so that, for example,
changing the noise draws of a sweep never perturbs the channel draws.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, NumericalError, ShapeError

# Stream ids by purpose.
CHANNEL = 1
NOISE = 2
DATA = 3
INIT = 4
DROPOUT = 5
EVAL = 6


def as_cmatrix(a) -> np.ndarray:
    m = np.asarray(a, dtype=np.complex128)
    if m.ndim == 1:
        m = m.reshape(-1, 1)
    if m.ndim != 2:
        raise ShapeError(f"expected a matrix, got array of shape {m.shape}")
    return m


def matmul(a, b) -> np.ndarray:
    a = as_cmatrix(a)
    b = as_cmatrix(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def hermitian(a) -> np.ndarray:
    return np.conj(as_cmatrix(a)).T


def fro_norm(a) -> float:
    a = np.asarray(a)
    return float(np.sqrt(np.sum(a.real**2 + a.imag**2)))


def fingerprint(a) -> str:
    a = np.ascontiguousarray(np.asarray(a, dtype=np.complex128))
    h = hashlib.sha256(str(a.shape).encode() + a.tobytes()).hexdigest()
    return h[:16]


def svd(a) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Thin SVD ``a = U diag(s) V^H`` with ``s`` descending.

    Returns ``(U, s, V)`` where ``V`` (not ``V^H``) holds the right singular
    vectors as columns.
    """
    a = as_cmatrix(a)
    if not np.all(np.isfinite(a)):
        raise NumericalError(f"svd input has non-finite entries (matrix {fingerprint(a)})")
    try:
        u, s, vh = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"svd did not converge for matrix {fingerprint(a)}") from exc
    return u, s, np.conj(vh).T


@dataclass
class RngStream:
    """Reproducible random stream keyed by ``(seed, stream_id)``."""

    seed: int
    stream_id: int = 0
    _gen: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        ss = np.random.SeedSequence(entropy=int(self.seed) & (2**64 - 1), spawn_key=(int(self.stream_id),))
        self._gen = np.random.Generator(np.random.PCG64(ss))

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def child(self, stream_id: int) -> "RngStream":
        """Fresh stream with the same seed and another purpose id."""
        return RngStream(self.seed, stream_id)

    def normal(self, size=None, scale=1.0):
        return self._gen.normal(0.0, scale, size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._gen.uniform(low, high, size)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size)


def sample_cgauss(rng: RngStream, rows: int, cols: int, variance: float = 1.0) -> np.ndarray:
    """I.i.d. circularly-symmetric complex Gaussian matrix with ``E|x|^2 = variance``."""
    return cgauss_array(rng, (rows, cols), variance)


def cgauss_array(rng: RngStream, shape, variance: float = 1.0) -> np.ndarray:
    if variance < 0:
        raise DomainError(f"variance must be non-negative, got {variance}")
    scale = np.sqrt(variance / 2.0)
    re = rng.normal(shape, scale)
    im = rng.normal(shape, scale)
    return re + 1j * im


def vec(a: np.ndarray) -> np.ndarray:
    """Column-major vectorization over the last two axes."""
    a = np.asarray(a)
    return np.swapaxes(a, -1, -2).reshape(a.shape[:-2] + (-1,))


def unvec(v: np.ndarray, rows: int, cols: int) -> np.ndarray:
    """Inverse of :func:`vec`; the project-wide vector-to-matrix reshape."""
    v = np.asarray(v)
    if v.shape[-1] != rows * cols:
        raise ShapeError(f"cannot reshape length {v.shape[-1]} into {rows}x{cols}")
    return np.swapaxes(v.reshape(v.shape[:-1] + (cols, rows)), -1, -2)


def complex_to_real(v: np.ndarray) -> np.ndarray:
    """Stack ``[Re(v), Im(v)]`` along the last axis."""
    v = np.asarray(v)
    return np.concatenate([v.real, v.imag], axis=-1)


def db_to_noise_var(snr_db: float, p_total: float = 1.0) -> float:
    return p_total * 10.0 ** (-snr_db / 10.0)
