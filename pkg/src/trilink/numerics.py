"""Complex linear algebra primitives and hierarchical seeded random streams.

Everything downstream (channel generation, precoder solvers, receivers)
goes through this module so that determinism and conditioning policy live
in one place.  All matrices in the system are small (at most 12 x 12), so
dense algorithms are used throughout.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

COND_LIMIT = 1e12
HERM_RTOL = 1e-10


class ConditioningError(ValueError):
    """Raised when a matrix is too ill-conditioned (or singular) to solve."""


# ---------------------------------------------------------------------------
# Random streams
# ---------------------------------------------------------------------------

def _code_label(label) -> int:
    if isinstance(label, str):
        return zlib.crc32(label.encode())
    if isinstance(label, (int, np.integer)):
        if label < 0:
            raise ValueError("integer stream labels must be non-negative")
        return int(label)
    raise TypeError(f"stream label must be int or str, got {type(label).__name__}")


@dataclass(frozen=True)
class RngStream:
    """Hierarchical counter-based random stream.

    A stream is identified by (master_seed, path).  Identical identifiers
    always reproduce the same draws and distinct paths give statistically
    independent streams, so batches/frames can be generated in any order
    (or in parallel) without changing any result.  Streams are stateless:
    ``generator()`` returns a fresh generator positioned at the start of
    the stream every time it is called.
    """

    master_seed: int
    path: tuple = ()

    def child(self, *labels) -> "RngStream":
        """Derive a sub-stream; labels are non-negative ints or purpose tags."""
        return RngStream(self.master_seed, self.path + tuple(_code_label(x) for x in labels))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.master_seed, spawn_key=self.path)
        return np.random.Generator(np.random.Philox(ss))


def cgauss(rng: RngStream, size, variance: float) -> np.ndarray:
    """Circularly-symmetric complex Gaussian samples with E|x|^2 = variance."""
    if variance < 0:
        raise ValueError("variance must be >= 0")
    if np.isscalar(size):
        size = (int(size),)
    if variance == 0:
        return np.zeros(size, dtype=complex)
    g = rng.generator()
    scale = np.sqrt(variance / 2.0)
    return scale * (g.standard_normal(size) + 1j * g.standard_normal(size))


# ---------------------------------------------------------------------------
# Hermitian solves and eigenvectors
# ---------------------------------------------------------------------------

def _check_square_finite(a: np.ndarray, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    return a


def _check_hermitian(a: np.ndarray, name: str) -> None:
    scale = np.linalg.norm(a)
    if scale == 0:
        raise ValueError(f"{name} is identically zero")
    if np.linalg.norm(a - a.conj().T) > HERM_RTOL * scale:
        raise ValueError(f"{name} is not Hermitian within tolerance")


def herm_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve A x = b for Hermitian positive-definite A.

    Raises ValueError for non-Hermitian input and ConditioningError when the
    condition number exceeds COND_LIMIT or A is not positive-definite.
    """
    a = _check_square_finite(a, "A")
    _check_hermitian(a, "A")
    b = np.asarray(b, dtype=complex)
    if b.shape[0] != a.shape[0]:
        raise ValueError("b length does not match A")
    if np.linalg.cond(a) > COND_LIMIT:
        raise ConditioningError(f"A condition estimate exceeds {COND_LIMIT:g}")
    try:
        return sla.solve(a, b, assume_a="pos")
    except np.linalg.LinAlgError as exc:  # pragma: no cover - cond check fires first
        raise ConditioningError(str(exc)) from exc


def herm_solve_batched(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Vectorized herm_solve over a stack: a is (..., m, m), b is (..., m)."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    scale = np.linalg.norm(a, axis=(-2, -1))
    herm_err = np.linalg.norm(a - np.conj(np.swapaxes(a, -2, -1)), axis=(-2, -1))
    if np.any(herm_err > HERM_RTOL * np.maximum(scale, 1e-300)):
        raise ValueError("batch contains a non-Hermitian matrix")
    if np.any(np.linalg.cond(a) > COND_LIMIT):
        raise ConditioningError(f"batch contains a matrix with condition > {COND_LIMIT:g}")
    return np.linalg.solve(a, b[..., None])[..., 0]


def fix_phase(v: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Rotate vector(s) so the first entry with magnitude > tol is real-positive.

    Accepts a single vector or a stack (..., n); the convention makes
    phase-invariant quantities (eigenvectors, precoders) bit-comparable
    across runs.
    """
    v = np.asarray(v, dtype=complex)
    flat = v.reshape(-1, v.shape[-1])
    idx = np.argmax(np.abs(flat) > tol, axis=1)
    anchor = flat[np.arange(flat.shape[0]), idx]
    ref = np.abs(anchor)
    # Fully-zero vectors are left untouched.
    phase = np.where(ref > 0, np.conj(anchor) / np.where(ref > 0, ref, 1.0), 1.0)
    return (flat * phase[:, None]).reshape(v.shape)


def dominant_gen_eigvec(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Unit-norm maximizer of the generalized Rayleigh quotient (v'Av)/(v'Bv).

    A must be Hermitian PSD and B Hermitian positive-definite; the returned
    vector follows the fix_phase convention.
    """
    a = _check_square_finite(a, "A")
    b = _check_square_finite(b, "B")
    _check_hermitian(a, "A")
    _check_hermitian(b, "B")
    if np.linalg.cond(b) > COND_LIMIT:
        raise ConditioningError("B is singular or near-singular")
    try:
        _, vecs = sla.eigh(a, b)
    except np.linalg.LinAlgError as exc:
        raise ConditioningError(str(exc)) from exc
    v = vecs[:, -1]
    return fix_phase(v / np.linalg.norm(v))


def rayleigh_quotient(a: np.ndarray, b: np.ndarray, v: np.ndarray) -> float:
    """(v'Av)/(v'Bv) for a single vector; used as the max-SINR test oracle."""
    v = np.asarray(v, dtype=complex)
    num = np.real(np.vdot(v, a @ v))
    den = np.real(np.vdot(v, b @ v))
    return num / den
