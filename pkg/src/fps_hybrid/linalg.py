"""Small linear-algebra helpers with reproducible sign conventions."""

from typing import Tuple

import numpy as np

__all__ = ["svd", "null_space", "fro2", "numerical_rank"]


def _phase_fix(u: np.ndarray) -> np.ndarray:
    """Unit-modulus factor per column making the largest-magnitude entry real-positive."""
    idx = np.argmax(np.abs(u), axis=0)
    pivot = u[idx, np.arange(u.shape[1])]
    mag = np.abs(pivot)
    phase = np.ones_like(pivot)
    nz = mag > 0
    phase[nz] = pivot[nz] / mag[nz]
    return phase.conj()


def svd(a: np.ndarray, full_matrices: bool = False) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    SVD with a deterministic phase convention.

    Each left singular vector is rotated so that its largest-magnitude entry
    is real and positive; the matching right singular vector receives the
    same rotation so that ``u @ diag(s) @ vh`` still reconstructs ``a``.
    Extra columns of ``vh`` (only present with ``full_matrices=True``) are
    normalized on their own.

    Returns
    -------
    u, s, vh : np.ndarray
        Same layout as :func:`numpy.linalg.svd`.
    """
    a = np.asarray(a)
    u, s, vh = np.linalg.svd(a, full_matrices=full_matrices)
    k = s.shape[0]
    ph = _phase_fix(u[:, :k])
    u = u.copy()
    vh = vh.copy()
    u[:, :k] *= ph
    vh[:k, :] *= ph.conj()[:, None]
    if u.shape[1] > k:
        u[:, k:] *= _phase_fix(u[:, k:])
    if vh.shape[0] > k:
        vh[k:, :] *= _phase_fix(vh[k:, :].conj().T)[:, None].conj()
    return u, s, vh


def numerical_rank(s: np.ndarray, shape: Tuple[int, int]) -> int:
    if s.size == 0 or s[0] == 0:
        return 0
    tol = max(shape) * np.finfo(float).eps * s[0]
    return int(np.sum(s > tol))


def null_space(a: np.ndarray) -> np.ndarray:
    """Orthonormal basis (as columns) of the right null space of ``a``."""
    a = np.atleast_2d(a)
    _, s, vh = svd(a, full_matrices=True)
    r = numerical_rank(s, a.shape)
    return vh[r:].conj().T


def fro2(a: np.ndarray) -> float:
    """Squared Frobenius norm."""
    a = np.asarray(a)
    return float(np.vdot(a, a).real)
