"""Small dense complex matrix kernel.

Matrices are plain ``numpy`` arrays of dtype ``complex128`` in C (row-major)
order. Every function returns a fresh array and never writes to its inputs.
Dimensions here are tiny (at most 16 for two-qubit superoperators), so the
eigensolver and the exponential are written for clarity rather than speed.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

__all__ = [
    "HermEig",
    "as_cmatrix",
    "matmul",
    "adjoint",
    "commutator",
    "anticommutator",
    "kron",
    "herm_eig",
    "expm",
    "is_hermitian",
    "SIGMA_X",
    "SIGMA_Y",
    "SIGMA_Z",
    "SIGMA_PLUS",
    "SIGMA_MINUS",
    "IDENTITY_2",
]

HERMITIAN_TOL = 1e-10
JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 100
EXPM_NORM_TARGET = 0.5
EXPM_TERM_TOL = 1e-16


class HermEig(NamedTuple):
    """Eigenvalues in ascending order and the unitary whose columns are eigenvectors."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def as_cmatrix(a) -> np.ndarray:
    m = np.array(a, dtype=np.complex128, order="C", copy=True)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-d matrix, got shape {m.shape}")
    return m


def _square(a: np.ndarray, name: str = "matrix") -> None:
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square, got shape {a.shape}")


def _same_square(a: np.ndarray, b: np.ndarray) -> None:
    _square(a, "first operand")
    _square(b, "second operand")
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")


def matmul(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"dimension mismatch: {a.shape} @ {b.shape}")
    return a @ b


def adjoint(a) -> np.ndarray:
    """Conjugate transpose (works on stacks of matrices too)."""
    a = np.asarray(a)
    return np.ascontiguousarray(np.conj(np.swapaxes(a, -1, -2)))


def commutator(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    _same_square(a, b)
    return a @ b - b @ a


def anticommutator(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    _same_square(a, b)
    return a @ b + b @ a


def kron(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError("kron expects two 2-d matrices")
    ra, ca = a.shape
    rb, cb = b.shape
    # out[i*rb + k, j*cb + l] = a[i, j] * b[k, l]
    out = a[:, None, :, None] * b[None, :, None, :]
    return out.reshape(ra * rb, ca * cb)


def is_hermitian(a, tol: float = HERMITIAN_TOL) -> bool:
    a = np.asarray(a)
    return a.ndim == 2 and a.shape[0] == a.shape[1] and bool(
        np.linalg.norm(a - a.conj().T) <= tol * max(1.0, np.linalg.norm(a))
    )


def _off_norm(a: np.ndarray) -> float:
    off = a - np.diag(np.diag(a))
    return float(np.linalg.norm(off))


def herm_eig(a) -> HermEig:
    """Eigendecomposition of a Hermitian matrix by cyclic complex Jacobi rotations.

    Each rotation first removes the phase of the pivot ``a[p, q]`` with a
    diagonal unitary, then annihilates it with a real Givens rotation.
    Sweeps stop once the off-diagonal Frobenius norm drops below ``1e-12``;
    convergence is only declared failed if, after 100 sweeps, it is still
    above ``1e-12`` relative to the matrix norm.

    Raises
    ------
    ValueError
        If ``a`` is not square or not Hermitian within ``1e-10``.
    """
    a = as_cmatrix(a)
    _square(a)
    if not is_hermitian(a):
        raise ValueError("herm_eig requires a Hermitian matrix")
    n = a.shape[0]
    a = 0.5 * (a + a.conj().T)
    v = np.eye(n, dtype=np.complex128)
    scale = max(1.0, float(np.linalg.norm(a)))

    for _ in range(JACOBI_MAX_SWEEPS):
        if _off_norm(a) < JACOBI_TOL:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                mag = abs(apq)
                if mag < 1e-300:
                    continue
                phase = apq / mag
                theta = 0.5 * np.arctan2(2.0 * mag, (a[q, q] - a[p, p]).real)
                c, s = np.cos(theta), np.sin(theta)
                # columns p, q of the block unitary diag(1, conj(phase)) @ [[c, s], [-s, c]]
                u_pp, u_pq = c, s
                u_qp, u_qq = -s * np.conj(phase), c * np.conj(phase)
                col_p = a[:, p].copy()
                col_q = a[:, q].copy()
                a[:, p] = col_p * u_pp + col_q * u_qp
                a[:, q] = col_p * u_pq + col_q * u_qq
                row_p = a[p, :].copy()
                row_q = a[q, :].copy()
                a[p, :] = np.conj(u_pp) * row_p + np.conj(u_qp) * row_q
                a[q, :] = np.conj(u_pq) * row_p + np.conj(u_qq) * row_q
                a[p, q] = 0.0
                a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = vp * u_pp + vq * u_qp
                v[:, q] = vp * u_pq + vq * u_qq
    else:
        if _off_norm(a) >= JACOBI_TOL * scale:
            raise RuntimeError("Jacobi eigensolver did not converge")

    w = np.real(np.diag(a)).copy()
    order = np.argsort(w, kind="stable")
    return HermEig(w[order], np.ascontiguousarray(v[:, order]))


def expm(a) -> np.ndarray:
    """Matrix exponential by scaling and squaring of the Taylor series.

    The input is scaled by ``2**-k`` until its 1-norm is at most 0.5, the
    series is summed until a term falls below ``1e-16`` in norm, and the
    result is squared ``k`` times.
    """
    a = as_cmatrix(a)
    _square(a)
    n = a.shape[0]
    norm1 = float(np.max(np.sum(np.abs(a), axis=0))) if n else 0.0
    k = 0
    if norm1 > EXPM_NORM_TARGET:
        k = int(np.ceil(np.log2(norm1 / EXPM_NORM_TARGET)))
    x = a / (2.0**k)
    result = np.eye(n, dtype=np.complex128)
    term = np.eye(n, dtype=np.complex128)
    for j in range(1, 60):
        term = term @ x / j
        result = result + term
        if np.max(np.sum(np.abs(term), axis=0)) < EXPM_TERM_TOL:
            break
    for _ in range(k):
        result = result @ result
    return result


IDENTITY_2 = np.eye(2, dtype=np.complex128)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=np.complex128)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=np.complex128)
# |0> is the excited (sigma_z = +1) level; sigma_minus lowers |0> to |1>.
SIGMA_PLUS = np.array([[0, 1], [0, 0]], dtype=np.complex128)
SIGMA_MINUS = np.array([[0, 0], [1, 0]], dtype=np.complex128)

for _m in (IDENTITY_2, SIGMA_X, SIGMA_Y, SIGMA_Z, SIGMA_PLUS, SIGMA_MINUS):
    _m.setflags(write=False)
del _m
