"""Pauli strings, perceptron generators and parameter counting."""
from __future__ import annotations

from functools import lru_cache
from typing import Sequence

import numpy as np

LETTERS = "IXYZ"

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
SINGLE = {"I": I2, "X": X, "Y": Y, "Z": Z}


def _check(s: str) -> None:
    if not s or set(s) - set(LETTERS):
        raise ValueError(f"invalid Pauli string {s!r}")


def string_index(s: str) -> int:
    """Base-4 index of a Pauli string, I=0 X=1 Y=2 Z=3, first letter most significant."""
    _check(s)
    idx = 0
    for ch in s:
        idx = 4 * idx + LETTERS.index(ch)
    return idx


def index_string(index: int, n: int) -> str:
    if not 0 <= index < 4**n:
        raise ValueError(f"index {index} out of range for length {n}")
    letters = []
    for _ in range(n):
        index, r = divmod(index, 4)
        letters.append(LETTERS[r])
    return "".join(reversed(letters))


def pauli_matrix(s: str) -> np.ndarray:
    _check(s)
    out = SINGLE[s[0]]
    for ch in s[1:]:
        out = np.kron(out, SINGLE[ch])
    return out


@lru_cache(maxsize=None)
def pauli_basis(n: int) -> np.ndarray:
    """All 4**n Pauli strings on n qubits, stacked in ``string_index`` order.

    The returned array is shared and read-only.
    """
    if n < 1:
        raise ValueError("need at least one qubit")
    basis = np.stack([I2, X, Y, Z])
    for _ in range(n - 1):
        basis = np.einsum("aij,bkl->abikjl", basis, np.stack([I2, X, Y, Z]))
        d = basis.shape[2] * 2
        basis = basis.reshape(-1, d, d)
    basis.setflags(write=False)
    return basis


def generator_qubits(n_coefficients: int) -> int:
    n = 0
    size = 1
    while size < n_coefficients:
        size *= 4
        n += 1
    if size != n_coefficients or n < 1:
        raise ValueError(
            f"coefficient vector length {n_coefficients} is not 4**k for k >= 1")
    return n


def build_generator(coefficients: np.ndarray) -> np.ndarray:
    """K = sum_sigma c[sigma] * sigma; leading axes of ``coefficients`` are a batch."""
    c = np.asarray(coefficients, dtype=float)
    n = generator_qubits(c.shape[-1])
    if not np.all(np.isfinite(c)):
        raise ValueError("coefficients must be finite")
    return np.tensordot(c, pauli_basis(n), axes=([-1], [0]))


def pauli_decompose(k: np.ndarray) -> np.ndarray:
    """Real coefficients Tr(sigma K) / 2**n of a Hermitian matrix."""
    k = np.asarray(k, dtype=complex)
    n = int(np.log2(k.shape[0]))
    coeffs = np.einsum("aij,ji->a", pauli_basis(n), k) / 2**n
    return coeffs.real


def parameter_count(widths: Sequence[int]) -> int:
    """sum_i m_{i+1} * 4**(m_i + 1) over consecutive layer pairs."""
    widths = list(widths)
    if len(widths) < 2 or any(w < 1 for w in widths):
        raise ValueError(f"invalid topology {widths}")
    return sum(m_next * 4 ** (m + 1) for m, m_next in zip(widths, widths[1:]))
