"""Dense complex linear algebra for small multi-qubit registers.

Qubit 0 is the most significant bit of a computational-basis index, so
``tensor(a, b)`` places ``a`` on the leading qubits.
"""
from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

HERMITIAN_TOL = 1e-10
UNITARY_TOL = 1e-10
TRACE_TOL = 1e-12
NORM_TOL = 1e-10
PSD_TOL = 1e-9
IMAG_TOL = 1e-9


def n_qubits_of(dim: int) -> int:
    n = int(dim).bit_length() - 1
    if dim < 1 or 2**n != dim:
        raise ValueError(f"dimension {dim} is not a power of two")
    return n


def ket(bits: str) -> np.ndarray:
    """Computational basis state from a bit string, e.g. ``ket("011")``."""
    if not bits or set(bits) - {"0", "1"}:
        raise ValueError(f"invalid bit string {bits!r}")
    psi = np.zeros(2 ** len(bits), dtype=complex)
    psi[int(bits, 2)] = 1.0
    return psi


def normalize(psi: np.ndarray) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    n_qubits_of(psi.shape[-1])
    norm = np.linalg.norm(psi)
    if norm == 0:
        raise ValueError("cannot normalize the zero vector")
    return psi / norm


def density(psi: np.ndarray) -> np.ndarray:
    """|psi><psi| for a state vector."""
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, psi.conj())


def as_density(state: np.ndarray) -> np.ndarray:
    """Accept a state vector or density matrix, return a density matrix."""
    state = np.asarray(state, dtype=complex)
    return density(state) if state.ndim == 1 else state


def dagger(a: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(a, -1, -2))


def is_hermitian(a: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    return bool(np.max(np.abs(a - dagger(a)), initial=0.0) <= tol)


def is_unitary(u: np.ndarray, tol: float = UNITARY_TOL) -> bool:
    eye = np.eye(u.shape[-1])
    return bool(np.max(np.abs(dagger(u) @ u - eye), initial=0.0) <= tol)


def check_density_matrix(rho: np.ndarray) -> None:
    """Raise ``ValueError`` unless ``rho`` is Hermitian, unit-trace and PSD."""
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError(f"density matrix must be square, got shape {rho.shape}")
    n_qubits_of(rho.shape[0])
    if not is_hermitian(rho):
        raise ValueError("density matrix is not Hermitian")
    tr = np.trace(rho)
    if abs(tr - 1) > 1e-10:
        raise ValueError(f"density matrix trace is {tr}, expected 1")
    if np.linalg.eigvalsh(rho).min() < -PSD_TOL:
        raise ValueError("density matrix has a negative eigenvalue")


def tensor(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product, ``a`` on the most significant qubits."""
    return np.kron(np.asarray(a, dtype=complex), np.asarray(b, dtype=complex))


def tensor_all(ops: Iterable[np.ndarray]) -> np.ndarray:
    out = np.ones((1,), dtype=complex)
    first = True
    for op in ops:
        out = np.asarray(op, dtype=complex) if first else np.kron(out, op)
        first = False
    return out


def partial_trace(rho: np.ndarray, discard: Iterable[int]) -> np.ndarray:
    """Trace out the qubits in ``discard``; the rest keep their order."""
    rho = np.asarray(rho, dtype=complex)
    n = n_qubits_of(rho.shape[0])
    discard = sorted(set(discard))
    if any(q < 0 or q >= n for q in discard):
        raise ValueError(f"qubit index out of range for {n} qubits: {discard}")
    if len(discard) == n:
        raise ValueError("cannot trace out every qubit")
    keep = [q for q in range(n) if q not in discard]
    t = rho.reshape((2,) * (2 * n))
    t = t.transpose(keep + discard + [n + q for q in keep] + [n + q for q in discard])
    dk, dd = 2 ** len(keep), 2 ** len(discard)
    t = t.reshape(dk, dd, dk, dd)
    return np.einsum("ajbj->ab", t)


def expi_hermitian(k: np.ndarray) -> np.ndarray:
    """exp(iK) for Hermitian ``K`` via eigendecomposition.

    Leading axes are treated as a batch.
    """
    k = np.asarray(k, dtype=complex)
    if not is_hermitian(k):
        raise ValueError("generator is not Hermitian")
    w, v = np.linalg.eigh(k)
    return (v * np.exp(1j * w)[..., None, :]) @ dagger(v)


def fidelity_pure(target: np.ndarray, rho: np.ndarray) -> float:
    """<target|rho|target>, clamped to [0, 1]."""
    target = np.asarray(target, dtype=complex)
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (target.shape[0], target.shape[0]):
        raise ValueError(
            f"dimension mismatch: target {target.shape}, rho {rho.shape}")
    val = np.vdot(target, rho @ target)
    if abs(val.imag) > IMAG_TOL:
        raise ValueError(f"fidelity has imaginary part {val.imag}")
    return float(min(1.0, max(0.0, val.real)))


def permute_qubits(op: np.ndarray, order: Sequence[int]) -> np.ndarray:
    """Relabel qubits: new qubit ``q`` is old qubit ``order[q]``.

    Works on operators with optional leading batch axes.
    """
    op = np.asarray(op)
    n = n_qubits_of(op.shape[-1])
    order = list(order)
    if sorted(order) != list(range(n)):
        raise ValueError(f"{order} is not a permutation of {n} qubits")
    batch = op.shape[:-2]
    nb = len(batch)
    t = op.reshape(batch + (2,) * (2 * n))
    axes = list(range(nb)) + [nb + o for o in order] + [nb + n + o for o in order]
    return t.transpose(axes).reshape(op.shape)


def embed_on_qubits(op: np.ndarray, targets: Sequence[int], n_total: int) -> np.ndarray:
    """Operator acting as ``op`` on ``targets`` (in that order), identity elsewhere."""
    op = np.asarray(op, dtype=complex)
    k = n_qubits_of(op.shape[-1])
    targets = list(targets)
    if len(targets) != k:
        raise ValueError(f"operator acts on {k} qubits, got {len(targets)} targets")
    if len(set(targets)) != k:
        raise ValueError(f"duplicate targets {targets}")
    if any(t < 0 or t >= n_total for t in targets):
        raise ValueError(f"targets {targets} out of range for {n_total} qubits")
    rest = [q for q in range(n_total) if q not in targets]
    full = np.kron(op, np.eye(2 ** len(rest))) if rest else op
    order = targets + rest
    # axis k of ``full`` holds qubit order[k]; invert for natural order
    inverse = [order.index(q) for q in range(n_total)]
    return permute_qubits(full, inverse)
