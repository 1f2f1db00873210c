"""
Perturbed cat map on the unit torus and its quantization.

Classical map (linear step, then a shear kick in the new position):

    q' = 2q + p            (mod 1)
    p' = q + p - (k / 2 pi) sin(2 pi q')   (mod 1)

The kick is generated by V(q) = -(k / 4 pi^2) cos(2 pi q), whose quantization
exp(-i V(q) / hbar) = exp(i (k N / 2 pi) cos(2 pi q)) is exactly the
diagonal factor applied after the linear cat propagator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CAT_MATRIX = np.array([[2, 1], [1, 1]])

UNITARITY_GATE = 1e-8


class QuantizationError(RuntimeError):
    """The quantized map failed the unitarity check."""


@dataclass(frozen=True)
class PerturbedCatParams:
    k: float = 0.0

    def __post_init__(self):
        if self.k < 0:
            raise ValueError(f"kick strength must be >= 0, got {self.k}")


@dataclass(frozen=True)
class QuantumMapUnitary:
    matrix: np.ndarray
    params: PerturbedCatParams
    N: int


def wrap_unit(x):
    """x mod 1 in [0, 1); np.mod alone rounds tiny negatives up to 1.0."""
    x = np.mod(x, 1.0)
    return np.where(x >= 1.0, 0.0, x)


def classical_cat_step(q, p, params: PerturbedCatParams):
    """One step of the perturbed cat map.  Works elementwise on arrays."""
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    q_new = wrap_unit(2 * q + p)
    p_new = wrap_unit(q + p - params.k / (2 * np.pi) * np.sin(2 * np.pi * q_new))
    return q_new, p_new


def cat_jacobian(q, p, params: PerturbedCatParams) -> np.ndarray:
    """Analytic Jacobian d(q', p')/d(q, p) at a single point."""
    q_new, _ = classical_cat_step(q, p, params)
    shear = params.k * np.cos(2 * np.pi * q_new)
    return np.array([[2.0, 1.0], [1.0 - 2 * shear, 1.0 - shear]])


def lyapunov_exponent(params: PerturbedCatParams | None = None) -> float:
    """Largest Lyapunov exponent of the unperturbed cat map, ln((3 + sqrt 5)/2).

    The kick is ignored; for small k this is the leading-order value.
    """
    return float(np.log((3 + np.sqrt(5)) / 2))


def quantize_perturbed_cat(N: int, params: PerturbedCatParams) -> QuantumMapUnitary:
    """Unitary U = K_k U_A of the perturbed cat map on an N-dimensional torus.

    U_A[q', q] = N^-1/2 exp(-i pi/4) exp(i pi (2 q^2 - 2 q q' + q'^2) / N) is the
    propagator of A = [[2, 1], [1, 1]] and K_k = diag exp(i (k N / 2 pi) cos(2 pi q' / N)).
    """
    if N < 2:
        raise ValueError(f"quantized cat map needs N >= 2, got {N}")
    q = np.arange(N)
    qp = q[:, None]   # row index q'
    qc = q[None, :]   # column index q
    # integer phase mod 2N keeps the exponent small for large N
    phase = (2 * qc * qc - 2 * qc * qp + qp * qp) % (2 * N)
    U_A = np.exp(1j * np.pi * phase / N - 1j * np.pi / 4) / np.sqrt(N)
    kick = np.exp(1j * (params.k * N / (2 * np.pi)) * np.cos(2 * np.pi * q / N))
    U = kick[:, None] * U_A
    err = np.max(np.abs(U @ U.conj().T - np.eye(N)))
    if err > UNITARITY_GATE:
        raise QuantizationError(f"quantized cat map is not unitary for N={N} (error {err:.2e})")
    return QuantumMapUnitary(matrix=U, params=params, N=N)


def unitary_conjugation(rho: np.ndarray, U) -> np.ndarray:
    """U rho U^dagger."""
    if isinstance(U, QuantumMapUnitary):
        U = U.matrix
    if rho.shape != U.shape:
        raise ValueError(f"dimension mismatch: state {rho.shape} vs map {U.shape}")
    return U @ rho @ U.conj().T
