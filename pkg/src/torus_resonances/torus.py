"""
Discrete phase space on the quantized 2-torus.

The Hilbert space has dimension N (effective Planck constant 1/(2 pi N)).
Operators are dense N x N complex arrays; phase-space points are integer
pairs (q, p).  Translation operators are built from the cyclic position
shift U|q> = |q+1> and the momentum phase V|q> = exp(2 pi i q / N)|q>:

    T_(q,p) = U^q V^p exp(i pi q p / N)

The phase uses the integers exactly as given, so T is *not* periodic in
(q, p): shifting q by N multiplies T by (-1)^p.  Functions that take a
lattice point accept any integer representative.
"""

from __future__ import annotations

import numpy as np

# Hermiticity / trace / positivity tolerances for density matrices.
STATE_ATOL = 1e-10


def hbar(N: int) -> float:
    """Effective Planck constant of an N-dimensional torus Hilbert space."""
    if N < 1:
        raise ValueError(f"Hilbert space dimension must be >= 1, got {N}")
    return 1.0 / (2 * np.pi * N)


def shift_matrix(N: int) -> np.ndarray:
    """Cyclic position shift U with U|q> = |q+1 mod N>."""
    return np.roll(np.eye(N, dtype=complex), 1, axis=0)


def momentum_phase_matrix(N: int) -> np.ndarray:
    """Diagonal V with V|q> = exp(2 pi i q / N)|q>."""
    return np.diag(np.exp(2j * np.pi * np.arange(N) / N))


def translation_matrix(N: int, alpha) -> np.ndarray:
    """Translation operator T_alpha as a dense N x N matrix.

    Parameters
    ----------
    N : int
        Hilbert space dimension.
    alpha : tuple of int
        Lattice point (q, p).  Any integers are accepted; the shift part is
        periodic but the symmetrizing phase exp(i pi q p / N) is evaluated
        on the given integers.
    """
    q, p = int(alpha[0]), int(alpha[1])
    x = np.arange(N)
    T = np.zeros((N, N), dtype=complex)
    # column x carries exp(2 pi i p x / N) into row x + q
    T[(x + q) % N, x] = np.exp(2j * np.pi * p * x / N)
    return T * np.exp(1j * np.pi * q * p / N)


def wedge(alpha, beta) -> int:
    """Symplectic product p_a q_b - q_a p_b.

    This orientation makes T_a T_b = exp(i pi wedge(a, b) / N) T_{a+b}
    hold for the translation convention above.
    """
    return int(alpha[1]) * int(beta[0]) - int(alpha[0]) * int(beta[1])


def compose_translations_phase(N: int, alpha, beta) -> complex:
    """Phase c with T_alpha T_beta = c * T_{alpha + beta}.

    alpha + beta is the unreduced integer sum.  Reducing it mod N changes
    T by a sign, see :func:`wrap_sign`.
    """
    return complex(np.exp(1j * np.pi * wedge(alpha, beta) / N))


def wrap_sign(N: int, alpha) -> int:
    """Sign s with T_alpha = s * T_(alpha mod N)."""
    q, p = int(alpha[0]), int(alpha[1])
    a, qr = divmod(q, N)
    b, pr = divmod(p, N)
    return -1 if (a * pr + b * qr + a * b * N) % 2 else 1


def hs_inner(A: np.ndarray, B: np.ndarray) -> complex:
    """Hilbert-Schmidt inner product tr(A^dagger B)."""
    A = np.asarray(A)
    B = np.asarray(B)
    if A.shape != B.shape:
        raise ValueError(f"dimension mismatch: {A.shape} vs {B.shape}")
    return complex(np.vdot(A, B))


def purity(rho: np.ndarray) -> float:
    """tr(rho^2) for a self-adjoint rho."""
    return float(np.real(np.vdot(rho, rho)))


def _diagonal_grid(N: int):
    q = np.arange(N)[:, None]
    x = np.arange(N)[None, :]
    return (x + q) % N, np.broadcast_to(x, (N, N))


def _chord_phase(N: int) -> np.ndarray:
    q = np.arange(N)[:, None]
    p = np.arange(N)[None, :]
    return np.exp(1j * np.pi * q * p / N)


def chord_transform(B: np.ndarray) -> np.ndarray:
    """Chord function C_B(q, p) = tr(T_(q,p)^dagger B) on 0 <= q, p < N.

    Each row q is an FFT of the q-th cyclic sub-diagonal of B, so the cost
    is O(N^2 log N).
    """
    B = np.asarray(B)
    N = B.shape[0]
    rows, cols = _diagonal_grid(N)
    diagonals = B[rows, cols]  # diagonals[q, x] = B[x+q, x]
    return np.fft.fft(diagonals, axis=1) * np.conj(_chord_phase(N))


def inverse_chord_transform(coeffs: np.ndarray) -> np.ndarray:
    """Rebuild B = (1/N) sum_alpha C(alpha) T_alpha from its chord function."""
    coeffs = np.asarray(coeffs)
    N = coeffs.shape[0]
    diagonals = np.fft.ifft(coeffs * _chord_phase(N), axis=1)
    rows, cols = _diagonal_grid(N)
    B = np.empty((N, N), dtype=complex)
    B[rows, cols] = diagonals
    return B


def extended_chord(coeffs: np.ndarray) -> np.ndarray:
    """Chord function tr(T_alpha^dagger B) on the doubled grid 0 <= q, p < 2N."""
    N = coeffs.shape[0]
    idx = np.arange(2 * N)
    a = (idx >= N).astype(int)
    r = idx % N
    # T_(q+aN, p+bN) = (-1)^(a p + b q + a b N) T_(q, p)
    parity = (a[:, None] * r[None, :] + a[None, :] * r[:, None]
              + a[:, None] * a[None, :] * N) % 2
    return np.where(parity, -1.0, 1.0) * coeffs[np.ix_(r, r)]


def wigner_function(rho: np.ndarray) -> np.ndarray:
    """Discrete Wigner function on the 2N x 2N grid G_2N.

    W[b_q, b_p] = Re tr(A_b rho) with the phase-point operators

        A_b = (2N)^-2 sum_{a in G_2N} T_a exp(-i pi wedge(a, b) / N).

    Grid index (b_q, b_p) sits at phase-space point (b_q / 2N, b_p / 2N).
    Summing A_b over the grid gives the identity, so ``W.sum() == tr rho``;
    equivalently N * sum(W) * (1/N) = tr rho.
    """
    rho = np.asarray(rho)
    N = rho.shape[0]
    C = extended_chord(chord_transform(rho))
    # tr(T_a rho) = conj(C(a)) for self-adjoint rho; the sum over a is a
    # 2D DFT of size 2N in both directions.
    M = 2 * N
    # exp(-i pi (p_a b_q - q_a b_p)/N) = exp(-2 pi i p_a b_q / M) exp(2 pi i q_a b_p / M)
    # ifft carries 1/M, the remaining (2N)^-2 prefactor leaves 1/M
    Wc = np.fft.ifft(np.fft.fft(np.conj(C), axis=1), axis=0) / M
    # Wc[b_p, b_q] after the two transforms; transpose to [b_q, b_p]
    Wc = Wc.T
    residue = np.max(np.abs(Wc.imag))
    if residue > STATE_ATOL:
        raise ValueError(f"Wigner function has imaginary residue {residue:.2e}; rho is not self-adjoint")
    return Wc.real


def coherent_state(N: int, q0: float, p0: float, images: int = 3) -> np.ndarray:
    """Density matrix of a periodized Gaussian wavepacket centred at (q0, p0).

    psi_j ~ sum_{|m| <= images} exp(-pi N (j/N - q0 + m)^2 + 2 pi i N p0 (j/N + m))
    """
    j = np.arange(N)[:, None] / N
    m = np.arange(-images, images + 1)[None, :]
    x = j + m
    psi = np.exp(-np.pi * N * (x - q0) ** 2 + 2j * np.pi * N * p0 * x).sum(axis=1)
    psi /= np.linalg.norm(psi)
    return np.outer(psi, psi.conj())


def position_state(N: int, q: int) -> np.ndarray:
    rho = np.zeros((N, N), dtype=complex)
    rho[q % N, q % N] = 1.0
    return rho


def check_density_matrix(rho: np.ndarray, atol: float = STATE_ATOL) -> None:
    """Raise ValueError unless rho is a valid density matrix within atol."""
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError(f"density matrix must be square, got shape {rho.shape}")
    if np.max(np.abs(rho - rho.conj().T)) > atol:
        raise ValueError("density matrix is not self-adjoint")
    if abs(np.trace(rho) - 1) > atol:
        raise ValueError(f"density matrix trace is {np.trace(rho).real:.3g}, expected 1")
    if np.min(np.linalg.eigvalsh(rho)) < -atol:
        raise ValueError("density matrix is not positive semidefinite")
