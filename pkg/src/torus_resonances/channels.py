"""
Diffusive Gaussian noise and the coarse-grained propagator S = D o U.

The noise is a random unitary process over phase-space translations,

    D(rho) = sum_alpha c(alpha) T_alpha rho T_alpha^dagger,

with c a periodized lattice Gaussian of standard deviation eps * N lattice
units.  D is diagonal in the chord representation: the chord component beta
is multiplied by

    Dt(beta) = sum_alpha c(alpha) exp(2 pi i wedge(alpha, beta) / N),

which is again a periodized Gaussian (Poisson summation), hence real and
positive.  States are propagated through that diagonal action; the Kraus sum
is kept only as an independent oracle (:func:`kraus_noise`).
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .maps import QuantumMapUnitary, unitary_conjugation
from .torus import chord_transform, inverse_chord_transform, translation_matrix

DENSE_LIMIT_ENV = "TORUS_RESONANCES_DENSE_LIMIT"
DEFAULT_DENSE_LIMIT = 16

# Periodization cut-off: drop images whose Gaussian factor is below this.
_IMAGE_TOL = 1e-17


class ResourceGuardError(RuntimeError):
    """A dense construction was refused because it exceeds the size guard."""


def dense_limit() -> int:
    return int(os.environ.get(DENSE_LIMIT_ENV, DEFAULT_DENSE_LIMIT))


@dataclass(frozen=True)
class NoiseKernel:
    """Kraus probabilities over translations and the matching chord eigenvalues.

    ``kraus_probs[q, p]`` is the probability of applying T_(q,p), and
    ``chord_eigs[q, p]`` the factor on chord component (q, p); both indexed
    on 0 <= q, p < N.
    """

    kraus_probs: np.ndarray
    chord_eigs: np.ndarray
    epsilon: float

    @property
    def N(self) -> int:
        return self.kraus_probs.shape[0]


@dataclass(frozen=True)
class CoarseGrainedPropagator:
    unitary: QuantumMapUnitary
    kernel: NoiseKernel

    def __post_init__(self):
        if self.unitary.N != self.kernel.N:
            raise ValueError(f"map has N={self.unitary.N} but noise kernel has N={self.kernel.N}")

    @property
    def N(self) -> int:
        return self.unitary.N

    def __call__(self, rho):
        return apply_propagator(rho, self)

    def adjoint(self, rho):
        return apply_adjoint_propagator(rho, self)


def _image_count(sigma: float, period: float) -> int:
    # smallest M with exp(-(M period)^2 / (2 sigma^2)) below _IMAGE_TOL, at least 3
    reach = np.sqrt(-2 * np.log(_IMAGE_TOL)) * sigma / period
    return max(3, int(np.ceil(reach)) + 1)


def periodized_gaussian(N: int, sigma: float) -> np.ndarray:
    """g(x) = sum_m exp(-(x + m N)^2 / 2 sigma^2) on x = 0..N-1, normalized to sum 1."""
    x = np.arange(N)[:, None]
    m = np.arange(-_image_count(sigma, N), _image_count(sigma, N) + 1)[None, :]
    g = np.exp(-((x + m * N) ** 2) / (2 * sigma**2)).sum(axis=1)
    return g / g.sum()


def periodized_gaussian_dual(N: int, sigma: float) -> np.ndarray:
    """DFT of :func:`periodized_gaussian`, evaluated by Poisson summation.

    sum_x g(x) exp(-2 pi i x k / N) is proportional to
    sum_j exp(-2 pi^2 sigma^2 (k/N - j)^2), which is positive for every k.
    """
    k = np.arange(N)[:, None] / N
    # images spaced by 1 with width 1/(2 pi sigma)
    M = _image_count(1.0 / (2 * np.pi * sigma), 1.0)
    j = np.arange(-M, M + 2)[None, :]
    gt = np.exp(-2 * np.pi**2 * sigma**2 * (k - j) ** 2).sum(axis=1)
    return gt / gt[0]


def build_noise_kernel(N: int, epsilon: float) -> NoiseKernel:
    """Gaussian translation noise of width ``epsilon`` (a fraction of the torus side).

    ``epsilon = 0`` gives the identity channel (c concentrated at the origin,
    all chord factors equal to 1).  Very large widths are allowed and tend to
    the completely depolarizing channel.
    """
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    if not epsilon >= 0:
        raise ValueError(f"noise width must be >= 0, got {epsilon}")
    if epsilon == 0:
        probs = np.zeros((N, N))
        probs[0, 0] = 1.0
        return NoiseKernel(probs, np.ones((N, N)), 0.0)
    sigma = epsilon * N
    g = periodized_gaussian(N, sigma)
    gt = periodized_gaussian_dual(N, sigma)
    return NoiseKernel(np.outer(g, g), np.outer(gt, gt), float(epsilon))


def chord_eigs_from_probs(probs: np.ndarray) -> np.ndarray:
    """Symplectic DFT sum_alpha c(alpha) exp(2 pi i wedge(alpha, beta) / N), by FFT.

    Used to cross-check the closed form stored in the kernel.
    """
    N = probs.shape[0]
    # wedge(alpha, beta) = p_a q_b - q_a p_b
    # sum_{q_a,p_a} c exp(2pi i p_a q_b / N) exp(-2 pi i q_a p_b / N)
    F = np.fft.fft(np.fft.ifft(probs, axis=1) * N, axis=0)  # F[p_b, q_b]
    return F.T


def apply_noise(rho: np.ndarray, kernel: NoiseKernel) -> np.ndarray:
    """Apply the Gaussian channel through its diagonal chord action."""
    if rho.shape != kernel.chord_eigs.shape:
        raise ValueError(f"dimension mismatch: state {rho.shape} vs kernel {kernel.chord_eigs.shape}")
    return inverse_chord_transform(kernel.chord_eigs * chord_transform(rho))


def kraus_noise(rho: np.ndarray, kernel: NoiseKernel) -> np.ndarray:
    """Brute-force Kraus sum sum_alpha c(alpha) T_alpha rho T_alpha^dagger.  O(N^5)."""
    N = kernel.N
    out = np.zeros((N, N), dtype=complex)
    for q in range(N):
        for p in range(N):
            c = kernel.kraus_probs[q, p]
            if c == 0:
                continue
            T = translation_matrix(N, (q, p))
            out += c * (T @ rho @ T.conj().T)
    return out


def make_propagator(unitary: QuantumMapUnitary, epsilon: float) -> CoarseGrainedPropagator:
    return CoarseGrainedPropagator(unitary, build_noise_kernel(unitary.N, epsilon))


def apply_propagator(rho: np.ndarray, prop: CoarseGrainedPropagator) -> np.ndarray:
    """One step of the coarse-grained propagator: noise after U rho U^dagger."""
    return apply_noise(unitary_conjugation(rho, prop.unitary), prop.kernel)


def apply_adjoint_propagator(rho: np.ndarray, prop: CoarseGrainedPropagator) -> np.ndarray:
    """Hilbert-Schmidt adjoint S^dagger = U^dagger (.) U after D.

    D has real, even chord factors, so it is its own adjoint.
    """
    U = prop.unitary.matrix
    return unitary_conjugation(apply_noise(rho, prop.kernel), U.conj().T)


def chord_superoperator(prop: CoarseGrainedPropagator, q=None, p=None) -> np.ndarray:
    """Matrix Dt(a) tr(T_a^dagger U T_b U^dagger) / N of S in the chord basis.

    Rows and columns run over the lattice points ``(q[i], p[i])`` (all N^2
    points in row-major order by default).  In this basis the noise is a
    diagonal row scaling, which keeps the tiny matrix elements exact.
    """
    N = prop.N
    if q is None:
        q, p = (a.ravel() for a in np.meshgrid(np.arange(N), np.arange(N), indexing="ij"))
    U = prop.unitary.matrix
    Ud = U.conj().T
    D = prop.kernel.chord_eigs[q, p]
    M = np.empty((len(q), len(q)), dtype=complex)
    for col in range(len(q)):
        C = chord_transform(U @ translation_matrix(N, (q[col], p[col])) @ Ud)
        M[:, col] = D * C[q, p] / N
    return M


def dense_superoperator(prop: CoarseGrainedPropagator, limit: int | None = None,
                        basis: str = "vec") -> np.ndarray:
    """N^2 x N^2 matrix of S.

    ``basis="vec"`` acts on row-major vec(rho) and is built from the Kraus form
    sum_alpha c(alpha) (T_alpha U) (x) conj(T_alpha U), independently of the
    chord-space route used by :func:`apply_propagator`.  ``basis="chord"``
    acts on chord functions (see :func:`chord_superoperator`).
    """
    N = prop.N
    limit = dense_limit() if limit is None else limit
    if N > limit:
        raise ResourceGuardError(
            f"dense superoperator for N={N} exceeds the oracle limit {limit} "
            f"(set {DENSE_LIMIT_ENV} to raise it)")
    if basis == "chord":
        return chord_superoperator(prop)
    if basis != "vec":
        raise ValueError(f"unknown basis {basis!r}")
    U = prop.unitary.matrix
    S = np.zeros((N * N, N * N), dtype=complex)
    probs = prop.kernel.kraus_probs
    for q in range(N):
        for p in range(N):
            c = probs[q, p]
            if c == 0:
                continue
            K = translation_matrix(N, (q, p)) @ U
            S += c * np.kron(K, K.conj())
    return S
