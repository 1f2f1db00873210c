"""
Coarse-grained Perron-Frobenius operator of the perturbed cat map.

Densities live on an L x L grid of cells with centres x_i = ((i_q + 1/2)/L,
(i_p + 1/2)/L), flattened row-major (i = i_q * L + i_p).  The transfer
matrix sends a unit mass in cell j to a periodized Gaussian of width eps
centred at the image M(x_j), sampled at the cell centres and normalized:

    P[i, j] = g_eps(x_i - M(x_j)) / sum_i' g_eps(x_i' - M(x_j))

The Gaussian is separable, so P[i, j] = A[i_q, j] * B[i_p, j] and P acts on a
density in O(L^4) without forming the L^2 x L^2 matrix.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .channels import ResourceGuardError
from .maps import PerturbedCatParams, classical_cat_step, wrap_unit
from .spectral import (
    DEFAULT_KITER,
    DEFAULT_STABILITY_DELTA,
    DEFAULT_SVD_TOL,
    SpectrumResult,
    _result,
    moment_method_spectrum,
)

CLASSICAL_DENSE_LIMIT_ENV = "TORUS_RESONANCES_CLASSICAL_DENSE_LIMIT"
DEFAULT_CLASSICAL_DENSE_LIMIT = 40
# the L^2 x L^2 matrix is only materialized up to this side
DENSE_STORAGE_LIMIT = 64
CLASSICAL_GRID_LIMIT_ENV = "TORUS_RESONANCES_CLASSICAL_GRID_LIMIT"
DEFAULT_CLASSICAL_GRID_LIMIT = 160

_IMAGE_TOL = 1e-17


@dataclass(frozen=True)
class ClassicalPropagator:
    """Column-stochastic transfer operator on an L x L cell grid.

    ``factor_q[i_q, j] * factor_p[i_p, j]`` is the matrix element P[i, j];
    :attr:`matrix` materializes it for L <= 64.
    """

    L: int
    epsilon: float
    params: PerturbedCatParams
    factor_q: np.ndarray = field(repr=False)
    factor_p: np.ndarray = field(repr=False)

    @property
    def matrix(self) -> np.ndarray:
        if self.L > DENSE_STORAGE_LIMIT:
            raise ResourceGuardError(
                f"dense transfer matrix is only stored up to L={DENSE_STORAGE_LIMIT}, got L={self.L}")
        L = self.L
        return (self.factor_q[:, None, :] * self.factor_p[None, :, :]).reshape(L * L, L * L)

    def __call__(self, density: np.ndarray) -> np.ndarray:
        return apply_classical(density, self)


def cell_centers(L: int):
    """Flattened cell-centre coordinates (q, p), row-major in (i_q, i_p)."""
    c = (np.arange(L) + 0.5) / L
    q, p = np.meshgrid(c, c, indexing="ij")
    return q.ravel(), p.ravel()


def _periodized_profile(grid: np.ndarray, centers: np.ndarray, sigma: float) -> np.ndarray:
    """exp(-d^2 / 2 sigma^2) summed over unit images; shape (len(grid), len(centers))."""
    reach = np.sqrt(-2 * np.log(_IMAGE_TOL)) * sigma
    M = max(2, int(np.ceil(reach)) + 1)
    d = grid[:, None] - centers[None, :]
    d = d - np.round(d)
    out = np.zeros_like(d)
    for m in range(-M, M + 1):
        out += np.exp(-((d + m) ** 2) / (2 * sigma**2))
    return out


def build_classical_propagator(L: int, epsilon: float, params: PerturbedCatParams,
                               map_fn: Callable | None = None) -> ClassicalPropagator:
    """Gaussian-smoothed transfer operator of the perturbed cat map.

    ``map_fn(q, p) -> (q', p')`` replaces the cat map (used for testing with
    the identity).
    """
    if L < 2:
        raise ValueError(f"grid side must be >= 2, got {L}")
    if not epsilon > 0:
        raise ValueError(f"kernel width must be > 0, got {epsilon}")
    limit = int(os.environ.get(CLASSICAL_GRID_LIMIT_ENV, DEFAULT_CLASSICAL_GRID_LIMIT))
    if L > limit:
        raise ResourceGuardError(
            f"grid side L={L} exceeds the limit {limit} (set {CLASSICAL_GRID_LIMIT_ENV} to raise it)")
    q, p = cell_centers(L)
    if map_fn is None:
        qn, pn = classical_cat_step(q, p, params)
    else:
        qn, pn = (wrap_unit(np.asarray(a, dtype=float)) for a in map_fn(q, p))
    c = (np.arange(L) + 0.5) / L
    A = _periodized_profile(c, qn, epsilon)
    B = _periodized_profile(c, pn, epsilon)
    sa = A.sum(axis=0)
    sb = B.sum(axis=0)
    if np.any(sa == 0) or np.any(sb == 0):
        raise ValueError(f"kernel width {epsilon} is too small to be resolved on an L={L} grid")
    return ClassicalPropagator(L, float(epsilon), params, A / sa, B / sb)


def apply_classical(density: np.ndarray, P: ClassicalPropagator) -> np.ndarray:
    """P applied to a flattened length-L^2 vector."""
    density = np.asarray(density)
    if density.shape != (P.L * P.L,):
        raise ValueError(f"density must have shape ({P.L * P.L},), got {density.shape}")
    # (P v)[a, b] = sum_j A[a, j] v_j B[b, j]
    return ((P.factor_q * density[None, :]) @ P.factor_p.T).ravel()


def uniform_density(L: int) -> np.ndarray:
    return np.full(L * L, 1.0 / (L * L))


def generic_density(L: int, center=(0.3, 0.7), width: float = 0.3) -> np.ndarray:
    """A normalized periodized Gaussian bump.

    It is neither even nor odd under x -> -x, so it overlaps both parity
    sectors; a broad bump keeps most of its weight on slow modes.
    """
    c = (np.arange(L) + 0.5) / L
    gq = _periodized_profile(c, np.array([center[0]]), width)[:, 0]
    gp = _periodized_profile(c, np.array([center[1]]), width)[:, 0]
    rho = np.outer(gq, gp).ravel()
    return rho / rho.sum()


def reflect_density(v: np.ndarray, L: int) -> np.ndarray:
    """v(-x): cell i maps to cell L - 1 - i on both axes."""
    return v.reshape(L, L)[::-1, ::-1].ravel()


def _mean_free(v: np.ndarray) -> np.ndarray:
    return v - v.mean()


def _real_inner(a, b) -> complex:
    return complex(np.vdot(a, b))


def classical_leading_spectrum(P: ClassicalPropagator, k: int = DEFAULT_KITER,
                               method: str = "moments", density: np.ndarray | None = None,
                               svd_tol: float = DEFAULT_SVD_TOL,
                               delta: float = DEFAULT_STABILITY_DELTA) -> SpectrumResult:
    """Leading Ruelle-Pollicott resonances of the transfer operator.

    ``dense`` returns the k largest eigenvalues of the full matrix.  ``moments``
    runs the moment method on the mean-free part of a generic density (the
    uniform density is the invariant state) and prepends lambda_0 = 1.

    The cat map and the Gaussian kernel commute with x -> -x, and the leading
    resonances come in nearly degenerate even/odd pairs.  The moments are
    therefore taken separately for the even and odd parts of the density and
    the two spectra merged.
    """
    meta = {"L": P.L, "epsilon": P.epsilon, "k_map": P.params.k}
    if method == "dense":
        limit = int(os.environ.get(CLASSICAL_DENSE_LIMIT_ENV, DEFAULT_CLASSICAL_DENSE_LIMIT))
        if P.L > limit:
            raise ResourceGuardError(
                f"dense classical spectrum for L={P.L} exceeds the limit {limit} "
                f"(set {CLASSICAL_DENSE_LIMIT_ENV} to raise it)")
        values = np.linalg.eigvals(P.matrix)
        res = _result(values, "dense", meta)
        return SpectrumResult(res.eigenvalues[:k], res.stable[:k], "dense", res.meta)
    if method != "moments":
        raise ValueError(f"unknown method {method!r}")
    density = generic_density(P.L) if density is None else np.asarray(density, dtype=float)
    meta["kiter"] = k

    def step(v):
        # P preserves total mass; re-projecting keeps rounding out of the invariant mode
        return _mean_free(apply_classical(v, P))

    values, stable = [np.array([1.0 + 0j])], [np.array([True])]
    mirrored = reflect_density(density, P.L)
    for sign in (1, -1):
        seed = _mean_free(density + sign * mirrored)
        if np.linalg.norm(seed) <= 1e-14 * np.linalg.norm(density):
            continue
        res = moment_method_spectrum(step, seed, k, meta, invariant=False, inner=_real_inner,
                                     svd_tol=svd_tol, delta=delta)
        values.append(res.eigenvalues)
        stable.append(res.stable)
        meta = res.meta
    values = np.concatenate(values)
    stable = np.concatenate(stable)
    order = np.lexsort((-values.imag, -np.round(np.abs(values), 14)))
    return SpectrumResult(values[order], stable[order], "iteration", meta)


def classical_correlation_series(P: ClassicalPropagator, f: np.ndarray, g: np.ndarray,
                                 T: int) -> np.ndarray:
    """C_t = (f, P^t g) - (I, f)(I, g) for t = 0..T.

    (a, b) is the cell average of a * b and I the uniform density (all ones),
    so (I, f) is the mean of f.  Since P preserves the mean, the subtraction
    is carried by evolving the mean-free part of g.
    """
    if T < 1:
        raise ValueError(f"number of steps must be >= 1, got {T}")
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    v = _mean_free(g)
    out = np.empty(T + 1)
    for t in range(T + 1):
        out[t] = np.mean(f * v)
        if t < T:
            v = _mean_free(apply_classical(v, P))
    return out
