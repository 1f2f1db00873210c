"""
Leading eigenvalues of propagators.

Three routes to the spectrum of a coarse-grained propagator S:

* ``iteration``: the moment method.  With m_t = <rho0, S^t rho0> and the
  backward iterates rho_{-i} = S^dagger^i rho0, the projected matrices are
  Hankel, [S]_ij = m_{i+j+1} and [O]_ij = m_{i+j}.  The roots of
  det([S] - lambda [O]) are the leading eigenvalues.
* ``chord_truncation``: dense diagonalization of S restricted to short chords,
  where the Gaussian noise factor has not yet killed the matrix elements.
* ``dense``: full diagonalization of the N^2 x N^2 superoperator (oracle).

Operators are plain callables ``state -> state``; the inner product is
pluggable, so the classical transfer operator reuses the same machinery.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .channels import (
    CoarseGrainedPropagator,
    ResourceGuardError,
    apply_propagator,
    chord_superoperator,
    dense_superoperator,
)
from .torus import coherent_state, hs_inner

DEFAULT_KITER = 12
DEFAULT_SVD_TOL = 1e-12
DEFAULT_STABILITY_DELTA = 1e-6
MODULUS_SLACK = 1e-8
CHORD_LIMIT_ENV = "TORUS_RESONANCES_CHORD_LIMIT"
DEFAULT_CHORD_LIMIT = 2500

# iterates below this norm are treated as numerically zero
_COLLAPSE_NORM = 1e-280


class NoOverlapError(ValueError):
    """The seed state has no usable overlap with the leading eigenspaces."""


@dataclass
class MomentSequence:
    """Moments m_t = <rho0, S^t rho0>, t = 0..len-1, stored in scaled form.

    ``overlaps[t] * exp(scale_log[t])`` is m_t, where ``scale_log[t]`` is the
    log of the accumulated renormalization of the t-th iterate.
    """

    overlaps: np.ndarray
    scale_log: np.ndarray
    truncated: bool = False

    @property
    def m(self) -> np.ndarray:
        return self.overlaps * np.exp(self.scale_log)

    def __len__(self) -> int:
        return len(self.overlaps)


@dataclass
class SpectrumResult:
    eigenvalues: np.ndarray
    stable: np.ndarray
    method: str
    meta: dict = field(default_factory=dict)

    @property
    def moduli(self) -> np.ndarray:
        return np.abs(self.eigenvalues)

    def leading(self, count: int) -> np.ndarray:
        return self.eigenvalues[:count]

    def leading_nontrivial(self) -> complex:
        """Largest stable eigenvalue after lambda_0 (the invariant state)."""
        rest = self.eigenvalues[1:][self.stable[1:]]
        if len(rest) == 0:
            raise NoOverlapError("no stable nontrivial eigenvalue was resolved")
        return complex(rest[0])

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "meta": self.meta,
            "eigenvalues": [
                {"re": float(z.real), "im": float(z.imag), "modulus": float(abs(z)), "stable": bool(s)}
                for z, s in zip(self.eigenvalues, self.stable)
            ],
        }


def sort_by_modulus(values) -> np.ndarray:
    """Decreasing modulus; ties broken by decreasing imaginary part."""
    values = np.asarray(values, dtype=complex)
    order = np.lexsort((-values.imag, -np.round(np.abs(values), 14)))
    return values[order]


def _result(values, method, meta, stable=None) -> SpectrumResult:
    values = sort_by_modulus(values)
    if stable is None:
        stable = np.ones(len(values), dtype=bool)
    return SpectrumResult(values, np.asarray(stable, dtype=bool), method, dict(meta))


def compute_moments(apply: Callable, rho0, k: int, inner: Callable = hs_inner) -> MomentSequence:
    """Moments m_t = inner(rho0, S^t rho0) for t = 0..2k.

    Each iterate is renormalized to unit norm before the next application, so
    long sequences of decaying moments neither underflow nor lose relative
    precision.  If an iterate collapses to zero the sequence is cut short and
    flagged ``truncated``.
    """
    if k < 1:
        raise ValueError(f"truncation size must be >= 1, got {k}")
    rho0 = np.asarray(rho0)
    overlaps = [inner(rho0, rho0)]
    scale_log = [0.0]
    v = rho0
    log_scale = 0.0
    truncated = False
    for _ in range(2 * k):
        v = apply(v)
        norm = np.sqrt(abs(inner(v, v)))
        if not np.isfinite(norm) or norm < _COLLAPSE_NORM:
            truncated = True
            break
        v = v / norm
        log_scale += np.log(norm)
        overlaps.append(inner(rho0, v))
        scale_log.append(log_scale)
    return MomentSequence(np.array(overlaps, dtype=complex), np.array(scale_log), truncated)


def hankel_matrices(moments: MomentSequence, k: int):
    """Projected propagator and overlap matrices, [S]_ij = m_{i+j+1}, [O]_ij = m_{i+j}."""
    m = moments.m
    if len(m) < 2 * k:
        raise ValueError(f"need {2 * k} moments for k={k}, have {len(m)}")
    i = np.arange(k)
    idx = i[:, None] + i[None, :]
    return m[idx + 1], m[idx]


def _balanced_hankel(moments: MomentSequence, k: int):
    # [O] and [S] scaled as D [.] D with D_i = exp(-scale_log[2i] / 2);
    # the congruence leaves the generalized eigenvalues unchanged.
    s = moments.scale_log
    i = np.arange(k)
    d = -0.5 * s[2 * i]
    idx = i[:, None] + i[None, :]
    expo_o = s[idx] + d[:, None] + d[None, :]
    expo_s = s[idx + 1] + d[:, None] + d[None, :]
    ov = moments.overlaps
    return ov[idx + 1] * np.exp(expo_s), ov[idx] * np.exp(expo_o)


def iteration_spectrum(moments: MomentSequence, k: int, svd_tol: float = DEFAULT_SVD_TOL,
                       meta: dict | None = None) -> SpectrumResult:
    """Solve det([S] - lambda [O]) = 0 for a truncation size k.

    [O] is projected onto its numerical range (singular values above
    ``svd_tol`` times the largest) before the reduced standard eigenproblem
    is solved, so at most rank([O]) eigenvalues come back.
    """
    if k < 1:
        raise ValueError(f"truncation size must be >= 1, got {k}")
    # a truncated sequence supports a smaller projection
    k_eff = min(k, len(moments) // 2)
    if k_eff < 1:
        raise NoOverlapError("initial state has no usable overlap")
    S, O = _balanced_hankel(moments, k_eff)
    W, sv, Vh = np.linalg.svd(O)
    if sv[0] == 0 or not np.isfinite(sv[0]):
        raise NoOverlapError("initial state has no usable overlap")
    rank = int(np.sum(sv > svd_tol * sv[0]))
    if rank == 0:
        raise NoOverlapError("initial state has no usable overlap")
    reduced = (W[:, :rank].conj().T @ S @ Vh[:rank].conj().T) / sv[:rank, None]
    values = np.linalg.eigvals(reduced)
    info = {"k": k, "k_used": k_eff, "rank": rank, "svd_tol": svd_tol}
    info.update(meta or {})
    return _result(values, "iteration", info)


def stability_filter(res_k: SpectrumResult, res_km1: SpectrumResult, delta: float) -> SpectrumResult:
    """Mark eigenvalues of ``res_k`` that reappear in ``res_km1`` within ``delta``.

    Values of modulus below ``delta`` are within ``delta`` of zero and of each
    other, so their reappearance says nothing; they are never marked stable.
    """
    if len(res_km1.eigenvalues) == 0:
        stable = np.zeros(len(res_k.eigenvalues), dtype=bool)
    else:
        dist = np.abs(res_k.eigenvalues[:, None] - res_km1.eigenvalues[None, :])
        stable = (dist.min(axis=1) < delta) & (np.abs(res_k.eigenvalues) >= delta)
    meta = dict(res_k.meta, stability_delta=delta)
    return SpectrumResult(res_k.eigenvalues.copy(), stable, res_k.method, meta)


def default_seed_state(N: int) -> np.ndarray:
    return coherent_state(N, 0.3, 0.7)


def traceless_part(rho: np.ndarray) -> np.ndarray:
    N = rho.shape[0]
    return rho - (np.trace(rho) / N) * np.eye(N)


def quantum_iteration_spectrum(prop: CoarseGrainedPropagator, k: int = DEFAULT_KITER,
                               rho0: np.ndarray | None = None, svd_tol: float = DEFAULT_SVD_TOL,
                               delta: float = DEFAULT_STABILITY_DELTA,
                               deflate: bool = True) -> SpectrumResult:
    """Leading spectrum of a coarse-grained propagator by the moment method.

    S is trace preserving and fixes I/N, so with ``deflate`` the invariant
    part is split off: the moments are taken for the traceless seed
    rho0 - tr(rho0) I/N and the eigenvalue 1 of I/N is reported exactly.
    Stability is judged against the truncation size k - 1.
    """
    N = prop.N
    rho0 = default_seed_state(N) if rho0 is None else np.asarray(rho0)
    meta = {"N": N, "epsilon": prop.kernel.epsilon, "k_map": prop.unitary.params.k,
            "kiter": k, "deflate": deflate}
    if deflate:
        seed = traceless_part(rho0)

        def step(r):
            # S maps traceless operators to traceless ones; re-projecting stops
            # rounding from seeding the eigenvalue-1 component
            return traceless_part(apply_propagator(r, prop))
    else:
        seed = rho0

        def step(r):
            return apply_propagator(r, prop)
    return moment_method_spectrum(step, seed, k, meta, invariant=deflate,
                                  svd_tol=svd_tol, delta=delta)


def moment_method_spectrum(step: Callable, seed, k: int, meta: dict, invariant: bool,
                           inner: Callable = hs_inner, svd_tol: float = DEFAULT_SVD_TOL,
                           delta: float = DEFAULT_STABILITY_DELTA) -> SpectrumResult:
    """Moment-method spectrum of ``step`` seen from ``seed``.

    With ``invariant`` the caller has already projected out a known invariant
    state (eigenvalue 1), which is prepended to the result.
    """
    moments = compute_moments(step, seed, k, inner)
    if invariant and abs(moments.overlaps[0]) == 0:
        values, stable = np.array([1.0 + 0j]), np.array([True])
        return SpectrumResult(values, stable, "iteration", dict(meta))
    res = stability_filter(iteration_spectrum(moments, k, svd_tol, meta),
                           iteration_spectrum(moments, max(k - 1, 1), svd_tol, meta), delta)
    if moments.truncated:
        res.meta["truncated"] = True
    # unstable Krylov artifacts outside the unit disk cannot be eigenvalues
    # of a contraction
    keep = res.stable | (np.abs(res.eigenvalues) <= 1 + MODULUS_SLACK)
    res = SpectrumResult(res.eigenvalues[keep], res.stable[keep], res.method,
                         dict(res.meta, discarded=int(np.sum(~keep))))
    if not invariant:
        return res
    values = np.concatenate([[1.0 + 0j], res.eigenvalues])
    stable = np.concatenate([[True], res.stable])
    return SpectrumResult(values, stable, "iteration", res.meta)


def dense_spectrum(prop: CoarseGrainedPropagator, limit: int | None = None,
                   basis: str = "chord") -> SpectrumResult:
    """All N^2 eigenvalues of the dense superoperator.

    The chord basis is the default: there the noise is a diagonal scaling
    and LAPACK resolves eigenvalues far below 1e-6 that the vec basis blurs
    to about 1e-6.
    """
    S = dense_superoperator(prop, limit, basis=basis)
    meta = {"N": prop.N, "epsilon": prop.kernel.epsilon, "k_map": prop.unitary.params.k,
            "basis": basis}
    return _result(np.linalg.eigvals(S), "dense", meta)


def chord_distance(N: int) -> np.ndarray:
    """Wrap-aware distance min(j, N - j) of each lattice index from 0."""
    j = np.arange(N)
    return np.minimum(j, N - j)


def retained_chords(N: int, window: int):
    """Lattice points (q, p) with wrap-aware max-norm <= window."""
    d = chord_distance(N)
    keep = np.flatnonzero(d <= window)
    q, p = np.meshgrid(keep, keep, indexing="ij")
    return q.ravel(), p.ravel()


def safe_window(prop: CoarseGrainedPropagator, threshold: float = 1e-8) -> int:
    """Smallest window such that every discarded chord factor is below ``threshold``."""
    N = prop.N
    D = prop.kernel.chord_eigs
    d = chord_distance(N)
    norm = np.maximum(d[:, None], d[None, :])
    for w in range(N // 2 + 1):
        outside = D[norm > w]
        if outside.size == 0 or outside.max() < threshold:
            return w
    return N // 2


def chord_truncation_matrix(prop: CoarseGrainedPropagator, window: int) -> np.ndarray:
    """S in the chord basis, Dt(a) U(a, b) / N, on the retained chords."""
    N = prop.N
    if window < 0 or window > N:
        raise ValueError(f"window must lie in [0, N], got {window}")
    q, p = retained_chords(N, window)
    limit = int(os.environ.get(CHORD_LIMIT_ENV, DEFAULT_CHORD_LIMIT))
    if len(q) > limit:
        raise ResourceGuardError(
            f"chord truncation keeps {len(q)} components, above the limit {limit} "
            f"(set {CHORD_LIMIT_ENV} to raise it)")
    return chord_superoperator(prop, q, p)


def chord_truncation_spectrum(prop: CoarseGrainedPropagator, window: int | None = None) -> SpectrumResult:
    """Spectrum of the chord-space restriction of S to ``window``."""
    if window is None:
        window = safe_window(prop)
    M = chord_truncation_matrix(prop, window)
    meta = {"N": prop.N, "epsilon": prop.kernel.epsilon, "k_map": prop.unitary.params.k,
            "window": window, "retained": M.shape[0]}
    return _result(np.linalg.eigvals(M), "chord_truncation", meta)


def _leading_pool(values: np.ndarray, count: int, margin: int, tie_tol: float) -> np.ndarray:
    # the leading count + margin values plus every value tied in modulus with
    # the last leading one: the order inside a tie class is arbitrary
    cut = np.abs(values[count - 1]) - tie_tol
    return values[(np.arange(len(values)) < count + margin) | (np.abs(values) >= cut)]


def match_error(a, b, count: int, margin: int = 2, tie_tol: float = 1e-9) -> float:
    """Largest distance from each of the leading ``count`` values of either list
    to the nearest value in the leading pool of the other.

    The pool is the leading ``count + margin`` values extended by the whole
    equal-modulus class (within ``tie_tol``) at the boundary, which absorbs
    reordering among values of (nearly) equal modulus.
    """
    a = sort_by_modulus(a)
    b = sort_by_modulus(b)
    if len(a) < count or len(b) < count:
        return np.inf
    pool_a = _leading_pool(a, count, margin, tie_tol)
    pool_b = _leading_pool(b, count, margin, tie_tol)
    d1 = np.abs(a[:count, None] - pool_b[None, :]).min(axis=1).max()
    d2 = np.abs(b[:count, None] - pool_a[None, :]).min(axis=1).max()
    return float(max(d1, d2))
