"""
Time series of a coarse-grained evolution and their decay rates.

Every series here is built from the traceless part delta_n = S^n(rho0 - I/N).
Since S fixes I/N and preserves the trace, rho_n = I/N + delta_n exactly, and

    tr(rho0 rho_n) - 1/N = <delta_0, delta_n>
    tr(rho_n^2)          = 1/N + |delta_n|^2

delta_n is carried as a unit operator times exp(s_n), so a series whose
magnitude falls below the double range keeps its logarithm.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np

from .channels import CoarseGrainedPropagator, apply_propagator
from .spectral import traceless_part
from .torus import coherent_state, hs_inner

MEANINGS = ("autocorrelation", "linear_entropy", "loschmidt")

# saturation threshold for the early (Lyapunov) window, as a fraction of ln N
SATURATION_FRACTION = 0.8
# magnitudes below this count as underflowed when choosing a late window
UNDERFLOW_FLOOR = 1e-300


@dataclass
class TimeSeries:
    values: np.ndarray
    meaning: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.meaning not in MEANINGS:
            raise ValueError(f"unknown series meaning {self.meaning!r}")
        if len(self.values) < 2:
            raise ValueError(f"a time series needs at least 2 points, got {len(self.values)}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("time series values must be finite")

    def __len__(self) -> int:
        return len(self.values)


def _meta(prop: CoarseGrainedPropagator, **extra) -> dict:
    meta = {"N": prop.N, "epsilon": prop.kernel.epsilon, "k_map": prop.unitary.params.k, "states": 1}
    meta.update(extra)
    return meta


def _check_steps(T: int) -> None:
    if T < 1:
        raise ValueError(f"number of steps must be >= 1, got {T}")


def traceless_orbit(rho0: np.ndarray, prop: CoarseGrainedPropagator,
                    T: int) -> Iterator[tuple[np.ndarray | None, float]]:
    """Yield (u_n, s_n) with delta_n = exp(s_n) u_n and |u_n| = 1, n = 0..T.

    If delta_n vanishes (rho0 = I/N, or total depolarization) the iterate is
    ``None`` and s_n = -inf from then on.
    """
    rho0 = np.asarray(rho0, dtype=complex)
    v = traceless_part(rho0)
    # a seed within rounding of I/N has no traceless part
    if np.linalg.norm(v) <= 1e-14 * np.linalg.norm(rho0):
        v = None
    log_scale = 0.0
    for n in range(T + 1):
        norm = np.linalg.norm(v) if v is not None else 0.0
        if v is None or norm == 0 or not np.isfinite(norm):
            v = None
            yield None, -np.inf
        else:
            v = v / norm
            log_scale += np.log(norm)
            yield v, log_scale
        if n < T and v is not None:
            # re-project: rounding must not feed the invariant component
            v = traceless_part(apply_propagator(v, prop))


def _scaled_overlap(a, sa, b, sb) -> float:
    if a is None or b is None:
        return 0.0
    return float(np.real(hs_inner(a, b)) * np.exp(sa + sb))


def autocorrelation_series(rho0: np.ndarray, prop: CoarseGrainedPropagator, T: int) -> TimeSeries:
    """C_n = tr(rho0 rho_n) - 1/N for n = 0..T."""
    _check_steps(T)
    orbit = list(traceless_orbit(rho0, prop, T))
    u0, s0 = orbit[0]
    values = [_scaled_overlap(u0, s0, u, s) for u, s in orbit]
    return TimeSeries(np.array(values), "autocorrelation", _meta(prop))


def linear_entropy_series(rho0: np.ndarray, prop: CoarseGrainedPropagator, T: int,
                          subtract_invariant: bool = False) -> TimeSeries:
    """S_n = -ln tr(rho_n^2), or -ln tr(delta_n^2) with ``subtract_invariant``.

    The subtracted variant is the log of a squared norm and is evaluated in
    log space.  If delta_n vanishes exactly the series is cut there and
    ``meta["truncated"]`` is set.
    """
    _check_steps(T)
    N = prop.N
    values = []
    truncated = False
    for u, s in traceless_orbit(rho0, prop, T):
        if subtract_invariant:
            if u is None:
                truncated = True
                break
            values.append(-2.0 * s)
        else:
            # tr rho_n^2 = 1/N + |delta_n|^2
            values.append(-np.logaddexp(-np.log(N), 2.0 * s))
    if truncated and len(values) < 2:
        raise ValueError("the invariant-subtracted state vanishes; no entropy series can be formed")
    meta = _meta(prop, subtract_invariant=subtract_invariant)
    if truncated:
        meta["truncated"] = True
    return TimeSeries(np.array(values), "linear_entropy", meta)


def loschmidt_series(rho0: np.ndarray, prop: CoarseGrainedPropagator,
                     prop2: CoarseGrainedPropagator, T: int) -> TimeSeries:
    """M_n = <S^n delta_0, S'^n delta_0> with delta_0 = rho0 - I/N."""
    _check_steps(T)
    if prop.N != prop2.N:
        raise ValueError(f"propagators act on different dimensions: {prop.N} vs {prop2.N}")
    values = [_scaled_overlap(u, s, u2, s2) for (u, s), (u2, s2)
              in zip(traceless_orbit(rho0, prop, T), traceless_orbit(rho0, prop2, T))]
    meta = _meta(prop, k_map2=prop2.unitary.params.k, epsilon2=prop2.kernel.epsilon)
    return TimeSeries(np.array(values), "loschmidt", meta)


def _check_window(series: TimeSeries, n_min: int, n_max: int) -> None:
    if n_min < 0 or n_max >= len(series):
        raise ValueError(f"window [{n_min}, {n_max}] lies outside the series 0..{len(series) - 1}")
    if n_max <= n_min + 2:
        raise ValueError(f"window [{n_min}, {n_max}] needs more than 3 points")


def fit_decay_rate(series: TimeSeries, n_min: int, n_max: int) -> float:
    """Least-squares slope of ln|v_n| against n on [n_min, n_max]."""
    _check_window(series, n_min, n_max)
    n = np.arange(n_min, n_max + 1)
    v = series.values[n_min:n_max + 1]
    bad = np.flatnonzero(~(np.abs(v) > 0))
    if len(bad):
        raise ValueError(f"cannot take the log of the {series.meaning} series: "
                         f"value {v[bad[0]]!r} at n={n_min + bad[0]}")
    return float(np.polyfit(n, np.log(np.abs(v)), 1)[0])


def fit_slope(series: TimeSeries, n_min: int, n_max: int) -> float:
    """Least-squares slope of v_n itself (for entropies, already logarithmic)."""
    _check_window(series, n_min, n_max)
    n = np.arange(n_min, n_max + 1)
    return float(np.polyfit(n, series.values[n_min:n_max + 1], 1)[0])


def late_window(series: TimeSeries, log_scale: bool = True) -> tuple[int, int]:
    """Last third of the usable series.

    With ``log_scale`` the usable part ends before the first value whose
    magnitude has fallen to the underflow floor.
    """
    end = len(series) - 1
    if log_scale:
        small = np.flatnonzero(np.abs(series.values) <= UNDERFLOW_FLOOR)
        if len(small):
            end = int(small[0]) - 1
    start = end - (end + 1) // 3
    start = min(start, end - 3)
    if start < 0:
        raise ValueError(f"the usable {series.meaning} series is too short for a late window")
    return start, end


def presaturation_window(series: TimeSeries, N: int) -> tuple[int, int]:
    """Initial run of steps with S_n below the saturation threshold."""
    threshold = SATURATION_FRACTION * np.log(N)
    above = np.flatnonzero(series.values >= threshold)
    end = (int(above[0]) if len(above) else len(series)) - 1
    if end < 3:
        raise ValueError(f"only {end + 1} step(s) lie below the saturation threshold {threshold:.3g}")
    return 0, end


def initial_centers(count: int, seed: int) -> np.ndarray:
    """Deterministic pseudo-random phase-space points, shape (count, 2)."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    return np.random.default_rng(seed).random((count, 2))


def averaged_series(generator: Callable[[np.ndarray], TimeSeries], N: int, count: int = 10,
                    seed: int = 0) -> TimeSeries:
    """Pointwise mean of ``generator(rho0)`` over coherent initial states.

    The states are centred at :func:`initial_centers`; equal length series
    are required (a truncated member raises).
    """
    runs = [generator(coherent_state(N, q0, p0)) for q0, p0 in initial_centers(count, seed)]
    lengths = {len(r) for r in runs}
    if len(lengths) != 1:
        raise ValueError(f"averaged series have different lengths {sorted(lengths)}")
    values = np.mean([r.values for r in runs], axis=0)
    meta = dict(runs[0].meta, states=count, seed=seed)
    return TimeSeries(values, runs[0].meaning, meta)
