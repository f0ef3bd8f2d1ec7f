"""Matrix-pencil estimator for uniformly sampled sums of decaying exponentials.

Given samples ``y_k = sum_i R_i z_i**k`` plus a small perturbation, the
estimator builds a pair of shifted Hankel matrices, detects the model order
from the singular spectrum, recovers the poles ``z_i`` as eigenvalues of a
rank-truncated pencil, converts them to continuous-time decay rates, and fits
the amplitudes by linear least squares.  Only real nonincreasing signals are
supported: complex or growing poles are treated as artifacts and dropped.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .model import SampleTrace

# Eigenvalues whose relative imaginary part exceeds this are discarded as
# conjugate-pair artifacts; below it the real part is taken.
_REALNESS_TOL = 1e-6
# Poles in (1, 1 + _UNIT_POLE_SLACK] are rounding images of the constant mode.
_UNIT_POLE_SLACK = 1e-9
# Rates below _ZERO_RATE_TOL / period are clamped to exactly zero.
_ZERO_RATE_TOL = 1e-12


class PencilError(Exception):
    """Estimation failed in a way the caller must handle."""


class RankDeficiencyError(PencilError):
    """The requested order exceeds the numerical rank of the data."""


class DegenerateRatesError(PencilError):
    """The amplitude design matrix is rank deficient."""


@dataclass(frozen=True)
class PencilConfig:
    """Estimator knobs.

    ``pencil_parameter`` fixes the Hankel split L explicitly; when None it is
    N/3, rounded up to floor(N/3) + 1 when N is not divisible by 3.
    ``singular_threshold`` is the relative singular-value cutoff for order
    detection, and ``max_order`` optionally caps the detected order.
    """

    pencil_parameter: int | None = None
    singular_threshold: float = 1e-10
    max_order: int | None = None

    def __post_init__(self) -> None:
        if not (0.0 < self.singular_threshold < 1.0):
            raise ValueError(
                f"singular threshold must lie in (0, 1), got {self.singular_threshold}"
            )
        if self.pencil_parameter is not None and self.pencil_parameter < 1:
            raise ValueError("explicit pencil parameter must be positive")
        if self.max_order is not None and self.max_order < 0:
            raise ValueError("max_order must be nonnegative")


def resolve_pencil_parameter(n: int, config: PencilConfig | None = None) -> int:
    """Hankel split L for a trace of length n."""
    if config is not None and config.pencil_parameter is not None:
        return config.pencil_parameter
    return n // 3 if n % 3 == 0 else n // 3 + 1


@dataclass(frozen=True)
class HankelSet:
    """The three Hankel views of one trace.

    ``y0[r, c] = y[(L-1-c) + r]``, ``y1[r, c] = y[(L-c) + r]`` (every sample
    index shifted by one), and ``y[r, c] = y[c + r]`` with shape
    (N-L) x (L+1).
    """

    y0: np.ndarray = field(repr=False)
    y1: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)
    pencil_parameter: int
    sample_count: int


def build_hankel(trace: SampleTrace, config: PencilConfig | None = None) -> HankelSet:
    """Assemble the Hankel matrix set for a trace of at least 9 samples."""
    values = trace.values
    n = values.size
    if n < 9:
        raise ValueError(f"need at least 9 samples to form the pencil, got {n}")
    length = resolve_pencil_parameter(n, config)
    if not (1 <= length <= n - 2):
        raise ValueError(f"pencil parameter {length} invalid for {n} samples")
    rows = np.arange(n - length)[:, None]
    y0 = values[(length - 1 - np.arange(length))[None, :] + rows]
    y1 = values[(length - np.arange(length))[None, :] + rows]
    y = values[np.arange(length + 1)[None, :] + rows]
    return HankelSet(y0=y0, y1=y1, y=y, pencil_parameter=length, sample_count=n)


def detect_order(y: np.ndarray, epsilon: float, max_order: int | None = None) -> int:
    """Count singular values of ``y`` at or above ``epsilon`` relative to the largest.

    An all-zero matrix reports order 0 (no signal), not an error.
    """
    sigma = np.linalg.svd(np.asarray(y, dtype=float), compute_uv=False)
    if sigma.size == 0 or sigma[0] == 0.0:
        return 0
    order = int(np.sum(sigma / sigma[0] >= epsilon))
    if max_order is not None:
        order = min(order, max_order)
    return order


@dataclass(frozen=True)
class PoleDiagnostics:
    """Spectral quantities recorded during the pole solve.

    ``y0_trunc_gap_2`` is the spectral norm of the difference between the
    rank-M truncation of Y0 and Y0 itself, computed by explicit subtraction
    (the reference results were produced that way; the mathematically equal
    sigma_{M+1} differs from it at rounding level).  ``kappa_xm`` is the
    condition number of the unit-column eigenvector matrix of the truncated
    pencil product, and is reproducible only to rounding-noise level because
    the product has a large kernel whose basis is rounding-determined.
    """

    sigma_m: float
    y1_norm_2: float
    y0_trunc_gap_2: float
    kappa_xm: float
    y0_singular_values: np.ndarray = field(repr=False)


def estimate_poles(h: HankelSet, order: int) -> tuple[np.ndarray, PoleDiagnostics]:
    """Eigenvalues of the rank-``order`` truncated pencil, sorted by real part.

    Returns the possibly complex eigenvalues together with the diagnostics
    consumed by the error certificate.
    """
    rows, length = h.y0.shape
    if not (1 <= order <= min(rows, length)):
        raise ValueError(f"order {order} invalid for a {rows}x{length} pencil")
    u, s, vt = np.linalg.svd(h.y0, full_matrices=False)
    sigma_m = float(s[order - 1])
    if sigma_m == 0.0:
        raise RankDeficiencyError(
            f"order {order} exceeds the rank of the data (sigma_{order} = 0)"
        )
    um = u[:, :order]
    vm = vt[:order, :].T
    a = s[:order]
    z_e = (um.T @ h.y1 @ vm) / a[:, None]
    eigvals = np.linalg.eigvals(z_e)
    eigvals = eigvals[np.argsort(-eigvals.real)]

    y0m = (um * a) @ vm.T
    gap = float(np.linalg.norm(y0m - h.y0, 2))
    y1_norm = float(np.linalg.norm(h.y1, 2))
    kappa = _pencil_eigenbasis_condition(um, vm, a, h.y1)
    diag = PoleDiagnostics(
        sigma_m=sigma_m,
        y1_norm_2=y1_norm,
        y0_trunc_gap_2=gap,
        kappa_xm=kappa,
        y0_singular_values=s,
    )
    return eigvals, diag


def _pencil_eigenbasis_condition(um, vm, a, y1) -> float:
    # Eigenvector matrix of the full (L x L) truncated product, unit columns.
    product = ((vm / a) @ um.T) @ y1
    _, eigvecs = np.linalg.eig(product)
    norms = np.linalg.norm(eigvecs, axis=0)
    if np.any(norms == 0.0):
        return float("inf")
    sv = np.linalg.svd(eigvecs / norms, compute_uv=False)
    if sv[-1] <= 1e3 * np.finfo(float).eps * sv[0]:
        return float("inf")
    return float((sv[0] / sv[-1]).real)


def poles_to_rates(poles: np.ndarray, period: float) -> np.ndarray:
    """Convert poles ``z = exp(-rate * period)`` to decay rates.

    Rates with magnitude below 1e-12 / period are clamped to exactly zero so
    the constant mode survives later index arithmetic.
    """
    if period <= 0:
        raise ValueError(f"period must be positive, got {period}")
    poles = np.asarray(poles, dtype=float)
    if np.any(poles <= 0):
        raise PencilError(
            f"nonpositive pole {poles[poles <= 0][0]} has no decay-rate reading"
        )
    rates = -np.log(poles) / period
    rates[np.abs(rates) < _ZERO_RATE_TOL / period] = 0.0
    return rates


def fit_amplitudes(trace: SampleTrace, rates: np.ndarray) -> np.ndarray:
    """Least-squares amplitudes of ``sum_i R_i exp(-rate_i * period * k)``.

    The fit runs on the trace's own clock (k = 0 at ``t_start``); use
    :func:`rescale_amplitudes` to move the amplitudes to absolute time.
    Solved through the SVD, never the normal equations.
    """
    rates = np.asarray(rates, dtype=float)
    if rates.size == 0:
        return np.zeros(0)
    if trace.values.size < rates.size:
        raise ValueError(
            f"{rates.size} rates need at least as many samples, "
            f"got {trace.values.size}"
        )
    k = np.arange(trace.values.size, dtype=float)
    design = np.exp(-np.outer(k * trace.period, rates))
    amps, _, rank, _ = np.linalg.lstsq(design, trace.values, rcond=None)
    if rank < rates.size:
        order = np.argsort(rates)
        gaps = np.diff(rates[order])
        j = int(np.argmin(gaps)) if gaps.size else 0
        pair = (rates[order][j], rates[order][j + 1]) if gaps.size else (rates[0],) * 2
        raise DegenerateRatesError(
            f"amplitude design matrix is rank deficient; closest rate pair is "
            f"{pair[0]:.6g} and {pair[1]:.6g}"
        )
    return amps


def rescale_amplitudes(amps: np.ndarray, rates: np.ndarray, t_start: float) -> np.ndarray:
    """Move local-clock amplitudes to absolute time: ``R * exp(rate * t_start)``."""
    return np.asarray(amps) * np.exp(np.asarray(rates) * t_start)


@dataclass(frozen=True)
class PencilEstimate:
    """Full estimator output for one trace."""

    order: int
    poles: np.ndarray = field(repr=False)
    rates: np.ndarray = field(repr=False)
    amplitudes: np.ndarray = field(repr=False)
    singular_values: np.ndarray = field(repr=False)
    sigma_m: float
    y1_norm_2: float
    y0_trunc_gap_2: float
    kappa_xm: float
    pencil_parameter: int
    sample_count: int
    period: float

    def to_dict(self) -> dict:
        return {
            "order": self.order,
            "poles": self.poles.tolist(),
            "rates": self.rates.tolist(),
            "amplitudes": self.amplitudes.tolist(),
            "sigma": self.singular_values.tolist(),
            "sigma_M": self.sigma_m,
            "y1_norm_2": self.y1_norm_2,
            "y0_trunc_gap_2": self.y0_trunc_gap_2,
            "kappa_xm": self.kappa_xm,
            "pencil_parameter": self.pencil_parameter,
            "sample_count": self.sample_count,
            "period": self.period,
        }

    def reconstruct(self, k: np.ndarray) -> np.ndarray:
        """Evaluate the fitted exponential sum at sample indices ``k``."""
        k = np.asarray(k, dtype=float)
        if self.order == 0:
            return np.zeros_like(k)
        return np.exp(-np.outer(k * self.period, self.rates)) @ self.amplitudes


def analyze(trace: SampleTrace, config: PencilConfig | None = None) -> PencilEstimate:
    """Run the full estimator: order detection, poles, rates, amplitudes.

    Complex eigenvalue pairs and poles outside (0, 1 + 1e-9] are discarded
    with a warning, reducing the reported order; poles within rounding of 1
    are clamped to exactly 1 (the constant mode).
    """
    config = config or PencilConfig()
    h = build_hankel(trace, config)
    order = detect_order(h.y, config.singular_threshold, config.max_order)
    if order == 0:
        return PencilEstimate(
            order=0,
            poles=np.zeros(0),
            rates=np.zeros(0),
            amplitudes=np.zeros(0),
            singular_values=np.linalg.svd(h.y, compute_uv=False),
            sigma_m=0.0,
            y1_norm_2=0.0,
            y0_trunc_gap_2=0.0,
            kappa_xm=float("nan"),
            pencil_parameter=h.pencil_parameter,
            sample_count=h.sample_count,
            period=trace.period,
        )
    sigma_y = np.linalg.svd(h.y, compute_uv=False)
    eigvals, diag = estimate_poles(h, order)

    imag_ok = np.abs(eigvals.imag) <= _REALNESS_TOL * np.abs(eigvals)
    if not np.all(imag_ok):
        warnings.warn(
            f"discarding {int(np.sum(~imag_ok))} complex pencil eigenvalue(s); "
            "the model class is real",
            stacklevel=2,
        )
    poles = eigvals.real[imag_ok]
    in_range = (poles > 0.0) & (poles <= 1.0 + _UNIT_POLE_SLACK)
    if not np.all(in_range):
        warnings.warn(
            f"discarding {int(np.sum(~in_range))} pole(s) outside (0, 1]; "
            "growth is not physical for a cooling trace",
            stacklevel=2,
        )
    poles = np.minimum(poles[in_range], 1.0)
    rates = poles_to_rates(poles, trace.period)
    amplitudes = fit_amplitudes(trace, rates)
    return PencilEstimate(
        order=poles.size,
        poles=poles,
        rates=rates,
        amplitudes=amplitudes,
        singular_values=sigma_y,
        sigma_m=diag.sigma_m,
        y1_norm_2=diag.y1_norm_2,
        y0_trunc_gap_2=diag.y0_trunc_gap_2,
        kappa_xm=diag.kappa_xm,
        pencil_parameter=h.pencil_parameter,
        sample_count=h.sample_count,
        period=trace.period,
    )
