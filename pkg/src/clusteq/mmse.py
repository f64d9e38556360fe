"""Closed-form linear equalizers and their mean-square-error analysis.

Covers the per-symbol optimal linear MMSE solution driven by
time-varying symbol priors, the stationary Wiener solution it reduces
to under time-averaged priors, the converged filter of a variance
cluster, and the quadratic bound on the MSE cost of quantizing the
prior-variance window.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular
from scipy.optimize import brentq
from scipy.special import erf

from .channel import ChannelLinearization
from .modem import DOMAIN_CODED_INTERLEAVED, LLR_CLIP, LlrFrame, ROLE_EXTRINSIC

_SYM_ATOL = 1e-10


@dataclass
class FilterTaps:
    """Feedforward/feedback pair; the stacked tap vector is [f; -b]."""

    f: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.f = np.asarray(self.f, dtype=np.float64).ravel()
        self.b = np.asarray(self.b, dtype=np.float64).ravel()
        if not (np.all(np.isfinite(self.f)) and np.all(np.isfinite(self.b))):
            raise ValueError("filter taps must be finite")

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.f, -self.b])


@dataclass
class PriorDiag:
    """Per-symbol prior variances over the window, center symbol excluded."""

    v: np.ndarray

    def __post_init__(self):
        self.v = np.asarray(self.v, dtype=np.float64).ravel()
        if self.v.size and (self.v.min() < -1e-9 or self.v.max() > 1.0 + 1e-9):
            raise ValueError("prior variances must lie in [0, 1]")
        self.v = np.clip(self.v, 0.0, 1.0)


def _spd_solve(A: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Cholesky solve with an explicit symmetry assertion."""
    if not np.allclose(A, A.T, atol=_SYM_ATOL, rtol=0.0):
        raise ValueError("normal-equation matrix is not symmetric")
    A = 0.5 * (A + A.T)
    try:
        factor = cho_factor(A, lower=True)
    except np.linalg.LinAlgError as exc:
        raise ValueError("normal-equation matrix is singular or indefinite") from exc
    return cho_solve(factor, rhs)


def _normal_matrix(lin: ChannelLinearization, v: np.ndarray, noise_var: float) -> np.ndarray:
    H0 = lin.H_minus0
    A = (H0 * v) @ H0.T + np.outer(lin.s, lin.s)
    A[np.diag_indices_from(A)] += noise_var
    return A


def exact_mmse_filters(lin: ChannelLinearization, V: PriorDiag, noise_var: float) -> FilterTaps:
    """Per-symbol linear MMSE filter for prior variance window V.

    f = (H_minus0 V H_minus0^H + s s^H + noise_var I)^{-1} s and
    b = H_minus0^H f.
    """
    if V.v.size != lin.n_fb:
        raise ValueError(f"prior window has {V.v.size} entries, expected {lin.n_fb}")
    A = _normal_matrix(lin, V.v, noise_var)
    f = _spd_solve(A, lin.s)
    return FilterTaps(f=f, b=lin.H_minus0.T @ f)


def exact_mmse_ff_batch(lin: ChannelLinearization, v_windows: np.ndarray, noise_var: float) -> np.ndarray:
    """Feedforward solutions for a batch of prior windows, one per row."""
    H0 = lin.H_minus0
    n = lin.n_ff
    A = np.einsum("ij,nj,kj->nik", H0, v_windows, H0, optimize=True)
    A += np.outer(lin.s, lin.s)
    A[:, np.arange(n), np.arange(n)] += noise_var
    if not np.allclose(A, np.swapaxes(A, 1, 2), atol=_SYM_ATOL, rtol=0.0):
        raise ValueError("batched normal-equation matrices are not symmetric")
    A = 0.5 * (A + np.swapaxes(A, 1, 2))
    rhs = np.broadcast_to(lin.s[:, None], (A.shape[0], n, 1)).copy()
    return np.linalg.solve(A, rhs)[:, :, 0]


def wiener_filters(lin: ChannelLinearization, sigma_xbar_sq: float, noise_var: float) -> FilterTaps:
    """Stationary solution with all prior variances replaced by 1 - sigma_xbar_sq."""
    if not 0.0 <= sigma_xbar_sq <= 1.0:
        raise ValueError("sigma_xbar_sq must lie in [0, 1]")
    v = np.full(lin.n_fb, 1.0 - sigma_xbar_sq)
    return exact_mmse_filters(lin, PriorDiag(v), noise_var)


def converged_cluster_filter(lin: ChannelLinearization, centroid: PriorDiag, noise_var: float) -> FilterTaps:
    """Steady-state filter of a cluster whose members share variance window `centroid`."""
    return exact_mmse_filters(lin, centroid, noise_var)


def mmse_estimate(taps: FilterTaps, y_window, xbar_minus_n) -> float:
    """Affine symbol estimate f^H y - b^H xbar_minus_n."""
    y_window = np.asarray(y_window, dtype=np.float64).ravel()
    xbar_minus_n = np.asarray(xbar_minus_n, dtype=np.float64).ravel()
    if y_window.size != taps.f.size or xbar_minus_n.size != taps.b.size:
        raise ValueError("window lengths do not match the filter taps")
    return float(taps.f @ y_window - taps.b @ xbar_minus_n)


def filter_mse(lin: ChannelLinearization, taps: FilterTaps, V: PriorDiag, noise_var: float) -> float:
    """MSE of a feedforward filter with implied feedback b = H_minus0^H f.

    MSE(f) = f^H (H_minus0 V H_minus0^H + s s^H + noise_var I) f
             - 2 Re(f^H s) + 1.
    """
    if V.v.size != lin.n_fb:
        raise ValueError(f"prior window has {V.v.size} entries, expected {lin.n_fb}")
    A = _normal_matrix(lin, V.v, noise_var)
    f = taps.f
    return float(f @ A @ f - 2.0 * (f @ lin.s) + 1.0)


def regressor_mse(lin: ChannelLinearization, f, b, v_fb, noise_var: float) -> float:
    """MSE of an arbitrary (f, b) pair on the regressor [y; xbar].

    Assumes unit-power independent symbols and consistent soft feedback
    with E[xbar^2] = 1 - v per entry, so unlike :func:`filter_mse` the
    adapted feedback taps are evaluated as-is rather than implied from f.
    """
    f = np.asarray(f, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    v_fb = np.asarray(v_fb, dtype=np.float64).ravel()
    if f.size != lin.n_ff or b.size != lin.n_fb or v_fb.size != lin.n_fb:
        raise ValueError("dimension mismatch against the linearization")
    H = lin.H
    m = 1.0 - v_fb
    mse = 1.0 - 2.0 * (f @ lin.s)
    mse += f @ (H @ H.T) @ f + noise_var * (f @ f)
    mse -= 2.0 * f @ (lin.H_minus0 * m) @ b
    mse += b @ (m * b)
    return float(mse)


def _power_iteration(matvec, n: int, tol: float = 1e-10, max_iter: int = 100000) -> float:
    """Dominant eigenvalue of a symmetric PSD operator by power iteration."""
    x = np.ones(n) + 1e-3 * np.arange(n)
    x /= np.linalg.norm(x)
    lam = 0.0
    for _ in range(max_iter):
        y = matvec(x)
        nrm = np.linalg.norm(y)
        if nrm == 0.0:
            return 0.0
        x_new = y / nrm
        lam_new = float(x_new @ matvec(x_new))
        if abs(lam_new - lam) <= tol * max(abs(lam_new), 1.0):
            return lam_new
        lam = lam_new
        x = x_new
    return lam


def lambda_max_sym(A: np.ndarray, tol: float = 1e-10) -> float:
    return _power_iteration(lambda x: A @ x, A.shape[0], tol=tol)


def lambda_min_spd(A: np.ndarray, tol: float = 1e-10) -> float:
    """Smallest eigenvalue of an SPD matrix via inverse power iteration."""
    factor = cho_factor(0.5 * (A + A.T), lower=True)
    inv_lam = _power_iteration(lambda x: cho_solve(factor, x), A.shape[0], tol=tol)
    if inv_lam <= 0.0:
        raise ValueError("inverse power iteration failed on an SPD matrix")
    return 1.0 / inv_lam


def mse_gap_and_bound(
    lin: ChannelLinearization, centroid: PriorDiag, V: PriorDiag, noise_var: float
) -> tuple[float, float]:
    """Excess MSE of the centroid-converged filter at true priors V, and its bound.

    The gap is evaluated through the stable quadratic-form identity
    gap = r^H B^{-1} r with r = H_minus0 E H_minus0^H A^{-1} s,
    A the centroid normal matrix, B = A + H_minus0 E H_minus0^H and
    E = V - centroid; the bound is
    e_max^2 * lambda_max^2(H_minus0 H_minus0^H) / lambda_min(B) * s^H A^{-2} s.
    """
    if centroid.v.size != lin.n_fb or V.v.size != lin.n_fb:
        raise ValueError("prior windows do not match the linearization")
    H0 = lin.H_minus0
    e = V.v - centroid.v
    A = _normal_matrix(lin, centroid.v, noise_var)
    B = _normal_matrix(lin, V.v, noise_var)
    if not np.allclose(A, A.T, atol=_SYM_ATOL, rtol=0.0):
        raise ValueError("normal-equation matrix is not symmetric")
    try:
        b_factor = cho_factor(0.5 * (B + B.T), lower=True)
    except np.linalg.LinAlgError as exc:
        raise ValueError("perturbed normal matrix is not positive definite") from exc

    g = _spd_solve(A, lin.s)
    r = H0 @ (e * (H0.T @ g))
    # gap = ||L^{-1} r||^2 with B = L L^T, nonnegative by construction
    lower = np.tril(b_factor[0])
    w = solve_triangular(lower, r, lower=True)
    gap = float(w @ w)

    e_max = float(np.max(np.abs(e))) if e.size else 0.0
    if e_max == 0.0:
        return gap, 0.0
    lmax_hh = lambda_max_sym(H0 @ H0.T)
    lmin_b = lambda_min_spd(B)
    bound = e_max**2 * lmax_hh**2 / lmin_b * float(g @ g)
    return gap, bound


def equalizer_extrinsic_llr(estimates, *, gains=None, targets=None) -> LlrFrame:
    """Map equalizer symbol estimates to extrinsic LLRs.

    For closed-form filters pass ``gains`` (per-sample or scalar bias
    K[n] = f[n]^H s): L[n] = 2 x_hat[n] / (1 - K[n]).  For adaptive
    filters pass ``targets`` (the adaptation target sequence): gain and
    noise power are block estimates mu = mean(x_hat * target) and
    sigma^2 = mean(x_hat^2) - mu^2, with L[n] = 2 mu x_hat[n] / sigma^2.
    LLRs are clipped at +/-30; nonpositive noise estimates yield zero
    LLRs with a warning.
    """
    estimates = np.asarray(estimates, dtype=np.float64).ravel()
    if estimates.size == 0:
        raise ValueError("estimates must be nonempty")
    if (gains is None) == (targets is None):
        raise ValueError("pass exactly one of gains= or targets=")
    if gains is not None:
        gains = np.broadcast_to(np.asarray(gains, dtype=np.float64), estimates.shape)
        denom = 1.0 - gains
        with np.errstate(divide="ignore", over="ignore"):
            llr = np.where(denom > 1e-300, 2.0 * estimates / denom, np.sign(estimates) * np.inf)
        llr = np.where(np.isnan(llr), 0.0, llr)
    else:
        targets = np.asarray(targets, dtype=np.float64).ravel()
        if targets.size != estimates.size:
            raise ValueError("targets length does not match estimates")
        gain = float(np.mean(estimates * targets))
        noise = float(np.mean(estimates**2) - gain**2)
        if noise <= 0.0:
            warnings.warn("nonpositive noise-power estimate; emitting zero LLRs")
            llr = np.zeros_like(estimates)
        else:
            llr = 2.0 * gain * estimates / noise
    llr = np.clip(llr, -LLR_CLIP, LLR_CLIP)
    return LlrFrame(llr, role=ROLE_EXTRINSIC, domain=DOMAIN_CODED_INTERLEAVED)


def blind_bpsk_moments(estimates) -> tuple[float, float]:
    """Gain magnitude and noise power of x_hat = gain * x + noise, x = +/-1.

    Method of moments on (E|x_hat|, E[x_hat^2]) under the Gaussian-mixture
    model; needs no reference symbols, so it stays unbiased when the
    adaptation targets are the receiver's own decisions.  Returns
    (0, E[x_hat^2]) when the moments carry no resolvable signal.
    """
    estimates = np.asarray(estimates, dtype=np.float64).ravel()
    m1 = float(np.mean(np.abs(estimates)))
    m2 = float(np.mean(estimates**2))
    if m2 <= 0.0:
        return 0.0, 0.0
    ratio = m1 / np.sqrt(m2)

    def folded_ratio(t: float) -> float:
        # E|x_hat| / sqrt(E[x_hat^2]) for signal-to-noise ratio t = gain/sigma
        return (t * erf(t / np.sqrt(2.0)) + np.sqrt(2.0 / np.pi) * np.exp(-(t**2) / 2.0)) / np.sqrt(
            1.0 + t**2
        )

    t_hi = 40.0
    if ratio <= folded_ratio(0.0):
        return 0.0, m2
    if ratio >= folded_ratio(t_hi):
        t = t_hi
    else:
        t = brentq(lambda x: folded_ratio(x) - ratio, 0.0, t_hi, xtol=1e-12)
    gain = np.sqrt(m2 * t**2 / (1.0 + t**2))
    return float(gain), float(max(m2 - gain**2, 0.0))


def extrinsic_llr_from_moments(estimates, gain: float, noise_power: float) -> LlrFrame:
    """Extrinsic LLRs from externally estimated block moments.

    Same Gaussian mapping as the ``targets`` branch of
    :func:`equalizer_extrinsic_llr`, but with the gain and noise power
    measured elsewhere, e.g. on the training period where the true
    symbols are known.
    """
    estimates = np.asarray(estimates, dtype=np.float64).ravel()
    if estimates.size == 0:
        raise ValueError("estimates must be nonempty")
    if noise_power <= 0.0:
        warnings.warn("nonpositive noise-power estimate; emitting zero LLRs")
        llr = np.zeros_like(estimates)
    else:
        llr = np.clip(2.0 * gain * estimates / noise_power, -LLR_CLIP, LLR_CLIP)
    return LlrFrame(llr, role=ROLE_EXTRINSIC, domain=DOMAIN_CODED_INTERLEAVED)
