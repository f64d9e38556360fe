"""NLMS machinery and the adaptive turbo equalizers built from it.

Three flavours share one compiled scan: a single direct NLMS filter, a
hard-clustered bank that switches exactly one filter per sample on the
nearest variance centroid, and a soft-clustered bank whose filters all
take fractional steps weighted by association probabilities, with an
adaptive combiner or instantaneous selection producing the bank output.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from ._kernels import bank_scan
from .channel import ChannelLinearization
from .clustering import Association, ClusterModel, MODE_HARD, MODE_SOFT, _sq_dists
from .modem import hard_decide

# Regularizer guarding the ||u||^2 -> 0 edge of every normalized update.
DELTA = 1e-8

TILDE_TRAINING_TRUTH = "training_truth"
TILDE_HARD_DECISION = "hard_decision"
TILDE_DECODER_MEAN = "decoder_mean"
_TILDE_MODES = {
    TILDE_TRAINING_TRUTH: _kernels.TARGET_TRUTH,
    TILDE_HARD_DECISION: _kernels.TARGET_HARD_DECISION,
    TILDE_DECODER_MEAN: _kernels.TARGET_DECODER_MEAN,
}

OUTPUT_SWITCH = "switch"
OUTPUT_COMBINE = "combine"
OUTPUT_SELECT = "select"
_OUTPUT_MODES = {
    OUTPUT_SWITCH: _kernels.OUT_SWITCH,
    OUTPUT_COMBINE: _kernels.OUT_COMBINE,
    OUTPUT_SELECT: _kernels.OUT_SELECT,
}


@dataclass
class AdaptiveFilter:
    """Stacked tap vector [f; -b] with its adaptation step size."""

    w: np.ndarray
    mu: float

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=np.float64).ravel()
        if not np.all(np.isfinite(self.w)):
            raise ValueError("filter taps must be finite")
        if self.mu < 0.0:
            raise ValueError("step size must be >= 0")


@dataclass
class TrainingSchedule:
    l_t: int
    l_d: int
    tilde_x_mode: str = TILDE_DECODER_MEAN

    def __post_init__(self):
        if self.l_t < 0 or self.l_d < 0:
            raise ValueError("training and data lengths must be >= 0")
        if self.tilde_x_mode not in _TILDE_MODES:
            raise ValueError(f"unknown tilde_x_mode {self.tilde_x_mode!r}")


@dataclass
class FrameStreams:
    """Aligned per-symbol sequences over one frame (training then data)."""

    y: np.ndarray  # received samples
    truth: np.ndarray  # transmitted symbols (training part known at receiver)
    xbar: np.ndarray  # feedback means: training symbols then decoder means
    v: np.ndarray  # prior variances: zeros over training, decoder values after

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=np.float64).ravel()
        self.truth = np.asarray(self.truth, dtype=np.float64).ravel()
        self.xbar = np.asarray(self.xbar, dtype=np.float64).ravel()
        self.v = np.asarray(self.v, dtype=np.float64).ravel()
        n = self.y.size
        if not (self.truth.size == self.xbar.size == self.v.size == n):
            raise ValueError("frame streams must share one length")


@dataclass
class FilterBank:
    """K adaptive filters tied to a cluster model, plus an optional combiner."""

    taps: np.ndarray  # (K, n_taps)
    cluster_model: ClusterModel
    mu: float
    output_mode: str = OUTPUT_SWITCH
    combiner: np.ndarray | None = None
    mu_c: float = 0.1

    def __post_init__(self):
        self.taps = np.atleast_2d(np.asarray(self.taps, dtype=np.float64))
        if self.output_mode not in _OUTPUT_MODES:
            raise ValueError(f"unknown output mode {self.output_mode!r}")
        if self.taps.shape[0] != self.cluster_model.n_clusters:
            raise ValueError("bank size must match the cluster count")
        if (self.combiner is not None) != (self.output_mode == OUTPUT_COMBINE):
            raise ValueError("combiner must be present iff output_mode is 'combine'")
        if self.combiner is not None:
            self.combiner = np.asarray(self.combiner, dtype=np.float64).ravel()
            if self.combiner.size != self.taps.shape[0]:
                raise ValueError("combiner length must equal the bank size")

    @property
    def n_filters(self) -> int:
        return self.taps.shape[0]

    @property
    def filters(self) -> list[AdaptiveFilter]:
        return [AdaptiveFilter(w=self.taps[k].copy(), mu=self.mu) for k in range(self.n_filters)]


@dataclass
class BankRunResult:
    """One equalization pass: data-period outputs and the updated state."""

    estimates: np.ndarray  # bank output over the data period
    bank: FilterBank
    selected: np.ndarray  # chosen filter per data sample (-1 for combine)
    per_filter: np.ndarray  # (L_D, K) constituent estimates
    targets: np.ndarray  # adaptation-target sequence used over the data period
    train_estimates: np.ndarray  # bank output over the training period
    train_per_filter: np.ndarray  # (L_T, K) constituent estimates while training

    @property
    def taps(self) -> AdaptiveFilter:
        """Single-filter view, for direct (K = 1) runs."""
        return AdaptiveFilter(w=self.bank.taps[0].copy(), mu=self.bank.mu)


def feedback_offsets(lin: ChannelLinearization, extra_past: int = 0) -> np.ndarray:
    """Relative symbol positions feeding the feedback filter.

    The defaults follow the interference window around the center
    symbol: N2+L-1 past and N1 future positions, center excluded.
    ``extra_past`` prepends additional past taps beyond that window.
    """
    ell = lin.taps.size
    past = np.arange(-(lin.n2 + ell - 1 + extra_past), 0)
    future = np.arange(1, lin.n1 + 1)
    return np.concatenate([past, future])


def build_regressor(y_window, xbar_minus_n) -> np.ndarray:
    """Stack [y window; feedback means], feedforward part first."""
    y_window = np.asarray(y_window, dtype=np.float64).ravel()
    xbar_minus_n = np.asarray(xbar_minus_n, dtype=np.float64).ravel()
    return np.concatenate([y_window, xbar_minus_n])


def nlms_step(filt: AdaptiveFilter, u, target: float, mu_eff: float) -> tuple[float, float]:
    """One normalized LMS step; prediction precedes the tap update.

    Returns (error, estimate).  Updates are skipped when the regressor
    energy falls below the regularizer, but the estimate is still
    produced.
    """
    u = np.asarray(u, dtype=np.float64).ravel()
    if u.size != filt.w.size:
        raise ValueError("regressor length does not match the filter")
    if mu_eff < 0.0:
        raise ValueError("effective step must be >= 0")
    xhat = float(filt.w @ u)
    e = float(target) - xhat
    nrm = float(u @ u)
    if nrm >= DELTA:
        filt.w += (mu_eff * e / (nrm + DELTA)) * u
    return e, xhat


def _window_matrix(seq: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Gather seq[n + offset] into rows, zero outside the frame."""
    n = seq.size
    pad_lo = max(0, -int(offsets.min(initial=0)))
    pad_hi = max(0, int(offsets.max(initial=0)))
    padded = np.concatenate([np.zeros(pad_lo), seq, np.zeros(pad_hi)])
    idx = np.arange(n)[:, None] + offsets[None, :] + pad_lo
    return padded[idx]


def ff_offsets(lin: ChannelLinearization) -> np.ndarray:
    return np.arange(-lin.n2, lin.n1 + 1)


def variance_windows(v: np.ndarray, lin: ChannelLinearization, extra_past: int = 0) -> np.ndarray:
    """Per-sample prior-variance windows (the clustering feature vectors)."""
    return _window_matrix(np.asarray(v, dtype=np.float64), feedback_offsets(lin, extra_past))


def _assemble_scan_inputs(
    streams: FrameStreams, schedule: TrainingSchedule, lin: ChannelLinearization, extra_past: int
):
    total = schedule.l_t + schedule.l_d
    if streams.y.size != total:
        raise ValueError(
            f"streams carry {streams.y.size} samples but the schedule expects {total}"
        )
    offs = feedback_offsets(lin, extra_past)
    yw = _window_matrix(streams.y, ff_offsets(lin))
    xbw = _window_matrix(streams.xbar, offs)
    pos = np.arange(total)[:, None] + offs[None, :]
    tmask = ((pos >= 0) & (pos < schedule.l_t)).astype(np.float64)
    is_train = (np.arange(total) < schedule.l_t).astype(np.uint8)
    return yw, xbw, tmask, is_train


def _run_scan(bank: FilterBank, schedule: TrainingSchedule, streams: FrameStreams,
              lin: ChannelLinearization, probs: np.ndarray, fb_amp: np.ndarray,
              fb_noise: np.ndarray, rng: np.random.Generator | None,
              extra_past: int = 0, target_mode_override: str | None = None) -> BankRunResult:
    yw, xbw, tmask, is_train = _assemble_scan_inputs(streams, schedule, lin, extra_past)
    mode = target_mode_override or schedule.tilde_x_mode
    wc = bank.combiner if bank.combiner is not None else np.zeros(bank.n_filters)
    if rng is not None and np.any(fb_noise > 0.0):
        gnoise = rng.standard_normal((schedule.l_t, xbw.shape[1]))
        gnoise = np.vstack([gnoise, np.zeros((schedule.l_d, xbw.shape[1]))])
    else:
        gnoise = np.zeros_like(xbw)
    xhat_k, xhat, sel = bank_scan(
        np.ascontiguousarray(yw),
        np.ascontiguousarray(xbw),
        np.ascontiguousarray(tmask),
        is_train,
        np.ascontiguousarray(streams.truth),
        np.ascontiguousarray(streams.xbar),
        np.ascontiguousarray(probs),
        np.ascontiguousarray(fb_amp),
        np.ascontiguousarray(fb_noise),
        np.ascontiguousarray(gnoise),
        bank.taps,
        wc,
        bank.mu,
        bank.mu_c,
        DELTA,
        _TILDE_MODES[mode],
        _OUTPUT_MODES[bank.output_mode],
    )
    data = slice(schedule.l_t, schedule.l_t + schedule.l_d)
    train = slice(0, schedule.l_t)
    estimates = xhat[data]
    if mode == TILDE_TRAINING_TRUTH:
        targets = streams.truth[data].copy()
    elif mode == TILDE_HARD_DECISION:
        targets = 1.0 - 2.0 * hard_decide(estimates)
    else:
        targets = streams.xbar[data].copy()
    return BankRunResult(
        estimates=estimates,
        bank=bank,
        selected=sel[data],
        per_filter=xhat_k[data],
        targets=targets,
        train_estimates=xhat[train],
        train_per_filter=xhat_k[train],
    )


def make_direct_filter(lin: ChannelLinearization, mu: float, extra_past: int = 0) -> AdaptiveFilter:
    n_taps = lin.n_ff + lin.n_fb + extra_past
    return AdaptiveFilter(w=np.zeros(n_taps), mu=mu)


def run_direct_teq(
    schedule: TrainingSchedule,
    streams: FrameStreams,
    lin: ChannelLinearization,
    filt: AdaptiveFilter | None = None,
    mu: float = 0.03,
    extra_past: int = 0,
    target_mode_override: str | None = None,
) -> BankRunResult:
    """Plain direct NLMS pass over training then data period."""
    if filt is None:
        filt = make_direct_filter(lin, mu, extra_past)
    model = ClusterModel(
        centroids=np.zeros((1, lin.n_fb + extra_past)), priors=np.ones(1), mode=MODE_HARD
    )
    bank = FilterBank(
        taps=filt.w[None, :].copy(), cluster_model=model, mu=filt.mu, output_mode=OUTPUT_SWITCH
    )
    total = schedule.l_t + schedule.l_d
    probs = np.ones((total, 1))
    n_fb = lin.n_fb + extra_past
    return _run_scan(bank, schedule, streams, lin, probs, np.ones((1, n_fb)),
                     np.zeros((1, n_fb)), None, extra_past, target_mode_override)


def make_bank(
    lin: ChannelLinearization,
    model: ClusterModel,
    mu: float,
    output_mode: str = OUTPUT_SWITCH,
    mu_c: float = 0.1,
    extra_past: int = 0,
) -> FilterBank:
    k = model.n_clusters
    n_taps = lin.n_ff + lin.n_fb + extra_past
    combiner = np.full(k, 1.0 / k) if output_mode == OUTPUT_COMBINE else None
    return FilterBank(
        taps=np.zeros((k, n_taps)),
        cluster_model=model,
        mu=mu,
        output_mode=output_mode,
        combiner=combiner,
        mu_c=mu_c,
    )


def seed_bank_filters(bank: FilterBank, prev_taps: np.ndarray,
                      prev_centroids: np.ndarray | None) -> None:
    """Initialize each bank filter from the previous turbo iteration.

    On the first clustered iteration every filter copies the single
    direct filter; afterwards filter k copies the previous filter whose
    centroid is nearest to its own.
    """
    prev_taps = np.atleast_2d(np.asarray(prev_taps, dtype=np.float64))
    if prev_taps.shape[1] != bank.taps.shape[1]:
        raise ValueError("previous filter length does not match the bank")
    if prev_centroids is None:
        if prev_taps.shape[0] != 1:
            raise ValueError("seeding from a filter set requires its centroids")
        bank.taps[:] = prev_taps[0]
        return
    prev_centroids = np.atleast_2d(prev_centroids)
    if prev_centroids.shape[0] != prev_taps.shape[0]:
        raise ValueError("previous centroids and taps disagree in count")
    d = _sq_dists(bank.cluster_model.centroids, prev_centroids)
    bank.taps[:] = prev_taps[np.argmin(d, axis=1)]


def _fb_surrogate_from_model(model: ClusterModel, n_fb: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-filter surrogate-feedback coefficients for the training period.

    Consistent soft feedback of quality v has conditional mean (1 - v) x
    and conditional variance v (1 - v) given the symbol x, so training
    entries become (1 - v) x plus matched Gaussian spread.  This shares
    all second-order statistics with genuine decoder означає, hence the
    filter converges to the same solution it would reach on them.
    """
    cents = model.centroids
    if cents.shape[1] != n_fb:
        raise ValueError("centroid dimension does not match the feedback window")
    amp = np.clip(1.0 - cents, 0.0, 1.0)
    return amp, np.sqrt(amp * (1.0 - amp))


def run_hard_clustered_teq(
    bank: FilterBank,
    schedule: TrainingSchedule,
    streams: FrameStreams,
    lin: ChannelLinearization,
    turbo_iter_index: int,
    prev_taps: np.ndarray | None = None,
    prev_centroids: np.ndarray | None = None,
    rng: np.random.Generator | None = None,
    extra_past: int = 0,
    target_mode_override: str | None = None,
) -> BankRunResult:
    """Switched bank pass: train all filters in parallel, then per data
    sample let only the filter of the nearest variance centroid predict
    and update."""
    if bank.cluster_model.mode != MODE_HARD:
        raise ValueError("hard-clustered run requires a hard cluster model")
    if turbo_iter_index >= 2:
        if prev_taps is None:
            raise ValueError("iterations >= 2 need the previous iteration's filters")
        seed_bank_filters(bank, prev_taps, prev_centroids)
    vwin = variance_windows(streams.v, lin, extra_past)
    labels = np.argmin(_sq_dists(vwin, bank.cluster_model.centroids), axis=1)
    probs = np.zeros((streams.y.size, bank.n_filters))
    probs[np.arange(labels.size), labels] = 1.0
    probs[: schedule.l_t, :] = 1.0 / bank.n_filters
    amp, nse = _fb_surrogate_from_model(bank.cluster_model, lin.n_fb + extra_past)
    return _run_scan(bank, schedule, streams, lin, probs, amp, nse, rng,
                     extra_past, target_mode_override)


def run_soft_clustered_teq(
    bank: FilterBank,
    schedule: TrainingSchedule,
    streams: FrameStreams,
    lin: ChannelLinearization,
    assoc: Association,
    rng: np.random.Generator | None = None,
    extra_past: int = 0,
    target_mode_override: str | None = None,
) -> BankRunResult:
    """Soft bank pass: every filter updates each data sample with the
    fractional step mu * P(centroid | v[n]); the output combines or
    selects among the constituent estimates."""
    if bank.cluster_model.mode != MODE_SOFT:
        raise ValueError("soft-clustered run requires a soft cluster model")
    if assoc.probs.shape != (schedule.l_d, bank.n_filters):
        raise ValueError("association matrix must be (L_D, K) for the data period")
    probs = np.vstack(
        [np.full((schedule.l_t, bank.n_filters), 1.0 / bank.n_filters), assoc.probs]
    )
    amp, nse = _fb_surrogate_from_model(bank.cluster_model, lin.n_fb + extra_past)
    return _run_scan(bank, schedule, streams, lin, probs, amp, nse, rng,
                     extra_past, target_mode_override)


def combine_outputs(combiner: AdaptiveFilter, xhat_vec, target: float, mu_c: float) -> float:
    """Adaptive linear combination of constituent estimates (one step)."""
    xhat_vec = np.asarray(xhat_vec, dtype=np.float64).ravel()
    if combiner.w.size != xhat_vec.size:
        raise ValueError("combiner length must equal the constituent count")
    out = float(combiner.w @ xhat_vec)
    nrm = float(xhat_vec @ xhat_vec)
    if nrm >= DELTA:
        e = float(target) - out
        combiner.w += (mu_c * e / (nrm + DELTA)) * xhat_vec
    return out


def select_output(xhat_vec, target: float) -> tuple[float, int]:
    """Pick the constituent with the smallest instantaneous residual."""
    xhat_vec = np.asarray(xhat_vec, dtype=np.float64).ravel()
    if xhat_vec.size < 1:
        raise ValueError("need at least one constituent estimate")
    idx = int(np.argmin(np.abs(float(target) - xhat_vec)))
    return float(xhat_vec[idx]), idx
