"""Experiment orchestration: the iterative equalization-decoding loop,
BER sweeps with confidence intervals, transfer-characteristic curves and
the convergence-threshold search.

Per iteration the equalizer consumes the interleaved extrinsic LLRs of
the decoder as symbol priors and returns extrinsic LLRs of its own;
metrics are computed over the data period only.
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import adaptive, clustering, mmse
from .adaptive import (
    FrameStreams,
    TrainingSchedule,
    feedback_offsets,
    ff_offsets,
    make_bank,
    run_direct_teq,
    run_hard_clustered_teq,
    run_soft_clustered_teq,
    seed_bank_filters,
    variance_windows,
    _window_matrix,
)
from .channel import ChannelModel, build_linearization, ebn0_to_noise_var, transmit
from .config import (
    EQ_EXACT_MMSE,
    EQ_LMS,
    EQ_QLMS,
    EQ_SQLMS_COMBINE,
    EQ_SQLMS_SELECT,
    EQ_WIENER,
    ExperimentConfig,
)
from .infotheory import mutual_information, synth_apriori_llrs
from .modem import (
    DOMAIN_CODED_DEINTERLEAVED,
    DOMAIN_CODED_INTERLEAVED,
    LlrFrame,
    ROLE_A_PRIORI,
    bpsk_map,
    conv_encode,
    deinterleave,
    hard_decide,
    interleave,
    llr_to_stats,
    random_interleaver,
    siso_decode,
)

_ADAPTIVE_KINDS = (EQ_LMS, EQ_QLMS, EQ_SQLMS_COMBINE, EQ_SQLMS_SELECT)


@dataclass
class IterationRecord:
    ber: float
    errors: int
    bits: int
    mse: float
    i_a: float
    i_e: float
    n_clusters: int
    selected_hist: np.ndarray


@dataclass
class TurboTrace:
    ebn0_db: float
    records: list

    @property
    def final_ber(self) -> float:
        return self.records[-1].ber


def trial_rng(seed: int, *stream: int) -> np.random.Generator:
    """Independent, reproducible generator for one (point, trial) task."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, stream)]))


@dataclass
class _Frame:
    info_bits: np.ndarray
    perm: np.ndarray
    data_syms: np.ndarray
    train_syms: np.ndarray
    truth: np.ndarray
    y: np.ndarray


def _make_frame(cfg: ExperimentConfig, noise_var: float, rng: np.random.Generator) -> _Frame:
    code = cfg.code_config()
    n_info = code.n_info(cfg.l_d)
    info_bits = rng.integers(0, 2, n_info)
    coded = conv_encode(info_bits, code)
    perm = random_interleaver(cfg.l_d, rng)
    data_syms = bpsk_map(interleave(coded, perm))
    train_syms = bpsk_map(rng.integers(0, 2, cfg.l_t))
    truth = np.concatenate([train_syms, data_syms])
    ch = ChannelModel(np.asarray(cfg.channel_taps), noise_var)
    y = transmit(truth, ch, rng)
    return _Frame(info_bits, perm, data_syms, train_syms, truth, y)


def _adaptive_extrinsic(res, effective_mode: str):
    """Extrinsic LLRs for an adaptive-bank pass.

    With genie targets the block gain comes straight from the target
    products.  Decoder-mean targets are consistent priors with
    E[x * xbar] = E[xbar^2], so the gain is the target-power-normalized
    correlation (which reduces to the plain product for +/-1 targets).
    Hard-decision targets inflate plain products, so there the gain
    magnitude comes from the blind BPSK moment fit with only the sign
    taken from the decisions.
    """
    if effective_mode == adaptive.TILDE_TRAINING_TRUTH:
        return mmse.equalizer_extrinsic_llr(res.estimates, targets=res.targets)
    if effective_mode == adaptive.TILDE_DECODER_MEAN:
        power = float(np.mean(res.targets**2))
        if power > 1e-6:
            gain = float(np.mean(res.estimates * res.targets)) / power
            m2 = float(np.mean(res.estimates**2))
            # floor keeps the scale finite when gain^2 eats the whole power
            noise = max(m2 - gain**2, 0.05 * m2)
            return mmse.extrinsic_llr_from_moments(res.estimates, gain, noise)
    gain, noise = mmse.blind_bpsk_moments(res.estimates)
    if float(np.mean(res.estimates * res.targets)) < 0.0:
        gain = -gain
    return mmse.extrinsic_llr_from_moments(res.estimates, gain, noise)


def _closed_form_pass(cfg, lin, frame, xbar_full, v_full, noise_var):
    """Exact per-symbol MMSE or stationary Wiener estimates plus bias gains."""
    data = slice(cfg.l_t, cfg.l_t + cfg.l_d)
    offs = feedback_offsets(lin)
    yw = _window_matrix(frame.y, ff_offsets(lin))[data]
    xbw = _window_matrix(xbar_full, offs)[data]
    if cfg.equalizer == EQ_EXACT_MMSE:
        vw = _window_matrix(v_full, offs)[data]
        F = mmse.exact_mmse_ff_batch(lin, vw, noise_var)
        gains = F @ lin.s
        z = yw - xbw @ lin.H_minus0.T
        estimates = np.einsum("ni,ni->n", F, z)
    else:
        sigma_xbar_sq = float(np.mean(xbar_full[data] ** 2))
        taps = mmse.wiener_filters(lin, sigma_xbar_sq, noise_var)
        estimates = yw @ taps.f - xbw @ taps.b
        gains = float(taps.f @ lin.s)
    return estimates, gains


def run_turbo_trial(
    cfg: ExperimentConfig, rng: np.random.Generator, ebn0_db: float | None = None
) -> TurboTrace:
    """One frame through the full iterative receiver at one Eb/N0 point."""
    code = cfg.code_config()
    lin = build_linearization(np.asarray(cfg.channel_taps), cfg.n1, cfg.n2)
    ebn0 = cfg.ebn0_grid[0] if ebn0_db is None else float(ebn0_db)
    noise_var = ebn0_to_noise_var(ebn0, code.rate, 1)
    frame = _make_frame(cfg, noise_var, rng)
    schedule = TrainingSchedule(cfg.l_t, cfg.l_d, cfg.tilde_x_mode)
    extra = cfg.extra_feedback_taps

    xbar_data = np.zeros(cfg.l_d)
    v_data = np.ones(cfg.l_d)
    la_eq = np.zeros(cfg.l_d)  # priors entering the equalizer this iteration
    prev_taps = None
    prev_centroids = None
    records = []

    for it in range(1, cfg.turbo_iterations + 1):
        xbar_full = np.concatenate([frame.train_syms, xbar_data])
        v_full = np.concatenate([np.zeros(cfg.l_t), v_data])
        i_a = mutual_information(la_eq, frame.data_syms) if it > 1 else 0.0

        n_clusters = 1
        sel_hist = np.zeros(1, dtype=np.int64)
        if cfg.equalizer in (EQ_EXACT_MMSE, EQ_WIENER):
            estimates, gains = _closed_form_pass(cfg, lin, frame, xbar_full, v_full, noise_var)
            le_eq = mmse.equalizer_extrinsic_llr(estimates, gains=gains)
        else:
            # With no decoder output yet, decision-directed adaptation
            # falls back to hard decisions on the first pass.
            override = None
            if it == 1 and cfg.tilde_x_mode == adaptive.TILDE_DECODER_MEAN:
                override = adaptive.TILDE_HARD_DECISION

            if it == 1:
                # No priors: zero feedback everywhere, so the training
                # period matches the data period the filter will see.
                streams = FrameStreams(
                    y=frame.y,
                    truth=frame.truth,
                    xbar=np.zeros(frame.y.size),
                    v=v_full,
                )
                res = run_direct_teq(
                    schedule, streams, lin, mu=cfg.mu,
                    extra_past=extra, target_mode_override=override,
                )
                prev_taps = res.bank.taps.copy()
                prev_centroids = None
            else:
                streams = FrameStreams(y=frame.y, truth=frame.truth, xbar=xbar_full, v=v_full)
                vwin = variance_windows(v_full, lin, extra)[cfg.l_t :]
                if cfg.equalizer in (EQ_LMS, EQ_QLMS):
                    # The plain NLMS TEQ is the K = 1 degenerate bank:
                    # one filter, trained with mean-quality feedback.
                    k_target = (
                        1 if cfg.equalizer == EQ_LMS
                        else max(1, min(cfg.k_max, cfg.l_d // cfg.n_min))
                    )
                    model, _ = clustering.lbg_cluster(vwin, k_target, cfg.n_min)
                    bank = make_bank(lin, model, cfg.mu, adaptive.OUTPUT_SWITCH,
                                     cfg.mu_c, extra)
                    res = run_hard_clustered_teq(
                        bank, schedule, streams, lin, it,
                        prev_taps=prev_taps, prev_centroids=prev_centroids,
                        extra_past=extra, target_mode_override=override,
                    )
                else:
                    model, assoc = clustering.da_cluster(vwin, cfg.k_max)
                    out_mode = (
                        adaptive.OUTPUT_COMBINE
                        if cfg.equalizer == EQ_SQLMS_COMBINE
                        else adaptive.OUTPUT_SELECT
                    )
                    bank = make_bank(lin, model, cfg.mu, out_mode, cfg.mu_c, extra)
                    seed_bank_filters(bank, prev_taps, prev_centroids)
                    res = run_soft_clustered_teq(
                        bank, schedule, streams, lin, assoc,
                        extra_past=extra, target_mode_override=override,
                    )
                prev_taps = res.bank.taps.copy()
                prev_centroids = res.bank.cluster_model.centroids.copy()
                n_clusters = res.bank.n_filters
            estimates = res.estimates
            sel = res.selected
            sel_hist = np.bincount(sel[sel >= 0], minlength=n_clusters)
            le_eq = _adaptive_extrinsic(res, override or cfg.tilde_x_mode)

        la_dec = LlrFrame(
            deinterleave(le_eq.values, frame.perm),
            role=ROLE_A_PRIORI,
            domain=DOMAIN_CODED_DEINTERLEAVED,
        )
        le_dec, info_llr = siso_decode(la_dec, code, max_log=cfg.max_log)
        bits_hat = hard_decide(info_llr.values)
        errors = int(np.sum(bits_hat != frame.info_bits))

        la_eq = interleave(le_dec.values, frame.perm)
        stats = llr_to_stats(
            LlrFrame(la_eq, role=ROLE_A_PRIORI, domain=DOMAIN_CODED_INTERLEAVED)
        )
        xbar_data, v_data = stats.mean, stats.variance

        records.append(
            IterationRecord(
                ber=errors / frame.info_bits.size,
                errors=errors,
                bits=frame.info_bits.size,
                mse=float(np.mean((estimates - frame.data_syms) ** 2)),
                i_a=i_a,
                i_e=mutual_information(le_eq.values, frame.data_syms),
                n_clusters=n_clusters,
                selected_hist=sel_hist,
            )
        )
    return TurboTrace(ebn0_db=ebn0, records=records)


def wilson_interval(errors: int, trials: int, z: float = 1.96) -> tuple[float, float]:
    """Wilson score interval for a binomial error count."""
    if trials <= 0:
        raise ValueError("trials must be positive")
    p = errors / trials
    denom = 1.0 + z**2 / trials
    center = (p + z**2 / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z**2 / (4 * trials**2)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def _trial_task(args):
    cfg, ebn0, point_idx, trial_idx = args
    trace = run_turbo_trial(cfg, trial_rng(cfg.seed, point_idx, trial_idx), ebn0)
    return [
        (r.errors, r.bits, r.mse, r.i_a, r.i_e, r.n_clusters) for r in trace.records
    ]


def _run_point_trials(cfg: ExperimentConfig, ebn0: float, point_idx: int, n_trials: int):
    tasks = [(cfg, ebn0, point_idx, t) for t in range(n_trials)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_trial_task, tasks))
    else:
        results = [_trial_task(t) for t in tasks]
    return results


def run_ber_sweep(cfg: ExperimentConfig) -> list[dict]:
    """Average turbo trials per Eb/N0 point; one output row per iteration."""
    if cfg.trials < 1:
        raise ValueError("trials must be >= 1")
    rows = []
    for pi, ebn0 in enumerate(cfg.ebn0_grid):
        results = _run_point_trials(cfg, float(ebn0), pi, cfg.trials)
        for it in range(cfg.turbo_iterations):
            errors = sum(res[it][0] for res in results)
            bits = sum(res[it][1] for res in results)
            ber = errors / bits
            lo, hi = wilson_interval(errors, bits)
            rows.append(
                {
                    "ebn0_db": float(ebn0),
                    "iteration": it + 1,
                    "trials": cfg.trials,
                    "bits": bits,
                    "errors": errors,
                    "ber": ber,
                    "ci_lo": lo,
                    "ci_hi": hi,
                    "mean_mse": sum(res[it][2] for res in results) / len(results),
                    "mean_i_a": sum(res[it][3] for res in results) / len(results),
                    "mean_i_e": sum(res[it][4] for res in results) / len(results),
                    "mean_clusters": sum(res[it][5] for res in results) / len(results),
                }
            )
    return rows


def _equalizer_exit_point(cfg, lin, noise_var, ia: float, rng) -> float:
    """Extrinsic information of one equalization pass at prior quality ia."""
    frame = _make_frame(cfg, noise_var, rng)
    schedule = TrainingSchedule(cfg.l_t, cfg.l_d, cfg.tilde_x_mode)
    extra = cfg.extra_feedback_taps
    la = synth_apriori_llrs(frame.data_syms, ia, rng)
    stats = llr_to_stats(LlrFrame(
        np.clip(la, -30.0, 30.0), role=ROLE_A_PRIORI, domain=DOMAIN_CODED_INTERLEAVED
    ))
    xbar_full = np.concatenate([frame.train_syms, stats.mean])
    v_full = np.concatenate([np.zeros(cfg.l_t), stats.variance])

    if cfg.equalizer in (EQ_EXACT_MMSE, EQ_WIENER):
        estimates, gains = _closed_form_pass(cfg, lin, frame, xbar_full, v_full, noise_var)
        le = mmse.equalizer_extrinsic_llr(estimates, gains=gains)
        return mutual_information(le.values, frame.data_syms)

    override = (
        adaptive.TILDE_HARD_DECISION
        if cfg.tilde_x_mode == adaptive.TILDE_DECODER_MEAN
        else None
    )
    warm_streams = FrameStreams(
        y=frame.y,
        truth=frame.truth,
        xbar=np.zeros(frame.y.size),
        v=np.concatenate([np.zeros(cfg.l_t), np.ones(cfg.l_d)]),
    )
    warm = run_direct_teq(schedule, warm_streams, lin, mu=cfg.mu, extra_past=extra,
                          target_mode_override=override)
    streams = FrameStreams(y=frame.y, truth=frame.truth, xbar=xbar_full, v=v_full)
    vwin = variance_windows(v_full, lin, extra)[cfg.l_t :]
    if cfg.equalizer in (EQ_LMS, EQ_QLMS):
        k_target = (
            1 if cfg.equalizer == EQ_LMS
            else max(1, min(cfg.k_max, cfg.l_d // cfg.n_min))
        )
        model, _ = clustering.lbg_cluster(vwin, k_target, cfg.n_min)
        bank = make_bank(lin, model, cfg.mu, adaptive.OUTPUT_SWITCH, cfg.mu_c, extra)
        res = run_hard_clustered_teq(
            bank, schedule, streams, lin, 2, prev_taps=warm.bank.taps.copy(),
            prev_centroids=None, extra_past=extra,
        )
    else:
        model, assoc = clustering.da_cluster(vwin, cfg.k_max)
        out_mode = (
            adaptive.OUTPUT_COMBINE
            if cfg.equalizer == EQ_SQLMS_COMBINE
            else adaptive.OUTPUT_SELECT
        )
        bank = make_bank(lin, model, cfg.mu, out_mode, cfg.mu_c, extra)
        seed_bank_filters(bank, warm.bank.taps.copy(), None)
        res = run_soft_clustered_teq(bank, schedule, streams, lin, assoc,
                                     extra_past=extra)
    le = _adaptive_extrinsic(res, cfg.tilde_x_mode)
    return mutual_information(le.values, frame.data_syms)


def _decoder_exit_point(cfg, ia: float, rng) -> float:
    code = cfg.code_config()
    n_info = code.n_info(cfg.l_d)
    info_bits = rng.integers(0, 2, n_info)
    coded_syms = bpsk_map(conv_encode(info_bits, code))
    la = synth_apriori_llrs(coded_syms, ia, rng)
    frame = LlrFrame(
        np.clip(la, -30.0, 30.0), role=ROLE_A_PRIORI, domain=DOMAIN_CODED_DEINTERLEAVED
    )
    le, _ = siso_decode(frame, code, max_log=cfg.max_log)
    return mutual_information(le.values, coded_syms)


def run_exit_chart(cfg: ExperimentConfig, ia_grid=None) -> list[dict]:
    """Equalizer and decoder information-transfer curves over an I_A grid."""
    ia_grid = tuple(cfg.ia_grid if ia_grid is None else ia_grid)
    if any(not 0.0 <= ia < 1.0 for ia in ia_grid):
        raise ValueError("ia_grid values must lie in [0, 1); I_A = 1 has no finite prior")
    lin = build_linearization(np.asarray(cfg.channel_taps), cfg.n1, cfg.n2)
    noise_var = ebn0_to_noise_var(cfg.ebn0_grid[0], cfg.code_config().rate, 1)
    rows = []
    for idx, ia in enumerate(ia_grid):
        ie_eq = _equalizer_exit_point(
            cfg, lin, noise_var, float(ia), trial_rng(cfg.seed, 101, idx)
        )
        ie_dec = _decoder_exit_point(cfg, float(ia), trial_rng(cfg.seed, 202, idx))
        rows.append({"ia": float(ia), "ie_equalizer": ie_eq, "ie_decoder": ie_dec})
    return rows


def threshold_trials(cfg: ExperimentConfig, ber_target: float) -> int:
    """Frames per probe point: enough for ~100 expected errors at the
    target rate, capped by the configured frame budget."""
    bits_per_frame = cfg.code_config().n_info(cfg.l_d)
    needed = math.ceil(100.0 / (ber_target * bits_per_frame))
    return max(1, min(cfg.frame_budget, max(cfg.trials, needed)))


def find_snr_threshold(
    cfg: ExperimentConfig, ber_target: float | None = None, tol_db: float | None = None
) -> float:
    """Smallest Eb/N0 in the bracket whose final-iteration BER beats the target.

    Bisection over the configured bracket; each probe averages
    :func:`threshold_trials` frames at the full turbo-iteration count.
    """
    ber_target = cfg.ber_target if ber_target is None else ber_target
    tol_db = cfg.tol_db if tol_db is None else tol_db
    if not 0.0 < ber_target < 0.5:
        raise ValueError("ber_target must lie in (0, 0.5)")
    if tol_db <= 0.0:
        raise ValueError("tol_db must be positive")
    lo, hi = (float(b) for b in cfg.bracket_db)
    n_trials = threshold_trials(cfg, ber_target)

    probe_idx = [0]

    def converged(ebn0: float) -> bool:
        point = 1000 + probe_idx[0]
        probe_idx[0] += 1
        results = _run_point_trials(cfg, ebn0, point, n_trials)
        errors = sum(res[-1][0] for res in results)
        bits = sum(res[-1][1] for res in results)
        return errors / bits < ber_target

    if not converged(hi):
        raise RuntimeError(
            f"no convergence bracket: BER target {ber_target} unmet at "
            f"{hi} dB over [{lo}, {hi}] dB"
        )
    if converged(lo):
        return lo
    while hi - lo > tol_db:
        mid = 0.5 * (lo + hi)
        if converged(mid):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def cluster_dump(cfg: ExperimentConfig) -> list[dict]:
    """Centroids and association mass from the first clustered iteration."""
    if cfg.equalizer not in (EQ_QLMS, EQ_SQLMS_COMBINE, EQ_SQLMS_SELECT):
        raise ValueError("cluster-dump needs a clustered equalizer kind")
    lin = build_linearization(np.asarray(cfg.channel_taps), cfg.n1, cfg.n2)
    noise_var = ebn0_to_noise_var(cfg.ebn0_grid[0], cfg.code_config().rate, 1)
    frame = _make_frame(cfg, noise_var, trial_rng(cfg.seed, 303))
    vwin = _collect_iteration2_stats(cfg, frame, lin, noise_var)
    if cfg.equalizer == EQ_QLMS:
        k_target = max(1, min(cfg.k_max, cfg.l_d // cfg.n_min))
        model, assoc = clustering.lbg_cluster(vwin, k_target, cfg.n_min)
    else:
        model, assoc = clustering.da_cluster(vwin, cfg.k_max)
    mass = assoc.probs.sum(axis=0)
    rows = []
    for k in range(model.n_clusters):
        row = {
            "cluster": k,
            "prior": float(model.priors[k]),
            "association_mass": float(mass[k]),
        }
        for j, val in enumerate(model.centroids[k]):
            row[f"v{j:02d}"] = float(val)
        rows.append(row)
    return rows


def _collect_iteration2_stats(cfg, frame, lin, noise_var):
    """Variance windows that iteration 2 would cluster, from a direct pass."""
    schedule = TrainingSchedule(cfg.l_t, cfg.l_d, cfg.tilde_x_mode)
    override = (
        adaptive.TILDE_HARD_DECISION
        if cfg.tilde_x_mode == adaptive.TILDE_DECODER_MEAN
        else None
    )
    streams = FrameStreams(
        y=frame.y,
        truth=frame.truth,
        xbar=np.zeros(frame.y.size),
        v=np.concatenate([np.zeros(cfg.l_t), np.ones(cfg.l_d)]),
    )
    res = run_direct_teq(schedule, streams, lin, mu=cfg.mu,
                         extra_past=cfg.extra_feedback_taps,
                         target_mode_override=override)
    le = _adaptive_extrinsic(res, override or cfg.tilde_x_mode)
    code = cfg.code_config()
    la_dec = LlrFrame(
        deinterleave(le.values, frame.perm),
        role=ROLE_A_PRIORI,
        domain=DOMAIN_CODED_DEINTERLEAVED,
    )
    le_dec, _ = siso_decode(la_dec, code, max_log=cfg.max_log)
    stats = llr_to_stats(
        LlrFrame(
            interleave(le_dec.values, frame.perm),
            role=ROLE_A_PRIORI,
            domain=DOMAIN_CODED_INTERLEAVED,
        )
    )
    v_full = np.concatenate([np.zeros(cfg.l_t), stats.variance])
    return variance_windows(v_full, lin, cfg.extra_feedback_taps)[cfg.l_t :]
