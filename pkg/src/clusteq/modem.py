"""Bit-interleaved coded modulation chain.

Rate-1/2 convolutional encoder, random interleaving, BPSK mapping, an
exact log-MAP SISO decoder over the code trellis, and the conversion
between log-likelihood ratios and per-symbol soft statistics.

Sign conventions, fixed globally:

* bit 0 maps to symbol +1, bit 1 to -1;
* every LLR is ln P(bit = 0) / P(bit = 1), so positive LLRs favour +1.
"""

from dataclasses import dataclass

import numpy as np

from ._kernels import bcjr_scan

# Clip applied to LLRs before they enter any exp/tanh; large enough that
# the information loss is negligible (tanh(15) differs from 1 by ~1e-13).
LLR_CLIP = 30.0

ROLE_A_PRIORI = "a_priori"
ROLE_EXTRINSIC = "extrinsic"
ROLE_A_POSTERIORI = "a_posteriori"
_ROLES = (ROLE_A_PRIORI, ROLE_EXTRINSIC, ROLE_A_POSTERIORI)

DOMAIN_CODED_INTERLEAVED = "coded_interleaved"
DOMAIN_CODED_DEINTERLEAVED = "coded_deinterleaved"
DOMAIN_INFO = "info"
_DOMAINS = (DOMAIN_CODED_INTERLEAVED, DOMAIN_CODED_DEINTERLEAVED, DOMAIN_INFO)


def _parity(x: int) -> int:
    p = 0
    while x:
        p ^= x & 1
        x >>= 1
    return p


@dataclass(frozen=True)
class CodeConfig:
    """Binary convolutional code of rate 1/2.

    Attributes
    ----------
    constraint_length : int
        Number of taps per generator (memory + 1).
    generators : tuple of int
        Two generator polynomials, tap on the current bit at the MSB.
        The defaults are the octal (7, 5) pair.
    termination : str
        ``"terminated"`` appends ``memory`` flush bits per block so the
        trellis ends in state 0; ``"unterminated"`` leaves the final
        state free.
    """

    constraint_length: int = 3
    generators: tuple[int, int] = (0o7, 0o5)
    termination: str = "terminated"

    def __post_init__(self):
        if self.constraint_length < 2:
            raise ValueError("constraint_length must be >= 2")
        g0, g1 = self.generators
        if g0 == 0 or g1 == 0 or g0 == g1:
            raise ValueError("generators must be nonzero and distinct")
        if max(g0, g1) >= 1 << self.constraint_length:
            raise ValueError("generator taps exceed the constraint length")
        if self.termination not in ("terminated", "unterminated"):
            raise ValueError(f"unknown termination {self.termination!r}")

    @property
    def rate(self) -> float:
        return 0.5

    @property
    def memory(self) -> int:
        return self.constraint_length - 1

    @property
    def n_states(self) -> int:
        return 1 << self.memory

    @property
    def terminated(self) -> bool:
        return self.termination == "terminated"

    def n_coded(self, n_info: int) -> int:
        """Coded-bit count for a block of ``n_info`` information bits."""
        tail = self.memory if self.terminated else 0
        return 2 * (n_info + tail)

    def n_info(self, n_coded: int) -> int:
        """Inverse of :meth:`n_coded`; raises if the length is inconsistent."""
        if n_coded % 2:
            raise ValueError("coded length must be even for a rate-1/2 code")
        tail = self.memory if self.terminated else 0
        n = n_coded // 2 - tail
        if n < 1:
            raise ValueError(f"coded length {n_coded} too short for this code")
        return n


class Trellis:
    """Transition tables of the code trellis.

    The state at time n holds the previous ``memory`` input bits, the
    most recent in the MSB.  ``next_state[b, s]`` and ``out_bits[b, s, j]``
    give the successor state and the two output bits for input ``b``
    from state ``s``.  ``edge_*`` arrays enumerate all 2 * n_states
    branches for the forward/backward recursions.
    """

    def __init__(self, cfg: CodeConfig):
        m = cfg.memory
        n_states = cfg.n_states
        self.cfg = cfg
        self.next_state = np.zeros((2, n_states), dtype=np.int64)
        self.out_bits = np.zeros((2, n_states, 2), dtype=np.int64)
        for s in range(n_states):
            for b in (0, 1):
                reg = (b << m) | s
                self.next_state[b, s] = (b << (m - 1)) | (s >> 1) if m > 0 else 0
                for j, g in enumerate(cfg.generators):
                    self.out_bits[b, s, j] = _parity(reg & g)

        n_edges = 2 * n_states
        self.edge_from = np.zeros(n_edges, dtype=np.int64)
        self.edge_to = np.zeros(n_edges, dtype=np.int64)
        self.edge_bit = np.zeros(n_edges, dtype=np.int64)
        self.edge_out = np.zeros((n_edges, 2), dtype=np.int64)
        e = 0
        for s in range(n_states):
            for b in (0, 1):
                self.edge_from[e] = s
                self.edge_to[e] = self.next_state[b, s]
                self.edge_bit[e] = b
                self.edge_out[e] = self.out_bits[b, s]
                e += 1


_TRELLIS_CACHE: dict[CodeConfig, Trellis] = {}


def _trellis(cfg: CodeConfig) -> Trellis:
    if cfg not in _TRELLIS_CACHE:
        _TRELLIS_CACHE[cfg] = Trellis(cfg)
    return _TRELLIS_CACHE[cfg]


@dataclass
class LlrFrame:
    """A block of natural-log LLRs with its role and index domain."""

    values: np.ndarray
    role: str
    domain: str

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.role not in _ROLES:
            raise ValueError(f"unknown LLR role {self.role!r}")
        if self.domain not in _DOMAINS:
            raise ValueError(f"unknown LLR domain {self.domain!r}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("LLR values must be finite (clip before building)")


@dataclass
class SoftSymbolStats:
    """Per-symbol BPSK mean and variance derived from a-priori LLRs."""

    mean: np.ndarray
    variance: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.variance = np.asarray(self.variance, dtype=np.float64)
        if self.mean.shape != self.variance.shape:
            raise ValueError("mean and variance lengths differ")
        if np.any(np.abs(self.mean) > 1.0 + 1e-12):
            raise ValueError("BPSK symbol means must lie in [-1, 1]")
        if not np.allclose(self.variance, 1.0 - self.mean**2, atol=1e-9):
            raise ValueError("variance must equal 1 - mean^2 for unit-power BPSK")


def conv_encode(info_bits, cfg: CodeConfig = CodeConfig()) -> np.ndarray:
    """Encode a bit block, appending flush bits when the code is terminated."""
    info_bits = np.asarray(info_bits, dtype=np.int64).ravel()
    if info_bits.size == 0:
        raise ValueError("info_bits must be nonempty")
    tr = _trellis(cfg)
    tail = cfg.memory if cfg.terminated else 0
    out = np.zeros(2 * (info_bits.size + tail), dtype=np.int64)
    state = 0
    for k in range(info_bits.size + tail):
        b = int(info_bits[k]) if k < info_bits.size else 0
        out[2 * k : 2 * k + 2] = tr.out_bits[b, state]
        state = tr.next_state[b, state]
    return out


def interleave(seq, permutation) -> np.ndarray:
    """Reorder ``seq`` so that output[i] = seq[permutation[i]]."""
    seq = np.asarray(seq)
    permutation = np.asarray(permutation, dtype=np.int64)
    _check_permutation(seq, permutation)
    return seq[permutation]


def deinterleave(seq, permutation) -> np.ndarray:
    """Invert :func:`interleave` for the same permutation."""
    seq = np.asarray(seq)
    permutation = np.asarray(permutation, dtype=np.int64)
    _check_permutation(seq, permutation)
    out = np.empty_like(seq)
    out[permutation] = seq
    return out


def _check_permutation(seq, permutation):
    if permutation.shape != (len(seq),):
        raise ValueError(
            f"permutation length {permutation.size} does not match sequence length {len(seq)}"
        )
    counts = np.bincount(permutation, minlength=len(seq))
    if permutation.size and (counts.max(initial=0) > 1 or counts.min(initial=1) < 1):
        raise ValueError("permutation is not a bijection on the sequence indices")


def random_interleaver(n: int, rng: np.random.Generator) -> np.ndarray:
    return rng.permutation(n)


def bpsk_map(bits) -> np.ndarray:
    """Map bits to unit-power BPSK symbols (0 -> +1, 1 -> -1)."""
    bits = np.asarray(bits, dtype=np.int64)
    return (1.0 - 2.0 * bits).astype(np.float64)


def hard_decide(values) -> np.ndarray:
    """Sign-threshold LLRs or symbol estimates into bits; ties go to bit 0."""
    values = np.asarray(values, dtype=np.float64)
    return (values < 0.0).astype(np.int64)


def clip_llrs(values) -> np.ndarray:
    return np.clip(np.asarray(values, dtype=np.float64), -LLR_CLIP, LLR_CLIP)


def llr_to_stats(frame: LlrFrame) -> SoftSymbolStats:
    """Convert a-priori LLRs on interleaved coded bits to symbol statistics.

    mean[n] = tanh(L[n] / 2) and variance[n] = 1 - mean[n]^2, the BPSK
    posterior mean and conditional variance under unit symbol power.
    """
    if frame.domain != DOMAIN_CODED_INTERLEAVED:
        raise ValueError("symbol statistics are defined on the interleaved coded domain")
    mean = np.tanh(clip_llrs(frame.values) / 2.0)
    return SoftSymbolStats(mean=mean, variance=1.0 - mean**2)


def siso_decode(
    la: LlrFrame, cfg: CodeConfig = CodeConfig(), max_log: bool = False
) -> tuple[LlrFrame, LlrFrame]:
    """Exact log-MAP (BCJR) decode from coded-bit a-priori LLRs.

    Parameters
    ----------
    la : LlrFrame
        A-priori LLRs for every coded bit (deinterleaved order,
        including any termination tail).
    cfg : CodeConfig
        Code whose trellis generated the bits.
    max_log : bool
        Drop the Jacobian-logarithm correction term.  Exact log-MAP is
        the default and the oracle target.

    Returns
    -------
    (extrinsic, info_llr)
        Extrinsic LLRs on the coded bits (a-posteriori minus a-priori,
        elementwise) and a-posteriori LLRs on the information bits.
    """
    if la.domain != DOMAIN_CODED_DEINTERLEAVED:
        raise ValueError("decoder expects LLRs in the deinterleaved coded domain")
    app_coded, app_info = siso_decode_raw(la.values, cfg, max_log=max_log)
    le = app_coded - clip_llrs(la.values)
    return (
        LlrFrame(le, role=ROLE_EXTRINSIC, domain=DOMAIN_CODED_DEINTERLEAVED),
        LlrFrame(app_info, role=ROLE_A_POSTERIORI, domain=DOMAIN_INFO),
    )


def siso_decode_raw(
    la_values, cfg: CodeConfig = CodeConfig(), max_log: bool = False
) -> tuple[np.ndarray, np.ndarray]:
    """Array-level BCJR: a-posteriori LLRs on (coded bits, info bits)."""
    la = clip_llrs(la_values)
    if la.size % 2:
        raise ValueError("coded LLR length must be even for a rate-1/2 code")
    n_steps = la.size // 2
    n_info = cfg.n_info(la.size)
    tr = _trellis(cfg)

    # Branch metrics: log P(branch outputs) up to a per-step constant.
    # For terminated blocks the tail steps only admit input bit 0.
    sgn = 1.0 - 2.0 * tr.edge_out  # (E, 2); +1 for bit 0, -1 for bit 1
    la_pairs = la.reshape(n_steps, 2)
    gam = 0.5 * (la_pairs[:, None, 0] * sgn[None, :, 0] + la_pairs[:, None, 1] * sgn[None, :, 1])
    if cfg.terminated and n_steps > n_info:
        gam[n_info:, tr.edge_bit == 1] = -np.inf

    app_c0, app_c1, app_info = bcjr_scan(
        np.ascontiguousarray(gam),
        tr.edge_from,
        tr.edge_to,
        tr.edge_bit,
        np.ascontiguousarray(tr.edge_out[:, 0]),
        np.ascontiguousarray(tr.edge_out[:, 1]),
        cfg.n_states,
        cfg.terminated,
        max_log,
    )
    app_coded = np.empty(la.size)
    app_coded[0::2] = app_c0
    app_coded[1::2] = app_c1
    return app_coded, app_info[:n_info]
