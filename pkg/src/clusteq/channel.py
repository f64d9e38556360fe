"""ISI channel model and its linearized (matrix) view.

The received signal is y[n] = sum_l h_l x[n-l] + w[n] with real taps,
real white Gaussian noise and zero padding outside the frame.  The
linearization packages the convolution matrix over one equalizer
observation window together with the center-symbol signature column.
"""

from dataclasses import dataclass, field

import numpy as np


@dataclass
class ChannelModel:
    taps: np.ndarray
    noise_variance: float = 0.0

    def __post_init__(self):
        self.taps = np.asarray(self.taps, dtype=np.float64).ravel()
        if self.taps.size < 1 or not np.any(self.taps != 0.0):
            raise ValueError("channel needs at least one nonzero tap")
        if self.noise_variance < 0.0:
            raise ValueError("noise variance must be >= 0")

    @property
    def memory(self) -> int:
        return self.taps.size - 1


@dataclass
class ChannelLinearization:
    """Convolution matrix H over an observation window of N = N1+N2+1 samples.

    Row i of H applied to the symbol window
    [x[n-N2-L+1], ..., x[n+N1]] yields the noiseless y[n-N2+i].  The
    signature s is the column of H that multiplies the center symbol
    x[n]; H_minus0 is H with that column removed.
    """

    H: np.ndarray
    H_minus0: np.ndarray
    s: np.ndarray
    n1: int
    n2: int
    taps: np.ndarray = field(repr=False, default=None)

    @property
    def n_ff(self) -> int:
        """Observation window length N (feedforward filter length)."""
        return self.H.shape[0]

    @property
    def n_fb(self) -> int:
        """Window size excluding the center symbol, N + L - 2."""
        return self.H.shape[1] - 1

    @property
    def center_col(self) -> int:
        """0-based index of the center-symbol column of H."""
        return self.n2 + self.taps.size - 1


def build_linearization(taps, n1: int, n2: int) -> ChannelLinearization:
    """Build H, H_minus0 and s for taps h and window reach (N1, N2)."""
    taps = np.asarray(taps, dtype=np.float64).ravel()
    if taps.size == 0:
        raise ValueError("channel taps must be nonempty")
    if n1 < 0 or n2 < 0:
        raise ValueError("window reaches N1, N2 must be >= 0")
    n = n1 + n2 + 1
    ell = taps.size
    H = np.zeros((n, n + ell - 1))
    rev = taps[::-1]
    for i in range(n):
        H[i, i : i + ell] = rev
    center = n2 + ell - 1
    s = H[:, center].copy()
    H_minus0 = np.delete(H, center, axis=1)
    return ChannelLinearization(H=H, H_minus0=H_minus0, s=s, n1=n1, n2=n2, taps=taps)


def transmit(x, ch: ChannelModel, rng: np.random.Generator) -> np.ndarray:
    """Convolve symbols with the channel and add white Gaussian noise.

    The output has the same length as ``x``; symbols before the frame
    are taken as zero, so the convolution tail beyond the frame is
    dropped.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.size == 0:
        raise ValueError("symbol sequence must be nonempty")
    y = np.convolve(x, ch.taps)[: x.size]
    if ch.noise_variance > 0.0:
        y = y + rng.normal(0.0, np.sqrt(ch.noise_variance), size=x.size)
    return y


def ebn0_to_noise_var(ebn0_db: float, code_rate: float, bits_per_symbol: int = 1) -> float:
    """Real-noise variance for a given Eb/N0 at unit symbol energy.

    With Es = 1 the energy per information bit is
    1 / (code_rate * bits_per_symbol), and the real-valued AWGN has
    variance N0 / 2.
    """
    if code_rate <= 0.0:
        raise ValueError("code rate must be positive")
    if bits_per_symbol <= 0:
        raise ValueError("bits_per_symbol must be positive")
    if not np.isfinite(ebn0_db):
        if ebn0_db > 0:
            return 0.0
        raise ValueError("Eb/N0 must be finite or +inf")
    ebn0 = 10.0 ** (ebn0_db / 10.0)
    return 1.0 / (2.0 * code_rate * bits_per_symbol * ebn0)
