"""Mutual-information tools for transfer-characteristic (EXIT) analysis.

Uses the standard Gaussian a-priori model: an LLR of information
content I is synthesized as L = (sigma^2 / 2) x + sigma n with
sigma = Jinv(I), and the information carried by a measured LLR stream
is estimated by the sample mean of 1 - log2(1 + exp(-x L)).
"""

from functools import lru_cache

import numpy as np
from scipy.optimize import brentq

_LN2 = float(np.log(2.0))
_HERM_POINTS = 127
_SIGMA_MAX = 60.0


@lru_cache(maxsize=1)
def _hermite_nodes():
    # nodes/weights for E[g(z)], z ~ N(0,1), via probabilists' Hermite rule
    x, w = np.polynomial.hermite_e.hermegauss(_HERM_POINTS)
    return x, w / np.sqrt(2.0 * np.pi)


def j_function(sigma: float) -> float:
    """Mutual information of a consistent Gaussian LLR with std-dev sigma."""
    if sigma < 0.0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0.0:
        return 0.0
    z, w = _hermite_nodes()
    llr = sigma**2 / 2.0 + sigma * z
    return float(1.0 - np.sum(w * np.logaddexp(0.0, -llr)) / _LN2)


def j_inverse(info: float) -> float:
    """Inverse of :func:`j_function` on [0, 1)."""
    if not 0.0 <= info < 1.0:
        raise ValueError("information must lie in [0, 1)")
    if info == 0.0:
        return 0.0
    if j_function(_SIGMA_MAX) <= info:
        return _SIGMA_MAX
    return float(brentq(lambda s: j_function(s) - info, 1e-12, _SIGMA_MAX, xtol=1e-12))


def synth_apriori_llrs(symbols, info: float, rng: np.random.Generator) -> np.ndarray:
    """Draw consistent Gaussian a-priori LLRs of the given information content."""
    symbols = np.asarray(symbols, dtype=np.float64).ravel()
    sigma = j_inverse(info)
    if sigma == 0.0:
        return np.zeros(symbols.size)
    return (sigma**2 / 2.0) * symbols + sigma * rng.standard_normal(symbols.size)


def mutual_information(llrs, symbols) -> float:
    """Sample-mean information estimate of LLRs against the true symbols."""
    llrs = np.asarray(llrs, dtype=np.float64).ravel()
    symbols = np.asarray(symbols, dtype=np.float64).ravel()
    if llrs.size != symbols.size or llrs.size == 0:
        raise ValueError("LLRs and symbols must share a nonzero length")
    return float(1.0 - np.mean(np.logaddexp(0.0, -symbols * llrs)) / _LN2)
