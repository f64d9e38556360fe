"""Partitioning of soft-input variance windows.

Two codebook builders over the same point cloud: a splitting LBG vector
quantizer with a minimum-cluster-size constraint (hard assignments) and
deterministic annealing (Gibbs association probabilities that sharpen
as the temperature cools, with clusters splitting at their critical
temperatures).
"""

from dataclasses import dataclass

import numpy as np

MODE_HARD = "hard"
MODE_SOFT = "soft"

_LLOYD_TOL = 1e-10
_LLOYD_MAX_ITER = 200
_DA_TOL = 1e-6
_SPLIT_EPS = 1e-3


@dataclass
class ClusterModel:
    centroids: np.ndarray  # (K, dim)
    priors: np.ndarray  # (K,), uniform in hard mode
    mode: str
    final_temperature: float | None = None
    lloyd_distortion_trace: np.ndarray | None = None  # diagnostics, hard mode

    def __post_init__(self):
        self.centroids = np.atleast_2d(np.asarray(self.centroids, dtype=np.float64))
        self.priors = np.asarray(self.priors, dtype=np.float64).ravel()
        if self.mode not in (MODE_HARD, MODE_SOFT):
            raise ValueError(f"unknown cluster mode {self.mode!r}")
        if self.centroids.shape[0] != self.priors.size or self.priors.size < 1:
            raise ValueError("need one prior per centroid, K >= 1")
        if np.any(self.priors < -1e-12) or abs(self.priors.sum() - 1.0) > 1e-9:
            raise ValueError("priors must be nonnegative and sum to 1")
        if self.centroids.size and (
            self.centroids.min() < -1e-9 or self.centroids.max() > 1.0 + 1e-9
        ):
            raise ValueError("variance centroids must lie in [0, 1]")

    @property
    def n_clusters(self) -> int:
        return self.centroids.shape[0]


@dataclass
class Association:
    probs: np.ndarray  # (num_samples, K)

    def __post_init__(self):
        self.probs = np.atleast_2d(np.asarray(self.probs, dtype=np.float64))
        sums = self.probs.sum(axis=1)
        if self.probs.size and not np.allclose(sums, 1.0, atol=1e-9):
            raise ValueError("association rows must sum to 1")


def _sq_dists(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - centroids[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def _assign(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # argmin breaks ties toward the lower index
    return np.argmin(_sq_dists(points, centroids), axis=1)


def _distortion(points, centroids, labels) -> float:
    diff = points - centroids[labels]
    return float(np.mean(np.einsum("nd,nd->n", diff, diff)))


def _lloyd(points, centroids):
    """Lloyd iterations to convergence; returns (centroids, labels, trace)."""
    trace = []
    labels = _assign(points, centroids)
    prev = np.inf
    for _ in range(_LLOYD_MAX_ITER):
        new_c = centroids.copy()
        for k in range(centroids.shape[0]):
            members = labels == k
            if np.any(members):
                new_c[k] = points[members].mean(axis=0)
        centroids = new_c
        labels = _assign(points, centroids)
        d = _distortion(points, centroids, labels)
        trace.append(d)
        if prev - d < _LLOYD_TOL * max(prev, 1.0):
            break
        prev = d
    return centroids, labels, np.asarray(trace)


def _principal_axis(cov: np.ndarray, rng: np.random.Generator | None) -> np.ndarray:
    vals, vecs = np.linalg.eigh(cov)
    direction = vecs[:, -1]
    if vals[-1] <= 0.0 or not np.all(np.isfinite(direction)):
        # degenerate spread; fall back to a seeded random direction
        gen = rng if rng is not None else np.random.default_rng(0)
        direction = gen.standard_normal(cov.shape[0])
        direction /= np.linalg.norm(direction)
    return direction


def lbg_cluster(points, k_target: int, n_min: int, rng: np.random.Generator | None = None):
    """Splitting LBG with a minimum-membership constraint.

    Grows the codebook from the global mean by splitting the cluster
    with the largest within-cluster squared error; each split is
    followed by Lloyd iterations, and rolled back (freezing that
    centroid) if any cluster would end up with fewer than ``n_min``
    members.  Returns a hard :class:`ClusterModel` and one-hot
    :class:`Association`.
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if points.size == 0:
        raise ValueError("cannot cluster an empty point set")
    if n_min < 1 or k_target < 1:
        raise ValueError("n_min and k_target must be >= 1")
    n = points.shape[0]
    k_limit = max(1, min(k_target, n // n_min))
    scale = float(points.std())

    centroids = points.mean(axis=0, keepdims=True)
    labels = np.zeros(n, dtype=np.int64)
    frozen = [False]
    trace = [_distortion(points, centroids, labels)]

    while centroids.shape[0] < k_limit:
        within = np.array(
            [
                np.sum((points[labels == k] - centroids[k]) ** 2) if np.any(labels == k) else 0.0
                for k in range(centroids.shape[0])
            ]
        )
        within[np.asarray(frozen)] = -1.0
        k_split = int(np.argmax(within))
        if within[k_split] <= 0.0:
            break
        members = points[labels == k_split]
        cov = np.cov(members, rowvar=False, bias=True).reshape(members.shape[1], -1)
        direction = _principal_axis(cov, rng)
        eps = _SPLIT_EPS * (scale if scale > 0.0 else 1.0)
        candidate = np.vstack(
            [
                centroids[:k_split],
                centroids[k_split] + eps * direction,
                centroids[k_split + 1 :],
                centroids[k_split] - eps * direction,
            ]
        )
        new_c, new_labels, new_trace = _lloyd(points, candidate)
        counts = np.bincount(new_labels, minlength=new_c.shape[0])
        if counts.min() < n_min:
            frozen[k_split] = True
            if all(frozen):
                break
            continue
        centroids, labels = new_c, new_labels
        frozen = frozen[:k_split] + [False] + frozen[k_split + 1 :] + [False]
        trace.extend(new_trace.tolist())

    centroids = np.clip(centroids, 0.0, 1.0)
    k = centroids.shape[0]
    assoc = np.zeros((n, k))
    assoc[np.arange(n), labels] = 1.0
    model = ClusterModel(
        centroids=centroids,
        priors=np.full(k, 1.0 / k),
        mode=MODE_HARD,
        lloyd_distortion_trace=np.asarray(trace),
    )
    return model, Association(assoc)


def nearest_centroid(v, model: ClusterModel) -> int:
    """Index of the l2-nearest centroid; ties resolve to the lowest index."""
    v = np.asarray(v, dtype=np.float64).ravel()
    if v.size != model.centroids.shape[1]:
        raise ValueError("vector dimension does not match the centroids")
    d = np.sum((model.centroids - v) ** 2, axis=1)
    return int(np.argmin(d))


def assoc_probs(v, model: ClusterModel, temperature: float) -> np.ndarray:
    """Gibbs association posterior of one vector at the given temperature."""
    if temperature <= 0.0:
        raise ValueError("temperature must be positive")
    v = np.atleast_2d(np.asarray(v, dtype=np.float64))
    return _gibbs(v, model.centroids, model.priors, temperature)[0]


def _gibbs(points, centroids, priors, temperature) -> np.ndarray:
    """Rows of P(centroid_k | point_n), computed with max-subtraction."""
    logits = -_sq_dists(points, centroids) / temperature
    with np.errstate(divide="ignore"):
        logits = logits + np.log(np.maximum(priors, 1e-300))
    logits -= logits.max(axis=1, keepdims=True)
    p = np.exp(logits)
    p /= p.sum(axis=1, keepdims=True)
    return p


def _weighted_cov(points, weights, center):
    """Covariance of points about `center` under normalized weights."""
    w = weights / weights.sum()
    diff = points - center
    return (diff * w[:, None]).T @ diff


def da_cluster(
    points,
    k_max: int,
    cooling: float = 0.9,
    t_min: float = 1e-4,
    i_max: int = 100,
    rng: np.random.Generator | None = None,
    tol: float = _DA_TOL,
):
    """Deterministic-annealing clustering.

    Starts with one centroid at the global mean and a temperature above
    the full set's critical temperature, then alternates cooling steps
    with Gibbs-association / prior / centroid updates.  A cluster splits
    (duplicate plus a small perturbation along its principal axis) once
    the temperature falls to its critical temperature 2*lambda_max of
    the association-weighted covariance, while fewer than ``k_max``
    clusters exist.  Returns a soft :class:`ClusterModel` (with the
    final temperature) and the association matrix at that temperature.
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if points.size == 0:
        raise ValueError("cannot cluster an empty point set")
    if not 0.0 < cooling < 1.0:
        raise ValueError("cooling factor must lie in (0, 1)")
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    n = points.shape[0]
    sample_w = np.full(n, 1.0 / n)
    scale = float(points.std())
    eps = _SPLIT_EPS * (scale if scale > 0.0 else 1.0)

    centroids = points.mean(axis=0, keepdims=True)
    priors = np.ones(1)
    cov_all = _weighted_cov(points, sample_w, centroids[0])
    t = 2.2 * max(float(np.linalg.eigvalsh(cov_all)[-1]), t_min)

    probs = np.ones((n, 1))
    while t > t_min:
        t *= cooling
        if centroids.shape[0] < k_max:
            for k in range(centroids.shape[0]):
                if centroids.shape[0] >= k_max:
                    break
                wk = probs[:, k] * sample_w
                if wk.sum() <= 0.0:
                    continue
                cov_k = _weighted_cov(points, wk, centroids[k])
                vals = np.linalg.eigvalsh(cov_k)
                t_crit = 2.0 * float(vals[-1])
                if t <= t_crit:
                    direction = _principal_axis(cov_k, rng)
                    child = centroids[k] - eps * direction
                    centroids[k] = centroids[k] + eps * direction
                    centroids = np.vstack([centroids, child])
                    priors[k] *= 0.5
                    priors = np.append(priors, priors[k])

        prev_d = np.inf
        for _ in range(i_max):
            probs = _gibbs(points, centroids, priors, t)
            priors = probs.T @ sample_w
            for k in range(centroids.shape[0]):
                if priors[k] > 0.0:
                    centroids[k] = (probs[:, k] * sample_w) @ points / priors[k]
            d = float(np.sum(sample_w[:, None] * probs * _sq_dists(points, centroids)))
            if abs(prev_d - d) < tol * max(prev_d, 1e-30):
                break
            prev_d = d

    probs = _gibbs(points, centroids, priors, t)
    model = ClusterModel(
        centroids=np.clip(centroids, 0.0, 1.0),
        priors=priors / priors.sum(),
        mode=MODE_SOFT,
        final_temperature=t,
    )
    return model, Association(probs)


def soft_distortion(points, model: ClusterModel, assoc: Association) -> float:
    """Expected squared quantization error under the association weights."""
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    d = _sq_dists(points, model.centroids)
    return float(np.mean(np.sum(assoc.probs * d, axis=1)))
