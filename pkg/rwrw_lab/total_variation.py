from typing import Callable, Dict, Optional

import numpy as np

from rwrw_lab.errors import ErrUsage

FeatureMap = Callable[[np.ndarray], np.ndarray]
BOOTSTRAP_ROUNDS = 200


class TVEstimate:
    """Plug-in total variation over a declared finite feature space."""

    def __init__(self, value: float, ci: float, feature_space: str, feature_count: int, reps: int) -> None:
        self.value = value
        self.ci = ci
        self.feature_space = feature_space
        self.feature_count = feature_count
        self.reps = reps

    @property
    def bias_bound(self) -> float:
        return float(np.sqrt(self.feature_count / self.reps)) if self.reps else 1.0

    def to_dict(self) -> Dict[str, object]:
        return {
            "value": self.value,
            "ci": self.ci,
            "biasBound": self.bias_bound,
            "featureSpace": self.feature_space,
            "reps": self.reps
        }

    def __repr__(self) -> str:
        return f"TVEstimate({self.value:.4f} +- {self.ci:.4f} on {self.feature_space})"


def rows_as_codes(samples: np.ndarray) -> np.ndarray:
    """Identity feature map: every distinct row is its own feature."""
    samples = np.asarray(samples)
    if samples.ndim == 1:
        return samples.astype(np.int64)
    _, inverse = np.unique(samples, axis=0, return_inverse=True)
    return inverse.reshape(-1).astype(np.int64)


def bits_as_codes(samples: np.ndarray) -> np.ndarray:
    """Rows of 0/1 values read as binary numbers, first column most significant."""
    samples = np.asarray(samples, dtype=np.int64)
    weights = 1 << np.arange(samples.shape[1] - 1, -1, -1)
    return samples @ weights


def _tv(codes_p: np.ndarray, codes_q: np.ndarray, categories: int) -> float:
    p = np.bincount(codes_p, minlength=categories) / len(codes_p)
    q = np.bincount(codes_q, minlength=categories) / len(codes_q)
    return 0.5 * float(np.abs(p - q).sum())


def tv_empirical(samples_p: np.ndarray, samples_q: np.ndarray, feature_map: Optional[FeatureMap] = None,
                 feature_space: str = "rows", feature_count: Optional[int] = None,
                 rng: Optional[np.random.Generator] = None, bootstrap: int = BOOTSTRAP_ROUNDS) -> TVEstimate:
    """``(1/2) sum |p - q|`` of the empirical feature laws, with a bootstrap 95% half-width."""
    samples_p = np.asarray(samples_p)
    samples_q = np.asarray(samples_q)
    if len(samples_p) == 0 or len(samples_q) == 0:
        raise ErrUsage("total variation needs nonempty sample sets")

    if feature_map is None:
        joined = rows_as_codes(np.concatenate([samples_p, samples_q]))
        codes_p, codes_q = joined[:len(samples_p)], joined[len(samples_p):]
    else:
        codes_p = np.asarray(feature_map(samples_p), dtype=np.int64)
        codes_q = np.asarray(feature_map(samples_q), dtype=np.int64)
    if min(codes_p.min(), codes_q.min()) < 0:
        raise ErrUsage("feature codes must be nonnegative")

    _, relabeled = np.unique(np.concatenate([codes_p, codes_q]), return_inverse=True)
    relabeled = relabeled.reshape(-1)
    codes_p, codes_q = relabeled[:len(codes_p)], relabeled[len(codes_p):]
    categories = int(relabeled.max()) + 1
    value = _tv(codes_p, codes_q, categories)

    ci = 0.0
    if rng is not None and bootstrap > 0:
        replicates = np.empty(bootstrap)
        for round_index in range(bootstrap):
            resampled_p = codes_p[rng.integers(0, len(codes_p), len(codes_p))]
            resampled_q = codes_q[rng.integers(0, len(codes_q), len(codes_q))]
            replicates[round_index] = _tv(resampled_p, resampled_q, categories)
        low, high = np.quantile(replicates, [0.025, 0.975])
        ci = float(high - low) / 2

    reps = min(len(codes_p), len(codes_q))
    return TVEstimate(value, ci, feature_space, feature_count or categories, reps)
