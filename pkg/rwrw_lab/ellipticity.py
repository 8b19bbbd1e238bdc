"""Lower bounds on both occupancy probabilities at the walker's site, uniformly over histories.

The occupancy of ``(o, 0)`` under a conditioned field splits into the anchored particles
and the history-avoiding field. The report estimates the probability that every anchored
particle misses ``(o, 0)`` and the void and occupied probabilities of the avoiding field,
whose product bounds the two-sided floor from below.
"""

import logging
import math
from typing import Dict, List, Sequence

import numpy as np

from rwrw_lab.bridge import AnchoredSampler, avoidance_probability, rates_from_history
from rwrw_lab.constants import Z_95
from rwrw_lab.environment import EnvConfig, PathObservation
from rwrw_lab.occupancy import OccupancyOracle, lazy_reveal_step


def _proportion(successes: int, reps: int) -> Dict[str, float]:
    p = successes / reps
    return {"value": p, "ci": Z_95 * math.sqrt(p * (1 - p) / reps)}


class HistoryEllipticity:
    def __init__(self, name: str, vacant: Dict[str, float], occupied: Dict[str, float], anchored_miss: Dict[str, float],
                 avoiding_void: Dict[str, float], predicted_void: Dict[str, float]) -> None:
        self.name = name
        self.vacant = vacant
        self.occupied = occupied
        self.anchored_miss = anchored_miss
        self.avoiding_void = avoiding_void
        self.predicted_void = predicted_void

    @property
    def minimum(self) -> Dict[str, float]:
        return min(self.vacant, self.occupied, key=lambda estimate: estimate["value"])

    @property
    def epsilon_1(self) -> float:
        return self.anchored_miss["value"]

    @property
    def epsilon_2(self) -> float:
        return min(self.avoiding_void["value"], 1 - self.avoiding_void["value"])

    def void_prediction_holds(self) -> bool:
        return abs(self.avoiding_void["value"] - self.predicted_void["value"]) <= self.avoiding_void["ci"] + self.predicted_void["ci"] + 1e-12

    def to_dict(self) -> Dict[str, object]:
        return {
            "history": self.name,
            "pVacant": self.vacant,
            "pOccupied": self.occupied,
            "epsilon1": self.epsilon_1,
            "epsilon2": self.epsilon_2,
            "avoidingVoid": self.avoiding_void,
            "predictedVoid": self.predicted_void
        }


class EllipticityReport:
    def __init__(self, per_history: List[HistoryEllipticity], density: float, d: int) -> None:
        self.per_history = per_history
        self.density = density
        self.d = d

    @property
    def two_sided_floor_possible(self) -> bool:
        return self.density > 0

    def global_minimum(self) -> Dict[str, float]:
        worst = min(self.per_history, key=lambda entry: entry.minimum["value"])
        return dict(worst.minimum, history=worst.name)

    def factorization_holds(self, slack: float = 0.0) -> bool:
        """Each history's floor is at least ``epsilon_1 * epsilon_2`` up to its CI."""
        return all(entry.minimum["value"] + entry.minimum["ci"] + slack >= entry.epsilon_1 * entry.epsilon_2 for entry in self.per_history)


def ellipticity_for_history(history: PathObservation, config: EnvConfig, reps: int, rng: np.random.Generator,
                            mc_samples: int) -> HistoryEllipticity:
    sampler = None
    if history.occupied_positions() and config.density > 0:
        sampler = AnchoredSampler(history, config, rates_from_history(history, config, mc_samples, rng))

    origin_site = np.zeros(config.d, dtype=np.int64)
    index = -config.start_time
    vacant = 0
    anchored_miss = 0
    avoiding_void = 0

    for _ in range(reps):
        anchored_hits = 0
        if sampler is not None:
            trajectories = sampler.sample(rng).trajectories
            anchored_hits = int(np.all(trajectories[:, index, :] == origin_site, axis=1).sum())
        oracle = OccupancyOracle.lazy(config, rng, history=history)
        avoiding = lazy_reveal_step(oracle, origin_site, 0, rng).count

        anchored_miss += anchored_hits == 0
        avoiding_void += avoiding == 0
        vacant += anchored_hits + avoiding == 0

    q_hat, _ = avoidance_probability(config.env_kernel, origin_site, 0, history.points(), mc_samples, rng)
    void = math.exp(-config.density * q_hat)
    predicted_void = {"value": void, "ci": config.density * void * Z_95 * math.sqrt(q_hat * (1 - q_hat) / mc_samples)}
    return HistoryEllipticity(history.name, _proportion(vacant, reps), _proportion(reps - vacant, reps),
                              _proportion(anchored_miss, reps), _proportion(avoiding_void, reps), predicted_void)


def ellipticity_report(family: Sequence[PathObservation], config: EnvConfig, reps: int, rng: np.random.Generator,
                       mc_samples: int = 4000) -> EllipticityReport:
    """``P(omega_0(o) = i | A)`` for ``i`` in {0, 1} and every history ``A`` of the family."""
    if config.d < 3:
        logging.warning(f"Ellipticity floors are only expected in d >= 3; running in d = {config.d}")
    if config.density == 0:
        logging.warning("The field is empty: the occupied probability is zero and no two-sided floor exists")

    per_history = []
    for history in family:
        entry = ellipticity_for_history(history, config, reps, rng, mc_samples)
        logging.info(f"Ellipticity {history.name}: P(vacant) = {entry.vacant['value']:.4f}, P(occupied) = {entry.occupied['value']:.4f}")
        per_history.append(entry)
    return EllipticityReport(per_history, config.density, config.d)
