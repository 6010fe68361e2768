"""Spotlight sensor: actions, detection statistics and measurement sampling."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import poisson

from .errors import ConfigError, PlannerError

MAX_CLUTTER_POINTS = 1000


@dataclass(frozen=True)
class Action:
    """Point the spotlight at ``center`` (km), or make no observation."""

    center: tuple[float, float] | None = None

    @classmethod
    def observe(cls, x: float, y: float) -> "Action":
        return cls((float(x), float(y)))

    @classmethod
    def none(cls) -> "Action":
        return cls(None)

    @property
    def is_observe(self) -> bool:
        return self.center is not None

    def to_dict(self) -> dict:
        if self.center is None:
            return {"kind": "no_observation"}
        return {"kind": "observe", "center": [self.center[0], self.center[1]]}

    @classmethod
    def from_dict(cls, d: dict) -> "Action":
        if d.get("kind") == "no_observation":
            return cls.none()
        return cls.observe(*d["center"])

    def __str__(self) -> str:
        if self.center is None:
            return "NoObservation"
        return f"Observe({self.center[0]:.3f}, {self.center[1]:.3f})"


NO_OBSERVATION = Action.none()


@dataclass(frozen=True)
class SensorModel:
    """Circular field of view with detection probability and uniform clutter.

    ``clutter_rate`` is the false-alarm density per km^2; ``meas_cov`` the
    2x2 measurement error covariance (km^2).
    """

    fov_radius: float = 10.0
    p_d: float = 0.9
    clutter_rate: float = 0.0
    meas_cov: np.ndarray = field(default_factory=lambda: np.eye(2) * 1e-10)

    def __post_init__(self):
        cov = np.asarray(self.meas_cov, dtype=float)
        if cov.shape != (2, 2):
            raise ConfigError("meas_cov must be 2x2")
        object.__setattr__(self, "meas_cov", cov)
        if not self.fov_radius > 0:
            raise ConfigError("fov_radius must be > 0")
        if not 0.0 <= self.p_d <= 1.0:
            raise ConfigError("p_d must lie in [0, 1]")
        if not self.clutter_rate >= 0:
            raise ConfigError("clutter_rate must be >= 0")
        if not np.allclose(cov, cov.T) or np.any(np.linalg.eigvalsh(cov) <= 0):
            raise ConfigError("meas_cov must be symmetric positive definite")

    @classmethod
    def isotropic(cls, fov_radius: float, p_d: float, clutter_rate: float,
                  sigma: float) -> "SensorModel":
        return cls(fov_radius, p_d, clutter_rate, np.eye(2) * sigma**2)

    @property
    def fov_area(self) -> float:
        return np.pi * self.fov_radius**2

    @property
    def mean_clutter(self) -> float:
        return self.clutter_rate * self.fov_area

    @property
    def max_sigma(self) -> float:
        return float(np.sqrt(np.max(np.linalg.eigvalsh(self.meas_cov))))

    @property
    def cov_chol(self) -> np.ndarray:
        return np.linalg.cholesky(self.meas_cov)

    def __eq__(self, other):
        if not isinstance(other, SensorModel):
            return NotImplemented
        return (self.fov_radius == other.fov_radius and self.p_d == other.p_d
                and self.clutter_rate == other.clutter_rate
                and np.array_equal(self.meas_cov, other.meas_cov))

    __hash__ = None


@dataclass(frozen=True)
class MeasurementScan:
    points: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        object.__setattr__(self, "points", pts.reshape(-1, 2) if pts.size else np.zeros((0, 2)))

    def __len__(self) -> int:
        return len(self.points)


EMPTY_SCAN = MeasurementScan()


def in_fov(x, action: Action, sensor: SensorModel) -> bool:
    """Boundary-inclusive membership of ``x`` in the spotlight of ``action``."""
    if action.center is None:
        return False
    dx = x[0] - action.center[0]
    dy = x[1] - action.center[1]
    return bool(dx * dx + dy * dy <= sensor.fov_radius**2)


def in_fov_mask(points: np.ndarray, action: Action, sensor: SensorModel) -> np.ndarray:
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    if action.center is None:
        return np.zeros(len(points), dtype=bool)
    d = points - np.asarray(action.center)
    return np.einsum("ij,ij->i", d, d) <= sensor.fov_radius**2


def detection_seq_prob(seq: Sequence[int], i: int, actions: Sequence[Action],
                       sensor: SensorModel, prior) -> float:
    """Probability of a detection/miss sequence under hypothesis ``i``.

    ``prior`` is a BernoulliDiracPrior (or a bare (n, 2) array of its
    points); index ``i`` refers to ``points[i - 1]`` and ``i == 0`` is the
    no-target hypothesis.
    """
    points = np.asarray(getattr(prior, "points", prior))
    if len(seq) != len(actions):
        raise ValueError("sequence and action lists differ in length")
    prob = 1.0
    for s, a in zip(seq, actions):
        visible = i > 0 and in_fov(points[i - 1], a, sensor)
        if not visible:
            if s:
                return 0.0
            continue
        prob *= sensor.p_d if s else 1.0 - sensor.p_d
    return prob


def poisson_count(u, mean: float) -> np.ndarray:
    """Poisson draws by CDF inversion of uniforms ``u``."""
    counts = poisson.ppf(np.asarray(u, dtype=float), mean)
    # ppf(0) is -1 in scipy
    counts = np.maximum(np.nan_to_num(counts, nan=0.0), 0).astype(np.int64)
    if np.any(counts > MAX_CLUTTER_POINTS):
        raise PlannerError(
            f"clutter count above {MAX_CLUTTER_POINTS} points per scan "
            f"(mean {mean:.3g}); check clutter_rate / fov_radius"
        )
    return counts


def unit_disc(u_r: np.ndarray, u_theta: np.ndarray) -> np.ndarray:
    """Map uniform pairs to points uniform in the unit disc."""
    rho = np.sqrt(u_r)
    theta = 2.0 * np.pi * u_theta
    return np.stack([rho * np.cos(theta), rho * np.sin(theta)], axis=-1)


def scan_from_draws(target: np.ndarray | None, action: Action, sensor: SensorModel,
                    eps: np.ndarray, clutter_unit: np.ndarray) -> MeasurementScan:
    """Assemble a scan from pre-drawn noise.

    ``target`` is the true state when detected (else None), ``eps`` a
    standard-normal pair and ``clutter_unit`` the false alarms in unit-disc
    coordinates.
    """
    if action.center is None:
        return EMPTY_SCAN
    pts = []
    if target is not None:
        pts.append(np.asarray(target, dtype=float) + sensor.cov_chol @ eps)
    if len(clutter_unit):
        pts.extend(np.asarray(action.center) + sensor.fov_radius * np.asarray(clutter_unit))
    if not pts:
        return EMPTY_SCAN
    return MeasurementScan(np.array(pts))


def sample_scan(i: int, detected: int, action: Action, sensor: SensorModel,
                prior, rng: np.random.Generator) -> MeasurementScan:
    """Draw one scan under hypothesis ``i`` given the detection flag."""
    points = np.asarray(getattr(prior, "points", prior))
    if detected:
        if i <= 0 or not in_fov(points[i - 1], action, sensor):
            raise PlannerError("detection requested for a hypothesis outside the FOV")
    if action.center is None:
        return EMPTY_SCAN
    eps = rng.standard_normal(2)
    k = int(poisson_count(rng.random(), sensor.mean_clutter))
    clutter = unit_disc(rng.random(k), rng.random(k))
    target = points[i - 1] if detected else None
    return scan_from_draws(target, action, sensor, eps, clutter)
