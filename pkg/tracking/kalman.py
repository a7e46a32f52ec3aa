"""Constant-velocity Kalman filter over (cx, cy, aspect, height).

The state is the 4-d measurement plus its velocities. Process and measurement
noise scale with the box height (1/20 for position, 1/160 for velocity).
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, solve_triangular
from scipy.stats import chi2

from tracking.tensorlab import NumericError

NDIM = 4
STD_WEIGHT_POSITION = 1.0 / 20
STD_WEIGHT_VELOCITY = 1.0 / 160
CHI2_GATE_95 = float(chi2.ppf(0.95, NDIM))

_MOTION = np.eye(2 * NDIM)
_MOTION[:NDIM, NDIM:] = np.eye(NDIM)
_UPDATE = np.eye(NDIM, 2 * NDIM)


@dataclass(frozen=True)
class KalmanState:
    """Gaussian belief: 8-d mean and 8×8 covariance."""

    mean: np.ndarray
    cov: np.ndarray

    @property
    def tlwh(self) -> np.ndarray:
        return xyah_to_tlwh(self.mean[:NDIM])


def tlwh_to_xyah(box: np.ndarray) -> np.ndarray:
    """(left, top, w, h) → (center x, center y, w/h, h)."""
    left, top, w, h = np.asarray(box, dtype=np.float64)
    if w <= 0 or h <= 0:
        raise ValueError(f"box must have positive size, got {w}×{h}")
    return np.array([left + w / 2, top + h / 2, w / h, h])


def xyah_to_tlwh(xyah: np.ndarray) -> np.ndarray:
    cx, cy, a, h = np.asarray(xyah, dtype=np.float64)
    w = a * h
    return np.array([cx - w / 2, cy - h / 2, w, h])


def _symmetric(cov: np.ndarray) -> np.ndarray:
    return 0.5 * (cov + cov.T)


def kf_initiate(box: np.ndarray) -> KalmanState:
    """Start a track from an unassociated tlwh box with zero velocity."""
    m = tlwh_to_xyah(box)
    h = m[3]
    std = [
        2 * STD_WEIGHT_POSITION * h, 2 * STD_WEIGHT_POSITION * h, 1e-2, 2 * STD_WEIGHT_POSITION * h,
        10 * STD_WEIGHT_VELOCITY * h, 10 * STD_WEIGHT_VELOCITY * h, 1e-5, 10 * STD_WEIGHT_VELOCITY * h,
    ]
    return KalmanState(np.r_[m, np.zeros(NDIM)], np.diag(np.square(std)))


def kf_predict(state: KalmanState) -> KalmanState:
    """Propagate one frame with constant velocity and height-scaled process noise."""
    h = state.mean[3]
    std_pos = [STD_WEIGHT_POSITION * h, STD_WEIGHT_POSITION * h, 1e-2, STD_WEIGHT_POSITION * h]
    std_vel = [STD_WEIGHT_VELOCITY * h, STD_WEIGHT_VELOCITY * h, 1e-5, STD_WEIGHT_VELOCITY * h]
    q = np.diag(np.square(np.r_[std_pos, std_vel]))
    mean = _MOTION @ state.mean
    cov = _MOTION @ state.cov @ _MOTION.T + q
    return KalmanState(mean, _symmetric(cov))


def kf_project(state: KalmanState) -> tuple[np.ndarray, np.ndarray]:
    """Measurement-space mean and innovation covariance."""
    h = state.mean[3]
    std = [STD_WEIGHT_POSITION * h, STD_WEIGHT_POSITION * h, 1e-1, STD_WEIGHT_POSITION * h]
    mean = _UPDATE @ state.mean
    cov = _UPDATE @ state.cov @ _UPDATE.T + np.diag(np.square(std))
    return mean, _symmetric(cov)


def _cholesky(cov: np.ndarray) -> tuple[np.ndarray, bool]:
    try:
        return cho_factor(cov, lower=True, check_finite=True)
    except (LinAlgError, ValueError) as e:
        raise NumericError(f"innovation covariance is not positive definite: {e}") from e


def kf_update(state: KalmanState, box: np.ndarray) -> KalmanState:
    """Standard Kalman correction with a tlwh measurement.

    Raises:
        NumericError: If the innovation covariance is not positive definite.
    """
    proj_mean, proj_cov = kf_project(state)
    factor = _cholesky(proj_cov)
    gain = cho_solve(factor, (state.cov @ _UPDATE.T).T, check_finite=False).T
    innovation = tlwh_to_xyah(box) - proj_mean
    mean = state.mean + innovation @ gain.T
    cov = state.cov - gain @ proj_cov @ gain.T
    return KalmanState(mean, _symmetric(cov))


def squared_mahalanobis(state: KalmanState, box: np.ndarray) -> float:
    """d² of a tlwh measurement under the projected distribution (4 dof).

    Raises:
        NumericError: If the projected covariance is singular.
    """
    return float(gating_distances(state, np.asarray(box, dtype=np.float64).reshape(1, 4))[0])


def gating_distances(state: KalmanState, boxes: np.ndarray) -> np.ndarray:
    """Squared Mahalanobis distance of each row of an n×4 tlwh array, one factorization."""
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    if not len(boxes):
        return np.zeros(0)
    proj_mean, proj_cov = kf_project(state)
    lower, _ = _cholesky(proj_cov)
    diffs = np.stack([tlwh_to_xyah(b) for b in boxes]) - proj_mean
    z = solve_triangular(np.tril(lower), diffs.T, lower=True, check_finite=False)
    return np.sum(z * z, axis=0)
