"""Nearly-constant-velocity target motion and the linear Kalman filter.

State ordering is ``[x, vx, y, vy]``; the measurement picks ``(x, y)``.
Elapsed times are in seconds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import CvOffdiag
from .model import BeliefKind, TargetState, TrackBelief
from .streams import Stream

H = np.array([[1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]])
H.setflags(write=False)


@dataclass(frozen=True)
class MotionModel:
    g_s: float
    offdiag: CvOffdiag = CvOffdiag.PRINTED

    def __post_init__(self) -> None:
        if not self.g_s > 0:
            raise ValueError("process noise intensity must be positive")


@dataclass(frozen=True)
class Measurement:
    z: tuple[float, float]
    noise_var: float

    def __post_init__(self) -> None:
        if not self.noise_var > 0:
            raise ValueError("measurement noise variance must be positive")


def _check_elapsed(elapsed: float) -> None:
    if elapsed < 0:
        raise ValueError(f"elapsed time must be non-negative, got {elapsed}")


def transition_matrix(elapsed: float) -> np.ndarray:
    _check_elapsed(elapsed)
    F = np.eye(4)
    F[0, 1] = F[2, 3] = elapsed
    return F


def process_noise_block(elapsed: float, g_s: float, offdiag=CvOffdiag.PRINTED) -> np.ndarray:
    """Per-axis 2x2 block of the process-noise covariance."""
    _check_elapsed(elapsed)
    t = elapsed
    c = t * t if CvOffdiag(offdiag) is CvOffdiag.PRINTED else t * t / 2.0
    return g_s * np.array([[t**3 / 3.0, c], [c, t]])


def process_noise_cov(elapsed: float, g_s: float, offdiag=CvOffdiag.PRINTED) -> np.ndarray:
    Q = np.zeros((4, 4))
    Q[:2, :2] = Q[2:, 2:] = process_noise_block(elapsed, g_s, offdiag)
    return Q


def predict_state(state: TargetState, elapsed: float) -> TargetState:
    """Mean of the CV prediction (no covariance)."""
    _check_elapsed(elapsed)
    return TargetState(state.x + elapsed * state.vx, state.vx,
                       state.y + elapsed * state.vy, state.vy)


def predict(prior: TrackBelief, elapsed: float, model: MotionModel) -> TrackBelief:
    _check_elapsed(elapsed)
    F = transition_matrix(elapsed)
    mse = F @ prior.mse @ F.T + process_noise_cov(elapsed, model.g_s, model.offdiag)
    return TrackBelief(
        state=predict_state(prior.state, elapsed),
        mse=mse,
        kind=BeliefKind.PREDICTED,
        time=prior.time + int(round(elapsed * 1e9)),
    )


def update(pred: TrackBelief, meas: Measurement) -> TrackBelief:
    """Kalman update with isotropic measurement noise."""
    if pred.kind is not BeliefKind.PREDICTED:
        raise ValueError("update expects a predicted belief")
    P = pred.mse
    PHt = P[:, (0, 2)]  # P @ H.T
    s00 = P[0, 0] + meas.noise_var
    s01 = P[0, 2]
    s10 = P[2, 0]
    s11 = P[2, 2] + meas.noise_var
    det = s00 * s11 - s01 * s10
    assert det > 0, "singular innovation covariance"
    S_inv = np.array([[s11, -s01], [-s10, s00]]) / det
    K = PHt @ S_inv
    x = pred.state.as_vector()
    innov = np.array([meas.z[0] - x[0], meas.z[1] - x[2]])
    new_x = x + K @ innov
    mse = (np.eye(4) - K @ H) @ P
    return TrackBelief(TargetState.from_vector(new_x), mse, BeliefKind.UPDATED, pred.time)


def _cv_noise_factor(elapsed: float, g_s: float) -> tuple[float, float, float]:
    # Cholesky of g_s * [[T^3/3, T^2/2], [T^2/2, T]]
    t = elapsed
    l00 = math.sqrt(g_s * t**3 / 3.0)
    l10 = (g_s * t * t / 2.0) / l00
    l11 = math.sqrt(g_s * t - l10 * l10)
    return l00, l10, l11


def propagate_truth(truth: TargetState, elapsed: float, model: MotionModel,
                    stream: Stream) -> TargetState:
    """Advance the true target by one CV step with sampled process noise.

    The noise is always drawn with the physical white-noise-acceleration
    covariance (off-diagonal T'^2/2): the printed T'^2 variant is not positive
    semidefinite and cannot be sampled.  Draw order is x, vx, y, vy.
    """
    _check_elapsed(elapsed)
    if elapsed == 0:
        return truth
    l00, l10, l11 = _cv_noise_factor(elapsed, model.g_s)
    normal = stream.normal
    a0 = normal()
    a1 = normal()
    b0 = normal()
    b1 = normal()
    return TargetState(
        truth.x + elapsed * truth.vx + l00 * a0,
        truth.vx + l10 * a0 + l11 * a1,
        truth.y + elapsed * truth.vy + l00 * b0,
        truth.vy + l10 * b0 + l11 * b1,
    )


def synthesize_measurement(truth: TargetState, noise_var: float, stream: Stream) -> Measurement:
    sd = math.sqrt(noise_var)
    return Measurement(
        (truth.x + sd * stream.normal(), truth.y + sd * stream.normal()), noise_var
    )


def initial_belief(truth: TargetState) -> TrackBelief:
    return TrackBelief(truth, np.eye(4), BeliefKind.UPDATED, 0)
