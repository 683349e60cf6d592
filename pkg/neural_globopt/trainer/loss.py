"""Trajectory loss."""

from __future__ import annotations

from neural_globopt.autodiff.value import Value, absolute, relu, square
from neural_globopt.exceptions import DomainError, InvalidArgumentError
from neural_globopt.model.trajectory import Trajectory
from neural_globopt.models import LossConfig


def trajectory_loss(traj: Trajectory, x_star: float, cfg: LossConfig) -> Value:
    """|x_T - x*|^2 + alpha * sum_t (|x_t - x*|^2 + relu(|x_t - x*| - |x_{t-1} - x*|)^2).

    The sum runs over t = 1..T, so the second term only penalises steps
    that move away from x*.
    """
    if len(traj.positions) < 2:
        raise InvalidArgumentError("Trajectory loss needs at least one executed step")
    if not 0.0 <= x_star <= 1.0:
        raise DomainError(f"x_star must lie in [0, 1], got {x_star}")

    distances = [absolute(x - x_star) for x in traj.positions]
    path = square(distances[1]) + square(relu(distances[1] - distances[0]))
    for prev, cur in zip(distances[1:-1], distances[2:], strict=True):
        path = path + square(cur) + square(relu(cur - prev))
    return square(distances[-1]) + cfg.alpha_traj * path
