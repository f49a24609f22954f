"""Closed-form cost evaluation for the privacy game.

Two independent routes to the sender's objective are provided.  The direct
route computes the least-mean-square estimation errors of the receiver and
the eavesdropper from the message moments.  The quadratic route evaluates
the same objective as a baseline difference plus a quadratic form in the
stacked cross-covariances, through the conditioning operator built by
``cost_operator``.  The two routes must agree to near machine precision,
which makes each one a runtime self-check of the other.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
import scipy.linalg

from .model import (
    ConditionalCovariance,
    GaussianModel,
    MessageMoments,
    conditional_covariance,
    conditional_gains,
)

if TYPE_CHECKING:
    from .equilibrium import EstimatorPolicy

__all__ = [
    "CostBreakdown",
    "CostOperator",
    "DegenerateMessageError",
    "baselines",
    "cost_operator",
    "stacked_observation",
    "costs_from_moments",
    "costs_with_gains",
    "sender_cost_quadratic",
    "feasibility_check",
]

NORMALIZATION_TOL = 1e-9


class DegenerateMessageError(ValueError):
    """The joint (y, z) covariance is singular, so LMMSE gains are undefined.

    Raised instead of silently pseudo-inverting: a degenerate message
    covariance in a hand-authored policy almost always indicates a modeling
    mistake (solver-produced policies are normalized and never hit this).
    """


@dataclass(frozen=True)
class CostBreakdown:
    """Estimation errors and the sender's composite objective.

    ``baseline_receiver`` and ``baseline_malicious`` are the errors with no
    message at all (side information only); an optimally used message can
    only improve on them.
    """

    receiver_mse: float
    malicious_mse: float
    sender_cost: float
    baseline_receiver: float
    baseline_malicious: float


@dataclass(frozen=True)
class CostOperator:
    """Operators of the quadratic cost identity and its constraint.

    ``Z`` is the weight of the quadratic form in the stacked
    cross-covariances (V_xy; V_wy; V_zy).  ``Q_pp`` is the conditional
    covariance of (x, w) given z, which the feasibility constraint reduces
    to.  ``proj`` is the conditioning block [I 0 -V_xz V_zz^{-1};
    0 I -V_wz V_zz^{-1}] whose congruence with diag(-I, delta I) defines Z.
    """

    Z: np.ndarray
    Q_pp: np.ndarray
    proj: np.ndarray


def _delta_value(delta) -> float:
    """Accept a plain float or any object with a ``delta`` attribute."""
    value = float(getattr(delta, "delta", delta))
    if value < 0:
        raise ValueError(f"privacy ratio must be nonnegative, got {value}")
    return value


def baselines(model: GaussianModel) -> tuple[float, float]:
    """No-message estimation errors: trace of the covariances of x and w given z."""
    A, B = conditional_gains(model)
    b_x = float(np.trace(model.V_xx - A @ model.V_xz.T))
    b_w = float(np.trace(model.V_ww - B @ model.V_wz.T))
    return b_x, b_w


def cost_operator(model: GaussianModel, delta) -> CostOperator:
    """Build the quadratic-form operator for a given privacy ratio."""
    dv = _delta_value(delta)
    d = model.dims
    A, B = conditional_gains(model)
    proj = np.zeros((d.n_pair, d.n_joint))
    proj[: d.n_x, : d.n_x] = np.eye(d.n_x)
    proj[d.n_x :, d.n_x : d.n_pair] = np.eye(d.n_w)
    proj[: d.n_x, d.n_pair :] = -A
    proj[d.n_x :, d.n_pair :] = -B
    weight = np.diag(np.concatenate([-np.ones(d.n_x), dv * np.ones(d.n_w)]))
    Z = proj.T @ weight @ proj
    xi = conditional_covariance(model).xi
    return CostOperator(Z=0.5 * (Z + Z.T), Q_pp=xi, proj=proj)


def stacked_observation(
    model: GaussianModel, moments: MessageMoments
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Covariance of the observation s = (y, z) and the cross-covariances of x and w with s.

    Returns ``(S, C_x, C_w)`` with S of shape (n_y+n_z, n_y+n_z).
    """
    V_yz = moments.V_zy.T
    top = np.concatenate([moments.V_yy, V_yz], axis=1)
    bottom = np.concatenate([moments.V_zy, model.V_zz], axis=1)
    S = np.concatenate([top, bottom], axis=0)
    C_x = np.concatenate([moments.V_xy, model.V_xz], axis=1)
    C_w = np.concatenate([moments.V_wy, model.V_wz], axis=1)
    return S, C_x, C_w


def _cho_factor(S: np.ndarray):
    try:
        return scipy.linalg.cho_factor(S)
    except scipy.linalg.LinAlgError as exc:
        raise DegenerateMessageError(
            "joint (y, z) covariance is singular; the message policy is "
            "degenerate (consider regularizing the noise covariance)"
        ) from exc


def costs_from_moments(model: GaussianModel, moments: MessageMoments, delta) -> CostBreakdown:
    """LMMSE estimation errors and sender objective, directly from the moments.

    The receiver error is trace(V_xx - C_x S^{-1} C_x^T) with S the
    covariance of the observation (y, z); the eavesdropper error is the
    analogue for w.  The sender's cost combines them through the privacy
    ratio.

    Raises
    ------
    DegenerateMessageError
        If the (y, z) covariance is singular.
    """
    dv = _delta_value(delta)
    S, C_x, C_w = stacked_observation(model, moments)
    factor = _cho_factor(S)
    r = float(np.trace(model.V_xx) - np.sum(C_x * scipy.linalg.cho_solve(factor, C_x.T).T))
    m = float(np.trace(model.V_ww) - np.sum(C_w * scipy.linalg.cho_solve(factor, C_w.T).T))
    b_x, b_w = baselines(model)
    return CostBreakdown(
        receiver_mse=r,
        malicious_mse=m,
        sender_cost=r - dv * m,
        baseline_receiver=b_x,
        baseline_malicious=b_w,
    )


def costs_with_gains(
    model: GaussianModel,
    moments: MessageMoments,
    receiver: "EstimatorPolicy",
    malicious: "EstimatorPolicy",
    delta,
) -> CostBreakdown:
    """Estimation errors of arbitrary fixed linear gains (not necessarily LMMSE).

    For an estimate G s of a target t with cross-covariance C = E{t s^T},
    the error is trace(V_tt) - 2 trace(G C^T) + trace(G S G^T).
    """
    dv = _delta_value(delta)
    S, C_x, C_w = stacked_observation(model, moments)
    G_r = np.concatenate([receiver.gain_y, receiver.gain_z], axis=1)
    G_m = np.concatenate([malicious.gain_y, malicious.gain_z], axis=1)
    r = float(np.trace(model.V_xx) - 2.0 * np.sum(G_r * C_x) + np.sum((G_r @ S) * G_r))
    m = float(np.trace(model.V_ww) - 2.0 * np.sum(G_m * C_w) + np.sum((G_m @ S) * G_m))
    b_x, b_w = baselines(model)
    return CostBreakdown(
        receiver_mse=r,
        malicious_mse=m,
        sender_cost=r - dv * m,
        baseline_receiver=b_x,
        baseline_malicious=b_w,
    )


def _stacked_cross(moments: MessageMoments) -> np.ndarray:
    return np.concatenate([moments.V_xy, moments.V_wy, moments.V_zy], axis=0)


def _normalization_residual(model: GaussianModel, moments: MessageMoments) -> float:
    cond = moments.V_yy - moments.V_zy.T @ np.linalg.solve(model.V_zz, moments.V_zy) \
        if model.dims.n_z else moments.V_yy
    return float(np.abs(cond - np.eye(model.dims.n_y)).max())


def sender_cost_quadratic(
    operator: CostOperator, moments: MessageMoments, delta, model: GaussianModel
) -> float:
    """Sender objective via the quadratic-form identity.

    Valid only for normalized moments (conditional message covariance given
    z equal to the identity); the identity is derived under that scaling
    convention.  Must agree with ``costs_from_moments`` to 1e-9.

    Raises
    ------
    ValueError
        If the moments are not normalized.  Rescale the message first, e.g.
        with ``scale_equilibrium`` and kappa the inverse square root of the
        conditional message covariance.
    """
    dv = _delta_value(delta)
    residual = _normalization_residual(model, moments)
    if residual > NORMALIZATION_TOL:
        raise ValueError(
            "moments are not normalized (conditional message covariance "
            f"deviates from identity by {residual:.3e}); rescale the message "
            "via scale_equilibrium before evaluating the quadratic identity"
        )
    b_x, b_w = baselines(model)
    xi = _stacked_cross(moments)
    return b_x - dv * b_w + float(np.sum((operator.Z @ xi) * xi))


def feasibility_check(
    operator: CostOperator,
    moments: MessageMoments,
    conditional: ConditionalCovariance,
    tol: float = NORMALIZATION_TOL,
) -> tuple[bool, float]:
    """Evaluate the moment feasibility constraint in its reduced form.

    The constraint requires the quadratic form of the conditional
    cross-covariances of (x, w) with y, weighted by the inverse conditional
    covariance, to stay below the identity.  Returns a pass flag and the
    margin 1 - max eigenvalue of the quadratic form (negative = violated,
    zero = active, one = no message correlation at all).
    """
    xi_c = operator.proj @ _stacked_cross(moments)
    form = xi_c.T @ np.linalg.solve(conditional.xi, xi_c)
    margin = 1.0 - float(np.linalg.eigvalsh(0.5 * (form + form.T)).max())
    return margin >= -tol, margin
