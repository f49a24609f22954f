"""Equilibrium construction for the Gaussian privacy game.

The sender transmits y = K_x x + K_w w + v and trades off the receiver's
estimation accuracy on the state x against the leakage of the private
information w to an eavesdropper, weighted by the privacy ratio delta.
Both observers respond with least-mean-square estimators.

The informative equilibrium reduces, after normalizing the message scale,
to minimizing trace(K Xi D Xi K^T) over K subject to K Xi K^T <= I, with
Xi the conditional covariance of (x, w) given z and D = diag(-I, delta I).
Substituting L = K Xi^{1/2} turns this into choosing an orthonormal set of
rows from the eigenvectors of M = Xi^{1/2} D Xi^{1/2}: the optimum takes
the eigenvectors of the most negative eigenvalues (at most n_y of them)
and pads the remaining message coordinates with pure noise.  The solver's
output is cross-validated by the derivative-free search in
``verification.oracle_solve``.

Also provided: the non-informative (babbling) equilibria, where the
message is pure noise and everyone ignores it, and the scaling family of
equilibria obtained by applying any invertible linear map to the message.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import costs as _costs
from .model import (
    GaussianModel,
    MessageMoments,
    conditional_covariance,
    conditional_gains,
    message_moments,
    require_valid,
)

__all__ = [
    "PrivacyRatio",
    "SenderPolicy",
    "EstimatorPolicy",
    "SolverDiagnostics",
    "EquilibriumSolution",
    "lmmse_gains",
    "solve_scalar",
    "solve_general",
    "babbling_equilibrium",
    "scale_equilibrium",
]

# Relative threshold below which an eigenvalue counts as zero rather than
# negative; keeps numerically-zero eigenvalues from contributing noise rows.
_EIG_ZERO_TOL = 1e-12

_KAPPA_MAX_CONDITION = 1e12


@dataclass(frozen=True)
class PrivacyRatio:
    """Nonnegative weight on hiding w relative to revealing x."""

    delta: float

    def __post_init__(self):
        if not np.isfinite(self.delta) or self.delta < 0:
            raise ValueError(f"privacy ratio must be a nonnegative number, got {self.delta}")


def _delta_value(delta) -> float:
    if isinstance(delta, PrivacyRatio):
        return delta.delta
    return PrivacyRatio(float(delta)).delta


@dataclass(frozen=True)
class SenderPolicy:
    """Affine message rule y = K_x x + K_w w + K_z z + v with v ~ N(0, V_vv).

    ``K_z`` may be ``None``, meaning the side information is not used
    (solvers always produce an explicit zero block).
    """

    K_x: np.ndarray
    K_w: np.ndarray
    V_vv: np.ndarray
    K_z: np.ndarray | None = None

    def __post_init__(self):
        K_x = np.atleast_2d(np.asarray(self.K_x, dtype=float))
        K_w = np.atleast_2d(np.asarray(self.K_w, dtype=float))
        V_vv = np.atleast_2d(np.asarray(self.V_vv, dtype=float))
        K_z = self.K_z
        if K_z is not None:
            K_z = np.atleast_2d(np.asarray(K_z, dtype=float))
        n_y = K_x.shape[0]
        if K_w.shape[0] != n_y or V_vv.shape != (n_y, n_y):
            raise ValueError("policy blocks disagree on the message dimension")
        if K_z is not None and K_z.shape[0] != n_y:
            raise ValueError("policy blocks disagree on the message dimension")
        scale = max(1.0, float(np.abs(V_vv).max()))
        if np.abs(V_vv - V_vv.T).max() > 1e-9 * scale:
            raise ValueError("V_vv must be symmetric")
        if V_vv.size and float(np.linalg.eigvalsh(0.5 * (V_vv + V_vv.T)).min()) < -1e-9 * scale:
            raise ValueError("V_vv must be positive semidefinite")
        object.__setattr__(self, "K_x", K_x)
        object.__setattr__(self, "K_w", K_w)
        object.__setattr__(self, "K_z", K_z)
        object.__setattr__(self, "V_vv", V_vv)

    @property
    def n_y(self) -> int:
        return self.K_x.shape[0]

    def gain_matrix(self) -> np.ndarray:
        """The stacked gain [K_x K_w] applied to (x, w)."""
        return np.concatenate([self.K_x, self.K_w], axis=1)


@dataclass(frozen=True)
class EstimatorPolicy:
    """Deterministic linear estimate: gain_y y + gain_z z."""

    gain_y: np.ndarray
    gain_z: np.ndarray

    def __post_init__(self):
        gain_y = np.atleast_2d(np.asarray(self.gain_y, dtype=float))
        gain_z = np.asarray(self.gain_z, dtype=float)
        if gain_z.ndim != 2:
            gain_z = gain_z.reshape(gain_y.shape[0], -1)
        if gain_z.shape[0] != gain_y.shape[0]:
            raise ValueError("gain_y and gain_z disagree on the estimate dimension")
        object.__setattr__(self, "gain_y", gain_y)
        object.__setattr__(self, "gain_z", gain_z)

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.gain_y, self.gain_z], axis=1)


@dataclass(frozen=True)
class SolverDiagnostics:
    """Spectral diagnostics: eigenvalues of Xi^{1/2} D Xi^{1/2} (ascending) and
    the number of message coordinates actually carrying information."""

    eigenvalues: tuple[float, ...]
    active_rank: int


@dataclass(frozen=True)
class EquilibriumSolution:
    """An equilibrium: sender policy, both estimators, and closed-form costs."""

    sender: SenderPolicy
    receiver: EstimatorPolicy
    malicious: EstimatorPolicy
    receiver_mse: float
    malicious_mse: float
    sender_cost: float
    delta: float
    diagnostics: SolverDiagnostics = field(
        default_factory=lambda: SolverDiagnostics(eigenvalues=(), active_rank=0)
    )


def _spectral_roots(xi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Symmetric square root and inverse square root of a PD matrix."""
    lam, U = np.linalg.eigh(xi)
    if lam.min() <= 0:
        raise ValueError("conditional covariance is not positive definite")
    sqrt_lam = np.sqrt(lam)
    return (U * sqrt_lam) @ U.T, (U / sqrt_lam) @ U.T


def _orient_rows(L: np.ndarray) -> np.ndarray:
    """Flip row signs so the first significantly nonzero entry is positive.

    Eigenvector signs are arbitrary; this makes solver output deterministic.
    """
    L = L.copy()
    for i, row in enumerate(L):
        amax = np.abs(row).max()
        if amax == 0.0:
            continue
        lead = row[np.abs(row) > 1e-12 * amax]
        if lead.size and lead[0] < 0:
            L[i] = -row
    return L


def _objective_matrix(xi: np.ndarray, dv: float, n_x: int, n_w: int):
    xi_half, xi_inv_half = _spectral_roots(xi)
    weight = np.concatenate([-np.ones(n_x), dv * np.ones(n_w)])
    M = (xi_half * weight) @ xi_half
    M = 0.5 * (M + M.T)
    eigenvalues, vectors = np.linalg.eigh(M)
    return xi_half, xi_inv_half, eigenvalues, vectors


def lmmse_gains(
    model: GaussianModel, moments: MessageMoments
) -> tuple[EstimatorPolicy, EstimatorPolicy]:
    """Least-mean-square gains of the receiver (for x) and eavesdropper (for w).

    Both estimators observe the message y and the side information z; the
    optimal linear rule is the cross-covariance times the inverse
    observation covariance.

    Raises
    ------
    DegenerateMessageError
        If the (y, z) covariance is singular.
    """
    S, C_x, C_w = _costs.stacked_observation(model, moments)
    factor = _costs._cho_factor(S)
    G_x = scipy.linalg.cho_solve(factor, C_x.T).T
    G_w = scipy.linalg.cho_solve(factor, C_w.T).T
    n_y = model.dims.n_y
    receiver = EstimatorPolicy(gain_y=G_x[:, :n_y], gain_z=G_x[:, n_y:])
    malicious = EstimatorPolicy(gain_y=G_w[:, :n_y], gain_z=G_w[:, n_y:])
    return receiver, malicious


def _assemble(
    model: GaussianModel,
    sender: SenderPolicy,
    delta: float,
    diagnostics: SolverDiagnostics,
) -> EquilibriumSolution:
    moments = message_moments(model, sender)
    receiver, malicious = lmmse_gains(model, moments)
    breakdown = _costs.costs_from_moments(model, moments, delta)
    return EquilibriumSolution(
        sender=sender,
        receiver=receiver,
        malicious=malicious,
        receiver_mse=breakdown.receiver_mse,
        malicious_mse=breakdown.malicious_mse,
        sender_cost=breakdown.sender_cost,
        delta=delta,
        diagnostics=diagnostics,
    )


def solve_scalar(model: GaussianModel, delta) -> EquilibriumSolution:
    """Informative equilibrium for a scalar message (n_y = 1).

    The sender's gain is Xi^{-1/2} applied to the unit eigenvector of the
    smallest eigenvalue of Xi^{1/2} diag(-I, delta I) Xi^{1/2}, and the
    policy is deterministic: no noise is added.  The smallest eigenvalue is
    strictly negative for every delta >= 0, so the message always carries
    information.
    """
    d = model.dims
    if d.n_y != 1:
        raise ValueError(f"solve_scalar requires n_y = 1, got n_y = {d.n_y}; use solve_general")
    dv = _delta_value(delta)
    require_valid(model)
    xi = conditional_covariance(model).xi
    _, xi_inv_half, eigenvalues, vectors = _objective_matrix(xi, dv, d.n_x, d.n_w)
    if eigenvalues[0] >= 0:
        raise RuntimeError(
            "smallest eigenvalue is not negative; the conditional covariance "
            "degenerated (this cannot happen for a valid model)"
        )
    L = _orient_rows(vectors[:, :1].T)
    K = L @ xi_inv_half
    sender = SenderPolicy(
        K_x=K[:, : d.n_x],
        K_w=K[:, d.n_x :],
        V_vv=np.zeros((1, 1)),
        K_z=np.zeros((1, d.n_z)),
    )
    diagnostics = SolverDiagnostics(
        eigenvalues=tuple(float(v) for v in eigenvalues), active_rank=1
    )
    return _assemble(model, sender, dv, diagnostics)


def solve_general(model: GaussianModel, delta) -> EquilibriumSolution:
    """Informative equilibrium for any message dimension.

    Rows of K Xi^{1/2} are set to the orthonormal eigenvectors of the most
    negative eigenvalues of Xi^{1/2} diag(-I, delta I) Xi^{1/2} (at most
    n_y of them); remaining message coordinates are filled with independent
    unit noise, giving K Xi K^T + V_vv = I exactly.  The achieved objective
    is the sum of the used (negative) eigenvalues.

    Global optimality of this construction is falsifiable rather than
    assumed: ``verification.oracle_solve`` searches the same feasible set
    derivative-free, and the verification workflow treats any strictly
    better feasible point as evidence against the equilibrium.
    """
    d = model.dims
    dv = _delta_value(delta)
    require_valid(model)
    xi = conditional_covariance(model).xi
    _, xi_inv_half, eigenvalues, vectors = _objective_matrix(xi, dv, d.n_x, d.n_w)
    scale = max(1.0, float(np.abs(eigenvalues).max()))
    negative = int(np.sum(eigenvalues < -_EIG_ZERO_TOL * scale))
    active = min(d.n_y, negative)
    L = np.zeros((d.n_y, d.n_pair))
    if active:
        L[:active] = _orient_rows(vectors[:, :active].T)
    K = L @ xi_inv_half
    V_vv = np.eye(d.n_y) - K @ xi @ K.T
    V_vv = 0.5 * (V_vv + V_vv.T)
    sender = SenderPolicy(
        K_x=K[:, : d.n_x],
        K_w=K[:, d.n_x :],
        V_vv=V_vv,
        K_z=np.zeros((d.n_y, d.n_z)),
    )
    diagnostics = SolverDiagnostics(
        eigenvalues=tuple(float(v) for v in eigenvalues), active_rank=active
    )
    return _assemble(model, sender, dv, diagnostics)


def babbling_equilibrium(model: GaussianModel, delta=0.0) -> EquilibriumSolution:
    """Non-informative equilibrium: the message is pure noise and is ignored.

    The message density is fixed to standard Gaussian noise (any density
    yields an equivalent equilibrium).  Both observers estimate from the
    side information alone, so their errors equal the no-message baselines.
    The privacy ratio only enters the reported sender cost.
    """
    dv = _delta_value(delta)
    require_valid(model)
    d = model.dims
    A, B = conditional_gains(model)
    sender = SenderPolicy(
        K_x=np.zeros((d.n_y, d.n_x)),
        K_w=np.zeros((d.n_y, d.n_w)),
        V_vv=np.eye(d.n_y),
        K_z=np.zeros((d.n_y, d.n_z)),
    )
    receiver = EstimatorPolicy(gain_y=np.zeros((d.n_x, d.n_y)), gain_z=A)
    malicious = EstimatorPolicy(gain_y=np.zeros((d.n_w, d.n_y)), gain_z=B)
    b_x, b_w = _costs.baselines(model)
    xi = conditional_covariance(model).xi
    _, _, eigenvalues, _ = _objective_matrix(xi, dv, d.n_x, d.n_w)
    return EquilibriumSolution(
        sender=sender,
        receiver=receiver,
        malicious=malicious,
        receiver_mse=b_x,
        malicious_mse=b_w,
        sender_cost=b_x - dv * b_w,
        delta=dv,
        diagnostics=SolverDiagnostics(
            eigenvalues=tuple(float(v) for v in eigenvalues), active_rank=0
        ),
    )


def scale_equilibrium(
    model: GaussianModel, solution: EquilibriumSolution, kappa: np.ndarray
) -> EquilibriumSolution:
    """Equivalent equilibrium with the message transformed by an invertible map.

    The sender gains and noise become kappa K and kappa V_vv kappa^T; the
    estimator gains are recomputed from the transformed moments.  Because
    the transformation is invertible, it loses no information: both
    estimation errors (and hence the sender cost) are unchanged.
    """
    kappa = np.atleast_2d(np.asarray(kappa, dtype=float))
    n_y = solution.sender.n_y
    if kappa.shape != (n_y, n_y):
        raise ValueError(f"kappa must be {n_y}x{n_y}, got {kappa.shape}")
    if np.linalg.cond(kappa) > _KAPPA_MAX_CONDITION:
        raise ValueError("kappa is singular or too ill-conditioned to invert reliably")
    old = solution.sender
    V_vv = kappa @ old.V_vv @ kappa.T
    sender = SenderPolicy(
        K_x=kappa @ old.K_x,
        K_w=kappa @ old.K_w,
        V_vv=0.5 * (V_vv + V_vv.T),
        K_z=None if old.K_z is None else kappa @ old.K_z,
    )
    return _assemble(model, sender, solution.delta, solution.diagnostics)
