"""Independent validation of computed equilibria.

Nothing in here trusts the closed-form algebra: costs are re-estimated by
seeded Monte Carlo simulation, equilibria are attacked with random
unilateral deviations, the receiver/eavesdropper coalition objective is
re-optimized jointly, and the sender's constrained trace minimization is
re-solved by derivative-free random-restart search.  Deviation testing is
falsification, not proof: it samples the affine policy class (which is the
optimal class for this quadratic-Gaussian game) and reports the best
improvement found.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.optimize

from . import costs as _costs
from .equilibrium import (
    EquilibriumSolution,
    EstimatorPolicy,
    SenderPolicy,
    _delta_value,
    _spectral_roots,
    lmmse_gains,
)
from .model import (
    GaussianModel,
    MessageMoments,
    conditional_covariance,
    message_moments,
    require_valid,
)

__all__ = [
    "SimulationConfig",
    "DeviationReport",
    "CoalitionWeight",
    "OracleResult",
    "sample_game",
    "monte_carlo_costs",
    "MonteCarloResult",
    "check_sender_deviation",
    "check_estimator_optimality",
    "check_coalition_separation",
    "oracle_solve",
]

DEVIATION_TOL = 1e-8


@dataclass(frozen=True)
class SimulationConfig:
    """Sample count, seed, and streaming chunk size for Monte Carlo runs."""

    sample_count: int
    seed: int = 0
    chunk_size: int = 1 << 16

    def __post_init__(self):
        if self.sample_count < 1:
            raise ValueError(f"sample_count must be >= 1, got {self.sample_count}")
        if self.chunk_size < 1:
            raise ValueError(f"chunk_size must be >= 1, got {self.chunk_size}")


@dataclass(frozen=True)
class DeviationReport:
    """Outcome of a unilateral-deviation search for one player.

    ``best_improvement`` is the most negative cost change found (negative =
    the deviation is better for that player).  The report passes when no
    deviation improves by more than 1e-8 relative to the cost scale.
    """

    tested_player: str
    trials: int
    best_improvement: float
    passed: bool


@dataclass(frozen=True)
class CoalitionWeight:
    """Positive weight on the eavesdropper's error in the coalition objective."""

    vartheta: float

    def __post_init__(self):
        if not self.vartheta > 0:
            raise ValueError(f"vartheta must be > 0, got {self.vartheta}")


@dataclass(frozen=True)
class MonteCarloResult:
    """Empirical cost breakdown plus standard errors of the two MSE estimates."""

    costs: _costs.CostBreakdown
    receiver_se: float
    malicious_se: float
    sample_count: int


@dataclass(frozen=True)
class OracleResult:
    """Best feasible sender gain found by the derivative-free search."""

    K: np.ndarray
    objective: float
    sender_cost: float
    restarts: int


class _KahanSum:
    """Compensated accumulator; keeps 1e6-sample sums accurate near zero."""

    __slots__ = ("total", "_comp")

    def __init__(self):
        self.total = 0.0
        self._comp = 0.0

    def add(self, value: float) -> None:
        y = value - self._comp
        t = self.total + y
        self._comp = (t - self.total) - y
        self.total = t


def _psd_factor(V: np.ndarray) -> np.ndarray:
    """Factor F with F F^T = V for a PSD matrix (eigenvalue clipping at 0)."""
    if V.size == 0:
        return V.copy()
    lam, U = np.linalg.eigh(0.5 * (V + V.T))
    return U * np.sqrt(np.clip(lam, 0.0, None))


def sample_game(model: GaussianModel, policy: SenderPolicy, config: SimulationConfig):
    """Generate seeded realizations of (x, w, z, y), streamed in chunks.

    Yields tuples of arrays with shapes (m, n_x), (m, n_w), (m, n_z),
    (m, n_y).  The stream is fully reproducible from the config: the same
    seed and chunk size give bitwise-identical realizations.
    """
    require_valid(model)
    d = model.dims
    joint_factor = np.linalg.cholesky(model.joint_covariance())
    noise_factor = _psd_factor(policy.V_vv)
    K_z = policy.K_z if policy.K_z is not None else np.zeros((policy.n_y, d.n_z))
    rng = np.random.default_rng(config.seed)
    remaining = config.sample_count
    while remaining > 0:
        m = min(config.chunk_size, remaining)
        remaining -= m
        xwz = rng.standard_normal((m, d.n_joint)) @ joint_factor.T
        x = xwz[:, : d.n_x]
        w = xwz[:, d.n_x : d.n_pair]
        z = xwz[:, d.n_pair :]
        y = x @ policy.K_x.T + w @ policy.K_w.T + z @ K_z.T
        y += rng.standard_normal((m, policy.n_y)) @ noise_factor.T
        yield x, w, z, y


def monte_carlo_costs(
    model: GaussianModel,
    sender: SenderPolicy,
    receiver: EstimatorPolicy,
    malicious: EstimatorPolicy,
    delta,
    config: SimulationConfig,
) -> MonteCarloResult:
    """Empirical estimation errors of fixed estimator gains under a sender policy.

    Accumulates squared errors chunk by chunk with compensated summation;
    no samples are stored.  Standard errors are of the mean squared error.
    """
    dv = _delta_value(delta)
    sum_r, sumsq_r = _KahanSum(), _KahanSum()
    sum_m, sumsq_m = _KahanSum(), _KahanSum()
    n = 0
    for x, w, z, y in sample_game(model, sender, config):
        err_r = x - y @ receiver.gain_y.T - z @ receiver.gain_z.T
        err_m = w - y @ malicious.gain_y.T - z @ malicious.gain_z.T
        sq_r = np.einsum("ij,ij->i", err_r, err_r)
        sq_m = np.einsum("ij,ij->i", err_m, err_m)
        sum_r.add(float(sq_r.sum()))
        sumsq_r.add(float((sq_r * sq_r).sum()))
        sum_m.add(float(sq_m.sum()))
        sumsq_m.add(float((sq_m * sq_m).sum()))
        n += x.shape[0]

    mean_r = sum_r.total / n
    mean_m = sum_m.total / n
    var_r = max(sumsq_r.total / n - mean_r**2, 0.0)
    var_m = max(sumsq_m.total / n - mean_m**2, 0.0)
    b_x, b_w = _costs.baselines(model)
    breakdown = _costs.CostBreakdown(
        receiver_mse=mean_r,
        malicious_mse=mean_m,
        sender_cost=mean_r - dv * mean_m,
        baseline_receiver=b_x,
        baseline_malicious=b_w,
    )
    return MonteCarloResult(
        costs=breakdown,
        receiver_se=math.sqrt(var_r / n),
        malicious_se=math.sqrt(var_m / n),
        sample_count=n,
    )


def _report(player: str, trials: int, best: float, scale: float) -> DeviationReport:
    return DeviationReport(
        tested_player=player,
        trials=trials,
        best_improvement=best,
        passed=best >= -DEVIATION_TOL * scale,
    )


def _random_orthogonal(rng: np.random.Generator, n: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def check_sender_deviation(
    model: GaussianModel,
    solution: EquilibriumSolution,
    delta,
    trials: int = 1000,
    seed: int = 0,
    estimators: str = "best-response",
) -> DeviationReport:
    """Search for a sender policy that beats the solution's sender cost.

    Alternative affine policies are sampled in several families: gains
    perturbed around the solution and rescaled onto or inside the
    constraint ellipsoid with the matching normalization noise, fully
    random normalized policies, and unnormalized policies with arbitrary
    gains and random noise covariances.

    ``estimators`` selects how the observers respond to a deviation:
    ``"best-response"`` recomputes the LMMSE gains for each alternative
    policy (the informative equilibria are defined against best-responding
    observers), while ``"fixed"`` keeps the solution's estimator gains (the
    babbling equilibria are sustained by observers that ignore the message
    no matter what the sender does).
    """
    if estimators not in ("best-response", "fixed"):
        raise ValueError("estimators must be 'best-response' or 'fixed'")
    dv = _delta_value(delta)
    require_valid(model)
    d = model.dims
    xi = conditional_covariance(model).xi
    xi_half, xi_inv_half = _spectral_roots(xi)
    K0 = solution.sender.gain_matrix()
    rng = np.random.default_rng(seed)
    scale = max(1.0, abs(solution.sender_cost))
    identity = np.eye(d.n_y)

    def deviation_cost(K: np.ndarray, V_vv: np.ndarray) -> float:
        policy = SenderPolicy(
            K_x=K[:, : d.n_x],
            K_w=K[:, d.n_x :],
            V_vv=V_vv,
            K_z=np.zeros((d.n_y, d.n_z)),
        )
        moments = message_moments(model, policy)
        if estimators == "fixed":
            breakdown = _costs.costs_with_gains(
                model, moments, solution.receiver, solution.malicious, dv
            )
        else:
            breakdown = _costs.costs_from_moments(model, moments, dv)
        return breakdown.sender_cost

    best = 0.0
    for trial in range(trials):
        family = trial % 4
        if family in (0, 1):
            # local perturbation, rescaled onto or inside the ellipsoid
            sigma = 10.0 ** rng.uniform(-3, 0)
            K = K0 + sigma * rng.standard_normal(K0.shape)
            radius = float(np.linalg.eigvalsh(K @ xi @ K.T).max())
            if radius <= 0:
                continue
            shrink = 1.0 if family == 0 else rng.uniform(0.1, 1.0)
            K = K * (shrink / math.sqrt(radius))
            V_vv = identity - K @ xi @ K.T
            V_vv = 0.5 * (V_vv + V_vv.T)
        elif family == 2:
            # fully random normalized policy: K Xi K^T = R, V_vv = I - R
            r_eigs = rng.uniform(0.0, 1.0, size=d.n_y)
            Q_r = _random_orthogonal(rng, d.n_y)
            R_half = Q_r * np.sqrt(r_eigs)
            basis = _random_orthogonal(rng, d.n_pair)[: d.n_y]
            K = R_half @ basis @ xi_inv_half
            V_vv = identity - (Q_r * r_eigs) @ Q_r.T
            V_vv = 0.5 * (V_vv + V_vv.T)
        else:
            # unnormalized: arbitrary gain scale, random PD noise
            K = 10.0 ** rng.uniform(-1, 1) * rng.standard_normal(K0.shape)
            G = rng.standard_normal((d.n_y, d.n_y))
            V_vv = G @ G.T + 1e-6 * identity
        improvement = deviation_cost(K, V_vv) - solution.sender_cost
        best = min(best, improvement)
    return _report("sender", trials, best, scale)


def check_estimator_optimality(
    model: GaussianModel,
    moments: MessageMoments,
    receiver: EstimatorPolicy,
    malicious: EstimatorPolicy,
    trials: int = 200,
    seed: int = 0,
) -> DeviationReport:
    """Check that neither observer can improve by changing its linear gains.

    Tests the orthogonality principle directly (the exact LMMSE correction
    is tried as the first deviation, so a suboptimal gain is always
    caught) and then random gain perturbations at several magnitudes.
    Covers both players; the report carries the one with the worse (most
    negative) improvement.
    """
    S, C_x, C_w = _costs.stacked_observation(model, moments)
    factor = _costs._cho_factor(S)
    rng = np.random.default_rng(seed)

    def player_best(G: np.ndarray, C: np.ndarray) -> float:
        # cost(G + D) - cost(G) = 2 tr(D (S G^T - C^T)) + tr(D S D^T)
        grad = G @ S - C
        exact = scipy.linalg.cho_solve(factor, -grad.T).T  # step to the LMMSE optimum
        best_local = 0.0
        deviations = [exact]
        norm = max(1.0, float(np.abs(G).max()))
        for _ in range(max(trials - 1, 0)):
            sigma = 10.0 ** rng.uniform(-4, 0)
            deviations.append(sigma * norm * rng.standard_normal(G.shape))
        for D in deviations:
            change = 2.0 * float(np.sum(D * grad)) + float(np.sum((D @ S) * D))
            best_local = min(best_local, change)
        return best_local

    G_r = receiver.stacked()
    G_m = malicious.stacked()
    best_r = player_best(G_r, C_x)
    best_m = player_best(G_m, C_w)
    base_r = float(np.trace(model.V_xx) - 2 * np.sum(G_r * C_x) + np.sum((G_r @ S) * G_r))
    base_m = float(np.trace(model.V_ww) - 2 * np.sum(G_m * C_w) + np.sum((G_m @ S) * G_m))
    if best_m < best_r:
        return _report("malicious", trials, best_m, max(1.0, abs(base_m)))
    return _report("receiver", trials, best_r, max(1.0, abs(base_r)))


def check_coalition_separation(
    model: GaussianModel,
    solution: EquilibriumSolution,
    delta,
    weight: CoalitionWeight | float,
    tol: float = 1e-9,
) -> bool:
    """Verify that the joint receiver + eavesdropper objective separates.

    Minimizes E|x - G_x s|^2 + vartheta E|w - G_w s|^2 over both gain
    matrices at once (one joint linear system in all gain entries) and
    checks that the joint optimum coincides with the solution's individual
    estimator gains.  Holds for every vartheta > 0, which is what makes the
    coalition formulation equivalent to separate players.
    """
    vartheta = weight.vartheta if isinstance(weight, CoalitionWeight) else float(weight)
    if not vartheta > 0:
        raise ValueError(f"vartheta must be > 0, got {vartheta}")
    _delta_value(delta)
    moments = message_moments(model, solution.sender)
    S, C_x, C_w = _costs.stacked_observation(model, moments)
    n_obs = S.shape[0]
    d = model.dims
    # joint normal equations over the concatenated row-major vec of (G_x, G_w)
    H = np.zeros(((d.n_x + d.n_w) * n_obs, (d.n_x + d.n_w) * n_obs))
    H[: d.n_x * n_obs, : d.n_x * n_obs] = np.kron(np.eye(d.n_x), S)
    H[d.n_x * n_obs :, d.n_x * n_obs :] = vartheta * np.kron(np.eye(d.n_w), S)
    rhs = np.concatenate([C_x.ravel(), vartheta * C_w.ravel()])
    g = np.linalg.solve(H, rhs)
    G_x = g[: d.n_x * n_obs].reshape(d.n_x, n_obs)
    G_w = g[d.n_x * n_obs :].reshape(d.n_w, n_obs)
    diff = max(
        float(np.abs(G_x - solution.receiver.stacked()).max()),
        float(np.abs(G_w - solution.malicious.stacked()).max()),
    )
    return diff <= tol


def oracle_solve(
    model: GaussianModel, delta, restarts: int = 50, seed: int = 0
) -> OracleResult:
    """Derivative-free search for the sender's constrained trace minimization.

    Random-restart simplex refinement over the entries of K, minimizing
    trace(K Xi D Xi K^T) subject to K Xi K^T <= I.  Infeasible candidates
    are projected by rescaling with the largest eigenvalue of K Xi K^T.
    Exists purely to cross-examine the spectral construction in
    ``solve_general``; it shares no code path with it.
    """
    dv = _delta_value(delta)
    require_valid(model)
    d = model.dims
    xi = conditional_covariance(model).xi
    weight = np.concatenate([-np.ones(d.n_x), dv * np.ones(d.n_w)])
    ZD = (xi * weight) @ xi  # Xi D Xi
    ZD = 0.5 * (ZD + ZD.T)
    shape = (d.n_y, d.n_pair)

    def project(K: np.ndarray) -> np.ndarray:
        radius = float(np.linalg.eigvalsh(K @ xi @ K.T).max())
        if radius > 1.0:
            K = K / math.sqrt(radius)
        return K

    def objective(flat: np.ndarray) -> float:
        K = project(flat.reshape(shape))
        return float(np.sum((K @ ZD) * K))

    rng = np.random.default_rng(seed)
    best_val = math.inf
    best_K = np.zeros(shape)
    for _ in range(max(restarts, 1)):
        start = project(rng.standard_normal(shape)).ravel()
        result = scipy.optimize.minimize(
            objective,
            start,
            method="Nelder-Mead",
            options={
                "xatol": 1e-10,
                "fatol": 1e-12,
                "maxfev": 4000 * d.n_y,
                "adaptive": True,
            },
        )
        if result.fun < best_val:
            best_val = float(result.fun)
            best_K = project(result.x.reshape(shape))

    V_vv = np.eye(d.n_y) - best_K @ xi @ best_K.T
    policy = SenderPolicy(
        K_x=best_K[:, : d.n_x],
        K_w=best_K[:, d.n_x :],
        V_vv=0.5 * (V_vv + V_vv.T),
        K_z=np.zeros((d.n_y, d.n_z)),
    )
    breakdown = _costs.costs_from_moments(model, message_moments(model, policy), dv)
    return OracleResult(
        K=best_K,
        objective=float(np.sum((best_K @ ZD) * best_K)),
        sender_cost=breakdown.sender_cost,
        restarts=max(restarts, 1),
    )
