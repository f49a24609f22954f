"""Joint Gaussian model of state, private information, and side information.

Stores the second-moment blocks of a zero-mean Gaussian vector (x, w, z):
the state x a sender reports on, the private information w that is
correlated with it, and the side information z available to the observers.
Provides the derived second-moment algebra the rest of the package builds
on: the conditional covariance of (x, w) given z and the cross-covariances
induced by an affine message policy.

No side information is supported through zero-width blocks (``n_z = 0``),
so every formula runs through the same code path whether or not z exists.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from .equilibrium import SenderPolicy

__all__ = [
    "Dimensions",
    "GaussianModel",
    "ConditionalCovariance",
    "MessageMoments",
    "ValidationReport",
    "Scenario",
    "ModelValidationError",
    "ScenarioFormatError",
    "validate_model",
    "conditional_covariance",
    "conditional_gains",
    "message_moments",
    "scenario_from_dict",
    "load_scenario",
]

PD_EIGENVALUE_TOL = 1e-10


class ModelValidationError(ValueError):
    """A covariance block is inconsistent or the model is not valid."""


class ScenarioFormatError(ValueError):
    """A scenario document does not follow the expected JSON schema."""


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.flags.writeable = False
    return a


def _check_shape(name: str, a: np.ndarray, shape: tuple[int, int]) -> None:
    if a.ndim != 2 or a.shape != shape:
        raise ModelValidationError(
            f"block {name} has shape {a.shape}, expected {shape}"
        )


@dataclass(frozen=True)
class Dimensions:
    """Dimensions of the game variables: state, private info, side info, message."""

    n_x: int
    n_w: int
    n_z: int
    n_y: int

    def __post_init__(self):
        if self.n_x < 1:
            raise ModelValidationError(f"n_x must be >= 1, got {self.n_x}")
        if self.n_w < 1:
            raise ModelValidationError(f"n_w must be >= 1, got {self.n_w}")
        if self.n_y < 1:
            raise ModelValidationError(f"n_y must be >= 1, got {self.n_y}")
        if self.n_z < 0:
            raise ModelValidationError(f"n_z must be >= 0, got {self.n_z}")

    @property
    def n_pair(self) -> int:
        """Dimension of the stacked (x, w) vector."""
        return self.n_x + self.n_w

    @property
    def n_joint(self) -> int:
        """Dimension of the stacked (x, w, z) vector."""
        return self.n_x + self.n_w + self.n_z


@dataclass(frozen=True)
class GaussianModel:
    """Second-moment blocks of the zero-mean Gaussian vector (x, w, z).

    Blocks are stored individually; the joint covariance is assembled on
    demand.  Instances are immutable (arrays are marked read-only) and all
    operations on them are pure, so models can be shared across threads.

    Parameters
    ----------
    dims : Dimensions
    V_xx, V_ww, V_zz : ndarray
        Variance blocks of x, w and z (symmetric).
    V_xw, V_xz, V_wz : ndarray
        Cross-covariance blocks E{x w^T}, E{x z^T}, E{w z^T}.
    """

    dims: Dimensions
    V_xx: np.ndarray
    V_ww: np.ndarray
    V_zz: np.ndarray
    V_xw: np.ndarray
    V_xz: np.ndarray
    V_wz: np.ndarray

    def __post_init__(self):
        d = self.dims
        for name, shape in (
            ("V_xx", (d.n_x, d.n_x)),
            ("V_ww", (d.n_w, d.n_w)),
            ("V_zz", (d.n_z, d.n_z)),
            ("V_xw", (d.n_x, d.n_w)),
            ("V_xz", (d.n_x, d.n_z)),
            ("V_wz", (d.n_w, d.n_z)),
        ):
            a = np.asarray(getattr(self, name), dtype=float)
            _check_shape(name, a, shape)
            object.__setattr__(self, name, _freeze(a))

    def pair_covariance(self) -> np.ndarray:
        """Covariance of the stacked (x, w) vector."""
        return np.block([[self.V_xx, self.V_xw], [self.V_xw.T, self.V_ww]])

    def side_cross(self) -> np.ndarray:
        """Stacked cross-covariance E{(x, w) z^T}, shape (n_x + n_w, n_z)."""
        return np.concatenate([self.V_xz, self.V_wz], axis=0)

    def joint_covariance(self) -> np.ndarray:
        """Full covariance of (x, w, z), assembled from the blocks."""
        top = np.concatenate([self.pair_covariance(), self.side_cross()], axis=1)
        bottom = np.concatenate([self.side_cross().T, self.V_zz], axis=1)
        return np.concatenate([top, bottom], axis=0)


@dataclass(frozen=True)
class ConditionalCovariance:
    """Covariance of the stacked (x, w) vector given the side information z."""

    xi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "xi", _freeze(np.asarray(self.xi, dtype=float)))


@dataclass(frozen=True)
class MessageMoments:
    """Cross-covariances induced by a message policy.

    ``V_yy`` is the message covariance; ``V_xy``, ``V_wy`` and ``V_zy`` are
    the cross-covariances of x, w and z with the message y.
    """

    V_yy: np.ndarray
    V_xy: np.ndarray
    V_wy: np.ndarray
    V_zy: np.ndarray

    def __post_init__(self):
        for name in ("V_yy", "V_xy", "V_wy", "V_zy"):
            object.__setattr__(
                self, name, _freeze(np.asarray(getattr(self, name), dtype=float))
            )


@dataclass(frozen=True)
class ValidationReport:
    """Result of model validation: ``ok`` or a list of violated properties."""

    ok: bool
    violations: tuple[str, ...] = ()


@dataclass(frozen=True)
class Scenario:
    """A loaded scenario: the Gaussian model plus its default privacy ratio."""

    model: GaussianModel
    delta: float


def _solve_zz(model: GaussianModel, rhs: np.ndarray) -> np.ndarray:
    """V_zz^{-1} rhs, with the zero-width convention for n_z = 0."""
    if model.dims.n_z == 0:
        return np.zeros((0, rhs.shape[1]))
    return np.linalg.solve(model.V_zz, rhs)


def validate_model(model: GaussianModel, tol: float = PD_EIGENVALUE_TOL) -> ValidationReport:
    """Check that the model is a valid joint Gaussian second-moment description.

    The assembled (x, w, z) covariance must be symmetric and positive
    definite: its smallest eigenvalue must exceed ``tol`` relative to the
    largest diagonal entry.

    Returns
    -------
    ValidationReport
        ``ok=True`` if all properties hold, otherwise the list of violations.
    """
    violations = []
    for name in ("V_xx", "V_ww", "V_zz"):
        block = getattr(model, name)
        if block.size and not np.allclose(block, block.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(block).max())):
            violations.append(f"block {name} is not symmetric")
    if not violations:
        joint = model.joint_covariance()
        if joint.size:
            scale = max(1.0, float(np.max(np.diag(joint))))
            min_eig = float(np.linalg.eigvalsh(joint).min())
            if min_eig <= tol * scale:
                violations.append(
                    "joint covariance of (x, w, z) is not positive definite "
                    f"(min eigenvalue {min_eig:.3e}, threshold {tol * scale:.3e})"
                )
    return ValidationReport(ok=not violations, violations=tuple(violations))


def require_valid(model: GaussianModel, tol: float = PD_EIGENVALUE_TOL) -> None:
    """Raise ``ModelValidationError`` if the model fails validation."""
    report = validate_model(model, tol=tol)
    if not report.ok:
        raise ModelValidationError("; ".join(report.violations))


def conditional_covariance(model: GaussianModel) -> ConditionalCovariance:
    """Covariance of (x, w) given z: the Schur complement of V_zz.

    With no side information (``n_z = 0``) this is simply the covariance of
    the stacked (x, w) vector.
    """
    require_valid(model)
    pair = model.pair_covariance()
    if model.dims.n_z == 0:
        return ConditionalCovariance(xi=pair)
    cross = model.side_cross()
    xi = pair - cross @ _solve_zz(model, cross.T)
    return ConditionalCovariance(xi=0.5 * (xi + xi.T))


def conditional_gains(model: GaussianModel) -> tuple[np.ndarray, np.ndarray]:
    """Gains of the conditional means E{x|z} = A z and E{w|z} = B z.

    Returns
    -------
    (A, B) : pair of ndarray
        Shapes (n_x, n_z) and (n_w, n_z); zero-width when n_z = 0.
    """
    A = _solve_zz(model, model.V_xz.T).T
    B = _solve_zz(model, model.V_wz.T).T
    return A, B


def message_moments(model: GaussianModel, policy: "SenderPolicy") -> MessageMoments:
    """Cross-covariances of (x, w, z) with the message y under an affine policy.

    The policy is y = K_x x + K_w w + K_z z + v with v ~ N(0, V_vv)
    independent of (x, w, z).  A ``K_z`` of ``None`` means zero.
    """
    d = model.dims
    K_x = np.asarray(policy.K_x, dtype=float)
    K_w = np.asarray(policy.K_w, dtype=float)
    K_z = policy.K_z
    K_z = np.zeros((d.n_y, d.n_z)) if K_z is None else np.asarray(K_z, dtype=float)
    V_vv = np.asarray(policy.V_vv, dtype=float)
    _check_shape("K_x", K_x, (d.n_y, d.n_x))
    _check_shape("K_w", K_w, (d.n_y, d.n_w))
    _check_shape("K_z", K_z, (d.n_y, d.n_z))
    _check_shape("V_vv", V_vv, (d.n_y, d.n_y))

    K = np.concatenate([K_x, K_w, K_z], axis=1)
    joint = model.joint_covariance()
    cross = joint @ K.T          # E{(x, w, z) y^T}, stacked
    V_yy = K @ cross[: d.n_joint] + V_vv
    return MessageMoments(
        V_yy=0.5 * (V_yy + V_yy.T),
        V_xy=cross[: d.n_x],
        V_wy=cross[d.n_x : d.n_pair],
        V_zy=cross[d.n_pair :],
    )


def _as_block(name: str, value, shape: tuple[int, int]) -> np.ndarray:
    if shape[0] == 0 or shape[1] == 0:
        if value not in (None, []):
            raise ScenarioFormatError(f"block {name} must be omitted when n_z = 0")
        return np.zeros(shape)
    if value is None:
        raise ScenarioFormatError(f"missing required block {name}")
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ScenarioFormatError(f"block {name} is not a numeric matrix: {exc}") from exc
    if arr.shape != shape:
        raise ScenarioFormatError(f"block {name} has shape {arr.shape}, expected {shape}")
    return arr


def scenario_from_dict(doc: dict) -> Scenario:
    """Build a Scenario from a parsed JSON document.

    Expected keys: ``dims`` with n_x, n_w, n_z, n_y; row-major nested
    arrays ``V_xx``, ``V_ww``, ``V_xw`` (and ``V_zz``, ``V_xz``, ``V_wz``
    when n_z > 0); and a nonnegative ``delta``.

    Raises
    ------
    ScenarioFormatError
        If the document structure is malformed.
    ModelValidationError
        If the blocks do not form a positive-definite joint covariance.
    """
    if not isinstance(doc, dict):
        raise ScenarioFormatError("scenario document must be a JSON object")
    dims_doc = doc.get("dims")
    if not isinstance(dims_doc, dict):
        raise ScenarioFormatError("missing or malformed 'dims' object")
    try:
        dims = Dimensions(
            n_x=int(dims_doc["n_x"]),
            n_w=int(dims_doc["n_w"]),
            n_z=int(dims_doc["n_z"]),
            n_y=int(dims_doc["n_y"]),
        )
    except KeyError as exc:
        raise ScenarioFormatError(f"dims is missing key {exc}") from exc
    except (TypeError, ValueError, ModelValidationError) as exc:
        raise ScenarioFormatError(f"malformed dims: {exc}") from exc

    try:
        model = GaussianModel(
            dims=dims,
            V_xx=_as_block("V_xx", doc.get("V_xx"), (dims.n_x, dims.n_x)),
            V_ww=_as_block("V_ww", doc.get("V_ww"), (dims.n_w, dims.n_w)),
            V_zz=_as_block("V_zz", doc.get("V_zz"), (dims.n_z, dims.n_z)),
            V_xw=_as_block("V_xw", doc.get("V_xw"), (dims.n_x, dims.n_w)),
            V_xz=_as_block("V_xz", doc.get("V_xz"), (dims.n_x, dims.n_z)),
            V_wz=_as_block("V_wz", doc.get("V_wz"), (dims.n_w, dims.n_z)),
        )
    except ModelValidationError as exc:
        raise ScenarioFormatError(str(exc)) from exc

    delta = doc.get("delta")
    if not isinstance(delta, (int, float)) or isinstance(delta, bool) or delta < 0:
        raise ScenarioFormatError("'delta' must be a nonnegative number")

    require_valid(model)
    return Scenario(model=model, delta=float(delta))


def load_scenario(path: str | Path) -> Scenario:
    """Load and validate a scenario JSON file."""
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ScenarioFormatError(f"{path}: invalid JSON: {exc}") from exc
    return scenario_from_dict(doc)
