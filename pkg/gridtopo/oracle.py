"""
Reference solver for the same convex program the ALM solves,

    min psi(G, B~) + lambda_g tr((I - 11')G) + lambda_b tr((I - 11')B~)
    s.t. G, B~ symmetric, zero row sums, non-positive off-diagonals,

by projected gradient descent. The projection onto the constraint set is
computed with Dykstra's algorithm. Slow, simple and only meant for small M.
"""

import dataclasses

import numpy as np

from gridtopo.config import OracleConfig
from gridtopo.errors import DimensionError, DivergenceError
from gridtopo.lapcore import project_to_laplacian
from gridtopo.models import QuadraticForm, grad_objective, regularized_objective
from gridtopo.utils import logger as _logger
from gridtopo.utils import commutation_matrix, unvec, vec

logger = _logger.getChild('oracle')

MAX_ORACLE_M = 8
MAX_HALVINGS = 60


@dataclasses.dataclass(frozen=True, eq=False)
class OracleReport:
    g: np.ndarray | None
    b_tilde: np.ndarray
    objective: float
    iterations: int
    converged: bool
    objective_history: list[float]

    def to_dict(self) -> dict:
        return {
            'objective': self.objective,
            'iterations': self.iterations,
            'converged': self.converged,
            'estimates_g': self.g is not None,
            'objective_history': self.objective_history,
        }


def _project_affine(x: np.ndarray) -> np.ndarray:
    """Orthogonal projection onto {symmetric, zero row sums}: J sym(x) J"""
    centred = (x + x.T) / 2
    centred = centred - centred.mean(axis=1, keepdims=True)
    centred = centred - centred.mean(axis=0, keepdims=True)
    return centred


def _project_cone(x: np.ndarray) -> np.ndarray:
    """Clip the off-diagonal entries to <= 0"""
    out = np.minimum(x, 0.0)
    np.fill_diagonal(out, np.diag(x))
    return out


def _violation(x: np.ndarray) -> float:
    offdiag = ~np.eye(x.shape[0], dtype=bool)
    return max(
        float(np.max(np.abs(x.sum(axis=1)), initial=0.0)),
        float(np.max(np.abs(x - x.T), initial=0.0)),
        float(np.max(x[offdiag], initial=0.0)),
    )


def project_feasible(a: np.ndarray, iters: int = 200, tol: float = 1e-13) -> np.ndarray:
    """
    Euclidean projection of a onto the Laplacian set by Dykstra's
    alternating projections between the affine part and the sign cone.
    Stops early once the iterate moves less than, and violates the
    constraints by less than, tol * max(1, ||a||_F).
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f'Expected a square matrix, got shape {a.shape}')
    scale = max(1.0, float(np.linalg.norm(a)))

    x = a.copy()
    p = np.zeros_like(a)
    q = np.zeros_like(a)
    for _ in range(iters):
        y = _project_affine(x + p)
        p = x + p - y
        x_next = _project_cone(y + q)
        q = y + q - x_next
        moved = float(np.linalg.norm(x_next - x))
        x = x_next
        if moved <= tol * scale and _violation(x) <= tol * scale:
            break
    # x is within tol of the set; snap it onto it exactly
    return project_to_laplacian(x).entries.copy()


def affine_projector(m: int) -> np.ndarray:
    """(J kron J)(I + K)/2: vec-space form of x -> J sym(x) J"""
    j = np.eye(m) - np.ones((m, m)) / m
    return np.kron(j, j) @ (np.eye(m * m) + commutation_matrix(m)) / 2


def restricted_hessian(q: QuadraticForm) -> np.ndarray:
    """
    The Hessian seen along the affine part of the constraint set. Every
    iterate stays in that set, so its top eigenvalue is a valid step bound.
    """
    p = affine_projector(q.m)
    if q.estimates_g:
        zero = np.zeros_like(p)
        p = np.block([[p, zero], [zero, p]])
    return p @ q.hessian() @ p


def _power_iteration(h: np.ndarray, iters: int) -> float:
    """Largest eigenvalue of a symmetric PSD matrix"""
    if not np.any(h):
        return 0.0
    x = np.linspace(1.0, 2.0, h.shape[0])
    x /= np.linalg.norm(x)
    value = 0.0
    for _ in range(iters):
        y = h @ x
        norm = float(np.linalg.norm(y))
        if norm == 0:
            return 0.0
        x = y / norm
        value = norm
    # power iteration converges from below, pad it slightly
    return 1.01 * value


def solve(
    q: QuadraticForm,
    lambda_g: float,
    lambda_b: float,
    cfg: OracleConfig | None = None,
    start: tuple[np.ndarray | None, np.ndarray] | None = None,
) -> OracleReport:
    """Projected gradient descent with step 1/L and halving on increase"""
    cfg = cfg or OracleConfig()
    m = q.m
    if m > MAX_ORACLE_M:
        raise DimensionError(f'The oracle is for M <= {MAX_ORACLE_M}, got M={m}')
    estimates_g = q.estimates_g
    penalty = vec(np.eye(m) - np.ones((m, m)))

    if start is None:
        g, b = np.zeros((m, m)), np.zeros((m, m))
    else:
        g = project_feasible(start[0]) if estimates_g and start[0] is not None else np.zeros((m, m))
        b = project_feasible(start[1])

    def objective(g_, b_):
        value = regularized_objective(q, g_ if estimates_g else None, b_, lambda_g, lambda_b)
        if not np.isfinite(value):
            raise DivergenceError(f'Oracle objective became {value}')
        return value

    curvature = _power_iteration(restricted_hessian(q), cfg.power_iters)
    step = 1.0 / curvature if curvature > 0 else 1.0
    f = objective(g, b)
    history = [f]
    converged = False

    iteration = 0
    for iteration in range(1, cfg.max_iters + 1):  # noqa: B007
        grad_g, grad_b = grad_objective(q, g, b)
        grad_g = grad_g + lambda_g * penalty
        grad_b = grad_b + lambda_b * penalty

        t = step
        for _ in range(MAX_HALVINGS):
            b_next = project_feasible(b - t * unvec(grad_b, m), cfg.dykstra_iters, cfg.dykstra_tol)
            g_next = (
                project_feasible(g - t * unvec(grad_g, m), cfg.dykstra_iters, cfg.dykstra_tol)
                if estimates_g
                else g
            )
            f_next = objective(g_next, b_next)
            if f_next <= f:
                break
            t /= 2
        else:
            # no decrease at any step size: stationary to working precision
            converged = True
            break

        g, b = g_next, b_next
        done = abs(f - f_next) <= cfg.tol * max(1.0, abs(f))
        f = f_next
        history.append(f)
        if done:
            converged = True
            break

    logger.debug(f'Oracle finished after {iteration} iterations, objective {f:.12g}')
    return OracleReport(
        g=g if estimates_g else None,
        b_tilde=b,
        objective=f,
        iterations=iteration,
        converged=converged,
        objective_history=history,
    )
