"""
Augmented Lagrangian solver for the Laplacian-constrained, l1-regularized
least-squares estimate of (G, B~).

The primal step minimises the scaled augmented Lagrangian over one matrix
at a time in closed form: two linear solves per matrix, (H + rho E) and
(H + rho (E + I)), picked entry-wise by the mask of active inequality
multipliers. The dual step is plain gradient ascent.
"""

import dataclasses
from functools import cached_property

import numpy as np
from scipy import linalg

from gridtopo.config import AlmConfig, ModelKind
from gridtopo.errors import InsufficientDataError, SingularSystemError
from gridtopo.lapcore import RealLaplacian, project_to_laplacian, threshold_offdiag
from gridtopo.models import (
    MeasurementSet,
    QuadraticForm,
    build_quadratic,
    default_lambda,
    regularized_objective,
)
from gridtopo.utils import commutation_matrix, unvec, vec
from gridtopo.utils import logger as _logger

logger = _logger.getChild('alm')

# log a progress line every this many iterations (DEBUG)
PROGRESS_EVERY = 50


@dataclasses.dataclass(frozen=True, eq=False)
class AlmState:
    """Primal iterates and scaled multipliers; lam_* are zero on the diagonal"""

    g: np.ndarray
    b_tilde: np.ndarray
    mu_g: np.ndarray
    mu_b: np.ndarray
    v_g: np.ndarray
    v_b: np.ndarray
    lam_g: np.ndarray
    lam_b: np.ndarray
    rho: float
    estimates_g: bool = True
    iter: int = 0  # noqa: A003

    @classmethod
    def start(
        cls,
        g0: np.ndarray,
        b0: np.ndarray,
        rho: float,
        estimates_g: bool = True,
    ) -> 'AlmState':
        m = b0.shape[0]
        return cls(
            g=np.array(g0, dtype=float),
            b_tilde=np.array(b0, dtype=float),
            mu_g=np.zeros(m),
            mu_b=np.zeros(m),
            v_g=np.zeros((m, m)),
            v_b=np.zeros((m, m)),
            lam_g=np.zeros((m, m)),
            lam_b=np.zeros((m, m)),
            rho=rho,
            estimates_g=estimates_g,
        )

    @property
    def m(self) -> int:
        return self.b_tilde.shape[0]


@dataclasses.dataclass(frozen=True, eq=False)
class AlmReport:
    g_hat: RealLaplacian | None
    b_hat_tilde: RealLaplacian
    iterations: int
    converged: bool
    # (||dG||_F^2, ||dB~||_F^2) per iteration
    change_history: list[tuple[float, float]]
    # regularized objective at the raw iterates
    objective_history: list[float]
    # regularized objective after projection, before thresholding
    objective: float
    rho: float
    lambda_g: float
    lambda_b: float
    feasibility: dict[str, dict[str, float]]

    def to_dict(self) -> dict:
        return {
            'iterations': self.iterations,
            'converged': self.converged,
            'objective': self.objective,
            'rho': self.rho,
            'lambda_g': self.lambda_g,
            'lambda_b': self.lambda_b,
            'estimates_g': self.g_hat is not None,
            'feasibility': self.feasibility,
            'change_history': [list(c) for c in self.change_history],
            'objective_history': self.objective_history,
        }


def init_from_samples(meas: MeasurementSet) -> tuple[np.ndarray, np.ndarray]:
    """
    Starting Laplacians from the sample covariances of Re{x} and Im{x}, with
    x the voltage phasors (rebuilt from |v| and theta for DLPF / DC data):
    positive off-diagonals removed, then the diagonal shifted to zero row sums.
    """
    if meas.n_samples < 1:
        raise InsufficientDataError('Need at least one sample to initialise')
    x = meas.complex_voltages()

    def laplacian_from_covariance(data: np.ndarray) -> np.ndarray:
        centred = data - data.mean(axis=0)
        s = centred.T @ centred / data.shape[0]
        s = (s + s.T) / 2
        ddiag = np.diag(np.diag(s))
        out = ddiag - np.maximum(ddiag - s, 0.0)
        out -= np.diag(out.sum(axis=1))
        return out

    return laplacian_from_covariance(np.real(x)), laplacian_from_covariance(np.imag(x))


def build_e_matrix(m: int) -> np.ndarray:
    """
    E = (11') kron I + 2I - 2K, the Hessian of the two equality penalties:
    E vec(X) = vec(X 11' + 2X - 2X')
    """
    mm = m * m
    return np.kron(np.ones((m, m)), np.eye(m)) + 2 * np.eye(mm) - 2 * commutation_matrix(m)


def gamma_vector(mu: np.ndarray, v_mult: np.ndarray, lam: float, m: int) -> np.ndarray:
    """vec(mu 1' + (V - V') + lambda (I - 11'))"""
    ones = np.ones(m)
    return vec(
        np.outer(mu, ones) + (v_mult - v_mult.T) + lam * (np.eye(m) - np.outer(ones, ones)),
    )


def effective_rho(q: QuadraticForm, cfg: AlmConfig) -> float:
    """cfg.rho, scaled by the mean diagonal curvature of the data term when relative"""
    if not cfg.rho_relative:
        return cfg.rho
    mm = q.h4_mat.shape[0]
    blocks = [q.h4_mat, q.h1_mat] if q.estimates_g else [q.h4_mat]
    curvature = float(np.mean([np.trace(h) for h in blocks])) / mm
    if curvature <= 0 or not np.isfinite(curvature):
        return cfg.rho
    return cfg.rho * curvature


def _cho_factor(a: np.ndarray, jitter: float, what: str):
    try:
        return linalg.cho_factor(a, check_finite=False)
    except linalg.LinAlgError:
        pass
    shift = jitter * max(float(np.trace(a)), 1.0) / a.shape[0]
    logger.debug(f'{what} not positive definite, retrying with jitter {shift:.3g}')
    try:
        return linalg.cho_factor(a + shift * np.eye(a.shape[0]), check_finite=False)
    except linalg.LinAlgError as e:
        raise SingularSystemError(f'{what} is singular even with jitter {shift:.3g}') from e


class BlockSystem:
    """
    Factorizations for one primal block, built once per run: the penalized
    Hessian H + rho E (inactive inequality multipliers) and H + rho (E + I)
    (active ones). The latest active-set factorization is cached.
    """

    def __init__(self, h: np.ndarray, rho: float, jitter: float, name: str):
        self.h = h
        self.rho = rho
        self.jitter = jitter
        self.name = name
        self._active_key: bytes | None = None
        self._active_factor = None
        self.factorizations = 0

    @cached_property
    def e_matrix(self) -> np.ndarray:
        return build_e_matrix(int(round(np.sqrt(self.h.shape[0]))))

    @cached_property
    def inactive(self):
        return _cho_factor(self.h + self.rho * self.e_matrix, self.jitter, f'H{self.name} + rho E')

    @cached_property
    def active(self):
        mm = self.h.shape[0]
        return _cho_factor(
            self.h + self.rho * (self.e_matrix + np.eye(mm)),
            self.jitter,
            f'H{self.name} + rho (E + I)',
        )

    def solve_with_active_set(self, active: np.ndarray, rhs: np.ndarray) -> np.ndarray:
        """Solve (H + rho E + rho D_A) x = rhs for an off-diagonal active set A"""
        key = active.tobytes()
        if key != self._active_key:
            a = self.h + self.rho * self.e_matrix + self.rho * np.diag(vec(active).astype(float))
            self._active_factor = _cho_factor(a, self.jitter, f'H{self.name} active-set system')
            self._active_key = key
            self.factorizations += 1
        return linalg.cho_solve(self._active_factor, rhs)


def _masked_update(
    system: BlockSystem,
    rhs: np.ndarray,
    lam: np.ndarray,
    rho: float,
    refinements: int,
) -> np.ndarray:
    m = lam.shape[0]
    offdiag = ~np.eye(m, dtype=bool)
    x1 = unvec(linalg.cho_solve(system.inactive, rhs), m)
    # 1 where the inequality multiplier stays inactive; always 1 on the diagonal
    mask = (lam + rho * x1 <= 0) | ~offdiag
    if mask.all():
        x = x1
    else:
        x2 = unvec(linalg.cho_solve(system.active, rhs - vec(lam)), m)
        x = np.where(mask, x1, x2)

    active = offdiag & (lam + rho * x > 0)
    for _ in range(refinements):
        x = unvec(system.solve_with_active_set(active, rhs - vec(active * lam)), m)
        updated = offdiag & (lam + rho * x > 0)
        if np.array_equal(updated, active):
            break
        active = updated
    return x


def update_g(
    q: QuadraticForm,
    state: AlmState,
    cfg: AlmConfig,
    system: BlockSystem | None = None,
) -> np.ndarray:
    """Closed-form masked minimisation of the augmented Lagrangian over G"""
    m = state.m
    system = system or BlockSystem(q.h1_mat, state.rho, cfg.jitter, '1')
    rhs = (
        -q.h2_mat @ vec(state.b_tilde)
        - q.h1_vec
        - gamma_vector(state.mu_g, state.v_g, cfg.lambda_g or 0.0, m)
    )
    return _masked_update(system, rhs, state.lam_g, state.rho, cfg.mask_refinements)


def update_b(
    q: QuadraticForm,
    state: AlmState,
    cfg: AlmConfig,
    system: BlockSystem | None = None,
) -> np.ndarray:
    """Closed-form masked minimisation of the augmented Lagrangian over B~"""
    m = state.m
    system = system or BlockSystem(q.h4_mat, state.rho, cfg.jitter, '4')
    rhs = (
        -q.h3_mat @ vec(state.g)
        - q.h2_vec
        - gamma_vector(state.mu_b, state.v_b, cfg.lambda_b or 0.0, m)
    )
    return _masked_update(system, rhs, state.lam_b, state.rho, cfg.mask_refinements)


def update_multipliers(state: AlmState, cfg: AlmConfig) -> AlmState:  # noqa: ARG001
    """
    Dual ascent: mu += rho X1, V += rho (X - X'), Lambda = {Lambda + rho X}+
    off the diagonal. G multipliers are left alone when G isn't estimated.
    """
    rho, m = state.rho, state.m
    offdiag = ~np.eye(m, dtype=bool)

    def step(x, mu, v, lam):
        return (
            mu + rho * x.sum(axis=1),
            v + rho * (x - x.T),
            np.where(offdiag, np.maximum(lam + rho * x, 0.0), 0.0),
        )

    mu_b, v_b, lam_b = step(state.b_tilde, state.mu_b, state.v_b, state.lam_b)
    mu_g, v_g, lam_g = state.mu_g, state.v_g, state.lam_g
    if state.estimates_g:
        mu_g, v_g, lam_g = step(state.g, mu_g, v_g, lam_g)
    return dataclasses.replace(
        state,
        mu_g=mu_g,
        v_g=v_g,
        lam_g=lam_g,
        mu_b=mu_b,
        v_b=v_b,
        lam_b=lam_b,
        iter=state.iter + 1,
    )


def finalize(
    g_raw: np.ndarray | None,
    b_raw: np.ndarray,
    threshold: bool = True,
) -> tuple[RealLaplacian | None, RealLaplacian]:
    """Project onto the Laplacian set, then prune off-diagonals below tau"""

    def one(x):
        projected = project_to_laplacian(x)
        return threshold_offdiag(projected) if threshold else projected

    return (None if g_raw is None else one(g_raw)), one(b_raw)


def feasibility(x: np.ndarray) -> dict[str, float]:
    """Constraint violation norms of a raw iterate"""
    offdiag = ~np.eye(x.shape[0], dtype=bool)
    return {
        'row_sums': float(np.linalg.norm(x.sum(axis=1))),
        'asymmetry': float(np.linalg.norm(x - x.T)),
        'positive_offdiag': float(np.linalg.norm(np.maximum(x, 0.0)[offdiag])),
        'norm': float(np.linalg.norm(x)),
    }


def resolve_lambdas(meas: MeasurementSet, cfg: AlmConfig) -> AlmConfig:
    """Fill in the data-driven default for any unset lambda"""
    default = default_lambda(meas, cfg.lambda_scale)
    return cfg.with_overrides(
        lambda_g=default if cfg.lambda_g is None else cfg.lambda_g,
        lambda_b=default if cfg.lambda_b is None else cfg.lambda_b,
    )


def _converged(change: float, x: np.ndarray, cfg: AlmConfig) -> bool:
    if cfg.normalized_stop:
        change /= max(1.0, float(np.sum(x * x)))
    return change < cfg.eps


def run(q: QuadraticForm, meas: MeasurementSet, cfg: AlmConfig) -> AlmReport:
    """
    Initialise from the sample covariances, then alternate the G update
    (skipped for DC), the B~ update and the dual step until both squared
    Frobenius changes drop below eps or max_iters is reached.
    """
    cfg = resolve_lambdas(meas, cfg)
    rho = effective_rho(q, cfg)
    estimates_g = q.estimates_g

    g0, b0 = init_from_samples(meas)
    if not estimates_g:
        g0 = np.zeros_like(b0)
    state = AlmState.start(g0, b0, rho, estimates_g)

    system_g = BlockSystem(q.h1_mat, rho, cfg.jitter, '1') if estimates_g else None
    system_b = BlockSystem(q.h4_mat, rho, cfg.jitter, '4')

    changes: list[tuple[float, float]] = []
    objectives: list[float] = []
    converged = False
    logger.debug(
        f'ALM start: M={state.m}, rho={rho:.4g}, lambda_g={cfg.lambda_g:.4g}, '
        f'lambda_b={cfg.lambda_b:.4g}',
    )

    for i in range(1, cfg.max_iters + 1):
        g_prev, b_prev = state.g, state.b_tilde
        if estimates_g:
            state = dataclasses.replace(state, g=update_g(q, state, cfg, system_g))
        state = dataclasses.replace(state, b_tilde=update_b(q, state, cfg, system_b))
        state = update_multipliers(state, cfg)

        dg = float(np.sum((state.g - g_prev) ** 2))
        db = float(np.sum((state.b_tilde - b_prev) ** 2))
        changes.append((dg, db))
        objectives.append(
            regularized_objective(
                q,
                state.g if estimates_g else None,
                state.b_tilde,
                cfg.lambda_g,
                cfg.lambda_b,
            ),
        )
        if i % PROGRESS_EVERY == 0:
            logger.debug(f'iter {i}: dG={dg:.3e} dB={db:.3e} objective={objectives[-1]:.6g}')

        if _converged(dg, state.g, cfg) and _converged(db, state.b_tilde, cfg):
            converged = True
            break

    g_proj, b_proj = finalize(state.g if estimates_g else None, state.b_tilde, threshold=False)
    objective = regularized_objective(
        q,
        None if g_proj is None else g_proj.entries,
        b_proj.entries,
        cfg.lambda_g,
        cfg.lambda_b,
    )
    g_hat, b_hat = finalize(state.g if estimates_g else None, state.b_tilde, cfg.threshold)

    report_feasibility = {'b_tilde': feasibility(state.b_tilde)}
    if estimates_g:
        report_feasibility['g'] = feasibility(state.g)

    logger.info(
        f'ALM {"converged" if converged else "stopped"} after {state.iter} iterations, '
        f'objective {objective:.6g}',
    )
    return AlmReport(
        g_hat=g_hat,
        b_hat_tilde=b_hat,
        iterations=state.iter,
        converged=converged,
        change_history=changes,
        objective_history=objectives,
        objective=objective,
        rho=rho,
        lambda_g=float(cfg.lambda_g),
        lambda_b=float(cfg.lambda_b),
        feasibility=report_feasibility,
    )


def estimate(meas: MeasurementSet, cfg: AlmConfig, kind: ModelKind | None = None) -> AlmReport:
    """Build the quadratic form of meas (optionally under another model) and run"""
    fitted = meas.as_kind(kind) if kind else meas
    return run(build_quadratic(fitted), fitted, cfg)
