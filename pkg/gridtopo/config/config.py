# flake8: noqa: ANN102,ANN204,ANN206,PLR2004
"""
Configuration objects for the solvers, the synthetic data generator and
the Monte-Carlo harness. All of them validate on construction.
"""

import dataclasses
import math
from typing import Literal

from gridtopo.config.deserializabledataclass import DeserializableDataclass

ModelKind = Literal['ac', 'dlpf', 'dc']
MODEL_KINDS: tuple[ModelKind, ...] = ('ac', 'dlpf', 'dc')

# relative tolerance for the Laplacian invariants (zero row sums)
LAPLACIAN_TOL = 1e-9
# smallest eigenvalue may dip to -PSD_TOL * trace
PSD_TOL = 1e-8

DEFAULT_RHO = 1.0
DEFAULT_JITTER = 1e-10
DEFAULT_MASK_REFINEMENTS = 10


@dataclasses.dataclass(frozen=True)
class AlmConfig(DeserializableDataclass):
    """
    Augmented Lagrangian solver settings.

    When rho_relative is set, the penalty actually used is
    rho * trace(H) / M**2 (the mean curvature of the data term), which makes
    the setting independent of the noise covariance scale. rho=1e-4 with
    rho_relative=False is the literal published setting.
    """

    rho: float = DEFAULT_RHO
    rho_relative: bool = True
    # None means: lambda_scale * sigma2 * sqrt(log(M) / N)
    lambda_g: float | None = None
    lambda_b: float | None = None
    lambda_scale: float = 1.0
    max_iters: int = 1000
    eps: float = 1e-8
    # relative identity shift applied when a factorization fails
    jitter: float = DEFAULT_JITTER
    # compare ||dX||_F^2 / max(1, ||X||_F^2) against eps instead
    normalized_stop: bool = False
    # active-set passes after the one-shot masked update (0 = one-shot only)
    mask_refinements: int = DEFAULT_MASK_REFINEMENTS
    # prune off-diagonals below tau in finalize()
    threshold: bool = True
    # not used by the solver (it is deterministic), echoed into reports
    seed: int | None = None

    def validate(self):
        self.require(self.rho > 0, f'rho must be > 0, got {self.rho}')
        for name in ('lambda_g', 'lambda_b'):
            value = getattr(self, name)
            self.require(value is None or value >= 0, f'{name} must be >= 0')
        self.require(self.lambda_scale >= 0, 'lambda_scale must be >= 0')
        self.require(self.max_iters >= 1, 'max_iters must be >= 1')
        self.require(self.eps > 0, 'eps must be > 0')
        self.require(self.jitter >= 0, 'jitter must be >= 0')
        self.require(self.mask_refinements >= 0, 'mask_refinements must be >= 0')

    def with_overrides(self, **overrides) -> 'AlmConfig':
        """Copy with the non-None overrides applied (used by CLI flags)"""
        values = self.to_dict()
        values.update({k: v for k, v in overrides.items() if v is not None})
        return AlmConfig.from_dict(values)


@dataclasses.dataclass(frozen=True)
class OracleConfig(DeserializableDataclass):
    """Projected-gradient reference solver settings"""

    max_iters: int = 50000
    # stop when |f_k - f_{k+1}| <= tol * max(1, |f_k|)
    tol: float = 1e-12
    dykstra_iters: int = 200
    dykstra_tol: float = 1e-13
    power_iters: int = 200

    def validate(self):
        self.require(self.max_iters >= 1, 'max_iters must be >= 1')
        self.require(self.tol > 0, 'tol must be > 0')
        self.require(self.dykstra_iters >= 1, 'dykstra_iters must be >= 1')
        self.require(self.dykstra_tol > 0, 'dykstra_tol must be > 0')
        self.require(self.power_iters >= 1, 'power_iters must be >= 1')


@dataclasses.dataclass(frozen=True)
class GridSpec(DeserializableDataclass):
    """Random grid with controllable joint sparsity of G and B~"""

    m: int
    extra_edges: int = 0
    # mean |b~| / |g| per line
    ratio_mean: float = 1.0
    # sigma of the log-normal spread around ratio_mean
    ratio_spread: float = 0.25
    # fraction of lines that also carry a conductance
    overlap: float = 1.0
    seed: int = 0

    def validate(self):
        self.require(self.m >= 2, f'm must be >= 2, got {self.m}')
        self.require(self.extra_edges >= 0, 'extra_edges must be >= 0')
        self.require(self.ratio_mean > 0, 'ratio_mean must be > 0')
        self.require(self.ratio_spread >= 0, 'ratio_spread must be >= 0')
        self.require(0 < self.overlap <= 1, 'overlap must be in (0, 1]')


@dataclasses.dataclass(frozen=True)
class VoltageProfile(DeserializableDataclass):
    """i.i.d. uniform voltage excitation, magnitudes in p.u. and angles in rad"""

    v_min: float = 0.95
    v_max: float = 1.05
    theta_max: float = 0.2

    def validate(self):
        self.require(0 < self.v_min <= self.v_max, 'need 0 < v_min <= v_max')
        self.require(self.theta_max >= 0, 'theta_max must be >= 0')


@dataclasses.dataclass(frozen=True)
class SimSpec(DeserializableDataclass):
    model_kind: ModelKind
    n_samples: int = 800
    snr_db: float = 30.0
    noiseless: bool = False
    voltage_profile: VoltageProfile = dataclasses.field(default_factory=VoltageProfile)
    seed: int = 0

    def validate(self):
        self.require(self.n_samples >= 1, f'n_samples must be >= 1, got {self.n_samples}')
        self.require(math.isfinite(self.snr_db), 'snr_db must be finite')


@dataclasses.dataclass(frozen=True)
class ExperimentConfig(DeserializableDataclass):
    """
    A Monte-Carlo sweep: for every SNR and trial, simulate data from the
    case (or a random grid), fit every variant and score it.
    """

    model_kind: ModelKind
    snr_db: list[float]
    # bundled case name (ieee14 / ieee33) or path to a case CSV
    case: str | None = None
    grid: GridSpec | None = None
    # models fitted to the data, defaults to [model_kind]
    variants: list[ModelKind] | None = None
    trials: int = 100
    n_samples: int = 800
    voltage_profile: VoltageProfile = dataclasses.field(default_factory=VoltageProfile)
    solver: AlmConfig = dataclasses.field(default_factory=AlmConfig)
    out: str = 'results'
    seed: int = 0

    def validate(self):
        self.require(
            (self.case is None) != (self.grid is None),
            'exactly one of case / grid must be given',
        )
        self.require(len(self.snr_db) > 0, 'snr_db must not be empty')
        self.require(self.trials >= 1, f'trials must be >= 1, got {self.trials}')
        self.require(self.n_samples >= 1, 'n_samples must be >= 1')
        if self.variants is not None:
            self.require(len(self.variants) > 0, 'variants must not be empty')
            if self.model_kind == 'dc':
                self.require(
                    all(v == 'dc' for v in self.variants),
                    'DC data can only be fitted with the dc model',
                )

    @property
    def fitted_variants(self) -> list[ModelKind]:
        return list(self.variants) if self.variants else [self.model_kind]
