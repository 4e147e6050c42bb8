"""
Measurement models and the quadratic objective they induce.

Every model fits the data with a weighted least-squares objective

    psi(G, B~) = sum_n ||r_n||^2_{R^-1},

which, written in vec coordinates g = vec(G), b = vec(B~), is the quadratic

    psi = 1/2 g'H1 g + g'H2 b + 1/2 b'H4 b + h1'g + h2'b + const

(H3 = H2' is the cross block of the gradient with respect to b). vec is
column-stacking throughout.
"""

import dataclasses
from collections.abc import Sequence

import numpy as np
from scipy import linalg

from gridtopo.config import ModelKind
from gridtopo.errors import DimensionError, GridTopoError, SchemaError
from gridtopo.utils import logger as _logger
from gridtopo.utils import vec

logger = _logger.getChild('models')

# negative objective values within this (relative to the constant term) are rounding
ROUNDING_TOL = 1e-9

# per-sample arrays each measurement model needs
REQUIRED_FIELDS: dict[str, tuple[str, ...]] = {
    'ac': ('p', 'q', 'v'),
    'dlpf': ('p', 'q', 'v_mag', 'theta'),
    'dc': ('p', 'theta'),
}


@dataclasses.dataclass(frozen=True, eq=False)
class NoiseModel:
    """Known noise covariance R_eta (M x M, symmetric positive definite)"""

    r_eta: np.ndarray
    r_eta_inv: np.ndarray = dataclasses.field(init=False, repr=False)

    def __post_init__(self):
        r = np.array(self.r_eta, dtype=float)
        if r.ndim != 2 or r.shape[0] != r.shape[1]:
            raise DimensionError(f'R_eta must be square, got shape {r.shape}')
        if not np.allclose(r, r.T, rtol=0, atol=1e-12 * max(1.0, np.abs(r).max())):
            raise GridTopoError('R_eta must be symmetric')
        try:
            factor = linalg.cho_factor(r)
        except linalg.LinAlgError as e:
            raise GridTopoError('R_eta must be positive definite') from e
        r_inv = linalg.cho_solve(factor, np.eye(r.shape[0]))
        r_inv = (r_inv + r_inv.T) / 2
        r.setflags(write=False)
        r_inv.setflags(write=False)
        object.__setattr__(self, 'r_eta', r)
        object.__setattr__(self, 'r_eta_inv', r_inv)

    @classmethod
    def isotropic(cls, m: int, sigma2: float) -> 'NoiseModel':
        return cls(sigma2 * np.eye(m))

    @property
    def m(self) -> int:
        return self.r_eta.shape[0]

    @property
    def sigma2(self) -> float:
        """Average per-bus noise power, trace(R_eta) / M"""
        return float(np.trace(self.r_eta)) / self.m


@dataclasses.dataclass(frozen=True, eq=False)
class MeasurementSet:
    """
    N samples of bus measurements, one row per sample:

        ac:   p, q, v (complex phasors)
        dlpf: p, q, v_mag, theta
        dc:   p, theta
    """

    model_kind: ModelKind
    p: np.ndarray
    noise: NoiseModel
    q: np.ndarray | None = None
    v: np.ndarray | None = None
    v_mag: np.ndarray | None = None
    theta: np.ndarray | None = None

    def __post_init__(self):
        if self.model_kind not in REQUIRED_FIELDS:
            raise SchemaError(f'Unknown model kind {self.model_kind!r}')
        required = REQUIRED_FIELDS[self.model_kind]
        for name in ('p', 'q', 'v', 'v_mag', 'theta'):
            value = getattr(self, name)
            if name not in required:
                # drop what the model doesn't use
                object.__setattr__(self, name, None)
                continue
            if value is None:
                raise SchemaError(f'{self.model_kind} measurements need {name!r}')
            dtype = complex if name == 'v' else float
            arr = np.array(value, dtype=dtype)
            if arr.ndim == 1:
                arr = arr[None, :]
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

        shape = self.p.shape
        if shape[0] < 1:
            raise SchemaError('Need at least one sample')
        for name in required:
            if getattr(self, name).shape != shape:
                raise DimensionError(
                    f'{name} has shape {getattr(self, name).shape}, expected {shape}',
                )
        if shape[1] != self.noise.m:
            raise DimensionError(f'Data has {shape[1]} buses but R_eta is {self.noise.m}x{self.noise.m}')
        if self.model_kind == 'dlpf' and np.any(self.v_mag <= 0):
            raise SchemaError('DLPF voltage magnitudes must be positive')

    @property
    def m(self) -> int:
        return self.p.shape[1]

    @property
    def n_samples(self) -> int:
        return self.p.shape[0]

    @property
    def s(self) -> np.ndarray:
        """Complex injections p + jq (just p for DC)"""
        if self.q is None:
            return self.p.astype(complex)
        return self.p + 1j * self.q

    def complex_voltages(self) -> np.ndarray:
        """Phasors, rebuilt as |v| exp(j theta) (unit magnitude for DC) where needed"""
        if self.v is not None:
            return np.array(self.v)
        magnitude = self.v_mag if self.v_mag is not None else 1.0
        return magnitude * np.exp(1j * self.theta)

    def as_kind(self, kind: ModelKind) -> 'MeasurementSet':
        """The same data, viewed through another (compatible) model"""
        if kind == self.model_kind:
            return self
        if self.model_kind == 'dc':
            raise SchemaError(f'DC measurements carry no q or |v|, cannot fit {kind}')
        v = self.complex_voltages()
        return MeasurementSet(
            model_kind=kind,
            p=self.p,
            q=self.q,
            v=v,
            v_mag=np.abs(v),
            theta=np.angle(v) if self.theta is None else self.theta,
            noise=self.noise,
        )


@dataclasses.dataclass(frozen=True, eq=False)
class PerSampleQuadratic:
    """
    One sample in factored form: residual
        r = a1 + A1 G a2 + A2 B~ a3 = a1 + (a2' kron A1) g + (a3' kron A2) b
    contributing (scale / 2) r^H W r to the objective.
    """

    a1: np.ndarray
    a2: np.ndarray
    a3: np.ndarray
    big_a1: np.ndarray
    big_a2: np.ndarray
    weight: np.ndarray
    scale: float = 1.0

    @property
    def m(self) -> int:
        return self.a1.shape[0]

    def residual(self, g: np.ndarray, b_tilde: np.ndarray) -> np.ndarray:
        return self.a1 + self.big_a1 @ g @ self.a2 + self.big_a2 @ b_tilde @ self.a3

    def value(self, g: np.ndarray, b_tilde: np.ndarray) -> float:
        r = self.residual(g, b_tilde)
        return 0.5 * self.scale * float(np.real(np.conj(r) @ self.weight @ r))


@dataclasses.dataclass(frozen=True, eq=False)
class QuadraticForm:
    """The objective in vec coordinates; matrices are M^2 x M^2"""

    h1_mat: np.ndarray
    h2_mat: np.ndarray
    h3_mat: np.ndarray
    h4_mat: np.ndarray
    h1_vec: np.ndarray
    h2_vec: np.ndarray
    const_term: float
    estimates_g: bool = True

    @property
    def m(self) -> int:
        return int(round(np.sqrt(self.h1_vec.shape[0])))

    def hessian(self) -> np.ndarray:
        """Full 2M^2 square Hessian (the B~ block only when G isn't estimated)"""
        if not self.estimates_g:
            return self.h4_mat
        return np.block([[self.h1_mat, self.h2_mat], [self.h3_mat, self.h4_mat]])


def _check_sample(sample: PerSampleQuadratic, m: int):
    shapes = {
        'a1': (sample.a1.shape, (m,)),
        'a2': (sample.a2.shape, (m,)),
        'a3': (sample.a3.shape, (m,)),
        'big_a1': (sample.big_a1.shape, (m, m)),
        'big_a2': (sample.big_a2.shape, (m, m)),
        'weight': (sample.weight.shape, (m, m)),
    }
    for name, (got, expected) in shapes.items():
        if got != expected:
            raise DimensionError(f'{name} has shape {got}, expected {expected}')


def assemble_from_samples(
    samples: Sequence[PerSampleQuadratic],
    estimates_g: bool = True,
) -> QuadraticForm:
    """
    Accumulate the quadratic form of a sum of factored samples, in order.
    Reference implementation: the model builders below compute the same
    matrices without per-sample Kronecker products.
    """
    if not samples:
        raise DimensionError('Need at least one sample to assemble')
    m = samples[0].m
    mm = m * m
    h = [np.zeros((mm, mm)) for _ in range(4)]
    h1_vec, h2_vec = np.zeros(mm), np.zeros(mm)
    const = 0.0

    for sample in samples:
        _check_sample(sample, m)
        w = sample.weight
        a_mats = (sample.big_a1, sample.big_a2)
        a_vecs = (sample.a2, sample.a3)
        for row in range(2):
            for col in range(2):
                block = np.kron(
                    np.outer(np.conj(a_vecs[row]), a_vecs[col]),
                    a_mats[row].conj().T @ w @ a_mats[col],
                )
                h[2 * row + col] += sample.scale * np.real(block)
        h1_vec += sample.scale * np.real(
            np.kron(np.conj(sample.a2)[:, None], sample.big_a1.conj().T @ w) @ sample.a1,
        )
        h2_vec += sample.scale * np.real(
            np.kron(np.conj(sample.a3)[:, None], sample.big_a2.conj().T @ w) @ sample.a1,
        )
        const += 0.5 * sample.scale * float(np.real(np.conj(sample.a1) @ w @ sample.a1))

    return QuadraticForm(*h, h1_vec, h2_vec, const, estimates_g=estimates_g)


def per_sample_forms(meas: MeasurementSet) -> list[PerSampleQuadratic]:
    """Factored form of each sample, with W = 2 R^-1 so that psi = sum ||r||^2_{R^-1}"""
    m = meas.m
    w = 2 * meas.noise.r_eta_inv
    eye = np.eye(m, dtype=complex)
    zeros_m = np.zeros(m, dtype=complex)
    forms = []
    for n in range(meas.n_samples):
        if meas.model_kind == 'ac':
            v = meas.v[n]
            forms.append(
                PerSampleQuadratic(
                    a1=meas.s[n],
                    a2=np.conj(v),
                    a3=np.conj(v),
                    big_a1=-np.diag(v),
                    big_a2=-1j * np.diag(v),
                    weight=w,
                ),
            )
        elif meas.model_kind == 'dlpf':
            u = meas.v_mag[n] - 1j * meas.theta[n]
            forms.append(
                PerSampleQuadratic(
                    a1=meas.s[n],
                    a2=u,
                    a3=u,
                    big_a1=-eye,
                    big_a2=-1j * eye,
                    weight=w,
                ),
            )
        else:
            forms.append(
                PerSampleQuadratic(
                    a1=meas.p[n].astype(complex),
                    a2=zeros_m,
                    a3=meas.theta[n].astype(complex),
                    big_a1=np.zeros((m, m), dtype=complex),
                    big_a2=-eye,
                    weight=w,
                ),
            )
    return forms


def _require_kind(meas: MeasurementSet, kind: ModelKind):
    if meas.model_kind != kind:
        raise SchemaError(f'Expected {kind} measurements, got {meas.model_kind}')


def build_ac(meas: MeasurementSet) -> QuadraticForm:
    """
    Nonlinear AC model, s[n] = diag(v[n]) (G + jB~) v*[n] + noise.

    With K = sum (v v^H) kron (diag(v*) R^-1 diag(v)) (Hermitian):
    H1 = H4 = 2 Re K, H2 = -2 Im K = -H3, and with
    Z = sum diag(v*) R^-1 s v', h1 = -2 Re vec(Z), h2 = -2 Im vec(Z).
    """
    _require_kind(meas, 'ac')
    m, r_inv = meas.m, meas.noise.r_eta_inv
    volts, s = meas.v, meas.s

    # row n is kron(v[n], conj(v[n]))
    u = (volts[:, :, None] * np.conj(volts)[:, None, :]).reshape(meas.n_samples, m * m)
    k_mat = (u.T @ np.conj(u)) * np.kron(np.ones((m, m)), r_inv)
    h1_mat = 2 * np.real(k_mat)
    h2_mat = -2 * np.imag(k_mat)

    z = (np.conj(volts) * (s @ r_inv.T)).T @ volts
    const = float(np.real(np.sum(np.conj(s) * (s @ r_inv.T))))

    logger.debug(f'Built AC quadratic form, M={m}, N={meas.n_samples}')
    return QuadraticForm(
        h1_mat=h1_mat,
        h2_mat=h2_mat,
        h3_mat=-h2_mat,
        h4_mat=h1_mat.copy(),
        h1_vec=-2 * np.real(vec(z)),
        h2_vec=-2 * np.imag(vec(z)),
        const_term=const,
        estimates_g=True,
    )


def build_dlpf(meas: MeasurementSet) -> QuadraticForm:
    """
    Decoupled linear power flow,
        p = B~ theta + G |v|,  q = -G theta + B~ |v|.
    """
    _require_kind(meas, 'dlpf')
    m, r_inv = meas.m, meas.noise.r_eta_inv
    vm, th, p, q = meas.v_mag, meas.theta, meas.p, meas.q

    h1_mat = 2 * np.kron(vm.T @ vm + th.T @ th, r_inv)
    h2_mat = 2 * np.kron(vm.T @ th - th.T @ vm, r_inv)
    h1_vec = 2 * vec(r_inv @ (q.T @ th - p.T @ vm))
    h2_vec = -2 * vec(r_inv @ (p.T @ th + q.T @ vm))
    const = float(np.sum(p * (p @ r_inv.T)) + np.sum(q * (q @ r_inv.T)))

    logger.debug(f'Built DLPF quadratic form, M={m}, N={meas.n_samples}')
    return QuadraticForm(
        h1_mat=h1_mat,
        h2_mat=h2_mat,
        h3_mat=-h2_mat,
        h4_mat=h1_mat.copy(),
        h1_vec=h1_vec,
        h2_vec=h2_vec,
        const_term=const,
        estimates_g=True,
    )


def build_dc(meas: MeasurementSet) -> QuadraticForm:
    """DC power flow, p = B~ theta; only B~ is identifiable"""
    _require_kind(meas, 'dc')
    m, r_inv = meas.m, meas.noise.r_eta_inv
    th, p = meas.theta, meas.p
    mm = m * m
    zeros = np.zeros((mm, mm))

    logger.debug(f'Built DC quadratic form, M={m}, N={meas.n_samples}')
    return QuadraticForm(
        h1_mat=zeros,
        h2_mat=zeros,
        h3_mat=zeros,
        h4_mat=2 * np.kron(th.T @ th, r_inv),
        h1_vec=np.zeros(mm),
        h2_vec=-2 * vec(r_inv @ p.T @ th),
        const_term=float(np.sum(p * (p @ r_inv.T))),
        estimates_g=False,
    )


_BUILDERS = {'ac': build_ac, 'dlpf': build_dlpf, 'dc': build_dc}


def build_quadratic(meas: MeasurementSet, kind: ModelKind | None = None) -> QuadraticForm:
    """Quadratic form of the data under `kind` (defaults to the data's own model)"""
    kind = kind or meas.model_kind
    return _BUILDERS[kind](meas.as_kind(kind))


def _vec_pair(q: QuadraticForm, g: np.ndarray | None, b_tilde: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mm = q.h1_vec.shape[0]
    bv = vec(np.asarray(b_tilde, dtype=float))
    if bv.shape != (mm,):
        raise DimensionError(f'B~ has {bv.shape[0]} entries, expected {mm}')
    if not q.estimates_g or g is None:
        return np.zeros(mm), bv
    gv = vec(np.asarray(g, dtype=float))
    if gv.shape != (mm,):
        raise DimensionError(f'G has {gv.shape[0]} entries, expected {mm}')
    return gv, bv


def eval_objective(q: QuadraticForm, g: np.ndarray | None, b_tilde: np.ndarray) -> float:
    """psi at (G, B~); G is ignored for the DC form. Rounding below zero is clipped."""
    gv, bv = _vec_pair(q, g, b_tilde)
    value = (
        0.5 * gv @ q.h1_mat @ gv
        + gv @ q.h2_mat @ bv
        + 0.5 * bv @ q.h4_mat @ bv
        + q.h1_vec @ gv
        + q.h2_vec @ bv
        + q.const_term
    )
    if value < -ROUNDING_TOL * max(abs(q.const_term), 1.0):
        logger.warning(f'Objective is {value:.6g}, the quadratic form is not positive semi-definite')
    return max(float(value), 0.0)


def grad_objective(
    q: QuadraticForm,
    g: np.ndarray | None,
    b_tilde: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """(d psi / d vec(G), d psi / d vec(B~)); the G part is zero for DC"""
    gv, bv = _vec_pair(q, g, b_tilde)
    grad_b = q.h3_mat @ gv + q.h4_mat @ bv + q.h2_vec
    if not q.estimates_g:
        return np.zeros_like(gv), grad_b
    return q.h1_mat @ gv + q.h2_mat @ bv + q.h1_vec, grad_b


def offdiag_l1(a: np.ndarray) -> float:
    """trace((I - 11') A), the l1 norm of the off-diagonals on the Laplacian set"""
    a = np.asarray(a, dtype=float)
    return float(np.trace(a) - a.sum())


def regularized_objective(
    q: QuadraticForm,
    g: np.ndarray | None,
    b_tilde: np.ndarray,
    lambda_g: float,
    lambda_b: float,
) -> float:
    value = eval_objective(q, g, b_tilde) + lambda_b * offdiag_l1(b_tilde)
    if q.estimates_g and g is not None:
        value += lambda_g * offdiag_l1(g)
    return value


def direct_objective(meas: MeasurementSet, g: np.ndarray | None, b_tilde: np.ndarray) -> float:
    """psi evaluated from the model residuals, without the quadratic form"""
    r_inv = meas.noise.r_eta_inv
    b_tilde = np.asarray(b_tilde, dtype=float)

    def weighted(r: np.ndarray) -> float:
        return float(np.real(np.sum(np.conj(r) * (r @ r_inv.T))))

    if meas.model_kind == 'dc':
        return weighted(meas.p - meas.theta @ b_tilde.T)

    g = np.asarray(g, dtype=float)
    if meas.model_kind == 'dlpf':
        rp = meas.p - meas.theta @ b_tilde.T - meas.v_mag @ g.T
        rq = meas.q + meas.theta @ g.T - meas.v_mag @ b_tilde.T
        return weighted(rp) + weighted(rq)

    volts = meas.v
    predicted = volts * (np.conj(volts) @ (g + 1j * b_tilde).T)
    return weighted(meas.s - predicted)


def default_lambda(meas: MeasurementSet, scale: float = 1.0) -> float:
    """scale * sigma2 * sqrt(log(M) / N)"""
    return scale * meas.noise.sigma2 * float(np.sqrt(np.log(meas.m) / meas.n_samples))
