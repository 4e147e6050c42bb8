"""
Synthetic grids and measurements.

Voltages are exogenous excitation (i.i.d. uniform magnitudes and angles),
injections follow the exact model equation and noise is circularly
symmetric Gaussian calibrated to a target SNR.
"""

from importlib import resources
from pathlib import Path

import numpy as np

from gridtopo import io
from gridtopo.config import GridSpec, ModelKind, SimSpec, VoltageProfile
from gridtopo.errors import ConfigError, InsufficientDataError
from gridtopo.lapcore import ComplexAdmittance, Line, LineList, build_admittance
from gridtopo.models import MeasurementSet, NoiseModel
from gridtopo.utils import logger as _logger

logger = _logger.getChild('datagen')

B_TILDE_RANGE = (0.5, 2.0)
BUNDLED_CASES = ('ieee14', 'ieee33')


def _random_edges(m: int, extra_edges: int, rng: np.random.Generator) -> list[tuple[int, int]]:
    """Random spanning tree (each bus attaches to an earlier one in a random order) plus chords"""
    capacity = m * (m - 1) // 2 - (m - 1)
    if extra_edges > capacity:
        raise ConfigError(
            f'extra_edges={extra_edges} exceeds the {capacity} chords a {m}-bus graph can hold',
        )
    order = rng.permutation(m)
    tree = set()
    for k in range(1, m):
        parent = order[rng.integers(k)]
        i, j = sorted((int(order[k]), int(parent)))
        tree.add((i, j))

    chords: list[tuple[int, int]] = []
    if extra_edges:
        candidates = [(i, j) for i in range(m) for j in range(i + 1, m) if (i, j) not in tree]
        picked = rng.choice(len(candidates), size=extra_edges, replace=False)
        chords = [candidates[k] for k in sorted(picked)]
    return sorted(tree) + chords


def gen_grid(spec: GridSpec) -> tuple[ComplexAdmittance, LineList]:
    """
    Connected random grid. Every line carries a susceptance b~ ~ U[0.5, 2];
    its conductance is b~ / ratio with a log-normal ratio around
    spec.ratio_mean, and is dropped with probability 1 - spec.overlap.
    """
    rng = np.random.default_rng(spec.seed)
    edges = _random_edges(spec.m, spec.extra_edges, rng)
    count = len(edges)

    b_tilde = rng.uniform(*B_TILDE_RANGE, size=count)
    ratio = spec.ratio_mean * np.exp(spec.ratio_spread * rng.standard_normal(count))
    g = b_tilde / ratio
    keep = rng.uniform(size=count) < spec.overlap
    g = np.where(keep, g, 0.0)

    lines = LineList(
        lines=tuple(
            Line(i + 1, j + 1, float(gl), float(bl))
            for (i, j), gl, bl in zip(edges, g, b_tilde)
        ),
        m=spec.m,
    )
    logger.debug(f'Generated {spec.m}-bus grid with {count} lines, {int(keep.sum())} with conductance')
    return build_admittance(lines), lines


def grid_from_case(case: str | Path) -> tuple[ComplexAdmittance, LineList]:
    """A bundled case by name (ieee14, ieee33) or a case CSV path"""
    if str(case) in BUNDLED_CASES:
        resource = resources.files('gridtopo') / 'cases' / f'{case}.csv'
        with resources.as_file(resource) as path:
            lines = io.read_case(path)
    else:
        lines = io.read_case(case)
    return build_admittance(lines), lines


def draw_voltages(
    profile: VoltageProfile,
    m: int,
    n_samples: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """(|v|, theta), each n_samples x M"""
    v_mag = rng.uniform(profile.v_min, profile.v_max, size=(n_samples, m))
    theta = rng.uniform(-profile.theta_max, profile.theta_max, size=(n_samples, m))
    return v_mag, theta


def injections(
    adm: ComplexAdmittance,
    model_kind: ModelKind,
    v_mag: np.ndarray,
    theta: np.ndarray,
) -> np.ndarray:
    """Noiseless injections per sample: complex p + jq (AC, DLPF) or real p (DC)"""
    g, b = adm.g.entries, adm.b_tilde.entries
    if model_kind == 'dc':
        return theta @ b.T
    if model_kind == 'dlpf':
        p = theta @ b.T + v_mag @ g.T
        q = -theta @ g.T + v_mag @ b.T
        return p + 1j * q
    v = v_mag * np.exp(1j * theta)
    return v * (np.conj(v) @ (g + 1j * b).T)


def simulate(adm: ComplexAdmittance, spec: SimSpec) -> MeasurementSet:
    """
    Draw voltages, compute injections under spec.model_kind and add noise
    with R_eta = sigma2 I, where

        sigma2 = sum_n ||s_n||^2 / (M N 10^(snr_db / 10)).

    Complex noise splits sigma2 evenly between real and imaginary parts,
    DC noise is real with variance sigma2 / 2. R_eta is recorded even when
    spec.noiseless skips the noise.
    """
    m, n = adm.m, spec.n_samples
    rng = np.random.default_rng(spec.seed)
    v_mag, theta = draw_voltages(spec.voltage_profile, m, n, rng)
    s = injections(adm, spec.model_kind, v_mag, theta)

    power = float(np.sum(np.abs(s) ** 2))
    if power <= 0:
        raise InsufficientDataError('Injections are identically zero, the SNR is undefined')
    sigma2 = power / (m * n * 10 ** (spec.snr_db / 10))

    if not spec.noiseless:
        if spec.model_kind == 'dc':
            s = s + np.sqrt(sigma2 / 2) * rng.standard_normal((n, m))
        else:
            noise = rng.standard_normal((n, m)) + 1j * rng.standard_normal((n, m))
            s = s + np.sqrt(sigma2 / 2) * noise

    noise_model = NoiseModel.isotropic(m, sigma2)
    if spec.model_kind == 'dc':
        return MeasurementSet(model_kind='dc', p=s, theta=theta, noise=noise_model)
    if spec.model_kind == 'dlpf':
        return MeasurementSet(
            model_kind='dlpf',
            p=s.real,
            q=s.imag,
            v_mag=v_mag,
            theta=theta,
            noise=noise_model,
        )
    return MeasurementSet(
        model_kind='ac',
        p=s.real,
        q=s.imag,
        v=v_mag * np.exp(1j * theta),
        noise=noise_model,
    )


def snr_of(meas: MeasurementSet, sigma2: float) -> float:
    """10 log10(sum_n ||s_n||^2 / (M N sigma2)) in dB, s = p (+ jq)"""
    if sigma2 <= 0:
        raise ConfigError(f'sigma2 must be > 0, got {sigma2}')
    power = float(np.sum(np.abs(meas.s) ** 2))
    return float(10 * np.log10(power / (meas.m * meas.n_samples * sigma2)))
