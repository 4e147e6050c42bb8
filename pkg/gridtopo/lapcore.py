"""
Real and complex Laplacians: construction from line data, projection onto
the Laplacian set, thresholding and the support / accuracy metrics.

A real Laplacian here is a symmetric M x M matrix with zero row sums and
non-positive off-diagonal entries (and therefore positive semi-definite).
The admittance is Y = G + jB with G and B~ = -B both real Laplacians.
"""

import dataclasses
from collections.abc import Iterable
from typing import NamedTuple

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from gridtopo.config import LAPLACIAN_TOL, PSD_TOL
from gridtopo.errors import (
    DimensionError,
    GridTopoError,
    LineListError,
    UndefinedRatioError,
)

Edge = tuple[int, int]


def _as_array(a: 'np.ndarray | RealLaplacian') -> np.ndarray:
    if isinstance(a, RealLaplacian):
        return a.entries
    return np.asarray(a, dtype=float)


def _require_square(a: np.ndarray, name: str = 'matrix') -> int:
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f'{name} must be square, got shape {a.shape}')
    return a.shape[0]


def _offdiag_mask(m: int) -> np.ndarray:
    return ~np.eye(m, dtype=bool)


def check_laplacian(
    a: np.ndarray,
    tol: float = LAPLACIAN_TOL,
    psd_tol: float = PSD_TOL,
) -> list[str]:
    """
    Return the list of Laplacian invariants that a violates (empty if none)

    >>> check_laplacian(np.array([[1.0, -1.0], [-1.0, 1.0]]))
    []
    >>> check_laplacian(np.array([[1.0, 1.0], [1.0, 1.0]]))
    ['row sums', 'off-diagonal sign']
    """
    a = np.asarray(a, dtype=float)
    m = _require_square(a)
    violations = []
    if not np.array_equal(a, a.T):
        violations.append('symmetry')
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    if np.any(np.abs(a.sum(axis=1)) > tol * scale):
        violations.append('row sums')
    if np.any(a[_offdiag_mask(m)] > 0):
        violations.append('off-diagonal sign')
    if m and not violations:
        smallest = float(np.linalg.eigvalsh(a)[0])
        if smallest < -psd_tol * max(float(np.trace(a)), 1.0):
            violations.append('positive semi-definite')
    return violations


@dataclasses.dataclass(frozen=True, eq=False)
class RealLaplacian:
    """Immutable real Laplacian, entries in per-unit admittance"""

    entries: np.ndarray

    def __post_init__(self):
        entries = np.array(self.entries, dtype=float)
        _require_square(entries, 'RealLaplacian')
        entries.setflags(write=False)
        object.__setattr__(self, 'entries', entries)

    @property
    def m(self) -> int:
        return self.entries.shape[0]

    @classmethod
    def from_matrix(cls, a: np.ndarray, tol: float = LAPLACIAN_TOL) -> 'RealLaplacian':
        """Validating constructor"""
        if violations := check_laplacian(a, tol=tol):
            raise GridTopoError(f'Not a Laplacian, violates: {", ".join(violations)}')
        return cls(a)

    @classmethod
    def zeros(cls, m: int) -> 'RealLaplacian':
        return cls(np.zeros((m, m)))


@dataclasses.dataclass(frozen=True, eq=False)
class ComplexAdmittance:
    """Y = G - jB~, kept as the two real Laplacians"""

    g: RealLaplacian
    b_tilde: RealLaplacian

    def __post_init__(self):
        if self.g.m != self.b_tilde.m:
            raise DimensionError(
                f'G is {self.g.m}x{self.g.m} but B~ is {self.b_tilde.m}x{self.b_tilde.m}',
            )

    @property
    def m(self) -> int:
        return self.g.m

    @property
    def y(self) -> np.ndarray:
        return self.g.entries - 1j * self.b_tilde.entries


@dataclasses.dataclass(frozen=True)
class SupportSet:
    """Unordered off-diagonal bus pairs, 1-based, stored as (i, j) with i < j"""

    edges: frozenset[Edge]
    m: int

    def __post_init__(self):
        normalized = frozenset((min(i, j), max(i, j)) for i, j in self.edges)
        for i, j in normalized:
            if i == j:
                raise GridTopoError(f'Self loop ({i}, {j}) in support set')
            if i < 1 or j > self.m:
                raise GridTopoError(f'Edge ({i}, {j}) outside 1..{self.m}')
        object.__setattr__(self, 'edges', normalized)

    def __len__(self) -> int:
        return len(self.edges)

    def __iter__(self):
        return iter(sorted(self.edges))


class Line(NamedTuple):
    from_bus: int
    to_bus: int
    g_line: float
    b_tilde_line: float


@dataclasses.dataclass(frozen=True)
class LineList:
    """Series lines in per-unit, bus numbers 1-based"""

    lines: tuple[Line, ...]
    m: int

    def __post_init__(self):
        lines = tuple(Line(int(f), int(t), float(g), float(b)) for f, t, g, b in self.lines)
        if self.m < 1:
            raise LineListError(f'Bus count must be >= 1, got {self.m}')
        seen: set[Edge] = set()
        for line in lines:
            if not (1 <= line.from_bus <= self.m and 1 <= line.to_bus <= self.m):
                raise LineListError(f'Line {line} references a bus outside 1..{self.m}')
            if line.from_bus == line.to_bus:
                raise LineListError(f'Line {line} connects a bus to itself')
            if line.g_line < 0 or line.b_tilde_line < 0:
                raise LineListError(f'Line {line} has a negative admittance')
            key = (min(line.from_bus, line.to_bus), max(line.from_bus, line.to_bus))
            if key in seen:
                raise LineListError(f'Duplicate line between buses {key[0]} and {key[1]}')
            seen.add(key)
        object.__setattr__(self, 'lines', lines)

    def __len__(self) -> int:
        return len(self.lines)

    @classmethod
    def from_admittance(cls, adm: ComplexAdmittance) -> 'LineList':
        """Read the lines back from the negative off-diagonals"""
        g, b = adm.g.entries, adm.b_tilde.entries
        rows, cols = np.nonzero(np.triu((g != 0) | (b != 0), k=1))
        lines = tuple(
            Line(int(i) + 1, int(j) + 1, float(0.0 - g[i, j]), float(0.0 - b[i, j]))
            for i, j in zip(rows, cols)
        )
        return cls(lines=lines, m=adm.m)


def _laplacian_from_weights(
    m: int,
    from_idx: np.ndarray,
    to_idx: np.ndarray,
    weights: np.ndarray,
) -> np.ndarray:
    # each line contributes +w on both diagonals and -w on both off-diagonals
    rows = np.concatenate([from_idx, to_idx, from_idx, to_idx])
    cols = np.concatenate([from_idx, to_idx, to_idx, from_idx])
    data = np.concatenate([weights, weights, -weights, -weights])
    return sparse.coo_matrix((data, (rows, cols)), shape=(m, m)).toarray() + 0.0


def build_admittance(lines: LineList) -> ComplexAdmittance:
    """
    Nodal admittance from series lines. Off-diagonals are minus the line
    admittance, the diagonal is the sum of the admittances at the bus.

    >>> adm = build_admittance(LineList(lines=((1, 2, 1.0, 2.0),), m=2))
    >>> adm.g.entries.tolist(), adm.b_tilde.entries.tolist()
    ([[1.0, -1.0], [-1.0, 1.0]], [[2.0, -2.0], [-2.0, 2.0]])
    """
    m = lines.m
    if not lines.lines:
        return ComplexAdmittance(RealLaplacian.zeros(m), RealLaplacian.zeros(m))

    arr = np.array(lines.lines, dtype=float)
    from_idx = arr[:, 0].astype(int) - 1
    to_idx = arr[:, 1].astype(int) - 1
    g = _laplacian_from_weights(m, from_idx, to_idx, arr[:, 2])
    b = _laplacian_from_weights(m, from_idx, to_idx, arr[:, 3])
    return ComplexAdmittance(g=RealLaplacian(g), b_tilde=RealLaplacian(b))


def _restore_diagonal(a: np.ndarray) -> np.ndarray:
    np.fill_diagonal(a, 0.0)
    np.fill_diagonal(a, 0.0 - a.sum(axis=1))
    return a


def project_to_laplacian(a: np.ndarray | RealLaplacian) -> RealLaplacian:
    """
    Symmetrize, clip positive off-diagonals to zero, then rebuild the
    diagonal from the off-diagonals so every row sums to zero.

    >>> project_to_laplacian(np.array([[1.0, 0.5], [0.5, 1.0]])).entries.tolist()
    [[0.0, 0.0], [0.0, 0.0]]
    """
    a = _as_array(a)
    _require_square(a)
    out = (a + a.T) / 2
    np.minimum(out, 0.0, out=out)
    return RealLaplacian(_restore_diagonal(out))


def threshold_tau(a: np.ndarray | RealLaplacian) -> float:
    """tau = min(diag) / M, never negative"""
    a = _as_array(a)
    m = _require_square(a)
    if m == 0:
        return 0.0
    return max(0.0, float(np.min(np.diag(a))) / m)


def threshold_offdiag(a: np.ndarray | RealLaplacian) -> RealLaplacian:
    """
    Zero the off-diagonal entries smaller in magnitude than tau and restore
    zero row sums. Identity when some diagonal entry is <= 0.
    """
    a = _as_array(a)
    tau = threshold_tau(a)
    if tau <= 0:
        return RealLaplacian(a)
    out = a.copy()
    small = (np.abs(out) < tau) & _offdiag_mask(out.shape[0])
    out[small] = 0.0
    return RealLaplacian(_restore_diagonal(out))


def support_of(a: np.ndarray | RealLaplacian, tol: float = 0.0) -> SupportSet:
    """Off-diagonal pairs (i < j, 1-based) with |a_ij| > tol"""
    a = _as_array(a)
    m = _require_square(a)
    rows, cols = np.nonzero(np.triu(np.abs(a) > tol, k=1))
    return SupportSet(
        edges=frozenset((int(i) + 1, int(j) + 1) for i, j in zip(rows, cols)),
        m=m,
    )


def fscore(truth: SupportSet, est: SupportSet) -> float:
    """
    2tp / (2tp + fp + fn) over unordered pairs; 1 when both are empty

    >>> fscore(SupportSet(frozenset({(1, 2)}), 3), SupportSet(frozenset({(1, 2), (2, 3)}), 3))
    0.6666666666666666
    """
    if truth.m != est.m:
        raise DimensionError(f'Support sets over {truth.m} and {est.m} buses')
    tp = len(truth.edges & est.edges)
    fp = len(est.edges - truth.edges)
    fn = len(truth.edges - est.edges)
    if tp + fp + fn == 0:
        return 1.0
    return 2 * tp / (2 * tp + fp + fn)


def mse(truth: np.ndarray | RealLaplacian, est: np.ndarray | RealLaplacian) -> float:
    """(1/M^2) trace((est - truth)^T (est - truth))"""
    truth, est = _as_array(truth), _as_array(est)
    if truth.shape != est.shape:
        raise DimensionError(f'Shape mismatch: {truth.shape} vs {est.shape}')
    m = _require_square(truth)
    diff = est - truth
    return float(np.trace(diff.T @ diff)) / (m * m)


def magnitude_ratio(g: np.ndarray | RealLaplacian, b_tilde: np.ndarray | RealLaplacian) -> float:
    """Mean of |b~_ij| / |g_ij| over entries (diagonal included) where both are nonzero"""
    g, b = _as_array(g), _as_array(b_tilde)
    if g.shape != b.shape:
        raise DimensionError(f'Shape mismatch: {g.shape} vs {b.shape}')
    joint = (g != 0) & (b != 0)
    if not np.any(joint):
        raise UndefinedRatioError('G and B~ have no jointly nonzero entries')
    return float(np.mean(np.abs(b[joint]) / np.abs(g[joint])))


def is_connected(edges: Iterable[Edge], m: int) -> bool:
    """True if the (1-based) edge set connects all m buses"""
    pairs = np.array(list(edges), dtype=int).reshape(-1, 2) - 1
    adjacency = sparse.coo_matrix(
        (np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])),
        shape=(m, m),
    )
    n_components, _ = connected_components(adjacency, directed=False)
    return n_components == 1
