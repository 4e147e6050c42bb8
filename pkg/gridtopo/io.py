"""
File formats: grid case CSVs, measurement CSVs, dense matrix CSVs and the
JSON sidecars / reports. Numbers are always written as full-precision
decimal text so files re-parse to the exact same doubles.
"""

import io as _io
import json
import re
from pathlib import Path

import numpy as np
import pandas as pd

from gridtopo.config import ModelKind
from gridtopo.errors import CaseFormatError, DimensionError, SchemaError
from gridtopo.lapcore import Line, LineList
from gridtopo.models import REQUIRED_FIELDS, MeasurementSet, NoiseModel
from gridtopo.utils import FLOAT_FORMAT

CASE_COLUMNS = ('from_bus', 'to_bus', 'g_line', 'b_tilde_line')
MEASUREMENT_COLUMNS = ('n', 'bus', 'p', 'q', 'v_re', 'v_im', 'v_mag', 'theta')
BUSES_COMMENT = re.compile(r'^#\s*buses\s*:\s*(\d+)\s*$', re.IGNORECASE)

# file columns backing each MeasurementSet field
_FIELD_COLUMNS: dict[str, tuple[str, ...]] = {
    'p': ('p',),
    'q': ('q',),
    'v': ('v_re', 'v_im'),
    'v_mag': ('v_mag',),
    'theta': ('theta',),
}


def read_case(path: str | Path) -> LineList:
    """
    Read a case CSV (header from_bus,to_bus,g_line,b_tilde_line). The bus
    count is taken from a '# buses: M' comment if present, otherwise the
    largest bus index.
    """
    text = Path(path).read_text(encoding='utf-8')
    m = None
    for raw in text.splitlines():
        if match := BUSES_COMMENT.match(raw.strip()):
            m = int(match.group(1))

    try:
        frame = pd.read_csv(
            _io.StringIO(text),
            comment='#',
            skip_blank_lines=True,
            float_precision='round_trip',
        )
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise CaseFormatError(f'{path}: cannot parse case file: {e}') from e

    if tuple(frame.columns) != CASE_COLUMNS:
        raise CaseFormatError(
            f'{path}: expected columns {",".join(CASE_COLUMNS)}, got {",".join(map(str, frame.columns))}',
        )
    try:
        buses = frame[['from_bus', 'to_bus']].astype(float)
        values = frame[['g_line', 'b_tilde_line']].astype(float)
    except ValueError as e:
        raise CaseFormatError(f'{path}: non-numeric entry: {e}') from e
    if buses.isna().any().any() or values.isna().any().any():
        raise CaseFormatError(f'{path}: empty cell in case file')
    if not np.all(buses.to_numpy() == np.round(buses.to_numpy())):
        raise CaseFormatError(f'{path}: bus indices must be integers')

    lines = tuple(
        Line(int(f), int(t), float(g), float(b))
        for (f, t), (g, b) in zip(buses.to_numpy(), values.to_numpy())
    )
    if m is None:
        m = int(buses.to_numpy().max()) if lines else 0
    return LineList(lines=lines, m=m)


def write_case(path: str | Path, lines: LineList, title: str | None = None):
    frame = pd.DataFrame(list(lines.lines), columns=list(CASE_COLUMNS))
    with open(path, 'w', encoding='utf-8', newline='') as f:
        if title:
            f.write(f'# {title}\n')
        f.write(f'# buses: {lines.m}\n')
        frame.to_csv(f, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')


def measurements_frame(meas: MeasurementSet) -> pd.DataFrame:
    """Long format, one row per (sample, bus), both 1-based"""
    n, m = meas.p.shape
    columns: dict[str, np.ndarray] = {
        'n': np.repeat(np.arange(1, n + 1), m),
        'bus': np.tile(np.arange(1, m + 1), n),
    }
    empty = np.full(n * m, np.nan)
    for name in ('p', 'q', 'v_mag', 'theta'):
        value = getattr(meas, name)
        columns[name] = empty if value is None else value.reshape(-1)
    if meas.v is None:
        columns['v_re'] = columns['v_im'] = empty
    else:
        columns['v_re'] = meas.v.real.reshape(-1)
        columns['v_im'] = meas.v.imag.reshape(-1)
    return pd.DataFrame({c: columns[c] for c in MEASUREMENT_COLUMNS})


def write_measurements(path: str | Path, meas: MeasurementSet):
    measurements_frame(meas).to_csv(
        path,
        index=False,
        float_format=FLOAT_FORMAT,
        na_rep='',
        lineterminator='\n',
    )


def read_measurements(path: str | Path, model_kind: ModelKind, noise: NoiseModel) -> MeasurementSet:
    """Parse a measurement CSV written for `model_kind`; columns the model needs must be complete"""
    try:
        frame = pd.read_csv(path, float_precision='round_trip')
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise SchemaError(f'{path}: cannot parse measurement file: {e}') from e

    missing = [c for c in MEASUREMENT_COLUMNS if c not in frame.columns]
    if missing:
        raise SchemaError(f'{path}: missing columns {", ".join(missing)}')
    if frame.empty:
        raise SchemaError(f'{path}: no measurement rows')

    frame = frame.sort_values(['n', 'bus'], kind='stable')
    n_ids = frame['n'].unique()
    bus_ids = frame['bus'].unique()
    n, m = len(n_ids), len(bus_ids)
    if len(frame) != n * m or frame.duplicated(['n', 'bus']).any():
        raise SchemaError(f'{path}: expected every sample to carry every bus exactly once')
    if not np.array_equal(np.sort(bus_ids), np.arange(1, m + 1)):
        raise SchemaError(f'{path}: bus indices must run 1..{m}')
    if m != noise.m:
        raise DimensionError(f'{path}: {m} buses but the noise covariance is {noise.m}x{noise.m}')

    fields: dict[str, np.ndarray] = {}
    for name in REQUIRED_FIELDS[model_kind]:
        cols = _FIELD_COLUMNS[name]
        block = frame[list(cols)]
        if block.isna().any().any():
            raise SchemaError(
                f'{path}: {model_kind} measurements need complete {"/".join(cols)} columns',
            )
        try:
            data = block.to_numpy(dtype=float)
        except ValueError as e:
            raise SchemaError(f'{path}: non-numeric {"/".join(cols)} entry') from e
        if name == 'v':
            fields[name] = (data[:, 0] + 1j * data[:, 1]).reshape(n, m)
        else:
            fields[name] = data[:, 0].reshape(n, m)
    return MeasurementSet(model_kind=model_kind, noise=noise, **fields)


def write_matrix(path: str | Path, a: np.ndarray):
    np.savetxt(path, np.asarray(a, dtype=float), fmt=FLOAT_FORMAT, delimiter=',')


def read_matrix(path: str | Path) -> np.ndarray:
    try:
        a = np.loadtxt(path, delimiter=',', ndmin=2)
    except ValueError as e:
        raise SchemaError(f'{path}: cannot parse matrix: {e}') from e
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f'{path}: matrix must be square, got shape {a.shape}')
    return a


def read_noise(path: str | Path) -> NoiseModel:
    """Noise covariance from a matrix CSV"""
    return NoiseModel(read_matrix(path))


def sidecar_path(measurements: str | Path) -> Path:
    """measurements.csv -> measurements.json"""
    return Path(measurements).with_suffix('.json')


def write_json(path: str | Path, payload: dict):
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(payload, f, indent=2, sort_keys=True, allow_nan=False)
        f.write('\n')


def read_json(path: str | Path) -> dict:
    with open(path, encoding='utf-8') as f:
        try:
            return json.load(f)
        except json.JSONDecodeError as e:
            raise SchemaError(f'{path}: invalid JSON: {e}') from e
