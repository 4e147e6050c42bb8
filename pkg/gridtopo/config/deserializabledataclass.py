# flake8: noqa:C901,ANN401,ANN206,ANN102
"""
Frozen dataclasses that can be built from plain dictionaries (TOML, JSON or
CLI flags), coercing each field to its annotated type.
"""

import dataclasses
import json
from inspect import isclass
from pathlib import Path
from types import UnionType
from typing import Any, Literal, Union, get_args, get_origin

import toml

from gridtopo.errors import ConfigError

_TRUE_STRINGS = frozenset({'1', 'true', 'yes', 'on'})
_FALSE_STRINGS = frozenset({'0', 'false', 'no', 'off'})


@dataclasses.dataclass(frozen=True)
class DeserializableDataclass:
    """
    Base for the gridtopo config objects.

    __post_init__ coerces every field to its annotation (nested dicts become
    nested config objects), then calls validate() so that each subclass can
    check its own invariants.
    """

    @classmethod
    def instantiate(cls, **kwargs: Any):
        names = {f.name for f in dataclasses.fields(cls)}
        if unknown := sorted(set(kwargs) - names):
            raise ConfigError(f'{cls.__name__} got unknown keys: {", ".join(unknown)}')
        return cls(**kwargs)

    @classmethod
    def from_dict(cls, data: dict[str, Any]):
        return cls.instantiate(**data)

    @classmethod
    def from_file(cls, path: str | Path):
        """Load from a .toml or .json file"""
        path = Path(path)
        with path.open(encoding='utf-8') as f:
            if path.suffix == '.toml':
                data = toml.load(f)
            elif path.suffix == '.json':
                data = json.load(f)
            else:
                raise ConfigError(f'Unsupported config file type: {path.suffix!r}')
        return cls.from_dict(data)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def __post_init__(self):
        fields = {field.name: field.type for field in dataclasses.fields(type(self))}

        for fieldname, ftype in fields.items():
            value = self.__dict__.get(fieldname)
            try:
                self.__dict__[fieldname] = try_parse_value_as_type(value, ftype)
            except ValueError as e:
                raise ConfigError(
                    f'Error parsing {self.__class__.__name__}.{fieldname} :: {e}',
                ) from e

        self.validate()

    def validate(self):
        """Override to check invariants, raising ConfigError"""

    def require(self, condition: bool, message: str):
        if not condition:
            raise ConfigError(f'{self.__class__.__name__}: {message}')


def get_display_type(t: Any) -> str:
    """Get display string for type, t"""
    if t is None or t is type(None):
        return 'None'
    if isclass(t):
        return t.__name__
    if isinstance(t, UnionType):
        return ' | '.join(get_display_type(a) for a in get_args(t))
    return repr(t)


def _parse_union(value: Any, options: tuple) -> Any:
    if value is None:
        if any(t is None or t is type(None) for t in options):
            return None
        raise ValueError(
            f'Expected (non-optional) {" | ".join(map(get_display_type, options))}, got None',
        )

    errors: list[str] = []
    for t in options:
        if t is None or t is type(None):
            continue
        try:
            return try_parse_value_as_type(value, t)
        except ValueError as e:
            errors.append(str(e))

    joined = '; '.join(errors)
    raise ValueError(
        f'Could not coerce {value!r} as any of '
        f'{" | ".join(map(get_display_type, options))} ({joined})',
    )


def _parse_bool(value: Any) -> bool:
    if isinstance(value, bool):
        return value
    if isinstance(value, int) and value in (0, 1):
        return bool(value)
    if isinstance(value, str):
        lowered = value.strip().lower()
        if lowered in _TRUE_STRINGS:
            return True
        if lowered in _FALSE_STRINGS:
            return False
    raise ValueError(f'Expected bool, got {value!r}')


def _parse_number(value: Any, dtype: type) -> Any:
    if isinstance(value, bool):
        raise ValueError(f'Expected {dtype.__name__}, got bool {value!r}')
    try:
        parsed = dtype(value)
    except (TypeError, ValueError) as e:
        raise ValueError(f'Expected {dtype.__name__}, got {value!r}') from e
    if dtype is int and isinstance(value, float) and parsed != value:
        raise ValueError(f'Expected int, got non-integral {value!r}')
    return parsed


def try_parse_value_as_type(value: Any, dtype: Any) -> Any:
    """
    Try to parse a value as a specific type.
    Raise a ValueError if it can't be parsed.

    >>> try_parse_value_as_type('3', int)
    3
    >>> try_parse_value_as_type([1, 2], tuple[float, ...])
    (1.0, 2.0)
    """
    if dtype is Any:
        return value

    if dtype is None or dtype is type(None):
        if value is None:
            return None
        raise ValueError(f'Expected None, got {value!r}')

    origin = get_origin(dtype)
    args = get_args(dtype)

    if isinstance(dtype, UnionType) or origin is Union:
        return _parse_union(value, args)

    if origin is Literal:
        if value not in args:
            raise ValueError(f'Expected one of {args}, got {value!r}')
        return value

    if dtype is list or origin is list:
        if not isinstance(value, (list, tuple)):
            raise ValueError(f'Expected list, got {value!r}')
        if len(args) != 1:
            return list(value)
        return [try_parse_value_as_type(v, args[0]) for v in value]

    if dtype is tuple or origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ValueError(f'Expected tuple, got {value!r}')
        if not args:
            return tuple(value)
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(try_parse_value_as_type(v, args[0]) for v in value)
        if len(args) != len(value):
            raise ValueError(
                f'Expected tuple of length {len(args)}, got {len(value)} for {value!r}',
            )
        return tuple(try_parse_value_as_type(v, t) for v, t in zip(value, args))

    if dtype is dict or origin is dict:
        if not isinstance(value, dict):
            raise ValueError(f'Expected dict, got {value!r}')
        if len(args) != 2:
            return value
        return {k: try_parse_value_as_type(v, args[1]) for k, v in value.items()}

    if dtype is bool:
        return _parse_bool(value)

    if dtype in (int, float):
        return _parse_number(value, dtype)

    if isclass(dtype) and issubclass(dtype, DeserializableDataclass):
        if isinstance(value, dtype):
            return value
        if not isinstance(value, dict):
            raise ValueError(f'Expected dict for {dtype.__name__}, got {value!r}')
        return dtype.instantiate(**value)

    if dtype is Path:
        return Path(value)

    if dtype is str:
        if not isinstance(value, (str, int, float)) or isinstance(value, bool):
            raise ValueError(f'Expected str, got {value!r}')
        return str(value)

    if isclass(dtype) and isinstance(value, dtype):
        return value

    raise ValueError(f'Unknown type {get_display_type(dtype)}')
