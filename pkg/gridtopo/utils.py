"""Helpers shared by the gridtopo modules: logging, env handling and vec algebra"""

import logging
import os

import numpy as np

logging.basicConfig()

logger = logging.getLogger('gridtopo')
logger.setLevel(logging.INFO)

if os.getenv('GRIDTOPO_DEBUG') in ('1', 'true', 'yes'):
    logger.setLevel(logging.DEBUG)

THREADS_ENV = 'GRIDTOPO_THREADS'

# Full precision text for every float written to disk
FLOAT_FORMAT = '%.17g'


def get_threads(default: int = 1) -> int:
    """
    Worker count, GRIDTOPO_THREADS wins over the supplied default

    >>> get_threads(3) >= 1
    True
    """
    value = os.getenv(THREADS_ENV)
    if not value:
        return max(1, default)
    try:
        return max(1, int(value))
    except ValueError:
        logger.warning(f'Ignoring non-integer {THREADS_ENV}={value!r}')
        return max(1, default)


def vec(a: np.ndarray) -> np.ndarray:
    """
    Column-stacking vec operator

    >>> vec(np.array([[1, 2], [3, 4]])).tolist()
    [1, 3, 2, 4]
    """
    return np.asarray(a).reshape(-1, order='F')


def unvec(x: np.ndarray, m: int) -> np.ndarray:
    """Inverse of vec for an m x m matrix"""
    return np.asarray(x).reshape((m, m), order='F')


def commutation_matrix(m: int) -> np.ndarray:
    """K such that K @ vec(X) == vec(X.T), for m x m X"""
    idx = np.arange(m * m).reshape((m, m), order='F')
    k = np.zeros((m * m, m * m))
    k[idx.T.reshape(-1, order='F'), idx.reshape(-1, order='F')] = 1.0
    return k
