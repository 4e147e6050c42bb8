# ruff: noqa: F401
"""Configuration objects for gridtopo"""

from gridtopo.config.config import (
    LAPLACIAN_TOL,
    MODEL_KINDS,
    PSD_TOL,
    AlmConfig,
    ExperimentConfig,
    GridSpec,
    ModelKind,
    OracleConfig,
    SimSpec,
    VoltageProfile,
)
