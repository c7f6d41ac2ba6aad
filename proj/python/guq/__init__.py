"""Python access to the gust state estimator and its uncertainty tools."""

from ._core import (
    Autoencoder,
    ConfigError,
    ContractError,
    DataMismatchError,
    Dataset,
    Estimator,
    IoError,
    NumericError,
    ShapeError,
    assemble_cholesky,
    chi2_quantile,
    confidence_ellipse,
    ellipsoid_contains,
    linear_gramian,
    nll_loss,
    run,
    select_rank,
    taylor_vortex_velocity,
)

__all__ = [
    "Autoencoder",
    "ConfigError",
    "ContractError",
    "DataMismatchError",
    "Dataset",
    "Estimator",
    "IoError",
    "NumericError",
    "ShapeError",
    "assemble_cholesky",
    "chi2_quantile",
    "confidence_ellipse",
    "ellipsoid_contains",
    "linear_gramian",
    "nll_loss",
    "run",
    "select_rank",
    "taylor_vortex_velocity",
]
