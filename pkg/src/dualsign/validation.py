"""Input-validation helpers shared by the loaders and estimators."""

from __future__ import annotations

import numpy as np


def check_token_list(tokens, name: str = "tokens") -> list[str]:
    """Require a nonempty sequence of nonempty strings."""
    if not isinstance(tokens, (list, tuple)) or len(tokens) == 0:
        raise ValueError(f"{name} must be a nonempty token list")
    for t in tokens:
        if not isinstance(t, str) or not t:
            raise ValueError(f"{name} contains a non-string or empty token: {t!r}")
    return list(tokens)


def check_frame_matrix(frames, width: int | None = None,
                       name: str = "frames") -> np.ndarray:
    """Coerce to a 2-D float64 matrix; optionally enforce the column count."""
    arr = np.asarray(frames, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must be a nonempty 2-D matrix, got shape {arr.shape}")
    if width is not None and arr.shape[1] != width:
        raise ValueError(f"{name} has width {arr.shape[1]}, expected {width}")
    return arr


def check_finite(arr: np.ndarray, name: str = "array") -> np.ndarray:
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_is_fitted(estimator, attribute: str) -> None:
    if not hasattr(estimator, attribute):
        raise RuntimeError(
            f"{type(estimator).__name__} is not fitted yet; call fit() first")
