import numpy as np
import pytest

from csmatch.data import Dataset


def make_ds(treated, controls, y_treated=None, y_controls=None, names=None) -> Dataset:
    """Dataset from treated and control covariate rows (1-d input means p = 1)."""
    T = np.asarray(treated, dtype=float)
    C = np.asarray(controls, dtype=float)
    if T.ndim == 1:
        T = T[:, None]
    if C.ndim == 1:
        C = C[:, None]
    nt, nc = T.shape[0], C.shape[0]
    yt = np.zeros(nt) if y_treated is None else np.asarray(y_treated, dtype=float)
    yc = np.zeros(nc) if y_controls is None else np.asarray(y_controls, dtype=float)
    names = names or tuple(f"x{k}" for k in range(T.shape[1]))
    return Dataset(
        ids=[f"t{i:03d}" for i in range(nt)] + [f"c{i:03d}" for i in range(nc)],
        X=np.vstack([T, C]),
        Z=np.r_[np.ones(nt, dtype=int), np.zeros(nc, dtype=int)],
        Y=np.r_[yt, yc],
        column_names=names,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
