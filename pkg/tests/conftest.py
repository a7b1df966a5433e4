import numpy as np
import pytest

from decoupline.tensor3 import Tensor3


@pytest.fixture
def quadratic_system():
    """Exactly spline-representable ground truth (quadratic branches).

    Quadratics live inside every degree-2 spline space, so a (d=2, df=5)
    fit admits a zero-residual solution. Returns (J, F, X).
    """
    rng = np.random.default_rng(77)
    n = m = r = 2
    s = 40
    w1 = rng.standard_normal((n, r))
    w0 = rng.standard_normal((r, m))
    w0 /= np.linalg.norm(w0, axis=1, keepdims=True)
    abc = rng.standard_normal((r, 3))
    x = rng.uniform(-1.5, 1.5, (m, s))
    v = w0 @ x
    g = np.stack([a * v[j] ** 2 + b * v[j] + c for j, (a, b, c) in enumerate(abc)])
    dg = np.stack([2 * a * v[j] + b for j, (a, b, _) in enumerate(abc)])
    J = np.empty((n, m, s))
    for k in range(s):
        J[:, :, k] = w1 @ np.diag(dg[:, k]) @ w0
    return Tensor3(J), w1 @ g, x
