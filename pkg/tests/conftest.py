import numpy as np
import pytest
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays


def random_contraction(rng, n, strict=False):
    """Complex matrix with norm in (0, 1]; ``strict`` caps it at 0.95."""
    A = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    s = np.linalg.norm(A, 2)
    return A / s * (rng.uniform(0.3, 0.95) if strict else rng.uniform(0.3, 1.0))


def random_unitary(rng, n):
    Z = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    Qf, R = np.linalg.qr(Z)
    return Qf * (np.diag(R) / np.abs(np.diag(R)))


_finite = st.floats(-1.0, 1.0, allow_nan=False, allow_infinity=False)


@st.composite
def complex_matrices(draw, min_dim=1, max_dim=4, square=True):
    n = draw(st.integers(min_dim, max_dim))
    m = n if square else draw(st.integers(min_dim, max_dim))
    re = draw(arrays(float, (n, m), elements=_finite))
    im = draw(arrays(float, (n, m), elements=_finite))
    return re + 1j * im


@st.composite
def contractions(draw, min_dim=1, max_dim=4, max_norm=1.0):
    M = draw(complex_matrices(min_dim, max_dim))
    s = np.linalg.norm(M, 2)
    scale = draw(st.floats(0.0, max_norm))
    if s < 1e-8:
        return np.zeros_like(M)
    return M / s * scale


def lstsq_oracle(T1, T2, slot):
    """Minimal residual over complex Q by a real least-squares solve.

    Independent of the solver: unknowns are the 2n^2 real parameters of Q,
    and the design matrix is built column by column from basis matrices.
    """
    n = T1.shape[0]
    target = T2 @ T1
    f = {
        "left": lambda Q: Q @ T1 @ T2,
        "middle": lambda Q: T1 @ Q @ T2,
        "right": lambda Q: T1 @ T2 @ Q,
    }[slot]
    cols = []
    for part in (1.0, 1j):
        for i in range(n):
            for j in range(n):
                E = np.zeros((n, n), dtype=complex)
                E[i, j] = part
                img = f(E).reshape(-1)
                cols.append(np.concatenate([img.real, img.imag]))
    A = np.array(cols).T
    b = np.concatenate([target.reshape(-1).real, target.reshape(-1).imag])
    x, *_ = np.linalg.lstsq(A, b, rcond=None)
    return float(np.linalg.norm(A @ x - b))


@pytest.fixture
def rng():
    return np.random.default_rng(20261015)


# shared 2x2 fixtures
T_NIL = np.array([[0, 1], [0, 0]], dtype=complex)
T_DIAG = np.diag([1, 1j]).astype(complex)
Q_QPAIR = -1j * np.eye(2, dtype=complex)
EX22_T1 = np.array([[0, 0], [1, 1]], dtype=complex)
EX22_T2 = np.array([[-2, 0], [1, 1]], dtype=complex)
EX22_Q = np.diag([-1.0, 1.0]).astype(complex)
EX22_QP = np.diag([0.0, 1.0]).astype(complex)


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
