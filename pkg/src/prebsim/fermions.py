"""Local fermionic operators and the Jordan-Wigner convention shared by the
dense oracle and the TEBD engine.

Local basis ``|0>`` (empty), ``|1>`` (occupied).  Modes are ordered left to
right along a line; ``c_j = (prod_{k<j} P_k) a_j`` with parity ``P = (-1)^n``.
In Kronecker products mode 0 is the leftmost factor.
"""
import numpy as np

ANNIHILATE = np.array([[0.0, 1.0], [0.0, 0.0]])
CREATE = ANNIHILATE.T.copy()
NUMBER = np.diag([0.0, 1.0])
PARITY = np.diag([1.0, -1.0])
IDENTITY = np.eye(2)

# two-mode fermionic swap on |00>, |01>, |10>, |11>
FSWAP = np.array(
    [
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, -1.0],
    ]
)


def hopping_pair() -> np.ndarray:
    """``c1+ c2 + c2+ c1`` on two adjacent modes (system/left mode first)."""
    return np.kron(CREATE, ANNIHILATE) + np.kron(ANNIHILATE, CREATE)


def density_pair() -> np.ndarray:
    return np.kron(NUMBER, NUMBER)


def local_density_matrix(n: float) -> np.ndarray:
    """Diagonal single-mode state with occupation ``n``."""
    return np.diag([1.0 - n, n])
