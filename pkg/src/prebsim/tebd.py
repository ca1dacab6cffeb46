"""Mixed-basis TEBD on the vectorized density matrix.

The line holds ``[bath-1 eigenmodes, system sites, bath-2 eigenmodes]``; each
site carries the vectorized single-mode density matrix with local index
``s = 2 i + j`` for ``|i><j|`` (row stacking), so ``U rho U^+`` acts as
``U (x) conj(U)``.  One Trotter step of ``dt`` is a forward half-sweep (all
gates for ``dt/2``, left to right) followed by the mirrored backward
half-sweep.  Baths stay in their eigenbasis; system end sites travel through
them via composite swap-evolution gates.
"""
from __future__ import annotations

import enum
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from prebsim.fermions import ANNIHILATE, CREATE, FSWAP, IDENTITY, NUMBER, PARITY, hopping_pair
from prebsim.freefermion import SystemSpec
from prebsim.spectral import occupation

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
SV_FLOOR = 1e-14
BLOWUP_WEIGHT = 1e-6
TRACE_VEC = np.array([1.0, 0.0, 0.0, 1.0])


class Canon(str, enum.Enum):
    LEFT = "L"
    RIGHT = "R"
    NONE = "N"


class ScheduleError(RuntimeError):
    pass


# site labels: ("B1", alpha), ("S", m), ("B2", alpha); all 0-based
Label = tuple


@dataclass
class TruncationLog:
    discarded: float = 0.0
    n_svd: int = 0
    max_bond: int = 1
    warnings: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "discarded": self.discarded,
            "n_svd": self.n_svd,
            "max_bond": self.max_bond,
            "warnings": list(self.warnings),
        }


@dataclass
class VectorizedMPS:
    tensors: list
    ordering: list
    canon: list
    chi_max: int = 128
    svd_cutoff: float = 1e-10
    log_scale: float = 0.0
    trunc: TruncationLog = field(default_factory=TruncationLog)

    def __len__(self):
        return len(self.tensors)

    @property
    def bond_dims(self) -> list:
        return [t.shape[2] for t in self.tensors[:-1]]

    def position(self, label) -> int:
        return self.ordering.index(tuple(label))

    def system_positions(self) -> list:
        sys = sorted((lab for lab in self.ordering if lab[0] == "S"), key=lambda x: x[1])
        return [self.position(lab) for lab in sys]

    def copy(self) -> "VectorizedMPS":
        return VectorizedMPS(
            [t.copy() for t in self.tensors],
            list(self.ordering),
            list(self.canon),
            self.chi_max,
            self.svd_cutoff,
            self.log_scale,
            TruncationLog(self.trunc.discarded, self.trunc.n_svd, self.trunc.max_bond, list(self.trunc.warnings)),
        )


def _local_vector(n: float) -> np.ndarray:
    return np.array([1.0 - n, 0.0, 0.0, n], dtype=complex)


def _product_tensors(vectors):
    """Unit-norm bond-1 tensors plus the accumulated log norm."""
    tensors, scale = [], 0.0
    for v in vectors:
        nrm = np.linalg.norm(v)
        tensors.append((v / nrm).reshape(1, 4, 1).astype(complex))
        scale += math.log(nrm)
    return tensors, scale


def _bath_labels(tag: str, cb, order: str):
    idx = list(range(cb.size)) if cb is not None else []
    if order == "reverse":
        idx = idx[::-1]
    elif order != "energy":
        raise ValueError(f"unknown bath ordering {order!r}")
    return [(tag, a) for a in idx]


def _bath_vectors(labels, cb):
    if cb is None or not labels:
        return []
    n = occupation(cb.thermal, cb.energies)
    return [_local_vector(n[a]) for _, a in labels]


def initial_state(sys: SystemSpec, baths, pattern, chi_max=128, svd_cutoff=1e-10, order="energy") -> VectorizedMPS:
    """Thermal baths times a product system state, fully left-canonical."""
    pattern = np.asarray(pattern, dtype=float)
    if pattern.size != sys.L_S:
        raise ValueError("pattern length differs from L_S")
    return attach_baths(product_system(pattern, chi_max, svd_cutoff), baths, order=order)


def product_system(pattern, chi_max=128, svd_cutoff=1e-10) -> VectorizedMPS:
    tensors, scale = _product_tensors([_local_vector(n) for n in pattern])
    return VectorizedMPS(
        tensors, [("S", m) for m in range(len(pattern))], [Canon.LEFT] * len(tensors), chi_max, svd_cutoff, scale
    )


def attach_baths(sys_mps: VectorizedMPS, baths, order="energy") -> VectorizedMPS:
    """Tensor fresh thermal baths onto a left-canonical system MPS."""
    if any(lab[0] != "S" for lab in sys_mps.ordering):
        raise ValueError("attach_baths expects a system-only MPS")
    l1 = _bath_labels("B1", baths[0], order)
    l2 = _bath_labels("B2", baths[1], order)
    t1, s1 = _product_tensors(_bath_vectors(l1, baths[0]))
    t2, s2 = _product_tensors(_bath_vectors(l2, baths[1]))
    sysm = sys_mps.copy()
    if any(c != Canon.LEFT for c in sysm.canon):
        left_canonicalize(sysm)
    tensors = t1 + sysm.tensors + t2
    return VectorizedMPS(
        tensors,
        l1 + list(sysm.ordering) + l2,
        [Canon.LEFT] * len(tensors),
        sysm.chi_max,
        sysm.svd_cutoff,
        sysm.log_scale + s1 + s2,
        sysm.trunc,
    )


def left_canonicalize(mps: VectorizedMPS) -> VectorizedMPS:
    """QR sweep; the last tensor ends with unit norm, the norm goes to ``log_scale``."""
    carry = np.ones((1, 1), dtype=complex)
    for k, A in enumerate(mps.tensors):
        A = np.tensordot(carry, A, axes=(1, 0))
        Dl, d, Dr = A.shape
        if k == len(mps.tensors) - 1:
            nrm = np.linalg.norm(A)
            mps.tensors[k] = A / nrm
            mps.log_scale += math.log(nrm)
        else:
            Q, R = np.linalg.qr(A.reshape(Dl * d, Dr))
            mps.tensors[k] = Q.reshape(Dl, d, Q.shape[1])
            carry = R
        mps.canon[k] = Canon.LEFT
    return mps


# ---------------------------------------------------------------- gates


class GateKind(str, enum.Enum):
    SYSTEM = "system"
    BATH_FWD = "bath_fwd"
    BATH_BWD = "bath_bwd"
    SWAP = "swap"
    IDENTITY = "identity"


@dataclass(frozen=True, eq=False)
class Gate:
    kind: GateKind
    matrix: np.ndarray  # (4, 4, 4, 4): (s_a', s_b', s_a, s_b)
    tag: tuple = ()

    @property
    def matrix16(self) -> np.ndarray:
        return self.matrix.reshape(16, 16)


def superoperator(W: np.ndarray) -> np.ndarray:
    """``rho -> W rho W^+`` for a two-mode unitary in vectorized-site indices."""
    W4 = np.asarray(W).reshape(2, 2, 2, 2)
    T = np.einsum("abcd,efgh->aebfcgdh", W4, W4.conj())
    return T.reshape(4, 4, 4, 4)


SWAP_GATE = Gate(GateKind.SWAP, superoperator(FSWAP))
IDENTITY_GATE = Gate(GateKind.IDENTITY, np.eye(16).reshape(4, 4, 4, 4).astype(complex))


def _expm_herm(H: np.ndarray, t: float) -> np.ndarray:
    E, U = np.linalg.eigh(H)
    return (U * np.exp(-1j * E * t)) @ U.conj().T


def system_pair_hamiltonian(sys: SystemSpec, m: int) -> np.ndarray:
    """Two-site term on bond ``(m, m+1)`` with on-site energies shared between bonds."""
    onsite = np.diag(sys.hamiltonian())
    L = sys.L_S
    share = lambda l: 1.0 if l in (0, L - 1) else 0.5  # noqa: E731
    H = hopping_pair() + sys.V * np.kron(NUMBER, NUMBER)
    H = H + share(m) * onsite[m] * np.kron(NUMBER, IDENTITY)
    H = H + share(m + 1) * onsite[m + 1] * np.kron(IDENTITY, NUMBER)
    return H


def bath_pair_hamiltonian(energy: float, coupling: float) -> np.ndarray:
    """System mode on the left, bath eigenmode on the right."""
    return energy * np.kron(IDENTITY, NUMBER) + coupling * hopping_pair()


@dataclass
class GateSet:
    dt: float
    system: list
    bath1_fwd: dict
    bath1_bwd: dict
    bath2_fwd: dict
    bath2_bwd: dict


def build_gates(sys: SystemSpec, baths, dt: float) -> GateSet:
    """All two-site gates for a ``dt/2`` half-sweep."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    half = 0.5 * dt
    system = [
        Gate(GateKind.SYSTEM, superoperator(_expm_herm(system_pair_hamiltonian(sys, m), half)), ("S", m))
        for m in range(sys.L_S - 1)
    ]
    sets = []
    for tag, cb in (("B1", baths[0]), ("B2", baths[1])):
        fwd, bwd = {}, {}
        if cb is not None:
            kap = cb.couplings()
            for a in range(cb.size):
                U = _expm_herm(bath_pair_hamiltonian(cb.energies[a], kap[a]), half)
                fwd[a] = Gate(GateKind.BATH_FWD, superoperator(FSWAP @ U), (tag, a))
                bwd[a] = Gate(GateKind.BATH_BWD, superoperator(U @ FSWAP), (tag, a))
        sets += [fwd, bwd]
    return GateSet(dt, system, *sets)


# ---------------------------------------------------------------- two-site update


def _svd(theta):
    try:
        return sla.svd(theta, full_matrices=False, lapack_driver="gesdd", check_finite=False)
    except np.linalg.LinAlgError:
        return sla.svd(theta, full_matrices=False, lapack_driver="gesvd", check_finite=False)


def apply_two_site(mps: VectorizedMPS, k: int, gate: Gate | None, direction: str) -> float:
    """Contract sites ``k, k+1`` (the orthogonality centre is one of them), apply
    ``gate`` and split; ``direction='right'`` leaves the centre on ``k+1``.
    Returns the discarded weight relative to the current norm."""
    A, B = mps.tensors[k], mps.tensors[k + 1]
    Dl, Dr = A.shape[0], B.shape[2]
    theta = np.tensordot(A, B, axes=(2, 0))  # (Dl, 4, 4, Dr)
    if gate is not None:
        th = theta.transpose(1, 2, 0, 3).reshape(16, Dl * Dr)
        theta = (gate.matrix16 @ th).reshape(4, 4, Dl, Dr).transpose(2, 0, 1, 3)
    U, S, Vh = _svd(theta.reshape(Dl * 4, 4 * Dr))
    nrm = float(np.linalg.norm(S))
    if nrm == 0.0:
        raise FloatingPointError("vectorized state vanished")
    S = S / nrm
    mps.log_scale += math.log(nrm)
    w = S**2
    tail = np.cumsum(w[::-1])[::-1]  # tail[i] = weight of S[i:]
    keep = int(np.count_nonzero(S > SV_FLOOR))
    ok = np.flatnonzero(tail[:keep] >= mps.svd_cutoff) if keep else np.array([], int)
    keep = max(1, min(keep, int(ok[-1]) + 1 if ok.size else 1))
    if keep > mps.chi_max:
        keep = mps.chi_max
        lost = float(tail[keep])
        if lost > BLOWUP_WEIGHT:
            mps.trunc.warnings.append({"bond": k, "chi": keep, "discarded": lost})
            log.warning("bond %d capped at chi=%d, discarded weight %.2e", k, keep, lost)
    discarded = float(tail[keep]) if keep < S.size else 0.0
    U, S, Vh = U[:, :keep], S[:keep], Vh[:keep]
    if direction == "right":
        mps.tensors[k] = U.reshape(Dl, 4, keep)
        mps.tensors[k + 1] = (S[:, None] * Vh).reshape(keep, 4, Dr)
        mps.canon[k], mps.canon[k + 1] = Canon.LEFT, Canon.NONE
    elif direction == "left":
        mps.tensors[k] = (U * S).reshape(Dl, 4, keep)
        mps.tensors[k + 1] = Vh.reshape(keep, 4, Dr)
        mps.canon[k], mps.canon[k + 1] = Canon.NONE, Canon.RIGHT
    else:
        raise ValueError(direction)
    mps.trunc.discarded += discarded
    mps.trunc.n_svd += 1
    mps.trunc.max_bond = max(mps.trunc.max_bond, keep)
    return discarded


def _swap_labels(mps, k):
    mps.ordering[k], mps.ordering[k + 1] = mps.ordering[k + 1], mps.ordering[k]


# ---------------------------------------------------------------- schedule


def _first_last(mps):
    sys = [lab for lab in mps.ordering if lab[0] == "S"]
    L = len(sys)
    return ("S", 0), ("S", L - 1)


def initial_step(mps: VectorizedMPS) -> VectorizedMPS:
    """Right-canonicalize down to system site 1, then swap it to the left end."""
    first, _ = _first_last(mps)
    p = mps.position(first)
    for k in range(len(mps) - 2, p - 1, -1):
        apply_two_site(mps, k, None, "left")
    for k in range(p - 1, -1, -1):
        apply_two_site(mps, k, SWAP_GATE, "left")
        _swap_labels(mps, k)
    if len(mps) > 1:
        mps.canon[0] = Canon.RIGHT
    return mps


def half_sweep_forward(mps: VectorizedMPS, gates: GateSet) -> VectorizedMPS:
    first, last = _first_last(mps)
    if mps.ordering[0] != first:
        raise ScheduleError("forward half-sweep needs system site 1 at the left end")
    for k in range(len(mps) - 1):
        a, b = mps.ordering[k], mps.ordering[k + 1]
        if a == first and b[0] == "B1":
            apply_two_site(mps, k, gates.bath1_fwd[b[1]], "right")
            _swap_labels(mps, k)
        elif a[0] == "S" and b[0] == "S":
            apply_two_site(mps, k, gates.system[a[1]], "right")
        elif a == last and b[0] == "B2":
            apply_two_site(mps, k, gates.bath2_fwd[b[1]], "right")
            _swap_labels(mps, k)
        else:
            raise ScheduleError(f"unexpected pair {a}, {b} at bond {k} in forward sweep")
    return mps


def half_sweep_backward(mps: VectorizedMPS, gates: GateSet) -> VectorizedMPS:
    first, last = _first_last(mps)
    if mps.ordering[-1] != last:
        raise ScheduleError(f"backward half-sweep needs system site {last[1] + 1} at the right end")
    for k in range(len(mps) - 2, -1, -1):
        a, b = mps.ordering[k], mps.ordering[k + 1]
        if b == last and a[0] == "B2":
            apply_two_site(mps, k, gates.bath2_bwd[a[1]], "left")
            _swap_labels(mps, k)
        elif a[0] == "S" and b[0] == "S":
            apply_two_site(mps, k, gates.system[a[1]], "left")
        elif b == first and a[0] == "B1":
            apply_two_site(mps, k, gates.bath1_bwd[a[1]], "left")
            _swap_labels(mps, k)
        else:
            raise ScheduleError(f"unexpected pair {a}, {b} at bond {k} in backward sweep")
    return mps


def final_step(mps: VectorizedMPS, n_bath1: int | None = None) -> VectorizedMPS:
    """Swap system site 1 back behind bath 1, then left-canonicalize."""
    first, _ = _first_last(mps)
    if n_bath1 is None:
        n_bath1 = sum(1 for lab in mps.ordering if lab[0] == "B1")
    if mps.ordering[0] != first and n_bath1:
        raise ScheduleError("final step needs system site 1 at the left end")
    for k in range(n_bath1):
        apply_two_site(mps, k, SWAP_GATE, "right")
        _swap_labels(mps, k)
    for k in range(n_bath1, len(mps) - 1):
        apply_two_site(mps, k, None, "right")
    mps.canon[-1] = Canon.LEFT
    return mps


def trotter_step(mps: VectorizedMPS, gates: GateSet) -> VectorizedMPS:
    half_sweep_forward(mps, gates)
    return half_sweep_backward(mps, gates)


def evolve(mps: VectorizedMPS, gates: GateSet, n_steps: int, observer=None) -> VectorizedMPS:
    """``n_steps`` Trotter steps wrapped in the initial and final reordering.

    ``observer(step, mps)`` is called after every step (and with step 0
    before the first), with the MPS in the mid-schedule ordering.
    """
    initial_step(mps)
    if observer is not None:
        observer(0, mps)
    for i in range(n_steps):
        trotter_step(mps, gates)
        if observer is not None:
            observer(i + 1, mps)
    return final_step(mps)


def trace_out_baths(mps: VectorizedMPS) -> VectorizedMPS:
    """Contract every bath site with the vectorized identity."""
    sys_pos = mps.system_positions()
    lo, hi = min(sys_pos), max(sys_pos)
    if sys_pos != list(range(lo, hi + 1)):
        raise ScheduleError("system sites must be contiguous to trace out the baths")
    left = np.ones((1,), dtype=complex)
    for k in range(lo):
        left = left @ np.tensordot(mps.tensors[k], TRACE_VEC, axes=(1, 0))
    right = np.ones((1,), dtype=complex)
    for k in range(len(mps) - 1, hi, -1):
        right = np.tensordot(mps.tensors[k], TRACE_VEC, axes=(1, 0)) @ right
    tensors = [mps.tensors[k].copy() for k in range(lo, hi + 1)]
    tensors[0] = np.tensordot(left[None, :], tensors[0], axes=(1, 0))
    tensors[-1] = np.tensordot(tensors[-1], right[:, None], axes=(2, 0))
    out = VectorizedMPS(
        tensors,
        [mps.ordering[k] for k in range(lo, hi + 1)],
        [Canon.NONE] * len(tensors),
        mps.chi_max,
        mps.svd_cutoff,
        mps.log_scale,
        mps.trunc,
    )
    return left_canonicalize(out)


# ---------------------------------------------------------------- observables


def _op_vector(O: np.ndarray) -> np.ndarray:
    """Vector ``v`` with ``sum_s v_s rho_s = Tr(O rho)`` for one site."""
    return np.asarray(O).T.reshape(4)


def _transfer(A, v):
    return np.tensordot(A, v, axes=(1, 0))


def expectation(mps: VectorizedMPS, ops: dict, normalize: bool = True, check: bool = True):
    """``Tr(O rho)`` for a product ``O`` of single-site operators ``{position: 2x2}``.

    Identity elsewhere.  Divided by ``Tr rho`` unless ``normalize`` is False.
    """
    env = np.ones((1,), dtype=complex)
    for k, A in enumerate(mps.tensors):
        v = _op_vector(ops[k]) if k in ops else TRACE_VEC
        env = env @ _transfer(A, v)
    val = complex(env[0])
    if normalize:
        val /= complex(_raw_trace(mps))
    else:
        val *= math.exp(mps.log_scale)
    return val


def _raw_trace(mps):
    env = np.ones((1,), dtype=complex)
    for A in mps.tensors:
        env = env @ _transfer(A, TRACE_VEC)
    return env[0]


def trace(mps: VectorizedMPS) -> complex:
    return complex(_raw_trace(mps)) * math.exp(mps.log_scale)


def hopping_ops(pos_p: int, pos_q: int) -> dict:
    """Line-local operators for ``c+_p c_q`` with the Jordan-Wigner string between."""
    if pos_p == pos_q:
        return {pos_p: NUMBER}
    ops = {pos_p: CREATE, pos_q: ANNIHILATE}
    for k in range(min(pos_p, pos_q) + 1, max(pos_p, pos_q)):
        ops[k] = PARITY
    return ops


def _environments(mps):
    N = len(mps)
    L = [np.ones((1,), dtype=complex)]
    for A in mps.tensors:
        L.append(L[-1] @ _transfer(A, TRACE_VEC))
    R = [np.ones((1,), dtype=complex)]
    for A in reversed(mps.tensors):
        R.append(_transfer(A, TRACE_VEC) @ R[-1])
    R = R[::-1]  # R[k] = contraction of sites >= k
    return L, R, L[N][0]


def imag_tolerance(mps: VectorizedMPS) -> float:
    """Allowed imaginary residue: 1e-8 plus the amplitude scale of all discarded weight."""
    return 1e-8 + math.sqrt(mps.trunc.discarded)


def system_observables(mps: VectorizedMPS, atol: float | None = None) -> dict:
    """Occupations ``n_l`` and bond currents ``I_l`` of the system sites."""
    atol = imag_tolerance(mps) if atol is None else atol
    pos = mps.system_positions()
    L, R, tr = _environments(mps)
    n = []
    for p in pos:
        n.append(L[p] @ _transfer(mps.tensors[p], _op_vector(NUMBER)) @ R[p + 1] / tr)
    cur = []
    for p, q in zip(pos[:-1], pos[1:]):
        if q == p + 1:
            c_pq = _pair(mps, L, R, p, CREATE, ANNIHILATE) / tr
            c_qp = _pair(mps, L, R, p, ANNIHILATE, CREATE) / tr
        else:
            c_pq = expectation(mps, hopping_ops(p, q))
            c_qp = expectation(mps, hopping_ops(q, p))
        cur.append(2j * (c_qp - c_pq))
    n, cur = np.array(n), np.array(cur)
    for arr in (n, cur):
        if arr.size and np.max(np.abs(arr.imag)) > atol:
            raise FloatingPointError(f"observable has imaginary part {np.max(np.abs(arr.imag)):.2e}")
    return {"n": n.real.copy(), "I": cur.real.copy()}


def _pair(mps, L, R, p, Oa, Ob):
    return L[p] @ _transfer(mps.tensors[p], _op_vector(Oa)) @ _transfer(mps.tensors[p + 1], _op_vector(Ob)) @ R[p + 2]


def to_dense(mps: VectorizedMPS, max_sites: int = 12) -> np.ndarray:
    """Density matrix in line order (small MPS only)."""
    N = len(mps)
    if N > max_sites:
        raise ValueError(f"{N} sites too many for a dense density matrix")
    psi = mps.tensors[0]
    for A in mps.tensors[1:]:
        psi = np.tensordot(psi, A, axes=(psi.ndim - 1, 0))
    psi = psi.reshape((2, 2) * N) * math.exp(mps.log_scale)
    perm = list(range(0, 2 * N, 2)) + list(range(1, 2 * N, 2))
    return psi.transpose(perm).reshape(2**N, 2**N)


def check_canonical(mps: VectorizedMPS, atol: float = 1e-10) -> bool:
    """Compare canon flags with the actual isometry property."""
    for k, (A, flag) in enumerate(zip(mps.tensors, mps.canon)):
        Dl, d, Dr = A.shape
        if flag == Canon.LEFT:
            M = A.reshape(Dl * d, Dr)
            if not np.allclose(M.conj().T @ M, np.eye(Dr), atol=atol):
                return False
        elif flag == Canon.RIGHT:
            M = A.reshape(Dl, d * Dr)
            if not np.allclose(M @ M.conj().T, np.eye(Dl), atol=atol):
                return False
    return True


# ---------------------------------------------------------------- persistence


def save_checkpoint(mps: VectorizedMPS, path) -> None:
    meta = {
        "version": CHECKPOINT_VERSION,
        "ordering": [list(lab) for lab in mps.ordering],
        "canon": [c.value for c in mps.canon],
        "chi_max": mps.chi_max,
        "svd_cutoff": mps.svd_cutoff,
        "log_scale": mps.log_scale,
        "trunc": mps.trunc.to_dict(),
    }
    arrays = {f"t{k}": A for k, A in enumerate(mps.tensors)}
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.array(json.dumps(meta)), **arrays)


def load_checkpoint(path) -> VectorizedMPS:
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta.get('version')}")
        tensors = [data[f"t{k}"] for k in range(len(meta["ordering"]))]
    tr = meta["trunc"]
    return VectorizedMPS(
        tensors,
        [tuple(lab) for lab in meta["ordering"]],
        [Canon(c) for c in meta["canon"]],
        int(meta["chi_max"]),
        float(meta["svd_cutoff"]),
        float(meta["log_scale"]),
        TruncationLog(tr["discarded"], tr["n_svd"], tr["max_bond"], tr["warnings"]),
    )


class TebdEvolution:
    """System plus fixed finite baths evolved by TEBD in steps of ``dt``."""

    def __init__(self, sys: SystemSpec, baths, dt=0.1, chi_max=128, svd_cutoff=1e-10, order="energy"):
        self.sys = sys
        self.baths = tuple(baths)
        self.dt = dt
        self.chi_max = chi_max
        self.svd_cutoff = svd_cutoff
        self.order = order
        self.gates = build_gates(sys, self.baths, dt)

    def steps_for(self, t: float) -> int:
        n = round(t / self.dt)
        if abs(n * self.dt - t) > 1e-9 * max(1.0, t):
            raise ValueError(f"time {t} is not a multiple of dt={self.dt}")
        return n

    def run(self, sys_mps: VectorizedMPS, t: float, stride: int | None = None):
        """Evolve ``sys_mps`` with fresh baths for ``t``; returns the reduced
        system MPS and ``[(time, observables)]`` every ``stride`` steps."""
        mps = attach_baths(sys_mps, self.baths, order=self.order)
        mps.chi_max, mps.svd_cutoff = self.chi_max, self.svd_cutoff
        records = []

        def observer(step, m):
            if stride and step % stride == 0:
                records.append((step * self.dt, system_observables(m)))

        evolve(mps, self.gates, self.steps_for(t), observer if stride else None)
        return trace_out_baths(mps), records
