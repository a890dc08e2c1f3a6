"""Truncated Fock-space state algebra for few-mode optical circuits.

Conventions used throughout the package:

* A mode register is an ordered collection of labelled bosonic modes, each
  with its own photon-number cutoff. Polarisation modes are labelled like
  ``"A_H"``/``"A_V"``; single-rail modes get a bare label like ``"B"``.
* Basis states are occupation tuples, ordered lexicographically with vacuum
  first. Dense objects (density matrices, operators) are indexed row-major
  by that order.
* Pure states are sparse maps occupation -> complex amplitude; entries with
  modulus below ``PRUNE_TOL`` are dropped by the algebra helpers.
* ``normalize`` fixes the global phase so that the first nonzero amplitude
  in lexicographic order is real and non-negative.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

Occupation = Tuple[int, ...]

PRUNE_TOL = 1e-14
NULL_TOL = 1e-15


class NullOutcomeError(ValueError):
    """Raised when a projection leaves essentially zero probability."""


@dataclass(frozen=True)
class ModeRegister:
    """Ordered set of labelled modes with per-mode photon-number cutoffs."""

    labels: Tuple[str, ...]
    cutoffs: Tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.labels) != len(self.cutoffs):
            raise ValueError("labels and cutoffs length mismatch")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError(f"duplicate mode labels: {self.labels}")
        if any(c < 1 for c in self.cutoffs):
            raise ValueError("every cutoff must be >= 1")

    @classmethod
    def uniform(cls, labels: Sequence[str], cutoff: int) -> "ModeRegister":
        return cls(tuple(labels), tuple(cutoff for _ in labels))

    @property
    def n_modes(self) -> int:
        return len(self.labels)

    @property
    def dims(self) -> Tuple[int, ...]:
        return tuple(c + 1 for c in self.cutoffs)

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"mode {label!r} not in register {self.labels}") from None

    def cutoff_of(self, label: str) -> int:
        return self.cutoffs[self.index(label)]

    def basis(self) -> Iterator[Occupation]:
        """All occupation tuples in lexicographic (row-major) order."""
        return itertools.product(*(range(d) for d in self.dims))

    def basis_index(self, occ: Occupation) -> int:
        idx = 0
        for n, d in zip(occ, self.dims):
            idx = idx * d + n
        return idx

    def subset(self, labels: Sequence[str]) -> "ModeRegister":
        """Sub-register in the order requested by the caller."""
        return ModeRegister(tuple(labels), tuple(self.cutoff_of(m) for m in labels))


@dataclass
class PureState:
    """Sparse pure state over a mode register. Treat instances as immutable."""

    register: ModeRegister
    amps: Dict[Occupation, complex] = field(default_factory=dict)

    def copy(self) -> "PureState":
        return PureState(self.register, dict(self.amps))

    def amplitude(self, occ: Occupation) -> complex:
        return self.amps.get(tuple(occ), 0.0 + 0.0j)

    def dense(self) -> np.ndarray:
        vec = np.zeros(self.register.dim, dtype=complex)
        for occ, a in self.amps.items():
            vec[self.register.basis_index(occ)] = a
        return vec


@dataclass
class DensityMatrix:
    """Dense density operator over a (small) mode register."""

    register: ModeRegister
    matrix: np.ndarray

    def __post_init__(self) -> None:
        d = self.register.dim
        if self.matrix.shape != (d, d):
            raise ValueError(f"matrix shape {self.matrix.shape} != ({d}, {d})")

    def trace(self) -> float:
        return float(np.real(np.trace(self.matrix)))

    def validate(self, atol: float = 1e-10, eig_tol: float = 1e-9) -> None:
        """Check Hermiticity, unit trace and positivity within tolerances."""
        m = self.matrix
        if np.max(np.abs(m - m.conj().T)) > atol:
            raise ValueError("density matrix is not Hermitian within tolerance")
        if abs(np.trace(m).real - 1.0) > atol or abs(np.trace(m).imag) > atol:
            raise ValueError("density matrix trace differs from 1")
        w = np.linalg.eigvalsh(0.5 * (m + m.conj().T))
        if w.min() < -eig_tol:
            raise ValueError(f"density matrix has negative eigenvalue {w.min():.3e}")


@dataclass(frozen=True)
class QuantumChannel:
    """Kraus representation of a completely positive map on k modes."""

    kraus: Tuple[np.ndarray, ...]

    def is_trace_preserving(self, atol: float = 1e-10) -> bool:
        d = self.kraus[0].shape[1]
        s = sum(K.conj().T @ K for K in self.kraus)
        return bool(np.max(np.abs(s - np.eye(d))) <= atol)


def vacuum(register: ModeRegister) -> PureState:
    return PureState(register, {tuple(0 for _ in register.labels): 1.0 + 0.0j})


def norm(state: PureState) -> float:
    return math.sqrt(sum(abs(a) ** 2 for a in state.amps.values()))


def prune(state: PureState, tol: float = PRUNE_TOL) -> PureState:
    return PureState(
        state.register, {o: a for o, a in state.amps.items() if abs(a) > tol}
    )


def normalize(state: Union[PureState, DensityMatrix], tol: float = PRUNE_TOL):
    """Scale to unit norm/trace.

    Pure states additionally get the global-phase convention: the first
    nonzero amplitude in lexicographic basis order is made real non-negative.
    """
    if isinstance(state, DensityMatrix):
        tr = np.trace(state.matrix)
        if abs(tr) < NULL_TOL:
            raise NullOutcomeError("cannot normalize a zero-trace density matrix")
        return DensityMatrix(state.register, state.matrix / tr.real)
    n = norm(state)
    if n < NULL_TOL:
        raise NullOutcomeError("cannot normalize a zero state")
    phase = 1.0 + 0.0j
    for occ in sorted(state.amps):
        a = state.amps[occ]
        if abs(a) > tol:
            phase = a / abs(a)
            break
    scale = 1.0 / (n * phase)
    out = {o: a * scale for o, a in state.amps.items() if abs(a) > tol * n}
    return PureState(state.register, out)


def tensor(a: PureState, b: PureState) -> PureState:
    """Tensor product; registers must not share labels."""
    overlap = set(a.register.labels) & set(b.register.labels)
    if overlap:
        raise ValueError(f"registers share labels: {sorted(overlap)}")
    reg = ModeRegister(
        a.register.labels + b.register.labels, a.register.cutoffs + b.register.cutoffs
    )
    amps: Dict[Occupation, complex] = {}
    for oa, va in a.amps.items():
        for ob, vb in b.amps.items():
            amps[oa + ob] = va * vb
    return prune(PureState(reg, amps))


def project(
    state: PureState,
    bra: PureState,
    allow_null: bool = False,
) -> Tuple[PureState, float]:
    """Apply the bra <phi| on the modes of ``bra``'s register.

    Returns the unnormalized remainder on the leftover modes and the outcome
    probability (squared norm of the remainder, assuming ``state`` is
    normalized). Raises NullOutcomeError below ``NULL_TOL`` unless
    ``allow_null`` is set.
    """
    reg = state.register
    bra_pos = [reg.index(m) for m in bra.register.labels]
    keep_pos = [i for i in range(reg.n_modes) if i not in bra_pos]
    keep_reg = ModeRegister(
        tuple(reg.labels[i] for i in keep_pos),
        tuple(reg.cutoffs[i] for i in keep_pos),
    )
    bra_conj = {o: v.conjugate() for o, v in bra.amps.items()}
    out: Dict[Occupation, complex] = {}
    for occ, amp in state.amps.items():
        b_occ = tuple(occ[i] for i in bra_pos)
        c = bra_conj.get(b_occ)
        if c is None:
            continue
        k_occ = tuple(occ[i] for i in keep_pos)
        out[k_occ] = out.get(k_occ, 0.0 + 0.0j) + c * amp
    remainder = prune(PureState(keep_reg, out))
    p = norm(remainder) ** 2
    if p < NULL_TOL and not allow_null:
        raise NullOutcomeError(f"projection outcome has probability {p:.3e}")
    return remainder, p


def to_density(state: PureState) -> DensityMatrix:
    vec = state.dense()
    return DensityMatrix(state.register, np.outer(vec, vec.conj()))


def reduced_density(state: PureState, keep: Sequence[str]) -> DensityMatrix:
    """Reduced density matrix of a sparse pure state on the kept modes."""
    reg = state.register
    keep_pos = [reg.index(m) for m in keep]
    other_pos = [i for i in range(reg.n_modes) if i not in keep_pos]
    keep_reg = reg.subset(keep)
    groups: Dict[Occupation, Dict[Occupation, complex]] = {}
    for occ, amp in state.amps.items():
        o_occ = tuple(occ[i] for i in other_pos)
        k_occ = tuple(occ[i] for i in keep_pos)
        groups.setdefault(o_occ, {})[k_occ] = amp
    d = keep_reg.dim
    rho = np.zeros((d, d), dtype=complex)
    for branch in groups.values():
        vec = np.zeros(d, dtype=complex)
        for k_occ, amp in branch.items():
            vec[keep_reg.basis_index(k_occ)] = amp
        rho += np.outer(vec, vec.conj())
    return DensityMatrix(keep_reg, rho)


def project_density(
    rho: DensityMatrix, bra: PureState, allow_null: bool = False
) -> Tuple[DensityMatrix, float]:
    """Density-matrix counterpart of project(): apply <phi| on bra's modes.

    Returns the unnormalized conditional operator on the leftover modes and
    the outcome probability (its trace). Raises NullOutcomeError below
    NULL_TOL unless ``allow_null`` is set.
    """
    reg = rho.register
    bra_pos = [reg.index(m) for m in bra.register.labels]
    if tuple(bra.register.cutoffs) != tuple(reg.cutoffs[i] for i in bra_pos):
        raise ValueError("bra cutoffs do not match the projected modes")
    keep_pos = [i for i in range(reg.n_modes) if i not in bra_pos]
    keep_reg = ModeRegister(
        tuple(reg.labels[i] for i in keep_pos),
        tuple(reg.cutoffs[i] for i in keep_pos),
    )
    n = reg.n_modes
    letters = "abcdefghijklmnopqrstuvwxyz"
    row, col = letters[:n], letters[n : 2 * n]
    sub = (
        "".join(row[i] for i in bra_pos)
        + ","
        + row
        + col
        + ","
        + "".join(col[i] for i in bra_pos)
        + "->"
        + "".join(row[i] for i in keep_pos)
        + "".join(col[i] for i in keep_pos)
    )
    v = bra.dense().reshape(bra.register.dims)
    t = rho.matrix.reshape(reg.dims + reg.dims)
    out = np.einsum(sub, v.conj(), t, v).reshape(keep_reg.dim, keep_reg.dim)
    p = float(np.real(np.trace(out)))
    if p < NULL_TOL and not allow_null:
        raise NullOutcomeError(f"projection outcome has probability {p:.3e}")
    return DensityMatrix(keep_reg, out), p


def partial_trace(rho: DensityMatrix, keep: Sequence[str]) -> DensityMatrix:
    """Trace out every mode not listed in ``keep`` (result ordered as given)."""
    reg = rho.register
    keep_pos = [reg.index(m) for m in keep]
    other_pos = [i for i in range(reg.n_modes) if i not in keep_pos]
    dims = reg.dims
    n = reg.n_modes
    t = rho.matrix.reshape(dims + dims)
    # contract each traced mode's row axis with its column axis
    for p in sorted(other_pos, reverse=True):
        row_ax = p
        col_ax = p + len(t.shape) // 2
        t = np.trace(t, axis1=row_ax, axis2=col_ax)
    # remaining axes follow the register order of kept modes; reorder to match `keep`
    kept_sorted = sorted(keep_pos)
    perm = [kept_sorted.index(p) for p in keep_pos]
    k = len(keep_pos)
    t = np.transpose(t, axes=perm + [k + i for i in perm])
    keep_reg = reg.subset(keep)
    return DensityMatrix(keep_reg, t.reshape(keep_reg.dim, keep_reg.dim))


def embed_operator(
    op: np.ndarray, register: ModeRegister, modes: Sequence[str]
) -> np.ndarray:
    """Lift an operator acting on ``modes`` to the full register."""
    pos = [register.index(m) for m in modes]
    dims = register.dims
    n = register.n_modes
    d_t = int(np.prod([dims[p] for p in pos]))
    if op.shape != (d_t, d_t):
        raise ValueError(f"operator shape {op.shape} does not match modes {modes}")
    rest = [i for i in range(n) if i not in pos]
    d_r = int(np.prod([dims[i] for i in rest], initial=1.0))
    full = np.kron(op, np.eye(d_r))
    perm = pos + rest  # axis k of `full` corresponds to register axis perm[k]
    inv = np.argsort(perm)
    shape = [dims[p] for p in perm]
    t = full.reshape(shape + shape)
    t = np.transpose(t, axes=list(inv) + [n + i for i in inv])
    d = register.dim
    return t.reshape(d, d)


def apply_channel(
    rho: DensityMatrix, channel: QuantumChannel, modes: Sequence[str]
) -> DensityMatrix:
    """Apply a Kraus channel on a subset of modes: rho -> sum_k K rho K^dag."""
    out = np.zeros_like(rho.matrix)
    for K in channel.kraus:
        F = embed_operator(K, rho.register, modes)
        out += F @ rho.matrix @ F.conj().T
    return DensityMatrix(rho.register, out)


def loss_channel(eta: float, cutoff: int) -> QuantumChannel:
    """Pure photon-loss channel with transmission ``eta`` on one mode.

    Kraus operators K_k (k photons lost) have elements
    <m-k|K_k|m> = sqrt(C(m,k) eta^(m-k) (1-eta)^k); the set is exactly
    trace preserving on the truncated space because loss never raises the
    photon number.
    """
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"transmission eta={eta} outside [0, 1]")
    d = cutoff + 1
    ops: List[np.ndarray] = []
    for k in range(d):
        K = np.zeros((d, d))
        for m in range(k, d):
            K[m - k, m] = math.sqrt(
                math.comb(m, k) * eta ** (m - k) * (1.0 - eta) ** k
            )
        if np.any(K):
            ops.append(K)
    return QuantumChannel(tuple(ops))


def expectation(rho: DensityMatrix, operator: np.ndarray, atol: float = 1e-10) -> float:
    """Real expectation value Tr[rho O] of a Hermitian operator."""
    if operator.shape != rho.matrix.shape:
        raise ValueError("operator dimension does not match the register")
    if np.max(np.abs(operator - operator.conj().T)) > atol:
        raise ValueError("operator is not Hermitian within tolerance")
    return float(np.real(np.trace(rho.matrix @ operator)))


def number_operator(register: ModeRegister, mode: str) -> np.ndarray:
    """Photon-number operator of one mode on the full register."""
    d = register.dims[register.index(mode)]
    n_op = np.diag(np.arange(d, dtype=float))
    return embed_operator(n_op, register, [mode])


def density_to_json_dict(rho: DensityMatrix) -> dict:
    """JSON-ready form: labels, cutoff (int when uniform), re/im parts."""
    cutoffs = rho.register.cutoffs
    cutoff: Union[int, List[int]]
    cutoff = cutoffs[0] if len(set(cutoffs)) == 1 else list(cutoffs)
    return {
        "labels": list(rho.register.labels),
        "cutoff": cutoff,
        "re": rho.matrix.real.tolist(),
        "im": rho.matrix.imag.tolist(),
    }


def density_from_json_dict(obj: dict) -> DensityMatrix:
    labels = tuple(obj["labels"])
    cutoff = obj["cutoff"]
    cutoffs = (
        tuple(int(c) for c in cutoff)
        if isinstance(cutoff, (list, tuple))
        else tuple(int(cutoff) for _ in labels)
    )
    reg = ModeRegister(labels, cutoffs)
    m = np.asarray(obj["re"], dtype=float) + 1j * np.asarray(obj["im"], dtype=float)
    return DensityMatrix(reg, m.astype(complex))
