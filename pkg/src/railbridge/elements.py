"""Linear-optical elements, squeezer sources and click detectors.

All passive elements are expressed as 2x2 mode maps lifted exactly to the
truncated Fock space with factorial-weighted transition amplitudes; no
matrix exponentials are involved. A map U sends creation operators to
c_i^dag -> sum_j U_ji c_j^dag, so a single photon in mode i acquires the
amplitude column U[:, i], matching ordinary Jones-matrix algebra for the
polarisation pairs.

Output components that would exceed a mode cutoff are dropped; with the
cutoffs used by the protocol simulations this affects amplitudes far below
the working precision.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .fock import (
    ModeRegister,
    Occupation,
    PureState,
    PRUNE_TOL,
    prune,
)


def _lift_pair(U: np.ndarray, m: int, n: int) -> Dict[Tuple[int, int], complex]:
    """Exact Fock-space image of |m, n> under a 2x2 mode map.

    Expands (a^dag)^m (b^dag)^n binomially after substituting the mapped
    creation operators; the amplitude reaching |p, q> (p + q = m + n) is

        sum_{j+k=p} C(m,j) C(n,k) U00^j U10^(m-j) U01^k U11^(n-k)
                    * sqrt(p! q! / (m! n!))
    """
    out: Dict[Tuple[int, int], complex] = {}
    total = m + n
    base = 1.0 / math.sqrt(math.factorial(m) * math.factorial(n))
    for j in range(m + 1):
        cj = math.comb(m, j) * U[0, 0] ** j * U[1, 0] ** (m - j)
        if cj == 0.0:
            continue
        for k in range(n + 1):
            ck = math.comb(n, k) * U[0, 1] ** k * U[1, 1] ** (n - k)
            if ck == 0.0:
                continue
            p = j + k
            q = total - p
            w = cj * ck * base * math.sqrt(math.factorial(p) * math.factorial(q))
            key = (p, q)
            out[key] = out.get(key, 0.0 + 0.0j) + w
    return out


def apply_pair_map(
    state: PureState, mode_a: str, mode_b: str, U: np.ndarray
) -> PureState:
    """Apply a 2x2 mode map on (mode_a, mode_b), exactly within the cutoffs."""
    reg = state.register
    ia, ib = reg.index(mode_a), reg.index(mode_b)
    ca, cb = reg.cutoffs[ia], reg.cutoffs[ib]
    U = np.asarray(U, dtype=complex)
    out: Dict[Occupation, complex] = {}
    cache: Dict[Tuple[int, int], Dict[Tuple[int, int], complex]] = {}
    for occ, amp in state.amps.items():
        m, n = occ[ia], occ[ib]
        trans = cache.get((m, n))
        if trans is None:
            trans = _lift_pair(U, m, n)
            cache[(m, n)] = trans
        base = list(occ)
        for (p, q), w in trans.items():
            if p > ca or q > cb:
                continue
            base[ia], base[ib] = p, q
            key = tuple(base)
            out[key] = out.get(key, 0.0 + 0.0j) + amp * w
    return prune(PureState(reg, out))


def beam_splitter(state: PureState, mode_a: str, mode_b: str, t: float) -> PureState:
    """Beam splitter a -> sqrt(t) a + sqrt(1-t) b, b -> sqrt(1-t) a - sqrt(t) b."""
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"transmission t={t} outside [0, 1]")
    r = math.sqrt(1.0 - t)
    s = math.sqrt(t)
    U = np.array([[s, r], [r, -s]])
    return apply_pair_map(state, mode_a, mode_b, U)


def phase_shift(state: PureState, mode: str, phi: float) -> PureState:
    """Multiply each amplitude by e^(i n phi) for n photons in ``mode``."""
    idx = state.register.index(mode)
    rot = np.exp(1j * phi)
    out = {occ: amp * rot ** occ[idx] for occ, amp in state.amps.items()}
    return PureState(state.register, out)


def _pol_pair(state: PureState, spatial: str) -> Tuple[str, str]:
    h, v = f"{spatial}_H", f"{spatial}_V"
    labels = state.register.labels
    if h not in labels or v not in labels:
        raise KeyError(
            f"spatial mode {spatial!r} needs both polarisation modes {h!r}, {v!r}"
        )
    return h, v


def hwp_matrix(theta: float) -> np.ndarray:
    c, s = math.cos(2.0 * theta), math.sin(2.0 * theta)
    return np.array([[c, s], [s, -c]], dtype=complex)


def qwp_matrix(theta: float) -> np.ndarray:
    """Quarter-wave plate: phase i on the slow axis, slow axis at ``theta``."""
    c, s = math.cos(theta), math.sin(theta)
    R = np.array([[c, -s], [s, c]], dtype=complex)
    return R @ np.diag([1j, 1.0 + 0.0j]) @ R.conj().T


def half_wave_plate(state: PureState, spatial: str, theta: float) -> PureState:
    """HWP with fast axis at ``theta``: [[cos2t, sin2t], [sin2t, -cos2t]]."""
    h, v = _pol_pair(state, spatial)
    return apply_pair_map(state, h, v, hwp_matrix(theta))


def quarter_wave_plate(state: PureState, spatial: str, theta: float) -> PureState:
    h, v = _pol_pair(state, spatial)
    return apply_pair_map(state, h, v, qwp_matrix(theta))


def polarising_bs(state: PureState, spatial_1: str, spatial_2: str) -> PureState:
    """Polarising beam splitter: H transmitted, V swapped between the two
    spatial modes. A pure mode relabeling, hence exactly unitary."""
    _pol_pair(state, spatial_1)
    _pol_pair(state, spatial_2)
    reg = state.register
    i1 = reg.index(f"{spatial_1}_V")
    i2 = reg.index(f"{spatial_2}_V")
    if reg.cutoffs[i1] != reg.cutoffs[i2]:
        raise ValueError("swapped V modes must share a cutoff")
    out: Dict[Occupation, complex] = {}
    for occ, amp in state.amps.items():
        o = list(occ)
        o[i1], o[i2] = o[i2], o[i1]
        out[tuple(o)] = amp
    return PureState(reg, out)


def polariser(
    state: PureState, spatial: str, angle: float
) -> Tuple[PureState, float]:
    """Ideal polariser with transmission axis at ``angle``.

    The transmitted component is rotated onto the H mode and the orthogonal
    mode is projected onto vacuum (kept in the register, empty). Returns the
    normalized transmitted state and the transmission probability.
    """
    h, v = _pol_pair(state, spatial)
    c, s = math.cos(angle), math.sin(angle)
    U = np.array([[c, s], [-s, c]], dtype=complex)  # maps the axis onto H
    rotated = apply_pair_map(state, h, v, U)
    iv = state.register.index(v)
    passed = {occ: amp for occ, amp in rotated.amps.items() if occ[iv] == 0}
    out = PureState(state.register, passed)
    total = sum(abs(a) ** 2 for a in state.amps.values())
    p = sum(abs(a) ** 2 for a in passed.values()) / total if total else 0.0
    n = math.sqrt(sum(abs(a) ** 2 for a in passed.values()))
    if n > 0.0:
        out = PureState(state.register, {o: a / n for o, a in passed.items()})
    return out, p


def two_mode_squeezer(
    state: PureState, mode_a: str, mode_b: str, gamma: complex, order: str = "exact"
) -> PureState:
    """Populate a vacuum mode pair with pair emission of amplitude ``gamma``.

    order="pert" appends the single-pair term only, leaving the state
    unnormalized (amplitudes 1 and gamma); order="exact" writes the full
    geometric ladder sqrt(1-|gamma|^2) sum_n gamma^n |n, n> within the cutoff.
    """
    if order not in ("pert", "exact"):
        raise ValueError(f"unknown squeezer order {order!r}")
    if abs(gamma) >= 1.0:
        raise ValueError("pair amplitude |gamma| must be < 1")
    reg = state.register
    ia, ib = reg.index(mode_a), reg.index(mode_b)
    n_max = min(reg.cutoffs[ia], reg.cutoffs[ib])
    if order == "pert":
        ladder = [(0, 1.0 + 0.0j), (1, complex(gamma))]
    else:
        scale = math.sqrt(1.0 - abs(gamma) ** 2)
        ladder = [(n, scale * complex(gamma) ** n) for n in range(n_max + 1)]
    out: Dict[Occupation, complex] = {}
    for occ, amp in state.amps.items():
        if occ[ia] != 0 or occ[ib] != 0:
            raise ValueError(
                f"squeezer target modes ({mode_a}, {mode_b}) must start in vacuum"
            )
        base = list(occ)
        for n, w in ladder:
            if n > n_max:
                continue
            base[ia] = base[ib] = n
            out[tuple(base)] = out.get(tuple(base), 0.0 + 0.0j) + amp * w
    return prune(PureState(reg, out))


def coherent_state(
    label: str, alpha: complex, cutoff: int, order: str = "exact"
) -> PureState:
    """Single-mode coherent state |alpha> truncated at ``cutoff``.

    order="pert" keeps the printed first-order form (amplitudes 1 and alpha,
    unnormalized). The exact form keeps the Poisson amplitudes; a truncation
    warning fires when the dropped weight exceeds 1e-6.
    """
    if order not in ("pert", "exact"):
        raise ValueError(f"unknown coherent order {order!r}")
    reg = ModeRegister((label,), (cutoff,))
    if order == "pert":
        return PureState(reg, {(0,): 1.0 + 0.0j, (1,): complex(alpha)})
    amps: Dict[Occupation, complex] = {}
    pref = math.exp(-0.5 * abs(alpha) ** 2)
    for n in range(cutoff + 1):
        amps[(n,)] = pref * complex(alpha) ** n / math.sqrt(math.factorial(n))
    kept = sum(abs(a) ** 2 for a in amps.values())
    if 1.0 - kept > 1e-6:
        warnings.warn(
            f"coherent state truncation drops {1.0 - kept:.2e} of the weight "
            f"(|alpha|={abs(alpha):.3g}, cutoff={cutoff})",
            stacklevel=2,
        )
    return prune(PureState(reg, amps))


def click_probability(n: int, eta_d: float) -> float:
    """Probability that a non-number-resolving detector fires on n photons."""
    return 1.0 - (1.0 - eta_d) ** n


@dataclass(frozen=True)
class ClickPOVM:
    """Two-outcome POVM of a single-photon counter with efficiency eta_d.

    Both elements are diagonal in the Fock basis: no_click = (1-eta_d)^n,
    click = 1 - (1-eta_d)^n.
    """

    eta_d: float
    cutoff: int

    @property
    def no_click(self) -> np.ndarray:
        n = np.arange(self.cutoff + 1)
        return np.diag((1.0 - self.eta_d) ** n)

    @property
    def click(self) -> np.ndarray:
        return np.eye(self.cutoff + 1) - self.no_click


def spcm_povm(eta_d: float, cutoff: int) -> ClickPOVM:
    if not 0.0 <= eta_d <= 1.0:
        raise ValueError(f"detector efficiency eta_d={eta_d} outside [0, 1]")
    return ClickPOVM(eta_d=eta_d, cutoff=cutoff)
