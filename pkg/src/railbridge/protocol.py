"""Post-selected interface between dual-rail and single-rail optical qubits.

The simulated experiment prepares three sources on seven labelled modes:

* a pair source feeding (A_H, D_V), a second one feeding (A_V, D_H); a
  single detection in D heralds a dual-rail qubit a|H>_A + b|V>_A;
* a pair source feeding (C_H, B) and a weak coherent drive on C_V, which
  together put the single-rail target mode B in step with the C qubit.

A two-click projection on the A/C polarisation modes teleports the dual-rail
amplitudes onto mode B (vacuum/one-photon encoding). Run without the D
herald, the same projection leaves D and B in an entangled state.

Two implementations of the projection are provided: a rank-1 projector onto
(|H>_A|V>_C + |V>_A|H>_C)/sqrt(2), and the physical circuit (wave plates,
polarising splitter, two counters) whose coincidences respond to exactly
that combination but also admit multi-pair false positives at exact order.

Post-selection is exact conditional-state algebra throughout; nothing here
is sampled. Success probabilities come out alongside the states so that
rate estimates can reuse them.
"""

from __future__ import annotations

import cmath
import math
import warnings
from dataclasses import dataclass, replace
from typing import Dict, Iterable, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import brentq

from .elements import (
    apply_pair_map,
    beam_splitter,
    coherent_state,
    half_wave_plate,
    polarising_bs,
    quarter_wave_plate,
    two_mode_squeezer,
)
from .fock import (
    DensityMatrix,
    ModeRegister,
    NullOutcomeError,
    Occupation,
    PureState,
    norm,
    normalize,
    project,
    prune,
    tensor,
    to_density,
    vacuum,
)

DEFAULT_CUTOFF = 2

# detector modes of the projection circuit and of the herald arm
BELL_CLICK_MODES = ("A_H", "C_H")
HERALD_CLICK_MODE = "D_H"


@dataclass(frozen=True)
class SourceParams:
    """Source amplitudes and detection efficiency for one experiment run.

    gamma1 drives the (C_H, B) pair source, gamma23 the two A/D pair
    sources, alpha the coherent drive on C_V (defaults to gamma1 so the
    teleported superposition comes out balanced). The phi_* phases enter
    the corresponding amplitudes as exp(-i phi), which makes the teleported
    relative phase exp(-i (phi_gamma1 - phi_alpha)).
    """

    gamma1: float = 0.20
    gamma23: float = 0.054
    alpha: Optional[float] = None
    phi_gamma1: float = 0.0
    phi_alpha: float = 0.0
    eta_d: float = 0.03
    order: str = "exact"

    def __post_init__(self) -> None:
        if self.order not in ("pert", "exact"):
            raise ValueError(f"unknown order {self.order!r}")
        for name in ("gamma1", "gamma23", "alpha"):
            v = getattr(self, name)
            if v is not None and abs(v) >= 1.0:
                raise ValueError(f"|{name}| must be < 1, got {abs(v)}")
        if not 0.0 <= self.eta_d <= 1.0:
            raise ValueError(f"eta_d={self.eta_d} outside [0, 1]")

    @property
    def alpha_value(self) -> float:
        return self.gamma1 if self.alpha is None else self.alpha

    @property
    def gamma1_amp(self) -> complex:
        return self.gamma1 * cmath.exp(-1j * self.phi_gamma1)

    @property
    def alpha_amp(self) -> complex:
        return self.alpha_value * cmath.exp(-1j * self.phi_alpha)


@dataclass(frozen=True)
class QubitSpec:
    """Dual-rail qubit amplitudes (a, b) on the H/V modes of one beam."""

    a: complex
    b: complex

    def __post_init__(self) -> None:
        n = abs(self.a) ** 2 + abs(self.b) ** 2
        if abs(n - 1.0) > 1e-12:
            raise ValueError(f"qubit amplitudes have norm^2 {n}, expected 1")

    @classmethod
    def of(cls, a: complex, b: complex) -> "QubitSpec":
        n = math.sqrt(abs(a) ** 2 + abs(b) ** 2)
        if n == 0.0:
            raise ValueError("qubit amplitudes cannot both vanish")
        return cls(complex(a) / n, complex(b) / n)

    def orthogonal(self) -> "QubitSpec":
        return QubitSpec(-self.b.conjugate(), self.a.conjugate())

    def bloch(self) -> Tuple[float, float, float]:
        a, b = self.a, self.b
        return (
            2.0 * (a.conjugate() * b).real,
            2.0 * (a.conjugate() * b).imag,
            abs(a) ** 2 - abs(b) ** 2,
        )


_S = 1.0 / math.sqrt(2.0)

INPUT_STATES: Mapping[str, QubitSpec] = {
    "H": QubitSpec(1.0, 0.0),
    "V": QubitSpec(0.0, 1.0),
    "D": QubitSpec(_S, _S),
    "A": QubitSpec(_S, -_S),
    "R": QubitSpec(_S, 1j * _S),
    "L": QubitSpec(_S, -1j * _S),
}


@dataclass(frozen=True)
class TripleBudget:
    """Per-pulse probabilities of genuine and fake triple coincidences.

    bad_a: both pair sources on the herald side fire (no photon from the
    C/B side needed); bad_c: the C side emits twice alongside one herald
    pair. Both mimic the good herald + two-click signature.
    """

    p_good: float
    p_bad_a: float
    p_bad_c: float

    def __post_init__(self) -> None:
        for name in ("p_good", "p_bad_a", "p_bad_c"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")

    @property
    def fraction_bad(self) -> float:
        total = self.p_good + self.p_bad_a + self.p_bad_c
        if total == 0.0:
            return 0.0
        return (self.p_bad_a + self.p_bad_c) / total


# --------------------------------------------------------------- sources


def build_resource_omega(params: SourceParams, cutoff: int = DEFAULT_CUTOFF) -> PureState:
    """Joint state of the C polarisation qubit and the single-rail mode B.

    Perturbative order keeps exactly the three printed terms
    |0>_C|0>_B + gamma1 |H>_C|1>_B + alpha |V>_C|0>_B (then normalizes);
    exact order carries the full squeezer ladder and Poisson drive,
    including the cross term alpha*gamma1 |H V>_C |1>_B.
    """
    reg = ModeRegister.uniform(["C_H", "C_V", "B"], cutoff)
    g1, al = params.gamma1_amp, params.alpha_amp
    if params.order == "pert":
        amps = {
            (0, 0, 0): 1.0 + 0.0j,
            (1, 0, 1): g1,
            (0, 1, 0): al,
        }
        return normalize(PureState(reg, amps))
    state = two_mode_squeezer(vacuum(reg), "C_H", "B", g1, order="exact")
    with warnings.catch_warnings():
        # the ~1e-5 drive weight beyond cutoff 2 is renormalized away and is
        # orders below every tolerance used downstream
        warnings.simplefilter("ignore", UserWarning)
        drive = coherent_state("drive", al, cutoff, order="exact")
    ladder = [drive.amplitude((n,)) for n in range(cutoff + 1)]
    return normalize(_inject_single_mode(state, "C_V", ladder))


def build_bell_pair(
    params: SourceParams, delta_phi: float = 0.0, cutoff: int = DEFAULT_CUTOFF
) -> PureState:
    """Polarisation-entangled pair shared between beams A and D.

    Two pair sources feed (A_H, D_V) and (A_V, D_H); the second one picks up
    the interferometer phase e^(i delta_phi). Perturbative order keeps
    |0> + gamma23 (|H>_A|V>_D + e^(i dphi) |V>_A|H>_D), normalized.
    """
    reg = ModeRegister.uniform(["A_H", "A_V", "D_H", "D_V"], cutoff)
    g2 = complex(params.gamma23)
    g3 = params.gamma23 * cmath.exp(1j * delta_phi)
    if params.order == "pert":
        amps = {
            (0, 0, 0, 0): 1.0 + 0.0j,
            (1, 0, 0, 1): g2,
            (0, 1, 1, 0): g3,
        }
        return normalize(PureState(reg, amps))
    state = two_mode_squeezer(vacuum(reg), "A_H", "D_V", g2, order="exact")
    state = two_mode_squeezer(state, "A_V", "D_H", g3, order="exact")
    return normalize(state)


def _inject_single_mode(
    state: PureState, label: str, ladder: Sequence[complex]
) -> PureState:
    """Populate a mode that is vacuum in every term with the given amplitudes."""
    reg = state.register
    idx = reg.index(label)
    cut = reg.cutoffs[idx]
    out: Dict[Occupation, complex] = {}
    for occ, amp in state.amps.items():
        if occ[idx] != 0:
            raise ValueError(f"mode {label!r} must start in vacuum")
        base = list(occ)
        for n, w in enumerate(ladder):
            if n > cut or w == 0.0:
                continue
            base[idx] = n
            key = tuple(base)
            out[key] = out.get(key, 0.0 + 0.0j) + amp * w
    return prune(PureState(reg, out))


# -------------------------------------------------------------- heralding


def herald_setting_for(chi: QubitSpec) -> QubitSpec:
    """D-side analysis state whose detection heralds the qubit ``chi`` in A."""
    return QubitSpec(chi.b.conjugate(), chi.a.conjugate())


def herald_qubit(
    bell: PureState, projection: QubitSpec
) -> Tuple[PureState, float]:
    """Project the D beam of a pair state onto a polarisation bra.

    Returns the normalized heralded state (a single photon in beam A with
    amplitudes (conj d_V, conj d_H)) and the detection probability, which
    scales as |gamma23|^2.
    """
    reg = bell.register
    bra_reg = reg.subset(["D_H", "D_V"])
    bra = PureState(
        bra_reg, {(1, 0): complex(projection.a), (0, 1): complex(projection.b)}
    )
    remainder, p = project(bell, bra)
    return normalize(remainder), p


# --------------------------------------------------- conditional detection


def _click_groups(clicks: Sequence[Union[str, Sequence[str]]]) -> Tuple[Tuple[str, ...], ...]:
    groups = []
    for g in clicks:
        groups.append((g,) if isinstance(g, str) else tuple(g))
    flat = [m for g in groups for m in g]
    if len(set(flat)) != len(flat):
        raise ValueError("click groups share modes")
    return tuple(groups)


def condition_on_clicks(
    state: PureState,
    clicks: Sequence[Union[str, Sequence[str]]],
    eta_d: float,
    keep: Sequence[str],
    min_probability: float = 1e-30,
) -> Tuple[DensityMatrix, float]:
    """Conditional state of ``keep`` given a click in every listed detector.

    Each entry of ``clicks`` is one counter; a sequence of labels means the
    counter sees those modes jointly (click weight 1-(1-eta_d)^n on their
    total photon number). Modes neither kept nor watched are traced out, as
    for blocked polariser ports. ``state`` is assumed normalized; returns
    the normalized conditional density matrix and the click probability.
    """
    reg = state.register
    groups = _click_groups(clicks)
    keep_idx = tuple(reg.index(m) for m in keep)
    watched = {m for g in groups for m in g}
    if watched & set(keep):
        raise ValueError("click modes cannot also be kept")
    rest_idx = tuple(i for i in range(reg.n_modes) if i not in keep_idx)
    pos_in_rest = {ri: k for k, ri in enumerate(rest_idx)}
    group_pos = [tuple(pos_in_rest[reg.index(m)] for m in g) for g in groups]

    buckets: Dict[Occupation, Dict[Occupation, complex]] = {}
    for occ, amp in state.amps.items():
        r_occ = tuple(occ[i] for i in rest_idx)
        k_occ = tuple(occ[i] for i in keep_idx)
        buckets.setdefault(r_occ, {})[k_occ] = amp

    keep_reg = reg.subset(keep)
    d = keep_reg.dim
    rho = np.zeros((d, d), dtype=complex)
    p_total = 0.0
    for r_occ, branch in buckets.items():
        w = 1.0
        for gp in group_pos:
            n_g = sum(r_occ[k] for k in gp)
            w *= 1.0 - (1.0 - eta_d) ** n_g
            if w == 0.0:
                break
        if w == 0.0:
            continue
        vec = np.zeros(d, dtype=complex)
        for k_occ, amp in branch.items():
            vec[keep_reg.basis_index(k_occ)] = amp
        rho += w * np.outer(vec, vec.conj())
        p_total += w * float(np.real(vec.conj() @ vec))
    if p_total < min_probability:
        raise NullOutcomeError(
            f"click pattern has probability {p_total:.3e}"
        )
    return DensityMatrix(keep_reg, rho / p_total), p_total


def click_pattern_probability(
    state: PureState,
    clicks: Sequence[Union[str, Sequence[str]]],
    eta_d: float,
    pattern: Sequence[int],
) -> float:
    """Probability of a full click/no-click pattern on the listed counters.

    All unlisted modes are traced out. Because both POVM outcomes are
    diagonal in the Fock basis, the probability is a single weighted sum
    over the occupation amplitudes, with weight 1-(1-eta_d)^n per click
    and (1-eta_d)^n per no-click.
    """
    reg = state.register
    groups = _click_groups(clicks)
    if len(pattern) != len(groups):
        raise ValueError("pattern length must match the number of counters")
    group_idx = [tuple(reg.index(m) for m in g) for g in groups]
    p = 0.0
    for occ, amp in state.amps.items():
        w = abs(amp) ** 2
        for bit, gi in zip(pattern, group_idx):
            miss = (1.0 - eta_d) ** sum(occ[i] for i in gi)
            w *= (1.0 - miss) if bit else miss
            if w == 0.0:
                break
        p += w
    return p


# ---------------------------------------------------------- Bell projection


def _rotation_to_h(axis_h: complex, axis_v: complex) -> np.ndarray:
    """2x2 unitary sending the given polarisation axis onto the H mode."""
    return np.array(
        [
            [np.conj(axis_h), np.conj(axis_v)],
            [-axis_v, axis_h],
        ],
        dtype=complex,
    )


def apply_bell_circuit(state: PureState) -> PureState:
    """Wave plates, polarising splitter and the two analysis rotations.

    Both beams pass a half-wave plate at pi/8 (H -> (H+V)/sqrt2), meet on
    the polarising splitter, and each output is analysed at +-45 degrees:
    the transmitted components end up in A_H and C_H (the counter modes)
    while A_V and C_V hold the blocked light. A coincidence of the two
    counters fires only on the symmetric |H V> + |V H> combination of the
    inputs, at half the rank-1 projector probability.
    """
    state = half_wave_plate(state, "A", math.pi / 8.0)
    state = half_wave_plate(state, "C", math.pi / 8.0)
    state = polarising_bs(state, "A", "C")
    state = apply_pair_map(state, "A_H", "A_V", _rotation_to_h(_S, _S))
    state = apply_pair_map(state, "C_H", "C_V", _rotation_to_h(_S, -_S))
    return state


def bell_project_ideal(
    state: PureState, allow_null: bool = True
) -> Tuple[PureState, float]:
    """Rank-1 projection onto (<H|_A <V|_C + <V|_A <H|_C)/sqrt(2).

    Returns the normalized remainder on the leftover modes and the outcome
    probability; orthogonal inputs give probability 0 (and an empty state)
    unless ``allow_null`` is cleared.
    """
    reg = state.register
    bra_reg = reg.subset(["A_H", "A_V", "C_H", "C_V"])
    bra = PureState(bra_reg, {(1, 0, 0, 1): _S + 0.0j, (0, 1, 1, 0): _S + 0.0j})
    remainder, p = project(state, bra, allow_null=True)
    if p < 1e-30:
        if not allow_null:
            raise NullOutcomeError("state is orthogonal to the projected pair")
        return remainder, 0.0
    return normalize(remainder), p


def bell_project_physical(
    state: PureState,
    eta_d: float,
    keep: Sequence[str],
) -> Tuple[DensityMatrix, float]:
    """Run the physical circuit and condition on the two-counter coincidence."""
    out = apply_bell_circuit(state)
    return condition_on_clicks(out, BELL_CLICK_MODES, eta_d, keep)


def bell_projection(
    state: PureState,
    physical: bool = False,
    eta_d: float = 1.0,
    keep: Sequence[str] = ("B",),
):
    """Dispatch between the rank-1 projector and the physical circuit."""
    if physical:
        return bell_project_physical(state, eta_d, keep)
    return bell_project_ideal(state)


# ------------------------------------------------------------- teleportation


def _exact_params(params: SourceParams) -> SourceParams:
    return params if params.order == "exact" else replace(params, order="exact")


def _teleport_predetection_state(
    chi: QubitSpec,
    params: SourceParams,
    delta_phi: float,
    cutoff: int,
) -> PureState:
    """Everything up to (not including) the three counters, exact order.

    The herald analysis rotation maps the D axis that announces ``chi``
    onto D_H, so the herald counter watches D_H and D_V holds the blocked
    component.
    """
    params = _exact_params(params)
    joint = tensor(
        build_bell_pair(params, delta_phi, cutoff),
        build_resource_omega(params, cutoff),
    )
    d = herald_setting_for(chi)
    joint = apply_pair_map(
        joint, "D_H", "D_V", _rotation_to_h(complex(d.a), complex(d.b))
    )
    # renormalize away the weight the cutoff truncation removed in the circuit
    return normalize(apply_bell_circuit(joint))


def teleport(
    chi: QubitSpec,
    params: SourceParams,
    delta_phi: float = 0.0,
    cutoff: int = DEFAULT_CUTOFF,
) -> Tuple[DensityMatrix, float]:
    """Conditional state of mode B given the herald and both projector clicks.

    Perturbative order heralds and projects with rank-1 operators, giving
    the pure output a|0>_B + b e^(-i(phi_gamma1-phi_alpha))|1>_B for
    alpha = gamma1; its probability carries the herald factor |gamma23|^2
    and the projection factor but no detector efficiencies. Exact order
    runs the physical circuit with SPCM counters, so the returned state
    includes multi-pair false positives and the probability is the true
    per-pulse triple-coincidence probability.
    """
    if params.order == "pert":
        bell = build_bell_pair(params, delta_phi, cutoff)
        chi_a, p_herald = herald_qubit(bell, herald_setting_for(chi))
        joint = tensor(chi_a, build_resource_omega(params, cutoff))
        remainder, p_bell = bell_project_ideal(joint, allow_null=False)
        return to_density(remainder), p_herald * p_bell
    pre = _teleport_predetection_state(chi, params, delta_phi, cutoff)
    clicks = (BELL_CLICK_MODES[0], BELL_CLICK_MODES[1], HERALD_CLICK_MODE)
    return condition_on_clicks(pre, clicks, params.eta_d, keep=("B",))


def ideal_teleport_target(
    chi: QubitSpec, params: SourceParams, cutoff: int = DEFAULT_CUTOFF
) -> PureState:
    """Pure state the teleporter aims for: a*alpha|0>_B + b*gamma1|1>_B."""
    reg = ModeRegister(("B",), (cutoff,))
    amps = {
        (0,): chi.a * params.alpha_amp,
        (1,): chi.b * params.gamma1_amp,
    }
    return normalize(PureState(reg, amps))


def teleport_fidelity(
    chi: QubitSpec,
    params: SourceParams,
    delta_phi: float = 0.0,
    cutoff: int = DEFAULT_CUTOFF,
) -> Tuple[float, float]:
    """Overlap of the teleported state with its ideal target, plus the rate."""
    rho, p = teleport(chi, params, delta_phi, cutoff)
    target = ideal_teleport_target(chi, params, cutoff).dense()
    f = float(np.real(target.conj() @ rho.matrix @ target))
    return f, p


# ------------------------------------------------------- entanglement swap


def swap_entanglement(
    params: SourceParams,
    delta_phi: float = 0.0,
    cutoff: int = DEFAULT_CUTOFF,
) -> Tuple[DensityMatrix, float]:
    """Joint D/B state conditioned on the projector alone (no herald).

    At perturbative order with alpha = gamma1 the output is the maximally
    entangled (|H>_D|1>_B + |V>_D|0>_B)/sqrt(2); exact order keeps the
    multi-pair admixtures the projector cannot filter.
    """
    joint = tensor(
        build_bell_pair(params, delta_phi, cutoff),
        build_resource_omega(params, cutoff),
    )
    if params.order == "pert":
        remainder, p = bell_project_ideal(joint, allow_null=False)
        return to_density(normalize(remainder)), p
    out = normalize(apply_bell_circuit(joint))
    return condition_on_clicks(
        out, BELL_CLICK_MODES, params.eta_d, keep=("D_H", "D_V", "B")
    )


def ideal_swap_target(
    params: SourceParams, cutoff: int = DEFAULT_CUTOFF
) -> PureState:
    """Target of the swap: gamma1|H>_D|1>_B + alpha|V>_D|0>_B, normalized."""
    reg = ModeRegister.uniform(["D_H", "D_V", "B"], cutoff)
    amps = {
        (1, 0, 1): params.gamma1_amp,
        (0, 1, 0): params.alpha_amp,
    }
    return normalize(PureState(reg, amps))


def swap_qubit_sector(rho: DensityMatrix) -> Tuple[DensityMatrix, float]:
    """Restrict a (D_H, D_V, B) state to exactly one photon in the D beam.

    The polarisation analyser that reads out D only ever reports on this
    sector: vacuum never fires it and double pairs are higher order. The
    result lives on a two-level mode "D_pol" (occupation 0 = H photon,
    1 = V photon) times the B ladder, which is the space the joint
    reconstruction works in. Returns the normalized sector state and the
    sector weight within ``rho``.
    """
    reg = rho.register
    if set(reg.labels) != {"D_H", "D_V", "B"}:
        raise ValueError(f"expected modes D_H, D_V, B, got {reg.labels}")
    b_cut = reg.cutoff_of("B")
    out_reg = ModeRegister(("D_pol", "B"), (1, b_cut))
    idx = []
    for pol, d_occ in ((0, (1, 0)), (1, (0, 1))):
        for n in range(b_cut + 1):
            occ = {"D_H": d_occ[0], "D_V": d_occ[1], "B": n}
            idx.append(reg.basis_index(tuple(occ[m] for m in reg.labels)))
    sub = rho.matrix[np.ix_(idx, idx)]
    weight = float(np.real(np.trace(sub)))
    if weight < 1e-30:
        raise NullOutcomeError("no single-photon weight in the D beam")
    return DensityMatrix(out_reg, sub / weight), weight


def ideal_swap_target_qubit(
    params: SourceParams, cutoff: int = DEFAULT_CUTOFF
) -> PureState:
    """Swap target in the analyser's qubit x Fock space (0 = H carries |1>_B)."""
    reg = ModeRegister(("D_pol", "B"), (1, cutoff))
    amps = {
        (0, 1): params.gamma1_amp,
        (1, 0): params.alpha_amp,
    }
    return normalize(PureState(reg, amps))


# ------------------------------------------------------ triple coincidences


def triple_budget(params: SourceParams) -> TripleBudget:
    """Printed scaling estimates of the triple-coincidence budget.

    p_good = eta_d^3 |g1|^2 |g23|^2, p_bad_a = 2 eta_d^3 |g23|^4,
    p_bad_c = 2 eta_d^3 |g1|^4 |g23|^2. The shared eta_d^3 cancels in
    fraction_bad.
    """
    e3 = params.eta_d**3
    g1_sq = abs(params.gamma1) ** 2
    g23_sq = abs(params.gamma23) ** 2
    return TripleBudget(
        p_good=e3 * g1_sq * g23_sq,
        p_bad_a=2.0 * e3 * g23_sq**2,
        p_bad_c=2.0 * e3 * g1_sq**2 * g23_sq,
    )


def triple_sector_probabilities(
    chi: QubitSpec,
    params: SourceParams,
    delta_phi: float = 0.0,
    cutoff: int = DEFAULT_CUTOFF,
) -> Dict[Tuple[int, int], float]:
    """Triple-coincidence probability split by emission pattern.

    Keys are (photons in the D beam, photons in the A+C beams) of each
    component entering the counters; the circuit conserves both numbers,
    so components of different keys cannot interfere in any click count
    and the split is exact. (1, 2) is the genuine event; (2, 2) and
    (1, 3) are the double-pair impostors.
    """
    pre = _teleport_predetection_state(chi, params, delta_phi, cutoff)
    reg = pre.register
    d_idx = [reg.index(m) for m in ("D_H", "D_V")]
    bell_idx = [reg.index(m) for m in ("A_H", "A_V", "C_H", "C_V")]
    sectors: Dict[Tuple[int, int], Dict[Occupation, complex]] = {}
    for occ, amp in pre.amps.items():
        key = (sum(occ[i] for i in d_idx), sum(occ[i] for i in bell_idx))
        sectors.setdefault(key, {})[occ] = amp
    clicks = (BELL_CLICK_MODES[0], BELL_CLICK_MODES[1], HERALD_CLICK_MODE)
    out: Dict[Tuple[int, int], float] = {}
    for key, amps in sectors.items():
        p = click_pattern_probability(
            PureState(reg, amps), clicks, params.eta_d, (1, 1, 1)
        )
        if p > 0.0:
            out[key] = p
    return out


def simulated_triple_breakdown(
    chi: QubitSpec,
    params: SourceParams,
    delta_phi: float = 0.0,
    cutoff: int = DEFAULT_CUTOFF,
) -> TripleBudget:
    """Triple budget measured from the exact-order simulation itself."""
    sectors = triple_sector_probabilities(chi, params, delta_phi, cutoff)
    return TripleBudget(
        p_good=sectors.get((1, 2), 0.0),
        p_bad_a=sectors.get((2, 2), 0.0),
        p_bad_c=sectors.get((1, 3), 0.0),
    )


def click_pattern_distribution(
    chi: QubitSpec,
    params: SourceParams,
    delta_phi: float = 0.0,
    cutoff: int = DEFAULT_CUTOFF,
) -> Dict[Tuple[int, int, int], float]:
    """Full per-pulse distribution over the three counters' click patterns.

    Patterns are (projector counter 1, projector counter 2, herald); the
    eight probabilities sum to 1 up to the cutoff truncation. The (1,1,1)
    entry equals the exact-order teleport probability.
    """
    pre = _teleport_predetection_state(chi, params, delta_phi, cutoff)
    clicks = (BELL_CLICK_MODES[0], BELL_CLICK_MODES[1], HERALD_CLICK_MODE)
    out: Dict[Tuple[int, int, int], float] = {}
    for bits in ((i, j, k) for i in (0, 1) for j in (0, 1) for k in (0, 1)):
        out[bits] = click_pattern_probability(pre, clicks, params.eta_d, bits)
    return out


def predetection_state(
    chi: QubitSpec,
    params: SourceParams,
    delta_phi: float = 0.0,
    cutoff: int = DEFAULT_CUTOFF,
) -> PureState:
    """Exact-order state of all beams just before the counters fire.

    This is the object the click arithmetic above consumes; it is exposed
    so rate checks can thin photons sample by sample instead of trusting
    the same inclusion-exclusion formulas they are meant to validate.
    """
    return _teleport_predetection_state(chi, params, delta_phi, cutoff)


# ------------------------------------------------------- calibration scans


def _hom_coincidence(params: SourceParams, xi: float, cutoff: int) -> float:
    """Two-counter coincidence after mixing the heralded photon with the drive.

    The drive is split into a component matched to the photon's mode
    (amplitude alpha*xi) and an orthogonal one (alpha*sqrt(1-xi^2)); the
    balanced splitter acts on both submode pairs and each counter watches
    both submodes of its output beam.
    """
    reg = ModeRegister.uniform(["s_m", "s_o", "c_m", "c_o"], cutoff)
    al = params.alpha_amp
    a_m = al * xi
    a_o = al * math.sqrt(max(0.0, 1.0 - xi * xi))
    if params.order == "pert":
        # first order keeps a single added drive photon, no cross term
        state = PureState(
            reg,
            {
                (1, 0, 0, 0): 1.0 + 0.0j,
                (1, 0, 1, 0): a_m,
                (1, 0, 0, 1): a_o,
            },
        )
    else:
        state = PureState(reg, {(1, 0, 0, 0): 1.0 + 0.0j})
        matched = coherent_state("t", a_m, cutoff, order="exact")
        ortho = coherent_state("t", a_o, cutoff, order="exact")
        state = _inject_single_mode(
            state, "c_m", [matched.amplitude((n,)) for n in range(cutoff + 1)]
        )
        state = _inject_single_mode(
            state, "c_o", [ortho.amplitude((n,)) for n in range(cutoff + 1)]
        )
    state = normalize(state)
    state = beam_splitter(state, "s_m", "c_m", 0.5)
    state = beam_splitter(state, "s_o", "c_o", 0.5)
    return click_pattern_probability(
        state, [("s_m", "s_o"), ("c_m", "c_o")], params.eta_d, (1, 1)
    )


def hom_visibility(
    params: SourceParams, xi: float = 1.0, cutoff: int = DEFAULT_CUTOFF
) -> float:
    """Two-photon interference visibility at mode overlap ``xi``.

    1 - C(xi)/C(0): fully distinguishable beams set the baseline. At
    perturbative order this equals xi^2 exactly; matched beams (xi=1)
    interfere completely and the coincidences vanish.
    """
    if not 0.0 <= xi <= 1.0:
        raise ValueError(f"mode overlap xi={xi} outside [0, 1]")
    if params.alpha_value == 0.0:
        raise ValueError("interference scan needs a nonzero coherent drive")
    base = _hom_coincidence(params, 0.0, cutoff)
    return 1.0 - _hom_coincidence(params, xi, cutoff) / base


def xi_for_visibility(
    target: float, params: SourceParams, cutoff: int = DEFAULT_CUTOFF
) -> float:
    """Mode overlap that reproduces a measured interference visibility."""
    if not 0.0 < target <= 1.0:
        raise ValueError(f"visibility {target} outside (0, 1]")
    f = lambda x: hom_visibility(params, x, cutoff) - target
    if f(1.0) < 0.0:
        raise ValueError(f"visibility {target} not reachable at this order")
    return float(brentq(f, 0.0, 1.0, xtol=1e-12))


_SCAN_ANALYSES: Mapping[str, Tuple[complex, complex]] = {
    "rectilinear": (1.0 + 0.0j, 0.0j),
    "diagonal": (_S + 0.0j, _S + 0.0j),
    "circular": (_S + 0.0j, 1j * _S),
}


def bell_visibility_scan(
    params: SourceParams,
    basis: str = "rectilinear",
    delta_phi: float = 0.0,
    n_angles: int = 24,
    cutoff: int = DEFAULT_CUTOFF,
) -> float:
    """Visibility of the pair correlations against the A-side plate angle.

    The D beam is analysed in a fixed state of the chosen basis while a
    half-wave plate scans beam A in front of an H analyser (a quarter-wave
    plate at pi/4 first maps circular onto linear). The coincidence
    probability follows c0 + c1 cos(4 theta) + c2 sin(4 theta); the
    visibility is sqrt(c1^2+c2^2)/c0, and equals 1 for the ideal pair.
    """
    if basis not in _SCAN_ANALYSES:
        raise ValueError(f"unknown analysis basis {basis!r}")
    d_h, d_v = _SCAN_ANALYSES[basis]
    bell = build_bell_pair(params, delta_phi, cutoff)
    reg = bell.register
    bra_reg = reg.subset(["A_H", "A_V", "D_H", "D_V"])
    bra = PureState(bra_reg, {(1, 0, 1, 0): d_h, (1, 0, 0, 1): d_v})
    thetas = np.linspace(0.0, math.pi / 2.0, n_angles, endpoint=False)
    probs = []
    for theta in thetas:
        st = bell
        if basis == "circular":
            st = quarter_wave_plate(st, "A", math.pi / 4.0)
        st = half_wave_plate(st, "A", float(theta))
        _, p = project(st, bra, allow_null=True)
        probs.append(p)
    design = np.column_stack(
        [np.ones_like(thetas), np.cos(4.0 * thetas), np.sin(4.0 * thetas)]
    )
    c, *_ = np.linalg.lstsq(design, np.asarray(probs), rcond=None)
    return float(math.hypot(c[1], c[2]) / c[0])


def single_rail_bell_measurement(state: PureState) -> Dict[Occupation, float]:
    """Outcome distribution of two single-rail modes mixed on a t=1/2 splitter.

    (|0,1> + |1,0>)/sqrt2 always fires the first counter,
    (|0,1> - |1,0>)/sqrt2 always the second: the splitter converts the
    single-rail phase into which-detector information.
    """
    reg = state.register
    if reg.n_modes != 2:
        raise ValueError("expected a register with exactly two modes")
    out = beam_splitter(state, reg.labels[0], reg.labels[1], 0.5)
    total = norm(out) ** 2
    return {
        occ: abs(a) ** 2 / total
        for occ, a in out.amps.items()
        if abs(a) ** 2 / total > 1e-24
    }
