"""Count-rate calibration and the detection-efficiency budget.

Backward direction: measured singles and coincidence rates fix the pair
amplitudes and the overall detection efficiency. Forward direction: those
numbers predict the good-triple rate the full protocol should deliver.
Both directions are plain per-pulse arithmetic; the one modelling choice
(a polariser loss factor restoring pre-analyser rates) is isolated in
`estimate_gamma` and carried in every report.

A Monte Carlo photon-thinning check against the protocol circuit keeps the
forward formula honest: the formula is a scaling estimate and sits roughly
a factor two above the exact circuit probability, so the report exposes
the measured ratio instead of hiding it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Mapping, Optional, Sequence, Tuple

import numpy as np

from .protocol import (
    BELL_CLICK_MODES,
    DEFAULT_CUTOFF,
    HERALD_CLICK_MODE,
    INPUT_STATES,
    QubitSpec,
    SourceParams,
    click_pattern_distribution,
    predetection_state,
)

# bench reference the forward prediction is compared against
MEASURED_TRIPLE_RATE_HZ = 0.16
MEASURED_TRIPLE_RATE_ERR_HZ = 0.03


@dataclass(frozen=True)
class RateModel:
    """Measured rates of one calibration run, all in Hz.

    R_L is the pulse rate; R_alpha, R_gamma1, R_gamma23 are the singles
    rates of the coherent drive and the two pair-source arms after the
    analysers; R_cc is the herald-arm pair coincidence rate.
    projector_loss_factor undoes the analyser attenuation when a singles
    rate is converted back to an emission amplitude.
    """

    R_L: float = 76e6
    R_alpha: float = 22e3
    R_gamma1: float = 22e3
    R_gamma23: float = 1.7e3
    R_cc: float = 51.0
    projector_loss_factor: float = 4.0

    def __post_init__(self) -> None:
        for name in ("R_L", "R_alpha", "R_gamma1", "R_gamma23", "R_cc"):
            v = getattr(self, name)
            if v < 0.0:
                raise ValueError(f"{name}={v} is negative")
        if self.R_cc > self.R_gamma23:
            raise ValueError(
                f"coincidences exceed singles: R_cc={self.R_cc} > "
                f"R_gamma23={self.R_gamma23}"
            )
        if self.projector_loss_factor <= 0.0:
            raise ValueError(
                f"projector_loss_factor={self.projector_loss_factor} must be > 0"
            )

    @property
    def eta_d(self) -> float:
        """Detection efficiency derived from the coincidence ratio."""
        return estimate_eta_d(self.R_cc, self.R_gamma23)


@dataclass(frozen=True)
class EfficiencyBudget:
    """Multiplicative efficiency budget of the homodyne channel.

    loss_factor covers propagation and optics, mode_match the overlap with
    the local oscillator, photodiode_qe the diodes themselves. product is
    their forecast; measured_eta and drift are what the calibration fringe
    actually showed.
    """

    loss_factor: float
    mode_match: float
    photodiode_qe: float
    product: float
    measured_eta: float
    drift: float

    def __post_init__(self) -> None:
        for name in ("loss_factor", "mode_match", "photodiode_qe", "measured_eta"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")
        if self.drift < 0.0:
            raise ValueError(f"drift={self.drift} is negative")
        expected = self.loss_factor * self.mode_match * self.photodiode_qe
        if abs(self.product - expected) > 1e-12:
            raise ValueError(
                f"product={self.product} disagrees with factors ({expected})"
            )

    @property
    def discrepancy(self) -> float:
        """Forecast minus measurement; nonzero means unbudgeted loss."""
        return self.product - self.measured_eta

    def eta_interval(self) -> Tuple[float, float]:
        return (self.measured_eta - self.drift, self.measured_eta + self.drift)

    def eta_grid(self) -> Tuple[float, float, float]:
        """(low, nominal, high) efficiencies for reconstruction sweeps."""
        lo, hi = self.eta_interval()
        return (lo, self.measured_eta, hi)


# ------------------------------------------------------------- estimation


def estimate_eta_d(R_cc: float, R_gamma23: float) -> float:
    """Detection efficiency as the coincidence-to-singles ratio."""
    if R_cc < 0.0 or R_gamma23 < 0.0:
        raise ValueError(f"rates must be nonnegative, got ({R_cc}, {R_gamma23})")
    if R_gamma23 == 0.0:
        raise ValueError("R_gamma23 is zero, efficiency undefined")
    return R_cc / R_gamma23


def estimate_gamma(
    R: float, R_L: float, eta_d: float, loss_factor: float = 4.0
) -> float:
    """Emission amplitude from a singles rate.

    gamma = sqrt(loss_factor * R / (R_L * eta_d)). The singles are counted
    behind a polarisation analyser that keeps one port of one basis, so
    the bare ratio underestimates the emission probability by the
    loss_factor; with the default 4 the bench rates land on the amplitudes
    the interference scans calibrate independently. loss_factor=1 gives
    the at-analyser amplitude instead.
    """
    if R < 0.0:
        raise ValueError(f"rate R={R} is negative")
    if R_L <= 0.0 or eta_d <= 0.0:
        raise ValueError(f"R_L={R_L} and eta_d={eta_d} must both be > 0")
    if loss_factor <= 0.0:
        raise ValueError(f"loss_factor={loss_factor} must be > 0")
    return math.sqrt(loss_factor * R / (R_L * eta_d))


def rate_for_gamma(
    gamma: complex, R_L: float, eta_d: float, loss_factor: float = 4.0
) -> float:
    """Singles rate a source of amplitude gamma produces; inverts
    `estimate_gamma` exactly."""
    if R_L <= 0.0 or eta_d <= 0.0:
        raise ValueError(f"R_L={R_L} and eta_d={eta_d} must both be > 0")
    if loss_factor <= 0.0:
        raise ValueError(f"loss_factor={loss_factor} must be > 0")
    return abs(gamma) ** 2 * R_L * eta_d / loss_factor


def predict_triple_rate(model: RateModel, gammas: Sequence[complex]) -> float:
    """Good-triple rate in Hz from the scaling estimate.

    R = R_L * 1/2 * eta_d^3 * |gamma1|^2 * |gamma23|^2. This counts one
    herald pair plus one resource pair, all three photons detected; see
    `circuit_consistency` for how much the full circuit shaves off.
    """
    g1, g23 = gammas
    e = model.eta_d
    return model.R_L * 0.5 * e**3 * abs(g1) ** 2 * abs(g23) ** 2


def efficiency_budget(
    factors: Sequence[float], measured_eta: float, drift: float
) -> EfficiencyBudget:
    """Budget from (loss transmission, mode match, diode QE) factors."""
    loss_factor, mode_match, photodiode_qe = (float(f) for f in factors)
    return EfficiencyBudget(
        loss_factor=loss_factor,
        mode_match=mode_match,
        photodiode_qe=photodiode_qe,
        product=loss_factor * mode_match * photodiode_qe,
        measured_eta=measured_eta,
        drift=drift,
    )


# ---------------------------------------------- circuit consistency checks


def circuit_consistency(
    params: SourceParams,
    inputs: Optional[Mapping[str, QubitSpec]] = None,
    cutoff: int = DEFAULT_CUTOFF,
) -> Dict[str, object]:
    """Exact circuit triple probability versus the scaling formula.

    The formula overcounts: the projection circuit passes the resonant
    two-photon combination with probability 1/2 and the impostor budget
    shifts with the input, so the honest per-pulse probability runs near
    0.56 of the formula at bench amplitudes. Returned per input and as a
    mean so the forward rate can be quoted either way.
    """
    if inputs is None:
        inputs = INPUT_STATES
    formula = 0.5 * params.eta_d**3 * abs(params.gamma1) ** 2 * (
        abs(params.gamma23) ** 2
    )
    per_input = {
        name: click_pattern_distribution(chi, params, cutoff=cutoff)[(1, 1, 1)]
        for name, chi in inputs.items()
    }
    mean_circuit = float(np.mean(list(per_input.values())))
    return {
        "per_input": per_input,
        "circuit_probability": mean_circuit,
        "formula_probability": formula,
        "circuit_to_formula_ratio": mean_circuit / formula if formula else 0.0,
    }


@dataclass(frozen=True)
class ClickSimulation:
    """Outcome of a photon-thinning Monte Carlo run of the triple counters."""

    n_pulses: int
    n_triples: int
    p_analytic: float

    @property
    def p_mc(self) -> float:
        return self.n_triples / self.n_pulses

    @property
    def std_error(self) -> float:
        p = self.p_analytic
        return math.sqrt(p * (1.0 - p) / self.n_pulses)

    def consistent(self, n_sigma: float = 3.0) -> bool:
        return abs(self.p_mc - self.p_analytic) <= n_sigma * self.std_error


def simulate_triple_rate(
    chi: QubitSpec,
    params: SourceParams,
    n_pulses: int,
    seed: Optional[int] = None,
    cutoff: int = DEFAULT_CUTOFF,
) -> ClickSimulation:
    """Monte Carlo triple-coincidence count by per-photon thinning.

    Each pulse draws a Fock occupation of the three counter modes from the
    exact pre-detection state, thins every photon with the detection
    efficiency, and scores a triple when all three counters see at least
    one survivor. No inclusion-exclusion arithmetic is reused, so this is
    an independent route to the same number as the (1,1,1) entry of
    `click_pattern_distribution`.
    """
    if n_pulses <= 0:
        raise ValueError(f"n_pulses={n_pulses} must be positive")
    pre = predetection_state(chi, params, cutoff=cutoff)
    reg = pre.register
    idx = [reg.index(m) for m in (*BELL_CLICK_MODES, HERALD_CLICK_MODE)]
    # marginal over the three counter modes; hidden modes are orthogonal
    # bystanders so their probabilities just add up
    marginal: Dict[Tuple[int, int, int], float] = {}
    for occ, amp in pre.amps.items():
        key = (occ[idx[0]], occ[idx[1]], occ[idx[2]])
        marginal[key] = marginal.get(key, 0.0) + abs(amp) ** 2
    keys = np.array(list(marginal.keys()), dtype=np.int64)
    probs = np.array(list(marginal.values()), dtype=float)
    probs = probs / probs.sum()

    rng = np.random.default_rng(seed)
    draws = rng.choice(len(keys), size=n_pulses, p=probs)
    occ_per_pulse = keys[draws]
    detected = rng.binomial(occ_per_pulse, params.eta_d)
    n_triples = int(np.sum(np.all(detected >= 1, axis=1)))

    p_analytic = click_pattern_distribution(chi, params, cutoff=cutoff)[(1, 1, 1)]
    return ClickSimulation(
        n_pulses=n_pulses, n_triples=n_triples, p_analytic=p_analytic
    )


# ------------------------------------------------------------------ report


def calibration_report(
    model: RateModel,
    include_circuit_check: bool = False,
    cutoff: int = DEFAULT_CUTOFF,
) -> Dict[str, object]:
    """All derived calibration quantities as one JSON-ready mapping."""
    eta_d = model.eta_d
    gamma1 = estimate_gamma(
        model.R_gamma1, model.R_L, eta_d, model.projector_loss_factor
    )
    gamma23 = estimate_gamma(
        model.R_gamma23, model.R_L, eta_d, model.projector_loss_factor
    )
    report: Dict[str, object] = {
        "rates_in": {
            "R_L": model.R_L,
            "R_alpha": model.R_alpha,
            "R_gamma1": model.R_gamma1,
            "R_gamma23": model.R_gamma23,
            "R_cc": model.R_cc,
        },
        "projector_loss_factor": model.projector_loss_factor,
        "eta_d": eta_d,
        "gamma1": gamma1,
        "gamma23": gamma23,
        "predicted_triple_rate_hz": predict_triple_rate(model, (gamma1, gamma23)),
        "measured_triple_rate_hz": MEASURED_TRIPLE_RATE_HZ,
        "measured_triple_rate_err_hz": MEASURED_TRIPLE_RATE_ERR_HZ,
    }
    if include_circuit_check:
        params = SourceParams(gamma1=gamma1, gamma23=gamma23, eta_d=eta_d)
        check = circuit_consistency(params, cutoff=cutoff)
        report["circuit_check"] = check
        report["circuit_triple_rate_hz"] = (
            model.R_L * float(check["circuit_probability"])
        )
    return report

