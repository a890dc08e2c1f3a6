"""Command-line pipelines: simulate, sample, reconstruct, report.

Every subcommand is a pure function of (config, seed, input files) to an
output directory: rerunning with the same inputs reproduces the same
CSV/JSON bytes, and each directory gets exactly one manifest recording the
effective config, the resolved seed and the files written. All JSON
artifacts name and validate against a schema shipped with the package.

Failures print a machine-readable error object to stderr and exit nonzero;
parse errors in config, CSV or JSON inputs carry line information where
the underlying reader provides it.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import datetime as _dt
import json
import os
import sys
from dataclasses import replace
from importlib import resources
from typing import Dict, List, Optional, Sequence, Tuple

import jsonschema
import numpy as np

from . import __version__
from .config import (
    Config,
    ConfigError,
    default_config,
    load_config,
    to_rate_model,
    to_source_params,
)
from .fock import (
    DensityMatrix,
    PureState,
    density_from_json_dict,
    density_to_json_dict,
    normalize,
    project_density,
    to_density,
)
from .homodyne import QuadratureDataset, sample
from .protocol import (
    INPUT_STATES,
    ideal_swap_target_qubit,
    ideal_teleport_target,
    swap_entanglement,
    swap_qubit_sector,
    teleport,
)
from .rates import calibration_report
from .tomography import (
    ANALYSIS_SETTINGS,
    ReconstructionOptions,
    entanglement_witness,
    fidelity,
    joint_reconstruct_swapped,
    maxlik_reconstruct,
    result_to_json_dict,
    wigner,
)

# iteration cap for the small-sample corrected fits the pipeline runs;
# loss amplification makes those land well above the raw-fit default
PIPELINE_MAX_ITER = 6000

_SCHEMA_CACHE: Dict[str, dict] = {}


def _schema(kind: str) -> dict:
    if kind not in _SCHEMA_CACHE:
        text = (
            resources.files("railbridge")
            .joinpath("schemas", f"{kind}.schema.json")
            .read_text(encoding="utf-8")
        )
        _SCHEMA_CACHE[kind] = json.loads(text)
    return _SCHEMA_CACHE[kind]


def validate_artifact(kind: str, obj: dict) -> None:
    jsonschema.validate(obj, _schema(kind))


def _write_json(path: str, obj: dict, kind: str) -> None:
    validate_artifact(kind, obj)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _read_json(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        # exc already carries line and column
        raise ValueError(f"{path}: {exc}") from None
    except OSError as exc:
        raise ValueError(f"cannot read {path}: {exc}") from None


def _load_density(path: str) -> DensityMatrix:
    obj = _read_json(path)
    if "rho" in obj and isinstance(obj["rho"], dict):
        obj = obj["rho"]  # accept reconstruction results as well
    for key in ("labels", "cutoff", "re", "im"):
        if key not in obj:
            raise ValueError(f"{path}: not a density-matrix JSON (missing {key!r})")
    return density_from_json_dict(obj)


def resolve_seed(config: Config) -> int:
    """Flag and file seeds are already folded into config; then env, then 0."""
    if config.seed is not None:
        return config.seed
    env = os.environ.get("RAILBRIDGE_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(
                f"RAILBRIDGE_SEED={env!r} is not an integer"
            ) from None
    return 0


def _effective_config(args: argparse.Namespace) -> Config:
    config = load_config(args.config) if args.config else default_config()
    updates = {}
    for flag, key in (
        ("seed", "seed"),
        ("cutoff", "cutoff"),
        ("eta", "eta"),
        ("eta_d", "eta_d"),
        ("order", "order"),
        ("samples", "samples"),
    ):
        value = getattr(args, flag)
        if value is not None:
            updates[key] = value
    return replace(config, **updates) if updates else config


def _manifest(
    out_dir: str,
    command: str,
    argv: Sequence[str],
    config: Config,
    seed: int,
    outputs: List[str],
) -> None:
    manifest = {
        "schema": "manifest-1",
        "artifact": "railbridge",
        "version": __version__,
        "command": command,
        "argv": list(argv),
        "seed": seed,
        "config": config.to_dict(),
        "outputs": sorted(outputs),
        "created_at": _dt.datetime.now(_dt.timezone.utc).isoformat(),
    }
    _write_json(os.path.join(out_dir, "manifest.json"), manifest, "manifest-1")


def _density_file_dict(rho: DensityMatrix) -> dict:
    out = {"schema": "density-1"}
    out.update(density_to_json_dict(rho))
    return out


def _table(headers: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    widths = [
        max(len(h), *(len(r[i]) for r in rows)) for i, h in enumerate(headers)
    ]
    def fmt(cells):
        return "  ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip()
    lines = [fmt(headers), fmt(["-" * w for w in widths])]
    lines.extend(fmt(r) for r in rows)
    return "\n".join(lines)


# ------------------------------------------------------------- subcommands


def cmd_simulate(args, config: Config, out_dir: str) -> Tuple[List[str], str]:
    params = to_source_params(config)
    pert_params = replace(params, order="pert")
    outputs: List[str] = []
    inputs: Dict[str, dict] = {}
    for name, chi in INPUT_STATES.items():
        rho, p = teleport(chi, params, cutoff=config.cutoff)
        tvec = ideal_teleport_target(chi, params, config.cutoff).dense()
        f_conf = float(np.real(tvec.conj() @ rho.matrix @ tvec))
        if config.order == "pert":
            f_pert = f_conf
        else:
            rho_p, _ = teleport(chi, pert_params, cutoff=config.cutoff)
            f_pert = float(np.real(tvec.conj() @ rho_p.matrix @ tvec))
        fname = f"state_{name}.json"
        _write_json(
            os.path.join(out_dir, fname), _density_file_dict(rho), "density-1"
        )
        outputs.append(fname)
        inputs[name] = {
            "success_probability": p,
            "fidelity": f_conf,
            "fidelity_pert": f_pert,
            "state_file": fname,
        }
    report = {
        "schema": "simulate-1",
        "order": config.order,
        "cutoff": config.cutoff,
        "inputs": inputs,
        "average_fidelity": float(
            np.mean([row["fidelity"] for row in inputs.values()])
        ),
        "average_fidelity_pert": float(
            np.mean([row["fidelity_pert"] for row in inputs.values()])
        ),
    }
    _write_json(os.path.join(out_dir, "simulate.json"), report, "simulate-1")
    outputs.append("simulate.json")
    rows = [
        [
            name,
            f"{row['success_probability']:.3e}",
            f"{row['fidelity']:.4f}",
            f"{row['fidelity_pert']:.4f}",
        ]
        for name, row in inputs.items()
    ]
    rows.append(
        [
            "avg",
            "",
            f"{report['average_fidelity']:.4f}",
            f"{report['average_fidelity_pert']:.4f}",
        ]
    )
    text = _table(
        ["input", "p_success", f"F({config.order})", "F(pert)"], rows
    )
    return outputs, text


def cmd_sample(args, config: Config, out_dir: str) -> Tuple[List[str], str]:
    rho = _load_density(args.state)
    seed = resolve_seed(config)
    dataset = sample(
        rho,
        config.samples,
        eta=config.eta,
        seed=seed,
        source_label=os.path.basename(args.state),
    )
    fname = args.name or "samples.csv"
    dataset.write_csv(os.path.join(out_dir, fname))
    text = (
        f"{len(dataset)} samples from {args.state} at eta={config.eta} "
        f"-> {fname}"
    )
    return [fname], text


def cmd_reconstruct(args, config: Config, out_dir: str) -> Tuple[List[str], str]:
    eta_corr = args.eta if args.eta is not None else config.eta
    dataset = QuadratureDataset.read_csv(args.data, eta_assumed=eta_corr)
    opts = ReconstructionOptions(
        cutoff=args.cutoff if args.cutoff is not None else config.tomo_cutoff,
        eta_correction=eta_corr,
        max_iter=PIPELINE_MAX_ITER,
    )
    result = maxlik_reconstruct(dataset, opts)
    report = {"schema": "reconstruct-1"}
    report.update(result_to_json_dict(result))
    _write_json(os.path.join(out_dir, "reconstruct.json"), report, "reconstruct-1")
    diag = report["diagnostics"]
    text = (
        f"reconstructed {len(dataset)} samples at cutoff {opts.cutoff}, "
        f"eta correction {opts.eta_correction}: "
        f"{diag['iterations']} iterations, "
        f"converged={diag['converged']} -> reconstruct.json"
    )
    return ["reconstruct.json"], text


def cmd_wigner(args, config: Config, out_dir: str) -> Tuple[List[str], str]:
    rho = _load_density(args.state)
    lo, hi, n = args.grid
    n = int(n)
    if n < 2:
        raise ValueError(f"wigner grid needs at least 2 points, got {n}")
    axis = np.linspace(lo, hi, n)
    w = wigner(rho, axis, axis)
    fname = "wigner.csv"
    with open(os.path.join(out_dir, fname), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("q,p,w\n")
        for i, q in enumerate(axis):
            for j, p in enumerate(axis):
                fh.write(f"{float(q)!r},{float(p)!r},{float(w[i, j])!r}\n")
    imin = np.unravel_index(np.argmin(w), w.shape)
    imax = np.unravel_index(np.argmax(w), w.shape)
    text = (
        f"wigner on [{lo}, {hi}]^2 ({n}x{n}) -> {fname}\n"
        f"min W = {w[imin]:.6f} at (q, p) = ({axis[imin[0]]:.2f}, {axis[imin[1]]:.2f})\n"
        f"max W = {w[imax]:.6f} at (q, p) = ({axis[imax[0]]:.2f}, {axis[imax[1]]:.2f})"
    )
    return [fname], text


def cmd_swap(args, config: Config, out_dir: str) -> Tuple[List[str], str]:
    params = to_source_params(config)
    rho_full, p = swap_entanglement(params, cutoff=config.cutoff)
    sector, weight = swap_qubit_sector(rho_full)
    witness = entanglement_witness(sector)
    report = {
        "schema": "swap-1",
        "success_probability": p,
        "sector_weight": weight,
        "witness": witness,
        "qubit_sector": density_to_json_dict(sector),
        "full_state": density_to_json_dict(rho_full),
    }
    _write_json(os.path.join(out_dir, "swap.json"), report, "swap-1")
    verdict = "entangled" if witness["entangled"] else "not certified"
    text = (
        f"swap success probability {p:.3e}, one-photon sector weight "
        f"{weight:.4f}\nwitness overlap {witness['fidelity_to_max_entangled']:.4f} "
        f"(> 0.5 certifies): {verdict} -> swap.json"
    )
    return ["swap.json"], text


def cmd_rates(args, config: Config, out_dir: str) -> Tuple[List[str], str]:
    report = {"schema": "rates-1"}
    report.update(
        calibration_report(
            to_rate_model(config),
            include_circuit_check=True,
            cutoff=config.cutoff,
        )
    )
    _write_json(os.path.join(out_dir, "rates.json"), report, "rates-1")
    text = (
        f"eta_d = {report['eta_d']:.4f}, gamma1 = {report['gamma1']:.4f}, "
        f"gamma23 = {report['gamma23']:.4f}\n"
        f"predicted triple rate {report['predicted_triple_rate_hz']:.4f} Hz "
        f"(circuit {report['circuit_triple_rate_hz']:.4f} Hz, measured "
        f"{report['measured_triple_rate_hz']} +- "
        f"{report['measured_triple_rate_err_hz']} Hz) -> rates.json"
    )
    return ["rates.json"], text


def _pipeline_teleport_state(
    name: str,
    idx: int,
    config: Config,
    seed: int,
    out_dir: str,
) -> Tuple[str, dict]:
    params = to_source_params(config)
    chi = INPUT_STATES[name]
    rho, p = teleport(chi, params, cutoff=config.cutoff)
    dataset = sample(
        rho, config.samples, eta=config.eta, seed=seed + idx, source_label=name
    )
    fname = f"samples_{name}.csv"
    dataset.write_csv(os.path.join(out_dir, fname))
    raw = maxlik_reconstruct(
        dataset,
        ReconstructionOptions(
            cutoff=config.tomo_cutoff, eta_correction=1.0,
            max_iter=PIPELINE_MAX_ITER,
        ),
    )
    corrected = maxlik_reconstruct(
        dataset,
        ReconstructionOptions(
            cutoff=config.tomo_cutoff, eta_correction=config.eta,
            max_iter=PIPELINE_MAX_ITER,
        ),
    )
    target = to_density(
        ideal_teleport_target(chi, params, cutoff=config.tomo_cutoff)
    )
    return fname, {
        "success_probability": p,
        "fidelity_corrected": fidelity(corrected.rho, target),
        "fidelity_uncorrected": fidelity(raw.rho, target),
        "samples_file": fname,
    }


def _pipeline_swap(config: Config, seed: int, out_dir: str) -> Tuple[List[str], dict]:
    params = to_source_params(config)
    rho_full, p = swap_entanglement(params, cutoff=config.cutoff)
    sector, weight = swap_qubit_sector(rho_full)
    datasets: Dict[str, QuadratureDataset] = {}
    outputs: List[str] = []
    for j, (setting, vec) in enumerate(ANALYSIS_SETTINGS.items()):
        bra = PureState(
            sector.register.subset(["D_pol"]), {(0,): vec[0], (1,): vec[1]}
        )
        conditioned, _ = project_density(sector, bra)
        dataset = sample(
            normalize(conditioned),
            config.samples,
            eta=config.eta,
            seed=seed + len(INPUT_STATES) + j,
            source_label=setting,
        )
        fname = f"swap_samples_{setting}.csv"
        dataset.write_csv(os.path.join(out_dir, fname))
        outputs.append(fname)
        datasets[setting] = dataset
    common = dict(cutoff=config.tomo_cutoff, max_iter=PIPELINE_MAX_ITER)
    corrected = joint_reconstruct_swapped(
        datasets, ReconstructionOptions(eta_correction=config.eta, **common)
    )
    raw = joint_reconstruct_swapped(
        datasets, ReconstructionOptions(eta_correction=1.0, **common)
    )
    target = to_density(ideal_swap_target_qubit(params, cutoff=config.tomo_cutoff))
    section = {
        "success_probability": p,
        "sector_weight": weight,
        "samples_per_setting": config.samples,
        "fidelity_corrected": fidelity(corrected.rho, target),
        "fidelity_uncorrected": fidelity(raw.rho, target),
        "witness_corrected": entanglement_witness(corrected.rho),
        "witness_uncorrected": entanglement_witness(raw.rho),
    }
    return outputs, section


def cmd_pipeline(args, config: Config, out_dir: str) -> Tuple[List[str], str]:
    seed = resolve_seed(config)
    outputs: List[str] = []
    inputs: Dict[str, dict] = {}
    # the six teleport inputs are independent; run them concurrently with
    # per-state seeds so scheduling cannot affect any output byte
    with concurrent.futures.ThreadPoolExecutor(max_workers=6) as pool:
        futures = {
            name: pool.submit(
                _pipeline_teleport_state, name, idx, config, seed, out_dir
            )
            for idx, name in enumerate(INPUT_STATES)
        }
        for name in INPUT_STATES:
            fname, row = futures[name].result()
            outputs.append(fname)
            inputs[name] = row
    swap_outputs, swap_section = _pipeline_swap(config, seed, out_dir)
    outputs.extend(swap_outputs)
    report = {
        "schema": "pipeline-1",
        "teleport": {
            "order": config.order,
            "samples_per_state": config.samples,
            "eta": config.eta,
            "inputs": inputs,
            "average_fidelity_corrected": float(
                np.mean([r["fidelity_corrected"] for r in inputs.values()])
            ),
            "average_fidelity_uncorrected": float(
                np.mean([r["fidelity_uncorrected"] for r in inputs.values()])
            ),
        },
        "swap": swap_section,
    }
    _write_json(os.path.join(out_dir, "pipeline.json"), report, "pipeline-1")
    outputs.append("pipeline.json")
    rows = [
        [
            name,
            f"{row['success_probability']:.3e}",
            f"{row['fidelity_corrected']:.4f}",
            f"{row['fidelity_uncorrected']:.4f}",
        ]
        for name, row in inputs.items()
    ]
    tele = report["teleport"]
    rows.append(
        [
            "avg",
            "",
            f"{tele['average_fidelity_corrected']:.4f}",
            f"{tele['average_fidelity_uncorrected']:.4f}",
        ]
    )
    wit_c = swap_section["witness_corrected"]["fidelity_to_max_entangled"]
    wit_u = swap_section["witness_uncorrected"]["fidelity_to_max_entangled"]
    text = "\n".join(
        [
            _table(["input", "p_success", "F(corrected)", "F(uncorrected)"], rows),
            "",
            f"swap: F(corrected) = {swap_section['fidelity_corrected']:.4f}, "
            f"F(uncorrected) = {swap_section['fidelity_uncorrected']:.4f}",
            f"witness overlap: corrected {wit_c:.4f}, uncorrected {wit_u:.4f} "
            f"(> 0.5 certifies)",
        ]
    )
    return outputs, text


# ------------------------------------------------------------------ driver


HANDLERS = {
    "simulate": cmd_simulate,
    "sample": cmd_sample,
    "reconstruct": cmd_reconstruct,
    "wigner": cmd_wigner,
    "swap": cmd_swap,
    "rates": cmd_rates,
    "pipeline": cmd_pipeline,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="config file (key = value lines)")
    common.add_argument("--seed", type=int, help="override the run seed")
    common.add_argument(
        "--cutoff", type=int,
        help="Fock cutoff (simulation commands) or reconstruction cutoff",
    )
    common.add_argument(
        "--eta", type=float,
        help="homodyne efficiency: loss when sampling, correction when "
        "reconstructing",
    )
    common.add_argument("--eta-d", dest="eta_d", type=float,
                        help="click detector efficiency")
    common.add_argument("--order", choices=("pert", "exact"),
                        help="source expansion order")
    common.add_argument("--out", default="railbridge-out",
                        help="output directory (default railbridge-out)")
    common.add_argument("--samples", type=int,
                        help="samples per dataset (default from config)")

    parser = argparse.ArgumentParser(
        prog="railbridge",
        description="Teleportation between polarisation and photon-number "
        "qubits: simulation, homodyne sampling, loss-corrected tomography "
        "and rate calibration.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser(
        "simulate", parents=[common],
        help="teleport the six canonical inputs, write states and a table",
    )
    p_sample = sub.add_parser(
        "sample", parents=[common],
        help="draw homodyne samples from a density-matrix JSON",
    )
    p_sample.add_argument("state", help="density-matrix JSON file")
    p_sample.add_argument("--name", help="output CSV name (default samples.csv)")
    p_rec = sub.add_parser(
        "reconstruct", parents=[common],
        help="maximum-likelihood fit of a quadrature CSV",
    )
    p_rec.add_argument("data", help="quadrature CSV (theta_rad,x)")
    p_wig = sub.add_parser(
        "wigner", parents=[common],
        help="Wigner function of a density-matrix JSON on a square grid",
    )
    p_wig.add_argument("state", help="density-matrix JSON file")
    p_wig.add_argument(
        "--grid", nargs=3, type=float, default=(-4.0, 4.0, 81),
        metavar=("MIN", "MAX", "N"), help="axis range and point count",
    )
    sub.add_parser(
        "swap", parents=[common],
        help="heraldless projection: joint state and entanglement witness",
    )
    sub.add_parser(
        "rates", parents=[common],
        help="calibration report from the configured bench rates",
    )
    sub.add_parser(
        "pipeline", parents=[common],
        help="simulate, sample and reconstruct everything end to end",
    )
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _effective_config(args)
        os.makedirs(args.out, exist_ok=True)
        outputs, text = HANDLERS[args.command](args, config, args.out)
        _manifest(
            args.out, args.command, ["railbridge", *argv], config,
            resolve_seed(config), outputs,
        )
        print(text)
        return 0
    except (ConfigError, ValueError, OSError, jsonschema.ValidationError) as exc:
        error = {
            "error": {
                "type": type(exc).__name__,
                "command": args.command,
                "message": str(exc),
            }
        }
        print(json.dumps(error, sort_keys=True), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
