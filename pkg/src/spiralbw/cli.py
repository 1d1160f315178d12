"""``spiralbw`` command line: one subcommand per pipeline.

    spiralbw <subcommand> (--config PATH | --preset NAME) [--out DIR] [--seed N]
             [--threads N] [--infinite-counts]

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import io
from .config import COMMANDS, PRESETS, STATES, ScenarioConfig, load_config, load_preset
from .errors import ConfigError, SpiralBWError
from .fitting import fit_exponential, fit_lorentzian
from .fwm import spiral_spectrum
from .measurement import DecayModel, expected_counts, ring_contrast_scan, sample_means
from .metrics import contrast, simulate_chsh, witness_from_state
from .qstate import StateVector, fidelity, pure_density, product_labels
from .tomography import linear_reconstruct, mc_uncertainty, min_eigenvalue, mle_reconstruct, simulate_run


def _paths(cfg: ScenarioConfig, command: str):
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    stem = cfg.prefix or command
    return lambda suffix: cfg.out_dir / f"{stem}{suffix}"


def _target(cfg: ScenarioConfig):
    terms, s1, s2 = STATES[cfg.run.state]
    psi = StateVector.from_terms(terms, labels=product_labels(s1, s2))
    return pure_density(psi), s1, s2


def _spectrum_fit(cfg, fwm):
    spec = spiral_spectrum(fwm, cfg.chi, cfg.l_range, threads=cfg.run.threads)
    centre = (fwm.l_w + fwm.l_r) / 2
    ls, ws = spec.as_arrays()
    fit = fit_lorentzian(list(zip(ls - centre, ws)))
    return spec, fit, centre


def cmd_spectrum(cfg: ScenarioConfig) -> dict:
    path = _paths(cfg, "spectrum")
    spec, fit, centre = _spectrum_fit(cfg, cfg.fwm)
    io.write_table(path(".csv"), ("l", "weight"), spec.entries)
    report = {
        "l_w": spec.l_w,
        "l_r": spec.l_r,
        "centre": centre,
        "fit": {k: fit.params[k] for k in ("y0", "w", "a")},
        "residual_sum_squares": fit.residual_sum_squares,
        "converged": fit.converged,
        "flags": list(fit.flags),
        "tail_mass": spec.tail_mass,
        "flagged_l": list(spec.flagged),
    }
    if cfg.baseline and (spec.l_w, spec.l_r) != (0, 0):
        _, base, _ = _spectrum_fit(cfg, cfg.fwm.with_charges(0, 0))
        report["baseline_w"] = base.params["w"]
        report["width_ratio"] = fit.params["w"] / base.params["w"]
    io.write_json(path(".json"), report)
    line = f"w = {fit.params['w']:.6g}"
    if "width_ratio" in report:
        line += f"  (baseline {report['baseline_w']:.6g}, ratio {report['width_ratio']:.4g})"
    print(line)
    return report


def cmd_tomography(cfg: ScenarioConfig) -> dict:
    path = _paths(cfg, "tomography")
    rho_ideal, s1, s2 = _target(cfg)
    run = simulate_run(
        rho_ideal, cfg.noise, cfg.run.duration_s, cfg.run.seed, s1_pair=s1, s2_pair=s2, infinite=cfg.run.infinite_counts
    )
    res = mle_reconstruct(run, fit_background=cfg.run.fit_background)
    f = fidelity(res.rho, rho_ideal)
    lin = linear_reconstruct(run)
    if cfg.run.infinite_counts:
        std, mc_mean, failed = 0.0, f, 0
    else:
        mc = mc_uncertainty(
            run,
            cfg.run.replicas,
            lambda r: fidelity(r, rho_ideal),
            cfg.run.seed,
            threads=cfg.run.threads,
            fit_background=cfg.run.fit_background,
        )
        std, mc_mean, failed = mc.std, mc.mean, mc.failed
    io.write_density(path("_rho.txt"), res.rho)
    (path("_counts.csv")).write_text(io.dumps_records(run.records))
    report = {
        "state": cfg.run.state,
        "fidelity": f,
        "fidelity_std": std,
        "fidelity_mc_mean": mc_mean,
        "mc_failed": failed,
        "converged": res.converged,
        "iterations": res.iterations,
        "nll": res.nll,
        "scale": res.scale,
        "background": res.background,
        "linear_min_eigenvalue": min_eigenvalue(lin),
        "linear_physical": lin.is_physical(),
    }
    io.write_json(path(".json"), report)
    print(f"fidelity = {f:.4f} ± {std:.4f}")
    return report


def cmd_chsh(cfg: ScenarioConfig) -> dict:
    path = _paths(cfg, "chsh")
    rho, s1, s2 = _target(cfg)
    res = simulate_chsh(
        rho,
        s1,
        s2,
        cfg.noise,
        cfg.run.duration_s,
        cfg.run.seed,
        settings=cfg.run.chsh,
        infinite=cfg.run.infinite_counts,
        replicas=cfg.run.replicas,
    )
    s = cfg.run.chsh
    rows = [(t2, t1, *res.counts[i], e) for i, ((t2, t1), e) in enumerate(zip(s.pairs(), res.correlations))]
    io.write_table(path(".csv"), ("theta_s2", "theta_s1", "c11", "c_pp", "c1p", "cp1", "E"), rows)
    report = {
        "state": cfg.run.state,
        "S": res.S,
        "sigma": res.sigma,
        "E": list(res.correlations),
        "settings": {
            "theta_s1": s.theta_s1,
            "theta_s1_prime": s.theta_s1_prime,
            "theta_s2": s.theta_s2,
            "theta_s2_prime": s.theta_s2_prime,
        },
    }
    io.write_json(path(".json"), report)
    print(f"S = {res.S:.4f} ± {res.sigma:.4f}")
    return report


def cmd_witness(cfg: ScenarioConfig) -> dict:
    path = _paths(cfg, "witness")
    modes = list(cfg.run.modes)
    psi = StateVector.from_terms({(-m, m): 1.0 for m in modes}, labels=product_labels([-m for m in modes], modes))
    rep = witness_from_state(
        pure_density(psi),
        modes,
        cfg.noise,
        cfg.run.duration_s,
        cfg.run.seed,
        infinite=cfg.run.infinite_counts,
        replicas=cfg.run.replicas,
    )
    report = rep.to_dict()
    report["modes"] = modes
    report["significance"] = [{"d": d, "sigmas": rep.significance(d)} for d, _ in rep.bounds]
    io.write_json(path(".json"), report)
    sig = rep.significance(rep.certified_dimension - 1) if rep.certified_dimension > 1 else None
    extra = f", {sig:.1f} s.d. above W_{rep.certified_dimension - 1}" if sig is not None else ""
    print(f"W = {rep.W:.4f} ± {rep.sigma_W or 0.0:.4f}, certified dimension {rep.certified_dimension}{extra}")
    return report


def cmd_multiplex(cfg: ScenarioConfig) -> dict:
    path = _paths(cfg, "multiplex")
    rows = []
    for dl, same, diff in ring_contrast_scan(cfg.run.delta_l, cfg.fwm, cfg.run.inner_waist):
        rows.append((dl, same, diff, contrast(same, diff)))
    io.write_table(path(".csv"), ("delta_l", "c_same", "c_diff", "contrast"), rows)
    report = {
        "pump_convention": cfg.fwm.pump_profile_convention.value,
        "rows": [{"delta_l": r[0], "c_same": r[1], "c_diff": r[2], "contrast": r[3]} for r in rows],
    }
    io.write_json(path(".json"), report)
    for r in rows:
        print(f"delta_l = {r[0]:2d}  contrast = {r[3]:.6f}")
    return report


def cmd_decay(cfg: ScenarioConfig) -> dict:
    path = _paths(cfg, "decay")
    delays = np.array(cfg.decay.delays_ns)
    tau = cfg.decay.model.tau
    means = np.array(
        [float(expected_counts(cfg.decay.probability, DecayModel(tau, t), cfg.noise, cfg.run.duration_s)) for t in delays]
    )
    counts = means if cfg.run.infinite_counts else sample_means(means, cfg.run.seed).astype(float)
    # known accidental level is subtracted before fitting A exp(-t / tau)
    signal = counts - cfg.noise.background_rate * cfg.run.duration_s
    io.write_table(path(".csv"), ("delay_ns", "counts"), zip(delays, counts))
    fit = fit_exponential(list(zip(delays, signal)))
    report = {
        "tau_ns": fit.params["tau"],
        "amplitude": fit.params["A"],
        "true_tau_ns": tau,
        "converged": fit.converged,
        "residual_sum_squares": fit.residual_sum_squares,
        "flags": list(fit.flags),
    }
    io.write_json(path(".json"), report)
    print(f"tau = {fit.params['tau']:.6g} ns")
    return report


HANDLERS = {
    "spectrum": cmd_spectrum,
    "tomography": cmd_tomography,
    "chsh": cmd_chsh,
    "witness": cmd_witness,
    "multiplex": cmd_multiplex,
    "decay": cmd_decay,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spiralbw", description="Spiral-bandwidth OAM memory simulator")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=HANDLERS[name].__name__.replace("cmd_", "") + " scenario")
        src = p.add_mutually_exclusive_group(required=True)
        src.add_argument("--config", type=Path, help="TOML scenario file")
        src.add_argument("--preset", help=f"built-in scenario: {', '.join(PRESETS)}")
        p.add_argument("--out", type=Path, help="output directory (overrides [output].dir)")
        p.add_argument("--seed", type=int)
        p.add_argument("--threads", type=int)
        p.add_argument("--infinite-counts", action="store_true", help="use exact expected counts instead of Poisson draws")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.command) if args.config else load_preset(args.preset, args.command)
        if cfg.command and cfg.command != args.command:
            raise ConfigError(f"config is for {cfg.command!r}, not {args.command!r}")
        if args.seed is not None and args.seed < 0:
            raise ConfigError("--seed must be non-negative")
        cfg = cfg.override(seed=args.seed, threads=args.threads, infinite=args.infinite_counts, out=args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        HANDLERS[args.command](cfg)
    except (SpiralBWError, ArithmeticError, ValueError) as exc:
        print(f"numeric error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
