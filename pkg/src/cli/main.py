"""
Command-line front end: steady, evolve, transform, mc and verify.

Options come from an optional KEY=value config file (--config) overlaid by
command-line flags. Every artifact starts with a header holding the tool
version, the parsed config, kernel constants, grid and seed.

Exit codes: 0 success, 2 config error, 3 numeric-domain error, 4 acceptance failure.
"""

import argparse
import json
import logging
import os
import sys
import time
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd
from dotenv import dotenv_values, load_dotenv
from pydantic import ValidationError

from src.core.errors import AcceptanceError, CoarseningLabError, ConfigError, NumericDomainError
from src.core.evolve import (
    DEFAULT_NORMS, integrate, recover_number_density,
)
from src.core.grid import GridDensity, GridSpec, uniform_density
from src.core.kernel import Kernel, new_kernel, theta_star
from src.core.linearize import WeightedNormSpec, forward_transform
from src.core.mc import (
    MEAN_FIELD, RING, SamplerSpec, aggregate_replicas, empirical_rescaled, init_ensemble,
    ks_distance, reference_cdf, run_replicas, run_until,
)
from src.core.profiles import (
    generalized_profile_spectral, moment_target, steady_state_ode, tail_constant,
)
from src.utils.artifacts import output_dir, write_frame_csv, write_json
from src.utils.provenance import build_header

from .models import ErrorResponse, KernelRecord, RunConfig, VerifyReport
from .verify import run_criteria

load_dotenv()

logger = logging.getLogger(__name__)

VARIANTS = {"mean-field": MEAN_FIELD, "ring": RING}
CDF_ROWS = 4096


def _kernel_constants(k: Kernel) -> Dict[str, Any]:
    record = k.as_record()
    record.pop("psi_coeffs")
    return record


def _grid(cfg: RunConfig) -> GridSpec:
    return GridSpec(h=cfg.h, y_max=cfg.y_max, pad=cfg.pad)


def _header(cfg: RunConfig, k: Kernel, seed: Optional[int] = None, **extra) -> Dict[str, Any]:
    return build_header(cfg.as_record(), _kernel_constants(k), _grid(cfg).as_record(), seed, extra or None)


def _path(cfg: RunConfig, name: str) -> str:
    return os.path.join(output_dir(cfg.output_dir), name)


def load_initial(cfg: RunConfig, k: Kernel) -> GridDensity:
    """uniform | steady:THETA | CSV path, resampled onto the run grid and normalized"""
    spec = _grid(cfg)
    if cfg.init == "uniform":
        return uniform_density(spec)
    if cfg.init.startswith("steady:"):
        try:
            theta = float(cfg.init.split(":", 1)[1])
        except ValueError as e:
            raise ConfigError(f"Cannot parse initial condition '{cfg.init}'") from e
        eta = generalized_profile_spectral(k, theta, spec)
        if not eta.meta.get("in_p", False):
            raise ConfigError(f"eta*_{theta} is not a probability density")
        return eta.with_values(eta.values / eta.mass)
    loaded = GridDensity.from_csv(cfg.init)
    values = np.interp(spec.y, loaded.y, loaded.values, left=0.0, right=0.0)
    if np.min(values) < 0.0:
        raise ConfigError(f"{cfg.init}: initial density has negative values")
    eta = GridDensity(h=spec.h, values=values, support_min=max(1.0, loaded.support_min))
    if eta.mass <= 0.0:
        raise ConfigError(f"{cfg.init}: initial density has no mass on [1, {spec.y_max}]")
    return eta.with_values(values / eta.mass)


def cmd_steady(cfg: RunConfig) -> List[str]:
    """eta*_theta by both methods for each theta, with moment and tail diagnostics"""
    k = new_kernel(cfg.kernel)
    spec = _grid(cfg)
    star = theta_star(k)
    files = []
    summary = {"theta_star": star, "profiles": []}
    for theta in cfg.theta:
        print(f"🔄 Computing eta*_{theta:g}...")
        in_p = theta <= 1.0
        diag: Dict[str, Any] = {"theta": theta, "beta": theta / k.q, "in_p": in_p,
                                "beyond_theta_star": bool(theta > star)}
        if not in_p:
            diag["note"] = "not in P" + (" (theta > theta*)" if theta > star else " (infinite mass)")
        ode = steady_state_ode(k, theta / k.q, spec.y_max, spec.h)
        frame = pd.DataFrame({"y": ode.y, "ode": ode.values})
        try:
            spectral = generalized_profile_spectral(k, theta, spec)
            frame["spectral"] = spectral.values
            frame["abs_diff"] = np.abs(spectral.values - ode.values)
            diag["max_abs_diff"] = float(frame["abs_diff"].max())
            diag["spectral_mass"] = spectral.mass if in_p else None
        except NumericDomainError as e:
            logger.warning("Spectral profile for theta=%g failed: %s", theta, e)
            diag["spectral_error"] = str(e)
        if in_p:
            diag["first_moment"] = ode.first_moment
            if theta == 1.0:
                diag["moment_target"] = moment_target(k)
            else:
                diag["tail_constant"] = tail_constant(k, theta)
                diag["tail_scaled_at_y_max"] = float(ode.y[-1] ** (1.0 + theta) * ode.values[-1])
        diag["ode_error_estimate"] = ode.meta.get("error_estimate")
        summary["profiles"].append(diag)
        name = f"steady_theta_{theta:g}.csv"
        files.append(write_frame_csv(_path(cfg, name), frame, _header(cfg, k, theta=theta, flags=diag)))
        status = "✅" if in_p else "⚠️ "
        print(f"{status} eta*_{theta:g}: {diag.get('note', 'in P')}")
    files.append(write_json(_path(cfg, "steady_summary.json"), summary, _header(cfg, k)))
    return files


def cmd_evolve(cfg: RunConfig) -> List[str]:
    """Direct integration with trace, number-density and snapshot artifacts"""
    k = new_kernel(cfg.kernel)
    eta0 = load_initial(cfg, k)
    norms = tuple(DEFAULT_NORMS) + (WeightedNormSpec(p=2, gamma=cfg.gamma),)
    print(f"🚀 Integrating to tau={cfg.tau_end:g} with dtau={cfg.dtau:.6g}...")
    trace = integrate(k, eta0, cfg.tau_end, dtau=cfg.dtau, snapshot_stride=cfg.snapshots, norm_specs=norms)
    header = _header(cfg, k)
    files = [
        write_frame_csv(_path(cfg, "evolve_trace.csv"), trace.to_frame(), header),
        write_frame_csv(_path(cfg, "evolve_number_density.csv"), recover_number_density(trace, 1.0), header),
    ]
    snapshot_index = []
    for i, (tau, snap) in enumerate(zip(trace.snapshot_taus, trace.snapshots)):
        if cfg.emit == "binary":
            path = _path(cfg, f"evolve_snapshot_{i:04d}.bin")
            snap.to_binary(path)
        else:
            path = _path(cfg, f"evolve_snapshot_{i:04d}.csv")
            frame = pd.DataFrame({"y": snap.y, "value": snap.values})
            write_frame_csv(path, frame, _header(cfg, k, tau=tau))
        snapshot_index.append({"index": i, "tau": tau, "path": os.path.basename(path)})
        files.append(path)
    files.append(write_json(_path(cfg, "evolve_snapshots.json"), {"snapshots": snapshot_index}, header))
    print(f"✅ Final mass {trace.masses[-1]:.12f}, beta {trace.beta_values[-1]:.6f}")
    return files


def cmd_transform(cfg: RunConfig) -> List[str]:
    """Counter-term decomposition of the initial condition"""
    k = new_kernel(cfg.kernel)
    eta0 = load_initial(cfg, k)
    theta = cfg.theta[0] if len(cfg.theta) == 1 else 1.0
    dec = forward_transform(k, eta0, theta)
    d = dec.d_on_grid
    meta = {"theta": dec.theta, "theta_over_q": dec.theta_over_q, "d0": dec.d0, **dec.meta}
    frame = pd.DataFrame({"y": d.y, "d": d.values})
    path = write_frame_csv(_path(cfg, "transform_d.csv"), frame, _header(cfg, k, decomposition=meta))
    print(f"✅ theta/q={dec.theta_over_q:.6g}, d0={dec.d0:.8g}")
    return [path, write_json(_path(cfg, "transform_summary.json"), meta, _header(cfg, k))]


def cmd_mc(cfg: RunConfig) -> List[str]:
    """Simulate, compare the rescaled empirical CDF with eta*_1"""
    k = new_kernel(cfg.kernel)
    spec = _grid(cfg)
    reference = generalized_profile_spectral(k, 1.0, spec)
    sampler = SamplerSpec.parse(cfg.sampler)
    variant = VARIANTS[cfg.variant]
    print(f"🚀 Simulating {cfg.count} intervals ({cfg.variant}, seed {cfg.seed})...")
    ens = init_ensemble(cfg.count, sampler, cfg.seed, variant)
    run_until(ens, k, cfg.grow * ens.cutoff, record_events=False)
    emp = empirical_rescaled(ens)
    ks = ks_distance(emp, reference)
    summary: Dict[str, Any] = {
        "cutoff": ens.cutoff,
        "count": ens.count,
        "events": ens.event_count,
        "ks_distance": ks,
        "relative_length_error": abs(ens.total_length() - ens.initial_total) / ens.initial_total,
        "stopped_early": ens.stopped_early,
        "stop_reason": ens.stop_reason,
        "rng": ens.rng_algorithm,
    }
    if cfg.replicas > 1:
        seeds = range(cfg.seed, cfg.seed + cfg.replicas)
        summary["replicas"] = aggregate_replicas(
            run_replicas(k, cfg.count, sampler, seeds, cfg.grow, reference, variant))
    header = _header(cfg, k, seed=cfg.seed, rng=ens.rng_algorithm)
    files = [write_json(_path(cfg, "mc_summary.json"), summary, header)]
    if cfg.emit_cdf:
        stride = max(1, len(emp.y) // CDF_ROWS)
        idx = np.unique(np.append(np.arange(0, len(emp.y), stride), len(emp.y) - 1))
        f_ref = reference_cdf(reference, emp.y[idx])
        frame = pd.DataFrame({"y": emp.y[idx], "F_emp": emp.F[idx], "F_ref": f_ref,
                              "|diff|": np.abs(emp.F[idx] - f_ref)})
        files.append(write_frame_csv(cfg.emit_cdf, frame, header))
    icon = "⚠️ " if ens.stopped_early else "✅"
    print(f"{icon} cutoff {ens.cutoff:.4f}, {ens.count} intervals, KS {ks:.4f}")
    return files


def cmd_verify(cfg: RunConfig) -> List[str]:
    """Run the acceptance suite; raises AcceptanceError if any criterion fails"""
    k = new_kernel(cfg.kernel)
    start = time.perf_counter()
    results = run_criteria(cfg.criteria)
    status = "pass" if all(r.passed for r in results) else "fail"
    report = VerifyReport(status=status, kernel=KernelRecord(**k.as_record()), results=results,
                          total_seconds=time.perf_counter() - start)
    path = write_json(_path(cfg, "verify_report.json"), report, _header(cfg, k))
    print("=" * 80)
    if report.failed:
        raise AcceptanceError(f"Failed criteria: {report.failed} (report: {path})")
    print(f"✅ All {len(results)} criteria passed (report: {path})")
    return [path]


COMMANDS = {
    "steady": cmd_steady,
    "evolve": cmd_evolve,
    "transform": cmd_transform,
    "mc": cmd_mc,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="coarsening-lab", description=__doc__.split("\n\n")[0].strip(),
                                     argument_default=argparse.SUPPRESS)
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="KEY=value file mirroring the flags")
    common.add_argument("--kernel", help="Merge weights p_1,...,p_N (default 0,1 i.e. Q=z^2)")
    common.add_argument("--h", type=float, help="Grid step (must divide 1)")
    common.add_argument("--y-max", dest="y_max", type=float, help="Right end of the grid")
    common.add_argument("--pad", type=int, help="Zero padding factor")
    common.add_argument("--seed", type=int, help="Random seed")
    common.add_argument("--output-dir", dest="output_dir", help="Artifact directory")
    common.add_argument("--log-level", dest="log_level", help="Logging level")

    sub = parser.add_subparsers(dest="command", required=True)
    steady = sub.add_parser("steady", parents=[common], help="Self-similar profiles")
    steady.add_argument("--theta", help="Comma-separated theta values")

    for name, text in (("evolve", "Direct time integration"), ("transform", "Counter-term decomposition")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--init", help="uniform | steady:THETA | file.csv")
        if name == "evolve":
            p.add_argument("--tau-end", dest="tau_end", type=float)
            p.add_argument("--dtau", type=float)
            p.add_argument("--gamma", type=float)
            p.add_argument("--emit", choices=["csv", "binary"])
            p.add_argument("--snapshots", type=int, help="Snapshot thinning stride")
        else:
            p.add_argument("--theta", help="theta of the singular part (default 1)")

    mc = sub.add_parser("mc", parents=[common], help="Stochastic merging simulation")
    mc.add_argument("--count", type=int)
    mc.add_argument("--sampler", help="constant:V | uniform:A,B | exponential:S")
    mc.add_argument("--variant", choices=sorted(VARIANTS))
    mc.add_argument("--grow", type=float, help="Target cutoff multiple")
    mc.add_argument("--replicas", type=int)
    mc.add_argument("--emit-cdf", dest="emit_cdf")

    verify = sub.add_parser("verify", parents=[common], help="Acceptance suite")
    verify.add_argument("--criteria", help="Comma-separated criterion numbers")
    return parser


def read_config_file(path: str) -> Dict[str, Any]:
    if not os.path.exists(path):
        raise FileNotFoundError(f"Config file not found at {path}")
    values = dotenv_values(path)
    return {key.strip().lower().replace("-", "_"): value for key, value in values.items() if value is not None}


def parse_config(argv: Optional[List[str]] = None) -> RunConfig:
    args = vars(build_parser().parse_args(argv))
    merged: Dict[str, Any] = {}
    config_path = args.pop("config", None)
    if config_path:
        merged.update(read_config_file(config_path))
    args.pop("log_level", None)
    merged.update(args)
    merged.pop("log_level", None)
    try:
        return RunConfig(**merged)
    except ValidationError as e:
        raise ConfigError(f"Invalid configuration: {e}") from e


def _configure_logging(argv: Optional[List[str]]) -> None:
    level = os.getenv("LOG_LEVEL", "INFO")
    if argv and "--log-level" in argv:
        i = argv.index("--log-level")
        if i + 1 < len(argv):
            level = argv[i + 1]
    logging.basicConfig(level=getattr(logging, str(level).upper(), logging.INFO),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def main(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    _configure_logging(argv)
    try:
        cfg = parse_config(argv)
        files = COMMANDS[cfg.command](cfg)
    except (CoarseningLabError, FileNotFoundError) as e:
        code = getattr(e, "exit_code", ConfigError.exit_code)
        error = ErrorResponse(error=str(e), error_type=type(e).__name__, exit_code=code)
        print(f"❌ {error.error}", file=sys.stderr)
        print(json.dumps(error.model_dump()), file=sys.stderr)
        return code
    for path in files:
        print(f"💾 {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
