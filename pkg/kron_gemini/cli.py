#!/usr/bin/env python3
"""
kron-gemini command line
Simulation, estimation, ROC and cross-validation harnesses, diagnostics and replay
"""

import os
import sys
import logging
import argparse
from dataclasses import dataclass, field
from typing import Dict, Any, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .clime import ClimeOptions
from .config import CLIME_INNER_SOLVERS, EVENT_PROVIDERS, Settings, load_settings, validate
from .errors import ConfigError, DimensionMismatch, KronGeminiError, NumericalError
from .evaluation import (EvalReport, cross_validate, diagnostics, roc_sweep, score_estimate,
                         star_truth, write_reports)
from .events import EventLogManager
from .flipflop import nipff
from .gemini import (CONSTANT_MODES, DEFAULT_GRID, PENALTY_MODES, SOLVERS, GeminiFit, PenaltyConfig,
                     assemble_kronecker, gemini_estimate, normalize_star)
from .glasso import GlassoOptions
from .matrices import (DataSet, PrecisionEstimate, RngSpec, SymMatrix, correlation_form,
                       sample_matrix_normal)
from .models import GroundTruth, build_model
from .storage import (ensure_dir, read_edges_csv, read_json, read_matrix_csv, write_edges_csv,
                      write_json, write_matrix_csv, write_rows_csv)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4

RUN_CONFIG_FILE = "run_config.json"
MANIFEST_FILE = "manifest.json"


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved command; written next to every output for provenance and replay"""

    command: str
    params: Dict[str, Any]
    seed: int
    settings: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {"command": self.command, "params": self.params, "seed": self.seed,
                "settings": self.settings}

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "RunConfig":
        try:
            return cls(command=d["command"], params=dict(d["params"]), seed=int(d["seed"]),
                       settings=dict(d.get("settings", {})))
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"Malformed run config: {e}")


# ---------------------------------------------------------------------------
# argument helpers
# ---------------------------------------------------------------------------

def parse_grid(text: Optional[str]) -> Tuple[float, ...]:
    """'0.02,0.04,0.1' or 'start:stop:step' (inclusive stop); None gives the default grid"""
    if text is None:
        return DEFAULT_GRID
    try:
        if ":" in text:
            start, stop, step = (float(x) for x in text.split(":"))
            if step <= 0:
                raise ConfigError(f"Grid step must be positive: {text}")
            count = int(np.floor((stop - start) / step + 1e-9)) + 1
            return tuple(round(start + k * step, 12) for k in range(count))
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise ConfigError(f"Malformed penalty grid: {text}")


def _resolve_settings(args: argparse.Namespace) -> Settings:
    settings = load_settings(getattr(args, "config", None))
    return settings.with_overrides(threads=getattr(args, "threads", None),
                                   log_level=getattr(args, "log_level", None),
                                   event_provider=getattr(args, "event_provider", None),
                                   clime_inner=getattr(args, "clime_inner", None))


def _penalty_config(args: argparse.Namespace, settings: Settings) -> PenaltyConfig:
    mode = args.penalty_mode
    if mode is None:
        mode = "explicit" if args.lambda_a is not None and args.lambda_b is not None else "theory"
    return PenaltyConfig(mode=mode, lambda_a=args.lambda_a, lambda_b=args.lambda_b, c=args.c,
                         eps=args.eps, c_hat_a=args.c_hat_a, c_hat_b=args.c_hat_b, constants=args.constants,
                         grid=parse_grid(args.grid), min_penalty=settings.min_penalty,
                         lambda_a0=args.lambda_a0, lambda_b1=args.lambda_b1, lambda_a1=args.lambda_a1,
                         c2=args.c2, c3=args.c3, folds=args.folds, cv_trials=args.trials,
                         seed=args.seed)


def _write_run_config(out_dir: str, command: str, args: argparse.Namespace, settings: Settings) -> str:
    skip = {"func", "config", "command"}
    params = {k: v for k, v in sorted(vars(args).items()) if k not in skip}
    run = RunConfig(command=command, params=params, seed=int(args.seed), settings=settings.to_dict())
    return write_json(os.path.join(out_dir, RUN_CONFIG_FILE), run.to_dict())


# ---------------------------------------------------------------------------
# data ingestion
# ---------------------------------------------------------------------------

def load_dataset(args: argparse.Namespace) -> DataSet:
    """Replicates from a simulate-style directory (manifest.json) or an explicit file list"""
    if args.input:
        manifest = read_json(os.path.join(args.input, MANIFEST_FILE))
        files = [os.path.join(args.input, name) for name in manifest["replicates"]]
        data = DataSet.from_list(read_matrix_csv(p, header=args.header) for p in files)
        if (data.f, data.m, data.n) != (manifest["f"], manifest["m"], manifest["n"]):
            raise DimensionMismatch(f"Replicates in {args.input} do not match the manifest dims "
                                    f"(f={manifest['f']}, m={manifest['m']}, n={manifest['n']})")
        return data
    if args.files:
        return DataSet.from_list(read_matrix_csv(p, header=args.header) for p in args.files)
    raise ConfigError("Provide --input DIR or --files X1.csv ...")


def write_truth(out_dir: str, prefix: str, truth: GroundTruth) -> None:
    write_matrix_csv(os.path.join(out_dir, f"{prefix}_cov.csv"), truth.covariance)
    write_matrix_csv(os.path.join(out_dir, f"{prefix}_prec.csv"), truth.precision)
    write_edges_csv(os.path.join(out_dir, f"{prefix}_edges.csv"), truth.edge_set, truth.precision)


def load_truth(truth_dir: str, prefix: str) -> GroundTruth:
    cov = read_matrix_csv(os.path.join(truth_dir, f"{prefix}_cov.csv"))
    prec = read_matrix_csv(os.path.join(truth_dir, f"{prefix}_prec.csv"))
    edges = read_edges_csv(os.path.join(truth_dir, f"{prefix}_edges.csv"), p=cov.shape[0])
    return GroundTruth(covariance=SymMatrix(cov), precision=SymMatrix(prec), edge_set=tuple(edges),
                       model_tag="file", parameters={"path": truth_dir})


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_simulate(args: argparse.Namespace, settings: Settings, events: EventLogManager) -> Dict[str, Any]:
    """Sample replicates from A (x) B and write them with the ground truth"""
    out = ensure_dir(args.out)
    rng = RngSpec(args.seed)
    truth_a = build_model(args.model_a, args.m, rng, tag=0)
    truth_b = build_model(args.model_b, args.f, rng, tag=1)
    data = sample_matrix_normal(truth_a.covariance, truth_b.covariance, args.n, rng,
                                threads=settings.threads)

    names = []
    for t, x in enumerate(data, start=1):
        name = f"X_{t}.csv"
        write_matrix_csv(os.path.join(out, name), x)
        names.append(name)
    write_truth(out, "A", truth_a)
    write_truth(out, "B", truth_b)
    manifest = {"f": data.f, "m": data.m, "n": data.n, "seed": args.seed, "replicates": names,
                "model_a": {"spec": args.model_a, **truth_a.parameters},
                "model_b": {"spec": args.model_b, **truth_b.parameters}}
    write_json(os.path.join(out, MANIFEST_FILE), manifest)
    events.log_custom_event("simulate", {"f": data.f, "m": data.m, "n": data.n})
    logger.info(f"Wrote {data.n} replicates of {data.f} x {data.m} to {out}")
    return manifest


def _gemini_outputs(out: str, fit: GeminiFit, settings: Settings) -> Tuple[PrecisionEstimate, PrecisionEstimate, Dict[str, Any]]:
    a_star_prec, b_star_prec = normalize_star(fit, settings.edge_tol)
    write_matrix_csv(os.path.join(out, "A_rho.csv"), fit.a_rho)
    write_matrix_csv(os.path.join(out, "B_rho.csv"), fit.b_rho)
    write_matrix_csv(os.path.join(out, "A_prec.csv"), fit.a_prec)
    write_matrix_csv(os.path.join(out, "B_prec.csv"), fit.b_prec)

    kron = assemble_kronecker(fit, settings.kron_guard)
    write_matrix_csv(os.path.join(out, "A_factor.csv"), kron.a_factor)
    write_matrix_csv(os.path.join(out, "B_factor.csv"), kron.b_factor)
    if kron.explicit is not None:
        write_matrix_csv(os.path.join(out, "kron_cov.csv"), kron.explicit)
        write_matrix_csv(os.path.join(out, "kron_prec.csv"), kron.explicit_inverse)

    doc = {"method": "gemini", "solver": fit.solver_used, "f": fit.f, "m": fit.m,
           "lambda_a": fit.lambda_a, "lambda_b": fit.lambda_b, "penalties": fit.penalties.to_dict(),
           "stats": fit.stats, "w1": fit.weights.w1, "w2": fit.weights.w2,
           "frob2_mean": fit.weights.frob2_mean, "kronecker_explicit": kron.explicit is not None}
    return a_star_prec, b_star_prec, doc


def _nipff_outputs(out: str, data: DataSet, cfg: PenaltyConfig, settings: Settings,
                   events: EventLogManager) -> Tuple[PrecisionEstimate, PrecisionEstimate, Dict[str, Any]]:
    res = nipff(data, cfg, GlassoOptions.from_settings(settings), events=events)
    write_matrix_csv(os.path.join(out, "B1.csv"), res.b1)
    write_matrix_csv(os.path.join(out, "A_star.csv"), res.a_star)
    write_matrix_csv(os.path.join(out, "B_star.csv"), res.b_star)
    for prefix, star, prec in (("A", res.a_star, res.a_prec), ("B", res.b_star, res.b_prec)):
        d = np.sqrt(np.diag(star.entries))
        rho = correlation_form(star)
        write_matrix_csv(os.path.join(out, f"{prefix}_rho.csv"), rho)
        write_matrix_csv(os.path.join(out, f"{prefix}_prec.csv"), np.outer(d, d) * prec.entries)

    doc = {"method": "nipff", "solver": "glasso", "f": data.f, "m": data.m,
           "orientation": res.orientation, "lambda_a0": res.penalties_used[0],
           "lambda_b1": res.penalties_used[1], "lambda_a1": res.penalties_used[2],
           "penalties": cfg.to_dict(), "stats": res.stats}
    return res.a_prec, res.b_prec, doc


def _truth_report(truth_dir: str, label: str, lam: Tuple[float, float], a_prec: PrecisionEstimate,
                  b_prec: PrecisionEstimate, edge_tol: float) -> Tuple[Dict[str, EvalReport], Dict[str, EvalReport]]:
    star = star_truth(load_truth(truth_dir, "A"), load_truth(truth_dir, "B"))
    omega, pi = {}, {}
    for target, est, truth, edges, penalty, bucket in (
            ("omega", a_prec, star.omega, star.omega_edges, lam[0], omega),
            ("pi", b_prec, star.pi, star.pi_edges, lam[1], pi)):
        row = {"penalty": penalty, **score_estimate(est, truth, edges, edge_tol)}
        avg = {"penalty": penalty, "trials": 1, **{k: row[k] for k in ("fpr", "fnr", "mcc", "rel_err_op", "rel_err_frob")}}
        bucket[label] = EvalReport(label=label, target=target, penalties=(penalty,), rows=[avg],
                                   trial_rows=[{"target": target, "label": label, "trial": 0, **row}],
                                   trials_used=1)
    return omega, pi


def cmd_estimate(args: argparse.Namespace, settings: Settings, events: EventLogManager) -> Dict[str, Any]:
    """Fit Gemini or NiPFF to replicate files and write the estimates"""
    out = ensure_dir(args.out)
    data = load_dataset(args)
    cfg = _penalty_config(args, settings)

    if args.method == "gemini":
        fit = gemini_estimate(data, cfg, solver=args.solver,
                              glasso_opts=GlassoOptions.from_settings(settings),
                              clime_opts=ClimeOptions.from_settings(settings),
                              threads=settings.threads, events=events)
        a_star_prec, b_star_prec, doc = _gemini_outputs(out, fit, settings)
        used = (fit.lambda_b, fit.lambda_a)
    else:
        if args.solver != "glasso":
            raise ConfigError("nipff runs on glasso only")
        a_star_prec, b_star_prec, doc = _nipff_outputs(out, data, cfg, settings, events)
        used = (doc["lambda_b1"], doc["lambda_a1"])

    write_matrix_csv(os.path.join(out, "A_star_prec.csv"), a_star_prec)
    write_matrix_csv(os.path.join(out, "B_star_prec.csv"), b_star_prec)
    write_edges_csv(os.path.join(out, "A_edges.csv"), a_star_prec.edge_set, a_star_prec)
    write_edges_csv(os.path.join(out, "B_edges.csv"), b_star_prec.edge_set, b_star_prec)
    doc["n"] = data.n
    doc["edges_a"] = len(a_star_prec.edge_set)
    doc["edges_b"] = len(b_star_prec.edge_set)
    write_json(os.path.join(out, "fit.json"), doc)

    if args.truth:
        omega, pi = _truth_report(args.truth, args.method, used, a_star_prec, b_star_prec, settings.edge_tol)
        write_reports(out, omega, pi, stem="eval")
    logger.info(f"{args.method} fit written to {out}: {doc['edges_a']} A edges, {doc['edges_b']} B edges")
    return doc


def cmd_roc(args: argparse.Namespace, settings: Settings, events: EventLogManager) -> Dict[str, Any]:
    """Monte-Carlo ROC sweep on simulated models"""
    out = ensure_dir(args.out)
    rng = RngSpec(args.seed)
    truth_a = build_model(args.model_a, args.m, rng, tag=0)
    truth_b = build_model(args.model_b, args.f, rng, tag=1)
    grid = parse_grid(args.grid)
    grid_a = parse_grid(args.grid_a) if args.grid_a else grid
    grid_b = parse_grid(args.grid_b) if args.grid_b else grid
    omega, pi = roc_sweep(truth_a, truth_b, args.n, grid_a, grid_b, args.trials, method=args.method,
                          rng=rng, solver=args.solver,
                          glasso_opts=GlassoOptions.from_settings(settings),
                          clime_opts=ClimeOptions.from_settings(settings),
                          threads=settings.threads, events=events)
    write_reports(out, omega, pi, stem="roc")
    summary = {f"{target}:{label}": {"trials_used": r.trials_used, "failed": len(r.failed_trials)}
               for target, reports in (("omega", omega), ("pi", pi)) for label, r in reports.items()}
    logger.info(f"ROC reports written to {out}")
    return summary


def cmd_cv(args: argparse.Namespace, settings: Settings, events: EventLogManager) -> Dict[str, Any]:
    """Cross-validated penalty for one or both sides"""
    out = ensure_dir(args.out)
    data = load_dataset(args)
    grid = parse_grid(args.grid)
    sides = ("A", "B") if args.side == "both" else (args.side,)
    results = {}
    rows = []
    for side in sides:
        res = cross_validate(data, grid, folds=args.folds, trials=args.trials, side=side,
                             rng=RngSpec(args.seed), glasso_opts=GlassoOptions.from_settings(settings),
                             events=events)
        results[side] = res.to_dict()
        rows.extend({"side": side, "penalty": lam, "score": s} for lam, s in zip(res.grid, res.scores))
    write_json(os.path.join(out, "cv.json"), {"sides": results})
    write_rows_csv(os.path.join(out, "cv.csv"), rows, ("side", "penalty", "score"))
    for side in sides:
        logger.info(f"CV side {side}: chosen penalty {results[side]['chosen']:g}")
    return results


def cmd_diagnose(args: argparse.Namespace, settings: Settings, events: EventLogManager) -> Dict[str, Any]:
    """Diagnostics of a model covariance or a covariance read from CSV"""
    out = ensure_dir(args.out)
    if args.matrix:
        cov = read_matrix_csv(args.matrix, header=args.header)
        source = {"matrix": args.matrix}
    elif args.model:
        if args.dim is None:
            raise ConfigError("--model needs --dim")
        cov = build_model(args.model, args.dim, RngSpec(args.seed), tag=0).covariance
        source = {"model": args.model, "dim": args.dim}
    else:
        raise ConfigError("Provide --model SPEC --dim P or --matrix FILE")
    diag = diagnostics(cov).to_dict()
    write_json(os.path.join(out, "diagnostics.json"), {"source": source, "diagnostics": diag})
    logger.info(f"Diagnostics: frob/trace={diag['frob_over_trace']:.4f}, "
                f"l1=({diag['l1_off']:.2f}, {diag['l1_full']:.2f})")
    return diag


COMMANDS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "roc": cmd_roc,
    "cv": cmd_cv,
    "diagnose": cmd_diagnose,
}


def execute(command: str, args: argparse.Namespace, settings: Settings) -> Dict[str, Any]:
    """Run one command with resolved settings and record its RunConfig"""
    events = EventLogManager(settings.event_provider, out_dir=args.out)
    try:
        result = COMMANDS[command](args, settings, events)
    finally:
        events.flush_events()
    _write_run_config(args.out, command, args, settings)
    return result


def cmd_replay(args: argparse.Namespace) -> Dict[str, Any]:
    """Re-execute a run from its run_config.json"""
    run = RunConfig.from_dict(read_json(args.run_config))
    if run.command not in COMMANDS:
        raise ConfigError(f"Cannot replay command '{run.command}'")
    try:
        settings = validate(Settings(**run.settings))
    except TypeError as e:
        raise ConfigError(f"Run config has unknown settings: {e}")
    params = dict(run.params)
    if args.out:
        params["out"] = args.out
    logger.info(f"Replaying {run.command} into {params['out']}")
    return execute(run.command, argparse.Namespace(**params), settings)


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="master seed")
    common.add_argument("--threads", type=int, default=None, help="worker threads")
    common.add_argument("--out", required=True, help="output directory")
    common.add_argument("--config", default=None, help="settings YAML file")
    common.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING, ...")
    common.add_argument("--event-provider", choices=EVENT_PROVIDERS, default=None)
    return common


def _input_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--input", default=None, help="directory with manifest.json and X_<t>.csv")
    p.add_argument("--files", nargs="+", default=None, help="replicate CSV files")
    p.add_argument("--header", action="store_true", help="input CSVs carry a header line")
    return p


def _penalty_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--penalty-mode", choices=PENALTY_MODES, default=None)
    p.add_argument("--lambda-a", type=float, default=None, help="B-side (row) program penalty")
    p.add_argument("--lambda-b", type=float, default=None, help="A-side (column) program penalty")
    p.add_argument("--lambda-a0", type=float, default=None)
    p.add_argument("--lambda-b1", type=float, default=None)
    p.add_argument("--lambda-a1", type=float, default=None)
    p.add_argument("--c", type=float, default=0.5, help="theory constant")
    p.add_argument("--c-hat-a", type=float, default=1.0, help="C_A in the theory rates")
    p.add_argument("--c-hat-b", type=float, default=1.0, help="C_B in the theory rates")
    p.add_argument("--constants", choices=CONSTANT_MODES, default="fixed",
                   help="plugin: C_A, C_B from a pilot glasso fit")
    p.add_argument("--eps", type=float, default=0.5)
    p.add_argument("--c2", type=float, default=1.0)
    p.add_argument("--c3", type=float, default=1.0)
    p.add_argument("--grid", default=None, help="'a,b,c' or 'start:stop:step'")
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--trials", type=int, default=10)
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kron-gemini",
                                     description="Gemini and flip-flop estimators of Kronecker covariances")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common_parser()
    inputs = _input_parser()
    penalties = _penalty_parser()

    sim = sub.add_parser("simulate", parents=[common], help="sample replicate matrices")
    sim.add_argument("--model-a", required=True, help="e.g. ar1:rho=0.5")
    sim.add_argument("--model-b", required=True, help="e.g. random:d=80,w_min=0.1,w_max=0.3")
    sim.add_argument("--m", type=int, required=True)
    sim.add_argument("--f", type=int, required=True)
    sim.add_argument("--n", type=int, default=1)

    est = sub.add_parser("estimate", parents=[common, inputs, penalties], help="fit an estimator")
    est.add_argument("--method", choices=("gemini", "nipff"), default="gemini")
    est.add_argument("--solver", choices=SOLVERS, default="glasso")
    est.add_argument("--clime-inner", choices=CLIME_INNER_SOLVERS, default=None)
    est.add_argument("--truth", default=None, help="directory with A_/B_ truth files")

    roc = sub.add_parser("roc", parents=[common], help="ROC sweep over penalty grids")
    roc.add_argument("--model-a", required=True)
    roc.add_argument("--model-b", required=True)
    roc.add_argument("--m", type=int, required=True)
    roc.add_argument("--f", type=int, required=True)
    roc.add_argument("--n", type=int, default=1)
    roc.add_argument("--grid", default=None)
    roc.add_argument("--grid-a", default=None, help="A-side grid, defaults to --grid")
    roc.add_argument("--grid-b", default=None, help="B-side grid, defaults to --grid")
    roc.add_argument("--trials", type=int, default=10)
    roc.add_argument("--method", choices=("gemini", "nipff"), default="gemini")
    roc.add_argument("--solver", choices=SOLVERS, default="glasso")
    roc.add_argument("--clime-inner", choices=CLIME_INNER_SOLVERS, default=None)

    cv = sub.add_parser("cv", parents=[common, inputs], help="cross-validated penalty")
    cv.add_argument("--grid", default=None)
    cv.add_argument("--folds", type=int, default=10)
    cv.add_argument("--trials", type=int, default=10)
    cv.add_argument("--side", choices=("A", "B", "both"), default="both")

    diag = sub.add_parser("diagnose", parents=[common], help="covariance diagnostics")
    diag.add_argument("--model", default=None)
    diag.add_argument("--dim", type=int, default=None)
    diag.add_argument("--matrix", default=None)
    diag.add_argument("--header", action="store_true")

    rep = sub.add_parser("replay", help="re-run from a run_config.json")
    rep.add_argument("run_config")
    rep.add_argument("--out", default=None, help="write to a different directory")
    rep.add_argument("--log-level", default=None)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Entry point; returns the process exit code"""
    parser = build_parser()
    args = parser.parse_args(argv)
    level = (args.log_level or "INFO").upper()
    if not isinstance(logging.getLevelName(level), int):
        level = "INFO"
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")

    try:
        if args.command == "replay":
            cmd_replay(args)
        else:
            settings = _resolve_settings(args)
            logging.getLogger().setLevel(settings.log_level.upper())
            execute(args.command, args, settings)
    except ConfigError as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG
    except NumericalError as e:
        logger.error(f"Numerical failure: {e}")
        return EXIT_NUMERICAL
    except OSError as e:
        logger.error(f"I/O error: {e}")
        return EXIT_IO
    except KronGeminiError as e:
        logger.error(f"{e}")
        return e.exit_code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
