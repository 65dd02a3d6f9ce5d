"""Shared command configuration and argparse builder.

Each subcommand loads the optional `--config` JSON file, applies the flags
given on the command line on top of it, and hands the resulting RunConfig
to io_workflows.run. `run <config.json>` executes whatever mode the file
names. The same parser serves `main.py` and the tests.
"""
from __future__ import annotations
import argparse
from typing import List, Optional

from errors import ConfigError
from help_docs import handle_help_command
from io_manager.io_config import RunConfig, load_run_config, run_config_from_dict, with_overrides
from io_manager.io_workflows import run

# subcommand -> RunConfig.mode
SUBCOMMAND_MODES = {
    "simulate": "simulate",
    "fit": "fit",
    "evaluate": "evaluate",
    "predict": "predict",
    "study": "replicate-study",
}


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--out", dest="paths_out", help="Output directory")
    p.add_argument("--seed", type=int, help="Master seed")
    p.add_argument("--zeta", type=float, help="Confidence adjustment constant")
    p.add_argument("--iterations", dest="mcmc_iterations", type=int, help="MCMC iterations")
    p.add_argument("--burnin", dest="mcmc_burnin", type=int, help="Burn-in iterations")
    p.add_argument("--thin", dest="mcmc_thin", type=int, help="Keep every n-th post-burn-in draw")
    p.add_argument("--verbose", action="store_true", default=None, help="Log sampler progress")


def _add_setting(p: argparse.ArgumentParser) -> None:
    p.add_argument("--setting", help="linear, maximum, ordinal-only, compositional-only or full")
    p.add_argument("--threshold", type=float, help="Confidence threshold T (linear and maximum)")


def _add_data(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", dest="paths_data", help="Dataset directory")
    p.add_argument("--L", dest="L", type=int, help="Number of score categories")
    p.add_argument("--max-images", dest="max_images", type=int, help="Image cap per sequence")
    p.add_argument("--no-standardize", dest="standardize", action="store_false", default=None,
                   help="Keep covariates on their raw scale")


def make_parser(prog: str = "fusionbcs") -> argparse.ArgumentParser:
    """Return the configured parser; every subcommand sets `func` returning an exit code."""
    parser = argparse.ArgumentParser(
        prog=prog, description="Fuse ordinal annotations and AI confidences into latent scores"
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    sim_p = subparsers.add_parser("simulate", help="Generate a synthetic train/test dataset")
    _add_common(sim_p)
    sim_p.add_argument("--annotated-fraction", dest="annotated_fraction", type=float,
                       help="Share of training images given an annotation")

    fit_p = subparsers.add_parser("fit", help="Fit one setting to a dataset")
    _add_common(fit_p)
    _add_setting(fit_p)
    _add_data(fit_p)

    eval_p = subparsers.add_parser("evaluate", help="Score a fit in and out of sample")
    _add_common(eval_p)
    _add_data(eval_p)
    eval_p.add_argument("--fit", dest="paths_fit", help="Fit directory")
    eval_p.add_argument("--test", dest="paths_test", help="Held-out dataset directory")

    pred_p = subparsers.add_parser("predict", help="Posterior predictive probabilities over a grid")
    _add_common(pred_p)
    pred_p.add_argument("--fit", dest="paths_fit", help="Fit directory")
    pred_p.add_argument("--grid", dest="paths_grid", help="Covariate grid CSV")
    pred_p.add_argument("--high-from", dest="high_from", type=int, help="First category counted as high")

    study_p = subparsers.add_parser("study", help="Replicated simulation study over all settings")
    _add_common(study_p)
    study_p.add_argument("--replicates", type=int, help="Number of replicates K")
    study_p.add_argument("--workers", type=int, help="Parallel replicate workers")

    for name, sub in (("simulate", sim_p), ("fit", fit_p), ("evaluate", eval_p), ("predict", pred_p), ("study", study_p)):
        sub.set_defaults(func=handle_mode, mode=SUBCOMMAND_MODES[name])

    run_p = subparsers.add_parser("run", help="Run the mode named in a config file")
    run_p.add_argument("config", help="Path to JSON run configuration")
    run_p.set_defaults(func=handle_run)

    help_p = subparsers.add_parser("help", help="Show help topics")
    help_p.add_argument("topic", nargs="*", help="Topic to show")
    help_p.set_defaults(func=lambda ns: handle_help_command(ns.topic or []) or 0)
    return parser


OVERRIDE_FIELDS = (
    "paths_out", "paths_data", "paths_test", "paths_fit", "paths_grid",
    "seed", "zeta", "mcmc_iterations", "mcmc_burnin", "mcmc_thin", "verbose",
    "setting", "threshold", "annotated_fraction", "L", "max_images", "standardize",
    "high_from", "replicates", "workers",
)


def config_from_namespace(ns: argparse.Namespace) -> RunConfig:
    """Config file (if any) with the mode of the subcommand and every given flag applied."""
    base = load_run_config(ns.config) if ns.config else run_config_from_dict({})
    overrides = {name: getattr(ns, name, None) for name in OVERRIDE_FIELDS}
    return with_overrides(base, mode=ns.mode, **overrides)


def handle_mode(ns: argparse.Namespace) -> int:
    try:
        config = config_from_namespace(ns)
    except (ConfigError, TypeError) as e:
        print(f"Invalid configuration: {e}")
        return 2
    return run(config)


def handle_run(ns: argparse.Namespace) -> int:
    """Handle `run <config.json>`."""
    try:
        config = load_run_config(ns.config)
    except ConfigError as e:
        print(f"Invalid configuration: {e}")
        return 2
    return run(config)


def execute_args_once(parser: argparse.ArgumentParser, args: List[str]) -> int:
    """Execute a single argv-style invocation against the provided parser.

    Returns an exit code: 0 on success, 1 when the workflow fails and 2 on
    usage or configuration errors.
    """
    try:
        ns = parser.parse_args(args)
    except SystemExit as e:
        # argparse throws SystemExit for parse errors and -h
        return e.code if isinstance(e.code, int) else 2
    if not hasattr(ns, "func"):
        parser.print_help()
        return 2
    code: Optional[int] = ns.func(ns)
    return 0 if code is None else code
