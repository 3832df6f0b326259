"""Command-line surface: synth, train, and benchmark subcommands.

Every run writes a manifest.json into the output directory recording the
command, a config snapshot, seeds, input/output paths, tool version, and
wall-clock time, so each artifact on disk traces back to exactly one run.

Flags can also be supplied through UQR_-prefixed environment variables
(UQR_SEED, UQR_OUT, ...); explicit flags win over the environment.

Exit codes: 0 on success, 2 for input problems (missing or malformed files,
bad configuration), 1 for unexpected runtime failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from . import __version__, benchmark, metrics, network, optimize, synth, uq
from .data import DataValidationError, load_dataset

logger = logging.getLogger(__name__)

ENV_PREFIX = "UQR_"

EXIT_OK = 0
EXIT_RUNTIME_ERROR = 1
EXIT_INPUT_ERROR = 2


def _env_default(name: str, fallback=None):
    return os.environ.get(ENV_PREFIX + name.upper(), fallback)


def load_config_file(path) -> dict:
    if path is None:
        return {}
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uqreg",
        description="Joint mean/interrater-spread regression benchmark toolkit",
    )
    parser.add_argument("--version", action="version", version=f"uqreg {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", default=_env_default("config"),
                       help="TOML config file")
        p.add_argument("--out", default=_env_default("out"), required=_env_default("out") is None,
                       help="output directory")
        p.add_argument("--seed", type=int,
                       default=_env_default("seed"), help="override the config seed")

    def add_data(p):
        p.add_argument("--features", default=_env_default("features"))
        p.add_argument("--annotations", default=_env_default("annotations"))
        p.add_argument("--splits", default=_env_default("splits"))
        p.add_argument("--dimension", choices=("valence", "arousal", "both"),
                       default=_env_default("dimension", "both"))

    p_synth = sub.add_parser("synth", help="generate a synthetic dataset with oracle")
    add_common(p_synth)

    p_train = sub.add_parser("train", help="train one model per affect dimension")
    add_common(p_train)
    add_data(p_train)

    p_bench = sub.add_parser("benchmark",
                             help="train, estimate, and evaluate one or more methods")
    add_common(p_bench)
    add_data(p_bench)
    p_bench.add_argument("--method", default=_env_default("method", "all"),
                         help="comma-separated subset of "
                              f"{', '.join(uq.METHODS)}, or 'all'")
    p_bench.add_argument("--jobs", type=int, default=int(_env_default("jobs", 1)),
                         help="parallel ensemble-member trainings")
    p_bench.add_argument("--runs", type=int, default=None,
                         help="training seeds per single-model method")
    return parser


def _dimensions(arg: str) -> list[str]:
    return ["valence", "arousal"] if arg == "both" else [arg]


def _require_data_args(args) -> tuple[str, str, str]:
    missing = [n for n in ("features", "annotations", "splits")
               if getattr(args, n) is None]
    if missing:
        raise DataValidationError(f"missing required inputs: --{', --'.join(missing)}")
    for n in ("features", "annotations", "splits"):
        path = Path(getattr(args, n))
        if not path.exists():
            raise FileNotFoundError(f"{n} file not found: {path}")
    return args.features, args.annotations, args.splits


class _Manifest:
    def __init__(self, command: str, argv, config_snapshot: dict):
        self.record = {
            "command": command,
            "argv": list(argv),
            "config": config_snapshot,
            "seeds": [],
            "inputs": {},
            "outputs": [],
            "run_requirements": [],
            "tool_version": __version__,
            "started_utc": datetime.now(timezone.utc).isoformat(),
        }
        self._t0 = time.monotonic()

    def add_output(self, path) -> None:
        self.record["outputs"].append(str(path))

    def write(self, out_dir: Path) -> None:
        self.record["wall_clock_seconds"] = round(time.monotonic() - self._t0, 3)
        path = out_dir / "manifest.json"
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.record, fh, indent=1)


def _train_config(config_file: dict, seed_override, dimension: str | None = None
                  ) -> optimize.TrainConfig:
    section = dict(config_file.get("train", {}))
    cfg = optimize.train_config_from_mapping(section)
    if seed_override is not None:
        cfg = optimize.with_seed(cfg, int(seed_override))
    if dimension is not None:
        cfg = replace(cfg, affect_dimension=dimension)
    return cfg


def cmd_synth(args, argv) -> int:
    config_file = load_config_file(args.config)
    section = dict(config_file.get("synth", {}))
    if args.seed is not None:
        section["seed"] = int(args.seed)
    cfg = synth.SynthConfig(**section)
    if not cfg.quantize:
        raise DataValidationError(
            "file emission requires quantize=true (annotation files hold raw "
            "integer ratings)"
        )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = _Manifest("synth", argv, {"synth": section})
    manifest.record["seeds"] = [cfg.seed]

    output = synth.generate(cfg)
    paths = synth.write_dataset_files(out_dir, output)
    for p in paths.values():
        manifest.add_output(p)
    manifest.write(out_dir)
    counts = output.dataset.split_counts()
    print(f"wrote {len(output.dataset.targets)} stimuli to {out_dir} (splits: {counts})")
    return EXIT_OK


def cmd_train(args, argv) -> int:
    features, annotations, splits = _require_data_args(args)
    config_file = load_config_file(args.config)
    dataset = load_dataset(features, annotations, splits)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = _Manifest("train", argv, {"train": dict(config_file.get("train", {}))})
    manifest.record["inputs"] = {
        "features": features, "annotations": annotations, "splits": splits,
    }

    for dim in _dimensions(args.dimension):
        cfg = _train_config(config_file, args.seed, dim)
        manifest.record["seeds"].append(cfg.seed)
        params, report = optimize.train(dataset, cfg)
        checkpoint_path = out_dir / f"checkpoint_{dim}.json"
        network.save_checkpoint(params, checkpoint_path, training_seed=cfg.seed)
        # Sibling-file reference keeps the report bytes independent of where
        # the output directory lives.
        report.checkpoint_path = checkpoint_path.name
        report_path = out_dir / f"train_report_{dim}.json"
        report.to_json(report_path)
        manifest.add_output(checkpoint_path)
        manifest.add_output(report_path)
        best = (min(report.val_losses) if report.val_losses else None)
        print(f"{dim}: best epoch {report.best_epoch}, best val loss {best}")
    manifest.write(out_dir)
    return EXIT_OK


def _parse_methods(arg: str) -> list[str]:
    if arg == "all":
        return list(uq.METHODS)
    methods = [m.strip() for m in arg.split(",") if m.strip()]
    unknown = [m for m in methods if m not in uq.METHODS]
    if unknown:
        raise DataValidationError(
            f"unknown method(s) {unknown}; choose from {uq.METHODS}"
        )
    return methods


def cmd_benchmark(args, argv) -> int:
    features, annotations, splits = _require_data_args(args)
    config_file = load_config_file(args.config)
    ens_section = dict(config_file.get("ensemble", {}))
    n_seeds = int(ens_section.get("n_seeds", uq.DEFAULT_SEED_COUNT))
    mc_draws = int(ens_section.get("mc_draws", uq.DEFAULT_MC_DRAWS))
    runs = args.runs if args.runs is not None else int(ens_section.get("runs", 1))
    base_seed = int(ens_section.get("base_seed", uq.BASE_SEED))
    if args.seed is not None:
        base_seed = int(args.seed)
    methods = _parse_methods(args.method)

    dataset = load_dataset(features, annotations, splits)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = _Manifest("benchmark", argv, {
        "train": dict(config_file.get("train", {})),
        "ensemble": {"n_seeds": n_seeds, "mc_draws": mc_draws,
                     "runs": runs, "base_seed": base_seed},
        "methods": methods,
    })
    manifest.record["inputs"] = {
        "features": features, "annotations": annotations, "splits": splits,
    }

    report = metrics.MetricReport()
    for dim in _dimensions(args.dimension):
        for method in methods:
            cfg = _train_config(config_file, None, dim)
            result = benchmark.run_method(
                method, dataset, cfg, n_seeds=n_seeds, mc_draws=mc_draws,
                runs=runs, base_seed=base_seed, jobs=args.jobs,
            )
            manifest.record["seeds"].extend(
                r.seed for r in (result.reports or []) if r is not None
            )
            manifest.record["run_requirements"].append(result.run_counts())
            benchmark.add_to_report(report, result, dataset)

            _, _, mu_true, sigma_true = dataset.matrices("test", dim)
            scatter_mean = out_dir / f"scatter_{method}_{dim}_mean.csv"
            metrics.write_scatter_csv(scatter_mean, result.ids, mu_true,
                                      benchmark.mean_scatter(result))
            manifest.add_output(scatter_mean)
            sd_pred = benchmark.sd_scatter(result)
            if sd_pred is not None:
                scatter_sd = out_dir / f"scatter_{method}_{dim}_sd.csv"
                metrics.write_scatter_csv(scatter_sd, result.ids, sigma_true, sd_pred)
                manifest.add_output(scatter_sd)
            if result.sampling is not None:
                checkpoint_names = None
                if method == uq.METHOD_SEEDS and result.params:
                    checkpoint_names = []
                    for seed, params in zip(result.sampling.member_seeds,
                                            result.params):
                        member_path = out_dir / f"member_{dim}_seed{seed}.json"
                        network.save_checkpoint(params, member_path,
                                                training_seed=seed)
                        manifest.add_output(member_path)
                        checkpoint_names.append(member_path.name)
                ens_path = out_dir / f"ensemble_{method}_{dim}.json"
                uq.save_ensemble_manifest(ens_path, result.sampling,
                                          checkpoint_paths=checkpoint_names)
                manifest.add_output(ens_path)

    report_json = out_dir / "report.json"
    report.to_json(report_json)
    manifest.add_output(report_json)
    table = metrics.render_table(report)
    table_path = out_dir / "report.txt"
    table_path.write_text(table, encoding="utf-8")
    manifest.add_output(table_path)
    manifest.write(out_dir)
    print(table)
    return EXIT_OK


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
        if args.command == "synth":
            return cmd_synth(args, argv)
        if args.command == "train":
            return cmd_train(args, argv)
        return cmd_benchmark(args, argv)
    except (FileNotFoundError, DataValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    except (ValueError, TypeError, tomllib.TOMLDecodeError) as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    except optimize.OptimizationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME_ERROR


if __name__ == "__main__":
    sys.exit(main())
