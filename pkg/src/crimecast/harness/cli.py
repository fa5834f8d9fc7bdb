"""``crimecast`` command line.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 training
divergence, 1 anything else.
"""

import argparse
import json
import logging
import shutil
import sys
import tempfile
from pathlib import Path

from ..ingest import DataError, default_synth_config, generate_synthetic, write_incidents
from ..models import TrainingDivergence, build_model, load_checkpoint, save_checkpoint
from ..models.config import ConfigError
from ..nncore import NonFiniteError
from .config import ExperimentConfig, load_config
from .experiment import ExperimentError, fit_deep, is_deep, load_incidents, prepare, rederive, run_experiment
from .report import emit_heatmaps, emit_report, load_report, write_curves, write_summary

log = logging.getLogger("crimecast")

EXIT_OK, EXIT_OTHER, EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3, 4


def _config(args):
    if args.config is None:
        if args.seed is None:
            raise ConfigError("either --config or --seed is required")
        cfg = ExperimentConfig(seed=args.seed)
    else:
        cfg = load_config(args.config, seed=args.seed)
    if getattr(args, "preset", None):
        cfg = cfg.replace(model_preset=args.preset)
    return cfg


def _out(args, cfg=None):
    out = args.out or (cfg.out if cfg is not None else None)
    if out is None:
        raise ConfigError("no output directory: pass --out or set output.dir")
    return Path(out)


def _ckpt_name(method, p):
    return f"{method.replace('/', '-')}_p{p}.ckpt"


def cmd_synth(args):
    cfg = _config(args) if args.config else None
    seed = args.seed if args.seed is not None else (cfg.seed if cfg else 7)
    days = cfg.synth_days if cfg else 4 * 365
    out = _out(args)
    out.mkdir(parents=True, exist_ok=True)
    incidents = generate_synthetic(default_synth_config(seed=seed, days=days))
    write_incidents(incidents, out / "incidents.csv")
    print(f"wrote {len(incidents)} incidents to {out / 'incidents.csv'}")


def cmd_ingest(args):
    cfg = _config(args)
    out = _out(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    incidents, synth = load_incidents(cfg)
    for p in cfg.resolutions:
        prep = prepare(cfg, incidents, synth, p)
        path = out / f"stack_p{p}.bin"
        prep.stack.save(path)
        print(f"p={p}: {prep.stack.days} days, {int(prep.mask.sum())} study-area cells, "
              f"excluded {prep.stack.excluded} -> {path}")


def cmd_train(args):
    cfg = _config(args)
    out = _out(args, cfg) / "checkpoints"
    out.mkdir(parents=True, exist_ok=True)
    incidents, synth = load_incidents(cfg)
    for p in cfg.resolutions:
        prep = prepare(cfg, incidents, synth, p)
        for method in cfg.methods:
            if not is_deep(method):
                continue
            model = fit_deep(cfg, prep, method)
            save_checkpoint(model, out / _ckpt_name(method, p))
            (out / (_ckpt_name(method, p) + ".history.json")).write_text(json.dumps(model.history, default=float))
            print(f"{method} p={p}: final loss {model.history[-1]['loss']:.5f}" if model.history else f"{method} p={p}")


def cmd_evaluate(args):
    cfg = _config(args)
    out = _out(args, cfg)
    trained = {}
    for p in cfg.resolutions:
        for method in cfg.methods:
            if is_deep(method):
                path = out / "checkpoints" / _ckpt_name(method, p)
                if not path.exists():
                    raise DataError(f"missing checkpoint {path}; run 'crimecast train' first")
                trained[(method, p)] = load_checkpoint(build_model(cfg.model_config(method, p)), path)
    report = run_experiment(cfg, trained=trained)
    emit_report(report, out)
    _print_summary(report)


def cmd_run(args):
    cfg = _config(args)
    out = _out(args, cfg)
    report = run_experiment(cfg)
    out.parent.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=".partial-", dir=out.parent))
    try:
        emit_report(report, staging)
        if cfg.heatmaps:
            emit_heatmaps(report, staging / "heatmaps")
        (staging / "checkpoints").mkdir()
        for (method, p), model in report.models.items():
            save_checkpoint(model, staging / "checkpoints" / _ckpt_name(method, p))
        out.mkdir(parents=True, exist_ok=True)
        for item in staging.iterdir():
            target = out / item.name
            if target.is_dir():
                shutil.rmtree(target)
            elif target.exists():
                target.unlink()
            shutil.move(str(item), str(target))
    finally:
        shutil.rmtree(staging, ignore_errors=True)
    _print_summary(report)
    print(f"digest {report.digest()}")


def cmd_report(args):
    out = _out(args)
    report = load_report(out)
    again = rederive(report)
    stored = {r.key: r.metrics for r in report.results}
    same = json.dumps(again, sort_keys=True) == json.dumps(stored, sort_keys=True)
    write_summary(report, out / "summary.csv")
    write_curves(report, out / "curves")
    _print_summary(report)
    print("re-derived metrics match the report" if same else "re-derived metrics DIFFER from the report")
    return EXIT_OK if same else EXIT_OTHER


def _print_summary(report):
    for r in report.results:
        means = " ".join(f"{k}={v:.3f}" for k, v in r.means.items())
        print(f"{r.method:>12} p={r.p:<3} {r.crime_type:<12} {means}")


def build_parser():
    parser = argparse.ArgumentParser(prog="crimecast", description="Grid-based crime hotspot forecasting")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    handlers = {"synth": cmd_synth, "ingest": cmd_ingest, "train": cmd_train, "evaluate": cmd_evaluate,
                "run": cmd_run, "report": cmd_report}
    helps = {"synth": "write a synthetic incident CSV", "ingest": "aggregate incidents into stack binaries",
             "train": "train deep models and save checkpoints", "evaluate": "score checkpoints and baselines",
             "run": "all stages end to end", "report": "re-render outputs from persisted predictions"}
    for name, fn in handlers.items():
        p = sub.add_parser(name, help=helps[name])
        p.add_argument("--config", type=Path)
        p.add_argument("--seed", type=int)
        p.add_argument("--out", type=Path)
        p.add_argument("--preset", choices=("small", "paper"))
        p.set_defaults(handler=fn)
    return parser


def exit_code_for(exc):
    if isinstance(exc, ExperimentError):
        exc = exc.cause
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, (TrainingDivergence, NonFiniteError)):
        return EXIT_DIVERGED
    if isinstance(exc, (DataError, OSError, KeyError)):
        return EXIT_DATA
    return EXIT_OTHER


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        code = args.handler(args)
    except Exception as exc:  # report once, map to an exit code
        print(f"crimecast {args.command}: {exc}", file=sys.stderr)
        return exit_code_for(exc)
    return EXIT_OK if code is None else code


if __name__ == "__main__":
    sys.exit(main())
