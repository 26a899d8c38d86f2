"""Command line front end: generate, train, evaluate, baseline, report, reproduce-fig.

Every subcommand reads an optional JSON config (defaults otherwise, seed
overridable through FDRIS_SEED) and writes the fully resolved config next to
its outputs, so a run directory always documents how it was produced.
"""

from __future__ import annotations

import argparse
import json
from dataclasses import replace
from pathlib import Path

from .dataset import generate_dataset, load_dataset, save_dataset
from .harness import (
    ExperimentConfig,
    eval_points,
    evaluate,
    parse_records_csv,
    report,
    run_ls_baseline,
    train,
    write_records_csv,
    write_resolved_config,
)
from .nn.model import load_checkpoint


def _resolve_out(args, default: str) -> Path:
    out = Path(args.out if args.out is not None else default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_generate(args) -> int:
    config = ExperimentConfig.load(args.config)
    out = _resolve_out(args, Path(config.output_dir) / "dataset")
    samples, manifest = generate_dataset(config.dataset_config())
    save_dataset(samples, manifest, out)
    write_resolved_config(config, out)
    print(f"wrote {manifest.sample_count} samples to {out} "
          f"(checksum {manifest.checksum[:12]})")
    return 0


def cmd_train(args) -> int:
    config = ExperimentConfig.load(args.config)
    out = _resolve_out(args, Path(config.output_dir) / "checkpoint")
    samples, normalization = None, None
    if args.dataset is not None:
        samples, manifest = load_dataset(args.dataset)
        normalization = manifest.normalization
    model, log = train(config, samples=samples, checkpoint_dir=out,
                       normalization=normalization)
    write_resolved_config(config, out)
    print(f"trained {len(log.train_losses)} epochs, best epoch {log.best_epoch}, "
          f"validation loss {log.best_validation_loss:.6g}, "
          f"checkpoint in {out}")
    return 0


def _load_model(path):
    """The persisted parameters plus the feature statistics they were fit under."""
    model = load_checkpoint(path)
    manifest = json.loads((Path(path) / "manifest.json").read_text())
    normalization = (manifest.get("hyperparameters") or {}).get("normalization")
    return model, normalization


def cmd_evaluate(args) -> int:
    config = ExperimentConfig.load(args.config)
    out = _resolve_out(args, Path(config.output_dir) / "evaluate")
    model, normalization = _load_model(args.checkpoint)
    records = evaluate(model, config, points=eval_points(
        config, n_elements=model.dims.n_elements, m_pilots=model.dims.m_pilots),
        normalization=normalization)
    path = write_records_csv(records, out / "records.csv")
    write_resolved_config(config, out)
    print(f"wrote {len(records)} records to {path}")
    return 0


def cmd_baseline(args) -> int:
    config = ExperimentConfig.load(args.config)
    out = _resolve_out(args, Path(config.output_dir) / "baseline")
    records = run_ls_baseline(config)
    path = write_records_csv(records, out / "records.csv")
    write_resolved_config(config, out)
    print(f"wrote {len(records)} records to {path}")
    return 0


def cmd_report(args) -> int:
    records = []
    for path in args.records:
        records.extend(parse_records_csv(path))
    out = _resolve_out(args, "report")
    paths = report(records, out)
    print(f"wrote {paths['csv']} and {paths['summary']}")
    return 0


def _model_for(config: ExperimentConfig, args, out: Path, n_elements: int):
    """Load the provided checkpoint when it fits, otherwise train one."""
    if args.checkpoint is not None:
        model, normalization = _load_model(args.checkpoint)
        if (model.dims.n_elements == n_elements
                and model.dims.m_pilots == config.m_pilots):
            return model, normalization
        print(f"checkpoint at {args.checkpoint} is for "
              f"N={model.dims.n_elements}, training a fresh N={n_elements} model")
    sized = replace(config, n_elements=n_elements)
    checkpoint_dir = out / f"checkpoint-n{n_elements}"
    model, log = train(sized, checkpoint_dir=checkpoint_dir)
    print(f"trained N={n_elements} model: best epoch {log.best_epoch}, "
          f"validation loss {log.best_validation_loss:.6g}")
    return model, log.normalization


def cmd_reproduce(args) -> int:
    config = ExperimentConfig.load(args.config)
    figure = args.figure
    out = _resolve_out(args, Path(config.output_dir) / f"fig{figure}")
    write_resolved_config(config, out)

    records = []
    if figure == 3:
        model, normalization = _model_for(config, args, out, config.n_elements)
        records += evaluate(model, config, normalization=normalization)
        records += run_ls_baseline(config)
    elif figure == 4:
        for n in config.test_n_elements:
            model, normalization = _model_for(config, args, out, n)
            sized = replace(config, n_elements=n)
            records += evaluate(model, sized, points=eval_points(sized),
                                normalization=normalization)
    elif figure == 5:
        model, normalization = _model_for(config, args, out, config.n_elements)
        records += evaluate(model, config, points=eval_points(
            config, k_factors=config.test_k_factors), normalization=normalization)
    elif figure == 6:
        model, normalization = _model_for(config, args, out, config.n_elements)
        records += evaluate(model, config, points=eval_points(
            config, switching_errors=config.test_switching_errors),
            normalization=normalization)

    paths = report(records, out)
    print(f"figure {figure}: {len(records)} records, summary at {paths['summary']}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fdris",
        description="Full-duplex pilot-exchange channel estimation experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, checkpoint=False, dataset=False):
        p.add_argument("--config", help="JSON config file (defaults otherwise)")
        p.add_argument("--out", help="output directory")
        if checkpoint:
            p.add_argument("--checkpoint", help="checkpoint directory to reuse")
        if dataset:
            p.add_argument("--dataset", help="pregenerated dataset directory")

    common(sub.add_parser("generate", help="synthesize and persist a training dataset"))
    common(sub.add_parser("train", help="train the estimator"), dataset=True)
    common(sub.add_parser("evaluate", help="sweep a trained model over the test grid"),
           checkpoint=True)
    common(sub.add_parser("baseline", help="run the least-squares baseline sweep"))
    rep = sub.add_parser("report", help="merge record CSVs into a figure summary")
    rep.add_argument("--records", nargs="+", required=True, help="record CSV files")
    rep.add_argument("--out", help="output directory")
    fig = sub.add_parser("reproduce-fig",
                         help="run one preset sweep end to end (3=baseline "
                              "comparison, 4=surface sizes, 5=K factors, "
                              "6=switching errors)")
    fig.add_argument("figure", type=int, choices=(3, 4, 5, 6))
    common(fig, checkpoint=True)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "generate": cmd_generate,
        "train": cmd_train,
        "evaluate": cmd_evaluate,
        "baseline": cmd_baseline,
        "report": cmd_report,
        "reproduce-fig": cmd_reproduce,
    }
    return handlers[args.command](args)


if __name__ == "__main__":
    raise SystemExit(main())
