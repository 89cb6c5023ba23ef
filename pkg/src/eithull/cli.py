"""Command-line interface.

Subcommands: generate, train, eval, reconstruct, simulate-cem.
Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import cem, network, pipeline, storage
from .config import ConfigError, config_text, defaults_help, get_bool, get_float, get_int, load_config
from .femsolver import SolverError
from .geometry import PhantomSamplingError, phantom_from_text

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _common_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", metavar="PATH", help="key = value config file (see --help epilog)")
    sub.add_argument("--seed", type=int, default=0, metavar="U64", help="master RNG seed")
    sub.add_argument("--out", required=True, metavar="PATH", help="output path")
    sub.add_argument("--threads", type=int, default=None, metavar="N", help="worker/compute threads")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eithull",
        description="Convex-hull reconstruction of conductivity inclusions from EIT data.",
        epilog="Config defaults:\n" + defaults_help(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("generate", help="simulate a phantom dataset (indicator matrices + targets)")
    _common_flags(p)
    p.add_argument("--resume", action="store_true", help="continue an interrupted run by record index")
    p.add_argument("--quiet", action="store_true", help="suppress progress output")

    p = subs.add_parser("train", help="train the support-vector regression network")
    _common_flags(p)
    p.add_argument("--dataset", required=True, metavar="PATH", help="training dataset file")

    p = subs.add_parser("eval", help="score LS and learned hulls on a test dataset")
    _common_flags(p)
    p.add_argument("--dataset", required=True, metavar="PATH", help="test dataset file")
    p.add_argument("--weights", required=True, metavar="PATH", help="trained weights file")

    p = subs.add_parser("reconstruct", help="hulls from a DN-matrix file or a measurement file")
    _common_flags(p)
    p.add_argument("--input", required=True, metavar="PATH", help="EITDN01 matrix or EITMEAS file")
    p.add_argument("--weights", required=True, metavar="PATH", help="trained weights file")
    p.add_argument("--plot", action="store_true", help="also write an SVG plot next to --out")

    p = subs.add_parser("simulate-cem", help="write a synthetic electrode measurement file")
    _common_flags(p)
    return parser


def cmd_generate(args) -> int:
    cfg = load_config(args.config)
    workers = args.threads if args.threads else get_int(cfg, "dataset", "workers")
    gen = pipeline.GenerationConfig(
        count=get_int(cfg, "dataset", "count"),
        family=cfg["dataset"]["family"],
        refinement=get_int(cfg, "dataset", "refinement"),
        order=get_int(cfg, "dataset", "order"),
        noise=get_float(cfg, "dataset", "noise"),
        master_seed=args.seed,
        workers=workers,
    )
    echo = config_text(cfg, extra={"seed": str(args.seed)})

    def progress(done, total):
        if not args.quiet and (done % 50 == 0 or done == total):
            print(f"generated {done}/{total}", file=sys.stderr)

    made = pipeline.generate_dataset(gen, args.out, echo, resume=args.resume, progress=progress)
    if not args.quiet:
        print(f"wrote {made} new records to {args.out}", file=sys.stderr)
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    records, _, _ = storage.read_dataset(args.dataset)
    if not records:
        raise storage.FileFormatError("training dataset is empty")
    inputs = np.stack([r.input for r in records])
    targets = np.stack([r.support for r in records])
    tcfg = network.TrainConfig(
        epochs=get_int(cfg, "train", "epochs"),
        learning_rate=get_float(cfg, "train", "learning_rate"),
        momentum=get_float(cfg, "train", "momentum"),
        decay_factor=get_float(cfg, "train", "decay_factor"),
        decay_every=get_int(cfg, "train", "decay_every"),
        batch_size=get_int(cfg, "train", "batch_size"),
        seed=args.seed,
        val_fraction=get_float(cfg, "train", "val_fraction"),
        dtype=cfg["train"]["dtype"],
        threads=args.threads,
    )
    if tcfg.dtype not in ("float32", "float64"):
        raise ConfigError("[train] dtype must be float32 or float64")
    weights, log = network.train(inputs, targets, tcfg)
    echo = config_text(cfg, extra={"seed": str(args.seed)})
    storage.write_weights_file(args.out, weights, echo)
    log_lines = ["epoch lr train_loss val_loss"]
    log_lines += [f"{e.epoch} {e.lr!r} {e.train_loss!r} {e.val_loss!r}" for e in log]
    with open(str(args.out) + ".log.txt", "w", encoding="utf-8") as fh:
        fh.write("\n".join(log_lines) + "\n")
    return EXIT_OK


def cmd_eval(args) -> int:
    records, _, _ = storage.read_dataset(args.dataset)
    weights, _ = storage.read_weights_file(args.weights)
    report = pipeline.evaluate_dataset(records, weights)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(pipeline.report_text(report))
    print(
        f"ls median {report.ls_median:.2f}%  learned median {report.learned_median:.2f}%  "
        f"learned wins {report.learned_wins}/{len(report.cases)}",
        file=sys.stderr,
    )
    return EXIT_OK


def _sniff_input(path) -> str:
    with open(path, "rb") as fh:
        head = fh.read(7)
    if head == storage.MATRIX_MAGIC:
        return "matrix"
    if head.startswith(b"EITMEAS"):
        return "measurement"
    raise storage.FileFormatError(f"unrecognized input file {path}")


def cmd_reconstruct(args) -> int:
    cfg = load_config(args.config)
    weights, _ = storage.read_weights_file(args.weights)
    kind = _sniff_input(args.input)
    if kind == "matrix":
        mat = storage.read_matrix_file(args.input)
        if not hasattr(mat, "entries") or mat.entries.shape[0] != mat.order + 1:
            raise storage.FileFormatError("reconstruct expects a DN matrix (flags bit 0 set)")
        from .femsolver import dn_analytic_homogeneous

        recon = pipeline.reconstruct_from_dn(mat, dn_analytic_homogeneous(mat.order), weights)
    else:
        meas = cem.read_measurement_file(args.input)
        recon = pipeline.reconstruct_from_measurement(
            meas,
            weights,
            order=get_int(cfg, "reconstruct", "order"),
            analytic_reference=get_bool(cfg, "reconstruct", "analytic_reference"),
        )
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(pipeline.reconstruction_text(recon))
    if args.plot:
        from .svgplot import hull_comparison_svg

        hull_comparison_svg(str(args.out) + ".svg", np.zeros((0, 2)), recon.learned_hull, recon.ls_hull)
    return EXIT_OK


def cmd_simulate_cem(args) -> int:
    cfg = load_config(args.config)
    count = get_int(cfg, "cem", "electrodes")
    coverage = get_float(cfg, "cem", "coverage")
    if not 0 < coverage < 1:
        raise ConfigError("[cem] coverage must lie in (0, 1)")
    layout = cem.ElectrodeLayout(count=count, half_width=coverage * np.pi / count)
    phantom = phantom_from_text(cfg["cem"]["phantom"])
    meas = pipeline.simulate_cem_measurement(
        phantom,
        layout,
        get_float(cfg, "cem", "contact_impedance"),
        refinement=get_int(cfg, "cem", "refinement"),
        amplitude=get_float(cfg, "cem", "amplitude"),
        include_reference=get_bool(cfg, "cem", "include_reference"),
    )
    cem.write_measurement_file(args.out, meas)
    return EXIT_OK


_COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "eval": cmd_eval,
    "reconstruct": cmd_reconstruct,
    "simulate-cem": cmd_simulate_cem,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (storage.FileFormatError, cem.MeasurementFormatError, FileNotFoundError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (SolverError, network.TrainingDiverged, PhantomSamplingError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
