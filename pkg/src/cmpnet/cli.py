"""Command-line interface: one executable, one subcommand per stage.

The pipeline is a DAG of batch stages, each reading and writing files:

    rasterize  layout text -> binary grid
    synth      binary grid -> synthetic height grid
    dataset    grid pair -> dataset directory
    train      dataset -> checkpoint + loss history CSV
    predict    checkpoint + grid -> predicted height grid
    eval       metrics.csv + summary line, from a checkpoint and dataset
               or from a prediction/truth grid pair
    xsec       one or two grids -> cross-section CSV for plotting

Every stage is deterministic given its flags (all randomness hangs off
explicit --seed flags) and writes a JSON run manifest next to its primary
output recording the resolved parameters. Exit codes: 0 ok, 2 usage or
validation error, 3 unreadable or malformed data, 4 numerical failure.
"""

import argparse
import json
import os
import sys
import tempfile

from datetime import datetime, timezone

from . import __version__, evaluation, oracle, preprocess, storage, unet
from .layout import LayoutError, parse_layout, rasterize
from .preprocess import DataError
from .storage import CheckpointError, GridFormatError
from .training import TrainConfig, TrainingDiverged, train, write_history


def _positive_float(text):
    value = float(text)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {text}")
    return value


def _nonneg_float(text):
    value = float(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
    return value


def _positive_int(text):
    value = int(text)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {text}")
    return value


def _fraction(text):
    value = float(text)
    if not 0 <= value <= 1:
        raise argparse.ArgumentTypeError(f"must be in [0, 1], got {text}")
    return value


def _utc_now():
    return datetime.now(timezone.utc).isoformat()


def _write_manifest(args, manifest_path, outputs, started):
    parameters = {k: v for k, v in sorted(vars(args).items())
                  if k != "func"}
    payload = {
        "command": args.func.__name__.removeprefix("cmd_"),
        "version": __version__,
        "parameters": parameters,
        "seeds": {k: v for k, v in parameters.items() if "seed" in k},
        "outputs": outputs,
        "started": started,
        "finished": _utc_now(),
    }
    directory = os.path.dirname(os.path.abspath(manifest_path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, manifest_path)
    except BaseException:
        os.unlink(tmp)
        raise


def _finish(args, primary_output, outputs, started):
    if os.path.isdir(primary_output):
        manifest = os.path.join(primary_output, "run.json")
    else:
        manifest = primary_output + ".run.json"
    _write_manifest(args, manifest, outputs, started)
    return 0


def cmd_rasterize(args):
    started = _utc_now()
    with open(args.layout, encoding="utf-8") as fh:
        layout = parse_layout(fh.read())
    grid = rasterize(layout, args.pitch)
    storage.write_grid(grid, args.out, dtype="u8")
    return _finish(args, args.out, [args.out], started)


def cmd_synth(args):
    started = _utc_now()
    raster = storage.read_grid(args.grid)
    cfg = oracle.OracleConfig(
        planarization_sigma=args.sigma,
        max_erosion_nm=args.erosion,
        dishing_amp_nm=args.dishing,
        noise_amp_nm=args.noise,
        seed=args.seed,
    )
    heights = oracle.generate(raster, cfg)
    storage.write_grid(heights, args.out, dtype="f32")
    sidecar = os.path.join(os.path.dirname(os.path.abspath(args.out)),
                           "oracle.txt")
    with open(sidecar, "w", encoding="utf-8") as fh:
        fh.write("\n".join(oracle.sidecar_lines(cfg)) + "\n")
    return _finish(args, args.out, [args.out, sidecar], started)


def cmd_dataset(args):
    started = _utc_now()
    input_grid = storage.read_grid(args.input)
    target_grid = storage.read_grid(args.target)
    if input_grid.values.shape != target_grid.values.shape:
        raise DataError(
            f"input grid {input_grid.values.shape} and target grid "
            f"{target_grid.values.shape} differ in size")
    stride = args.stride if args.stride is not None else args.frame
    dataset = preprocess.build_dataset(
        input_grid, target_grid,
        frame_size=args.frame,
        stride=stride,
        test_fraction=args.test_fraction,
        seed=args.seed,
        smoothing=preprocess.SmoothingConfig(args.smooth_m, args.smooth_n),
    )
    storage.save_dataset(dataset, args.out)
    n_test = len(dataset.split_samples("test"))
    print(f"samples={len(dataset.samples)} "
          f"train={len(dataset.samples) - n_test} test={n_test}")
    return _finish(args, args.out, [args.out], started)


def cmd_train(args):
    started = _utc_now()
    dataset = storage.load_dataset(args.data)
    config = unet.UNetConfig(depth=args.depth,
                             base_channels=args.base_channels,
                             kernel=args.kernel,
                             frame_size=dataset.frame_size)
    model = unet.init(config, args.init_seed)
    model.norm = dataset.norm
    cfg = TrainConfig(learning_rate=args.lr,
                      batch_size=args.batch,
                      max_epochs=args.epochs,
                      patience=args.patience,
                      seed=args.seed,
                      optimizer=args.optimizer)
    best, history = train(dataset, model, cfg)
    storage.save_checkpoint(best, args.out)
    history_path = (args.history if args.history is not None
                    else os.path.splitext(args.out)[0] + ".history.csv")
    write_history(history, history_path)
    test_losses = [te for _, te in history]
    print(f"epochs={len(history)} best_epoch={best.epoch} "
          f"best_test_loss={min(test_losses):.9g}")
    return _finish(args, args.out, [args.out, history_path], started)


def cmd_predict(args):
    started = _utc_now()
    state = storage.load_checkpoint(args.checkpoint)
    grid = storage.read_grid(args.grid)
    prediction, seconds = evaluation.timed_predict(state, grid)
    storage.write_grid(prediction, args.out, dtype="f32")
    print(f"t_inf={seconds:.4g}s")
    return _finish(args, args.out, [args.out], started)


def cmd_eval(args):
    started = _utc_now()
    if args.checkpoint is not None:
        state = storage.load_checkpoint(args.checkpoint)
        dataset = storage.load_dataset(args.data)
        metrics = evaluation.evaluate(state, dataset, split=args.split)
    else:
        pred = storage.read_grid(args.pred)
        truth = storage.read_grid(args.truth)
        if pred.values.shape != truth.values.shape:
            raise GridFormatError(
                f"grid size mismatch: prediction {pred.values.shape} vs "
                f"truth {truth.values.shape}")
        metrics = evaluation.compute_metrics(pred.values[None],
                                             truth.values[None])
    evaluation.write_metrics_csv(metrics, args.metrics)
    print(evaluation.summary_line(metrics))
    return _finish(args, args.metrics, [args.metrics], started)


def cmd_xsec(args):
    started = _utc_now()
    grid = storage.read_grid(args.grid)
    points = evaluation.cross_section(grid, args.row)
    points2 = None
    if args.grid2 is not None:
        other = storage.read_grid(args.grid2)
        if other.values.shape != grid.values.shape:
            raise GridFormatError(
                f"grid size mismatch: {grid.values.shape} vs "
                f"{other.values.shape}")
        points2 = evaluation.cross_section(other, args.row)
    evaluation.write_cross_section_csv(points, args.out, points2)
    return _finish(args, args.out, [args.out], started)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="cmpnet",
        description="Layout-to-topography modeling pipeline.")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True,
                                metavar="SUBCOMMAND")

    def add(name, help_text):
        p = sub.add_parser(
            name, help=help_text, description=help_text,
            formatter_class=argparse.ArgumentDefaultsHelpFormatter)
        return p

    p = add("rasterize", "Rasterize a rectangle layout onto a pixel grid.")
    p.add_argument("--layout", required=True, help="layout text file")
    p.add_argument("--pitch", required=True, type=_positive_float,
                   help="pixel pitch in nm")
    p.add_argument("--out", required=True, help="output grid file")
    p.set_defaults(func=cmd_rasterize)

    p = add("synth", "Generate a synthetic height map for a binary raster.")
    p.add_argument("--grid", required=True, help="binary raster grid file")
    p.add_argument("--out", required=True, help="output height grid file")
    p.add_argument("--sigma", type=_positive_float, default=8.0,
                   help="planarization scale in pixels")
    p.add_argument("--erosion", type=_positive_float, default=40.0,
                   help="maximum erosion depth in nm")
    p.add_argument("--dishing", type=_nonneg_float, default=3.0,
                   help="dishing amplitude in nm")
    p.add_argument("--noise", type=_nonneg_float, default=0.5,
                   help="uniform noise amplitude in nm")
    p.add_argument("--seed", type=int, default=0, help="noise seed")
    p.set_defaults(func=cmd_synth)

    p = add("dataset", "Build a training dataset from a grid pair.")
    p.add_argument("--input", required=True, help="binary raster grid file")
    p.add_argument("--target", required=True, help="height grid file")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--frame", type=_positive_int, default=128,
                   help="subframe size in pixels")
    p.add_argument("--stride", type=_positive_int, default=None,
                   help="tiling stride in pixels (default: frame size)")
    p.add_argument("--test-fraction", type=_fraction, default=0.2,
                   help="fraction of base frames held out for testing")
    p.add_argument("--seed", type=int, default=0, help="split seed")
    p.add_argument("--smooth-m", type=_positive_int, default=5,
                   help="smoothing kernel rows (odd)")
    p.add_argument("--smooth-n", type=_positive_int, default=5,
                   help="smoothing kernel columns (odd)")
    p.set_defaults(func=cmd_dataset)

    p = add("train", "Train a model on a dataset directory.")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--out", required=True, help="output checkpoint file")
    p.add_argument("--history", default=None,
                   help="loss history CSV (default: <out>.history.csv)")
    p.add_argument("--depth", type=_positive_int, default=3,
                   help="number of pooling levels")
    p.add_argument("--base-channels", type=_positive_int, default=16,
                   help="channels at the first level")
    p.add_argument("--kernel", type=_positive_int, default=3,
                   help="convolution kernel size (odd)")
    p.add_argument("--lr", type=_positive_float, default=1e-3,
                   help="learning rate")
    p.add_argument("--batch", type=_positive_int, default=16,
                   help="minibatch size")
    p.add_argument("--epochs", type=_positive_int, default=150,
                   help="maximum training epochs")
    p.add_argument("--patience", type=_positive_int, default=20,
                   help="epochs without test improvement before stopping")
    p.add_argument("--optimizer", choices=("adam", "sgd"), default="adam",
                   help="parameter update rule")
    p.add_argument("--seed", type=int, default=0, help="shuffle seed")
    p.add_argument("--init-seed", type=int, default=0,
                   help="weight initialization seed")
    p.set_defaults(func=cmd_train)

    p = add("predict", "Predict heights for a raster with a checkpoint.")
    p.add_argument("--checkpoint", required=True, help="checkpoint file")
    p.add_argument("--grid", required=True, help="binary raster grid file")
    p.add_argument("--out", required=True, help="output height grid file")
    p.set_defaults(func=cmd_predict)

    p = add("eval", "Compute L1/RMSE metrics in nm.")
    p.add_argument("--checkpoint", help="checkpoint file (with --data)")
    p.add_argument("--data", help="dataset directory (with --checkpoint)")
    p.add_argument("--split", choices=("train", "test"), default="test",
                   help="dataset split to evaluate")
    p.add_argument("--pred", help="predicted height grid (with --truth)")
    p.add_argument("--truth", help="reference height grid (with --pred)")
    p.add_argument("--metrics", default="metrics.csv",
                   help="per-sample metrics CSV output")
    p.set_defaults(func=cmd_eval)

    p = add("xsec", "Export one grid row as a cross-section CSV.")
    p.add_argument("--grid", required=True, help="height grid file")
    p.add_argument("--grid2", default=None,
                   help="second grid for a comparison column")
    p.add_argument("--row", required=True, type=int, help="row index")
    p.add_argument("--out", required=True, help="output CSV file")
    p.set_defaults(func=cmd_xsec)

    return parser


def _validate_eval_args(parser, args):
    if args.func is not cmd_eval:
        return
    by_checkpoint = args.checkpoint is not None or args.data is not None
    by_grids = args.pred is not None or args.truth is not None
    if by_checkpoint == by_grids:
        parser.error("use either --checkpoint with --data, "
                     "or --pred with --truth")
    if by_checkpoint and (args.checkpoint is None or args.data is None):
        parser.error("--checkpoint and --data go together")
    if by_grids and (args.pred is None or args.truth is None):
        parser.error("--pred and --truth go together")


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _validate_eval_args(parser, args)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        return args.func(args)
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except (LayoutError, GridFormatError, CheckpointError, DataError,
            OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def run():
    sys.exit(main())


if __name__ == "__main__":
    run()
