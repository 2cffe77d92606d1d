"""Command-line entry point: ``welavae <command> [options]``.

Exit status is 0 on success, 1 on usage errors and 2 when a run or report
fails. Every command accepts ``--config FILE`` (JSON whose keys are option
names, e.g. ``{"epochs": 30}``); explicit flags override it.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path


from . import dataset as dsmod
from . import evaluation as ev
from . import experiments as ex
from .model import ModelConfig, load_checkpoint
from .trainer import TrainConfig, TrainingDiverged, train

log = logging.getLogger("welavae")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def int_list(text: str) -> list[int]:
    """``"2..8"`` -> 2,3,...,8; ``"0,3,5"`` -> 0,3,5; ranges and commas combine."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if ".." in part:
            lo, hi = part.split("..")
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    if not out:
        raise argparse.ArgumentTypeError(f"empty list {text!r}")
    return out


def gamma_map(text: str) -> dict[int, float]:
    """``"2:2000,3:1500"``"""
    try:
        return {int(k): float(v) for k, v in (item.split(":") for item in text.split(","))}
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected p:gamma pairs, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", type=Path, default=None)
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--config", type=Path, default=None)
    common.add_argument("-v", "--verbose", action="store_true")

    training = _Parser(add_help=False)
    training.add_argument("--dataset", type=Path, required=False)
    training.add_argument("--family", choices=["tcvae", "wela"], default="wela")
    training.add_argument("--beta", type=float, default=ex.DEFAULT_BETA)
    training.add_argument("--K", type=int, default=None)
    training.add_argument("--hidden", type=int, default=1200)
    training.add_argument("--lr", type=float, default=1e-4)
    training.add_argument("--batch-size", type=int, default=256)
    training.add_argument("--epochs", type=int, default=150)

    run_ref = _Parser(add_help=False)
    run_ref.add_argument("--run", type=Path, required=False, help="run directory holding checkpoint.json")
    run_ref.add_argument("--dataset", type=Path, required=False)

    parser = _Parser(prog="welavae", description="WeLa-VAE / TCVAE disentanglement experiments on the Blobs dataset")
    sub = parser.add_subparsers(dest="command", required=True)

    ds = sub.add_parser("dataset", help="dataset utilities")
    ds_sub = ds.add_subparsers(dest="action", required=True)
    gen = ds_sub.add_parser("generate", parents=[common], help="render the Blobs dataset and weak labels")
    gen.add_argument("--side", type=int, default=64)
    gen.add_argument("--variants", type=int, default=25)
    gen.add_argument("--sigma-min", type=float, default=1.5)
    gen.add_argument("--sigma-max", type=float, default=4.0)
    gen.add_argument("--jitter", type=float, default=0.0)
    gen.add_argument("--p", type=int_list, default=list(range(2, 9)))

    tr = sub.add_parser("train", parents=[common, training], help="train one model")
    tr.add_argument("--p", type=int, default=None)
    tr.add_argument("--gamma", type=float, default=None)

    sw = sub.add_parser("sweep", parents=[common, training], help="train many seeds / label dims")
    sw.add_argument("--p", type=int_list, default=list(range(2, 9)))
    sw.add_argument("--gammas", type=gamma_map, default=None)
    sw.add_argument("--seeds", type=int_list, default=list(range(50)))
    sw.add_argument("--workers", type=int, default=1)

    e = sub.add_parser("eval", parents=[common, run_ref], help="score one run")
    e.add_argument("--task", choices=["cartesian", "polar"], default="polar")
    e.add_argument("--range-mode", choices=["grid", "nominal"], default="grid")

    t = sub.add_parser("traverse", parents=[common, run_ref], help="latent traversal images")
    t.add_argument("--steps", type=int, default=10)
    t.add_argument("--range", type=float, nargs=2, default=(-3.0, 3.0), metavar=("LO", "HI"))

    sub.add_parser("heatmap", parents=[common, run_ref], help="positional heat maps of each channel")

    rp = sub.add_parser("report", parents=[common], help="summary table of a sweep")
    rp.add_argument("--task", choices=["cartesian", "polar"], default="polar")
    rp.add_argument("--in", dest="runs", type=Path, required=True)
    rp.add_argument("--dataset", type=Path, default=None)
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if getattr(args, "config", None) is None:
        return args
    overrides = {k.replace("-", "_"): v for k, v in json.loads(Path(args.config).read_text()).items()}
    for key in ("p", "seeds"):
        if isinstance(overrides.get(key), str):
            overrides[key] = int_list(overrides[key])
    # config values become defaults, so explicit flags still win
    for child in _leaf_parsers(parser):
        child.set_defaults(**overrides)
    return parser.parse_args(argv)


def _leaf_parsers(parser):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            for child in action.choices.values():
                yield child
                yield from _leaf_parsers(child)


def _need(args, *names):
    missing = [n for n in names if getattr(args, n, None) is None]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + m.replace("_", "-") for m in missing))


def cmd_dataset_generate(args) -> int:
    _need(args, "out")
    ds = dsmod.generate_dataset(args.side, args.variants, args.sigma_min, args.sigma_max, args.seed, args.jitter)
    dsmod.attach_labels(ds, args.p)
    path = dsmod.save_dataset(ds, args.out)
    print(json.dumps({"path": str(path), "N": ds.N, "content_hash": ds.content_hash}))
    return 0


def _model_config(args, D: int, p) -> ModelConfig:
    if args.family == "tcvae":
        return ModelConfig(D=D, K=args.K or ex.TCVAE_K, hidden=args.hidden, beta=args.beta)
    gamma = args.gamma if getattr(args, "gamma", None) is not None else ex.REFERENCE_GAMMAS.get(p)
    if gamma is None:
        raise UsageError(f"no gamma given for p={p}")
    return ModelConfig(D=D, K=args.K or 2, label_dims=[p, p], hidden=args.hidden, beta=args.beta, gamma=gamma)


def cmd_train(args) -> int:
    _need(args, "dataset", "out")
    if args.family == "wela" and args.p is None:
        raise UsageError("--p is required for the wela family")
    ds = dsmod.load_dataset(args.dataset)
    labels = None
    if args.family == "wela":
        if args.p not in ds.labels:
            raise UsageError(f"dataset has no labels for p={args.p}")
        labels = ds.labels[args.p]
    mcfg = _model_config(args, ds.D, args.p)
    if mcfg.m:
        ex.check_gamma(mcfg.gamma, args.p, ds.D)
    tcfg = TrainConfig(mcfg, learning_rate=args.lr, batch_size=args.batch_size, epochs=args.epochs,
                       seed=args.seed, threads=args.threads)
    result = train(ds, labels, tcfg, out_dir=args.out)
    (Path(args.out) / ex.DATASET_REF).write_text(str(Path(args.dataset).resolve()) + "\n")
    print(json.dumps(result.to_dict(), indent=2, sort_keys=True))
    return 0


def cmd_sweep(args) -> int:
    _need(args, "dataset", "out")
    cfg = ex.SweepConfig(
        dataset=str(args.dataset), family=args.family, out_dir=str(args.out), beta=args.beta,
        gammas=args.gammas or dict(ex.REFERENCE_GAMMAS), ps=args.p, K=args.K, seeds=args.seeds,
        workers=args.workers, learning_rate=args.lr, batch_size=args.batch_size, epochs=args.epochs,
        hidden=args.hidden, threads=args.threads,
    )
    results = ex.run_sweep(cfg)
    failed = sum(1 for r in results if r.get("failed"))
    print(json.dumps({"runs": len(results), "failed": failed}))
    return 0


def _load_run(args):
    _need(args, "run")
    params, mcfg, manifest = load_checkpoint(args.run)
    ds_path = args.dataset
    if ds_path is None:
        ref = Path(args.run) / ex.DATASET_REF
        if not ref.exists():
            raise UsageError("--dataset is required (run does not record its dataset)")
        ds_path = Path(ref.read_text().strip())
    ds = dsmod.load_dataset(ds_path)
    labels = ds.labels[mcfg.label_dims[0]] if mcfg.m else None
    return params, mcfg, manifest, ds, labels


def cmd_eval(args) -> int:
    params, mcfg, manifest, ds, labels = _load_run(args)
    res = ev.score(ev.represent(params, mcfg, ds, labels), args.task, args.range_mode)
    row = {
        "model": Path(args.run).resolve().parent.name,
        "seed": manifest["seed"],
        "task": res.task,
        "mse": repr(res.mse),
        "assignment": "-".join(map(str, res.channel_assignment)),
        "inversions": "-".join(str(int(b)) for b in res.inversion_flags),
    }
    if args.out is not None:
        path = Path(args.out)
        path.parent.mkdir(parents=True, exist_ok=True)
        new = not path.exists()
        with open(path, "a", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(row))
            if new:
                w.writeheader()
            w.writerow(row)
    print(json.dumps(row))
    return 0


def cmd_traverse(args) -> int:
    _need(args, "out")
    params, mcfg, _, ds, labels = _load_run(args)
    idx = ev.traversal_panel(ds)
    ys = [y[idx] for y in labels.onehots] if labels is not None else None
    grids = ev.traverse(params, mcfg, ds.images[idx], ys, tuple(args.range), args.steps)
    written = []
    for n, (i, grid) in enumerate(zip(idx, grids)):
        c1, c2 = (int(v) for v in ds.coords[i])
        img = ev.tile_traversal(grid, ds.side)
        written.append(str(ev.write_pgm(Path(args.out) / f"traversal_{n}_c{c1}_{c2}.pgm", img, 0.0, 1.0,
                                        note=f"rows: latent channels; columns: z_k from {args.range[0]} to {args.range[1]}")))
    print(json.dumps({"written": written}))
    return 0


def cmd_heatmap(args) -> int:
    _need(args, "out")
    params, mcfg, _, ds, labels = _load_run(args)
    maps = ev.heatmap(params, mcfg, ds, labels)
    written = ev.write_heatmaps(maps, args.out)
    print(json.dumps({"written": [str(p) for p in written]}))
    return 0


def cmd_report(args) -> int:
    rows = ex.build_report(args.runs, args.task, args.dataset)
    out = args.out or args.runs
    csv_path, txt_path = ex.write_report(rows, out, args.task)
    sys.stdout.write(txt_path.read_text())
    return 0


COMMANDS = {
    "train": cmd_train,
    "sweep": cmd_sweep,
    "eval": cmd_eval,
    "traverse": cmd_traverse,
    "heatmap": cmd_heatmap,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if getattr(args, "verbose", False) else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = cmd_dataset_generate if args.command == "dataset" else COMMANDS[args.command]
    try:
        return handler(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"welavae: error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"welavae: {exc}", file=sys.stderr)
        return 2
    except (TrainingDiverged, ValueError, OSError) as exc:
        print(f"welavae: run failed: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
