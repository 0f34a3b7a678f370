"""Command-line entry point: generate, transform, train, evaluate, classify, gradcheck."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import model as cnn
from .curve import Ephemeris, Passband, parse_photometry, preprocess
from .dataset import (
    TASKS,
    DatasetManifest,
    GenerationConfig,
    build_dataset,
    load_task_arrays,
    make_sample,
    sample_seed,
    transform_curves,
)
from .augment import AugmentConfig
from .errors import DegenerateDataset, EbmorphError, InvalidSpec
from .hier import classify_hierarchical
from .imaging import DEFAULT_GRIDSIZE, curve_to_image, quantize
from .metrics import evaluate as evaluate_scores
from .synth import Morphology

log = logging.getLogger("ebmorph")

GRADCHECK_TOLERANCE = 1e-4


def gradcheck_pair(seed: int) -> tuple[cnn.CompactCnn, np.ndarray, int]:
    """A random float64 model (biases included) and a synthetic Gaia-G image."""
    rng = np.random.default_rng(seed)
    model = cnn.CompactCnn.initialize(rng, np.float64)
    for name in cnn.PARAM_NAMES:
        if name.endswith(".b"):
            model.params[name] = rng.uniform(-0.1, 0.1, model.params[name].shape)
    morph = Morphology.DETACHED if rng.random() < 0.5 else Morphology.OVERCONTACT
    label = morph.label
    _, _, curve = make_sample(morph, bool(rng.random() < 0.5),
                              AugmentConfig.for_passband(Passband.GAIA_G), sample_seed(seed, 0))
    image = quantize(curve_to_image(curve)).astype(np.float64) / 255.0
    return model, image, label


def _json_out(obj) -> None:
    sys.stdout.write(json.dumps(obj, sort_keys=True) + "\n")


def cmd_generate(args) -> None:
    cfg = GenerationConfig(
        morphology=args.morphology,
        spots=args.spots,
        passband=args.passband,
        n_per_class=args.n_per_class,
        n_val_per_class=args.n_val_per_class,
        seed=args.seed,
        gridsize=args.gridsize,
    )
    build_dataset(cfg, args.out)


def cmd_transform(args) -> None:
    src = Path(args.input)
    if not src.is_dir():
        raise FileNotFoundError(f"curve directory not found: {src}")
    transform_curves(src, args.out, args.gridsize)


def cmd_train(args) -> None:
    manifest = DatasetManifest.load(args.manifest)
    images, labels = load_task_arrays(manifest, args.task, "train")
    if len(images) == 0:
        raise DegenerateDataset(f"no training entries for task {args.task}")
    val_images, val_labels = load_task_arrays(manifest, args.task, "val")
    cfg = cnn.TrainConfig(batch_size=args.batch, learning_rate=args.lr, epochs=args.epochs, seed=args.seed)

    def progress(info):
        log.info("epoch %s", json.dumps(info, sort_keys=True))

    ckpt = cnn.train(
        images, labels, cfg, val_images, val_labels,
        metadata={"task": args.task, "manifest_sha256": manifest.digest()},
        progress=progress,
    )
    cnn.save_checkpoint(ckpt, args.out)


def evaluate_checkpoint(manifest: DatasetManifest, ckpt: cnn.Checkpoint, task: str | None = None,
                        split: str | None = None) -> dict:
    task = task or ckpt.metadata.get("task")
    if task not in TASKS:
        raise InvalidSpec(f"checkpoint does not name a known task (got {task!r}); pass --task")
    if split is None:
        split = "val" if any(e.split == "val" for e in manifest.entries) else "train"
    images, labels = load_task_arrays(manifest, task, split)
    if len(images) == 0:
        raise DegenerateDataset(f"no {split} entries for task {task}")
    scores = cnn.predict_proba_batch(ckpt.model(), images)
    rep = evaluate_scores(scores, labels)
    return {
        **rep.to_dict(),
        "task": task,
        "split": split,
        "n": int(len(labels)),
        "manifest_sha256": manifest.digest(),
        "checkpoint_sha256": cnn.checkpoint_digest(ckpt),
    }


def cmd_evaluate(args) -> None:
    manifest = DatasetManifest.load(args.manifest)
    ckpt = cnn.load_checkpoint(args.ckpt)
    result = evaluate_checkpoint(manifest, ckpt, args.task, args.split)
    Path(args.report).write_text(json.dumps(result, indent=2, sort_keys=True) + "\n")


def cmd_classify(args) -> None:
    curve = parse_photometry(args.curve, args.passband)
    eph = Ephemeris(args.period, args.epoch, args.epoch_kind)
    phased = preprocess(curve, eph, n_bins=args.bins or None)
    ckpts = [cnn.load_checkpoint(p) for p in (args.binary, args.dspot, args.ospot)]
    label = classify_hierarchical(*ckpts, phased, gridsize=args.gridsize)
    _json_out(label.to_dict())


def cmd_gradcheck(args) -> None:
    errors = []
    for k in range(args.pairs):
        model, image, label = gradcheck_pair(args.seed + k)
        errors.append(cnn.grad_check(model, image, label, n_params=args.n_params, seed=args.seed + k))
    worst = max(errors)
    _json_out({"seed": args.seed, "pairs": args.pairs, "max_relative_error": worst,
               "tolerance": GRADCHECK_TOLERANCE, "passed": worst < GRADCHECK_TOLERANCE})
    if worst >= GRADCHECK_TOLERANCE:
        raise EbmorphError(f"gradient check failed: max relative error {worst:.3e}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ebmorph", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="progress logging on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="synthesize a labelled image dataset")
    p.add_argument("--morphology", choices=["detached", "overcontact", "both"], default="both")
    p.add_argument("--spots", choices=["none", "with", "mixed"], default="none")
    p.add_argument("--passband", choices=[b.value for b in Passband], default="gaia_g")
    p.add_argument("--n-per-class", type=int, default=4000)
    p.add_argument("--n-val-per-class", type=int, default=1000)
    p.add_argument("--gridsize", type=int, default=DEFAULT_GRIDSIZE)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("transform", help="render phase,flux curve files as PGM images")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--gridsize", type=int, default=DEFAULT_GRIDSIZE)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("train", help="train one classifier on a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--task", choices=TASKS, required=True)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a checkpoint on a manifest split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--task", choices=TASKS, default=None)
    p.add_argument("--split", choices=["train", "val"], default=None)
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("classify", help="classify one observed light curve")
    p.add_argument("--curve", required=True)
    p.add_argument("--period", type=float, required=True)
    p.add_argument("--epoch", type=float, required=True)
    p.add_argument("--epoch-kind", choices=["min", "max"], default="min")
    p.add_argument("--passband", choices=[b.value for b in Passband], default="tess")
    p.add_argument("--bins", type=int, default=100, help="phase bins; 0 keeps every point")
    p.add_argument("--gridsize", type=int, default=DEFAULT_GRIDSIZE)
    p.add_argument("--binary", required=True)
    p.add_argument("--dspot", required=True)
    p.add_argument("--ospot", required=True)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("gradcheck", help="compare backprop with finite differences")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pairs", type=int, default=1)
    p.add_argument("--n-params", type=int, default=200)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s", stream=sys.stderr)
    try:
        args.func(args)
    except (EbmorphError, OSError, ValueError, KeyError) as exc:
        if isinstance(exc, OSError) and exc.strerror:
            msg = f"{exc.strerror}: {exc.filename}"
        else:
            msg = str(exc).replace("\n", " ") or exc.__class__.__name__
        sys.stderr.write(f"ebmorph {args.command}: error: {msg}\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
