"""Seeded dataset generation and the line-delimited JSON manifest."""

from __future__ import annotations

import hashlib
import json
import os
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from itertools import product
from pathlib import Path

import numpy as np

from .augment import AugmentConfig, augment
from .curve import Passband, PhasedCurve, align_minimum, read_curve, write_curve
from .errors import InvalidParams, InvalidSpec
from .imaging import DEFAULT_GRIDSIZE, curve_to_image, quantize, read_pgm, write_pgm
from .synth import (
    BinaryParams,
    Morphology,
    SpotParams,
    generate_curve,
    sample_binary_params,
    sample_spot_params,
)

SCHEMA_VERSION = 1
MANIFEST_NAME = "manifest.jsonl"
TASKS = ("binary", "detached_spot", "overcontact_spot")
MAX_REJECTIONS = 10_000


@dataclass(frozen=True)
class GenerationConfig:
    morphology: str = "both"  # detached | overcontact | both
    spots: str = "none"  # none | with | mixed
    passband: str = "gaia_g"
    n_per_class: int = 10
    n_val_per_class: int = 0
    seed: int = 0
    gridsize: int = DEFAULT_GRIDSIZE

    def __post_init__(self):
        if self.morphology not in ("detached", "overcontact", "both"):
            raise InvalidSpec(f"unknown morphology {self.morphology!r}")
        if self.spots not in ("none", "with", "mixed"):
            raise InvalidSpec(f"unknown spots option {self.spots!r}")
        try:
            Passband(self.passband)
        except ValueError:
            raise InvalidSpec(f"unknown passband {self.passband!r}") from None
        if self.n_per_class < 1:
            raise InvalidSpec("n_per_class must be >= 1")
        if self.n_val_per_class < 0:
            raise InvalidSpec("n_val_per_class must be >= 0")
        if self.gridsize < 4:
            raise InvalidSpec("gridsize must be >= 4")

    def classes(self) -> list[tuple[Morphology, bool]]:
        morphs = list(Morphology) if self.morphology == "both" else [Morphology(self.morphology)]
        spots = {"none": [False], "with": [True], "mixed": [False, True]}[self.spots]
        return list(product(morphs, spots))


@dataclass(frozen=True)
class ManifestEntry:
    sample_id: str
    split: str
    curve_file: str
    image_file: str
    morphology: Morphology
    has_spot: bool
    passband: Passband
    binary_params: BinaryParams
    spot_params: SpotParams | None
    augment: AugmentConfig
    seed: int

    def to_dict(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "split": self.split,
            "curve_file": self.curve_file,
            "image_file": self.image_file,
            "morphology": self.morphology.value,
            "has_spot": self.has_spot,
            "passband": self.passband.value,
            "binary_params": self.binary_params.to_dict(),
            "spot_params": self.spot_params.to_dict() if self.spot_params else None,
            "augment": self.augment.to_dict(),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ManifestEntry":
        return cls(
            sample_id=d["sample_id"],
            split=d["split"],
            curve_file=d["curve_file"],
            image_file=d["image_file"],
            morphology=Morphology(d["morphology"]),
            has_spot=bool(d["has_spot"]),
            passband=Passband(d["passband"]),
            binary_params=BinaryParams.from_dict(d["binary_params"]),
            spot_params=SpotParams.from_dict(d["spot_params"]) if d["spot_params"] else None,
            augment=AugmentConfig.from_dict(d["augment"]),
            seed=int(d["seed"]),
        )


@dataclass
class DatasetManifest:
    master_seed: int
    config: dict
    entries: list[ManifestEntry] = field(default_factory=list)
    schema_version: int = SCHEMA_VERSION
    root: Path | None = field(default=None, compare=False)

    def serialize(self) -> str:
        header = {
            "kind": "header",
            "schema_version": self.schema_version,
            "master_seed": self.master_seed,
            "config": self.config,
        }
        lines = [json.dumps(header, sort_keys=True)]
        lines += [json.dumps({"kind": "entry", **e.to_dict()}, sort_keys=True) for e in self.entries]
        return "\n".join(lines) + "\n"

    @classmethod
    def parse(cls, text: str, root=None) -> "DatasetManifest":
        header = None
        entries = []
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise InvalidSpec(f"manifest line {lineno}: not JSON ({exc.msg})") from None
            kind = rec.pop("kind", None)
            if kind == "header":
                header = rec
            elif kind == "entry":
                try:
                    entries.append(ManifestEntry.from_dict(rec))
                except (KeyError, TypeError, ValueError) as exc:
                    raise InvalidSpec(f"manifest line {lineno}: bad entry ({exc!r})") from None
            else:
                raise InvalidSpec(f"manifest line {lineno}: unknown record kind {kind!r}")
        if header is None:
            raise InvalidSpec("manifest has no header record")
        if header.get("schema_version") != SCHEMA_VERSION:
            raise InvalidSpec(f"unsupported manifest schema {header.get('schema_version')!r}")
        return cls(header["master_seed"], header["config"], entries, header["schema_version"],
                   Path(root) if root is not None else None)

    def write(self, path) -> None:
        Path(path).write_text(self.serialize())

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        path = Path(path)
        if path.is_dir():
            path = path / MANIFEST_NAME
        return cls.parse(path.read_text(), root=path.parent)

    def digest(self) -> str:
        return hashlib.sha256(self.serialize().encode()).hexdigest()

    def class_counts(self) -> dict[tuple[str, str, bool], int]:
        return dict(Counter((e.split, e.morphology.value, e.has_spot) for e in self.entries))

    def validate(self) -> None:
        """Balanced classes within each split and every referenced file present."""
        per_split: dict[str, set[int]] = {}
        for (split, _, _), n in self.class_counts().items():
            per_split.setdefault(split, set()).add(n)
        for split, sizes in per_split.items():
            if len(sizes) > 1:
                raise InvalidSpec(f"unbalanced classes in split {split!r}: {sorted(sizes)}")
        if self.root is not None:
            for e in self.entries:
                for rel in (e.curve_file, e.image_file):
                    if not (self.root / rel).exists():
                        raise InvalidSpec(f"missing file {rel} for {e.sample_id}")


def sample_seed(master_seed: int, index: int) -> int:
    return int(np.random.SeedSequence([master_seed, index]).generate_state(1)[0])


def make_sample(morphology: Morphology, has_spot: bool, aug: AugmentConfig, seed: int):
    """Draw a valid parameter set, synthesize, align, augment.

    Parameter sets the radius model rejects are redrawn from the same stream.
    Returns (params, spot, augmented curve).
    """
    rng = np.random.default_rng(seed)
    for _ in range(MAX_REJECTIONS):
        params = sample_binary_params(morphology, rng)
        spot = sample_spot_params(rng) if has_spot else None
        try:
            curve, _ = generate_curve(params, spot)
        except InvalidParams:
            continue
        break
    else:
        raise InvalidSpec("could not draw a valid parameter set")
    curve = align_minimum(curve)
    return params, spot, augment(curve, aug, rng)


def _job(args):
    out_dir, entry_stub, gridsize = args
    (sample_id, split, morph, has_spot, passband, aug, seed) = entry_stub
    params, spot, curve = make_sample(morph, has_spot, aug, seed)
    curve_rel = f"curves/{sample_id}.csv"
    image_rel = f"images/{sample_id}.pgm"
    write_curve(Path(out_dir) / curve_rel, curve)
    # image from the curve as written, so `transform` reproduces it exactly
    image = curve_to_image(read_curve(Path(out_dir) / curve_rel), gridsize)
    write_pgm(Path(out_dir) / image_rel, image)
    return ManifestEntry(sample_id, split, curve_rel, image_rel, morph, has_spot,
                         passband, params, spot, aug, seed)


def worker_count() -> int:
    env = os.environ.get("EBMORPH_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise InvalidSpec(f"EBMORPH_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def build_dataset(cfg: GenerationConfig, out_dir) -> DatasetManifest:
    """Generate curves, PGM images and ``manifest.jsonl`` under ``out_dir``."""
    out_dir = Path(out_dir)
    try:
        (out_dir / "curves").mkdir(parents=True, exist_ok=True)
        (out_dir / "images").mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out_dir}: {exc}") from exc

    passband = Passband(cfg.passband)
    aug = AugmentConfig.for_passband(passband)
    stubs = []
    index = 0
    for split, n in (("train", cfg.n_per_class), ("val", cfg.n_val_per_class)):
        for morph, has_spot in cfg.classes():
            for k in range(n):
                tag = f"{morph.value[0]}{'s' if has_spot else 'n'}"
                sample_id = f"{split}-{tag}-{k:06d}"
                stubs.append((sample_id, split, morph, has_spot, passband, aug,
                              sample_seed(cfg.seed, index)))
                index += 1

    jobs = [(str(out_dir), stub, cfg.gridsize) for stub in stubs]
    workers = min(worker_count(), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            entries = list(pool.map(_job, jobs, chunksize=64))
    else:
        entries = [_job(job) for job in jobs]

    manifest = DatasetManifest(cfg.seed, asdict(cfg), entries, root=out_dir)
    manifest.write(out_dir / MANIFEST_NAME)
    return manifest


def task_label(entry: ManifestEntry, task: str) -> int | None:
    """Class label of an entry for ``task``, or None if the entry is not part of it."""
    if task == "binary":
        return entry.morphology.label
    if task == "detached_spot":
        return int(entry.has_spot) if entry.morphology is Morphology.DETACHED else None
    if task == "overcontact_spot":
        return int(entry.has_spot) if entry.morphology is Morphology.OVERCONTACT else None
    raise InvalidSpec(f"unknown task {task!r}")


def load_task_arrays(manifest: DatasetManifest, task: str, split: str):
    """uint8 images (N, H, W) and labels for one task and split."""
    images, labels = [], []
    for e in manifest.entries:
        if e.split != split:
            continue
        label = task_label(e, task)
        if label is None:
            continue
        images.append(read_pgm(manifest.root / e.image_file, raw_bytes=True))
        labels.append(label)
    if not images:
        return np.zeros((0, 224, 224), dtype=np.uint8), np.zeros(0, dtype=np.int64)
    return np.stack(images), np.array(labels, dtype=np.int64)


def transform_curves(in_dir, out_dir, gridsize: int = DEFAULT_GRIDSIZE) -> list[Path]:
    """Render every ``*.csv`` / ``*.txt`` curve in ``in_dir`` to a PGM in ``out_dir``."""
    in_dir, out_dir = Path(in_dir), Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    sources = sorted(p for p in in_dir.iterdir() if p.suffix in (".csv", ".txt", ".dat"))
    written = []
    for src in sources:
        curve: PhasedCurve = read_curve(src)
        dest = out_dir / (src.stem + ".pgm")
        write_pgm(dest, curve_to_image(curve, gridsize))
        written.append(dest)
    return written
