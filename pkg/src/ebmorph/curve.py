"""Photometry ingestion, phase folding, normalization and binning."""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyCurve, FormatError, InvalidPeriod, NonPositiveMax


class Passband(str, enum.Enum):
    GAIA_G = "gaia_g"
    I = "i"
    TESS = "tess"


class EpochKind(str, enum.Enum):
    MINIMUM_FLUX = "min"
    MAXIMUM_FLUX = "max"


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class LightCurve:
    times: np.ndarray
    fluxes: np.ndarray
    flux_errors: np.ndarray | None = None
    passband: Passband = Passband.TESS
    n_dropped: int = 0

    def __post_init__(self):
        times = _frozen(self.times)
        fluxes = _frozen(self.fluxes)
        if times.ndim != 1 or times.shape != fluxes.shape:
            raise FormatError("times and fluxes must be 1-D sequences of equal length")
        if times.size == 0:
            raise EmptyCurve("light curve has no points")
        if not (np.all(np.isfinite(times)) and np.all(np.isfinite(fluxes))):
            raise FormatError("times and fluxes must be finite")
        if np.any(fluxes <= 0):
            raise FormatError("fluxes must be positive")
        if np.any(np.diff(times) <= 0):
            raise FormatError("times must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "fluxes", fluxes)
        if self.flux_errors is not None:
            errs = _frozen(self.flux_errors)
            if errs.shape != times.shape:
                raise FormatError("flux_errors length differs from times")
            object.__setattr__(self, "flux_errors", errs)
        object.__setattr__(self, "passband", Passband(self.passband))

    def __len__(self) -> int:
        return self.times.size


@dataclass(frozen=True)
class Ephemeris:
    period: float
    epoch: float
    epoch_kind: EpochKind = EpochKind.MINIMUM_FLUX

    def __post_init__(self):
        if not (math.isfinite(self.period) and self.period > 0):
            raise InvalidPeriod(f"period must be finite and > 0, got {self.period!r}")
        if not math.isfinite(self.epoch):
            raise InvalidPeriod(f"epoch must be finite, got {self.epoch!r}")
        object.__setattr__(self, "epoch_kind", parse_epoch_kind(self.epoch_kind))


def parse_epoch_kind(value) -> EpochKind:
    if isinstance(value, EpochKind):
        return value
    aliases = {"min": "min", "minimumflux": "min", "minimum": "min",
               "max": "max", "maximumflux": "max", "maximum": "max"}
    try:
        return EpochKind(aliases[str(value).lower()])
    except KeyError:
        raise FormatError(f"unknown epoch kind {value!r}") from None


@dataclass(frozen=True)
class PhasedCurve:
    """Phase-folded curve; phases in [0, 1) sorted ascending."""

    phases: np.ndarray
    fluxes: np.ndarray
    normalized: bool = False
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        phases = _frozen(self.phases)
        fluxes = _frozen(self.fluxes)
        if phases.ndim != 1 or phases.shape != fluxes.shape:
            raise FormatError("phases and fluxes must be 1-D sequences of equal length")
        if phases.size and (phases.min() < 0 or phases.max() >= 1):
            raise FormatError("phases must lie in [0, 1)")
        if np.any(np.diff(phases) < 0):
            raise FormatError("phases must be sorted ascending")
        object.__setattr__(self, "phases", phases)
        object.__setattr__(self, "fluxes", fluxes)

    @property
    def n_points(self) -> int:
        return self.phases.size

    def __len__(self) -> int:
        return self.phases.size


def _split_row(line: str) -> list[str]:
    if "," in line:
        return [tok.strip() for tok in line.split(",")]
    if ";" in line:
        return [tok.strip() for tok in line.split(";")]
    return line.split()


def parse_photometry(path, passband=Passband.TESS) -> LightCurve:
    """Read a delimited ``time, flux[, flux_error]`` text file.

    Lines starting with ``#`` are comments and a single non-numeric header
    line is tolerated. Rows whose time or flux is not finite (or whose flux is
    not positive) are dropped and counted in ``LightCurve.n_dropped``.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"photometry file not found: {path}")

    rows = []
    n_dropped = 0
    n_numeric_cols = None
    with path.open() as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            tokens = _split_row(line)
            values = []
            for tok in tokens[:3]:
                try:
                    values.append(float(tok))
                except ValueError:
                    values.append(None)
            if n_numeric_cols is None and rows == [] and all(v is None for v in values):
                continue  # header
            if len(values) < 2 or values[0] is None and values[1] is None:
                raise FormatError(f"{path}:{lineno}: expected at least 2 numeric columns")
            if n_numeric_cols is None:
                n_numeric_cols = len(values)
            t, f = values[0], values[1]
            e = values[2] if len(values) > 2 else None
            if t is None or f is None or not math.isfinite(t) or not math.isfinite(f) or f <= 0:
                n_dropped += 1
                continue
            rows.append((t, f, e if e is not None else math.nan))

    if n_numeric_cols is not None and n_numeric_cols < 2:
        raise FormatError(f"{path}: fewer than 2 numeric columns")
    if not rows:
        raise EmptyCurve(f"{path}: no valid rows")

    data = np.array(rows, dtype=float)
    order = np.argsort(data[:, 0], kind="stable")
    data = data[order]
    # duplicated time stamps: keep the first occurrence
    keep = np.ones(len(data), dtype=bool)
    keep[1:] = np.diff(data[:, 0]) > 0
    n_dropped += int((~keep).sum())
    data = data[keep]

    errors = data[:, 2] if n_numeric_cols and n_numeric_cols >= 3 else None
    return LightCurve(data[:, 0], data[:, 1], errors, Passband(passband), n_dropped)


def phase_fold(curve: LightCurve, eph: Ephemeris) -> PhasedCurve:
    period = float(eph.period)
    if not (math.isfinite(period) and period > 0):
        raise InvalidPeriod(f"period must be finite and > 0, got {period!r}")
    cycles = (curve.times - eph.epoch) / period
    # cycle counts within rounding error of an integer fold to exactly 0
    nearest = np.round(cycles)
    on_integer = np.abs(cycles - nearest) <= 8 * np.finfo(float).eps * np.maximum(1.0, np.abs(cycles))
    cycles = np.where(on_integer, nearest, cycles)
    phases = cycles - np.floor(cycles)
    phases[phases >= 1.0] = 0.0
    order = np.argsort(phases, kind="stable")
    return PhasedCurve(phases[order], curve.fluxes[order], normalized=False)


def normalize_max_flux(curve: PhasedCurve) -> PhasedCurve:
    if curve.n_points == 0:
        raise EmptyCurve("cannot normalize an empty curve")
    peak = curve.fluxes.max()
    if not peak > 0:
        raise NonPositiveMax(f"maximum flux must be positive, got {peak!r}")
    return PhasedCurve(curve.phases, curve.fluxes / peak, normalized=True, meta=curve.meta)


def bin_phases(curve: PhasedCurve, n_bins: int = 100) -> PhasedCurve:
    """Average fluxes into ``n_bins`` equal phase bins.

    Empty bins are filled by linear interpolation between the nearest
    non-empty bins, wrapping around phase 1 -> 0.
    """
    if n_bins < 2:
        raise ValueError("n_bins must be >= 2")
    if curve.n_points == 0:
        raise EmptyCurve("cannot bin an empty curve")
    idx = np.minimum((curve.phases * n_bins).astype(np.int64), n_bins - 1)
    counts = np.bincount(idx, minlength=n_bins)
    sums = np.bincount(idx, weights=curve.fluxes, minlength=n_bins)
    filled = counts > 0
    fluxes = np.empty(n_bins)
    fluxes[filled] = sums[filled] / counts[filled]
    if not filled.all():
        occupied = np.flatnonzero(filled)
        empty = np.flatnonzero(~filled)
        fluxes[empty] = np.interp(empty, occupied, fluxes[occupied], period=n_bins)
    centers = (np.arange(n_bins) + 0.5) / n_bins
    normalized = curve.normalized and bool(np.isclose(fluxes.max(), 1.0, rtol=0, atol=1e-12))
    return PhasedCurve(centers, fluxes, normalized=normalized, meta=curve.meta)


def align_minimum(curve: PhasedCurve) -> PhasedCurve:
    """Rotate phases so the faintest point sits at phase 0.

    Ties go to the smallest original phase.
    """
    if curve.n_points == 0:
        raise EmptyCurve("cannot align an empty curve")
    i = int(np.argmin(curve.fluxes))
    shift = curve.phases[i]
    phases = curve.phases - shift
    phases[phases < 0] += 1.0
    phases = np.minimum(phases, np.nextafter(1.0, 0.0))
    phases = np.roll(phases, -i)
    phases[0] = 0.0
    fluxes = np.roll(curve.fluxes, -i)
    return PhasedCurve(phases, fluxes, normalized=curve.normalized, meta=curve.meta)


def preprocess(curve: LightCurve, eph: Ephemeris, n_bins: int | None = 100) -> PhasedCurve:
    """Fold, normalize, optionally bin, and put the primary minimum at phase 0."""
    phased = normalize_max_flux(phase_fold(curve, eph))
    if n_bins:
        phased = bin_phases(phased, n_bins)
    return align_minimum(phased)


def load_ephemeris_catalog(path) -> dict[str, Ephemeris]:
    """Read ``[{id, period, epoch, epoch_kind}, ...]`` (JSON list or JSON lines)."""
    text = Path(path).read_text()
    try:
        records = json.loads(text)
    except json.JSONDecodeError:
        records = [json.loads(line) for line in text.splitlines() if line.strip()]
    if isinstance(records, dict):
        records = [records]
    out = {}
    for rec in records:
        out[str(rec["id"])] = Ephemeris(
            float(rec["period"]), float(rec["epoch"]), rec.get("epoch_kind", "min")
        )
    return out


def write_curve(path, curve: PhasedCurve) -> None:
    """Write a phased curve as ``phase,flux`` text with fixed 17-digit precision."""
    lines = ["# phase,flux"]
    lines += [f"{p:.17g},{f:.17g}" for p, f in zip(curve.phases, curve.fluxes)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_curve(path) -> PhasedCurve:
    data = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    if data.shape[0] == 0:
        raise EmptyCurve(f"{path}: no rows")
    if data.shape[1] < 2:
        raise FormatError(f"{path}: expected phase,flux columns")
    order = np.argsort(data[:, 0], kind="stable")
    return PhasedCurve(data[order, 0], data[order, 1])
