"""Survey-quality degradation of synthetic curves: noise, outliers, decimation."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .curve import Passband, PhasedCurve
from .errors import TargetExceedsLength, TooManyOutliers

# floor for the outlier offset unit when a curve is augmented without noise
MIN_OUTLIER_SIGMA = 1e-3


@dataclass(frozen=True)
class AugmentConfig:
    noise_sigma: float
    outlier_count: int = 2
    outlier_scale: float = 10.0
    target_points: int = 100

    def __post_init__(self):
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if self.outlier_count < 0:
            raise ValueError("outlier_count must be >= 0")
        if self.target_points < 10:
            raise ValueError("target_points must be >= 10")

    @classmethod
    def for_passband(cls, passband) -> "AugmentConfig":
        return PASSBAND_DEFAULTS[Passband(passband)]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "AugmentConfig":
        return cls(**d)


PASSBAND_DEFAULTS = {
    Passband.TESS: AugmentConfig(noise_sigma=0.001, target_points=100),
    Passband.GAIA_G: AugmentConfig(noise_sigma=0.001, target_points=50),
    Passband.I: AugmentConfig(noise_sigma=0.005, target_points=100),
}


def _with_fluxes(curve: PhasedCurve, fluxes) -> PhasedCurve:
    return PhasedCurve(curve.phases, fluxes, normalized=False, meta=curve.meta)


def add_noise(curve: PhasedCurve, sigma: float, rng: np.random.Generator) -> PhasedCurve:
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0:
        return curve
    return _with_fluxes(curve, curve.fluxes + rng.normal(0.0, sigma, curve.n_points))


def inject_outliers(
    curve: PhasedCurve,
    count: int,
    scale: float,
    rng: np.random.Generator,
    sigma: float = MIN_OUTLIER_SIGMA,
) -> PhasedCurve:
    """Offset ``count`` distinct random points by ``+/- scale * sigma``.

    ``sigma`` is floored at ``MIN_OUTLIER_SIGMA`` so outliers stay visible on
    noiseless curves.
    """
    if count < 0:
        raise ValueError("count must be >= 0")
    if count > curve.n_points // 10:
        raise TooManyOutliers(f"{count} outliers exceed a tenth of {curve.n_points} points")
    if count == 0:
        return curve
    sigma_eff = max(sigma, MIN_OUTLIER_SIGMA)
    idx = rng.choice(curve.n_points, size=count, replace=False)
    signs = np.where(rng.random(count) < 0.5, -1.0, 1.0)
    fluxes = curve.fluxes.copy()
    fluxes[idx] += signs * scale * sigma_eff
    return _with_fluxes(curve, fluxes)


def decimate(curve: PhasedCurve, target_points: int, rng: np.random.Generator) -> PhasedCurve:
    if target_points > curve.n_points:
        raise TargetExceedsLength(f"cannot keep {target_points} of {curve.n_points} points")
    if target_points == curve.n_points:
        return curve
    keep = np.sort(rng.choice(curve.n_points, size=target_points, replace=False))
    return PhasedCurve(curve.phases[keep], curve.fluxes[keep], normalized=False, meta=curve.meta)


def augment(curve: PhasedCurve, cfg: AugmentConfig, rng: np.random.Generator) -> PhasedCurve:
    """Noise, then outliers, then decimation."""
    out = add_noise(curve, cfg.noise_sigma, rng)
    out = inject_outliers(out, cfg.outlier_count, cfg.outlier_scale, rng, sigma=cfg.noise_sigma)
    return decimate(out, min(cfg.target_points, out.n_points), rng)
