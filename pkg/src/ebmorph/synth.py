"""Synthetic eclipsing-binary light curves.

Detached systems use two uniform disks on a circular orbit with exact
circle-circle overlap for the eclipses. Overcontact systems use a smooth
two-dip model with an ellipsoidal term. Either can carry one dark spot,
applied as a multiplicative longitude-dependent dimming.
"""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass

import numpy as np

from .curve import PhasedCurve
from .errors import InvalidParams, InvalidPotential, NonPositiveQ


class Morphology(str, enum.Enum):
    DETACHED = "detached"
    OVERCONTACT = "overcontact"

    @property
    def label(self) -> int:
        return 0 if self is Morphology.DETACHED else 1


class Host(str, enum.Enum):
    PRIMARY = "primary"
    SECONDARY = "secondary"


# (low, high) per field
INTERVALS = {
    Morphology.DETACHED: {
        "period": (0.1, 2.0),
        "inclination": (30.0, 90.0),
        "mass_ratio": (0.01, 2.0),
        "potential": (2.0, 6.0),
        "temp_ratio": (0.7, 5.0),
    },
    Morphology.OVERCONTACT: {
        "period": (0.1, 1.5),
        "inclination": (30.0, 90.0),
        "mass_ratio": (0.01, 2.0),
        "potential": (2.0, 5.0),
        "temp_ratio": (1.0, 1.4),
    },
}
SPOT_INTERVALS = {
    "longitude": (30.0, 330.0),
    "latitude": (0.0, 180.0),
    "radius": (5.0, 30.0),
}
SPOT_TEMP_FACTOR = 0.8

# overcontact model constants
DIP_DEPTH = 0.35
DIP_WIDTH_BASE = 0.08
DIP_WIDTH_SLOPE = 0.10
ELLIPSOIDAL_AMP = 0.12

LOBE_FILL_CLAMP = 0.95


@dataclass(frozen=True)
class BinaryParams:
    period: float
    inclination: float
    mass_ratio: float
    potential_1: float
    potential_2: float
    temp_ratio: float  # T1/T2
    morphology: Morphology

    def __post_init__(self):
        object.__setattr__(self, "morphology", Morphology(self.morphology))

    def validate(self) -> None:
        iv = INTERVALS[self.morphology]
        checks = [
            ("period", self.period),
            ("inclination", self.inclination),
            ("mass_ratio", self.mass_ratio),
            ("potential", self.potential_1),
            ("potential", self.potential_2),
            ("temp_ratio", self.temp_ratio),
        ]
        for name, value in checks:
            lo, hi = iv[name]
            if not (lo <= value <= hi):
                raise InvalidParams(f"{name}={value} outside [{lo}, {hi}] for {self.morphology.value}")
        if self.morphology is Morphology.OVERCONTACT and self.potential_1 != self.potential_2:
            raise InvalidParams("overcontact systems share one potential")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["morphology"] = self.morphology.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "BinaryParams":
        return cls(**d)


@dataclass(frozen=True)
class SpotParams:
    longitude: float
    latitude: float  # colatitude in degrees, 0..180
    radius: float
    temp_factor: float = SPOT_TEMP_FACTOR
    host_star: Host = Host.PRIMARY

    def __post_init__(self):
        object.__setattr__(self, "host_star", Host(self.host_star))

    @property
    def amplitude(self) -> float:
        return (1.0 - self.temp_factor) * (self.radius / 30.0) ** 2

    def to_dict(self) -> dict:
        d = asdict(self)
        d["host_star"] = self.host_star.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SpotParams":
        return cls(**d)


@dataclass(frozen=True)
class SynthLabel:
    morphology: Morphology
    has_spot: bool


def _uniform(rng, lo, hi):
    return lo + (hi - lo) * rng.random()


def sample_binary_params(morphology, rng: np.random.Generator) -> BinaryParams:
    """Draw every parameter independently and uniformly from its interval."""
    morphology = Morphology(morphology)
    iv = INTERVALS[morphology]
    period = _uniform(rng, *iv["period"])
    inclination = _uniform(rng, *iv["inclination"])
    q = _uniform(rng, *iv["mass_ratio"])
    omega_1 = _uniform(rng, *iv["potential"])
    if morphology is Morphology.OVERCONTACT:
        omega_2 = omega_1
    else:
        omega_2 = _uniform(rng, *iv["potential"])
    temp_ratio = _uniform(rng, *iv["temp_ratio"])
    return BinaryParams(period, inclination, q, omega_1, omega_2, temp_ratio, morphology)


def sample_spot_params(rng: np.random.Generator) -> SpotParams:
    lon = _uniform(rng, *SPOT_INTERVALS["longitude"])
    lat = _uniform(rng, *SPOT_INTERVALS["latitude"])
    radius = _uniform(rng, *SPOT_INTERVALS["radius"])
    host = Host.PRIMARY if rng.random() < 0.5 else Host.SECONDARY
    return SpotParams(lon, lat, radius, SPOT_TEMP_FACTOR, host)


def roche_lobe_radius(q: float) -> float:
    """Eggleton's volume-equivalent Roche-lobe radius in units of the separation."""
    if not q > 0:
        raise NonPositiveQ(f"mass ratio must be > 0, got {q!r}")
    q23 = q ** (2.0 / 3.0)
    return 0.49 * q23 / (0.6 * q23 + math.log1p(q ** (1.0 / 3.0)))


def lobe_radii(q: float) -> tuple[float, float]:
    """Roche-lobe radii of (star 1, star 2); star 2 uses the inverted ratio."""
    return roche_lobe_radius(q), roche_lobe_radius(1.0 / q)


def radius_from_potential(omega: float, q: float, lobe: float | None = None) -> tuple[float, bool]:
    """Spherical radius ``1 / (omega - q)``.

    If ``lobe`` is given (detached systems) and the radius exceeds it, the
    radius is clamped to 95% of the lobe and the returned flag is True.
    """
    excess = omega - q
    if not excess > 1:
        raise InvalidPotential(f"need omega - q > 1, got omega={omega}, q={q}")
    r = 1.0 / excess
    if lobe is not None and r > lobe:
        return LOBE_FILL_CLAMP * lobe, True
    return r, False


def circle_overlap_area(r1: float, r2: float, d: np.ndarray) -> np.ndarray:
    """Exact intersection area of two disks with radii r1, r2 at distances d."""
    d = np.asarray(d, dtype=float)
    area = np.zeros_like(d)
    small, big = min(r1, r2), max(r1, r2)
    inside = d <= big - small
    area[inside] = math.pi * small**2
    partial = (d > big - small) & (d < r1 + r2)
    if np.any(partial):
        dp = d[partial]
        c1 = np.clip((dp**2 + r1**2 - r2**2) / (2 * dp * r1), -1.0, 1.0)
        c2 = np.clip((dp**2 + r2**2 - r1**2) / (2 * dp * r2), -1.0, 1.0)
        k = (-dp + r1 + r2) * (dp + r1 - r2) * (dp - r1 + r2) * (dp + r1 + r2)
        area[partial] = (
            r1**2 * np.arccos(c1) + r2**2 * np.arccos(c2) - 0.5 * np.sqrt(np.maximum(k, 0.0))
        )
    return area


def phase_grid(n_phases: int) -> np.ndarray:
    return (np.arange(n_phases) + 0.5) / n_phases


def projected_separation(phases: np.ndarray, inclination: float) -> np.ndarray:
    theta = 2 * np.pi * phases
    cos_i = math.cos(math.radians(inclination))
    return np.sqrt(np.sin(theta) ** 2 + (np.cos(theta) * cos_i) ** 2)


def detached_radii(params: BinaryParams) -> tuple[float, float, bool]:
    lobe_1, lobe_2 = lobe_radii(params.mass_ratio)
    r1, c1 = radius_from_potential(params.potential_1, params.mass_ratio, lobe_1)
    r2, c2 = radius_from_potential(params.potential_2, params.mass_ratio, lobe_2)
    return r1, r2, c1 or c2


def detached_flux(params: BinaryParams, phases: np.ndarray) -> np.ndarray:
    r1, r2, _ = detached_radii(params)
    brightness_2 = (1.0 / params.temp_ratio) ** 4
    lum_1 = r1**2
    lum_2 = r2**2 * brightness_2
    delta = projected_separation(phases, params.inclination)
    overlap = circle_overlap_area(r1, r2, delta) / math.pi
    # star 2 in front around phase 0, star 1 in front around phase 0.5
    star2_in_front = np.cos(2 * np.pi * phases) > 0
    occulted = np.where(star2_in_front, overlap, overlap * brightness_2)
    return (lum_1 + lum_2 - occulted) / (lum_1 + lum_2)


def overcontact_components(params: BinaryParams) -> dict:
    sin2i = math.sin(math.radians(params.inclination)) ** 2
    d1 = DIP_DEPTH * sin2i
    return {
        "d1": d1,
        "d2": d1 * (1.0 / params.temp_ratio) ** 4,
        "w": DIP_WIDTH_BASE + DIP_WIDTH_SLOPE * (5.0 - params.potential_1) / 3.0,
        "a_ell": ELLIPSOIDAL_AMP * sin2i,
    }


def overcontact_flux(params: BinaryParams, phases: np.ndarray) -> np.ndarray:
    c = overcontact_components(params)

    def dip(center):
        return np.exp(-np.sin(np.pi * (phases - center)) ** 2 / (2 * c["w"] ** 2))

    ellipsoidal = c["a_ell"] * (1 - np.cos(4 * np.pi * phases)) / 2 - c["a_ell"]
    return 1.0 - c["d1"] * dip(0.0) - c["d2"] * dip(0.5) + ellipsoidal


def spot_modulation(spot: SpotParams, phases: np.ndarray) -> np.ndarray:
    lon = math.radians(spot.longitude)
    visibility = np.maximum(0.0, np.cos(2 * np.pi * phases - lon))
    return 1.0 - spot.amplitude * visibility * math.sin(math.radians(spot.latitude))


def generate_curve(
    params: BinaryParams, spot: SpotParams | None = None, n_phases: int = 100
) -> tuple[PhasedCurve, SynthLabel]:
    """Model flux on ``n_phases`` equally spaced phases, normalized to max 1."""
    if n_phases < 16:
        raise ValueError("n_phases must be >= 16")
    params.validate()
    phases = phase_grid(n_phases)
    try:
        if params.morphology is Morphology.DETACHED:
            flux = detached_flux(params, phases)
        else:
            flux = overcontact_flux(params, phases)
    except (InvalidPotential, NonPositiveQ) as exc:
        raise InvalidParams(str(exc)) from exc
    if spot is not None:
        flux = flux * spot_modulation(spot, phases)
    flux = flux / flux.max()
    label = SynthLabel(params.morphology, spot is not None)
    return PhasedCurve(phases, flux, normalized=True), label
