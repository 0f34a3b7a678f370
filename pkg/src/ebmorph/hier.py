"""Two-stage classification: morphology first, then that branch's spot model."""

from __future__ import annotations

from dataclasses import dataclass

from . import model
from .curve import PhasedCurve
from .imaging import DEFAULT_GRIDSIZE, curve_to_image, quantize
from .synth import Morphology

THRESHOLD = 0.5


@dataclass(frozen=True)
class HierLabel:
    morphology: Morphology
    has_spot: bool
    p_morph: float  # probability of overcontact
    p_spot: float  # probability of a spot, from the branch model

    def to_dict(self) -> dict:
        return {
            "morphology": self.morphology.value,
            "has_spot": self.has_spot,
            "p_morph": self.p_morph,
            "p_spot": self.p_spot,
        }


def classify_image(binary_ckpt, detached_spot_ckpt, overcontact_spot_ckpt, image) -> HierLabel:
    p_morph = model.predict_proba(binary_ckpt, image)
    # class 1 = overcontact; an exact 0.5 stays detached
    morphology = Morphology.OVERCONTACT if p_morph > THRESHOLD else Morphology.DETACHED
    spot_ckpt = overcontact_spot_ckpt if morphology is Morphology.OVERCONTACT else detached_spot_ckpt
    p_spot = model.predict_proba(spot_ckpt, image)
    return HierLabel(morphology, p_spot > THRESHOLD, p_morph, p_spot)


def classify_hierarchical(
    binary_ckpt,
    detached_spot_ckpt,
    overcontact_spot_ckpt,
    curve: PhasedCurve,
    gridsize: int = DEFAULT_GRIDSIZE,
) -> HierLabel:
    """Render ``curve`` as a polar hexbin image and route it through the models.

    The image is quantized to 8 bits exactly as the training PGMs are.
    """
    image = quantize(curve_to_image(curve, gridsize))
    return classify_image(binary_ckpt, detached_spot_ckpt, overcontact_spot_ckpt, image)
