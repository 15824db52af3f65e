"""Pipeline configuration document and dataset splitting.

One JSON document drives all commands; unknown keys are rejected so typos
fail loudly instead of silently falling back to defaults.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .augment import AugmentationSet, default_augmentation_set
from .errors import ParameterError
from .fusion import CoefficientVector
from .predictor import SyntheticOracle, binding_from_json, binding_to_json
from .preprocess import CT_WINDOW, PET_WINDOW, ScaleWindow


class ConfigError(ParameterError):
    """A configuration document is malformed or inconsistent."""


_CONFIG_KEYS = {
    "ct_window", "pet_window", "crop_threshold", "crop_margin",
    "augmentations", "coefficients", "predictor", "theta", "connectivity", "seed",
}


@dataclass(frozen=True)
class PipelineConfig:
    ct_window: ScaleWindow = CT_WINDOW
    pet_window: ScaleWindow = PET_WINDOW
    crop_threshold: float | None = None     # None: ct_window.out_min + 1e-3
    crop_margin: int = 0
    augmentations: AugmentationSet = field(default_factory=default_augmentation_set)
    coefficients: CoefficientVector | None = None
    predictor: object = field(default_factory=SyntheticOracle)
    theta: float = 0.5
    connectivity: int = 26
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.theta < 1.0:
            raise ConfigError(f"theta must be inside (0, 1), got {self.theta}")
        if self.connectivity not in (6, 18, 26):
            raise ConfigError(f"connectivity must be 6, 18 or 26, got {self.connectivity}")
        if self.crop_margin < 0:
            raise ConfigError(f"crop_margin must be >= 0, got {self.crop_margin}")
        if self.coefficients is not None and len(self.coefficients) != len(self.augmentations):
            raise ConfigError(
                f"{len(self.coefficients)} coefficients for "
                f"{len(self.augmentations)} augmentations"
            )

    @property
    def effective_crop_threshold(self) -> float:
        if self.crop_threshold is not None:
            return float(self.crop_threshold)
        return self.ct_window.out_min + 1e-3

    def to_json(self) -> dict:
        return {
            "ct_window": self.ct_window.to_json(),
            "pet_window": self.pet_window.to_json(),
            "crop_threshold": self.crop_threshold,
            "crop_margin": self.crop_margin,
            "augmentations": self.augmentations.to_json(),
            "coefficients": None if self.coefficients is None else self.coefficients.to_json(),
            "predictor": binding_to_json(self.predictor),
            "theta": self.theta,
            "connectivity": self.connectivity,
            "seed": self.seed,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, doc: dict) -> "PipelineConfig":
        if not isinstance(doc, dict):
            raise ConfigError(f"config must be a JSON object, got {type(doc).__name__}")
        unknown = set(doc) - _CONFIG_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs = {}
        try:
            if "ct_window" in doc:
                kwargs["ct_window"] = ScaleWindow.from_json(doc["ct_window"])
            if "pet_window" in doc:
                kwargs["pet_window"] = ScaleWindow.from_json(doc["pet_window"])
            if "augmentations" in doc:
                kwargs["augmentations"] = AugmentationSet.from_json(doc["augmentations"])
            if doc.get("coefficients") is not None:
                kwargs["coefficients"] = CoefficientVector.from_json(doc["coefficients"])
            if "predictor" in doc:
                kwargs["predictor"] = binding_from_json(doc["predictor"])
        except (ParameterError, KeyError, TypeError) as exc:
            raise ConfigError(f"bad config: {exc}") from exc
        for key in ("crop_threshold", "crop_margin", "theta", "connectivity", "seed"):
            if key in doc:
                kwargs[key] = doc[key]
        try:
            return cls(**kwargs)
        except (ParameterError, TypeError) as exc:
            raise ConfigError(f"bad config: {exc}") from exc

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON: {exc}") from exc
        return cls.from_json(doc)


@dataclass(frozen=True)
class SplitSpec:
    """Dataset split fractions in (train, eval, test) order, plus RNG seed."""

    fractions: tuple[float, float, float] = (0.78, 0.12, 0.10)
    seed: int = 0

    def __post_init__(self):
        fractions = tuple(float(f) for f in self.fractions)
        if len(fractions) != 3:
            raise ParameterError("split needs exactly 3 fractions (train, eval, test)")
        if any(f <= 0 for f in fractions):
            raise ParameterError(f"split fractions must be positive, got {fractions}")
        if abs(sum(fractions) - 1.0) > 1e-9:
            raise ParameterError(f"split fractions must sum to 1, got {sum(fractions)}")
        object.__setattr__(self, "fractions", fractions)


def largest_remainder_counts(quotas, total: int) -> list[int]:
    """Integer apportionment of ``total`` by the largest-remainder rule.

    Floors first, then hands the leftover units to the largest fractional
    remainders; remainder ties go to the earlier entry.
    """
    floors = [int(np.floor(q)) for q in quotas]
    remainders = [q - f for q, f in zip(quotas, floors)]
    leftover = total - sum(floors)
    order = sorted(range(len(quotas)), key=lambda i: (-remainders[i], i))
    for i in order[:leftover]:
        floors[i] += 1
    return floors


def split_cases(case_ids, spec: SplitSpec) -> dict[str, list[str]]:
    """Seeded shuffle + largest-remainder partition into train/eval/test.

    Input order does not matter (ids are sorted before shuffling), the three
    parts are disjoint, and their union is the input.
    """
    ids = sorted(str(c) for c in case_ids)
    if not ids:
        raise ParameterError("case list is empty")
    rng = np.random.default_rng(spec.seed)
    shuffled = [ids[i] for i in rng.permutation(len(ids))]
    quotas = [f * len(ids) for f in spec.fractions]
    counts = largest_remainder_counts(quotas, len(ids))
    parts = {}
    offset = 0
    for name, count in zip(("train", "eval", "test"), counts):
        parts[name] = shuffled[offset:offset + count]
        offset += count
    return parts
