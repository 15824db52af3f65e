"""Challenge-style segmentation scoring.

Dice on binary masks plus component-level false-positive and false-negative
volumes in milliliters: a predicted component with no ground-truth overlap
counts fully toward FP volume, a ground-truth component never touched by the
prediction counts toward FN volume. Connectivity defaults to 26.
"""

import csv
import io
import json
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ParameterError
from .volume import MaskVolume, require_geometry_match

DEFAULT_CONNECTIVITY = 26


def dice(pred: MaskVolume, gt: MaskVolume) -> float:
    """Overlap score 2|pred∧gt| / (|pred| + |gt|); 1.0 when both are empty."""
    require_geometry_match(pred, gt, "pred and gt masks")
    p = pred.data != 0
    g = gt.data != 0
    denom = int(np.count_nonzero(p)) + int(np.count_nonzero(g))
    if denom == 0:
        return 1.0
    return 2.0 * int(np.count_nonzero(p & g)) / denom


def connected_components(mask: MaskVolume, connectivity: int = DEFAULT_CONNECTIVITY):
    """Label volume (0 = background, 1..K = components) and component count."""
    if connectivity not in (6, 18, 26):
        raise ParameterError(f"connectivity must be 6, 18 or 26, got {connectivity}")
    return kernels.label_components(mask.data, connectivity)


def _unmatched_volume_ml(a: MaskVolume, b: MaskVolume, connectivity: int) -> float:
    """Total volume of components of ``a`` that ``b`` never touches."""
    labels, count = connected_components(a, connectivity)
    if count == 0:
        return 0.0
    flat = labels.ravel()
    sizes = np.bincount(flat, minlength=count + 1)
    touched = np.bincount(flat[b.data.ravel() != 0], minlength=count + 1)
    missed_voxels = int(sizes[1:][touched[1:] == 0].sum())
    return missed_voxels * a.voxel_volume_ml


def fp_volume(pred: MaskVolume, gt: MaskVolume,
              connectivity: int = DEFAULT_CONNECTIVITY) -> float:
    """Milliliters of predicted components with zero ground-truth overlap."""
    require_geometry_match(pred, gt, "pred and gt masks")
    return _unmatched_volume_ml(pred, gt, connectivity)


def fn_volume(pred: MaskVolume, gt: MaskVolume,
              connectivity: int = DEFAULT_CONNECTIVITY) -> float:
    """Milliliters of ground-truth components the prediction never touches."""
    require_geometry_match(pred, gt, "pred and gt masks")
    return _unmatched_volume_ml(gt, pred, connectivity)


@dataclass(frozen=True)
class CaseScore:
    case_id: str
    dice: float
    fp_volume_ml: float
    fn_volume_ml: float

    def to_json(self) -> dict:
        return {
            "case_id": self.case_id,
            "dice": self.dice,
            "fp_volume_ml": self.fp_volume_ml,
            "fn_volume_ml": self.fn_volume_ml,
        }


@dataclass(frozen=True)
class EvalReport:
    per_case: tuple[CaseScore, ...]
    mean_dice: float
    mean_fp_volume_ml: float
    mean_fn_volume_ml: float
    case_count: int

    @classmethod
    def from_cases(cls, scores) -> "EvalReport":
        scores = tuple(scores)
        if not scores:
            raise ParameterError("cannot aggregate an empty score list")
        return cls(
            per_case=scores,
            mean_dice=float(np.mean([s.dice for s in scores])),
            mean_fp_volume_ml=float(np.mean([s.fp_volume_ml for s in scores])),
            mean_fn_volume_ml=float(np.mean([s.fn_volume_ml for s in scores])),
            case_count=len(scores),
        )

    def to_json(self) -> dict:
        return {
            "case_count": self.case_count,
            "mean_dice": self.mean_dice,
            "mean_fp_volume_ml": self.mean_fp_volume_ml,
            "mean_fn_volume_ml": self.mean_fn_volume_ml,
            "per_case": [s.to_json() for s in self.per_case],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        """One row per case plus a final aggregate row."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["case_id", "dice", "fp_volume_ml", "fn_volume_ml"])
        for s in self.per_case:
            writer.writerow([s.case_id, s.dice, s.fp_volume_ml, s.fn_volume_ml])
        writer.writerow(["mean", self.mean_dice, self.mean_fp_volume_ml, self.mean_fn_volume_ml])
        return buf.getvalue()


def evaluate(pairs, connectivity: int = DEFAULT_CONNECTIVITY) -> EvalReport:
    """Score (case_id, pred, gt) triples and aggregate arithmetic means."""
    scores = []
    for case_id, pred, gt in pairs:
        try:
            require_geometry_match(pred, gt, "pred and gt masks")
        except ParameterError as exc:
            raise ParameterError(f"case {case_id}: {exc}") from exc
        scores.append(CaseScore(
            case_id=case_id,
            dice=dice(pred, gt),
            fp_volume_ml=fp_volume(pred, gt, connectivity),
            fn_volume_ml=fn_volume(pred, gt, connectivity),
        ))
    return EvalReport.from_cases(scores)
