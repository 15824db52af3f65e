"""Black-box segmentation predictor bindings.

A binding maps a CT/PET pair to a voxelwise lesion-probability volume. Three
modes cover the practical range:

* :class:`PrecomputedPredictor` reads per-augmentation maps produced offline
  (``<directory>/<case_id>/aug_<index>.nii[.gz]``).
* :class:`SubprocessPredictor` shells out to an external tool (an nnU-Net
  style wrapper) through temp NIfTI files and a command template with
  ``{ct}``, ``{pet}`` and ``{out}`` placeholders.
* :class:`SyntheticOracle` computes a PET-threshold sigmoid with optional
  per-augmentation probability biases and seeded noise, which makes
  desk-scale coefficient-learning experiments possible without a network.

All bindings are immutable and safe to call concurrently.
"""

import os
import shlex
import subprocess
import tempfile
import threading
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

from .errors import ContractViolation, ParameterError, PredictorFailure
from .nifti import read_nifti, write_nifti
from .volume import Volume3D, geometry_match, require_geometry_match


def validate_prediction(prob, reference) -> None:
    """Raise :class:`ContractViolation` unless ``prob`` is a well-formed
    probability map on the same grid as ``reference``."""
    if not geometry_match(prob, reference):
        raise ContractViolation(
            f"prediction geometry {prob.dims}/{prob.spacing} does not match "
            f"reference {reference.dims}/{reference.spacing}"
        )
    data = np.asarray(prob.data)
    if not np.isfinite(data).all():
        raise ContractViolation("prediction contains non-finite values")
    lo, hi = float(data.min()), float(data.max())
    if lo < 0.0 or hi > 1.0:
        raise ContractViolation(f"prediction values outside [0, 1]: min {lo}, max {hi}")


@dataclass(frozen=True)
class OracleParams:
    """Knobs of the synthetic oracle.

    ``per_augmentation_bias`` maps augmentation index to an additive
    probability bias, the controllable lever that makes some augmentations
    genuinely better than others. Noise is seeded by (seed, case_id,
    aug_index) so every call is reproducible.
    """

    pet_threshold: float = 2.0
    softness: float = 0.25
    per_augmentation_bias: dict[int, float] = field(default_factory=dict)
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.softness <= 0:
            raise ParameterError(f"softness must be > 0, got {self.softness}")
        if self.noise_sigma < 0:
            raise ParameterError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        bias = {int(k): float(v) for k, v in self.per_augmentation_bias.items()}
        object.__setattr__(self, "per_augmentation_bias", bias)

    def to_json(self) -> dict:
        return {
            "pet_threshold": self.pet_threshold,
            "softness": self.softness,
            "per_augmentation_bias": {str(k): v for k, v in self.per_augmentation_bias.items()},
            "noise_sigma": self.noise_sigma,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class SyntheticOracle:
    """Voxelwise PET-threshold oracle: sigmoid((pet - threshold)/softness)
    plus per-augmentation bias and seeded noise, clipped to [0, 1]."""

    params: OracleParams = field(default_factory=OracleParams)

    def predict(self, ct: Volume3D, pet: Volume3D, case_id: str, aug_index: int) -> Volume3D:
        p = self.params
        probs = expit((pet.data.astype(np.float64) - p.pet_threshold) / p.softness)
        probs = probs + p.per_augmentation_bias.get(int(aug_index), 0.0)
        if p.noise_sigma > 0:
            rng = np.random.default_rng((p.seed, zlib.crc32(case_id.encode()), int(aug_index)))
            probs = probs + rng.standard_normal(pet.dims) * p.noise_sigma
        return pet.with_data(np.clip(probs, 0.0, 1.0).astype(np.float32))


@dataclass(frozen=True)
class PrecomputedPredictor:
    """Serve probability maps computed offline, one file per augmentation."""

    directory: str

    def predict(self, ct: Volume3D, pet: Volume3D, case_id: str, aug_index: int) -> Volume3D:
        base = Path(self.directory) / case_id / f"aug_{int(aug_index)}"
        for suffix in (".nii", ".nii.gz"):
            path = base.with_name(base.name + suffix)
            if path.exists():
                return read_nifti(path)
        raise FileNotFoundError(f"no precomputed prediction at {base}.nii[.gz]")


class SubprocessPredictor:
    """Run an external command per prediction through temp NIfTI files.

    The template must contain ``{ct}``, ``{pet}`` and ``{out}`` placeholders;
    exit code 0 and a readable ``{out}`` volume mean success. Concurrent
    invocations are bounded by ``max_workers`` (defaults to the processor
    count) and each uses its own temp directory, removed on the way out.
    """

    def __init__(self, command_template: str, timeout_seconds: float = 600.0,
                 max_workers: int | None = None):
        for placeholder in ("{ct}", "{pet}", "{out}"):
            if placeholder not in command_template:
                raise ParameterError(f"command template is missing {placeholder}")
        if timeout_seconds <= 0:
            raise ParameterError(f"timeout_seconds must be > 0, got {timeout_seconds}")
        self.command_template = command_template
        self.timeout_seconds = float(timeout_seconds)
        self.max_workers = int(max_workers) if max_workers else (os.cpu_count() or 1)
        self._slots = threading.Semaphore(self.max_workers)

    def predict(self, ct: Volume3D, pet: Volume3D, case_id: str, aug_index: int) -> Volume3D:
        with self._slots, tempfile.TemporaryDirectory(prefix="petct-tta-") as tmp:
            ct_path = os.path.join(tmp, "ct.nii")
            pet_path = os.path.join(tmp, "pet.nii")
            out_path = os.path.join(tmp, "out.nii")
            write_nifti(ct, ct_path)
            write_nifti(pet, pet_path)
            argv = [
                token.format(ct=ct_path, pet=pet_path, out=out_path)
                for token in shlex.split(self.command_template)
            ]
            try:
                proc = subprocess.run(
                    argv, capture_output=True, text=True, timeout=self.timeout_seconds
                )
            except subprocess.TimeoutExpired as exc:
                raise PredictorFailure(
                    f"predictor timed out after {self.timeout_seconds}s: {argv}",
                    diagnostics=str(exc.stderr or ""),
                ) from exc
            except OSError as exc:
                raise PredictorFailure(f"predictor could not start: {argv}: {exc}") from exc
            if proc.returncode != 0:
                raise PredictorFailure(
                    f"predictor exited with status {proc.returncode}: {argv}",
                    diagnostics=proc.stderr,
                )
            if not os.path.exists(out_path):
                raise PredictorFailure(
                    f"predictor exited 0 but wrote no output file: {argv}",
                    diagnostics=proc.stderr,
                )
            return read_nifti(out_path)


PredictorBinding = SyntheticOracle | PrecomputedPredictor | SubprocessPredictor


def predict(binding, ct: Volume3D, pet: Volume3D, case_id: str, aug_index: int) -> Volume3D:
    """Run ``binding`` on a CT/PET pair and validate the returned map."""
    require_geometry_match(ct, pet, "ct and pet")
    prob = binding.predict(ct, pet, case_id, int(aug_index))
    validate_prediction(prob, ct)
    return prob


def binding_to_json(binding) -> dict:
    if isinstance(binding, SyntheticOracle):
        return {"mode": "synthetic", **binding.params.to_json()}
    if isinstance(binding, PrecomputedPredictor):
        return {"mode": "precomputed", "directory": binding.directory}
    if isinstance(binding, SubprocessPredictor):
        return {
            "mode": "subprocess",
            "command": binding.command_template,
            "timeout_seconds": binding.timeout_seconds,
            "max_workers": binding.max_workers,
        }
    raise ParameterError(f"unknown predictor binding {binding!r}")


def binding_from_json(doc: dict):
    doc = dict(doc)
    mode = doc.pop("mode", None)
    if mode == "synthetic":
        return SyntheticOracle(OracleParams(**doc))
    if mode == "precomputed":
        return PrecomputedPredictor(**doc)
    if mode == "subprocess":
        doc.setdefault("timeout_seconds", 600.0)
        return SubprocessPredictor(
            doc["command"], doc["timeout_seconds"], doc.get("max_workers")
        )
    raise ParameterError(f"predictor mode must be synthetic, precomputed or subprocess, got {mode!r}")
