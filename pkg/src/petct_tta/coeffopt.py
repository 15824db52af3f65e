"""Learning the contribution coefficients from validation cases.

The workflow measures how much each augmentation alone improves mean Dice
over the identity baseline, then turns those improvements into weights three
ways:

* :func:`heuristic_weights` — closed-form monotone map from Dice deltas
  (larger improvement, larger coefficient).
* :func:`grid_search` — exhaustive argmax over a lattice on the scaled
  simplex; slow but a verifiable global optimum at its resolution.
* :func:`coordinate_ascent` — pairwise weight transfers with a shrinking
  step, accepted only on strict improvement.

Per-(case, augmentation) predictions are computed once and cached in
:class:`AlignedPredictions`; every candidate evaluation afterwards is a cheap
fused-threshold-count pass, so the predictor runs exactly m times per case no
matter how many weight vectors are tried.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import fusion, kernels
from .augment import AugmentationSet
from .errors import ParameterError
from .fusion import CoefficientVector
from .volume import MaskVolume, Volume3D, require_geometry_match

MIN_STEP = 1e-3
MAX_LATTICE = 10**6


@dataclass(frozen=True)
class ValidationCase:
    """One labeled case: co-registered CT, PET and ground-truth mask."""

    case_id: str
    ct: Volume3D
    pet: Volume3D
    gt: MaskVolume

    def __post_init__(self):
        require_geometry_match(self.ct, self.pet, f"{self.case_id}: ct and pet")
        require_geometry_match(self.ct, self.gt, f"{self.case_id}: ct and gt")


@dataclass(frozen=True)
class ImprovementTable:
    """Mean single-augmentation Dice deltas against the identity baseline."""

    baseline_dice: float
    deltas: tuple[float, ...]

    def __post_init__(self):
        deltas = tuple(float(d) for d in self.deltas)
        if not deltas:
            raise ParameterError("improvement table must cover at least one augmentation")
        if deltas[0] != 0.0:
            raise ParameterError(f"identity delta must be 0, got {deltas[0]}")
        if not 0.0 <= self.baseline_dice <= 1.0:
            raise ParameterError(f"baseline dice must be in [0, 1], got {self.baseline_dice}")
        object.__setattr__(self, "deltas", deltas)

    def __len__(self) -> int:
        return len(self.deltas)

    def to_json(self) -> dict:
        return {"baseline_dice": self.baseline_dice, "deltas": list(self.deltas)}


class AlignedPredictions:
    """Cache of inverse-transformed prediction maps, stacked per case.

    Populating the cache is the only phase that touches the predictor; the
    objective is then mean per-case Dice of the binarized weighted average,
    evaluated directly from the stacks.
    """

    def __init__(self, binding, cases, augs: AugmentationSet, theta: float = 0.5,
                 jobs: int = 1):
        cases = list(cases)
        if not cases:
            raise ParameterError("need at least one validation case")
        self.theta = float(theta)
        self.m = len(augs)
        self.case_ids = [c.case_id for c in cases]
        self._stacks = []
        self._gts = []
        self._gsums = []
        for case in cases:
            preds = fusion.tta_collect(binding, case.ct, case.pet, augs,
                                       case_id=case.case_id, jobs=jobs)
            stack_t = np.ascontiguousarray(
                np.stack([vol.data.ravel() for vol in preds.maps], axis=1),
                dtype=np.float32,
            )
            gt = np.ascontiguousarray(case.gt.data.ravel(), dtype=np.uint8)
            self._stacks.append(stack_t)
            self._gts.append(gt)
            self._gsums.append(int(np.count_nonzero(gt)))

    @property
    def case_count(self) -> int:
        return len(self._stacks)

    @staticmethod
    def _dice(inter: int, psum: int, gsum: int) -> float:
        if psum + gsum == 0:
            return 1.0
        return 2.0 * inter / (psum + gsum)

    def _as_normalized(self, weights) -> np.ndarray:
        if isinstance(weights, CoefficientVector):
            u = weights.normalized
        else:
            u = np.asarray(weights, dtype=np.float64)
            u = u / u.sum()
        if u.shape != (self.m,):
            raise ParameterError(f"expected {self.m} weights, got {u.shape}")
        return u

    def mean_dice(self, weights) -> float:
        """Mean per-case Dice of the fused, binarized prediction."""
        u = self._as_normalized(weights)
        total = 0.0
        for stack_t, gt, gsum in zip(self._stacks, self._gts, self._gsums):
            inter, psum = kernels.fused_counts(stack_t, u, self.theta, gt)
            total += self._dice(inter, psum, gsum)
        return total / self.case_count

    def mean_dice_batch(self, candidates: np.ndarray) -> np.ndarray:
        """Vectorized :meth:`mean_dice` over rows of normalized weights."""
        cand = np.ascontiguousarray(candidates, dtype=np.float64)
        totals = np.zeros(cand.shape[0], dtype=np.float64)
        for stack_t, gt, gsum in zip(self._stacks, self._gts, self._gsums):
            inter, psum = kernels.batch_fused_counts(stack_t, cand, self.theta, gt)
            denom = psum + gsum
            case_dice = np.where(denom > 0, 2.0 * inter / np.maximum(denom, 1), 1.0)
            totals += case_dice
        return totals / self.case_count

    def single_augmentation_dice(self) -> np.ndarray:
        """Mean Dice of each augmentation used alone (one-hot weights)."""
        means = np.zeros(self.m, dtype=np.float64)
        for stack_t, gt, gsum in zip(self._stacks, self._gts, self._gsums):
            pred = stack_t >= self.theta
            psums = np.count_nonzero(pred, axis=0)
            inters = np.count_nonzero(pred & (gt != 0)[:, None], axis=0)
            for i in range(self.m):
                means[i] += self._dice(int(inters[i]), int(psums[i]), gsum)
        return means / self.case_count


def measure_improvements(binding, cases, augs: AugmentationSet, theta: float = 0.5,
                         cache: AlignedPredictions | None = None,
                         jobs: int = 1) -> ImprovementTable:
    """Per-augmentation mean Dice deltas relative to the identity baseline."""
    if cache is None:
        cache = AlignedPredictions(binding, cases, augs, theta=theta, jobs=jobs)
    per_aug = cache.single_augmentation_dice()
    baseline = float(per_aug[0])
    deltas = per_aug - per_aug[0]
    deltas[0] = 0.0
    return ImprovementTable(baseline_dice=baseline, deltas=tuple(float(d) for d in deltas))


def heuristic_weights(table: ImprovementTable, n: float | None = None,
                      floor: float = 0.01) -> CoefficientVector:
    """Closed-form weights, strictly increasing in the Dice deltas.

    raw_i = max(delta_i - min(delta), 0) + floor, rescaled so the weights sum
    to n. The floor keeps every augmentation strictly positive so none is
    silently dropped.
    """
    if floor <= 0:
        raise ParameterError(f"floor must be > 0, got {floor}")
    deltas = np.asarray(table.deltas, dtype=np.float64)
    n = float(len(deltas) if n is None else n)
    raw = np.maximum(deltas - deltas.min(), 0.0) + floor
    omegas = n * raw / raw.sum()
    return CoefficientVector(tuple(omegas), n)


def _lattice_size(total: int, parts: int) -> int:
    return math.comb(total + parts - 1, parts - 1)


def _compositions(total: int, parts: int):
    """All nonnegative integer m-tuples summing to total, lexicographic."""
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


@dataclass(frozen=True)
class GridSearchResult:
    coefficients: CoefficientVector
    objective: float
    evaluations: tuple[tuple[tuple[float, ...], float], ...]

    def to_json(self) -> dict:
        return {
            "coefficients": self.coefficients.to_json(),
            "objective": self.objective,
            "evaluation_count": len(self.evaluations),
        }


def grid_search_full(binding, cases, augs: AugmentationSet, n: float | None = None,
                     step: float = 0.1, theta: float = 0.5,
                     cache: AlignedPredictions | None = None, jobs: int = 1,
                     max_lattice: int = MAX_LATTICE) -> GridSearchResult:
    """Exhaustive evaluation of the weight lattice {omega = k * step * n}.

    Returns the argmax along with the full evaluation log; ties go to the
    lexicographically smallest omega. The lattice requires 1/step to be an
    integer; size is guarded for m > 4.
    """
    if cache is None:
        cache = AlignedPredictions(binding, cases, augs, theta=theta, jobs=jobs)
    m = cache.m
    n = float(m if n is None else n)
    ticks = round(1.0 / step)
    if ticks < 1 or abs(ticks * step - 1.0) > 1e-9:
        raise ParameterError(f"step must be the reciprocal of a positive integer, got {step}")
    size = _lattice_size(ticks, m)
    if m > 4 and size > max_lattice:
        raise ParameterError(
            f"lattice of {size} points exceeds the {max_lattice} bound for m={m}; "
            f"coarsen step {step}"
        )

    grid_k = np.array(list(_compositions(ticks, m)), dtype=np.float64)
    candidates = grid_k / ticks
    objectives = cache.mean_dice_batch(candidates)

    # np.argmax keeps the first of tied maxima; compositions are generated in
    # lexicographic order, so ties resolve to the smallest omega.
    best_idx = int(np.argmax(objectives))
    omegas = tuple(float(k) * step * n for k in grid_k[best_idx])
    best = CoefficientVector(omegas, n)
    log = tuple(
        (tuple(float(k) * step * n for k in row), float(obj))
        for row, obj in zip(grid_k, objectives)
    )
    return GridSearchResult(coefficients=best, objective=float(objectives[best_idx]),
                            evaluations=log)


def grid_search(binding, cases, augs: AugmentationSet, n: float | None = None,
                step: float = 0.1, theta: float = 0.5,
                cache: AlignedPredictions | None = None, jobs: int = 1) -> CoefficientVector:
    """Best lattice point by mean fused Dice (see :func:`grid_search_full`)."""
    return grid_search_full(binding, cases, augs, n=n, step=step, theta=theta,
                            cache=cache, jobs=jobs).coefficients


@dataclass(frozen=True)
class AscentMove:
    sweep: int
    source: int
    target: int
    delta: float
    objective: float

    def to_json(self) -> dict:
        return {
            "sweep": self.sweep,
            "from": self.source,
            "to": self.target,
            "delta": self.delta,
            "objective": self.objective,
        }


@dataclass(frozen=True)
class AscentResult:
    coefficients: CoefficientVector
    objective: float
    trace: tuple[AscentMove, ...]
    evaluations: int

    def to_json(self) -> dict:
        return {
            "coefficients": self.coefficients.to_json(),
            "objective": self.objective,
            "evaluations": self.evaluations,
            "trace": [move.to_json() for move in self.trace],
        }


def coordinate_ascent_full(binding, cases, augs: AugmentationSet, w0: CoefficientVector,
                           step0: float = 0.1, shrink: float = 0.5,
                           max_rounds: int = 32, theta: float = 0.5,
                           cache: AlignedPredictions | None = None,
                           jobs: int = 1) -> AscentResult:
    """Pairwise weight-transfer hill climbing on the scaled simplex.

    Each sweep tries moving delta = step * n from omega_j to omega_i for all
    ordered pairs, accepting only strict objective improvements; a sweep with
    no acceptance shrinks the step. Stops once the step falls below
    ``MIN_STEP`` or after ``max_rounds`` sweeps, so the objective trace is
    monotone non-decreasing by construction.
    """
    if not 0.0 < shrink < 1.0:
        raise ParameterError(f"shrink must be inside (0, 1), got {shrink}")
    if step0 <= 0:
        raise ParameterError(f"step0 must be > 0, got {step0}")
    if cache is None:
        cache = AlignedPredictions(binding, cases, augs, theta=theta, jobs=jobs)
    m = cache.m
    if len(w0) != m:
        raise ParameterError(f"w0 has {len(w0)} weights for {m} augmentations")

    n = w0.n
    w = np.asarray(w0.omegas, dtype=np.float64)
    best = cache.mean_dice(w / n)
    evaluations = 1
    trace = []
    step = float(step0)
    for sweep in range(max_rounds):
        if step < MIN_STEP:
            break
        accepted = False
        delta = step * n
        for target in range(m):
            for source in range(m):
                if source == target or w[source] < delta - 1e-12:
                    continue
                cand = w.copy()
                moved = min(delta, cand[source])
                cand[source] -= moved
                cand[target] += moved
                obj = cache.mean_dice(cand / n)
                evaluations += 1
                if obj > best:
                    w = cand
                    best = obj
                    accepted = True
                    trace.append(AscentMove(sweep=sweep, source=source, target=target,
                                            delta=float(moved), objective=float(obj)))
        if not accepted:
            step *= shrink
    # renormalize away accumulated float drift before constructing the result
    w = np.maximum(w, 0.0)
    w *= n / w.sum()
    return AscentResult(coefficients=CoefficientVector(tuple(w), n),
                        objective=float(best), trace=tuple(trace),
                        evaluations=evaluations)


def coordinate_ascent(binding, cases, augs: AugmentationSet, w0: CoefficientVector,
                      step0: float = 0.1, shrink: float = 0.5, max_rounds: int = 32,
                      theta: float = 0.5, cache: AlignedPredictions | None = None,
                      jobs: int = 1) -> CoefficientVector:
    """Locally optimal weights from ``w0`` (see :func:`coordinate_ascent_full`)."""
    return coordinate_ascent_full(binding, cases, augs, w0, step0=step0, shrink=shrink,
                                  max_rounds=max_rounds, theta=theta, cache=cache,
                                  jobs=jobs).coefficients


def project_to_simplex(raw, n: float) -> CoefficientVector:
    """Euclidean projection onto {omega >= 0, sum(omega) = n}.

    Sort-based algorithm; idempotent and order-preserving.
    """
    y = np.asarray(raw, dtype=np.float64)
    if y.ndim != 1 or y.size == 0:
        raise ParameterError("raw weights must be a nonempty 1D sequence")
    n = float(n)
    if n <= 0:
        raise ParameterError(f"normalization constant must be > 0, got {n}")
    u = np.sort(y)[::-1]
    cumulative = np.cumsum(u) - n
    ranks = np.arange(1, y.size + 1)
    support = np.nonzero(u - cumulative / ranks > 0)[0]
    rho = support[-1]
    tau = cumulative[rho] / (rho + 1)
    omegas = np.maximum(y - tau, 0.0)
    return CoefficientVector(tuple(omegas), n)
