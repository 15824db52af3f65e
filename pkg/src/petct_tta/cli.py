"""Command-line surface: preprocess, tta, optimize, evaluate, split, synth.

Exit codes: 0 success, 1 usage/configuration error, 2 data error,
3 predictor failure. All commands are deterministic given config + seed.
"""

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import coeffopt, fusion, metrics, phantom
from .config import ConfigError, PipelineConfig, SplitSpec, split_cases
from .errors import ParameterError, PredictorError
from .nifti import read_nifti, write_nifti
from .preprocess import BBox, crop, crop_mask, foreground_bbox, scale_intensity, uncrop_mask, uncrop_volume
from .volume import mask_from_volume

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_PREDICTOR = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad arguments; this tool reserves 2 for data errors
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _find_volume(case_dir: Path, stem: str) -> Path | None:
    for suffix in (".nii.gz", ".nii"):
        path = case_dir / f"{stem}{suffix}"
        if path.exists():
            return path
    return None


def _case_dirs(root: Path) -> list[Path]:
    if not root.is_dir():
        raise FileNotFoundError(f"{root} is not a directory")
    return sorted(p for p in root.iterdir() if p.is_dir())


def _map_jobs(fn, items, jobs):
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


# ---------------------------------------------------------------------------
# commands

def cmd_preprocess(config: PipelineConfig, in_dir, out_dir, jobs: int = 1) -> int:
    """Scale CT/PET, crop to the CT foreground, write volumes + bbox.json."""
    in_dir, out_dir = Path(in_dir), Path(out_dir)
    cases = _case_dirs(in_dir)
    if not cases:
        raise UsageError(f"no case directories under {in_dir}")
    out_dir.mkdir(parents=True, exist_ok=True)

    def one(case_dir: Path):
        ct_path = _find_volume(case_dir, "ct")
        pet_path = _find_volume(case_dir, "pet")
        if ct_path is None or pet_path is None:
            return f"{case_dir.name}: missing ct or pet volume"
        try:
            ct = scale_intensity(read_nifti(ct_path), config.ct_window)
            pet = scale_intensity(read_nifti(pet_path), config.pet_window)
            box = foreground_bbox(ct, config.effective_crop_threshold, config.crop_margin)
            dest = out_dir / case_dir.name
            dest.mkdir(exist_ok=True)
            write_nifti(crop(ct, box), dest / "ct.nii.gz")
            write_nifti(crop(pet, box), dest / "pet.nii.gz")
            seg_path = _find_volume(case_dir, "seg")
            if seg_path is not None:
                seg = mask_from_volume(read_nifti(seg_path))
                write_nifti(crop_mask(seg, box).to_volume(), dest / "seg.nii.gz")
            doc = box.to_json()
            doc["full_dims"] = list(ct.dims)
            (dest / "bbox.json").write_text(json.dumps(doc, indent=2) + "\n")
            return None
        except (ParameterError, OSError, ValueError) as exc:
            return f"{case_dir.name}: {exc}"

    failures = [msg for msg in _map_jobs(one, cases, jobs) if msg]
    for msg in failures:
        print(f"error: {msg}", file=sys.stderr)
    print(f"preprocessed {len(cases) - len(failures)}/{len(cases)} cases into {out_dir}")
    return EXIT_DATA if failures else EXIT_OK


def _soft_output_path(out_path: Path) -> Path:
    name = out_path.name
    for suffix in (".nii.gz", ".nii"):
        if name.endswith(suffix):
            return out_path.with_name(name[: -len(suffix)] + "_soft" + suffix)
    return out_path.with_name(name + "_soft.nii.gz")


def cmd_tta(config: PipelineConfig, case_dir, out_path, jobs: int = 1) -> int:
    """Fused TTA prediction for one preprocessed case."""
    if config.coefficients is None:
        raise UsageError("config has no coefficients; run `optimize` first or add them")
    case_dir, out_path = Path(case_dir), Path(out_path)
    ct_path = _find_volume(case_dir, "ct")
    pet_path = _find_volume(case_dir, "pet")
    if ct_path is None or pet_path is None:
        raise FileNotFoundError(f"{case_dir}: missing ct or pet volume")
    ct = read_nifti(ct_path)
    pet = read_nifti(pet_path)

    soft = fusion.tta_predict_soft(config.predictor, ct, pet, config.augmentations,
                                   config.coefficients, case_id=case_dir.name, jobs=jobs)
    mask = fusion.binarize(soft, config.theta)

    bbox_path = case_dir / "bbox.json"
    if bbox_path.exists():
        doc = json.loads(bbox_path.read_text())
        box = BBox.from_json(doc)
        full_dims = tuple(doc["full_dims"])
        mask = uncrop_mask(mask, box, full_dims)
        soft = uncrop_volume(soft, box, full_dims)

    out_path.parent.mkdir(parents=True, exist_ok=True)
    write_nifti(mask.to_volume(), out_path)
    write_nifti(soft, _soft_output_path(out_path))
    print(f"wrote {out_path} (+ soft map), foreground voxels: {int(mask.data.sum())}")
    return EXIT_OK


def _load_validation_cases(val_dir: Path) -> list[coeffopt.ValidationCase]:
    cases = []
    for case_dir in _case_dirs(val_dir):
        ct_path = _find_volume(case_dir, "ct")
        pet_path = _find_volume(case_dir, "pet")
        seg_path = _find_volume(case_dir, "seg")
        if ct_path is None or pet_path is None or seg_path is None:
            continue
        cases.append(coeffopt.ValidationCase(
            case_id=case_dir.name,
            ct=read_nifti(ct_path),
            pet=read_nifti(pet_path),
            gt=mask_from_volume(read_nifti(seg_path)),
        ))
    return cases


def cmd_optimize(config: PipelineConfig, val_dir, out_path, method: str = "ascent",
                 step: float = 0.1, step0: float = 0.1, shrink: float = 0.5,
                 max_rounds: int = 32, floor: float = 0.01, jobs: int = 1) -> int:
    """Learn coefficients on labeled validation cases; write them + a report."""
    val_dir, out_path = Path(val_dir), Path(out_path)
    cases = _load_validation_cases(val_dir)
    if not cases:
        raise UsageError(f"no cases with ground truth (ct/pet/seg) under {val_dir}")

    augs = config.augmentations
    cache = coeffopt.AlignedPredictions(config.predictor, cases, augs,
                                        theta=config.theta, jobs=jobs)
    table = coeffopt.measure_improvements(config.predictor, cases, augs, cache=cache)
    report: dict = {
        "method": method,
        "case_count": len(cases),
        "improvements": table.to_json(),
    }

    if method == "heuristic":
        weights = coeffopt.heuristic_weights(table, floor=floor)
        report["objective"] = cache.mean_dice(weights)
    elif method == "grid":
        result = coeffopt.grid_search_full(config.predictor, cases, augs,
                                           step=step, cache=cache)
        weights = result.coefficients
        report["grid"] = result.to_json()
        report["objective"] = result.objective
    elif method == "ascent":
        w0 = coeffopt.heuristic_weights(table, floor=floor)
        result = coeffopt.coordinate_ascent_full(config.predictor, cases, augs, w0,
                                                 step0=step0, shrink=shrink,
                                                 max_rounds=max_rounds, cache=cache)
        weights = result.coefficients
        report["ascent"] = result.to_json()
        report["objective"] = result.objective
    else:
        raise UsageError(f"unknown method {method!r}; expected heuristic, grid or ascent")

    report["coefficients"] = weights.to_json()
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(weights.dumps() + "\n")
    report_path = out_path.with_name(out_path.stem + "_report.json")
    report_path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    print(f"method={method} objective={report['objective']:.4f} -> {out_path}")
    return EXIT_OK


def _mask_files(root: Path) -> dict[str, Path]:
    if not root.is_dir():
        raise FileNotFoundError(f"{root} is not a directory")
    out = {}
    for path in sorted(root.iterdir()):
        name = path.name
        for suffix in (".nii.gz", ".nii"):
            if name.endswith(suffix):
                stem = name[: -len(suffix)]
                # soft maps written by `tta` live next to the masks; skip them
                if not stem.endswith("_soft"):
                    out[stem] = path
                break
    return out


def cmd_evaluate(pred_dir, gt_dir, report_path, connectivity: int = 26,
                 jobs: int = 1) -> int:
    """Score matching mask files and write the report as JSON + CSV."""
    pred_files = _mask_files(Path(pred_dir))
    gt_files = _mask_files(Path(gt_dir))
    shared = sorted(set(pred_files) & set(gt_files))
    unpaired = sorted(set(pred_files) ^ set(gt_files))
    if not shared:
        raise UsageError(f"no matching case filenames between {pred_dir} and {gt_dir}")

    def one(case_id):
        pred = mask_from_volume(read_nifti(pred_files[case_id]))
        gt = mask_from_volume(read_nifti(gt_files[case_id]))
        return case_id, pred, gt

    pairs = _map_jobs(one, shared, jobs)
    report = metrics.evaluate(pairs, connectivity=connectivity)

    doc = report.to_json()
    doc["unpaired"] = unpaired
    report_path = Path(report_path)
    report_path.parent.mkdir(parents=True, exist_ok=True)
    report_path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    csv_path = report_path.with_suffix(".csv")
    csv_path.write_text(report.to_csv())
    print(f"mean dice {report.mean_dice:.4f} over {report.case_count} cases -> {report_path}")
    if unpaired:
        for case_id in unpaired:
            print(f"error: unpaired case {case_id}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def cmd_split(cases_path, out_dir, spec: SplitSpec) -> int:
    """Partition case ids into train/eval/test lists."""
    cases_path, out_dir = Path(cases_path), Path(out_dir)
    if cases_path.is_dir():
        ids = [p.name for p in cases_path.iterdir() if p.is_dir()]
    else:
        ids = [line.strip() for line in cases_path.read_text().splitlines() if line.strip()]
    parts = split_cases(ids, spec)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, members in parts.items():
        (out_dir / f"{name}.txt").write_text("".join(f"{m}\n" for m in members))
    sizes = {name: len(members) for name, members in parts.items()}
    print(f"split {len(ids)} cases -> {sizes}")
    return EXIT_OK


def cmd_synth(out_dir, n_cases: int, dims, n_lesions_range, spacing, seed: int) -> int:
    """Generate a deterministic phantom dataset."""
    ids = phantom.generate_dataset(out_dir, n_cases, dims=dims, spacing=spacing,
                                   n_lesions_range=n_lesions_range, seed=seed)
    print(f"generated {len(ids)} phantom cases in {out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing

def _parse_triple(text, cast):
    parts = [cast(p) for p in str(text).split(",")]
    if len(parts) == 1:
        return (parts[0],) * 3
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected 1 or 3 comma-separated values, got {text!r}")
    return tuple(parts)


def _parse_pair(text, cast):
    parts = [cast(p) for p in str(text).split(",")]
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected 2 comma-separated values, got {text!r}")
    return tuple(parts)


def build_parser() -> argparse.ArgumentParser:
    # global flags live on a SUPPRESS-default parent so they are accepted both
    # before and after the subcommand without clobbering each other
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="pipeline config JSON")
    common.add_argument("--jobs", type=int, default=argparse.SUPPRESS,
                        help="parallel workers (default 1)")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                        help="override the config seed")

    parser = _Parser(prog="petct-tta", parents=[common],
                     description="Weighted TTA ensembling for CT/PET lesion segmentation")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("preprocess", parents=[common],
                       help="scale + crop raw case directories")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", dest="out_dir", required=True)

    p = sub.add_parser("tta", parents=[common], help="fused TTA prediction for one case")
    p.add_argument("--case", dest="case_dir", required=True)
    p.add_argument("--out", dest="out_path", required=True)

    p = sub.add_parser("optimize", parents=[common], help="learn contribution coefficients")
    p.add_argument("--val", dest="val_dir", required=True)
    p.add_argument("--out", dest="out_path", required=True)
    p.add_argument("--method", choices=("heuristic", "grid", "ascent"), default="ascent")
    p.add_argument("--step", type=float, default=0.1, help="grid lattice step")
    p.add_argument("--step0", type=float, default=0.1, help="ascent initial step")
    p.add_argument("--shrink", type=float, default=0.5, help="ascent step shrink factor")
    p.add_argument("--max-rounds", type=int, default=32)
    p.add_argument("--floor", type=float, default=0.01, help="heuristic weight floor")

    p = sub.add_parser("evaluate", parents=[common], help="score prediction masks against ground truth")
    p.add_argument("--pred", dest="pred_dir", required=True)
    p.add_argument("--gt", dest="gt_dir", required=True)
    p.add_argument("--report", dest="report_path", required=True)
    p.add_argument("--connectivity", type=int, choices=(6, 18, 26), default=None)

    p = sub.add_parser("split", parents=[common], help="partition case ids into train/eval/test")
    p.add_argument("--cases", dest="cases_path", required=True,
                   help="text file of case ids, or a dataset directory")
    p.add_argument("--out", dest="out_dir", required=True)
    p.add_argument("--fractions", type=lambda s: _parse_triple(s, float),
                   default=(0.78, 0.12, 0.10))

    p = sub.add_parser("synth", parents=[common], help="generate a phantom dataset")
    p.add_argument("--out", dest="out_dir", required=True)
    p.add_argument("--cases", dest="n_cases", type=int, default=10)
    p.add_argument("--dims", type=lambda s: _parse_triple(s, int), default=(64, 64, 64))
    p.add_argument("--lesions", type=lambda s: _parse_pair(s, int), default=(1, 3))
    p.add_argument("--spacing", type=lambda s: _parse_triple(s, float), default=(2.0, 2.0, 2.0))

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    config_path = getattr(args, "config", None)
    jobs = getattr(args, "jobs", None) or 1
    seed = getattr(args, "seed", None)
    try:
        config = PipelineConfig.load(config_path) if config_path else PipelineConfig()
        if seed is not None:
            config = PipelineConfig.from_json({**config.to_json(), "seed": seed})

        if args.command == "preprocess":
            return cmd_preprocess(config, args.in_dir, args.out_dir, jobs=jobs)
        if args.command == "tta":
            return cmd_tta(config, args.case_dir, args.out_path, jobs=jobs)
        if args.command == "optimize":
            return cmd_optimize(config, args.val_dir, args.out_path, method=args.method,
                                step=args.step, step0=args.step0, shrink=args.shrink,
                                max_rounds=args.max_rounds, floor=args.floor,
                                jobs=jobs)
        if args.command == "evaluate":
            connectivity = args.connectivity or config.connectivity
            return cmd_evaluate(args.pred_dir, args.gt_dir, args.report_path,
                                connectivity=connectivity, jobs=jobs)
        if args.command == "split":
            return cmd_split(args.cases_path, args.out_dir,
                             SplitSpec(fractions=args.fractions, seed=config.seed))
        if args.command == "synth":
            return cmd_synth(args.out_dir, args.n_cases, args.dims, args.lesions,
                             args.spacing, config.seed)
        raise UsageError(f"unknown command {args.command!r}")
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PredictorError as exc:
        print(f"predictor error: {exc}", file=sys.stderr)
        return EXIT_PREDICTOR
    except (ParameterError, OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
