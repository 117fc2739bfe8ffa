"""
cls2det_cli.py - Command-line front door: dataset generation, teacher / student training, evaluation,
error analysis and gradient checking
"""

import argparse
import json
import sys
from pathlib import Path
from typing import Dict, List, Optional

from cls2det.distill.config import DistillConfig
from cls2det.distill.kd_cls import HEAD_KINDS
from cls2det.errors import CheckpointError, ConfigError, DatasetFormatError, NumericalError, ShapeError
from cls2det.eval.coco_metrics import EvalConfig
from cls2det.eval.error_analysis import SWEEP_THRESHOLDS, error_decomposition, error_sweep
from cls2det.eval.inference import evaluate_model
from cls2det.eval.report import build_eval_report, dump_predictions, write_error_table, write_json
from cls2det.models.detection_loss import TEACHER_LOSSES
from cls2det.synthdata.crops import derive_classification_crops
from cls2det.synthdata.dataset_io import (
    META_FILE, TRAIN_CROPS_FILE, TRAIN_FILE, VAL_CROPS_FILE, VAL_FILE,
    build_detection_dataset, load_meta, read_classification_dataset, read_detection_dataset,
)
from cls2det.synthdata.scenes import SceneSpec
from cls2det.train.student_training import TrainRunConfig, load_student, train_student
from cls2det.train.teacher_training import TeacherRunConfig, load_teacher, train_teacher
from cls2det.utils.checkpoint import check_dataset_hash, load_checkpoint
from cls2det.utils.config_file import (
    build_dataclass, field_names, load_run_config, merge_layers, write_resolved_config,
)
from cls2det.utils.logger import get_logger, set_verbosity, setup_logger

setup_logger()
logger = get_logger()

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_IO = 3

TEACHER_CHECKPOINT = "teacher.kdck"
STUDENT_CHECKPOINT = "student.kdck"
EVAL_REPORT = "eval_report.json"
ERROR_REPORT = "error_analysis.json"
ERROR_TABLE = "error_table.csv"


def on_off(text: str) -> bool:
    value = text.strip().lower()
    if value in ("on", "true", "1", "yes"):
        return True
    if value in ("off", "false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected on/off, got {text!r}")


def pool_size(text: str):
    """'4' -> (4, 4); '4x2' -> (4, 2) as (height, width)."""
    parts = text.lower().split("x")
    try:
        values = [int(p) for p in parts]
    except ValueError:
        raise argparse.ArgumentTypeError(f"pool size must look like 4 or 4x4, got {text!r}")
    if len(values) == 1:
        return values[0], values[0]
    if len(values) == 2:
        return values[0], values[1]
    raise argparse.ArgumentTypeError(f"pool size must look like 4 or 4x4, got {text!r}")


def _add_common(p: argparse.ArgumentParser):
    p.add_argument('--verbose', '-v', action='store_true', help='Enable verbose (DEBUG) logging output')
    p.add_argument('--quiet', '-q', action='store_true', help='Enable quiet mode (WARNING and ERROR only)')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='python -m cls2det.cls2det_cli',
        description='Distill an image classifier into a single-stage object detector on synthetic scenes',
        epilog="""
Examples:
  # Generate 2000 train / 200 val scenes and their object crops:
  python -m cls2det.cls2det_cli gen-data --out data

  # Train a categorical teacher on the crops:
  python -m cls2det.cls2det_cli train-teacher --data data --out runs/teacher

  # Student with both distillation losses:
  python -m cls2det.cls2det_cli train-student --data data --teacher runs/teacher/teacher.kdck \\
      --kd-cls on --kd-loc on --out runs/kd

  # Teacher-free pixel-level localization term only:
  python -m cls2det.cls2det_cli train-student --data data --kd-loc0 on --out runs/kd0

  # Evaluate and sweep the error analysis:
  python -m cls2det.cls2det_cli eval --model runs/kd/student.kdck --data data --out runs/kd/eval
  python -m cls2det.cls2det_cli error-analysis --model runs/kd/student.kdck --data data --out runs/kd/errors

  # Gradient checks (all, or one):
  python -m cls2det.cls2det_cli gradcheck --op kd_loc_pixel_loss
""",
        formatter_class=argparse.RawDescriptionHelpFormatter
    )
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('gen-data', help='Generate the synthetic detection dataset and its classification crops')
    p.add_argument('--seed', type=int, default=0, help='Dataset seed (default: 0)')
    p.add_argument('--num-train', type=int, default=2000, help='Training scenes (default: 2000)')
    p.add_argument('--num-val', type=int, default=200, help='Validation scenes (default: 200)')
    p.add_argument('--image-size', type=int, default=64, help='Scene side length in pixels (default: 64)')
    p.add_argument('--classes', type=int, default=6, help='Number of object classes, 2..12 (default: 6)')
    p.add_argument('--crop-size', type=int, default=32, help='Side of the derived classification crops (default: 32)')
    p.add_argument('--parallel', type=int, default=None, help='Scene-generation workers (default: KD_THREADS or 1)')
    p.add_argument('--out', type=str, required=True, help='Output directory')
    _add_common(p)

    p = sub.add_parser('train-teacher', help='Train the classification teacher on object crops')
    p.add_argument('--data', type=str, required=True, help='Dataset directory written by gen-data')
    p.add_argument('--out', type=str, required=True, help='Run directory (checkpoint, metrics, config)')
    p.add_argument('--config', type=str, default=None, help='JSON run config (keys of TeacherRunConfig)')
    p.add_argument('--loss', dest='loss_kind', choices=TEACHER_LOSSES, default=None,
                   help='Teacher loss (default: categorical)')
    p.add_argument('--epochs', type=int, default=None)
    p.add_argument('--batch-size', dest='batch_size', type=int, default=None)
    p.add_argument('--lr', type=float, default=None)
    p.add_argument('--momentum', type=float, default=None)
    p.add_argument('--seed', type=int, default=None)
    p.add_argument('--input-size', dest='input_size', type=int, default=None, help='Teacher input side (default: 32)')
    p.add_argument('--flip', type=on_off, default=None, help='Horizontal-flip augmentation on/off (default: on)')
    _add_common(p)

    p = sub.add_parser('train-student', help='Train the student detector, optionally with distillation')
    p.add_argument('--data', type=str, required=True, help='Dataset directory written by gen-data')
    p.add_argument('--out', type=str, required=True, help='Run directory (checkpoint, metrics, config)')
    p.add_argument('--config', type=str, default=None, help='JSON run config (TrainRunConfig and DistillConfig keys)')
    p.add_argument('--teacher', dest='teacher_path', type=str, default=None, help='Teacher checkpoint')
    p.add_argument('--head', dest='head_kind', choices=HEAD_KINDS, default=None, help='Detection head (default: categorical)')
    p.add_argument('--kd-cls', dest='kd_cls', type=on_off, default=None, help='Classification distillation on/off')
    p.add_argument('--kd-loc', dest='kd_loc', type=on_off, default=None, help='Localization distillation on/off')
    p.add_argument('--kd-loc0', dest='kd_loc0', type=on_off, default=None,
                   help='Teacher-free pixel-level localization term on/off')
    p.add_argument('--lambda-kc', dest='lambda_kc', type=float, default=None, help='kd_cls weight (default: 0.4)')
    p.add_argument('--lambda-kl', dest='lambda_kl', type=float, default=None, help='kd_loc weight (default: 1.0)')
    p.add_argument('--temperature', type=float, default=None, help='Distillation temperature (default: 2)')
    p.add_argument('--sampling-size', dest='sampling_size', type=int, default=None, help='Crop grid side (default: 32)')
    p.add_argument('--pool-size', dest='pool_size', type=pool_size, default=None, help='Pooled grid, e.g. 4 or 4x4')
    p.add_argument('--layers', dest='layer_set', type=str, default=None, help='Distilled layers (default: l0,l1)')
    p.add_argument('--epochs', type=int, default=None)
    p.add_argument('--batch-size', dest='batch_size', type=int, default=None)
    p.add_argument('--lr', type=float, default=None)
    p.add_argument('--momentum', type=float, default=None)
    p.add_argument('--seed', type=int, default=None)
    p.add_argument('--flip', type=on_off, default=None, help='Horizontal-flip augmentation on/off (default: on)')
    _add_common(p)

    for name, helptext in (('eval', 'Evaluate a student checkpoint (COCO-style metrics)'),
                           ('error-analysis', 'Sweep the detection-error decomposition over IoU 0.5..0.9')):
        p = sub.add_parser(name, help=helptext)
        p.add_argument('--model', type=str, required=True, help='Student checkpoint')
        p.add_argument('--data', type=str, required=True, help='Dataset directory written by gen-data')
        p.add_argument('--out', type=str, required=True, help='Report directory')
        p.add_argument('--split', choices=('train', 'val'), default='val', help='Split to evaluate (default: val)')
        p.add_argument('--score-threshold', dest='score_threshold', type=float, default=0.05)
        p.add_argument('--max-detections', dest='max_detections', type=int, default=100)
        if name == 'eval':
            p.add_argument('--dump-predictions', action='store_true', help='Also write predictions.jsonl')
        _add_common(p)

    p = sub.add_parser('gradcheck', help='Finite-difference check of every differentiable operation')
    p.add_argument('--seed', type=int, default=0, help='First seed (default: 0)')
    p.add_argument('--seeds', type=int, default=20, help='Number of seeds per check (default: 20)')
    p.add_argument('--op', action='append', default=None, help='Run only this check (repeatable or comma-separated)')
    p.add_argument('--threshold', type=float, default=1e-3, help='Max relative error to pass (default: 1e-3)')
    p.add_argument('--out', type=str, default=None, help='Optional directory for gradcheck.csv')
    _add_common(p)
    return parser


def _cli_values(args: argparse.Namespace, names) -> Dict:
    values = {n: getattr(args, n) for n in names if hasattr(args, n)}
    pool = getattr(args, 'pool_size', None)
    if pool is not None:
        values['pool_h'], values['pool_w'] = pool
    return values


def cmd_gen_data(args: argparse.Namespace) -> int:
    out = Path(args.out)
    spec = SceneSpec(image_size=args.image_size, num_classes=args.classes)
    meta = build_detection_dataset(args.seed, args.num_train, args.num_val, spec, out, args.parallel)
    derive_classification_crops(out / TRAIN_FILE, args.crop_size, out / TRAIN_CROPS_FILE)
    derive_classification_crops(out / VAL_FILE, args.crop_size, out / VAL_CROPS_FILE)
    meta.crop_size = args.crop_size
    meta.save(out / META_FILE)
    write_resolved_config(out, {"command": "gen-data", "seed": args.seed, "num_train": args.num_train,
                                "num_val": args.num_val, "crop_size": args.crop_size, "spec": spec.to_dict()})
    print(json.dumps(meta.to_dict(), indent=2, sort_keys=True))
    return EXIT_OK


def cmd_train_teacher(args: argparse.Namespace) -> int:
    data, out = Path(args.data), Path(args.out)
    allowed = field_names(TeacherRunConfig)
    file_values = load_run_config(Path(args.config), allowed) if args.config else None
    cfg = build_dataclass(TeacherRunConfig, merge_layers(file_values, _cli_values(args, allowed)))
    meta = load_meta(data)
    train_set = read_classification_dataset(data / TRAIN_CROPS_FILE)
    val_set = read_classification_dataset(data / VAL_CROPS_FILE)
    write_resolved_config(out, {"command": "train-teacher", "data": str(data), **cfg.to_dict()})
    result = train_teacher(train_set, val_set, cfg, out / TEACHER_CHECKPOINT, out,
                           meta.dataset_hash if meta else "")
    print(json.dumps({"best_epoch": result.best_epoch, "val_top1": result.best_val_top1,
                      "checkpoint": str(result.checkpoint)}, sort_keys=True))
    return EXIT_OK


def cmd_train_student(args: argparse.Namespace) -> int:
    data, out = Path(args.data), Path(args.out)
    run_fields = field_names(TrainRunConfig)
    distill_fields = field_names(DistillConfig)
    file_values = load_run_config(Path(args.config), run_fields | distill_fields) if args.config else None
    values = merge_layers(file_values, _cli_values(args, run_fields | distill_fields))
    cfg = build_dataclass(TrainRunConfig, values)
    distill = build_dataclass(DistillConfig, values)
    if cfg.needs_teacher and not cfg.teacher_path:
        raise ConfigError("--kd-cls / --kd-loc need --teacher; only --kd-loc0 runs without a teacher")
    teacher = load_teacher(Path(cfg.teacher_path)) if cfg.teacher_path else None
    meta = load_meta(data)
    train_set = read_detection_dataset(data / TRAIN_FILE)
    val_set = read_detection_dataset(data / VAL_FILE)
    write_resolved_config(out, {"command": "train-student", "data": str(data), **cfg.to_dict(), **distill.to_dict()})
    result = train_student(train_set, val_set, cfg, distill, teacher, out / STUDENT_CHECKPOINT, out,
                           dataset_hash=meta.dataset_hash if meta else "")
    final = result.final_metrics
    print(json.dumps({"val_mAP": final.mAP, "val_AP50": final.AP50, "val_AP75": final.AP75, "val_mAR": final.mAR,
                      "checkpoint": str(result.checkpoint)}, sort_keys=True))
    return EXIT_OK


def _load_for_eval(args: argparse.Namespace):
    data = Path(args.data)
    ckpt = load_checkpoint(Path(args.model))
    if ckpt.kind and ckpt.kind != "student":
        raise ConfigError(f"{args.model} is a {ckpt.kind} checkpoint; eval needs a student")
    meta = load_meta(data)
    check_dataset_hash(ckpt, meta.dataset_hash if meta else None)
    model = load_student(Path(args.model))
    dataset = read_detection_dataset(data / (VAL_FILE if args.split == 'val' else TRAIN_FILE))
    cfg = EvalConfig(score_threshold=args.score_threshold, max_detections=args.max_detections)
    return model, dataset, cfg


def cmd_eval(args: argparse.Namespace) -> int:
    out = Path(args.out)
    model, dataset, cfg = _load_for_eval(args)
    write_resolved_config(out, {"command": "eval", "model": args.model, "data": args.data, "split": args.split,
                                **vars(cfg)})
    metrics, dets, gts = evaluate_model(model, dataset, cfg)
    errors = error_decomposition(dets, gts, cfg.error_iou, model.num_classes, cfg.max_detections)
    write_json(out / EVAL_REPORT, build_eval_report(metrics, [errors], {"split": args.split, "images": len(dets)}))
    if args.dump_predictions:
        dump_predictions(out / "predictions.jsonl", dets)
    print(json.dumps({"mAP": metrics.mAP, "AP50": metrics.AP50, "AP75": metrics.AP75, "mAR": metrics.mAR},
                     sort_keys=True))
    return EXIT_OK


def cmd_error_analysis(args: argparse.Namespace) -> int:
    out = Path(args.out)
    model, dataset, cfg = _load_for_eval(args)
    write_resolved_config(out, {"command": "error-analysis", "model": args.model, "data": args.data,
                                "split": args.split, "thresholds": list(SWEEP_THRESHOLDS), **vars(cfg)})
    metrics, dets, gts = evaluate_model(model, dataset, cfg)
    reports = error_sweep(dets, gts, model.num_classes, SWEEP_THRESHOLDS, cfg.max_detections)
    write_json(out / ERROR_REPORT, build_eval_report(metrics, reports, {"split": args.split}))
    table = write_error_table(out / ERROR_TABLE, reports)
    print(table.to_string(index=False))
    return EXIT_OK


def cmd_gradcheck(args: argparse.Namespace) -> int:
    from cls2det.gradcheck_suite import run_gradchecks

    only: Optional[List[str]] = None
    if args.op:
        only = [name.strip() for item in args.op for name in item.split(',') if name.strip()]
    table = run_gradchecks(seeds=args.seeds, base_seed=args.seed, only=only, threshold=args.threshold)
    print(table.to_string(index=False))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        table.to_csv(out / "gradcheck.csv", index=False)
        write_resolved_config(out, {"command": "gradcheck", "seed": args.seed, "seeds": args.seeds,
                                    "op": only, "threshold": args.threshold})
    failed = table.loc[~table["passed"], "op"].tolist()
    if failed:
        logger.error(f"Gradient check failed for: {failed}")
        return EXIT_CHECK_FAILED
    logger.info(f"All {len(table)} gradient checks passed")
    return EXIT_OK


COMMANDS = {
    'gen-data': cmd_gen_data,
    'train-teacher': cmd_train_teacher,
    'train-student': cmd_train_student,
    'eval': cmd_eval,
    'error-analysis': cmd_error_analysis,
    'gradcheck': cmd_gradcheck,
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE

    set_verbosity(args.verbose, args.quiet)

    try:
        return COMMANDS[args.command](args)
    except ConfigError as e:
        logger.error(f"{args.command}: {e}")
        return EXIT_USAGE
    except (DatasetFormatError, CheckpointError, OSError) as e:
        logger.error(f"{args.command}: {e}")
        return EXIT_IO
    except (NumericalError, ShapeError) as e:
        logger.error(f"{args.command}: {type(e).__name__}: {e}")
        return EXIT_CHECK_FAILED


if __name__ == '__main__':
    try:
        sys.exit(main())
    except KeyboardInterrupt:
        print("\nInterrupted by user. Exiting.")
        sys.exit(130)
