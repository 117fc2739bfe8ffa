"""
report.py - Evaluation report JSON, error-analysis tables and prediction dumps
"""

import json
from pathlib import Path
from typing import Optional, Sequence

import pandas as pd

from cls2det.utils.logger import get_logger, setup_logger
from .coco_metrics import CocoMetrics
from .detections import Detections
from .error_analysis import ErrorReport, error_table

setup_logger()
logger = get_logger()


def build_eval_report(metrics: CocoMetrics, errors: Sequence[ErrorReport], extra: Optional[dict] = None) -> dict:
    report = {"metrics": metrics.to_dict(), "errors": [e.to_dict() for e in errors]}
    if extra:
        report.update(extra)
    return report


def write_json(path: Path, payload: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
    return path


def write_error_table(path: Path, reports: Sequence[ErrorReport]) -> pd.DataFrame:
    table = error_table(reports)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(path, index=False)
    logger.info(f"Wrote error table ({len(table)} rows) to {path}")
    return table


def dump_predictions(path: Path, dets: Sequence[Detections]) -> Path:
    """One JSON line per image: {"image": i, "detections": [{box, label, score}, ...]}."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        for i, d in enumerate(dets):
            f.write(json.dumps({"image": i, "detections": d.to_records()}) + "\n")
    logger.info(f"Dumped predictions for {len(dets)} images to {path}")
    return path


def metrics_frame(metrics: CocoMetrics) -> pd.DataFrame:
    rows = [{"metric": f"AP@{t}", "value": v} for t, v in metrics.ap_per_threshold.items()]
    for name in ("mAP", "AP50", "AP75", "mAR", "AP_small", "AP_medium", "AP_large", "AR_small", "AR_medium", "AR_large"):
        rows.append({"metric": name, "value": getattr(metrics, name)})
    return pd.DataFrame(rows, columns=["metric", "value"])
