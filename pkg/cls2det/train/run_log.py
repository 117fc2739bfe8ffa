"""
run_log.py - Per-epoch metrics stream (JSON lines) and the end-of-run summary table
"""

import json
from pathlib import Path
from typing import Dict, List

import pandas as pd

from cls2det.utils.logger import get_logger, setup_logger

setup_logger()
logger = get_logger()

METRICS_FILE = "metrics.jsonl"
SUMMARY_FILE = "summary.csv"
STUDENT_KEYS = ("epoch", "loss_det", "loss_kd_cls", "loss_kd_loc", "val_mAP", "val_AP50", "val_AP75", "lr")
TEACHER_KEYS = ("epoch", "loss", "train_top1", "val_top1", "lr")


class RunLog:
    """Append-only record of one training run; the JSONL file is truncated when the log is opened."""

    def __init__(self, out_dir: Path, keys=STUDENT_KEYS):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.metrics_file = self.out_dir / METRICS_FILE
        self.keys = tuple(keys)
        self.records: List[Dict] = []
        self.metrics_file.write_text("")

    def append(self, record: Dict) -> Dict:
        missing = [k for k in self.keys if k not in record]
        if missing:
            raise KeyError(f"run log record missing {missing}")
        row = {k: record[k] for k in self.keys}
        self.records.append(row)
        with open(self.metrics_file, "a") as f:
            f.write(json.dumps(row, sort_keys=True) + "\n")
        return row

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.records, columns=list(self.keys))

    def write_summary(self) -> Path:
        path = self.out_dir / SUMMARY_FILE
        self.frame().to_csv(path, index=False)
        logger.info(f"Wrote {len(self.records)} epoch record(s) to {path}")
        return path

    def best(self, key: str) -> Dict:
        if not self.records:
            return {}
        return max(self.records, key=lambda r: r[key])


def read_metrics(path: Path) -> List[Dict]:
    with open(path, "r") as f:
        return [json.loads(line) for line in f if line.strip()]
