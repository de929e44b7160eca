"""Single-writer metrics sink: JSON lines through a bounded queue, mirrored into prometheus gauges."""

import logging
import os
import queue
import threading
from typing import List, Optional

from prometheus_client import CollectorRegistry, Gauge, write_to_textfile

from ..config import settings
from ..schemas import MetricRecord

logger = logging.getLogger(__name__)

_CLOSE = object()


class MetricsWriter:
    """
    Owns metrics.jsonl. Producers call write(); one background thread drains the
    queue, so every line is written whole.
    """

    def __init__(self, out_dir: str, queue_size: Optional[int] = None, prom_file: bool = True):
        os.makedirs(out_dir, exist_ok=True)
        self.path = os.path.join(out_dir, "metrics.jsonl")
        self.prom_path = os.path.join(out_dir, "metrics.prom") if prom_file else None
        self._queue: "queue.Queue" = queue.Queue(maxsize=queue_size or settings.METRICS_QUEUE_SIZE)
        self._file = open(self.path, "w", encoding="utf-8", newline="\n")
        self.written = 0

        self.registry = CollectorRegistry()
        self._frames = Gauge("asyncrl_global_frames", "Global frame counter T", registry=self.registry)
        self._score = Gauge("asyncrl_eval_mean_score", "Mean greedy evaluation score", registry=self.registry)
        self._score_std = Gauge("asyncrl_eval_std", "Std of greedy evaluation score", registry=self.registry)
        self._eta = Gauge("asyncrl_learning_rate", "Current learning rate", registry=self.registry)
        self._threads = Gauge("asyncrl_threads", "Actor-learner thread count", registry=self.registry)
        self._fps = Gauge("asyncrl_frames_per_second", "Frames per wall-clock second", registry=self.registry)

        self._thread = threading.Thread(target=self._drain, name="metrics-writer", daemon=True)
        self._thread.start()

    def write(self, record: MetricRecord) -> None:
        self._queue.put(record)

    def _drain(self) -> None:
        while True:
            item = self._queue.get()
            if item is _CLOSE:
                self._file.flush()
                return
            try:
                self._file.write(item.model_dump_json() + "\n")
                self._file.flush()
                self.written += 1
                self._update_gauges(item)
            except Exception:
                logger.exception("Failed to write metric record")

    def _update_gauges(self, record: MetricRecord) -> None:
        self._frames.set(record.global_frames)
        self._score.set(record.eval_mean_score)
        self._score_std.set(record.eval_std)
        self._eta.set(record.current_eta)
        self._threads.set(record.thread_count)
        if record.wall_clock_seconds > 0:
            self._fps.set(record.global_frames / record.wall_clock_seconds)

    def close(self) -> None:
        """Flush queued records, close the file and write the prometheus text file"""
        if self._thread is None:
            return
        self._queue.put(_CLOSE)
        self._thread.join()
        self._thread = None
        self._file.close()
        if self.prom_path is not None:
            write_to_textfile(self.prom_path, self.registry)
        logger.info(f"Wrote {self.written} metric records to {self.path}")

    def __enter__(self) -> "MetricsWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def read_metrics(path: str) -> List[MetricRecord]:
    """Parse metrics.jsonl under the strict schema"""
    with open(path, "r", encoding="utf-8") as f:
        return [MetricRecord.model_validate_json(line) for line in f if line.strip()]
