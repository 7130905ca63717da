import logging
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Dict, List, Optional

import numpy as np
import psutil

from slitwave.core.errors import ConfigError
from slitwave.core.geometry import ArrayLike, SlitArray
from slitwave.core.kernels import AmplitudeEvaluator
from slitwave.core.worker import DensityWorker, Worker

# Points per evaluation chunk. Fixed so array layouts, and therefore output
# bytes, are the same for every thread count.
CHUNK_SIZE = 4096


class ScanRunner:
    """
    Runs scan chunks on a thread pool and returns results in task order.
    """
    def __init__(self, threads: Optional[int] = None, cpu_threshold: Optional[float] = None):
        self.threads = self.resolve_threads(threads, cpu_threshold)

    @staticmethod
    def resolve_threads(threads: Optional[int] = None, cpu_threshold: Optional[float] = None) -> int:
        """
        Explicit value first, then SLITWAVE_THREADS, then the core count,
        halved when the host is already busy.
        """
        if threads is None:
            env = os.getenv("SLITWAVE_THREADS")
            if env:
                try:
                    threads = int(env)
                except ValueError:
                    raise ConfigError(f"SLITWAVE_THREADS must be an integer (got '{env}')")
        if threads is None:
            threads = psutil.cpu_count(logical=True) or 1
            if cpu_threshold is None:
                cpu_threshold = float(os.getenv("SLITWAVE_CPU_THRESHOLD", 70.0))
            load = psutil.cpu_percent(interval=0.1)
            if load > cpu_threshold:
                logging.info(f"ScanRunner: host load {load:.0f}% above {cpu_threshold:.0f}%, halving workers")
                threads = max(1, threads // 2)
        if threads < 1:
            raise ConfigError(f"thread count must be at least 1 (got {threads})")
        return threads

    def map(self, worker: Worker, tasks: List[Dict[str, Any]]) -> List[Any]:
        try:
            if self.threads == 1 or len(tasks) <= 1:
                return [worker.execute(task) for task in tasks]
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                return list(pool.map(worker.execute, tasks))
        finally:
            worker.cleanup()

    def evaluate_density(self, evaluator: AmplitudeEvaluator, slits: SlitArray,
                         x2: ArrayLike, zpp: ArrayLike) -> np.ndarray:
        x2, zpp = np.broadcast_arrays(np.asarray(x2, dtype=float), np.asarray(zpp, dtype=float))
        shape = x2.shape
        flat_x, flat_z = x2.ravel(), zpp.ravel()
        tasks = [
            {"offset": start, "x2": flat_x[start:start + CHUNK_SIZE], "zpp": flat_z[start:start + CHUNK_SIZE]}
            for start in range(0, flat_x.size, CHUNK_SIZE)
        ]
        logging.debug(f"ScanRunner: {flat_x.size} points in {len(tasks)} chunks on {self.threads} threads")
        results = self.map(DensityWorker(evaluator, slits), tasks)
        if not results:
            return np.empty(shape)
        return np.concatenate(results).reshape(shape)


_default_runner: Optional[ScanRunner] = None
_default_runner_lock = threading.Lock()


def get_default_runner() -> ScanRunner:
    """Get or create the process-wide runner used when callers pass none."""
    global _default_runner
    with _default_runner_lock:
        if _default_runner is None:
            _default_runner = ScanRunner()
    return _default_runner
