import logging
from abc import ABC, abstractmethod
from typing import Any, Dict, Tuple

import numpy as np

from slitwave.core.errors import NumericDomainError
from slitwave.core.geometry import SlitArray
from slitwave.core.kernels import AmplitudeEvaluator

# Samples per Monte-Carlo block; sample j always comes from block j // MC_BLOCK_SIZE.
MC_BLOCK_SIZE = 4096


class Worker(ABC):
    """
    Abstract scan worker. A worker evaluates one fixed-size chunk of a scan;
    chunks never depend on the number of threads.
    """
    @abstractmethod
    def execute(self, task: Dict[str, Any]) -> Any:
        """Evaluates the given chunk and returns its result."""
        pass

    def cleanup(self):
        """Optional cleanup logic for workers."""
        pass


class DensityWorker(Worker):
    """
    Evaluates rho on a chunk of points.
    Expects task = {"offset": int, "x2": ndarray, "zpp": ndarray}.
    """
    def __init__(self, evaluator: AmplitudeEvaluator, slits: SlitArray):
        self.evaluator = evaluator
        self.slits = slits

    def execute(self, task: Dict[str, Any]) -> np.ndarray:
        try:
            return self.evaluator.density(self.slits, task["x2"], task["zpp"])
        except NumericDomainError as e:
            raise self._locate(task, e) from e

    def _locate(self, task: Dict[str, Any], error: NumericDomainError) -> NumericDomainError:
        # Re-run point by point to name the first offending sample.
        for j, (x2, zpp) in enumerate(zip(task["x2"], task["zpp"])):
            try:
                self.evaluator.density(self.slits, x2, zpp)
            except NumericDomainError as inner:
                located = NumericDomainError(f"{inner} (sample {task['offset'] + j}, x2={x2}, zpp={zpp})")
                located.index = task["offset"] + j
                located.x2, located.zpp = float(x2), float(zpp)
                return located
        logging.warning(f"DensityWorker: chunk at offset {task['offset']} failed but no single point reproduces it")
        return error


class MonteCarloWorker(DensityWorker):
    """
    Draws one block of uniform samples from a Philox stream keyed by the seed
    and evaluates rho there. Expects task = {"block": int}.
    """
    def __init__(self, evaluator: AmplitudeEvaluator, slits: SlitArray, seed: int,
                 bounds: Tuple[float, float, float, float], log_z: bool = False):
        super().__init__(evaluator, slits)
        if seed < 0 or seed >= 2 ** 128:
            raise ValueError(f"seed must lie in [0, 2**128) (got {seed})")
        self.seed = seed
        self.bounds = bounds
        self.log_z = log_z

    def draw(self, block: int) -> Tuple[np.ndarray, np.ndarray]:
        # counter word 1 carries the block index, so blocks never overlap
        gen = np.random.Generator(np.random.Philox(key=self.seed, counter=block << 64))
        uv = gen.random((MC_BLOCK_SIZE, 2))
        x_min, x_max, z_min, z_max = self.bounds
        x2 = x_min + uv[:, 0] * (x_max - x_min)
        if self.log_z:
            zpp = np.exp(np.log(z_min) + uv[:, 1] * (np.log(z_max) - np.log(z_min)))
        else:
            zpp = z_min + uv[:, 1] * (z_max - z_min)
        return x2, np.clip(zpp, z_min, z_max)

    def execute(self, task: Dict[str, Any]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        block = task["block"]
        x2, zpp = self.draw(block)
        rho = super().execute({"offset": block * MC_BLOCK_SIZE, "x2": x2, "zpp": zpp})
        return x2, zpp, rho
