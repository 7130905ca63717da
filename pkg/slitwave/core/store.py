import csv
import io
import logging
import os
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

PGM_MAXVAL = 65535


def format_number(value: float) -> str:
    """Shortest round-trip decimal (at most 17 significant digits); 1.0 -> '1', -0.0 -> '0'."""
    text = repr(float(value))
    if text.endswith(".0"):
        text = text[:-2]
    return "0" if text == "-0" else text


def csv_text(header: Sequence[str], rows: Iterable[Sequence[float]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows([format_number(v) for v in row] for row in rows)
    return buf.getvalue()


def grid_csv(grid) -> str:
    """x2,zpp,value rows in row-major order, x2 fastest."""
    x2, zpp = grid.axes
    rows = ((x, z, grid.values[iz, ix]) for iz, z in enumerate(zpp) for ix, x in enumerate(x2))
    return csv_text(("x2", "zpp", "value"), rows)


def null_map_csv(null_map) -> str:
    return csv_text(("x2", "zpp", "rho"), null_map.points)


def cornu_csv(points) -> str:
    return csv_text(("u", "S", "C"), ((p.u, p.s, p.c) for p in points))


def slice_csv(profile: List[Tuple[float, float]]) -> str:
    return csv_text(("coord", "rho"), profile)


def pgm_text(values: np.ndarray, mapping: str = "affine", floor: float = 1e-300) -> Tuple[str, str]:
    """
    Plain 16-bit PGM (P2) of a (rows, cols) array plus the sidecar text that
    records how grey levels map back to values.
    """
    values = np.asarray(values, dtype=float)
    if mapping == "log":
        data = np.log10(np.maximum(np.abs(values), floor))
    elif mapping == "affine":
        data = values
    else:
        raise ValueError(f"Unknown PGM mapping: {mapping}")
    lo, hi = float(np.min(data)), float(np.max(data))
    span = hi - lo
    levels = np.zeros(data.shape, dtype=int) if span == 0 else np.rint((data - lo) / span * PGM_MAXVAL).astype(int)
    rows, cols = levels.shape
    lines = ["P2", f"{cols} {rows}", str(PGM_MAXVAL)]
    lines.extend(" ".join(str(v) for v in row) for row in levels)
    sidecar = f"min = {format_number(lo)}\nmax = {format_number(hi)}\nmapping = {mapping}\n"
    return "\n".join(lines) + "\n", sidecar


class ResultStore:
    """Writes run artefacts under one output directory."""
    def __init__(self, base_path: Optional[str] = None):
        self.base_path = os.path.abspath(base_path or os.getenv("SLITWAVE_OUTPUT", "./slitwave-output"))
        self._ensure_base_path()

    def _ensure_base_path(self):
        if not os.path.exists(self.base_path):
            try:
                os.makedirs(self.base_path, mode=0o775, exist_ok=True)
            except OSError as e:
                logging.error(f"Failed to create output path {self.base_path}: {e}")
                raise

    def store_result(self, filename: str, content: str) -> str:
        file_path = os.path.join(self.base_path, filename)
        # newline="" keeps '\n' on every platform so reruns are byte-identical
        with open(file_path, "w", encoding="utf-8", newline="") as f:
            f.write(content)
        logging.info(f"Wrote {file_path}")
        return file_path
