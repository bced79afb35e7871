import csv
import json
import time
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor, as_completed
from importlib import metadata
from pathlib import Path
from typing import Any

import numpy as np
from pydantic import BaseModel
from tqdm import tqdm

from src.engine.model import REFERENCE_ENSEMBLES, DisorderConfig, reference_config

TRACKED_PACKAGES = ("numpy", "scipy", "pydantic", "tqdm")


class Manifest(BaseModel):
    command: str
    created_at: str
    config: dict[str, Any]
    config_source: str
    run: dict[str, Any]
    seeds: list[int]
    versions: dict[str, str]
    wall_time: float
    failures: list[dict[str, Any]] = []


def load_config(source: str, seed: int | None = None) -> DisorderConfig:
    """Config from a JSON file, or a shipped reference ensemble by name."""
    path = Path(source)
    if path.is_file():
        config = DisorderConfig.model_validate_json(path.read_text(encoding="utf-8"))
        if seed is not None:
            config = config.model_copy(update={"seed": seed})
        return config
    if source in REFERENCE_ENSEMBLES:
        return reference_config(source, 0 if seed is None else seed)
    raise FileNotFoundError(
        f"'{source}' is neither a config file nor a reference ensemble "
        f"({', '.join(sorted(REFERENCE_ENSEMBLES))})"
    )


def parse_z_list(text: str) -> list[complex]:
    """'re,im;re,im' -> complex energies."""
    values = []
    for item in text.split(";"):
        item = item.strip()
        if not item:
            continue
        re_part, im_part = item.split(",")
        values.append(complex(float(re_part), float(im_part)))
    return values


def energy_grid(start: float, stop: float, count: int) -> list[float]:
    if count == 0:
        return []
    return [float(E) for E in np.linspace(start, stop, count)]


def _format(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".16e")
    return str(value)


def emit_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence[Any]]):
    """Header plus one line per row; floats in full-precision scientific
    notation so the file parses back bit-exactly."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            if len(row) != len(header):
                raise ValueError(
                    f"row has {len(row)} fields, header has {len(header)}"
                )
            writer.writerow([_format(v) for v in row])


def emit_json(path: Path, data: Any):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2, ensure_ascii=False)


def package_versions() -> dict[str, str]:
    versions = {}
    for name in TRACKED_PACKAGES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = "unknown"
    return versions


def write_manifest(path: Path, manifest: Manifest):
    emit_json(path, manifest.model_dump(mode="json"))


def now() -> str:
    return time.strftime("%Y-%m-%d %H:%M:%S")


def run_tasks(
    fn: Callable[[Any], Any],
    tasks: Sequence[Any],
    threads: int,
    desc: str,
) -> list[Any]:
    """fn over tasks on a thread pool; results come back in task order."""
    results: list[Any] = [None] * len(tasks)
    if not tasks:
        return results
    with ThreadPoolExecutor(max_workers=threads) as executor:
        future_to_index = {
            executor.submit(fn, task): index for index, task in enumerate(tasks)
        }
        with tqdm(total=len(tasks), desc=desc) as pbar:
            for future in as_completed(future_to_index):
                results[future_to_index[future]] = future.result()
                pbar.update(1)
    return results


def complex_pair(value: complex) -> list[float]:
    value = complex(value)
    return [value.real, value.imag]


def matrix_pairs(M: np.ndarray) -> list[list[list[float]]]:
    return [[complex_pair(v) for v in row] for row in np.asarray(M)]


def error_record(error: Exception) -> dict[str, Any]:
    """Machine-readable failure entry for an engine error."""
    record: dict[str, Any] = {
        "check": "engine-error",
        "error": type(error).__name__,
        "message": str(error),
    }
    for name in ("cell", "value", "radius", "min_eigenvalue", "n_cells"):
        value = getattr(error, name, None)
        if value is None:
            continue
        if isinstance(value, complex):
            value = complex_pair(value)
        record[name] = value
    return record
