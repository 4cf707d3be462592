"""Reading and writing paths, measures and estimates.

Path files carry a ``# key=value`` comment header (manifold, generator,
density, dt, T, seed, record_every) followed by rows ``t, x_1, ..., x_d``.
The ``.npz`` form stores the same header as a JSON string next to the
``times`` and ``intrinsic`` arrays.
"""

import json
import logging
from pathlib import Path
from typing import Dict, Optional, Union

import numpy as np

from .diffusion import occupation_measure
from .exceptions import InputError
from .models.estimate import SmoothedEstimate
from .models.experiment import SCHEMA_VERSION, EstimateRecord
from .models.manifold import Manifold
from .models.measure import DiscreteMeasure
from .models.path import DiffusionPath
from .specs import parse_manifold

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def _path_header(path: DiffusionPath) -> Dict[str, str]:
    return {
        "kind": "path",
        "schema_version": SCHEMA_VERSION,
        "manifold": path.manifold.spec,
        "generator": path.generator,
        "density": path.density,
        "dt": repr(path.dt),
        "T": repr(path.horizon),
        "seed": "" if path.seed is None else str(path.seed),
        "record_every": str(path.record_every),
    }


def _read_header(file: Path) -> Dict[str, str]:
    header: Dict[str, str] = {}
    with file.open(encoding="utf-8") as handle:
        for line in handle:
            if not line.startswith("#"):
                break
            key, sep, value = line[1:].strip().partition("=")
            if sep:
                header[key.strip()] = value.strip()
    return header


def _path_from_header(header: Dict[str, str], times: np.ndarray, intrinsic: np.ndarray) -> DiffusionPath:
    try:
        manifold = parse_manifold(header["manifold"])
        return DiffusionPath(
            manifold=manifold,
            times=times,
            intrinsic=intrinsic.reshape(times.shape[0], manifold.intrinsic_dim),
            dt=float(header["dt"]),
            record_every=int(header.get("record_every", "1")),
            seed=int(header["seed"]) if header.get("seed") else None,
            generator=header.get("generator", "langevin"),
            density=header.get("density", "uniform"),
        )
    except KeyError as exc:
        raise InputError(f"Path header lacks the {exc.args[0]!r} entry", {"header": header}) from exc


def save_path(path: DiffusionPath, target: PathLike) -> Path:
    """Write a path as ``.csv`` or ``.npz`` depending on the suffix."""
    file = Path(target)
    file.parent.mkdir(parents=True, exist_ok=True)
    header = _path_header(path)
    if file.suffix == ".npz":
        np.savez_compressed(file, times=path.times, intrinsic=path.intrinsic, header=json.dumps(header))
    else:
        d = path.manifold.intrinsic_dim
        header["columns"] = ",".join(["t"] + [f"x{i + 1}" for i in range(d)])
        lines = [f"# {k}={v}" for k, v in header.items()]
        data = np.column_stack((path.times, path.intrinsic))
        with file.open("w", encoding="utf-8") as handle:
            handle.write("\n".join(lines) + "\n")
            np.savetxt(handle, data, delimiter=",", fmt="%.17g")
    logger.debug("Saved %d path points to %s", path.n_points, file)
    return file


def load_path(source: PathLike) -> DiffusionPath:
    """Read a path written by ``save_path``.

    Raises:
        InputError: If the file is missing or its header is incomplete.
    """
    file = Path(source)
    if not file.is_file():
        raise InputError(f"Path file not found: {file}", {"path": str(file)})
    if file.suffix == ".npz":
        with np.load(file, allow_pickle=False) as data:
            header = json.loads(str(data["header"]))
            return _path_from_header(header, data["times"], data["intrinsic"])
    header = _read_header(file)
    data = np.loadtxt(file, delimiter=",", comments="#", ndmin=2)
    return _path_from_header(header, data[:, 0], data[:, 1:])


def save_measure(measure: DiscreteMeasure, target: PathLike) -> Path:
    """Write a measure as CSV rows ``x_1, ..., x_d, weight``."""
    file = Path(target)
    file.parent.mkdir(parents=True, exist_ok=True)
    d = measure.manifold.intrinsic_dim
    columns = ",".join([f"x{i + 1}" for i in range(d)] + ["weight"])
    with file.open("w", encoding="utf-8") as handle:
        handle.write(f"# kind=measure\n# manifold={measure.manifold.spec}\n# columns={columns}\n")
        np.savetxt(handle, np.column_stack((measure.support, measure.weights)), delimiter=",", fmt="%.17g")
    return file


def to_record(estimate: SmoothedEstimate) -> EstimateRecord:
    return EstimateRecord(
        manifold=estimate.grid.manifold.spec,
        grid_resolution=estimate.grid.shape[0],
        h=estimate.h,
        horizon=estimate.horizon,
        kernel=estimate.kernel,
        distance_mode=estimate.distance_mode,
        positivity_ok=estimate.positivity_ok,
        mass=estimate.mass,
        values=estimate.values.tolist(),
        support=estimate.measure.support.tolist(),
        weights=estimate.measure.weights.tolist(),
    )


def save_estimate(estimate: SmoothedEstimate, target: PathLike) -> Path:
    file = Path(target)
    file.parent.mkdir(parents=True, exist_ok=True)
    file.write_text(to_record(estimate).model_dump_json(indent=2) + "\n", encoding="utf-8")
    return file


def load_estimate_record(source: PathLike) -> EstimateRecord:
    file = Path(source)
    if not file.is_file():
        raise InputError(f"Estimate file not found: {file}", {"path": str(file)})
    return EstimateRecord.model_validate_json(file.read_text(encoding="utf-8"))


def load_measure(source: PathLike, manifold: Optional[Manifold] = None) -> DiscreteMeasure:
    """Load a measure from a measure CSV, an estimate JSON or a path file.

    Paths become their occupation measure; estimates their derived measure.

    Raises:
        InputError: If the file is missing, of an unknown kind, or lives on
            another manifold than ``manifold``.
    """
    file = Path(source)
    if not file.is_file():
        raise InputError(f"Measure file not found: {file}", {"path": str(file)})
    if file.suffix == ".json":
        record = load_estimate_record(file)
        measure = DiscreteMeasure(
            manifold=parse_manifold(record.manifold),
            support=np.asarray(record.support),
            weights=np.asarray(record.weights),
        )
    elif file.suffix == ".npz" or _read_header(file).get("kind") == "path":
        measure = occupation_measure(load_path(file))
    elif _read_header(file).get("kind") == "measure":
        found = parse_manifold(_read_header(file)["manifold"])
        data = np.loadtxt(file, delimiter=",", comments="#", ndmin=2)
        measure = DiscreteMeasure.normalized(found, data[:, :-1], data[:, -1])
    else:
        raise InputError(f"Cannot tell what {file} holds; expected a '# kind=' header", {"path": str(file)})
    if manifold is not None and measure.manifold != manifold:
        raise InputError(
            f"{file} lives on {measure.manifold.spec}, expected {manifold.spec}",
            {"path": str(file)},
        )
    return measure
