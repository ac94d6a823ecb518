"""Process schemas, experience datasets and the synthetic ozonation process."""

from __future__ import annotations

import configparser
import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np


class DataError(ValueError):
    """Raised for malformed schemas, CSV files or dataset contents."""


@dataclass(frozen=True)
class Variable:
    name: str
    min: float
    max: float
    step: float

    def __post_init__(self):
        if not self.name or not self.name.strip():
            raise DataError("variable name must be non-empty")
        for attr in ("min", "max", "step"):
            if not math.isfinite(getattr(self, attr)):
                raise DataError(f"{self.name}: {attr} must be finite")
        if not self.min < self.max:
            raise DataError(f"{self.name}: min must be < max")
        if not 0 < self.step <= self.max - self.min:
            raise DataError(f"{self.name}: step must lie in (0, max - min]")

    @property
    def n_points(self) -> int:
        # small tolerance so that e.g. (1.0 - 0.0) / 0.1 still counts 11 points
        return int(math.floor((self.max - self.min) / self.step + 1e-9)) + 1

    def grid(self) -> np.ndarray:
        """All admissible values ``min + k * step`` that do not exceed ``max``."""
        return self.min + self.step * np.arange(self.n_points)

    def value_at(self, k: int) -> float:
        return float(self.min + self.step * k)

    def index_of(self, value: float) -> int:
        """Grid index of ``value``; raises if the value is off-grid."""
        k = round((value - self.min) / self.step)
        if not 0 <= k < self.n_points or not math.isclose(
            self.value_at(k), value, rel_tol=1e-9, abs_tol=1e-9 * self.step
        ):
            raise DataError(f"{self.name}: {value!r} is not on the grid")
        return int(k)


@dataclass(frozen=True)
class ProcessSchema:
    """Ordered process variables (model inputs) and criteria (model outputs)."""

    variables: tuple[Variable, ...]
    criteria: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        object.__setattr__(self, "criteria", tuple(self.criteria))
        if not self.variables:
            raise DataError("schema needs at least one variable")
        if not self.criteria:
            raise DataError("schema needs at least one criterion")
        if any(not c or not c.strip() for c in self.criteria):
            raise DataError("criterion names must be non-empty")
        names = self.variable_names + self.criteria
        if len(set(names)) != len(names):
            raise DataError("variable and criterion names must be unique")

    @property
    def variable_names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.variables)

    @property
    def n_variables(self) -> int:
        return len(self.variables)

    @property
    def n_criteria(self) -> int:
        return len(self.criteria)

    @property
    def grid_shape(self) -> tuple[int, ...]:
        return tuple(v.n_points for v in self.variables)

    @property
    def grid_size(self) -> int:
        return int(np.prod(self.grid_shape))

    @property
    def lower(self) -> np.ndarray:
        return np.array([v.min for v in self.variables])

    @property
    def upper(self) -> np.ndarray:
        """Largest on-grid value per variable (equals ``max`` when it is reachable)."""
        return np.array([v.value_at(v.n_points - 1) for v in self.variables])

    @property
    def steps(self) -> np.ndarray:
        return np.array([v.step for v in self.variables])

    def fingerprint(self) -> str:
        payload = {
            "variables": [[v.name, v.min, v.max, v.step] for v in self.variables],
            "criteria": list(self.criteria),
        }
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def to_dict(self) -> dict:
        return {
            "variables": [
                {"name": v.name, "min": v.min, "max": v.max, "step": v.step}
                for v in self.variables
            ],
            "criteria": list(self.criteria),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ProcessSchema":
        return cls(
            tuple(Variable(v["name"], float(v["min"]), float(v["max"]), float(v["step"]))
                  for v in d["variables"]),
            tuple(d["criteria"]),
        )


def ozonation_schema() -> ProcessSchema:
    """Water content, temperature, pH and time against k/s, L*, a*, b*."""
    return ProcessSchema(
        (
            Variable("water_content", 0.0, 150.0, 50.0),
            Variable("temperature", 0.0, 100.0, 10.0),
            Variable("pH", 1.0, 14.0, 1.0),
            Variable("time", 1.0, 60.0, 1.0),
        ),
        ("k_over_s", "L", "a", "b"),
    )


def load_schema(path: str | Path) -> ProcessSchema:
    """Read a schema from an INI file.

    One ``[variable:<name>]`` section per variable (keys ``min``, ``max``,
    ``step``) in input order, plus ``[criteria]`` with a comma-separated
    ``names`` entry.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"schema file not found: {path}")
    cp = configparser.ConfigParser()
    cp.optionxform = str
    cp.read(path, encoding="utf-8")
    variables = []
    for section in cp.sections():
        if not section.startswith("variable:"):
            continue
        sec = cp[section]
        try:
            variables.append(Variable(
                section.split(":", 1)[1].strip(),
                float(sec["min"]), float(sec["max"]), float(sec["step"]),
            ))
        except KeyError as exc:
            raise DataError(f"{path}: [{section}] missing key {exc}") from None
        except ValueError as exc:
            if isinstance(exc, DataError):
                raise
            raise DataError(f"{path}: [{section}] {exc}") from None
    if not cp.has_option("criteria", "names"):
        raise DataError(f"{path}: missing [criteria] names")
    criteria = tuple(c.strip() for c in cp["criteria"]["names"].split(",") if c.strip())
    return ProcessSchema(tuple(variables), criteria)


def write_schema(schema: ProcessSchema, path: str | Path) -> None:
    lines = []
    for v in schema.variables:
        lines += [f"[variable:{v.name}]", f"min = {v.min!r}", f"max = {v.max!r}",
                  f"step = {v.step!r}", ""]
    lines += ["[criteria]", "names = " + ", ".join(schema.criteria), ""]
    Path(path).write_text("\n".join(lines), encoding="utf-8")


@dataclass
class ExperienceDataset:
    """Rows of (inputs, outputs); ``inputs`` is (N, n) and ``outputs`` is (N, m)."""

    schema: ProcessSchema
    inputs: np.ndarray
    outputs: np.ndarray = field(repr=False)

    def __post_init__(self):
        n, m = self.schema.n_variables, self.schema.n_criteria
        self.inputs = np.asarray(self.inputs, dtype=float).reshape(-1, n)
        self.outputs = np.asarray(self.outputs, dtype=float).reshape(-1, m)
        if len(self.inputs) != len(self.outputs):
            raise DataError("inputs and outputs have different row counts")
        if not (np.isfinite(self.inputs).all() and np.isfinite(self.outputs).all()):
            raise DataError("dataset contains non-finite values")
        lo, hi = self.schema.lower, np.array([v.max for v in self.schema.variables])
        bad = (self.inputs < lo) | (self.inputs > hi)
        if bad.any():
            r, c = np.argwhere(bad)[0]
            raise DataError(
                f"row {r + 1}: {self.schema.variables[c].name}={self.inputs[r, c]!r} "
                "outside its bounds"
            )

    def __len__(self) -> int:
        return len(self.inputs)

    def target(self, criterion: str | int) -> np.ndarray:
        i = criterion if isinstance(criterion, int) else self.schema.criteria.index(criterion)
        return self.outputs[:, i]

    def subset(self, rows) -> "ExperienceDataset":
        rows = np.asarray(rows, dtype=int)
        return ExperienceDataset(self.schema, self.inputs[rows], self.outputs[rows])


def load_csv(path: str | Path, schema: ProcessSchema) -> ExperienceDataset:
    """Parse a comma-separated file whose header is variables then criteria.

    Row numbers in error messages count data lines from 1.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"dataset file not found: {path}")
    expected = list(schema.variable_names + schema.criteria)
    n = schema.n_variables
    lo = schema.lower
    hi = np.array([v.max for v in schema.variables])
    inputs, outputs = [], []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty file, expected header {expected}")
        header = [h.strip() for h in header]
        if header != expected:
            raise DataError(f"{path}: header {header} does not match schema {expected}")
        for r, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) != len(expected):
                raise DataError(f"{path}: row {r}: expected {len(expected)} cells, got {len(row)}")
            values = []
            for name, cell in zip(expected, row):
                try:
                    x = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}: row {r}, column {name}: non-numeric value {cell!r}"
                    ) from None
                if not math.isfinite(x):
                    raise DataError(f"{path}: row {r}, column {name}: non-finite value")
                values.append(x)
            for j in range(n):
                if not lo[j] <= values[j] <= hi[j]:
                    raise DataError(
                        f"{path}: row {r}, column {expected[j]}: {values[j]!r} outside "
                        f"[{lo[j]!r}, {hi[j]!r}]"
                    )
            inputs.append(values[:n])
            outputs.append(values[n:])
    return ExperienceDataset(schema, np.array(inputs).reshape(-1, n),
                             np.array(outputs).reshape(-1, schema.n_criteria))


def write_csv(dataset: ExperienceDataset, path: str | Path) -> None:
    schema = dataset.schema
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(schema.variable_names + schema.criteria)
        for x, y in zip(dataset.inputs, dataset.outputs):
            w.writerow([repr(float(v)) for v in (*x, *y)])


def split(dataset: ExperienceDataset, train_fraction: float, seed: int):
    """Seeded shuffle-and-cut into (train, test); train gets round-half-up of the fraction."""
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must lie in (0, 1)")
    n = len(dataset)
    if n == 0:
        raise DataError("cannot split an empty dataset")
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(math.floor(train_fraction * n + 0.5))
    return dataset.subset(perm[:n_train]), dataset.subset(perm[n_train:])


# -- synthetic ground truth -------------------------------------------------

Phantom = Callable[[np.ndarray], np.ndarray]
_PHANTOMS: dict[tuple[tuple[str, ...], tuple[str, ...]], Phantom] = {}


def register_phantom(variable_names: Sequence[str], criteria: Sequence[str], fn: Phantom) -> None:
    """Register ``fn`` mapping an (N, n) input array to (N, m) noise-free outputs."""
    _PHANTOMS[(tuple(variable_names), tuple(criteria))] = fn


def phantom_for(schema: ProcessSchema) -> Phantom:
    try:
        return _PHANTOMS[(schema.variable_names, schema.criteria)]
    except KeyError:
        raise DataError(
            f"no phantom registered for variables {schema.variable_names} "
            f"and criteria {schema.criteria}"
        ) from None


def ozonation_phantom(x: np.ndarray) -> np.ndarray:
    """Smooth, interacting colour responses for the ozonation variables."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    w = x[:, 0] / 150.0
    temp = x[:, 1] / 100.0
    ph = (x[:, 2] - 1.0) / 13.0
    t = x[:, 3] / 60.0
    ks = 0.3 + 2.3 * np.exp(-2.2 * t * (0.4 + 0.6 * w)) * (1.0 - 0.3 * temp)
    lightness = 8.0 + 14.0 * (1.0 - np.exp(-2.0 * t)) * (0.5 + 0.5 * w) * (0.7 + 0.3 * temp)
    a = -18.0 - 18.0 * (1.0 - np.exp(-1.5 * t)) * (0.6 + 0.4 * ph)
    b = -38.0 - 33.0 * (1.0 - np.exp(-1.8 * t)) * (0.5 + 0.5 * w)
    return np.column_stack([ks, lightness, a, b])


register_phantom(ozonation_schema().variable_names, ozonation_schema().criteria,
                 ozonation_phantom)


def grid_points(schema: ProcessSchema) -> np.ndarray:
    """Every grid point in C order (last variable varies fastest)."""
    axes = [v.grid() for v in schema.variables]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([g.ravel() for g in mesh])


def default_noise(schema: ProcessSchema, fraction: float = 0.02) -> np.ndarray:
    """``fraction`` of each phantom output's range over the full grid."""
    y = phantom_for(schema)(grid_points(schema))
    return fraction * np.ptp(y, axis=0)


def synth_generate(schema: ProcessSchema, count: int, noise_sigma=None,
                   seed: int = 0) -> ExperienceDataset:
    """Sample ``count`` grid points uniformly and evaluate the phantom plus noise.

    ``noise_sigma`` is one standard deviation per criterion; ``None`` selects
    :func:`default_noise`.
    """
    if count < 1:
        raise DataError("count must be >= 1")
    fn = phantom_for(schema)
    sigma = default_noise(schema) if noise_sigma is None else np.asarray(noise_sigma, float)
    sigma = np.broadcast_to(sigma, (schema.n_criteria,))
    if (sigma < 0).any() or not np.isfinite(sigma).all():
        raise DataError("noise sigma must be finite and >= 0")
    rng = np.random.default_rng(seed)
    idx = np.column_stack([rng.integers(0, v.n_points, size=count) for v in schema.variables])
    x = schema.lower + idx * schema.steps
    y = fn(x) + rng.standard_normal((count, schema.n_criteria)) * sigma
    return ExperienceDataset(schema, x, y)
