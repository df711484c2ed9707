import dataclasses
import math
import os
import re
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, get_args

import toml

from .constants import (
    DEFAULT_LINEAR_MAX_ITER,
    DEFAULT_LINEAR_TOL,
    DEFAULT_NEWTON_MAX,
    DEFAULT_NEWTON_TOL,
    MethodTypes,
    ProblemIds,
)
from .errors import ConfigError, InvalidArgumentError
from .fespace import FeSpace
from .mesh import make_uniform_mesh
from .msolve import SolverConfig
from .problems import ProblemSpec, get_problem
from .theta import ThetaScheme

Divisions = int | list[int]


def parse_step(value: Any, name: str = "dt") -> float:
    """Accept a positive number or a fraction string such as "1/25"."""
    if isinstance(value, bool):
        raise ConfigError("expected a number", field=name)
    if isinstance(value, str):
        try:
            value = Fraction(value.replace(" ", ""))
        except (ValueError, ZeroDivisionError) as e:
            raise ConfigError(f"cannot parse '{value}' as a number or fraction", field=name) from e
    if not isinstance(value, int | float | Fraction):
        raise ConfigError(f"expected a number, got {type(value).__name__}", field=name)
    result = float(value)
    if not (math.isfinite(result) and result > 0):
        raise ConfigError(f"must be positive, got {result}", field=name)
    return result


def _check_number(value: Any, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, int | float):
        raise ConfigError(f"expected a number, got {value!r}", field=name)
    return float(value)


def _check_divisions(value: Any, name: str, dim: int) -> tuple[int, ...]:
    if isinstance(value, int) and not isinstance(value, bool):
        value = [value] * dim
    if not isinstance(value, list | tuple) or not all(isinstance(v, int) and not isinstance(v, bool) for v in value):
        raise ConfigError(f"expected an integer or a list of integers, got {value!r}", field=name)
    if len(value) != dim:
        raise ConfigError(f"expected {dim} division counts, got {len(value)}", field=name)
    if any(v < 1 for v in value):
        raise ConfigError(f"divisions must be at least 1, got {list(value)}", field=name)
    return tuple(value)


@dataclass
class ExperimentConfig:
    """
    One experiment: problem, time grid, method, meshes and solver tolerances.

    Optionally a reference run (for problems without an exact solution) and snapshot times.
    """

    problem: ProblemIds
    gamma: float
    theta: float
    dt: float | str
    fine_div: Divisions
    method: MethodTypes = "mfe"
    T: float | None = None
    coarse_div: Divisions | None = None
    newton_tol: float = DEFAULT_NEWTON_TOL
    newton_max: int = DEFAULT_NEWTON_MAX
    linear_tol: float = DEFAULT_LINEAR_TOL
    linear_max_iter: int = DEFAULT_LINEAR_MAX_ITER
    output: str = "results"
    reference_fine_div: Divisions | None = None
    reference_coarse_div: Divisions | None = None
    reference_dt: float | str | None = None
    reference_method: MethodTypes | None = None
    snapshot_times: list[float] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.problem not in get_args(ProblemIds):
            raise ConfigError(f"unknown problem '{self.problem}', expected one of {get_args(ProblemIds)}", "problem")
        if self.method not in get_args(MethodTypes):
            raise ConfigError(f"unknown method '{self.method}', expected one of {get_args(MethodTypes)}", "method")
        self.gamma = _check_number(self.gamma, "gamma")
        self.theta = _check_number(self.theta, "theta")
        self.dt = parse_step(self.dt, "dt")
        if not self.gamma > 0:
            raise ConfigError(f"must be positive, got {self.gamma}", "gamma")
        if not 0.0 <= self.theta <= 0.5:
            raise ConfigError(f"must lie in [0, 1/2], got {self.theta}", "theta")

        problem = self.problem_spec()
        if self.T is None:
            self.T = problem.final_time
        self.T = _check_number(self.T, "T")
        try:
            ThetaScheme.from_final_time(self.theta, self.dt, self.T)
        except InvalidArgumentError as e:
            raise ConfigError(f"T / dt must be a positive integer number of steps ({e})", "dt") from e

        self.fine_div = list(_check_divisions(self.fine_div, "fine_div", problem.dim))
        if self.method == "tgmfe" and self.coarse_div is None:
            raise ConfigError("required for method 'tgmfe'", "coarse_div")
        if self.coarse_div is not None:
            self.coarse_div = list(_check_divisions(self.coarse_div, "coarse_div", problem.dim))

        for name in ("newton_tol", "linear_tol"):
            if not _check_number(getattr(self, name), name) > 0:
                raise ConfigError(f"must be positive, got {getattr(self, name)}", name)
        for name in ("newton_max", "linear_max_iter"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < 1:
                raise ConfigError(f"expected a positive integer, got {value!r}", name)

        self._validate_reference(problem.dim)
        if not isinstance(self.snapshot_times, list):
            raise ConfigError("expected a list of times", "snapshot_times")
        self.snapshot_times = [_check_number(t, "snapshot_times") for t in self.snapshot_times]
        if any(not 0.0 <= t <= self.T for t in self.snapshot_times):
            raise ConfigError(f"times must lie in [0, {self.T}]", "snapshot_times")

    def _validate_reference(self, dim: int) -> None:
        reference_keys = ("reference_coarse_div", "reference_dt", "reference_method")
        if self.reference_fine_div is None:
            for name in reference_keys:
                if getattr(self, name) is not None:
                    raise ConfigError("requires reference_fine_div", name)
            return
        self.reference_fine_div = list(_check_divisions(self.reference_fine_div, "reference_fine_div", dim))
        if self.reference_dt is None:
            self.reference_dt = self.dt
        self.reference_dt = parse_step(self.reference_dt, "reference_dt")
        try:
            ThetaScheme.from_final_time(self.theta, self.reference_dt, float(self.T or 0.0))
        except InvalidArgumentError as e:
            raise ConfigError(f"T / reference_dt must be a positive integer ({e})", "reference_dt") from e
        if self.reference_method is None:
            self.reference_method = self.method
        if self.reference_method not in get_args(MethodTypes):
            raise ConfigError(f"unknown method '{self.reference_method}'", "reference_method")
        if self.reference_method == "tgmfe" and self.reference_coarse_div is None:
            raise ConfigError("required for a 'tgmfe' reference", "reference_coarse_div")
        if self.reference_coarse_div is not None:
            self.reference_coarse_div = list(_check_divisions(self.reference_coarse_div, "reference_coarse_div", dim))

    @property
    def has_reference(self) -> bool:
        return self.reference_fine_div is not None

    @property
    def time_step(self) -> float:
        return float(self.dt)

    @property
    def final_time(self) -> float:
        return float(self.T if self.T is not None else self.problem_spec().final_time)

    def problem_spec(self) -> ProblemSpec:
        return get_problem(self.problem, self.gamma)

    def scheme(self) -> ThetaScheme:
        return ThetaScheme.from_final_time(self.theta, self.time_step, self.final_time)

    def solver_config(self) -> SolverConfig:
        return SolverConfig(
            newton_tol=self.newton_tol,
            newton_max=self.newton_max,
            linear_tol=self.linear_tol,
            linear_max_iter=self.linear_max_iter,
        )

    def fine_space(self) -> FeSpace:
        return FeSpace(make_uniform_mesh(self.problem_spec().domain, self.fine_div))

    def coarse_space(self) -> FeSpace | None:
        if self.method != "tgmfe" or self.coarse_div is None:
            return None
        return FeSpace(make_uniform_mesh(self.problem_spec().domain, self.coarse_div))

    @property
    def h_hat(self) -> float:
        return self._edge_for(self.fine_div)

    @property
    def H_hat(self) -> float | None:
        if self.method != "tgmfe" or self.coarse_div is None:
            return None
        return self._edge_for(self.coarse_div)

    def _edge_for(self, divisions: Divisions) -> float:
        """Largest element edge for the given divisions of this problem's domain."""
        extent = self.problem_spec().domain.extent
        counts = [divisions] * len(extent) if isinstance(divisions, int) else divisions
        return max(length / n for length, n in zip(extent, counts, strict=True))

    def reference_config(self) -> "ExperimentConfig | None":
        """The reference run as a config of its own, without reference or snapshots."""
        if not self.has_reference:
            return None
        return dataclasses.replace(
            self,
            dt=self.reference_dt if self.reference_dt is not None else self.dt,
            fine_div=self.reference_fine_div if self.reference_fine_div is not None else self.fine_div,
            coarse_div=self.reference_coarse_div,
            method=self.reference_method or self.method,
            reference_fine_div=None,
            reference_coarse_div=None,
            reference_dt=None,
            reference_method=None,
            snapshot_times=[],
        )

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ExperimentConfig":
        """
        Create an ExperimentConfig from a dictionary.
        Keys that aren't valid parameters are ignored.
        """
        valid_keys = {f.name for f in dataclasses.fields(cls)}
        filtered_data = {k: v for k, v in data.items() if k in valid_keys}
        for f in dataclasses.fields(cls):
            required = f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING
            if required and f.name not in filtered_data:
                raise ConfigError("missing required key", field=f.name)
        return cls(**filtered_data)

    @classmethod
    def from_file(cls, path: str | os.PathLike) -> "ExperimentConfig":
        """
        Load a flat TOML config file. Unknown keys are rejected; errors report the key's line.

        Raises:
            ConfigError: Unreadable file, TOML syntax error, unknown key or invalid value.
        """
        try:
            text = Path(path).read_text()
        except OSError as e:
            raise ConfigError(f"cannot read config file {path}: {e}") from e
        try:
            data = toml.loads(text)
        except toml.TomlDecodeError as e:
            raise ConfigError(f"invalid TOML: {e.msg}", line=e.lineno) from e

        valid_keys = {f.name for f in dataclasses.fields(cls)}
        for key, value in data.items():
            if isinstance(value, dict):
                raise ConfigError("tables are not allowed, use flat key = value lines", key, _key_line(text, key))
            if key not in valid_keys:
                raise ConfigError("unknown key", key, _key_line(text, key))
        try:
            return cls.from_dict(data)
        except ConfigError as e:
            if e.field is None or e.line is not None:
                raise
            raise ConfigError(str(e).split(": ", 1)[-1], e.field, _key_line(text, e.field)) from e

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def to_toml(self) -> str:
        return toml.dumps({k: v for k, v in self.to_dict().items() if v is not None})


def _key_line(text: str, key: str) -> int | None:
    pattern = re.compile(rf"^\s*{re.escape(key)}\s*=")
    for number, line in enumerate(text.splitlines(), start=1):
        if pattern.match(line):
            return number
    return None
