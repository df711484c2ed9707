"""Built-in benchmark table manifests."""

from dataclasses import dataclass
from typing import Any, Literal, cast

import toml

from .constants import DATA_PATH, MethodTypes
from .errors import InvalidArgumentError
from .experiment_params import ExperimentConfig, parse_step
from .problems import get_problem

TABLE_IDS = tuple(range(1, 10))


@dataclass(frozen=True)
class TableRow:
    dt: str
    H_hat: str
    h_hat: str


@dataclass(frozen=True)
class TableGroup:
    """One refinement sequence of a table: fixed method, theta and gamma."""

    method: MethodTypes
    theta: float
    gamma: float
    rows: tuple[TableRow, ...]


@dataclass(frozen=True)
class TableManifest:
    table_id: int
    title: str
    problem: str
    refine_by: Literal["h_hat", "dt"]
    groups: tuple[TableGroup, ...]
    reference: TableRow | None = None

    def configs(self, output: str = "results") -> list[list[ExperimentConfig]]:
        """One list of experiment configs per group, in table order."""
        domain = get_problem(self.problem, 1.0).domain
        sequences = []
        for group in self.groups:
            sequence = []
            for row in group.rows:
                data: dict[str, Any] = {
                    "problem": self.problem,
                    "gamma": group.gamma,
                    "theta": group.theta,
                    "dt": row.dt,
                    "method": group.method,
                    "fine_div": list(domain.divisions_for(parse_step(row.h_hat, "h_hat"))),
                    "output": output,
                }
                if group.method == "tgmfe":
                    data["coarse_div"] = list(domain.divisions_for(parse_step(row.H_hat, "H_hat")))
                if self.reference is not None:
                    data["reference_dt"] = self.reference.dt
                    data["reference_method"] = group.method
                    data["reference_fine_div"] = list(domain.divisions_for(parse_step(self.reference.h_hat, "h_hat")))
                    if group.method == "tgmfe":
                        data["reference_coarse_div"] = list(
                            domain.divisions_for(parse_step(self.reference.H_hat, "H_hat"))
                        )
                sequence.append(ExperimentConfig.from_dict(data))
            sequences.append(sequence)
        return sequences


def _as_list(value: Any, length: int) -> list[str]:
    if isinstance(value, list):
        if len(value) != length:
            raise InvalidArgumentError(f"Expected {length} values, got {len(value)}")
        return [str(v) for v in value]
    return [str(value)] * length


def _parse_rows(group: dict[str, Any]) -> tuple[TableRow, ...]:
    length = max((len(v) for v in (group["dt"], group["H_hat"], group["h_hat"]) if isinstance(v, list)), default=1)
    columns = [_as_list(group[key], length) for key in ("dt", "H_hat", "h_hat")]
    return tuple(TableRow(dt, coarse, fine) for dt, coarse, fine in zip(*columns, strict=True))


def load_manifest(table_id: int) -> TableManifest:
    """
    Load a table manifest from the packaged `tables.toml`.

    Raises:
        InvalidArgumentError: Unknown table id.
    """
    if table_id not in TABLE_IDS:
        raise InvalidArgumentError(f"Unknown table {table_id}, expected one of {TABLE_IDS}")
    with DATA_PATH.joinpath("tables.toml").open("r") as f:
        raw = toml.load(f)[f"table{table_id}"]

    groups = []
    for method in raw["methods"]:
        for group in raw["groups"]:
            rows = _parse_rows(group)
            for theta in group["theta"]:
                for gamma in group["gamma"]:
                    groups.append(TableGroup(cast(MethodTypes, method), float(theta), float(gamma), rows))

    reference = raw.get("reference")
    return TableManifest(
        table_id=table_id,
        title=raw["title"],
        problem=raw["problem"],
        refine_by=raw["refine_by"],
        groups=tuple(groups),
        reference=TableRow(reference["dt"], reference["H_hat"], reference["h_hat"]) if reference else None,
    )
