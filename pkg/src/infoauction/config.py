import argparse
import json
import os
import sys
import tomllib
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional

import jmespath
from pydantic import BaseModel, Field, PrivateAttr, ValidationError, field_validator, model_validator

from .errors import ConfigurationError
from .log import Logger
from .types.cost import CostModel, CostVariant
from .types.grid import Distribution, TypeGrid, ValueGrid
from .types.mechanism import AuditCurve, MechanismConfig
from .types.subcommand import SubCommandChoices, SubCommands
from .utils import get_base_type, package_version, sha256_hex

logger = Logger()

OUT_DIR_ENV = "INFOAUCTION_OUT_DIR"


class RunOptions(BaseModel):
    """Settings of a single invocation that do not change the auction environment."""

    command: SubCommandChoices = Field(
        description="Pipeline stage to run",
        json_schema_extra={"argparse.positional": True, "argparse.choices": [c.command_name for c in SubCommands]},
    )
    config: Optional[Path] = Field(
        default=None,
        description="Configuration file (TOML when the suffix is .toml, JSON otherwise)",
        json_schema_extra={"argparse.flag": "--config"},
    )
    out_dir: Path = Field(
        default=Path("artifacts"),
        description=f"Artifact directory (environment: {OUT_DIR_ENV})",
        json_schema_extra={"config.path": "output.dir", "argparse.flag": "--out-dir"},
    )
    workers: int = Field(
        default=1,
        ge=1,
        description="Upper bound on worker threads",
        json_schema_extra={"config.path": "workers", "argparse.flag": "--workers"},
    )
    runs: int = Field(
        default=100_000,
        description="Number of simulated auctions",
        json_schema_extra={"config.path": "simulation.runs", "argparse.flag": "--runs"},
    )
    chunk_size: int = Field(
        default=4096,
        ge=1,
        description="Simulated auctions per work unit",
        json_schema_extra={"config.path": "simulation.chunk_size", "argparse.flag": "--chunk-size"},
    )
    retain: bool = Field(
        default=False,
        description="Write the full per-auction trace",
        json_schema_extra={"config.path": "simulation.retain", "argparse.flag": "--retain"},
    )
    lemma_trials: int = Field(
        default=20,
        ge=0,
        description="Seeded non-VCG mechanisms checked by the verify stage",
        json_schema_extra={"config.path": "verify.lemma_trials", "argparse.flag": "--lemma-trials"},
    )
    verbose: bool = Field(
        default=False,
        description="Stream debug logs to stderr",
        json_schema_extra={"argparse.flag": "--verbose"},
    )


class Config(RunOptions):
    """infoauction loads configuration from pyproject.toml, a configuration file and command line arguments."""

    seed: int = Field(
        default=0,
        description="Root seed of every random stream",
        json_schema_extra={"config.path": "seed", "argparse.flag": "--seed"},
    )
    n: int = Field(
        default=2,
        description="Number of bidders",
        json_schema_extra={"config.path": "bidders", "argparse.flag": "--bidders"},
    )
    a: float = Field(
        default=1.0,
        description="Lowest value",
        json_schema_extra={"config.path": "values.a", "argparse.flag": "--value-min"},
    )
    b: float = Field(
        default=2.0,
        description="Highest value",
        json_schema_extra={"config.path": "values.b", "argparse.flag": "--value-max"},
    )
    m: int = Field(
        default=4,
        description="Number of value grid intervals",
        json_schema_extra={"config.path": "values.m", "argparse.flag": "--value-intervals"},
    )
    r_grid: List[float] = Field(
        default=[0.0, 0.5, 1.0],
        description="Cost-scale grid",
        json_schema_extra={"config.path": "types.r.points", "argparse.flag": "--r-grid", "argparse.nargs": "+"},
    )
    r_distribution: Distribution = Field(
        default="uniform",
        description="Weights of the cost-scale grid",
        json_schema_extra={
            "config.path": "types.r.distribution",
            "argparse.flag": "--r-distribution",
            "argparse.choices": ["uniform", "beta", "custom"],
        },
    )
    r_beta: List[float] = Field(
        default=[2.0, 2.0],
        description="Beta shape parameters of the cost-scale weights",
        json_schema_extra={"config.path": "types.r.beta", "argparse.flag": "--r-beta", "argparse.nargs": 2},
    )
    r_weights: Optional[List[float]] = Field(
        default=None,
        description="Explicit cost-scale weights",
        json_schema_extra={"config.path": "types.r.weights", "argparse.flag": "--r-weights", "argparse.nargs": "+"},
    )
    s_grid: List[float] = Field(
        default=[0.0, 0.5, 1.0],
        description="Mean-value grid",
        json_schema_extra={"config.path": "types.s.points", "argparse.flag": "--s-grid", "argparse.nargs": "+"},
    )
    s_distribution: Distribution = Field(
        default="uniform",
        description="Weights of the mean-value grid",
        json_schema_extra={
            "config.path": "types.s.distribution",
            "argparse.flag": "--s-distribution",
            "argparse.choices": ["uniform", "beta", "custom"],
        },
    )
    s_beta: List[float] = Field(
        default=[2.0, 2.0],
        description="Beta shape parameters of the mean-value weights",
        json_schema_extra={"config.path": "types.s.beta", "argparse.flag": "--s-beta", "argparse.nargs": 2},
    )
    s_weights: Optional[List[float]] = Field(
        default=None,
        description="Explicit mean-value weights",
        json_schema_extra={"config.path": "types.s.weights", "argparse.flag": "--s-weights", "argparse.nargs": "+"},
    )
    kernel: Literal["power", "table"] = Field(
        default="power",
        description="Cost kernel family",
        json_schema_extra={
            "config.path": "cost.kernel",
            "argparse.flag": "--kernel",
            "argparse.choices": ["power", "table"],
        },
    )
    gamma: float = Field(
        default=2.0,
        description="Exponent of the power kernel",
        json_schema_extra={"config.path": "cost.gamma", "argparse.flag": "--gamma"},
    )
    scale: float = Field(
        default=1.0,
        description="Multiplier of the power kernel",
        json_schema_extra={"config.path": "cost.scale", "argparse.flag": "--scale"},
    )
    table_x: List[float] = Field(
        default=[],
        description="Breakpoints of the table kernel",
        json_schema_extra={"config.path": "cost.table.x", "argparse.flag": "--kernel-x", "argparse.nargs": "+"},
    )
    table_y: List[float] = Field(
        default=[],
        description="Values of the table kernel",
        json_schema_extra={"config.path": "cost.table.y", "argparse.flag": "--kernel-y", "argparse.nargs": "+"},
    )
    variant: CostVariant = Field(
        default=CostVariant.ANCHOR_AT_S,
        description="Cost anchor",
        json_schema_extra={
            "config.path": "cost.variant",
            "argparse.flag": "--variant",
            "argparse.choices": [v.value for v in CostVariant],
        },
    )
    mean_tol: float = Field(
        default=1e-9,
        description="Mean-constraint tolerance",
        json_schema_extra={"config.path": "solver.mean_tol", "argparse.flag": "--mean-tol"},
    )
    solver_tol: float = Field(
        default=1e-10,
        description="Equilibrium tolerance",
        json_schema_extra={"config.path": "solver.tol", "argparse.flag": "--solver-tol"},
    )
    max_iters: int = Field(
        default=500,
        description="Best-response sweeps before giving up",
        json_schema_extra={"config.path": "solver.max_iters", "argparse.flag": "--max-iters"},
    )
    fee_tol: float = Field(
        default=1e-8,
        description="Fee feasibility tolerance",
        json_schema_extra={"config.path": "fees.tol", "argparse.flag": "--fee-tol"},
    )
    dominance_trials: int = Field(
        default=100,
        description="Random feasible fee schedules compared with the chain-closure fee",
        json_schema_extra={"config.path": "fees.dominance_trials", "argparse.flag": "--dominance-trials"},
    )
    competitor_limit: int = Field(
        default=20_000,
        description="Largest number of competitor experiment maps",
        json_schema_extra={"config.path": "verify.competitor_limit", "argparse.flag": "--competitor-limit"},
    )
    punishment: List[float] = Field(
        default=[-1.0],
        description="Punishment P_i <= 0 per bidder, one value is broadcast",
        json_schema_extra={"config.path": "audit.punishment", "argparse.flag": "--punishment", "argparse.nargs": "+"},
    )
    audit_experiment_q: List[float] = Field(
        default=[0.0, 1.0],
        description="Probabilities of the experiment audit cost curve",
        json_schema_extra={"config.path": "audit.experiment_curve.q"},
    )
    audit_experiment_cost: List[float] = Field(
        default=[0.0, 0.1],
        description="Costs of the experiment audit cost curve",
        json_schema_extra={"config.path": "audit.experiment_curve.cost"},
    )
    audit_cost_q: List[float] = Field(
        default=[0.0, 1.0],
        description="Probabilities of the cost audit cost curve",
        json_schema_extra={"config.path": "audit.cost_curve.q"},
    )
    audit_cost_cost: List[float] = Field(
        default=[0.0, 0.1],
        description="Costs of the cost audit cost curve",
        json_schema_extra={"config.path": "audit.cost_curve.cost"},
    )

    _mechanism: Optional[MechanismConfig] = PrivateAttr(default=None)

    @field_validator("n")
    @classmethod
    def _check_bidders(cls, value: int) -> int:
        if value < 2:
            raise ValueError(f"n ≥ 2 required, got {value}")
        return value

    @field_validator("r_grid", "s_grid")
    @classmethod
    def _check_end_points(cls, value: List[float]) -> List[float]:
        if 0.0 not in value or 1.0 not in value:
            raise ValueError("grid must contain 0.0 and 1.0 (fee bound at r-bar = 1, s-grid completeness)")
        return value

    @model_validator(mode="after")
    def _build_mechanism(self) -> "Config":
        try:
            grid = ValueGrid(a=self.a, b=self.b, m=self.m)
            self._mechanism = MechanismConfig(
                n=self.n,
                value_grid=grid,
                type_grid=TypeGrid.build(
                    self.r_grid,
                    self.s_grid,
                    self.r_distribution,
                    self.s_distribution,
                    self.r_beta,
                    self.s_beta,
                    self.r_weights,
                    self.s_weights,
                ),
                cost_model=CostModel(
                    grid=grid,
                    kernel=self.kernel,
                    gamma=self.gamma,
                    scale=self.scale,
                    table_x=tuple(self.table_x),
                    table_y=tuple(self.table_y),
                    variant=self.variant,
                ),
                mean_tol=self.mean_tol,
                solver_tol=self.solver_tol,
                fee_tol=self.fee_tol,
                max_iters=self.max_iters,
                seed=self.seed,
                punishment=tuple(self.punishment),
                audit_experiment_curve=AuditCurve(
                    q=tuple(self.audit_experiment_q), cost=tuple(self.audit_experiment_cost)
                ),
                audit_cost_curve=AuditCurve(q=tuple(self.audit_cost_q), cost=tuple(self.audit_cost_cost)),
                dominance_trials=self.dominance_trials,
                competitor_limit=self.competitor_limit,
            )
        except ValidationError as exc:
            reasons = "; ".join(
                f"{'.'.join(str(part) for part in err.get('loc', ())) or 'value'}: {err.get('msg', '')}"
                for err in exc.errors()
            )
            raise ValueError(reasons) from None
        return self

    @property
    def mechanism(self) -> MechanismConfig:
        """The validated auction environment."""
        assert self._mechanism is not None
        return self._mechanism

    @property
    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON of the environment."""
        return sha256_hex(self.mechanism.model_dump(mode="json"))

    @property
    def subcommand(self) -> SubCommands:
        return SubCommands.from_name(self.command)

    @classmethod
    def _schema(cls, name: str) -> Dict[str, Any]:
        extra = cls.model_fields[name].json_schema_extra
        return extra if isinstance(extra, dict) else {}

    @classmethod
    def source_cli_args(cls, args: List[str]) -> Dict[str, Any]:
        """Parse command line arguments, every field gets a flag generated from its schema."""
        parser = argparse.ArgumentParser(
            prog="infoauction",
            description="infoauction {version} configuration".format(version=package_version("infoauction")),
        )
        for name, field in cls.model_fields.items():
            schema = cls._schema(name)
            choices = schema.get("argparse.choices", None)
            nargs = schema.get("argparse.nargs", None)
            config_field = schema.get("config.path", None)
            base_type = get_base_type(field.annotation)
            help_text = (
                (field.description or "") + f' (overrides configuration setting: "{config_field}")'
                if config_field
                else (field.description or "")
            )

            if schema.get("argparse.positional"):
                parser.add_argument(name, help=help_text, choices=choices)
                continue

            arg_kwargs: Dict[str, Any] = {"help": help_text, "default": None, "nargs": nargs, "choices": choices}
            if base_type is bool:
                arg_kwargs.pop("nargs", None)
                arg_kwargs.pop("choices", None)
                arg_kwargs["action"] = "store_true"
            elif isinstance(base_type, type) and issubclass(base_type, (int, float, str, Path)):
                arg_kwargs["type"] = base_type

            parser.add_argument(
                schema.get("argparse.flag", f"--{name.replace('_', '-')}"),
                dest=name,
                **{k: v for k, v in arg_kwargs.items() if v is not None},
            )

        parsed_args = parser.parse_args(args)
        field_values = {k: v for k, v in vars(parsed_args).items() if v is not None}
        logger.debug("Parsed CLI args", extra={"context": "Config.source_cli_args", "data": field_values})
        return field_values

    @classmethod
    def source_document(cls, document: Dict[str, Any], origin: str) -> Dict[str, Any]:
        """Look up every field in a nested configuration document with its JMESPath query."""
        field_values: Dict[str, Any] = {}
        for name in cls.model_fields:
            query = cls._schema(name).get("config.path", None)
            if query is None:
                continue
            value = jmespath.search(query, document)
            logger.debug(
                "JMESPath query result",
                extra={
                    "context": "Config.source_document",
                    "origin": origin,
                    "field": name,
                    "query": query,
                    "value": value,
                },
            )
            if value is not None:
                field_values[name] = value
        return field_values

    @classmethod
    def source_pyproject_toml(cls, file_path: Path) -> Dict[str, Any]:
        """Load the [tool.infoauction] table of pyproject.toml."""
        if not file_path.exists() or not file_path.is_file():
            return {}

        pyproject_data = tomllib.loads(file_path.read_text())
        document = jmespath.search("tool.infoauction", pyproject_data) or {}
        return cls.source_document(document, str(file_path))

    @classmethod
    def source_config_file(cls, file_path: Path) -> Dict[str, Any]:
        """Load a TOML or JSON configuration file."""
        try:
            text = file_path.read_text()
            document = tomllib.loads(text) if file_path.suffix == ".toml" else json.loads(text)
        except (OSError, ValueError) as exc:
            raise ConfigurationError(f"cannot read configuration file {file_path}: {exc}") from exc
        return cls.source_document(document, str(file_path))

    @classmethod
    def build(cls, args: List[str] | None) -> "Config":
        """Validate and create a Config instance from source data."""
        cli_data = cls.source_cli_args(args if args is not None else sys.argv[1:])
        config_data = cls.source_pyproject_toml(Path("pyproject.toml"))
        if cli_data.get("config") is not None:
            config_data.update(cls.source_config_file(Path(cli_data["config"])))
        if os.environ.get(OUT_DIR_ENV):
            config_data["out_dir"] = os.environ[OUT_DIR_ENV]
        config_data.update(cli_data)
        logger.info("Validated config data", extra={"context": "Config.build", "data": config_data})
        return cls.model_validate(config_data)

    @classmethod
    def config_path_of(cls, name: str) -> Optional[str]:
        """JMESPath query of a field, used to point error messages at the configuration file."""
        return cls._schema(name).get("config.path", None) if name in cls.model_fields else None
