"""Artifact directory of the pipeline: JSON and CSV outputs plus a manifest tying them to a configuration."""

import json
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Tuple

import numpy as np
import pandas as pd

from .errors import ArtifactError
from .fees import FeeSchedule, GapTable
from .log import Logger
from .types.mechanism import MechanismConfig
from .types.profile import StrategyProfile
from .utils import canonical_json, package_version

logger = Logger()

MANIFEST = "manifest.json"
TRACKED_PACKAGES = ("infoauction", "numpy", "scipy", "pandas", "networkx", "pydantic", "jmespath")


def plot_frame(series: Mapping[str, Tuple[Iterable[float], Iterable[float]]]) -> pd.DataFrame:
    """Long-format frame (series, x, y) ready for plotting tools."""
    frames = [
        pd.DataFrame({"series": name, "x": np.asarray(x, dtype=float), "y": np.asarray(y, dtype=float)})
        for name, (x, y) in series.items()
    ]
    return pd.concat(frames, ignore_index=True)


class ArtifactStore:
    """Reads and writes the artifacts of one configuration below `root`."""

    def __init__(self, root: Path, config_hash: str, seed: int):
        self.root = Path(root)
        self.config_hash = config_hash
        self.seed = seed

    def path(self, name: str) -> Path:
        return self.root / name

    def write_json(self, name: str, data: Any) -> Path:
        target = self.path(name)
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(canonical_json(data), encoding="utf-8")
        logger.debug("Wrote artifact", extra={"context": "ArtifactStore.write_json", "path": str(target)})
        return target

    def write_text(self, name: str, text: str) -> Path:
        target = self.path(name)
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(text, encoding="utf-8")
        return target

    def write_frame(self, name: str, frame: pd.DataFrame) -> Path:
        target = self.path(name)
        target.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(target, index=False, lineterminator="\n")
        logger.debug(
            "Wrote artifact",
            extra={"context": "ArtifactStore.write_frame", "path": str(target), "rows": len(frame)},
        )
        return target

    def read_json(self, name: str) -> Any:
        return json.loads(self.path(name).read_text(encoding="utf-8"))

    def read_frame(self, name: str) -> pd.DataFrame:
        return pd.read_csv(self.path(name))

    def manifest(self) -> Dict[str, Any]:
        """Current manifest, or an empty one when the directory has none."""
        if not self.path(MANIFEST).is_file():
            return {"config_hash": self.config_hash, "seed": self.seed, "stages": {}}
        return self.read_json(MANIFEST)

    def require(self, stage: str) -> Dict[str, Any]:
        """Entry of an upstream stage, checked against this configuration.

        Raises:
            ArtifactError: If the stage never ran here, ran for another configuration, or lost an output.
        """
        entry = self.manifest().get("stages", {}).get(stage)
        if entry is None:
            raise ArtifactError(stage, f"has no artifacts in {self.root}")
        if entry.get("config_hash") != self.config_hash:
            raise ArtifactError(stage, "is stale (produced for another configuration)")
        missing = [name for name in entry.get("outputs", []) if not self.path(name).is_file()]
        if missing:
            raise ArtifactError(stage, f"is missing outputs {missing}")
        return entry

    def record(self, stage: str, outputs: List[Path], elapsed: float) -> Path:
        """Register a finished stage in the manifest; timings live nowhere else."""
        manifest = self.manifest()
        manifest.update(
            config_hash=self.config_hash,
            seed=self.seed,
            versions={name: package_version(name) for name in TRACKED_PACKAGES},
        )
        manifest.setdefault("stages", {})[stage] = {
            "config_hash": self.config_hash,
            "outputs": sorted(p.relative_to(self.root).as_posix() for p in outputs),
            "timings": {"wall_clock_s": round(elapsed, 6)},
        }
        logger.info(
            "Stage recorded",
            extra={"context": "ArtifactStore.record", "stage": stage, "outputs": len(outputs), "elapsed": elapsed},
        )
        return self.write_json(MANIFEST, manifest)

    def load_profile(self, cfg: MechanismConfig, name: str = "profile.csv") -> StrategyProfile:
        profile = StrategyProfile.from_frame(self.read_frame(name), cfg.value_grid, cfg.type_grid)
        return profile.validate(cfg.mean_tol)

    def load_fees(self, cfg: MechanismConfig, name: str = "fees.csv") -> FeeSchedule:
        frame = self.read_frame(name).sort_values("s")
        return FeeSchedule(cfg.type_grid, frame["fee"].to_numpy(dtype=float))

    def load_fees_rs(self, cfg: MechanismConfig, name: str = "fees_rs.csv") -> FeeSchedule:
        frame = self.read_frame(name).sort_values(["r", "s"])
        return FeeSchedule(cfg.type_grid, frame["fee"].to_numpy(dtype=float).reshape(cfg.type_grid.shape))

    def load_gap_table(self, cfg: MechanismConfig, name: str = "gap_table.json") -> GapTable:
        return GapTable.from_dict(self.read_json(name), cfg.type_grid)
