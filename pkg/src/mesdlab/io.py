"""Run configuration and file formats: JSON config, counts dataset, CSV tables.

Every file written here embeds the fully resolved run configuration and a
format-version field, so outputs are self-describing and reruns can be
compared byte for byte.  CSV metadata lives in leading ``#`` comment lines;
the column headers below them are a frozen contract for plotting scripts.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import GridPoint, default_grid
from .errors import ConfigError
from .sim import CountTable, NoiseConfig

FORMAT_VERSION = 1

POINTS_HEADER = (
    "theta,alpha,c,eps,s,s_nc,s_q,ds_exp,ds_theory,"
    "std_c,std_eps,std_s,std_ds,verdict"
)
GRID_HEADER = "theta,alpha,c,eps,s,s_nc,s_q,ds_theory"

_TOP_KEYS = {"grid", "noise", "bootstrap", "k_sigma", "out_dir"}
_NOISE_KEYS = {f.name for f in dataclasses.fields(NoiseConfig)}


@dataclass(frozen=True)
class RunConfig:
    """Validated settings for one simulation / analysis run."""

    grid: str | tuple[tuple[float, float], ...] = "default"
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    bootstrap: int = 100
    k_sigma: float = 3.0
    out_dir: str = "out"

    def __post_init__(self):
        if self.grid != "default":
            if not isinstance(self.grid, tuple) or not self.grid:
                raise ConfigError("grid must be 'default' or a nonempty point list")
            # constructing the points validates the scan constraint early
            for theta, alpha in self.grid:
                GridPoint(theta, alpha)
        if self.bootstrap < 2:
            raise ConfigError(f"bootstrap must be >= 2, got {self.bootstrap}")
        if self.k_sigma <= 0.0:
            raise ConfigError(f"k_sigma must be positive, got {self.k_sigma}")

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("config root must be a JSON object")
        unknown = set(data) - _TOP_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs = {}
        if "grid" in data:
            grid = data["grid"]
            if grid != "default":
                try:
                    grid = tuple((float(t), float(a)) for t, a in grid)
                except (TypeError, ValueError) as exc:
                    raise ConfigError(f"malformed grid entry: {exc}") from exc
            kwargs["grid"] = grid
        if "noise" in data:
            noise = data["noise"]
            if not isinstance(noise, dict):
                raise ConfigError("noise must be a JSON object")
            unknown = set(noise) - _NOISE_KEYS
            if unknown:
                raise ConfigError(f"unknown noise keys: {sorted(unknown)}")
            kwargs["noise"] = noise
        try:
            if "noise" in kwargs:
                kwargs["noise"] = NoiseConfig(**kwargs["noise"])
            if "bootstrap" in data:
                kwargs["bootstrap"] = int(data["bootstrap"])
            if "k_sigma" in data:
                kwargs["k_sigma"] = float(data["k_sigma"])
            if "out_dir" in data:
                kwargs["out_dir"] = str(data["out_dir"])
            return cls(**kwargs)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid config value: {exc}") from exc

    def to_dict(self) -> dict:
        # out_dir is runtime plumbing, deliberately left out: embedded
        # metadata must not depend on where the files happen to be written
        grid = self.grid if self.grid == "default" else [list(p) for p in self.grid]
        return {
            "grid": grid,
            "noise": dataclasses.asdict(self.noise),
            "bootstrap": self.bootstrap,
            "k_sigma": self.k_sigma,
        }

    def resolve_grid(self) -> list[GridPoint]:
        if self.grid == "default":
            return default_grid()
        return [GridPoint(t, a) for t, a in self.grid]

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


def load_config(path: str | Path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return RunConfig.from_dict(data)


def _config_line(config: RunConfig) -> str:
    return json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":"))


def fmt(value) -> str:
    """Shortest round-trip decimal form, shared by every table writer."""
    return repr(float(value))


def write_table(path: str | Path, header: str, rows, config: RunConfig) -> None:
    """CSV with ``#`` metadata lines; numeric cells already formatted."""
    lines = [
        f"# format_version: {FORMAT_VERSION}",
        f"# config: {_config_line(config)}",
        header,
    ]
    lines.extend(",".join(row) for row in rows)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_json(path: str | Path, payload: dict, config: RunConfig) -> None:
    body = {"format_version": FORMAT_VERSION, "config": config.to_dict()}
    body.update(payload)
    Path(path).write_text(
        json.dumps(body, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def save_counts(path: str | Path, tables: list[CountTable], config: RunConfig) -> None:
    records = []
    for index, table in enumerate(tables):
        records.append(
            {
                "point_index": index,
                "theta": table.point.theta,
                "alpha": table.point.alpha,
                "n_outcome1": table.n_outcome1.tolist(),
                "n_total": table.n_total.tolist(),
            }
        )
    write_json(path, {"counts": records}, config)


def load_counts(path: str | Path) -> tuple[list[CountTable], RunConfig]:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read counts {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"counts file {path} is not valid JSON: {exc}") from exc
    if data.get("format_version") != FORMAT_VERSION:
        raise ConfigError(
            f"counts file {path} has format_version {data.get('format_version')!r}, "
            f"expected {FORMAT_VERSION}"
        )
    config = RunConfig.from_dict(data["config"])
    tables = []
    for record in data["counts"]:
        tables.append(
            CountTable(
                point=GridPoint(record["theta"], record["alpha"]),
                config=config.noise,
                n_outcome1=np.asarray(record["n_outcome1"], dtype=float),
                n_total=np.asarray(record["n_total"], dtype=np.int64),
            )
        )
    return tables, config
