"""Experiment configuration: one versioned JSON document, strictly validated."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any

from intentmerge.behavior import IdmParams, MobilParams
from intentmerge.dynamics import ControllerGains, SpeedLadder
from intentmerge.env import EnvConfig, RewardConfig, Spawn
from intentmerge.learn import TrainConfig
from intentmerge.world import LaneRef, RoadGeometry

SCHEMA_VERSION = 1
SCENARIOS = ("sharing_on", "sharing_off", "both")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class EvalConfig:
    seed: int = 12345
    episodes: int = 1


@dataclass(frozen=True)
class ExperimentConfig:
    env: EnvConfig = EnvConfig()
    train: TrainConfig = TrainConfig()
    eval: EvalConfig = EvalConfig()
    scenario: str = "both"
    output_dir: str = "runs"

    @property
    def seeds(self) -> tuple[int, ...]:
        return self.train.seeds

    @property
    def sharing_modes(self) -> tuple[bool, ...]:
        return {"sharing_on": (True,), "sharing_off": (False,), "both": (True, False)}[self.scenario]

    def validate(self) -> None:
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"scenario must be one of {SCENARIOS}")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be distinct")
        if self.eval.episodes < 1:
            raise ConfigError("eval.episodes must be positive")
        try:
            self.env.validate()
            self.train.validate()
        except ValueError as e:
            raise ConfigError(str(e)) from e


# --- decoding ---------------------------------------------------------------

def _keys(data: Any, allowed: set[str], where: str) -> dict:
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
    return data


def _scalar(value: Any, like: Any, where: str) -> Any:
    if isinstance(like, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false")
        return value
    if isinstance(like, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer")
        return value
    if isinstance(like, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number")
        return float(value)
    if isinstance(like, str):
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string")
        return value
    if isinstance(like, tuple):
        if not isinstance(value, list):
            raise ConfigError(f"{where}: expected a list")
        proto = like[0] if like else 0.0
        return tuple(_scalar(v, proto, f"{where}[{k}]") for k, v in enumerate(value))
    raise ConfigError(f"{where}: unsupported value")


def _flat(cls, data: Any, where: str):
    """Dataclass whose fields are scalars or tuples of scalars."""
    default = cls()
    names = {f.name for f in fields(cls)}
    data = _keys(data, names, where)
    kwargs = {k: _scalar(v, getattr(default, k), f"{where}.{k}") for k, v in data.items()}
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{where}: {e}") from e


def _spawn(data: Any, where: str) -> Spawn:
    data = _keys(data, {"lane", "x", "speed"}, where)
    missing = {"lane", "x", "speed"} - set(data)
    if missing:
        raise ConfigError(f"{where}: missing {', '.join(sorted(missing))}")
    try:
        lane = LaneRef.parse(_scalar(data["lane"], "", f"{where}.lane"))
    except ValueError as e:
        raise ConfigError(f"{where}.lane: {e}") from e
    return Spawn(lane, _scalar(data["x"], 0.0, f"{where}.x"),
                 _scalar(data["speed"], 0.0, f"{where}.speed"))


def _ladder(data: Any, where: str) -> SpeedLadder:
    try:
        return SpeedLadder(_scalar(data, (0.0,), where))
    except ValueError as e:
        raise ConfigError(f"{where}: {e}") from e


def _env(data: Any) -> EnvConfig:
    names = {f.name for f in fields(EnvConfig)}
    data = _keys(data, names, "env")
    default = EnvConfig()
    kw: dict[str, Any] = {}
    for k, v in data.items():
        where = f"env.{k}"
        if k == "geometry":
            kw[k] = _flat(RoadGeometry, v, where)
        elif k in ("ladder", "sender_ladder"):
            kw[k] = _ladder(v, where)
        elif k in ("merger_spawn", "sender_spawn"):
            kw[k] = _spawn(v, where)
        elif k == "human_spawns":
            if not isinstance(v, list):
                raise ConfigError(f"{where}: expected a list")
            kw[k] = tuple(_spawn(s, f"{where}[{i}]") for i, s in enumerate(v))
        elif k == "reward":
            kw[k] = _flat(RewardConfig, v, where)
        elif k == "gains":
            kw[k] = _flat(ControllerGains, v, where)
        elif k == "idm":
            kw[k] = _flat(IdmParams, v, where)
        elif k == "mobil":
            kw[k] = _flat(MobilParams, v, where)
        elif k == "triggers":
            v = _keys(v, set(default.triggers), where)
            trig = dict(default.triggers)
            trig.update({name: _scalar(xs, (0.0,), f"{where}.{name}") for name, xs in v.items()})
            kw[k] = trig
        else:
            kw[k] = _scalar(v, getattr(default, k), where)
    return EnvConfig(**kw)


def from_dict(data: Any) -> ExperimentConfig:
    data = _keys(data, {"version", "env", "train", "eval", "scenario", "output_dir"}, "config")
    if data.get("version") != SCHEMA_VERSION:
        raise ConfigError(f"config: version must be {SCHEMA_VERSION}")
    kw: dict[str, Any] = {}
    if "env" in data:
        kw["env"] = _env(data["env"])
    if "train" in data:
        kw["train"] = _flat(TrainConfig, data["train"], "train")
    if "eval" in data:
        kw["eval"] = _flat(EvalConfig, data["eval"], "eval")
    if "scenario" in data:
        kw["scenario"] = _scalar(data["scenario"], "", "scenario")
    if "output_dir" in data:
        kw["output_dir"] = _scalar(data["output_dir"], "", "output_dir")
    cfg = ExperimentConfig(**kw)
    cfg.validate()
    return cfg


def load(path: str | Path) -> ExperimentConfig:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})") from e
    return from_dict(data)


# --- encoding ---------------------------------------------------------------

def _plain(obj: Any) -> Any:
    if isinstance(obj, LaneRef):
        return str(obj)
    if isinstance(obj, SpeedLadder):
        return list(obj.speeds)
    if isinstance(obj, Spawn):
        return {"lane": str(obj.lane), "x": obj.x, "speed": obj.speed}
    if dataclasses.is_dataclass(obj):
        out = {f.name: _plain(getattr(obj, f.name)) for f in fields(obj)}
        if isinstance(obj, RoadGeometry):
            out = {k: out[k] for k in ("segment_lengths", "highway_lane_count", "lane_width")}
        return out
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def to_dict(cfg: ExperimentConfig) -> dict:
    return {"version": SCHEMA_VERSION, **_plain(cfg)}


def env_to_dict(env: EnvConfig) -> dict:
    return _plain(env)


def env_from_dict(data: Any) -> EnvConfig:
    return _env(data)


def dumps(cfg: ExperimentConfig) -> str:
    return json.dumps(to_dict(cfg), indent=2) + "\n"


def with_overrides(cfg: ExperimentConfig, *, seed: int | None = None,
                   sharing: bool | None = None) -> ExperimentConfig:
    """Apply CLI overrides on top of the file's values."""
    if seed is not None:
        cfg = dataclasses.replace(cfg, train=dataclasses.replace(cfg.train, seeds=(seed,)))
    if sharing is not None:
        cfg = dataclasses.replace(cfg, scenario="sharing_on" if sharing else "sharing_off",
                                  env=dataclasses.replace(cfg.env, sharing=sharing))
    cfg.validate()
    return cfg
