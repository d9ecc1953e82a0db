"""Plain-text run configuration: ``[section]`` headers with ``key = value`` lines.

Every key is optional; omitted keys keep their defaults and unknown sections or
keys are rejected. ``config_hash`` fingerprints the fully resolved values.
"""
from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .errors import InvalidConfig
from .force import PushConfig
from .geometry import CameraIntrinsics, KinematicChain
from .perception.masks import MaskNoise
from .perception.tracking import TrackerNoise
from .policy import PolicyConfig
from .servo import EyeInHand, ServoConfig
from .tower import TowerConfig, TowerPlacement


@dataclass(frozen=True)
class ArmConfig:
    qd_max: float = 0.5  # rad/s, every joint
    ee_camera_y: float = -0.035  # camera offset on the end-effector (m)
    ee_camera_z: float = 0.06
    fingertip: float = 0.15
    standoff: float = 0.01
    tower_x: float = 0.45  # tower base in the robot frame
    tower_y: float = 0.0
    tower_z: float = 0.15
    tower_yaw_deg: float = 45.0

    def chain(self) -> KinematicChain:
        return KinematicChain(qd_max=np.full(6, self.qd_max))

    def rig(self, K: CameraIntrinsics) -> EyeInHand:
        from .geometry import RigidPose
        return EyeInHand(RigidPose(np.eye(3), [0.0, self.ee_camera_y, self.ee_camera_z]),
                         self.fingertip, self.standoff, K)

    def placement(self) -> TowerPlacement:
        return TowerPlacement(self.tower_x, self.tower_y, self.tower_z, np.radians(self.tower_yaw_deg))


@dataclass(frozen=True)
class GameConfig:
    servo_mode: str = "surrogate"  # surrogate | full
    p_singularity: float = 0.03  # injected minor failures, per attempt
    p_tracking_loss: float = 0.09
    p_bad_pnp: float = 0.03
    align_sigma: float = 0.0006  # surrogate servo: per-axis contact offset (m)
    servo_time_mean: float = 26.6  # surrogate servo: convergence time (s)
    servo_time_std: float = 12.0
    max_attempts: int = 200
    max_consecutive_minor: int = 10

    def __post_init__(self):
        if self.servo_mode not in ("surrogate", "full"):
            raise InvalidConfig("game servo_mode must be surrogate or full")
        ps = (self.p_singularity, self.p_tracking_loss, self.p_bad_pnp)
        if min(ps) < 0 or sum(ps) >= 1:
            raise InvalidConfig("failure probabilities must be non-negative and sum below 1")
        if self.max_attempts < 1 or self.max_consecutive_minor < 1:
            raise InvalidConfig("attempt caps must be positive")


@dataclass(frozen=True)
class RunSection:
    experiment: str = "game"
    n_runs: int = 18
    trials_per_level: int = 21
    n_blocks: int = 15
    workers: int = 1


@dataclass(frozen=True)
class RunConfig:
    tower: TowerConfig = field(default_factory=TowerConfig)
    camera: CameraIntrinsics = field(default_factory=CameraIntrinsics)
    arm: ArmConfig = field(default_factory=ArmConfig)
    servo: ServoConfig = field(default_factory=ServoConfig)
    tracking: TrackerNoise = field(default_factory=TrackerNoise)
    force: PushConfig = field(default_factory=PushConfig)
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    game: GameConfig = field(default_factory=GameConfig)
    segmentation: MaskNoise = field(default_factory=lambda: MaskNoise(jitter_px=0.7, dropout=0.1))
    run: RunSection = field(default_factory=RunSection)

    def to_dict(self) -> dict:
        return {f.name: _plain(asdict(getattr(self, f.name))) for f in fields(self)}

    def hash(self) -> str:
        return config_hash(self)


SECTIONS = [f.name for f in fields(RunConfig)]


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _convert(raw: str, default, section: str, key: str):
    text = raw.strip()
    try:
        if isinstance(default, bool):
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if default is None:
            if text.lower() in ("", "none"):
                return None
            return float(text) if any(c in text for c in ".eE") else int(text)
        return text
    except ValueError:
        raise InvalidConfig(f"[{section}] {key}: cannot parse {raw!r}") from None


def _build(section: str, cls, values: dict):
    base = cls()
    known = {f.name: f for f in fields(cls) if f.init}
    kwargs = {}
    for key, raw in values.items():
        if key not in known:
            raise InvalidConfig(f"unknown key [{section}] {key}")
        kwargs[key] = _convert(raw, getattr(base, key), section, key)
    try:
        return replace(base, **kwargs)
    except (ValueError, TypeError) as e:
        if isinstance(e, InvalidConfig):
            raise
        raise InvalidConfig(f"[{section}] {e}") from None


def parse_config(text: str) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, strict=True)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise InvalidConfig(str(e)) from None
    defaults = RunConfig()
    parts = {}
    for section in cp.sections():
        if section not in SECTIONS:
            raise InvalidConfig(f"unknown section [{section}]")
        parts[section] = _build(section, type(getattr(defaults, section)), dict(cp.items(section)))
    return replace(defaults, **parts)


def load_config(path=None) -> RunConfig:
    if path is None:
        return RunConfig()
    return parse_config(Path(path).read_text())


def config_hash(config: RunConfig) -> str:
    canon = json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def format_config(config: RunConfig) -> str:
    """Render every value; ``parse_config(format_config(c)) == c``."""
    out = []
    for section, values in config.to_dict().items():
        out.append(f"[{section}]")
        for k, v in values.items():
            if isinstance(v, list):
                continue  # array-valued fields are not configurable
            out.append(f"{k} = {'none' if v is None else v}")
        out.append("")
    return "\n".join(out)
