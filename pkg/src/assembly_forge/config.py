"""Pipeline configuration: every tunable knob in one serializable place."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field


@dataclass
class NoiseConfig:
    downsample: int = 2
    amplitude: float = 0.002
    scale: float = 8.0


@dataclass
class PipelineConfig:
    # lattice planning
    lattice_step: float | None = None  # None: half the smallest design clearance
    lattice_margin: float = 0.01
    trials: int = 5
    verify_seed: int = 0
    # grasp generation
    range_steps: int = 5
    opening_padding: float = 0.004
    # regrasp
    seed_pose_yaws: int = 4
    repose_steps: int = 16
    hover_offset: float = 0.03
    # rasters
    heightmap_cell: float = 0.002
    pose_cell: float = 0.001
    pose_fill: tuple = (0.25, 0.40)
    pose_fill_target: float = 0.33
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    # execution
    retry_limit: int = 3
    pickup_camera_height: float = 0.70
    transit_height: float = 0.45
    pile_spacing: float = 0.12
    schema_version: int = 1

    def to_json(self) -> dict:
        d = asdict(self)
        d["pose_fill"] = list(self.pose_fill)
        return d

    @staticmethod
    def from_json(d: dict) -> "PipelineConfig":
        d = dict(d)
        noise = d.pop("noise", None)
        fill = d.pop("pose_fill", None)
        cfg = PipelineConfig(**d)
        if noise is not None:
            cfg.noise = NoiseConfig(**noise)
        if fill is not None:
            cfg.pose_fill = tuple(fill)
        return cfg
