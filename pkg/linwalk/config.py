from __future__ import annotations
import logging
from pathlib import Path
from typing import List, Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

logger = logging.getLogger(__name__)

ModelKind = Literal["lw", "rw"]
# "studentized": G of standard null tracks with estimated window variances (exact
# for Gaussian noise at every h); "gamma": the known-variance limit process.
NullKind = Literal["studentized", "gamma"]

# Recommended minimum windows: h=30 for the LW, h=50 for the RW.
DEFAULT_WINDOWS = {"lw": [30], "rw": [50]}

class DetectionCfg(BaseModel):
  model: ModelKind = "lw"
  # None means the model's recommended default window
  windows: Optional[List[int]] = None
  alpha: float = 0.05
  sims: int = 1000
  seed: int = 0
  null_kind: NullKind = "studentized"
  classify: bool = True

  def resolved_windows(self) -> List[int]:
    return list(self.windows) if self.windows else list(DEFAULT_WINDOWS[self.model])

class SimulationCfg(BaseModel):
  n_tracks: int = 1
  track_prefix: str = "track"

class LeafCfg(BaseModel):
  # A series "exceeds" when its standardized deviation is above scale_factor x its robust scale
  scale_factor: float = 3.0
  # When both exceed, the weaker must reach this fraction of the stronger to be labelled "both"
  dominance_ratio: float = 1.0 / 3.0
  svg_width: int = 520
  svg_height: int = 520

class OutputCfg(BaseModel):
  root_dir: str = "./output"
  write_checksums: bool = True

class RuntimeCfg(BaseModel):
  # Capped by the LINWALK_THREADS environment variable
  threads: Optional[int] = None

class AppCfg(BaseModel):
  detection: DetectionCfg = Field(default_factory=DetectionCfg)
  simulation: SimulationCfg = Field(default_factory=SimulationCfg)
  leaf: LeafCfg = Field(default_factory=LeafCfg)
  output: OutputCfg = Field(default_factory=OutputCfg)
  runtime: RuntimeCfg = Field(default_factory=RuntimeCfg)

class NullSimConfig(BaseModel):
  """Parameters of the Monte-Carlo null simulation behind the rejection threshold Q."""
  model_config = ConfigDict(frozen=True)

  T: int
  windows: List[int]
  sims: int = 1000
  alpha: float = 0.05
  seed: int = 0
  null_kind: NullKind = "studentized"

  @field_validator("windows")
  @classmethod
  def _sorted_unique(cls, v: List[int]) -> List[int]:
    if not v:
      raise ValueError("at least one window is required")
    return sorted(set(int(h) for h in v))

  @field_validator("alpha")
  @classmethod
  def _alpha_open_interval(cls, v: float) -> float:
    if not 0.0 < v < 1.0:
      raise ValueError(f"alpha must lie in (0, 1), got {v}")
    return v

  @field_validator("seed")
  @classmethod
  def _seed_range(cls, v: int) -> int:
    if not 0 <= v < 2**64:
      raise ValueError(f"seed must be an unsigned 64-bit integer, got {v}")
    return v

  @model_validator(mode="after")
  def _check(self) -> "NullSimConfig":
    if min(self.windows) < 3:
      raise ValueError(f"smallest window must be >= 3, got {min(self.windows)}")
    if 2 * max(self.windows) >= self.T:
      raise ValueError(f"largest window h={max(self.windows)} needs T > {2 * max(self.windows)}, got T={self.T}")
    if self.sims < 1:
      raise ValueError(f"sims must be >= 1, got {self.sims}")
    return self

def load_config(path: Optional[str | Path]) -> AppCfg:
  if path is None:
    return AppCfg()
  with open(path, "r", encoding="utf-8") as f:
    data = yaml.safe_load(f)
  logger.debug("loaded config from %s", path)
  return AppCfg.model_validate(data or {})
