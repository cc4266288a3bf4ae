"""
Expected processes and their Linear Walk / Random Walk realizations.

Positions are indexed i = 1..T. A model with change points C = {c_1..c_k}
moves with drift mu_j = r_j (cos theta_j, sin theta_j) on segment j
(c_{j-1} < i <= c_j, with c_0 = 0 and c_{k+1} = T). Segments are chained
so that the expected process is continuous: consecutive points always differ
by the drift of the segment the later point belongs to.
"""
from __future__ import annotations
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, List, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .config import ModelKind

logger = logging.getLogger(__name__)

class ModelSpec(BaseModel):
  model_config = ConfigDict(frozen=True)

  kind: ModelKind = "lw"
  thetas: List[float]
  step_lengths: List[float]
  b1: Tuple[float, float] = (0.0, 0.0)
  sigma2: float
  change_points: List[int] = Field(default_factory=list)
  horizon: int

  @model_validator(mode="after")
  def _check(self) -> "ModelSpec":
    n_seg = len(self.change_points) + 1
    if len(self.thetas) != n_seg or len(self.step_lengths) != n_seg:
      raise ValueError(
        f"need {n_seg} thetas and step lengths for {len(self.change_points)} change points, "
        f"got {len(self.thetas)} and {len(self.step_lengths)}")
    if any(not math.isfinite(t) for t in self.thetas):
      raise ValueError("thetas must be finite")
    if any(not (r > 0 and math.isfinite(r)) for r in self.step_lengths):
      raise ValueError(f"step lengths must be positive, got {self.step_lengths}")
    if not (self.sigma2 > 0 and math.isfinite(self.sigma2)):
      raise ValueError(f"sigma2 must be positive, got {self.sigma2}")
    if self.horizon < 1:
      raise ValueError(f"horizon must be >= 1, got {self.horizon}")
    prev = 0
    for c in self.change_points:
      if c <= prev:
        raise ValueError(f"change points must be strictly increasing and >= 1, got {self.change_points}")
      prev = c
    if self.change_points and self.change_points[-1] > self.horizon - 1:
      raise ValueError(f"change points must lie in [1, T-1] with T={self.horizon}")
    for j in range(1, n_seg):
      same_dir = abs(math.remainder(self.thetas[j] - self.thetas[j - 1], 2 * math.pi)) < 1e-12
      if same_dir and self.step_lengths[j] == self.step_lengths[j - 1]:
        raise ValueError(f"segments {j} and {j + 1} have identical direction and step length")
    return self

  @property
  def drifts(self) -> np.ndarray:
    th = np.asarray(self.thetas, dtype=float)
    r = np.asarray(self.step_lengths, dtype=float)
    return np.column_stack([r * np.cos(th), r * np.sin(th)])

  @property
  def boundaries(self) -> List[int]:
    """Segment boundaries c_0 = 0, c_1, ..., c_k, c_{k+1} = T."""
    return [0, *self.change_points, self.horizon]

@dataclass
class Track:
  id: str
  t: np.ndarray
  xy: np.ndarray

  def __post_init__(self):
    self.t = np.asarray(self.t, dtype=np.int64).reshape(-1)
    self.xy = np.asarray(self.xy, dtype=float).reshape(-1, 2)
    if len(self.t) < 1:
      raise ValueError(f"track {self.id!r} is empty")
    if len(self.t) != len(self.xy):
      raise ValueError(f"track {self.id!r}: {len(self.t)} time stamps but {len(self.xy)} positions")
    if len(self.t) > 1 and not np.all(np.diff(self.t) == 1):
      bad = int(np.flatnonzero(np.diff(self.t) != 1)[0])
      raise ValueError(f"track {self.id!r}: time stamps jump from {self.t[bad]} to {self.t[bad + 1]}")
    if not np.all(np.isfinite(self.xy)):
      raise ValueError(f"track {self.id!r} has non-finite coordinates")

  @classmethod
  def from_positions(cls, id: str, positions: Iterable[Tuple[int, float, float]]) -> "Track":
    rows = list(positions)
    t = [int(p[0]) for p in rows]
    xy = [(float(p[1]), float(p[2])) for p in rows]
    return cls(id=id, t=np.asarray(t), xy=np.asarray(xy))

  def __len__(self) -> int:
    return len(self.t)

  @property
  def x(self) -> np.ndarray:
    return self.xy[:, 0]

  @property
  def y(self) -> np.ndarray:
    return self.xy[:, 1]

  @property
  def positions(self) -> List[Tuple[int, float, float]]:
    return [(int(t), float(x), float(y)) for t, (x, y) in zip(self.t, self.xy)]

  def slice(self, start: int, stop: int) -> "Track":
    return Track(id=self.id, t=self.t[start:stop], xy=self.xy[start:stop])

  def time_of(self, index: int) -> int:
    """Time stamp of the 1-based position index."""
    return int(self.t[0]) + int(index) - 1

@dataclass(frozen=True)
class SeededRng:
  """
  Named random stream. Streams are derived with numpy's SeedSequence, so an
  identical (master_seed, stream_id, path) always reproduces the same
  numbers and distinct keys give independent streams.
  """
  master_seed: int
  stream_id: int = 0
  path: Tuple[int, ...] = field(default_factory=tuple)

  def __post_init__(self):
    if not 0 <= int(self.master_seed) < 2**64:
      raise ValueError(f"master_seed must be an unsigned 64-bit integer, got {self.master_seed}")
    if self.stream_id < 0 or any(k < 0 for k in self.path):
      raise ValueError("stream ids must be non-negative")

  def child(self, k: int) -> "SeededRng":
    return SeededRng(self.master_seed, self.stream_id, (*self.path, int(k)))

  def generator(self) -> np.random.Generator:
    seq = np.random.SeedSequence(int(self.master_seed), spawn_key=(int(self.stream_id), *self.path))
    return np.random.Generator(np.random.PCG64(seq))

  def standard_normal(self, shape) -> np.ndarray:
    return self.generator().standard_normal(shape)

def _expected_xy(spec: ModelSpec) -> np.ndarray:
  mus = spec.drifts
  bounds = spec.boundaries
  out = np.empty((spec.horizon, 2), dtype=float)
  b = np.asarray(spec.b1, dtype=float)
  for j in range(len(mus)):
    if j > 0:
      # b_j = (c_{j-1} - c_{j-2}) mu_{j-1} + b_{j-1}
      b = (bounds[j] - bounds[j - 1]) * mus[j - 1] + b
    lo, hi = bounds[j], bounds[j + 1]
    local = np.arange(1, hi - lo + 1, dtype=float)
    out[lo:hi] = b + local[:, None] * mus[j]
  return out

def expected_process(spec: ModelSpec) -> Track:
  return Track(id="expected", t=np.arange(1, spec.horizon + 1), xy=_expected_xy(spec))

def simulate(spec: ModelSpec, rng: SeededRng, track_id: str = "sim") -> Track:
  """
  Draw one realization. A (T+1, 2) standard-normal array Z_0..Z_T is taken
  from the stream; the LW adds sigma Z_i to e_i, the RW adds sigma times the
  partial sums of Z_1..Z_i.
  """
  z = rng.standard_normal((spec.horizon + 1, 2))
  sigma = math.sqrt(spec.sigma2)
  e = _expected_xy(spec)
  if spec.kind == "lw":
    xy = e + sigma * z[1:]
  else:
    xy = e + sigma * np.cumsum(z[1:], axis=0)
  return Track(id=track_id, t=np.arange(1, spec.horizon + 1), xy=xy)

def simulate_many(spec: ModelSpec, master_seed: int, n: int, prefix: str = "track",
                  first_stream: int = 0) -> List[Track]:
  """n tracks; track k draws from stream first_stream + k."""
  width = max(4, len(str(n)))
  return [
    simulate(spec, SeededRng(master_seed, first_stream + k), track_id=f"{prefix}_{k + 1:0{width}d}")
    for k in range(n)
  ]

def increments(track: Track) -> np.ndarray:
  """Y_k = X_k - X_{k-1} for k = 2..T, shape (T-1, 2)."""
  return np.diff(track.xy, axis=0)

def scale_spec(spec: ModelSpec, n: int) -> ModelSpec:
  """Stretch the time axis by n: T -> nT and c -> nc, parameters unchanged."""
  if n < 1:
    raise ValueError(f"scale factor must be >= 1, got {n}")
  return spec.model_copy(update={
    "horizon": spec.horizon * n,
    "change_points": [c * n for c in spec.change_points],
  })

def spec_from_degrees(kind: ModelKind, thetas_deg: Sequence[float], step_lengths: Sequence[float],
                      sigma2: float, horizon: int, change_points: Sequence[int] = (),
                      b1: Tuple[float, float] = (0.0, 0.0)) -> ModelSpec:
  return ModelSpec(
    kind=kind,
    thetas=[math.radians(t) for t in thetas_deg],
    step_lengths=list(step_lengths),
    b1=tuple(b1),
    sigma2=sigma2,
    change_points=list(change_points),
    horizon=horizon,
  )
