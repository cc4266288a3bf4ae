"""
Closed-form window estimators.

LW window fit over X_{i+1..i+h} (maximum likelihood with the unbiased
variance correction):

  mu_hat  = 6/(h^3-h) * sum_j (2j-h-1) X_{i+j}
  b_hat   = mean(X) - (i + (h+1)/2) mu_hat
  s2_hat  = 1/(2h-4) * sum_j ||X_{i+j} - (i+j) mu_hat - b_hat||^2

RW window fit over h increments: mu_hat is the increment mean and the
variance is pooled over both dimensions with denominator 2(h-1).
"""
from __future__ import annotations
import logging
import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .config import ModelKind
from .errors import EstimationError, InvalidWindowError, TrackTooShortError
from .model import ModelSpec, Track, increments

logger = logging.getLogger(__name__)

FSUM_THRESHOLD = 10_000

@dataclass(frozen=True)
class WindowEstimate:
  start_index: int
  width: int
  mu_hat: np.ndarray
  b_hat: np.ndarray
  sigma2_hat: float
  theta_hat: float
  r_hat: float

@dataclass(frozen=True)
class WeightScheme:
  """Integer weights of the LW drift and offset estimators for window (i, h)."""
  h: int
  i: int = 0

  def js(self) -> np.ndarray:
    return np.arange(1, self.h + 1, dtype=np.int64)

  def mu_weights(self) -> np.ndarray:
    j = self.js()
    return 2 * j - self.h - 1

  def b_weights(self) -> np.ndarray:
    h, i, j = self.h, self.i, self.js()
    return -6 * h * j - 12 * j * i - 6 * j + 4 * h * h + 6 * h * i + 6 * h + 6 * i + 2

  @property
  def norm(self) -> int:
    """h^3 - h."""
    return self.h ** 3 - self.h

def to_polar(mu) -> Tuple[float, float]:
  """(theta, r) of a planar drift; the zero vector maps to (0, 0)."""
  mx, my = float(mu[0]), float(mu[1])
  r = math.hypot(mx, my)
  if r == 0.0:
    return 0.0, 0.0
  return math.atan2(my, mx), r

def _check_lw_window(h: int) -> None:
  if h < 3:
    raise InvalidWindowError(h, 3, "LW window")

def _check_rw_window(h: int) -> None:
  if h < 2:
    raise InvalidWindowError(h, 2, "RW window")

def _wsum(w: np.ndarray, x: np.ndarray) -> float:
  if len(x) > FSUM_THRESHOLD:
    return math.fsum((w * x).tolist())
  return float(np.dot(w, x))

def lw_fit(positions, i: int, h: int) -> WindowEstimate:
  """Fit the LW window X_{i+1..i+h}; `positions` holds exactly those h points."""
  _check_lw_window(h)
  x = np.asarray(positions, dtype=float).reshape(-1, 2)
  if len(x) != h:
    raise ValueError(f"expected {h} positions, got {len(x)}")
  w = WeightScheme(h, i).mu_weights().astype(float)
  scale = 6.0 / (h ** 3 - h)
  mu = np.array([scale * _wsum(w, x[:, d]) for d in range(2)])
  if h > FSUM_THRESHOLD:
    mean = np.array([math.fsum(x[:, d].tolist()) / h for d in range(2)])
  else:
    mean = x.mean(axis=0)
  b = mean - (i + (h + 1) / 2.0) * mu
  tt = np.arange(i + 1, i + h + 1, dtype=float)
  resid = x - tt[:, None] * mu - b
  sse = math.fsum((resid ** 2).ravel().tolist()) if h > FSUM_THRESHOLD else float(np.sum(resid ** 2))
  s2 = sse / (2 * h - 4)
  theta, r = to_polar(mu)
  return WindowEstimate(i, h, mu, b, s2, theta, r)

def rw_fit(incs, h: int, start_index: int = 0) -> WindowEstimate:
  _check_rw_window(h)
  y = np.asarray(incs, dtype=float).reshape(-1, 2)
  if len(y) != h:
    raise ValueError(f"expected {h} increments, got {len(y)}")
  if h > FSUM_THRESHOLD:
    mu = np.array([math.fsum(y[:, d].tolist()) / h for d in range(2)])
  else:
    mu = y.mean(axis=0)
  s2 = float(np.sum((y - mu) ** 2)) / (2 * (h - 1))
  theta, r = to_polar(mu)
  return WindowEstimate(start_index, h, mu, np.zeros(2), s2, theta, r)

def paired_mu(positions, h: int) -> np.ndarray:
  """Mirror-pair form: 6/(h^3-h) * sum_{j<=h/2} (h-(2j-1)) (X_{h-j+1} - X_j)."""
  _check_lw_window(h)
  x = np.asarray(positions, dtype=float).reshape(-1, 2)
  acc = np.zeros(2)
  for j in range(1, h // 2 + 1):
    acc += (h - (2 * j - 1)) * (x[h - j] - x[j - 1])
  return 6.0 / (h ** 3 - h) * acc

@dataclass
class WindowFits:
  """Vectorized fits for every window start s = 0..n-1 (window covers items s+1..s+h)."""
  h: int
  mu: np.ndarray       # (n, 2)
  b: np.ndarray        # (n, 2)
  sigma2: np.ndarray   # (n,)

  def __len__(self) -> int:
    return len(self.sigma2)

def lw_window_fits(xy: np.ndarray, h: int) -> WindowFits:
  _check_lw_window(h)
  xy = np.asarray(xy, dtype=float)
  if len(xy) < h:
    raise TrackTooShortError(len(xy), h)
  win = sliding_window_view(xy, h, axis=0)  # (n, 2, h)
  w = WeightScheme(h).mu_weights().astype(float)
  mu = (win @ w) * (6.0 / (h ** 3 - h))
  mean = win.mean(axis=2)
  starts = np.arange(len(win), dtype=float)
  b = mean - (starts + (h + 1) / 2.0)[:, None] * mu
  # residuals relative to the window center: x_j - mean - (j - (h+1)/2) mu
  tau = np.arange(1, h + 1, dtype=float) - (h + 1) / 2.0
  resid = win - mean[:, :, None] - mu[:, :, None] * tau[None, None, :]
  s2 = np.einsum("ndh,ndh->n", resid, resid) / (2 * h - 4)
  return WindowFits(h, mu, b, s2)

def rw_window_fits(incs: np.ndarray, h: int) -> WindowFits:
  _check_rw_window(h)
  incs = np.asarray(incs, dtype=float)
  if len(incs) < h:
    raise TrackTooShortError(len(incs) + 1, h)
  win = sliding_window_view(incs, h, axis=0)
  mu = win.mean(axis=2)
  resid = win - mu[:, :, None]
  s2 = np.einsum("ndh,ndh->n", resid, resid) / (2 * (h - 1))
  return WindowFits(h, mu, np.zeros_like(mu), s2)

def robust_sigma2(track: Track, h: int, exclusion: Sequence[int] = (), kind: ModelKind = "lw") -> float:
  """
  Median of the window variance estimates over windows of width 2h, dropping
  windows whose center lies within 2h of an excluded change point.
  """
  T = len(track)
  if T < 2 * h + 1:
    raise TrackTooShortError(T, h)
  if kind == "lw":
    fits = lw_window_fits(track.xy, 2 * h)
    # window s covers X_{s+1..s+2h}
    centers = np.arange(len(fits)) + h
  else:
    fits = rw_window_fits(increments(track), 2 * h)
    # window s covers X_{s+1..s+2h+1}
    centers = np.arange(len(fits)) + h + 1
  keep = np.ones(len(fits), dtype=bool)
  for cp in exclusion:
    keep &= np.abs(centers - int(cp)) >= 2 * h
  if not keep.any():
    raise EstimationError(f"every window of width {2 * h} lies within {2 * h} of an excluded change point")
  logger.debug("robust_sigma2: %d of %d windows kept (h=%d)", int(keep.sum()), len(keep), h)
  return float(np.median(fits.sigma2[keep]))

def _segment_bounds(T: int, cps: Sequence[int]) -> List[Tuple[int, int]]:
  bounds = [0, *[int(c) for c in cps], T]
  return [(bounds[j], bounds[j + 1]) for j in range(len(bounds) - 1)]

def piecewise_refit(track: Track, cps: Sequence[int], h: int, kind: ModelKind = "lw") -> ModelSpec:
  """
  Fit piecewise constant direction and step length between the given change
  points, with a robust global variance. The result can be fed straight back
  into `simulate`.
  """
  T = len(track)
  cps = sorted(int(c) for c in cps)
  if any(c < 1 or c >= T for c in cps):
    raise ValueError(f"change points must lie in [1, {T - 1}], got {cps}")
  segs = _segment_bounds(T, cps)
  short = [(lo + 1, hi) for lo, hi in segs if hi - lo < 3]
  if short:
    desc = ", ".join(f"[{a}, {b}]" for a, b in short)
    raise EstimationError(f"segments need at least 3 points; too short: {desc}", segments=short)

  thetas: List[float] = []
  rs: List[float] = []
  b1 = np.zeros(2)
  Y = increments(track)
  for j, (lo, hi) in enumerate(segs):
    if kind == "lw":
      est = lw_fit(track.xy[lo:hi], lo, hi - lo)
      if j == 0:
        b1 = est.b_hat
    else:
      # increments X_k - X_{k-1} for k in (lo, hi]; the first segment starts at k = 2
      seg_inc = Y[max(lo, 1) - 1:hi - 1]
      est = rw_fit(seg_inc, len(seg_inc), start_index=lo)
      if j == 0:
        b1 = track.xy[0] - est.mu_hat
    thetas.append(est.theta_hat)
    rs.append(est.r_hat)

  s2 = robust_sigma2(track, h, cps, kind)
  if not s2 > 0:
    logger.warning("robust variance is %g for track %s; clamping to the smallest positive float", s2, track.id)
    s2 = float(np.finfo(float).tiny)
  return ModelSpec(
    kind=kind,
    thetas=thetas,
    step_lengths=[max(r, float(np.finfo(float).tiny)) for r in rs],
    b1=(float(b1[0]), float(b1[1])),
    sigma2=s2,
    change_points=cps,
    horizon=T,
  )
