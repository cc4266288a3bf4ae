"""
Moving difference statistics G, their parameter-free null processes Gamma and
the Monte-Carlo rejection threshold Q.

Index conventions (positions X_1..X_T, increments Y_k = X_k - X_{k-1}):

* LW: left window X_{i-h+1..i}, right window X_{i+1..i+h}, centers i in [h, T-h].
* RW: left increments Y_{i-h+1..i}, right increments Y_{i+1..i+h}; Y_1 does not
  exist, so centers run over [h+1, T-h].

The null processes use one standard-normal array Z_0..Z_T per realization and
the same centers, so G with the variance frozen at sigma^2 coincides with Gamma
computed from the noise that generated the track.

Q is simulated by default from G itself on standard null tracks (zero drift,
unit variance). G is pivotal, so this keeps Q parameter-free and holds the
level at small h, where the variance estimates make G heavier-tailed than
Gamma. `null_kind="gamma"` uses the limit process instead.
"""
from __future__ import annotations
import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np

from .config import ModelKind, NullSimConfig
from .errors import DegenerateTrackError, DomainError, InvalidWindowError, TrackTooShortError
from .estimate import WeightScheme, lw_window_fits, rw_window_fits
from .model import SeededRng, Track, increments
from .utils import parallel_map

logger = logging.getLogger(__name__)

@dataclass
class DifferenceProcess:
  h: int
  centers: np.ndarray   # (n,) integer centers i
  values: np.ndarray    # (n, 2)
  kind: ModelKind

  def __len__(self) -> int:
    return len(self.centers)

  @property
  def norms(self) -> np.ndarray:
    return np.hypot(self.values[:, 0], self.values[:, 1])

  @property
  def M(self) -> float:
    """Maximal deviation from the origin."""
    return float(self.norms.max()) if len(self) else 0.0

  def at(self, center: int) -> np.ndarray:
    k = int(center) - int(self.centers[0])
    if not 0 <= k < len(self):
      raise IndexError(f"center {center} outside [{self.centers[0]}, {self.centers[-1]}]")
    return self.values[k]

def lw_centers(T: int, h: int) -> np.ndarray:
  return np.arange(h, T - h + 1)

def rw_centers(T: int, h: int) -> np.ndarray:
  return np.arange(h + 1, T - h + 1)

def _require_length(T: int, h: int) -> None:
  if T < 2 * h + 1:
    raise TrackTooShortError(T, h)

def _check_degenerate(var_sum: np.ndarray, centers: np.ndarray, h: int) -> None:
  zero = np.flatnonzero(var_sum <= 0.0)
  if len(zero):
    raise DegenerateTrackError(int(centers[zero[0]]), h)

def g_process_lw(track: Track, h: int, sigma2: Optional[float] = None) -> DifferenceProcess:
  """
  Kernel statistic of the LW. With `sigma2` given, both window variances are
  replaced by that known value.
  """
  T = len(track)
  if h < 3:
    raise InvalidWindowError(h, 3, "LW window")
  _require_length(T, h)
  fits = lw_window_fits(track.xy, h)
  centers = lw_centers(T, h)
  # window start s covers X_{s+1..s+h}: right start = i, left start = i - h
  right = centers
  left = centers - h
  dmu = fits.mu[right] - fits.mu[left]
  if sigma2 is None:
    var_sum = fits.sigma2[left] + fits.sigma2[right]
    _check_degenerate(var_sum, centers, h)
  else:
    var_sum = np.full(len(centers), 2.0 * float(sigma2))
  denom = np.sqrt(12.0 / (h ** 3 - h) * var_sum)
  return DifferenceProcess(h, centers, dmu / denom[:, None], "lw")

def g_process_rw(track: Track, h: int, sigma2: Optional[float] = None) -> DifferenceProcess:
  T = len(track)
  if h < 2:
    raise InvalidWindowError(h, 2, "RW window")
  _require_length(T, h)
  fits = rw_window_fits(increments(track), h)
  centers = rw_centers(T, h)
  # window start s covers Y_{s+2..s+h+1}: right start = i - 1, left start = i - h - 1
  right = centers - 1
  left = centers - h - 1
  dmu = fits.mu[right] - fits.mu[left]
  if sigma2 is None:
    var_sum = fits.sigma2[left] + fits.sigma2[right]
    _check_degenerate(var_sum, centers, h)
  else:
    var_sum = np.full(len(centers), 2.0 * float(sigma2))
  scale = math.sqrt(h) / np.sqrt(var_sum)
  return DifferenceProcess(h, centers, dmu * scale[:, None], "rw")

def g_process(track: Track, h: int, kind: ModelKind, sigma2: Optional[float] = None) -> DifferenceProcess:
  if kind == "lw":
    return g_process_lw(track, h, sigma2)
  return g_process_rw(track, h, sigma2)

def _window_sums(z: np.ndarray, w: np.ndarray) -> np.ndarray:
  """S_s = sum_j w_j z[s+j-1] for every start s, per column (memory O(len(z)))."""
  return np.column_stack([np.convolve(z[:, d], w[::-1], mode="valid") for d in range(z.shape[1])])

def gamma_lw_from_noise(z: np.ndarray, h: int) -> DifferenceProcess:
  """Gamma^LW from Z_0..Z_T (shape (T+1, 2))."""
  if h < 3:
    raise InvalidWindowError(h, 3, "LW window")
  z = np.asarray(z, dtype=float)
  T = len(z) - 1
  _require_length(T, h)
  w = WeightScheme(h).mu_weights().astype(float)
  S = _window_sums(z[1:], w)  # S[s] = sum_j w_j Z_{s+j}
  centers = lw_centers(T, h)
  k = (2.0 * (h ** 3 - h) / 3.0) ** -0.5
  return DifferenceProcess(h, centers, k * (S[centers] - S[centers - h]), "lw")

def gamma_rw_from_noise(z: np.ndarray, h: int) -> DifferenceProcess:
  """Gamma^RW from Z_0..Z_T; h = 1 is allowed here."""
  if h < 1:
    raise InvalidWindowError(h, 1, "RW window")
  z = np.asarray(z, dtype=float)
  T = len(z) - 1
  _require_length(T, h)
  P = np.vstack([np.zeros((1, 2)), np.cumsum(z[1:], axis=0)])  # P[k] = Z_1 + ... + Z_k
  centers = rw_centers(T, h)
  vals = (P[centers + h] - 2.0 * P[centers] + P[centers - h]) / math.sqrt(2.0 * h)
  return DifferenceProcess(h, centers, vals, "rw")

def gamma_null_lw(T: int, h: int, rng: SeededRng) -> DifferenceProcess:
  return gamma_lw_from_noise(rng.standard_normal((T + 1, 2)), h)

def gamma_null_rw(T: int, h: int, rng: SeededRng) -> DifferenceProcess:
  return gamma_rw_from_noise(rng.standard_normal((T + 1, 2)), h)

def gamma_from_noise(z: np.ndarray, h: int, kind: ModelKind) -> DifferenceProcess:
  if kind == "lw":
    return gamma_lw_from_noise(z, h)
  return gamma_rw_from_noise(z, h)

def standard_null_track(z: np.ndarray, kind: ModelKind) -> Track:
  """Zero-drift, unit-variance track driven by Z_1..Z_T, as `simulate` would draw it."""
  z = np.asarray(z, dtype=float)
  xy = z[1:] if kind == "lw" else np.cumsum(z[1:], axis=0)
  return Track(id="null", t=np.arange(1, len(z)), xy=xy)

def studentized_from_noise(z: np.ndarray, h: int, kind: ModelKind) -> DifferenceProcess:
  """
  G with estimated window variances on a standard null track. G is invariant
  to drift, offset and noise scale, so this is its exact null law under
  Gaussian noise; Gamma is the large-h limit.
  """
  return g_process(standard_null_track(z, kind), h, kind)

def _one_null_maximum(config: NullSimConfig, kind: ModelKind, k: int) -> float:
  # all windows read the same realization
  z = SeededRng(config.seed).child(k).standard_normal((config.T + 1, 2))
  if config.null_kind == "gamma":
    return max(gamma_from_noise(z, h, kind).M for h in config.windows)
  track = standard_null_track(z, kind)
  return max(g_process(track, h, kind).M for h in config.windows)

def simulate_null_maxima(config: NullSimConfig, kind: ModelKind, threads: Optional[int] = None) -> np.ndarray:
  chunks = _chunks(config.sims, max(1, min(64, config.sims)))

  def run(chunk: range) -> List[float]:
    return [_one_null_maximum(config, kind, k) for k in chunk]

  out = parallel_map(run, chunks, threads)
  return np.asarray([m for part in out for m in part], dtype=float)

def _chunks(n: int, parts: int) -> List[range]:
  size = -(-n // parts)
  return [range(a, min(a + size, n)) for a in range(0, n, size)]

def quantile_index(sims: int, alpha: float) -> int:
  """1-based order statistic ceil((1 - alpha) S), at least 1."""
  return min(sims, max(1, math.ceil((1.0 - alpha) * sims - 1e-9)))

def threshold(config: NullSimConfig, kind: ModelKind, threads: Optional[int] = None) -> float:
  if config.sims * config.alpha < 1:
    logger.warning(
      "S*alpha = %g < 1: the %g-quantile of %d simulations is ill-resolved",
      config.sims * config.alpha, 1 - config.alpha, config.sims)
  maxima = np.sort(simulate_null_maxima(config, kind, threads))
  q = float(maxima[quantile_index(config.sims, config.alpha) - 1])
  logger.info("threshold Q=%.6g (kind=%s, null=%s, T=%d, H=%s, S=%d, alpha=%g)",
              q, kind, config.null_kind, config.T, config.windows, config.sims, config.alpha)
  return q

def kappa(x):
  """
  Normalized autocovariance of the limit process, as a function of lag / h.
  Accepts scalars or arrays.
  """
  arr = np.asarray(x, dtype=float)
  if np.any(arr < 0) or np.any(np.isnan(arr)):
    raise DomainError(f"kappa is defined for x >= 0, got {x}")
  near = 3 * arr ** 3 - 3 * arr ** 2 - 1.5 * arr + 1
  far = -arr ** 3 + 3 * arr ** 2 - 1.5 * arr - 1
  out = np.where(arr <= 1, near, np.where(arr <= 2, far, 0.0))
  return float(out) if out.ndim == 0 else out

def gamma_autocorrelation(h: int, lag: int) -> float:
  """Exact correlation of one Gamma^LW component between centers i and i+lag."""
  if h < 3:
    raise InvalidWindowError(h, 3, "LW window")
  lag = abs(int(lag))
  if lag >= 2 * h:
    return 0.0
  w = WeightScheme(h).mu_weights().astype(float)
  # coefficients of Z_{i-h+1..i+h} in Gamma_i (up to the common scale)
  coef = np.concatenate([-w, w])
  overlap = float(np.dot(coef[lag:], coef[:len(coef) - lag]))
  return overlap / float(np.dot(coef, coef))

def classic_mosum_lw(track: Track, h: int, sigma2: float) -> DifferenceProcess:
  """
  Increment-mean MOSUM applied to an LW, scaled by h / sqrt(2 sigma^2).
  The increment sums telescope, leaving (Z_{i+h} - 2 Z_i + Z_{i-h}) / sqrt(2):
  N(0, 3 I) at every center and free of h, so no window size recovers a
  standard normal null.
  """
  T = len(track)
  _require_length(T, h)
  X = track.xy
  # the left increment sum needs X_{i-h}, so centers start at h+1
  centers = rw_centers(T, h)
  # X_k sits at X[k-1]
  right = (X[centers + h - 1] - X[centers - 1]) / h
  left = (X[centers - 1] - X[centers - h - 1]) / h
  vals = (right - left) * h / math.sqrt(2.0 * sigma2)
  return DifferenceProcess(h, centers, vals, "lw")

def null_maxima_by_window(processes: Dict[int, DifferenceProcess]) -> Dict[int, float]:
  return {h: p.M for h, p in sorted(processes.items())}
