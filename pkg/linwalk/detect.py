from __future__ import annotations
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np

from .config import LeafCfg, ModelKind, NullSimConfig
from .errors import EstimationError, TrackTooShortError
from .estimate import robust_sigma2
from .leaf import label_change_points
from .model import Track
from .statistic import DifferenceProcess, g_process, null_maxima_by_window, threshold

logger = logging.getLogger(__name__)

Verdict = Literal["reject", "retain"]
ChangeClass = Literal["direction", "step_length", "both", "unclassified"]

@dataclass
class ChangePoint:
  index: int
  window: int
  label: ChangeClass = "unclassified"

@dataclass
class DetectionReport:
  track_id: str
  kind: ModelKind
  config: NullSimConfig
  verdict: Optional[Verdict] = None
  M: Optional[float] = None
  Q: Optional[float] = None
  change_points: List[ChangePoint] = field(default_factory=list)
  processes: Dict[int, DifferenceProcess] = field(default_factory=dict)
  window_maxima: Dict[int, float] = field(default_factory=dict)
  sigma2_hat: Optional[float] = None
  error: Optional[str] = None
  # time stamp of position index 1
  t0: int = 1

  @property
  def alpha(self) -> float:
    return self.config.alpha

  @property
  def indices(self) -> List[int]:
    return [cp.index for cp in self.change_points]

@dataclass
class MatchResult:
  hits: List[Tuple[int, int]]
  missed: List[int]
  surplus: List[int]

  @property
  def squared_errors(self) -> List[int]:
    return [(e - t) ** 2 for t, e in self.hits]

  @property
  def all_found(self) -> bool:
    return not self.missed

def _check_length(track: Track, config: NullSimConfig) -> None:
  h_max = max(config.windows)
  if len(track) < 2 * h_max + 1:
    raise TrackTooShortError(len(track), h_max)

def compute_processes(track: Track, config: NullSimConfig, kind: ModelKind) -> Dict[int, DifferenceProcess]:
  _check_length(track, config)
  return {h: g_process(track, h, kind) for h in config.windows}

def test(track: Track, config: NullSimConfig, kind: ModelKind,
         q: Optional[float] = None) -> Tuple[float, float, Verdict]:
  """Multi-window test: M = max over windows and centers of ||G||, reject iff M > Q."""
  processes = compute_processes(track, config, kind)
  M = max(p.M for p in processes.values())
  Q = threshold(config, kind) if q is None else float(q)
  return M, Q, ("reject" if M > Q else "retain")

def detect_single_window(G: DifferenceProcess, Q: float) -> List[int]:
  """
  Repeatedly take the largest remaining ||G_i|| above Q and delete the
  neighbourhood [c-h+1, c+h]. Ties go to the smallest index.
  """
  norms = G.norms
  alive = np.ones(len(norms), dtype=bool)
  found: List[int] = []
  while True:
    cand = np.where(alive & (norms > Q), norms, -np.inf)
    k = int(np.argmax(cand))
    if not np.isfinite(cand[k]):
      break
    c = int(G.centers[k])
    found.append(c)
    alive &= ~((G.centers >= c - G.h + 1) & (G.centers <= c + G.h))
  return found

def _conflicts(candidate: int, h: int, accepted: Sequence[int]) -> bool:
  # candidate's own 2h-neighbourhood [c-h+1, c+h]
  return any(candidate - h + 1 <= a <= candidate + h for a in accepted)

def merge_windows(candidates: Dict[int, List[int]]) -> List[ChangePoint]:
  """
  Smallest window first; a later window's candidate survives only if no change
  point accepted from a smaller window lies in its neighbourhood.
  """
  accepted: List[ChangePoint] = []
  for h in sorted(candidates):
    before = [cp.index for cp in accepted]
    for c in candidates[h]:
      if _conflicts(c, h, before):
        logger.debug("dropping candidate %d from h=%d", c, h)
        continue
      accepted.append(ChangePoint(c, h))
  return sorted(accepted, key=lambda cp: (cp.index, cp.window))

def detect_multi_window(track: Track, config: NullSimConfig, kind: ModelKind,
                        q: Optional[float] = None, classify: bool = False,
                        leaf_cfg: Optional[LeafCfg] = None) -> DetectionReport:
  report = DetectionReport(track_id=track.id, kind=kind, config=config, t0=int(track.t[0]))
  processes = compute_processes(track, config, kind)
  report.processes = processes
  report.window_maxima = null_maxima_by_window(processes)
  report.M = max(report.window_maxima.values())
  report.Q = threshold(config, kind) if q is None else float(q)
  report.verdict = "reject" if report.M > report.Q else "retain"

  if report.verdict == "reject":
    cands = {h: detect_single_window(processes[h], report.Q) for h in config.windows}
    report.change_points = merge_windows(cands)

  h0 = config.windows[0]
  try:
    report.sigma2_hat = robust_sigma2(track, h0, report.indices, kind)
  except EstimationError as e:
    logger.warning("track %s: %s", track.id, e)

  if classify and report.change_points:
    label_change_points(track, report, leaf_cfg or LeafCfg())

  logger.info("track %s: M=%.4g Q=%.4g verdict=%s cps=%s",
              track.id, report.M, report.Q, report.verdict, report.indices)
  return report

def failed_report(track: Track, config: NullSimConfig, kind: ModelKind, err: Exception) -> DetectionReport:
  return DetectionReport(track_id=track.id, kind=kind, config=config, error=str(err), t0=int(track.t[0]))

def match_change_points(true_cps: Sequence[int], estimated: Sequence[int], tolerance: float) -> MatchResult:
  """Pair each true change point with the nearest unused estimate within tolerance."""
  free = sorted(int(e) for e in estimated)
  hits: List[Tuple[int, int]] = []
  missed: List[int] = []
  for t in sorted(int(c) for c in true_cps):
    best = None
    for e in free:
      d = abs(e - t)
      if d <= tolerance and (best is None or d < abs(best - t)):
        best = e
    if best is None:
      missed.append(t)
    else:
      hits.append((t, best))
      free.remove(best)
  return MatchResult(hits, missed, free)
