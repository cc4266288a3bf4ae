"""
Leaf plots: direction and step-length difference processes plotted against
each other. A change of direction makes the leaf open vertically, a change of
step length horizontally, and a simultaneous change diagonally.
"""
from __future__ import annotations
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from lxml import etree

from .config import LeafCfg, ModelKind
from .errors import InvalidWindowError, TrackTooShortError
from .estimate import lw_window_fits, rw_window_fits
from .model import Track, increments
from .statistic import lw_centers, rw_centers

if TYPE_CHECKING:
  from .detect import DetectionReport

logger = logging.getLogger(__name__)

LABELS = ("direction", "step_length", "both", "unclassified")

MARKER_COLORS = {
  "direction": "#b5651d",
  "step_length": "#2e8b57",
  "both": "#1f5fa8",
  "unclassified": "#7f7f7f",
}

SVG_NS = "http://www.w3.org/2000/svg"

@dataclass
class LeafSeries:
  h: int
  kind: ModelKind
  centers: np.ndarray
  d_theta: np.ndarray
  d_r: np.ndarray
  se_theta: np.ndarray
  se_r: np.ndarray
  markers: List[Tuple[int, str]] = field(default_factory=list)

  def __len__(self) -> int:
    return len(self.centers)

  def position(self, center: int) -> int:
    k = int(center) - int(self.centers[0]) if len(self) else -1
    if not 0 <= k < len(self):
      lo, hi = (int(self.centers[0]), int(self.centers[-1])) if len(self) else (0, -1)
      raise ValueError(f"center {center} outside the leaf series range [{lo}, {hi}]")
    return k

def direction_difference(theta_left, theta_right):
  """Signed smaller angle from theta_left to theta_right, in (-pi, pi]."""
  d = np.arctan2(np.sin(np.subtract(theta_right, theta_left)), np.cos(np.subtract(theta_right, theta_left)))
  d = np.where(d <= -np.pi + 1e-12, d + 2 * np.pi, d)
  return float(d) if np.ndim(d) == 0 else d

def _normalize_markers(detected: Iterable) -> List[Tuple[int, str]]:
  out: List[Tuple[int, str]] = []
  for m in detected or []:
    if isinstance(m, (tuple, list)):
      out.append((int(m[0]), str(m[1]) if len(m) > 1 else "unclassified"))
    elif hasattr(m, "label"):
      out.append((int(m.index), str(m.label)))
    else:
      out.append((int(m), "unclassified"))
  return out

def leaf_series(track: Track, h: int, kind: ModelKind, detected: Sequence = ()) -> LeafSeries:
  T = len(track)
  if T < 2 * h + 1:
    raise TrackTooShortError(T, h)
  if kind == "lw":
    fits = lw_window_fits(track.xy, h)
    centers = lw_centers(T, h)
    left, right = centers - h, centers
    var = 12.0 * fits.sigma2 / (h ** 3 - h)
  else:
    if h < 2:
      raise InvalidWindowError(h, 2, "RW window")
    fits = rw_window_fits(increments(track), h)
    centers = rw_centers(T, h)
    left, right = centers - h - 1, centers - 1
    var = fits.sigma2 / h
  theta = np.arctan2(fits.mu[:, 1], fits.mu[:, 0])
  r = np.hypot(fits.mu[:, 0], fits.mu[:, 1])
  d_theta = direction_difference(theta[left], theta[right])
  d_r = r[right] - r[left]
  with np.errstate(divide="ignore", invalid="ignore"):
    se_theta = np.sqrt(var[left] / r[left] ** 2 + var[right] / r[right] ** 2)
  se_r = np.sqrt(var[left] + var[right])
  return LeafSeries(h, kind, centers, np.atleast_1d(d_theta), d_r, se_theta, se_r, _normalize_markers(detected))

def leaf_series_multi(track: Track, windows: Sequence[int], kind: ModelKind,
                      detected: Sequence = ()) -> Dict[int, LeafSeries]:
  return {h: leaf_series(track, h, kind, detected) for h in sorted(set(windows))}

def _standardize(d: np.ndarray, se: np.ndarray) -> np.ndarray:
  if len(se) and np.all(np.isfinite(se)) and np.all(se > 0):
    return d / se
  # degenerate scales (noise-free data or a zero drift estimate): raw units
  return d

def _robust_scale(z: np.ndarray, centers: np.ndarray, exclude: Sequence[int], h: int) -> float:
  keep = np.ones(len(z), dtype=bool)
  for m in exclude:
    keep &= np.abs(centers - m) > 2 * h
  if not keep.any():
    keep[:] = True
  return float(np.median(np.abs(z[keep])))

def _score(value: float, tau: float) -> float:
  if tau > 0:
    return value / tau
  return math.inf if value > 0 else 0.0

def classify(series: LeafSeries, cp: int, cfg: Optional[LeafCfg] = None) -> str:
  cfg = cfg or LeafCfg()
  k = series.position(cp)
  exclude = sorted({m for m, _ in series.markers} | {int(cp)})
  z_theta = _standardize(series.d_theta, series.se_theta)
  z_r = _standardize(series.d_r, series.se_r)
  s_theta = _score(abs(float(z_theta[k])), _robust_scale(z_theta, series.centers, exclude, series.h))
  s_r = _score(abs(float(z_r[k])), _robust_scale(z_r, series.centers, exclude, series.h))
  up_theta = s_theta > cfg.scale_factor
  up_r = s_r > cfg.scale_factor
  logger.debug("classify cp=%d h=%d: s_theta=%.3g s_r=%.3g", cp, series.h, s_theta, s_r)
  if up_theta and up_r:
    stronger, weaker = max(s_theta, s_r), min(s_theta, s_r)
    if weaker >= cfg.dominance_ratio * stronger:
      return "both"
    return "direction" if s_theta >= s_r else "step_length"
  if up_theta:
    return "direction"
  if up_r:
    return "step_length"
  return "direction" if s_theta >= s_r else "step_length"

def label_change_points(track: Track, report: "DetectionReport", cfg: LeafCfg) -> None:
  """Fill in the class of every change point of a report, in place."""
  cache: Dict[int, LeafSeries] = {}
  for cp in report.change_points:
    if cp.window not in cache:
      cache[cp.window] = leaf_series(track, cp.window, report.kind, report.change_points)
    cp.label = classify(cache[cp.window], cp.index, cfg)

def _fmt(v: float) -> str:
  return f"{v:.6g}"

def _el(parent, tag: str, **attrs) -> etree._Element:
  node = etree.SubElement(parent, f"{{{SVG_NS}}}{tag}")
  for k, v in attrs.items():
    node.set(k.rstrip("_").replace("_", "-"), str(v))
  return node

def _text(parent, x: float, y: float, s: str, **attrs) -> etree._Element:
  node = _el(parent, "text", x=_fmt(x), y=_fmt(y), **attrs)
  node.text = s
  return node

def build_svg(series: LeafSeries, cfg: Optional[LeafCfg] = None) -> etree._Element:
  cfg = cfg or LeafCfg()
  W, H = cfg.svg_width, cfg.svg_height
  m = 64.0
  span = float(np.max(np.abs(series.d_r))) if len(series) else 0.0
  xmax = span * 1.1 if span > 0 else 1.0

  def px(dr: float) -> float:
    return m + (dr + xmax) / (2 * xmax) * (W - 2 * m)

  def py(dth: float) -> float:
    return m + (math.pi - dth) / (2 * math.pi) * (H - 2 * m)

  root = etree.Element(f"{{{SVG_NS}}}svg", nsmap={None: SVG_NS})
  root.set("version", "1.1")
  root.set("width", str(W))
  root.set("height", str(H))
  root.set("viewBox", f"0 0 {W} {H}")
  title = _el(root, "title")
  title.text = f"leaf plot ({series.kind}, h={series.h})"
  _el(root, "rect", x=0, y=0, width=W, height=H, fill="white")

  axes = _el(root, "g", class_="axes", stroke="black", stroke_width=1, font_family="sans-serif", font_size=12)
  _el(axes, "rect", x=_fmt(m), y=_fmt(m), width=_fmt(W - 2 * m), height=_fmt(H - 2 * m), fill="none")
  _el(axes, "line", x1=_fmt(m), y1=_fmt(py(0.0)), x2=_fmt(W - m), y2=_fmt(py(0.0)), stroke_dasharray="4 3")
  _el(axes, "line", x1=_fmt(px(0.0)), y1=_fmt(m), x2=_fmt(px(0.0)), y2=_fmt(H - m), stroke_dasharray="4 3")
  for val, lab in ((-math.pi, "−π"), (-math.pi / 2, "−π/2"), (0.0, "0"), (math.pi / 2, "π/2"), (math.pi, "π")):
    _text(axes, m - 8, py(val) + 4, lab, text_anchor="end", stroke="none")
  for val in (-xmax, 0.0, xmax):
    _text(axes, px(val), H - m + 18, _fmt(val), text_anchor="middle", stroke="none")
  _text(axes, W / 2, H - 16, "step length difference D^r (distance per step)", text_anchor="middle", stroke="none")
  _text(axes, 18, H / 2, "direction difference D^θ (rad)", text_anchor="middle", stroke="none",
        transform=f"rotate(-90 18 {_fmt(H / 2)})")

  if len(series):
    pts = " ".join(f"{_fmt(px(dr))},{_fmt(py(dt))}" for dr, dt in zip(series.d_r, series.d_theta))
    _el(root, "polyline", class_="leaf", points=pts, fill="none", stroke="#333333", stroke_width=1)

  marks = _el(root, "g", class_="markers")
  for idx, label in series.markers:
    try:
      k = series.position(idx)
    except ValueError:
      logger.debug("marker %d outside leaf range for h=%d; not drawn", idx, series.h)
      continue
    c = _el(marks, "circle", class_=f"cp-marker cp-{label}", cx=_fmt(px(series.d_r[k])),
            cy=_fmt(py(series.d_theta[k])), r=5, fill=MARKER_COLORS.get(label, MARKER_COLORS["unclassified"]),
            stroke="black")
    c.set("data-index", str(idx))
    tip = _el(c, "title")
    tip.text = f"change point {idx}: {label}"
  return root

def render_svg(series: LeafSeries, path: str | Path, cfg: Optional[LeafCfg] = None) -> Path:
  root = build_svg(series, cfg)
  p = Path(path)
  etree.ElementTree(root).write(str(p), pretty_print=True, xml_declaration=True, encoding="UTF-8")
  return p
