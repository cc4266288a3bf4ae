"""
Track, report, spec and leaf-series files.

Track CSV:   `# format_version: 1` then header `track_id,t,x,y`.
Report JSON: one object per track with a fixed key order.
Spec YAML:   ModelSpec fields, angles in radians.
Leaf CSV:    `# format_version: 1` then header `i,d_r,d_theta`.
"""
from __future__ import annotations
import io as _io
import json
import logging
import math
import re
from pathlib import Path
from typing import Any, Dict, List, Sequence

import pandas as pd
import yaml

from .detect import DetectionReport
from .errors import TrackFormatError
from .leaf import LeafSeries
from .model import ModelSpec, Track

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
TRACK_COLUMNS = ["track_id", "t", "x", "y"]
LEAF_COLUMNS = ["i", "d_r", "d_theta"]
FLOAT_FORMAT = "%.17g"

_INT_RE = re.compile(r"^[+-]?\d+$")
_LINE_RE = re.compile(r"line (\d+)")

def _header_line(text: str) -> int:
  """0-based index of the CSV header line (comment lines are skipped)."""
  for k, line in enumerate(text.splitlines()):
    if line.startswith("#"):
      continue
    return k
  raise TrackFormatError("file has no header row", line=1)

def _decode(raw: bytes) -> str:
  try:
    return raw.decode("utf-8")
  except UnicodeDecodeError as e:
    line = raw[:e.start].count(b"\n") + 1
    raise TrackFormatError(f"invalid UTF-8 byte 0x{raw[e.start]:02x}", line=line) from e

def read_tracks(path: str | Path) -> List[Track]:
  text = _decode(Path(path).read_bytes())
  head = _header_line(text)
  try:
    lines = text.splitlines()[head:]
    while lines and not lines[-1].strip():
      lines.pop()
    body = "\n".join(lines) + "\n"
    df = pd.read_csv(_io.StringIO(body), dtype=str, keep_default_na=False, skip_blank_lines=False)
  except pd.errors.ParserError as e:
    m = _LINE_RE.search(str(e))
    # pandas counts lines of `body`, whose first line is the header
    line = head + int(m.group(1)) if m else None
    raise TrackFormatError(f"malformed CSV: {e}", line=line) from e
  except pd.errors.EmptyDataError as e:
    raise TrackFormatError("file is empty", line=1) from e

  cols = [c.strip() for c in df.columns]
  if cols != TRACK_COLUMNS:
    raise TrackFormatError(f"expected header {','.join(TRACK_COLUMNS)}, got {','.join(cols)}", line=head + 1)
  df.columns = cols

  groups: Dict[str, List[tuple]] = {}
  for k, rec in enumerate(df.itertuples(index=False), start=1):
    line = head + 1 + k
    tid, t_s, x_s, y_s = (str(v).strip() for v in rec)
    if tid == "" and t_s == "" and x_s == "" and y_s == "":
      raise TrackFormatError("blank row", row=k, line=line)
    if tid == "":
      raise TrackFormatError("empty track_id", row=k, line=line)
    if not _INT_RE.match(t_s):
      raise TrackFormatError(f"time stamp {t_s!r} is not an integer", row=k, line=line)
    try:
      x, y = float(x_s), float(y_s)
    except ValueError:
      raise TrackFormatError(f"coordinates {x_s!r}, {y_s!r} are not decimals", row=k, line=line) from None
    if not (math.isfinite(x) and math.isfinite(y)):
      raise TrackFormatError(f"coordinates {x_s!r}, {y_s!r} are not finite", row=k, line=line)
    groups.setdefault(tid, []).append((int(t_s), x, y, k, line))

  tracks: List[Track] = []
  for tid, rows in groups.items():
    rows.sort(key=lambda r: r[0])
    for prev, cur in zip(rows, rows[1:]):
      if cur[0] == prev[0]:
        raise TrackFormatError(f"track {tid!r}: duplicate time stamp t={cur[0]}", row=cur[3], line=cur[4])
      if cur[0] != prev[0] + 1:
        raise TrackFormatError(f"track {tid!r}: gap between t={prev[0]} and t={cur[0]}", row=cur[3], line=cur[4])
    tracks.append(Track.from_positions(tid, [(t, x, y) for t, x, y, _, _ in rows]))
  logger.info("read %d track(s) from %s", len(tracks), path)
  return tracks

def _tracks_frame(tracks: Sequence[Track]) -> pd.DataFrame:
  parts = [
    pd.DataFrame({"track_id": tr.id, "t": tr.t, "x": tr.xy[:, 0], "y": tr.xy[:, 1]}, columns=TRACK_COLUMNS)
    for tr in tracks
  ]
  return pd.concat(parts, ignore_index=True) if parts else pd.DataFrame(columns=TRACK_COLUMNS)

def write_tracks(tracks: Sequence[Track], path: str | Path) -> Path:
  p = Path(path)
  with open(p, "w", encoding="utf-8", newline="") as f:
    f.write(f"# format_version: {FORMAT_VERSION}\n")
    _tracks_frame(tracks).to_csv(f, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
  return p

def write_track(track: Track, path: str | Path) -> Path:
  return write_tracks([track], path)

def _num(v):
  if v is None:
    return None
  v = float(v)
  return v if math.isfinite(v) else None

def report_to_dict(report: DetectionReport) -> Dict[str, Any]:
  cfg = report.config
  return {
    "format_version": FORMAT_VERSION,
    "track_id": report.track_id,
    "model": report.kind,
    "windows": list(cfg.windows),
    "alpha": cfg.alpha,
    "sims": cfg.sims,
    "seed": cfg.seed,
    "null_kind": cfg.null_kind,
    "M": _num(report.M),
    "Q": _num(report.Q),
    "verdict": report.verdict,
    "change_points": [
      {"index": cp.index, "t": report.t0 + cp.index - 1, "window": cp.window, "class": cp.label}
      for cp in report.change_points
    ],
    "window_maxima": {str(h): _num(v) for h, v in sorted(report.window_maxima.items())},
    "sigma2_hat": _num(report.sigma2_hat),
    "error": report.error,
  }

def _dump(obj: Any) -> str:
  # floats are written with repr, which round-trips exactly
  return json.dumps(obj, ensure_ascii=False, indent=2) + "\n"

def write_report(report: DetectionReport, path: str | Path) -> Path:
  p = Path(path)
  p.write_text(_dump(report_to_dict(report)), encoding="utf-8")
  return p

def write_reports(reports: Sequence[DetectionReport], path: str | Path) -> Path:
  p = Path(path)
  body = {"format_version": FORMAT_VERSION, "reports": [report_to_dict(r) for r in reports]}
  p.write_text(_dump(body), encoding="utf-8")
  return p

def _check_version(obj: Dict[str, Any], path) -> None:
  v = obj.get("format_version")
  if v != FORMAT_VERSION:
    raise ValueError(f"{path}: unsupported format_version {v!r}")

def read_report(path: str | Path) -> Dict[str, Any]:
  obj = json.loads(Path(path).read_text(encoding="utf-8"))
  _check_version(obj, path)
  return obj

def read_reports(path: str | Path) -> List[Dict[str, Any]]:
  obj = json.loads(Path(path).read_text(encoding="utf-8"))
  _check_version(obj, path)
  return list(obj["reports"])

def spec_to_dict(spec: ModelSpec) -> Dict[str, Any]:
  return {
    "format_version": FORMAT_VERSION,
    "kind": spec.kind,
    "horizon": spec.horizon,
    "change_points": list(spec.change_points),
    "thetas": [float(t) for t in spec.thetas],
    "step_lengths": [float(r) for r in spec.step_lengths],
    "b1": [float(spec.b1[0]), float(spec.b1[1])],
    "sigma2": float(spec.sigma2),
  }

def write_spec(spec: ModelSpec, path: str | Path) -> Path:
  p = Path(path)
  p.write_text(yaml.safe_dump(spec_to_dict(spec), sort_keys=False), encoding="utf-8")
  return p

def read_spec(path: str | Path) -> ModelSpec:
  data = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
  if data.get("format_version", FORMAT_VERSION) != FORMAT_VERSION:
    raise ValueError(f"{path}: unsupported format_version {data.get('format_version')!r}")
  data.pop("format_version", None)
  if "b1" in data:
    data["b1"] = tuple(data["b1"])
  return ModelSpec.model_validate(data)

def write_leaf_csv(series: LeafSeries, path: str | Path) -> Path:
  p = Path(path)
  df = pd.DataFrame({"i": series.centers, "d_r": series.d_r, "d_theta": series.d_theta}, columns=LEAF_COLUMNS)
  with open(p, "w", encoding="utf-8", newline="") as f:
    f.write(f"# format_version: {FORMAT_VERSION}\n")
    df.to_csv(f, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
  return p

def read_leaf_csv(path: str | Path) -> pd.DataFrame:
  return pd.read_csv(path, comment="#")
