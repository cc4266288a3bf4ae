from __future__ import annotations
import argparse
import logging
import re
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import yaml
from pydantic import ValidationError

from .config import AppCfg, DEFAULT_WINDOWS, NullSimConfig, load_config
from .detect import DetectionReport, detect_multi_window, failed_report
from .errors import EstimationError, LinwalkError, TrackFormatError, TrackTooShortError
from .estimate import piecewise_refit
from .io import read_spec, read_tracks, write_leaf_csv, write_reports, write_spec, write_tracks
from .leaf import leaf_series, render_svg
from .model import Track, simulate_many, spec_from_degrees
from .statistic import threshold
from .utils import ensure_dir, parse_float_list, parse_int_list, resolve_threads, sha256_file, write_checksum

logger = logging.getLogger("linwalk")

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_IO = 3

class UsageError(Exception):
  pass

def _banner(title: str) -> None:
  print("\n" + "=" * 60)
  print(title)
  print("=" * 60)

def _safe_name(track_id: str) -> str:
  return re.sub(r"[^A-Za-z0-9_.-]", "_", track_id) or "track"

def _opt(args: argparse.Namespace, name: str, default=None):
  v = getattr(args, name, None)
  return default if v is None else v

def _model(args, cfg: AppCfg) -> str:
  return _opt(args, "model", cfg.detection.model)

def _seed(args, cfg: AppCfg) -> int:
  return int(_opt(args, "seed", cfg.detection.seed))

def _windows(args, cfg: AppCfg) -> List[int]:
  raw = _opt(args, "windows")
  if raw is not None:
    try:
      return parse_int_list(raw)
    except ValueError as e:
      raise UsageError(f"--windows: {e}") from None
  if cfg.detection.windows:
    return list(cfg.detection.windows)
  return list(DEFAULT_WINDOWS[_model(args, cfg)])

def _out(args, default: Path) -> Path:
  v = _opt(args, "out")
  return Path(v) if v is not None else default

def _null_config(args, cfg: AppCfg, T: int) -> NullSimConfig:
  return NullSimConfig(
    T=T,
    windows=_windows(args, cfg),
    sims=int(_opt(args, "sims", cfg.detection.sims)),
    alpha=float(_opt(args, "alpha", cfg.detection.alpha)),
    seed=_seed(args, cfg),
    null_kind=_opt(args, "null_kind", cfg.detection.null_kind),
  )

def _finish(path: Path, cfg: AppCfg) -> None:
  if cfg.output.write_checksums:
    write_checksum(path)
  print(f"✓ Wrote {path} (sha256 {sha256_file(path)[:12]})")

def cmd_simulate(args, cfg: AppCfg) -> Path:
  model = _model(args, cfg)
  spec_args = [args.thetas, args.r, args.sigma2, args.T, args.cps, args.b1]
  if args.spec:
    if any(a is not None for a in spec_args):
      raise UsageError("--spec cannot be combined with --thetas/--r/--sigma2/--T/--cps/--b1")
    spec = read_spec(args.spec)
  else:
    missing = [name for name, v in (("--thetas", args.thetas), ("--r", args.r),
                                    ("--sigma2", args.sigma2), ("--T", args.T)) if v is None]
    if missing:
      raise UsageError(f"simulate needs {', '.join(missing)} (or --spec)")
    try:
      thetas = parse_float_list(args.thetas)
      rs = parse_float_list(args.r)
      cps = parse_int_list(args.cps) if args.cps else []
      b1 = parse_float_list(args.b1) if args.b1 else [0.0, 0.0]
    except ValueError as e:
      raise UsageError(str(e)) from None
    if len(rs) == 1:
      rs = rs * len(thetas)
    if len(rs) != len(thetas):
      raise UsageError(f"--r has {len(rs)} values for {len(thetas)} thetas")
    if len(thetas) != len(cps) + 1:
      raise UsageError(f"{len(cps)} change points need {len(cps) + 1} thetas, got {len(thetas)}")
    if len(b1) != 2:
      raise UsageError("--b1 takes two values x,y")
    spec = spec_from_degrees(model, thetas, rs, args.sigma2, args.T, cps, (b1[0], b1[1]))

  n = args.n if args.n is not None else cfg.simulation.n_tracks
  if n < 1:
    raise UsageError("--n must be >= 1")
  _banner(f"🎲 SIMULATING {n} {spec.kind.upper()} TRACK(S)")
  print(f"  T={spec.horizon}  change points={spec.change_points}  sigma2={spec.sigma2:g}")
  tracks = simulate_many(spec, _seed(args, cfg), n, prefix=cfg.simulation.track_prefix)
  out = _out(args, Path(cfg.output.root_dir) / "tracks.csv")
  ensure_dir(out.parent)
  write_tracks(tracks, out)
  print(f"✓ Wrote {len(tracks)} track(s) to {out}")
  return out

def cmd_threshold(args, cfg: AppCfg) -> float:
  if args.T is None:
    raise UsageError("threshold needs --T")
  model = _model(args, cfg)
  conf = _null_config(args, cfg, args.T)
  q = threshold(conf, model, threads=resolve_threads(cfg.runtime.threads))
  print(repr(q))
  return q

def _validated_settings(args, cfg: AppCfg) -> NullSimConfig:
  # probe config at the smallest admissible length; catches bad alpha/sims/windows up front
  return _null_config(args, cfg, 2 * max(_windows(args, cfg)) + 1)

def _detect_all(tracks: Sequence[Track], args, cfg: AppCfg, classify: bool) -> List[DetectionReport]:
  model = _model(args, cfg)
  probe = _validated_settings(args, cfg)
  threads = resolve_threads(cfg.runtime.threads)
  q_by_length: Dict[int, float] = {}
  reports: List[DetectionReport] = []
  for k, track in enumerate(tracks, 1):
    T = len(track)
    if T < 2 * max(probe.windows) + 1:
      err = TrackTooShortError(T, max(probe.windows))
      print(f"  ⚠️ [{k}/{len(tracks)}] {track.id}: {err}")
      reports.append(failed_report(track, probe, model, err))
      continue
    conf = _null_config(args, cfg, T)
    if T not in q_by_length:
      q_by_length[T] = threshold(conf, model, threads=threads)
    try:
      rep = detect_multi_window(track, conf, model, q=q_by_length[T], classify=classify, leaf_cfg=cfg.leaf)
    except LinwalkError as e:
      print(f"  ⚠️ [{k}/{len(tracks)}] {track.id}: {e}")
      reports.append(failed_report(track, conf, model, e))
      continue
    cps = ", ".join(f"{cp.index}({cp.label})" for cp in rep.change_points) or "none"
    print(f"  ✓ [{k}/{len(tracks)}] {track.id}: M={rep.M:.3f} Q={rep.Q:.3f} {rep.verdict}; change points: {cps}")
    reports.append(rep)
  return reports

def _write_leaves(track: Track, windows: Sequence[int], model: str, markers, out_dir: Path, cfg: AppCfg) -> List[Path]:
  ensure_dir(out_dir)
  written: List[Path] = []
  for h in windows:
    if len(track) < 2 * h + 1:
      continue
    series = leaf_series(track, h, model, markers)
    stem = f"{_safe_name(track.id)}_h{h}"
    written.append(render_svg(series, out_dir / f"{stem}.svg", cfg.leaf))
    written.append(write_leaf_csv(series, out_dir / f"{stem}.csv"))
  return written

def cmd_detect(args, cfg: AppCfg) -> Path:
  tracks = read_tracks(args.input)
  _banner(f"🔍 DETECTING CHANGE POINTS IN {len(tracks)} TRACK(S)")
  classify = cfg.detection.classify and not args.no_classify
  reports = _detect_all(tracks, args, cfg, classify)
  out = _out(args, Path(cfg.output.root_dir) / "reports.json")
  ensure_dir(out.parent)
  write_reports(reports, out)
  _finish(out, cfg)
  if args.leaf_dir:
    model = _model(args, cfg)
    for track, rep in zip(tracks, reports):
      if rep.error is None:
        _write_leaves(track, rep.config.windows, model, rep.change_points, Path(args.leaf_dir), cfg)
    print(f"✓ Leaf plots in {args.leaf_dir}")
  return out

def cmd_leafplot(args, cfg: AppCfg) -> Path:
  tracks = read_tracks(args.input)
  model = _model(args, cfg)
  out_dir = _out(args, Path(cfg.output.root_dir) / "leaf")
  _banner(f"🍃 LEAF PLOTS FOR {len(tracks)} TRACK(S)")
  windows = sorted(set(_windows(args, cfg)))
  if args.no_detect:
    markers = {tr.id: [] for tr in tracks}
  else:
    reports = _detect_all(tracks, args, cfg, classify=True)
    markers = {rep.track_id: rep.change_points for rep in reports}
  n = 0
  for track in tracks:
    n += len(_write_leaves(track, windows, model, markers.get(track.id, []), out_dir, cfg))
  print(f"✓ Wrote {n} file(s) to {out_dir}")
  return out_dir

def cmd_refit(args, cfg: AppCfg) -> Path:
  tracks = read_tracks(args.input)
  model = _model(args, cfg)
  out_dir = ensure_dir(_out(args, Path(cfg.output.root_dir) / "refit"))
  _banner(f"🔁 REFITTING {len(tracks)} TRACK(S)")
  reports = _detect_all(tracks, args, cfg, classify=False)
  h = min(_windows(args, cfg))
  seed = _seed(args, cfg)
  for k, (track, rep) in enumerate(zip(tracks, reports)):
    if rep.error is not None:
      continue
    try:
      spec = piecewise_refit(track, rep.indices, h, model)
    except (EstimationError, ValidationError) as e:
      print(f"  ⚠️ {track.id}: refit failed: {e}")
      continue
    stem = _safe_name(track.id)
    write_spec(spec, out_dir / f"{stem}_spec.yaml")
    if args.resimulate:
      sims = simulate_many(spec, seed, args.resimulate, prefix=f"{stem}_resim", first_stream=k * args.resimulate)
      write_tracks(sims, out_dir / f"{stem}_resim.csv")
    print(f"  ✓ {track.id}: {len(spec.change_points) + 1} segment(s), sigma2={spec.sigma2:.4g}")
  print(f"✓ Refit results in {out_dir}")
  return out_dir

def _common_flags() -> argparse.ArgumentParser:
  # SUPPRESS lets the flags appear before or after the subcommand
  p = argparse.ArgumentParser(add_help=False)
  p.add_argument("--config", default=argparse.SUPPRESS, help="Path to config YAML")
  p.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="Master seed (unsigned 64-bit)")
  p.add_argument("--model", choices=["lw", "rw"], default=argparse.SUPPRESS, help="Linear Walk or Random Walk")
  p.add_argument("--out", default=argparse.SUPPRESS, help="Output file or directory")
  p.add_argument("-v", "--verbose", action="count", default=argparse.SUPPRESS, help="-v info, -vv debug")
  return p

def _detection_flags(p: argparse.ArgumentParser) -> None:
  p.add_argument("--windows", help="Comma list of window widths h, e.g. 30,50,100")
  p.add_argument("--alpha", type=float, help="Significance level in (0, 1)")
  p.add_argument("--sims", type=int, help="Number of null simulations S")
  p.add_argument("--null", dest="null_kind", choices=["studentized", "gamma"],
                 help="Null process behind Q: studentized G (default) or the limit process Gamma")

def build_parser() -> argparse.ArgumentParser:
  common = _common_flags()
  ap = argparse.ArgumentParser(prog="linwalk", parents=[common],
                               description="Change point detection for planar Linear Walk / Random Walk tracks")
  sub = ap.add_subparsers(dest="command", required=True)

  sp = sub.add_parser("simulate", parents=[common], help="Simulate tracks")
  sp.add_argument("--thetas", help="Directions in degrees, one per segment")
  sp.add_argument("--r", help="Step lengths, one per segment (a single value applies to all)")
  sp.add_argument("--sigma2", type=float, help="Noise variance")
  sp.add_argument("--T", type=int, help="Track length")
  sp.add_argument("--cps", help="Change points, comma list")
  sp.add_argument("--b1", help="Start offset x,y")
  sp.add_argument("--n", type=int, help="Number of tracks")
  sp.add_argument("--spec", help="Model spec YAML instead of the flags above")
  sp.set_defaults(handler=cmd_simulate)

  tp = sub.add_parser("threshold", parents=[common], help="Simulate the rejection threshold Q")
  tp.add_argument("--T", type=int, help="Track length")
  _detection_flags(tp)
  tp.set_defaults(handler=cmd_threshold)

  dp = sub.add_parser("detect", parents=[common], help="Test and locate change points")
  dp.add_argument("--input", required=True, help="Track CSV")
  _detection_flags(dp)
  dp.add_argument("--no-classify", action="store_true", help="Skip leaf-plot classification")
  dp.add_argument("--leaf-dir", help="Also write leaf SVG/CSV per track here")
  dp.set_defaults(handler=cmd_detect)

  lp = sub.add_parser("leafplot", parents=[common], help="Leaf plot SVG and CSV per track and window")
  lp.add_argument("--input", required=True, help="Track CSV")
  _detection_flags(lp)
  lp.add_argument("--no-detect", action="store_true", help="Do not run detection for markers")
  lp.set_defaults(handler=cmd_leafplot)

  rp = sub.add_parser("refit", parents=[common], help="Piecewise refit and resimulate")
  rp.add_argument("--input", required=True, help="Track CSV")
  _detection_flags(rp)
  rp.add_argument("--resimulate", type=int, default=0, help="Resimulated tracks per input track")
  rp.set_defaults(handler=cmd_refit)
  return ap

def _setup_logging(verbosity: int) -> None:
  level = logging.WARNING if verbosity <= 0 else (logging.INFO if verbosity == 1 else logging.DEBUG)
  logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
  logging.getLogger("linwalk").setLevel(level)

def main(argv: Optional[Sequence[str]] = None) -> int:
  ap = build_parser()
  try:
    args = ap.parse_args(argv)
  except SystemExit as e:
    return int(e.code or 0)
  _setup_logging(int(getattr(args, "verbose", 0) or 0))
  try:
    cfg = load_config(getattr(args, "config", None))
    args.handler(args, cfg)
  except UsageError as e:
    print(f"linwalk {args.command}: error: {e}", file=sys.stderr)
    return EXIT_VALIDATION
  except ValidationError as e:
    print(f"❌ Invalid parameters:\n{e}", file=sys.stderr)
    return EXIT_VALIDATION
  except TrackFormatError as e:
    print(f"❌ Malformed track file: {e}", file=sys.stderr)
    return EXIT_VALIDATION
  except OSError as e:
    print(f"❌ I/O error: {e}", file=sys.stderr)
    return EXIT_IO
  except (ValueError, LinwalkError, yaml.YAMLError) as e:
    print(f"❌ {e}", file=sys.stderr)
    return EXIT_VALIDATION
  return EXIT_OK

if __name__ == "__main__":
  sys.exit(main())
