from __future__ import annotations
import hashlib
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Iterable, List, Optional, TypeVar

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

THREADS_ENV = "LINWALK_THREADS"

def ensure_dir(path: str | Path) -> Path:
  p = Path(path)
  p.mkdir(parents=True, exist_ok=True)
  return p

def sha256_file(path: str | Path) -> str:
  h = hashlib.sha256()
  with open(path, "rb") as f:
    for chunk in iter(lambda: f.read(1024 * 1024), b""):
      h.update(chunk)
  return h.hexdigest()

def write_checksum(path: str | Path) -> Path:
  p = Path(path)
  side = p.with_name(p.name + ".sha256")
  side.write_text(f"{sha256_file(p)}  {p.name}\n", encoding="utf-8")
  return side

def resolve_threads(requested: Optional[int] = None) -> int:
  """Worker count: the request (or CPU count) capped by LINWALK_THREADS."""
  n = requested if requested and requested > 0 else (os.cpu_count() or 1)
  raw = os.environ.get(THREADS_ENV, "").strip()
  if raw:
    try:
      cap = int(raw)
    except ValueError:
      logger.warning("ignoring non-integer %s=%r", THREADS_ENV, raw)
    else:
      if cap >= 1:
        n = min(n, cap)
  return max(1, n)

def parallel_map(fn: Callable[[T], R], items: Iterable[T], threads: Optional[int] = None) -> List[R]:
  """Map fn over items, returning results in input order."""
  items = list(items)
  n = min(resolve_threads(threads), max(1, len(items)))
  if n == 1:
    return [fn(x) for x in items]
  with ThreadPoolExecutor(max_workers=n) as pool:
    return list(pool.map(fn, items))

def parse_int_list(text: str) -> List[int]:
  return [int(tok) for tok in _split(text)]

def parse_float_list(text: str) -> List[float]:
  return [float(tok) for tok in _split(text)]

def _split(text: str) -> List[str]:
  toks = [tok.strip() for tok in str(text).split(",")]
  if any(tok == "" for tok in toks):
    raise ValueError(f"malformed comma list: {text!r}")
  return toks
