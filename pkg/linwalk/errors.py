from __future__ import annotations
from typing import List, Optional, Sequence, Tuple

class LinwalkError(RuntimeError):
  """Base class for every error raised by linwalk."""

class InvalidWindowError(LinwalkError, ValueError):
  def __init__(self, h: int, minimum: int, what: str = "window"):
    self.h = h
    self.minimum = minimum
    super().__init__(f"{what} width h={h} is invalid (need h >= {minimum})")

class TrackTooShortError(LinwalkError, ValueError):
  def __init__(self, length: int, h: int):
    self.length = length
    self.h = h
    super().__init__(f"track of length T={length} is too short for window h={h} (need T >= {2 * h + 1})")

class DegenerateTrackError(LinwalkError):
  def __init__(self, index: int, h: int):
    self.index = index
    self.h = h
    super().__init__(f"both window variance estimates are zero at center i={index} (h={h})")

class EstimationError(LinwalkError):
  def __init__(self, message: str, segments: Optional[Sequence[Tuple[int, int]]] = None):
    self.segments: List[Tuple[int, int]] = list(segments or [])
    super().__init__(message)

class TrackFormatError(LinwalkError, ValueError):
  def __init__(self, message: str, row: Optional[int] = None, line: Optional[int] = None):
    self.row = row
    self.line = line
    where = []
    if line is not None:
      where.append(f"line {line}")
    if row is not None:
      where.append(f"row {row}")
    prefix = f"{', '.join(where)}: " if where else ""
    super().__init__(prefix + message)

class DomainError(LinwalkError, ValueError):
  pass
