"""Event sequences and spike trains: containers, file IO, splitting, encoding.

Event files are line-delimited JSON: a header object
``{"num_types": E, "horizon": T}`` followed by one ``{"t": ..., "e": ...}``
object per event, sorted by time. Timestamps are float64 and round-trip
bit-exactly through the writer/parser pair.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .errors import EventFileError, ValidationError

# Same-type ties are separated by this jitter when events become spike times;
# spike trains must be strictly increasing.
EPS_TIE = 1e-9


def _as_readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class EventSequence:
    """Time-ordered marked events on [0, horizon] with types in [0, num_types).

    Immutable after construction. Timestamps are non-decreasing; equal
    timestamps are allowed only across distinct event types.
    """

    times: np.ndarray
    types: np.ndarray
    num_types: int
    horizon: float

    def __post_init__(self):
        times = _as_readonly(np.asarray(self.times, dtype=np.float64))
        types = _as_readonly(np.asarray(self.types, dtype=np.int64))
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "types", types)
        if times.ndim != 1 or types.ndim != 1 or times.shape != types.shape:
            raise ValidationError("times and types must be 1-d arrays of equal length")
        if not (isinstance(self.horizon, (int, float)) and np.isfinite(self.horizon) and self.horizon > 0):
            raise ValidationError(f"horizon must be positive and finite, got {self.horizon!r}")
        if not (isinstance(self.num_types, (int, np.integer)) and self.num_types >= 1):
            raise ValidationError(f"num_types must be a positive integer, got {self.num_types!r}")
        object.__setattr__(self, "horizon", float(self.horizon))
        object.__setattr__(self, "num_types", int(self.num_types))
        if times.size:
            if not np.all(np.isfinite(times)):
                raise ValidationError("event timestamps must be finite")
            if times[0] < 0.0 or times[-1] > self.horizon:
                raise ValidationError("event timestamps must lie in [0, horizon]")
            if np.any(np.diff(times) < 0.0):
                raise ValidationError("event timestamps must be non-decreasing")
            if np.any(types < 0) or np.any(types >= self.num_types):
                raise ValidationError("event types must lie in [0, num_types)")
            _check_ties(times, types)

    def __len__(self) -> int:
        return int(self.times.size)

    def __iter__(self) -> Iterator[tuple[float, int]]:
        return zip(self.times.tolist(), self.types.tolist())

    def counts(self) -> np.ndarray:
        """Event count per type, shape (num_types,)."""
        return np.bincount(self.types, minlength=self.num_types).astype(np.int64)


def _check_ties(times: np.ndarray, types: np.ndarray) -> None:
    # Within a run of equal timestamps every type must be distinct.
    eq = np.flatnonzero(np.diff(times) == 0.0)
    if eq.size == 0:
        return
    start = None
    prev = -2
    for k in eq:
        if k != prev + 1:
            if start is not None:
                _check_tie_run(times, types, start, prev + 2)
            start = k
        prev = k
    _check_tie_run(times, types, start, prev + 2)


def _check_tie_run(times: np.ndarray, types: np.ndarray, lo: int, hi: int) -> None:
    run = types[lo:hi]
    if np.unique(run).size != run.size:
        raise ValidationError(
            f"events of the same type share timestamp {times[lo]!r}"
        )


@dataclass(frozen=True)
class SpikeTrain:
    """Strictly increasing spike times for one neuron."""

    neuron_id: int
    times: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self):
        times = _as_readonly(np.asarray(self.times, dtype=np.float64))
        object.__setattr__(self, "times", times)
        if times.ndim != 1:
            raise ValidationError("spike times must be a 1-d array")
        if times.size:
            if not np.all(np.isfinite(times)) or times[0] < 0.0:
                raise ValidationError("spike times must be finite and non-negative")
            if np.any(np.diff(times) <= 0.0):
                raise ValidationError(f"spike times of neuron {self.neuron_id} must be strictly increasing")

    def __len__(self) -> int:
        return int(self.times.size)


def _open_lines(source) -> Iterable[str]:
    if isinstance(source, (str, Path)):
        with open(source, "rb") as fh:
            yield from io.TextIOWrapper(fh, encoding="utf-8")
    elif isinstance(source, bytes):
        yield from io.StringIO(source.decode("utf-8"))
    else:
        for line in source:
            yield line.decode("utf-8") if isinstance(line, bytes) else line


def parse_event_file(source) -> EventSequence:
    """Parse an event file (path, bytes, or line iterable) into an EventSequence.

    Unknown or missing keys, out-of-range values, and ordering violations are
    rejected with the offending line number.
    """
    header = None
    times: list[float] = []
    types: list[int] = []
    line_no = 0
    for raw in _open_lines(source):
        line_no += 1
        line = raw.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise EventFileError(f"invalid JSON ({exc.msg})", line_no) from None
        if not isinstance(obj, dict):
            raise EventFileError("expected a JSON object", line_no)
        if header is None:
            if set(obj) != {"num_types", "horizon"}:
                raise EventFileError('header must have exactly the keys "num_types" and "horizon"', line_no)
            if not isinstance(obj["num_types"], int) or obj["num_types"] < 1:
                raise EventFileError("num_types must be a positive integer", line_no)
            if not isinstance(obj["horizon"], (int, float)) or not np.isfinite(obj["horizon"]) or obj["horizon"] <= 0:
                raise EventFileError("horizon must be positive and finite", line_no)
            header = (int(obj["num_types"]), float(obj["horizon"]))
            continue
        if set(obj) != {"t", "e"}:
            raise EventFileError('event records must have exactly the keys "t" and "e"', line_no)
        t, e = obj["t"], obj["e"]
        if isinstance(t, bool) or not isinstance(t, (int, float)) or not np.isfinite(t):
            raise EventFileError(f"timestamp must be a finite number, got {t!r}", line_no)
        if isinstance(t, bool) or isinstance(e, bool) or not isinstance(e, int):
            raise EventFileError(f"event type must be an integer, got {e!r}", line_no)
        t = float(t)
        if t < 0.0:
            raise EventFileError(f"negative timestamp {t!r}", line_no)
        if t > header[1]:
            raise EventFileError(f"timestamp {t!r} exceeds horizon {header[1]!r}", line_no)
        if not 0 <= e < header[0]:
            raise EventFileError(f"event type {e} outside [0, {header[0]})", line_no)
        if times and t < times[-1]:
            raise EventFileError(f"timestamp {t!r} is out of order", line_no)
        times.append(t)
        types.append(e)
    if header is None:
        raise EventFileError("empty event file: missing header")
    try:
        return EventSequence(np.array(times), np.array(types, dtype=np.int64), header[0], header[1])
    except ValidationError as exc:
        raise EventFileError(str(exc)) from None


def serialize_events(seq: EventSequence) -> str:
    lines = [json.dumps({"num_types": seq.num_types, "horizon": seq.horizon})]
    for t, e in seq:
        lines.append(json.dumps({"t": t, "e": e}))
    return "\n".join(lines) + "\n"


def write_event_file(seq: EventSequence, path) -> None:
    Path(path).write_text(serialize_events(seq), encoding="utf-8")


def split_train_test(seq: EventSequence, fraction: float) -> tuple[EventSequence, EventSequence]:
    """Split at t* = fraction * horizon.

    Train keeps [0, t*) with horizon t*; test keeps [t*, horizon] shifted so
    its clock starts at 0, with horizon (1 - fraction) * horizon.
    """
    if not (isinstance(fraction, (int, float)) and 0.0 < fraction < 1.0):
        raise ValidationError(f"split fraction must lie in (0, 1), got {fraction!r}")
    t_star = float(fraction) * seq.horizon
    cut = int(np.searchsorted(seq.times, t_star, side="left"))
    train = EventSequence(seq.times[:cut], seq.types[:cut], seq.num_types, t_star)
    test = EventSequence(seq.times[cut:] - t_star, seq.types[cut:], seq.num_types, seq.horizon - t_star)
    return train, test


def encode_as_spikes(seq: EventSequence, eps_tie: float = EPS_TIE) -> list[SpikeTrain]:
    """One spike train per event type; same-type ties jittered apart by eps_tie."""
    trains = []
    for e in range(seq.num_types):
        times = seq.times[seq.types == e].copy()
        for k in range(1, times.size):
            if times[k] <= times[k - 1]:
                times[k] = times[k - 1] + eps_tie
        trains.append(SpikeTrain(neuron_id=e, times=times))
    return trains
