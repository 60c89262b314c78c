"""Demonstration and trial traces, plus their text file formats.

Trace CSV::

    # key=value                    (reproducibility header, one per line)
    # fired=<tick>[-<tick>]:<tid>  (firing runs; a range means every tick)
    # final_sensed=<f>;<f>;...
    t,x0,...,x{d-1},u0,...,u{c-1},transition

Floats use Python's shortest round-trip ``repr``. The ``transition`` column
holds the active transition, i.e. the most recently fired one.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "Demonstration",
    "LabeledDemonstration",
    "write_trace_csv",
    "read_trace_csv",
    "write_labels",
    "read_labels",
    "parse_config",
    "ConfigError",
    "save_corpus",
    "load_corpus",
]

LABELS_FILE = "labels.txt"


@dataclass
class Demonstration:
    """Fixed-tick record of sensed states, controls and transition activity.

    ``fired`` lists ``(tick, transition id)`` events; ticks equal to
    ``len(self)`` refer to the terminal tick whose sensed state is
    ``final_sensed`` (no control is applied there).
    """

    tick: float
    sensed: np.ndarray
    controls: np.ndarray
    active: list[str]
    fired: list[tuple[int, str]] = field(default_factory=list)
    final_sensed: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.sensed = np.asarray(self.sensed, dtype=float).reshape(len(self.active), -1) \
            if len(self.active) else np.asarray(self.sensed, dtype=float).reshape(0, -1 if np.size(self.sensed) else 0)
        self.controls = np.asarray(self.controls, dtype=float).reshape(len(self.active), -1) \
            if len(self.active) else np.asarray(self.controls, dtype=float).reshape(0, -1 if np.size(self.controls) else 0)

    def __len__(self) -> int:
        return len(self.active)

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self)) * self.tick

    @property
    def terminal(self) -> str | None:
        return self.metadata.get("terminal")

    def sensed_at(self, k: int) -> np.ndarray:
        if k < len(self):
            return self.sensed[k]
        if self.final_sensed is None:
            raise IndexError(k)
        return self.final_sensed

    def fired_ids(self) -> list[str]:
        """Distinct fired transitions in first-firing order."""
        seen: dict[str, None] = {}
        for _, tid in self.fired:
            seen.setdefault(tid, None)
        return list(seen)

    def last_firing_state(self, tid: str) -> np.ndarray | None:
        for k, t in reversed(self.fired):
            if t == tid:
                return self.sensed_at(k)
        return None

    def segment_mask(self, tid: str) -> np.ndarray:
        return np.array([a == tid for a in self.active], dtype=bool)


@dataclass
class LabeledDemonstration:
    trace: Demonstration
    success: bool
    overall_score: float
    per_transition_scores: dict[str, float]
    demo_id: str = ""
    variant: str = ""

    def __post_init__(self):
        if not 0.0 <= self.overall_score <= 1.0:
            raise ValueError(f"overall score {self.overall_score} outside [0, 1]")
        fired = set(self.trace.fired_ids())
        extra = set(self.per_transition_scores) - fired
        if extra:
            raise ValueError(f"scores given for transitions that never fired: {sorted(extra)}")


def _f(v) -> str:
    return repr(float(v))


def _fired_runs(fired: list[tuple[int, str]]) -> list[str]:
    runs: list[list] = []
    for k, tid in fired:
        if runs and runs[-1][2] == tid and runs[-1][1] == k - 1:
            runs[-1][1] = k
        else:
            runs.append([k, k, tid])
    return [f"{a}:{t}" if a == b else f"{a}-{b}:{t}" for a, b, t in runs]


def write_trace_csv(trace: Demonstration, path=None, header: dict | None = None) -> str:
    """Serialize ``trace``; writes to ``path`` when given and returns the text."""
    buf = io.StringIO()
    meta = dict(trace.metadata)
    meta["tick"] = trace.tick
    if header:
        meta.update(header)
    for k in sorted(meta):
        buf.write(f"# {k}={meta[k]}\n")
    if trace.fired:
        buf.write("# fired=" + ",".join(_fired_runs(trace.fired)) + "\n")
    if trace.final_sensed is not None:
        buf.write("# final_sensed=" + ";".join(_f(v) for v in trace.final_sensed) + "\n")
    d = trace.sensed.shape[1] if trace.sensed.ndim == 2 else 0
    c = trace.controls.shape[1] if trace.controls.ndim == 2 else 0
    if len(trace) == 0:
        d = len(trace.final_sensed) if trace.final_sensed is not None else d
        c = int(meta.get("control_dim", c))
    cols = ["t"] + [f"x{i}" for i in range(d)] + [f"u{i}" for i in range(c)] + ["transition"]
    buf.write(",".join(cols) + "\n")
    for k in range(len(trace)):
        row = [_f(k * trace.tick)] + [_f(v) for v in trace.sensed[k]] + [_f(v) for v in trace.controls[k]]
        row.append(trace.active[k])
        buf.write(",".join(row) + "\n")
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def _meta_value(s: str):
    for conv in (int, float):
        try:
            return conv(s)
        except ValueError:
            pass
    return s


def read_trace_csv(path_or_text) -> Demonstration:
    text = path_or_text
    if isinstance(path_or_text, Path) or (isinstance(path_or_text, str) and "\n" not in path_or_text):
        text = Path(path_or_text).read_text(encoding="utf-8")
    meta: dict = {}
    fired: list[tuple[int, str]] = []
    final = None
    lines = text.splitlines()
    i = 0
    while i < len(lines) and lines[i].startswith("#"):
        key, _, val = lines[i][2:].partition("=")
        if key == "fired":
            for run in val.split(","):
                span, _, tid = run.partition(":")
                a, _, b = span.partition("-")
                fired.extend((k, tid) for k in range(int(a), int(b or a) + 1))
        elif key == "final_sensed":
            final = np.array([float(v) for v in val.split(";")])
        else:
            meta[key] = _meta_value(val)
        i += 1
    cols = lines[i].split(",")
    d = sum(1 for c in cols if c.startswith("x"))
    c = sum(1 for c in cols if c.startswith("u"))
    rows = [ln.split(",") for ln in lines[i + 1:] if ln]
    sensed = np.array([[float(v) for v in r[1:1 + d]] for r in rows]).reshape(len(rows), d)
    controls = np.array([[float(v) for v in r[1 + d:1 + d + c]] for r in rows]).reshape(len(rows), c)
    active = [r[-1] for r in rows]
    tick = float(meta.pop("tick", 1e-3))
    return Demonstration(tick, sensed, controls, active, fired, final, meta)


def write_labels(demos: list[LabeledDemonstration], path=None, header: dict | None = None) -> str:
    """One line per demo: ``demo_id success overall t<i>:<score> ...``.

    ``header`` entries are written first as ``# key=value`` comment lines.
    """
    lines = [f"# {k}={v}" for k, v in sorted((header or {}).items())]
    for d in demos:
        parts = [d.demo_id, "1" if d.success else "0", _f(d.overall_score)]
        parts += [f"{tid}:{_f(s)}" for tid, s in d.per_transition_scores.items()]
        lines.append(" ".join(parts))
    text = "\n".join(lines) + "\n"
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


@dataclass
class LabelRecord:
    demo_id: str
    success: bool
    overall_score: float
    per_transition_scores: dict[str, float]


def read_labels(path_or_text) -> list[LabelRecord]:
    text = path_or_text
    if isinstance(path_or_text, Path) or (isinstance(path_or_text, str) and "\n" not in path_or_text):
        text = Path(path_or_text).read_text(encoding="utf-8")
    out = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        toks = line.split()
        if len(toks) < 3 or toks[1] not in ("0", "1"):
            raise ValueError(f"label line {lineno}: expected 'demo_id success(0|1) overall_score ...'")
        scores = {}
        for tok in toks[3:]:
            tid, _, s = tok.partition(":")
            scores[tid] = float(s)
        out.append(LabelRecord(toks[0], toks[1] == "1", float(toks[2]), scores))
    return out


class ConfigError(ValueError):
    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        super().__init__(f"line {lineno}: {message}" if lineno else message)


def parse_config(text: str) -> dict:
    """``key=value`` lines; ``#`` comments; values converted to int/float when possible."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if not sep or not key:
            raise ConfigError(f"expected key=value, got {raw.strip()!r}", lineno)
        out[key] = _meta_value(val)
    return out


def save_corpus(demos: list[LabeledDemonstration], directory, header: dict | None = None) -> list[Path]:
    """Write ``<demo_id>.csv`` per demonstration plus the label file."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = []
    for demo in demos:
        p = d / f"{demo.demo_id}.csv"
        write_trace_csv(demo.trace, p, header)
        paths.append(p)
    write_labels(demos, d / LABELS_FILE, header)
    return paths


def load_corpus(directory) -> list[LabeledDemonstration]:
    """Inverse of :func:`save_corpus`; demonstrations come back in label-file order."""
    d = Path(directory)
    labels = d / LABELS_FILE
    if not labels.is_file():
        raise FileNotFoundError(str(labels))
    out = []
    for rec in read_labels(labels):
        p = d / f"{rec.demo_id}.csv"
        if not p.is_file():
            raise FileNotFoundError(str(p))
        trace = read_trace_csv(p)
        out.append(LabeledDemonstration(trace, rec.success, rec.overall_score, rec.per_transition_scores,
                                        rec.demo_id, str(trace.metadata.get("variant", ""))))
    return out
