"""BVH (BioVision Hierarchy) parsing, serialization and validation."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

CHANNEL_NAMES = (
    "Xposition", "Yposition", "Zposition",
    "Xrotation", "Yrotation", "Zrotation",
)
LABELS = ("angry", "depressed", "neutral", "proud", "other")


class BVHError(ValueError):
    """Base class for BVH parse/format errors; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class MalformedHierarchy(BVHError):
    pass


class FrameCountMismatch(BVHError):
    pass


class ChannelArityMismatch(BVHError):
    pass


class NonNumericValue(BVHError):
    pass


@dataclass
class Joint:
    name: str
    offset: tuple[float, float, float] = (0.0, 0.0, 0.0)
    channels: list[str] = field(default_factory=list)
    children: list["Joint"] = field(default_factory=list)
    is_end_site: bool = False

    def walk(self):
        """Yield joints depth-first in declaration order."""
        yield self
        for child in self.children:
            yield from child.walk()


@dataclass
class Skeleton:
    root: Joint

    def __post_init__(self):
        self.joints: list[Joint] = list(self.root.walk())
        self.joint_index: list[tuple[str, int]] = []
        offset = 0
        for joint in self.joints:
            self.joint_index.append((joint.name, offset))
            offset += len(joint.channels)
        self.total_channels = offset

    @property
    def joint_names(self) -> list[str]:
        return [j.name for j in self.joints]

    def rotation_columns(self) -> list[int]:
        cols = []
        for joint, (_, start) in zip(self.joints, self.joint_index):
            cols.extend(start + k for k, ch in enumerate(joint.channels) if ch.endswith("rotation"))
        return cols

    def position_columns(self) -> list[int]:
        rot = set(self.rotation_columns())
        return [c for c in range(self.total_channels) if c not in rot]

    def __eq__(self, other):
        return isinstance(other, Skeleton) and self.root == other.root


@dataclass
class MotionClip:
    frame_time: float
    frames: np.ndarray
    label: str = "other"
    provenance: str = "real"
    source_id: str = ""
    reference_id: str = ""

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim == 1:
            self.frames = self.frames.reshape(-1, 1)

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def n_channels(self) -> int:
        return self.frames.shape[1]

    @property
    def duration(self) -> float:
        return self.n_frames * self.frame_time

    def replace(self, **changes) -> "MotionClip":
        kwargs = dict(
            frame_time=self.frame_time, frames=self.frames, label=self.label,
            provenance=self.provenance, source_id=self.source_id,
            reference_id=self.reference_id,
        )
        kwargs.update(changes)
        return MotionClip(**kwargs)


_TOKEN = re.compile(r"\S+")


def _tokenize(text: str) -> list[tuple[str, int]]:
    tokens = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        for m in _TOKEN.finditer(line):
            tokens.append((m.group(), lineno))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.pos = 0

    @property
    def line(self) -> int | None:
        if self.pos < len(self.tokens):
            return self.tokens[self.pos][1]
        return self.tokens[-1][1] if self.tokens else None

    def peek(self) -> str | None:
        return self.tokens[self.pos][0] if self.pos < len(self.tokens) else None

    def next(self, what: str = "token") -> str:
        if self.pos >= len(self.tokens):
            raise MalformedHierarchy(f"unexpected end of file, expected {what}", self.line)
        tok = self.tokens[self.pos][0]
        self.pos += 1
        return tok

    def expect(self, keyword: str) -> None:
        line = self.line
        tok = self.next(keyword)
        if tok != keyword:
            raise MalformedHierarchy(f"expected {keyword!r}, got {tok!r}", line)

    def number(self) -> float:
        line = self.line
        tok = self.next("number")
        try:
            value = float(tok)
        except ValueError:
            raise NonNumericValue(f"non-numeric value {tok!r}", line) from None
        return value

    def joint_body(self, name: str, parent_name: str | None) -> Joint:
        self.expect("{")
        self.expect("OFFSET")
        offset = (self.number(), self.number(), self.number())
        joint = Joint(name=name, offset=offset)
        if self.peek() != "CHANNELS":
            raise MalformedHierarchy(f"joint {name!r} is missing CHANNELS", self.line)
        self.next()
        line = self.line
        count_tok = self.next("channel count")
        if not count_tok.isdigit():
            raise MalformedHierarchy(f"bad channel count {count_tok!r}", line)
        for _ in range(int(count_tok)):
            line = self.line
            ch = self.next("channel name")
            if ch not in CHANNEL_NAMES:
                raise MalformedHierarchy(f"unknown channel {ch!r}", line)
            joint.channels.append(ch)
        while True:
            line = self.line
            tok = self.next("'}'")
            if tok == "}":
                return joint
            if tok == "JOINT":
                child_name = self.next("joint name")
                joint.children.append(self.joint_body(child_name, name))
            elif tok == "End":
                self.expect("Site")
                joint.children.append(self.end_site(name))
            else:
                raise MalformedHierarchy(f"unexpected token {tok!r} in joint {name!r}", line)

    def end_site(self, parent_name: str) -> Joint:
        self.expect("{")
        self.expect("OFFSET")
        offset = (self.number(), self.number(), self.number())
        self.expect("}")
        return Joint(name=f"{parent_name}_end", offset=offset, is_end_site=True)


def parse_bvh(text: str, label: str = "other", source_id: str = "") -> tuple[Skeleton, MotionClip]:
    """Parse a BVH document into its skeleton and motion clip.

    Raises a ``BVHError`` subclass naming the offending line on malformed input.
    """
    p = _Parser(text)
    p.expect("HIERARCHY")
    p.expect("ROOT")
    root_name = p.next("root name")
    root = p.joint_body(root_name, None)
    skeleton = Skeleton(root)

    p.expect("MOTION")
    p.expect("Frames:")
    line = p.line
    frames_tok = p.next("frame count")
    if not frames_tok.isdigit():
        raise NonNumericValue(f"bad frame count {frames_tok!r}", line)
    n_frames = int(frames_tok)
    p.expect("Frame")
    p.expect("Time:")
    frame_time = p.number()

    # motion rows are line-oriented: group remaining tokens by source line
    rows: list[list[tuple[str, int]]] = []
    last_line = None
    for tok, lineno in p.tokens[p.pos:]:
        if lineno != last_line:
            rows.append([])
            last_line = lineno
        rows[-1].append((tok, lineno))
    if len(rows) != n_frames:
        raise FrameCountMismatch(
            f"declared {n_frames} frames but found {len(rows)} motion rows", p.line
        )
    C = skeleton.total_channels
    data = np.empty((n_frames, C), dtype=np.float64)
    for f, row in enumerate(rows):
        if len(row) != C:
            raise ChannelArityMismatch(
                f"frame {f} has {len(row)} values, expected {C}", row[0][1]
            )
        for c, (tok, lineno) in enumerate(row):
            try:
                data[f, c] = float(tok)
            except ValueError:
                raise NonNumericValue(f"non-numeric value {tok!r}", lineno) from None
    clip = MotionClip(frame_time=frame_time, frames=data, label=label, source_id=source_id)
    return skeleton, clip


def read_bvh(path, label: str = "other") -> tuple[Skeleton, MotionClip]:
    with open(path, "r", newline=None) as fh:
        return parse_bvh(fh.read(), label=label, source_id=str(path))


def _fmt(x: float) -> str:
    s = f"{x:.6f}"
    return "0.000000" if s == "-0.000000" else s


def _write_joint(joint: Joint, depth: int, out: list[str], keyword: str) -> None:
    ind = "  " * depth
    if joint.is_end_site:
        out.append(f"{ind}End Site")
    else:
        out.append(f"{ind}{keyword} {joint.name}")
    out.append(f"{ind}{{")
    out.append(f"{ind}  OFFSET {' '.join(_fmt(v) for v in joint.offset)}")
    if not joint.is_end_site:
        out.append(f"{ind}  CHANNELS {len(joint.channels)}" + "".join(f" {c}" for c in joint.channels))
        for child in joint.children:
            _write_joint(child, depth + 1, out, "JOINT")
    out.append(f"{ind}}}")


def write_bvh(skeleton: Skeleton, clip: MotionClip) -> str:
    """Serialize to BVH text with fixed 6-digit fractional formatting."""
    if clip.n_channels != skeleton.total_channels:
        raise ChannelArityMismatch(
            f"clip has {clip.n_channels} channels, skeleton has {skeleton.total_channels}"
        )
    out = ["HIERARCHY"]
    _write_joint(skeleton.root, 0, out, "ROOT")
    out.append("MOTION")
    out.append(f"Frames: {clip.n_frames}")
    out.append(f"Frame Time: {clip.frame_time:.7f}")
    for row in clip.frames:
        out.append(" ".join(_fmt(v) for v in row))
    return "\n".join(out) + "\n"


@dataclass(frozen=True)
class Violation:
    kind: str
    frame: int | None = None
    col: int | None = None
    joint: str | None = None
    detail: str = ""

    def __str__(self):
        where = ", ".join(
            f"{k}:{v}" for k, v in (("joint", self.joint), ("frame", self.frame), ("col", self.col))
            if v is not None
        )
        return f"{self.kind}{{{where}}}" + (f" {self.detail}" if self.detail else "")


def validate(skeleton: Skeleton, clip: MotionClip) -> list[Violation]:
    """Check type invariants; returns an empty list when everything holds."""
    out: list[Violation] = []
    for joint in skeleton.joints:
        if joint.is_end_site and (joint.channels or joint.children):
            out.append(Violation("EndSiteHasChannels", joint=joint.name))
        if len(set(joint.channels)) != len(joint.channels):
            out.append(Violation("DuplicateChannel", joint=joint.name))
    if not (clip.frame_time > 0 and math.isfinite(clip.frame_time)):
        out.append(Violation("NonPositiveFrameTime", detail=str(clip.frame_time)))
    if clip.label not in LABELS:
        out.append(Violation("UnknownLabel", detail=clip.label))
    if clip.provenance not in ("real", "synthetic"):
        out.append(Violation("UnknownProvenance", detail=clip.provenance))
    frames = clip.frames
    if frames.shape[0] < 1:
        out.append(Violation("NoFrames"))
        return out
    C = skeleton.total_channels
    if frames.shape[1] != C:
        out.append(Violation("ChannelArityMismatch", frame=0, detail=f"{frames.shape[1]} != {C}"))
        return out
    for f, c in np.argwhere(~np.isfinite(frames)):
        out.append(Violation("NonFinite", frame=int(f), col=int(c)))
    return out


def validate_rows(skeleton: Skeleton, rows) -> list[Violation]:
    """Like ``validate`` for ragged row lists (as produced by hand-edited data)."""
    out = []
    C = skeleton.total_channels
    for f, row in enumerate(rows):
        if len(row) != C:
            out.append(Violation("ChannelArityMismatch", frame=f, detail=f"{len(row)} != {C}"))
            continue
        for c, v in enumerate(row):
            if not math.isfinite(v):
                out.append(Violation("NonFinite", frame=f, col=c))
    return out
