"""BVH parsing and serialization.

The document model is lossless: per-joint channel order (including mixed
position/rotation layouts) and end sites survive a parse/write/parse round
trip. Floats are serialized with shortest round-trip formatting so re-parsed
documents compare exactly equal.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

POSITION_CHANNELS = ("Xposition", "Yposition", "Zposition")
ROTATION_CHANNELS = ("Xrotation", "Yrotation", "Zrotation")
_VALID_CHANNELS = set(POSITION_CHANNELS) | set(ROTATION_CHANNELS)


class BvhParseError(ValueError):
    """Malformed BVH input, positioned at the offending line."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass
class BvhJoint:
    name: str
    parent: int                      # -1 for the root
    offset: np.ndarray               # (3,)
    channels: tuple[str, ...]        # ordered channel names, may be empty
    end_site: bool = False
    children: list[int] = field(default_factory=list)

    @property
    def rotation_order(self) -> str:
        """Euler axis order from the rotation channels, e.g. 'ZXY'."""
        return "".join(c[0] for c in self.channels if c.endswith("rotation"))


@dataclass
class BvhDocument:
    joints: list[BvhJoint]
    frame_time: float
    motion: np.ndarray               # (frames, total_channels)

    @property
    def frame_count(self) -> int:
        return self.motion.shape[0]

    @property
    def total_channels(self) -> int:
        return sum(len(j.channels) for j in self.joints)

    @property
    def root_index(self) -> int:
        return next(i for i, j in enumerate(self.joints) if j.parent == -1)

    def channel_offsets(self) -> list[int]:
        """Start column of each joint's channel block in the motion table."""
        offsets, acc = [], 0
        for j in self.joints:
            offsets.append(acc)
            acc += len(j.channels)
        return offsets

    def joint_index(self, name: str) -> int:
        for i, j in enumerate(self.joints):
            if j.name == name and not j.end_site:
                return i
        raise KeyError(f"joint {name!r} not in document")

    def copy(self) -> "BvhDocument":
        joints = [BvhJoint(j.name, j.parent, j.offset.copy(), tuple(j.channels),
                           j.end_site, list(j.children)) for j in self.joints]
        return BvhDocument(joints, self.frame_time, self.motion.copy())


def structurally_equal(a: BvhDocument, b: BvhDocument) -> bool:
    if len(a.joints) != len(b.joints) or a.frame_count != b.frame_count:
        return False
    if a.frame_time != b.frame_time:
        return False
    for ja, jb in zip(a.joints, b.joints):
        if (ja.name, ja.parent, tuple(ja.channels), ja.end_site, ja.children) != \
           (jb.name, jb.parent, tuple(jb.channels), jb.end_site, jb.children):
            return False
        if not np.array_equal(ja.offset, jb.offset):
            return False
    return np.array_equal(a.motion, b.motion)


class _Cursor:
    def __init__(self, text: str):
        self.lines = text.splitlines()
        self.pos = 0

    @property
    def line_no(self) -> int:
        return self.pos  # 0-based position == 1-based number of consumed line

    def peek(self) -> str | None:
        while self.pos < len(self.lines):
            stripped = self.lines[self.pos].strip()
            if stripped:
                return stripped
            self.pos += 1
        return None

    def take(self) -> str:
        line = self.peek()
        if line is None:
            raise BvhParseError("unexpected end of file", len(self.lines))
        self.pos += 1
        return line


def parse_bvh(text: str) -> BvhDocument:
    cur = _Cursor(text)
    if cur.peek() is None or not cur.take().startswith("HIERARCHY"):
        raise BvhParseError("expected HIERARCHY header", cur.line_no)

    joints: list[BvhJoint] = []

    def parse_joint(parent: int, header: str) -> None:
        at = cur.line_no
        parts = header.split()
        if parts[0] == "End" and len(parts) >= 2 and parts[1] == "Site":
            name = "End Site"
            end_site = True
        elif parts[0] in ("ROOT", "JOINT"):
            if len(parts) < 2:
                raise BvhParseError(f"{parts[0]} requires a name", at)
            name = " ".join(parts[1:])
            end_site = False
        else:
            raise BvhParseError(f"expected ROOT/JOINT/End Site, got {header!r}", at)

        if cur.take() != "{":
            raise BvhParseError("expected '{'", cur.line_no)
        off_line = cur.take()
        off_parts = off_line.split()
        if off_parts[0] != "OFFSET" or len(off_parts) != 4:
            raise BvhParseError("expected 'OFFSET x y z'", cur.line_no)
        try:
            offset = np.array([float(v) for v in off_parts[1:]], dtype=np.float64)
        except ValueError:
            raise BvhParseError(f"non-numeric OFFSET value in {off_line!r}", cur.line_no)

        channels: tuple[str, ...] = ()
        idx = len(joints)
        joints.append(BvhJoint(name, parent, offset, channels, end_site))
        if parent >= 0:
            joints[parent].children.append(idx)

        while True:
            line = cur.take()
            if line == "}":
                return
            head = line.split()[0]
            if head == "CHANNELS":
                parts = line.split()
                try:
                    count = int(parts[1])
                except (IndexError, ValueError):
                    raise BvhParseError("CHANNELS requires a count", cur.line_no)
                names = tuple(parts[2:])
                if len(names) != count:
                    raise BvhParseError(
                        f"CHANNELS declares {count} but lists {len(names)}", cur.line_no)
                bad = [c for c in names if c not in _VALID_CHANNELS]
                if bad:
                    raise BvhParseError(f"unknown channel name {bad[0]!r}", cur.line_no)
                joints[idx].channels = names
            elif head in ("JOINT", "ROOT") or line.startswith("End Site"):
                parse_joint(idx, line)
            else:
                raise BvhParseError(f"unexpected token {head!r} inside joint", cur.line_no)

    header = cur.take()
    if not header.startswith("ROOT"):
        raise BvhParseError("expected ROOT after HIERARCHY", cur.line_no)
    parse_joint(-1, header)

    roots = [j for j in joints if j.parent == -1]
    if len(roots) != 1:
        raise BvhParseError("document must contain exactly one ROOT", cur.line_no)
    if not any(c.endswith("position") for c in roots[0].channels):
        raise BvhParseError("root joint must carry position channels", cur.line_no)

    if cur.peek() is None or cur.take() != "MOTION":
        raise BvhParseError("missing MOTION section", cur.line_no)
    frames_line = cur.take()
    if not frames_line.startswith("Frames:"):
        raise BvhParseError("expected 'Frames: <count>'", cur.line_no)
    try:
        frame_count = int(frames_line.split(":", 1)[1])
    except ValueError:
        raise BvhParseError("non-integer frame count", cur.line_no)
    time_line = cur.take()
    if not time_line.startswith("Frame Time:"):
        raise BvhParseError("expected 'Frame Time: <seconds>'", cur.line_no)
    try:
        frame_time = float(time_line.split(":", 1)[1])
    except ValueError:
        raise BvhParseError("non-numeric frame time", cur.line_no)
    if frame_time <= 0:
        raise BvhParseError("frame time must be positive", cur.line_no)

    total = sum(len(j.channels) for j in joints)
    motion = np.empty((frame_count, total), dtype=np.float64)
    for f in range(frame_count):
        row_line = cur.peek()
        if row_line is None:
            raise BvhParseError(
                f"motion table ends early: expected {frame_count} rows, got {f}",
                len(cur.lines))
        row = cur.take().split()
        if len(row) != total:
            raise BvhParseError(
                f"motion row has {len(row)} values, expected {total}", cur.line_no)
        try:
            motion[f] = [float(v) for v in row]
        except ValueError:
            bad = next(v for v in row if not _is_float(v))
            raise BvhParseError(f"non-numeric motion cell {bad!r}", cur.line_no)

    return BvhDocument(joints, frame_time, motion)


def _is_float(token: str) -> bool:
    try:
        float(token)
        return True
    except ValueError:
        return False


def _fmt(v: float) -> str:
    return repr(float(v))


def write_bvh(doc: BvhDocument) -> str:
    lines: list[str] = ["HIERARCHY"]

    def emit(idx: int, depth: int) -> None:
        j = doc.joints[idx]
        pad = "\t" * depth
        if j.end_site:
            lines.append(f"{pad}End Site")
        else:
            kind = "ROOT" if j.parent == -1 else "JOINT"
            lines.append(f"{pad}{kind} {j.name}")
        lines.append(f"{pad}{{")
        lines.append(f"{pad}\tOFFSET {_fmt(j.offset[0])} {_fmt(j.offset[1])} {_fmt(j.offset[2])}")
        if not j.end_site:
            lines.append(f"{pad}\tCHANNELS {len(j.channels)} {' '.join(j.channels)}".rstrip())
            for child in j.children:
                emit(child, depth + 1)
        lines.append(f"{pad}}}")

    emit(doc.root_index, 0)
    lines.append("MOTION")
    lines.append(f"Frames: {doc.frame_count}")
    lines.append(f"Frame Time: {_fmt(doc.frame_time)}")
    for row in doc.motion:
        lines.append(" ".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"
