"""Flatten per-plane loop sets into token sequences and back.

A token is ``[x_1, y_1, ..., x_N, y_N, u]``: 2N in-plane coordinates plus a
binary level-up flag; ``u = 1`` means the token's loop starts the next slice
plane.  Planes that miss the shape are skipped entirely, so the j-th raised
flag lands on the j-th nonempty plane when decoding.

Sequences interchange as versioned NDJSON (``.loopseq``): one header record,
then one record per token.  Floats are written with ``repr`` precision, so a
serialize/deserialize round trip is bit-exact.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    EmptyShapeError,
    InvalidInputError,
    OrphanLoopError,
    ParseError,
    PlaneOverflowError,
    ShapeError,
)
from .geometry import PlaneList, plane_basis, signed_area

FORMAT_VERSION = 1


def token_pack(loop, level_up):
    """Pack an (N, 2) loop and a binary flag into a (2N+1,) vector."""
    pts = np.asarray(loop, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ShapeError(f"loop must have shape (N, 2), got {pts.shape}")
    u = float(level_up)
    if u not in (0.0, 1.0):
        raise InvalidInputError(f"level-up flag must be 0 or 1, got {level_up!r}")
    return np.concatenate([pts.ravel(), [u]])


def token_unpack(vector, n_points):
    """Split a packed (2N+1,) vector back into ((N, 2) loop, flag)."""
    v = np.asarray(vector, dtype=np.float64)
    if v.ndim != 1 or v.shape[0] != 2 * n_points + 1:
        raise ShapeError(f"packed token must have length {2 * n_points + 1}, got {v.shape}")
    u = v[-1]
    if u not in (0.0, 1.0):
        raise InvalidInputError(f"level-up flag must be 0 or 1, got {u!r}")
    return v[:-1].reshape(n_points, 2), int(u)


@dataclass
class LoopSequence:
    """Token matrix (T, 2N+1) plus the plane budget it was encoded against."""

    tokens: np.ndarray
    plane_count: int
    n_points: int

    def __post_init__(self):
        self.tokens = np.asarray(self.tokens, dtype=np.float64)
        width = 2 * self.n_points + 1
        if self.tokens.size == 0:
            self.tokens = self.tokens.reshape(0, width)
        if self.tokens.ndim != 2 or self.tokens.shape[1] != width:
            raise ShapeError(
                f"tokens must have shape (T, {width}), got {self.tokens.shape}"
            )
        if not np.all(np.isfinite(self.tokens)):
            raise InvalidInputError("token coordinates must be finite")
        flags = self.tokens[:, -1]
        if not np.all((flags == 0.0) | (flags == 1.0)):
            raise InvalidInputError("level-up flags must be exactly 0 or 1")
        if len(flags) and flags[0] != 1.0:
            raise OrphanLoopError("first token must raise the level-up flag")
        if int(flags.sum()) > self.plane_count:
            raise PlaneOverflowError(
                f"{int(flags.sum())} level-up flags exceed plane budget {self.plane_count}"
            )

    def __len__(self):
        return len(self.tokens)

    @property
    def flags(self):
        return self.tokens[:, -1].astype(np.int64)

    def loops(self):
        return [self.tokens[t, :-1].reshape(self.n_points, 2) for t in range(len(self.tokens))]


def _plane_sort_key(loop):
    # descending |area|; ties by the canonical start vertex, lexicographic
    return (-abs(signed_area(loop)), float(loop[0, 0]), float(loop[0, 1]))


def encode_sequence(per_plane_loops, plane_count):
    """Walk planes in order, emitting one token per loop.

    The first loop of each nonempty plane raises the level-up flag; empty
    planes emit nothing.  Within a plane loops are ordered by descending
    absolute area, ties broken by start vertex.
    """
    if len(per_plane_loops) > plane_count:
        raise InvalidInputError(
            f"{len(per_plane_loops)} planes exceed plane budget {plane_count}"
        )
    n_points = None
    rows = []
    for loops in per_plane_loops:
        ordered = sorted(loops, key=_plane_sort_key)
        for k, loop in enumerate(ordered):
            loop = np.asarray(loop, dtype=np.float64)
            if n_points is None:
                n_points = loop.shape[0]
            elif loop.shape[0] != n_points:
                raise ShapeError(
                    f"all loops must share a point count, got {loop.shape[0]} and {n_points}"
                )
            rows.append(token_pack(loop, 1 if k == 0 else 0))
    if not rows:
        raise EmptyShapeError("no plane intersects the shape")
    return LoopSequence(np.stack(rows), plane_count=plane_count, n_points=n_points)


def decode_sequence(seq, planes):
    """Attach each token's loop to a plane by walking the level-up flags.

    The walk starts before the first plane; a raised flag advances it.
    Returns one list of loops per plane (trailing planes may be empty).
    """
    n_planes = len(planes)
    flags = seq.flags
    if len(flags) and flags[0] != 1:
        raise OrphanLoopError("first token must raise the level-up flag")
    if int(flags.sum()) > n_planes:
        raise PlaneOverflowError(
            f"{int(flags.sum())} level-up flags exceed {n_planes} planes"
        )
    out = [[] for _ in range(n_planes)]
    current = -1
    for t, loop in enumerate(seq.loops()):
        if flags[t] == 1:
            current += 1
        out[current].append(loop)
    return out


def _require(condition, message, line):
    if not condition:
        raise ParseError(message, line=line)


def serialize(seq, planes=None):
    """Write a sequence (and optionally its plane schedule) as NDJSON bytes."""
    header = {
        "version": FORMAT_VERSION,
        "N": seq.n_points,
        "plane_count": seq.plane_count,
        "axis": None,
        "plane_origins": None,
        "plane_normal": None,
    }
    if planes is not None:
        normal = planes.normal
        header["axis"] = int(np.argmax(np.abs(normal)))
        header["plane_origins"] = [[float(v) for v in o] for o in planes.origins]
        header["plane_normal"] = [float(v) for v in normal]
    lines = [json.dumps(header, allow_nan=False)]
    for t in range(len(seq.tokens)):
        record = {
            "coords": [float(v) for v in seq.tokens[t, :-1]],
            "level_up": int(seq.tokens[t, -1]),
        }
        lines.append(json.dumps(record, allow_nan=False))
    return ("\n".join(lines) + "\n").encode("utf-8")


def deserialize(data):
    """Parse NDJSON bytes back into (LoopSequence, PlaneList or None)."""
    if isinstance(data, bytes):
        text = data.decode("utf-8")
    else:
        text = data
    lines = text.splitlines()
    _require(len(lines) >= 1 and lines[0].strip(), "missing header record", 1)

    def parse_line(line, lineno):
        try:
            return json.loads(
                line,
                parse_constant=lambda c: (_ for _ in ()).throw(
                    ParseError(f"non-finite value {c}", line=lineno)
                ),
            )
        except ParseError:
            raise
        except json.JSONDecodeError as exc:
            raise ParseError(f"malformed JSON: {exc.msg}", line=lineno)

    header = parse_line(lines[0], 1)
    _require(isinstance(header, dict), "header must be a JSON object", 1)
    _require(header.get("version") == FORMAT_VERSION,
             f"unsupported format version {header.get('version')!r}", 1)
    _require(isinstance(header.get("N"), int) and header["N"] >= 3, "bad point count N", 1)
    _require(isinstance(header.get("plane_count"), int) and header["plane_count"] >= 1,
             "bad plane_count", 1)
    n_points = header["N"]
    width = 2 * n_points

    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        rec = parse_line(line, lineno)
        _require(isinstance(rec, dict), "token record must be a JSON object", lineno)
        coords = rec.get("coords")
        _require(isinstance(coords, list) and len(coords) == width,
                 f"coords must be a list of {width} numbers", lineno)
        _require(all(isinstance(c, (int, float)) for c in coords),
                 "coords must be numbers", lineno)
        _require(all(np.isfinite(c) for c in coords), "coords must be finite", lineno)
        _require(rec.get("level_up") in (0, 1), "level_up must be 0 or 1", lineno)
        rows.append(np.array([float(c) for c in coords] + [float(rec["level_up"])]))

    tokens = np.stack(rows) if rows else np.empty((0, width + 1))
    try:
        seq = LoopSequence(tokens, plane_count=header["plane_count"], n_points=n_points)
    except (InvalidInputError, OrphanLoopError, PlaneOverflowError, ShapeError) as exc:
        raise ParseError(str(exc))

    planes = None
    if header.get("plane_origins") is not None:
        normal = header.get("plane_normal")
        _require(isinstance(normal, list) and len(normal) == 3, "bad plane_normal", 1)
        origins = header["plane_origins"]
        _require(isinstance(origins, list) and
                 all(isinstance(o, list) and len(o) == 3 for o in origins),
                 "bad plane_origins", 1)
        planes = PlaneList([plane_basis(normal, origin=o) for o in origins])
    return seq, planes
