"""Autoregressive decode sessions with mid-decode loop edits.

Each step recomputes the decoder on the full emitted prefix, takes the
last-row output as the raw next token, applies any edits targeting that
step before appending, then evaluates the stop rule. Stochasticity enters
only through z; the decoder itself is deterministic, so (z, seed, edit
script) fully determines the emitted sequence.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    EditRangeError,
    EmptyShapeError,
    InvalidInputError,
    SessionStateError,
    ShapeError,
)
from .geometry import canonicalize_loop
from .sequence import LoopSequence, token_pack

NEXT = "next"
_session_counter = itertools.count(1)


# ---------------------------------------------------------------------------
# stop rules

@dataclass(frozen=True)
class PlaneCountStop:
    """Terminate when the token that would start plane k+1 appears."""

    k: int

    def __post_init__(self):
        if self.k < 1:
            raise InvalidInputError("PlaneCountStop needs k >= 1")


@dataclass(frozen=True)
class EosStop:
    """Terminate on a token with max |coord| <= eps and flag probability >= 0.5."""

    eps: float = 0.01

    def __post_init__(self):
        if self.eps <= 0:
            raise InvalidInputError("EosStop needs eps > 0")


# ---------------------------------------------------------------------------
# edit operations

@dataclass(frozen=True)
class Translate:
    dx: float
    dy: float
    step: object = NEXT  # 1-based token index or "next"


@dataclass(frozen=True)
class Scale:
    factor: float
    step: object = NEXT

    def __post_init__(self):
        if self.factor <= 0:
            raise InvalidInputError("scale factor must be positive")


@dataclass(frozen=True)
class ReplaceLoop:
    loop: np.ndarray  # (N, 2), canonicalized on construction
    flag: float
    step: object = NEXT


@dataclass(frozen=True)
class InsertLoops:
    tokens: tuple  # packed (2N+1,) token vectors
    step: object = NEXT


@dataclass(frozen=True)
class FreezePrefix:
    upto: int

    def __post_init__(self):
        if self.upto < 0:
            raise InvalidInputError("freeze index must be nonnegative")


def make_replace(loop, flag, n_points, step=NEXT):
    loop = np.asarray(loop, dtype=np.float64)
    if loop.shape != (n_points, 2):
        raise ShapeError(f"replacement loop must be ({n_points}, 2), got {loop.shape}")
    return ReplaceLoop(canonicalize_loop(loop), 1.0 if flag >= 0.5 else 0.0, step)


def make_insert(pairs, n_points, step=NEXT):
    tokens = tuple(
        token_pack(canonicalize_loop(np.asarray(loop, dtype=np.float64)),
                   1.0 if flag >= 0.5 else 0.0)
        for loop, flag in pairs
    )
    for tok in tokens:
        if tok.shape != (2 * n_points + 1,):
            raise ShapeError("insert loops must have the model's point count")
    if not tokens:
        raise InvalidInputError("insert needs at least one loop")
    return InsertLoops(tokens, step)


# ---------------------------------------------------------------------------
# edit-script JSON round trip (shared by the CLI and the HTTP service)

def parse_edit_script(script, n_points):
    """JSON list -> EditOp list; raises on unknown ops or malformed fields."""
    if not isinstance(script, list):
        raise InvalidInputError("edit script must be a JSON list")
    ops = []
    for i, item in enumerate(script):
        if not isinstance(item, dict) or "op" not in item:
            raise InvalidInputError(f"edit {i}: expected an object with an 'op' field")
        kind = item["op"]
        step = item.get("step", NEXT)
        if step != NEXT and (not isinstance(step, int) or step < 1):
            raise InvalidInputError(f"edit {i}: step must be a positive integer or 'next'")
        try:
            if kind == "translate":
                ops.append(Translate(float(item["dx"]), float(item["dy"]), step))
            elif kind == "scale":
                ops.append(Scale(float(item["factor"]), step))
            elif kind == "replace":
                ops.append(make_replace(item["loop"], float(item.get("flag", 0.0)),
                                        n_points, step))
            elif kind == "insert":
                pairs = [(e["loop"], float(e.get("flag", 0.0))) for e in item["loops"]]
                ops.append(make_insert(pairs, n_points, step))
            elif kind == "freeze":
                ops.append(FreezePrefix(int(item["upto"])))
            else:
                raise InvalidInputError(f"edit {i}: unknown op {kind!r}")
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidInputError(f"edit {i}: malformed {kind!r} op: {exc}") from exc
    return ops


def edit_to_json(op):
    if isinstance(op, Translate):
        return {"op": "translate", "dx": op.dx, "dy": op.dy, "step": op.step}
    if isinstance(op, Scale):
        return {"op": "scale", "factor": op.factor, "step": op.step}
    if isinstance(op, ReplaceLoop):
        return {"op": "replace", "loop": op.loop.tolist(), "flag": op.flag, "step": op.step}
    if isinstance(op, InsertLoops):
        loops = []
        for tok in op.tokens:
            loops.append({"loop": tok[:-1].reshape(-1, 2).tolist(), "flag": float(tok[-1])})
        return {"op": "insert", "loops": loops, "step": op.step}
    if isinstance(op, FreezePrefix):
        return {"op": "freeze", "upto": op.upto}
    raise InvalidInputError(f"not an edit op: {op!r}")


# ---------------------------------------------------------------------------
# sessions

@dataclass
class DecodeSession:
    model: object
    z: np.ndarray
    stop_rule: object
    session_id: str
    status: str = "running"
    emitted: list = field(default_factory=list)      # packed token vectors
    flag_probs: list = field(default_factory=list)   # raw probabilities per step
    pending: list = field(default_factory=list)      # future-step edits
    edit_log: list = field(default_factory=list)     # every accepted edit, in order
    frozen_upto: int = 0

    @property
    def flag_count(self):
        return sum(1 for t in self.emitted if t[-1] >= 0.5)

    def tokens_array(self):
        if not self.emitted:
            return np.zeros((0, self.model.config.token_dim))
        return np.stack(self.emitted)


def new_session(model, z, stop_rule, session_id=None):
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (model.config.latent_dim,):
        raise ShapeError(
            f"z must have length {model.config.latent_dim}, got shape {z.shape}"
        )
    if not np.all(np.isfinite(z)):
        raise InvalidInputError("z must be finite")
    if not isinstance(stop_rule, (PlaneCountStop, EosStop)):
        raise InvalidInputError("stop_rule must be PlaneCountStop or EosStop")
    if session_id is None:
        session_id = f"session-{next(_session_counter):06d}"
    return DecodeSession(model, z, stop_rule, session_id)


def apply_edit(session, op):
    """Route an edit: past steps mutate emitted tokens now, future steps queue."""
    if session.status != "running":
        raise SessionStateError(f"cannot edit a {session.status} session")
    if isinstance(op, FreezePrefix):
        if op.upto > len(session.emitted):
            raise EditRangeError("cannot freeze beyond the emitted prefix")
        session.frozen_upto = max(session.frozen_upto, op.upto)
        session.edit_log.append(op)
        return
    step = op.step
    n_emitted = len(session.emitted)
    if step == NEXT:
        session.pending.append(op)
        session.edit_log.append(op)
        return
    if step <= session.frozen_upto:
        raise EditRangeError(f"step {step} is frozen (prefix frozen through {session.frozen_upto})")
    if step <= n_emitted:
        if isinstance(op, InsertLoops):
            for j, tok in enumerate(op.tokens):
                session.emitted.insert(step - 1 + j, np.array(tok, dtype=np.float64))
                session.flag_probs.insert(step - 1 + j, float(tok[-1]))
        else:
            session.emitted[step - 1] = _transform_token(
                session.emitted[step - 1], op, session.model.config.n_points
            )
        session.edit_log.append(op)
    else:
        session.pending.append(op)
        session.edit_log.append(op)


def _transform_token(token, op, n_points):
    token = np.array(token, dtype=np.float64)
    coords = token[: 2 * n_points].reshape(n_points, 2)
    if isinstance(op, Translate):
        coords = coords + np.array([op.dx, op.dy])
    elif isinstance(op, Scale):
        centroid = coords.mean(axis=0)
        coords = centroid + op.factor * (coords - centroid)
    elif isinstance(op, ReplaceLoop):
        coords = op.loop
        token[-1] = op.flag
    else:
        raise InvalidInputError(f"cannot transform a token with {type(op).__name__}")
    token[: 2 * n_points] = coords.ravel()
    return token


def _take_pending(session, step_index):
    """Pop edits targeting this step ('next' or the 1-based index), in order."""
    taken, kept = [], []
    for op in session.pending:
        if op.step == NEXT or op.step == step_index:
            taken.append(op)
        else:
            kept.append(op)
    session.pending = kept
    return taken


def step(session):
    """Emit one token; returns {token, raw_flag_prob, status, step_index, source}."""
    if session.status != "running":
        raise SessionStateError(f"cannot step a {session.status} session")
    model = session.model
    cfg = model.config
    step_index = len(session.emitted) + 1

    edits = _take_pending(session, step_index)
    inserts = [op for op in edits if isinstance(op, InsertLoops)]
    transforms = [op for op in edits if not isinstance(op, InsertLoops)]

    if inserts:
        ins = inserts[0]
        token = np.array(ins.tokens[0], dtype=np.float64)
        raw_prob = float(token[-1])
        source = "inserted"
        # remaining donor tokens (and any further inserts) shift to later steps
        rest = ins.tokens[1:]
        if rest:
            session.pending.insert(0, InsertLoops(rest, step_index + 1))
        for op in inserts[1:]:
            session.pending.append(InsertLoops(op.tokens, step_index + 1))
    else:
        coords, raw_prob = model.predict_next(session.z, session.tokens_array())
        token = np.concatenate([coords, [1.0 if raw_prob >= 0.5 else 0.0]])
        source = "model"
    for op in transforms:
        token = _transform_token(token, op, cfg.n_points)

    if step_index == 1:
        # the first token necessarily starts the first plane
        token[-1] = 1.0

    rule = session.stop_rule
    if isinstance(rule, EosStop):
        if np.max(np.abs(token[:-1])) <= rule.eps and token[-1] >= 0.5:
            session.status = "done"
            return {"token": None, "raw_flag_prob": raw_prob, "status": "done",
                    "step_index": step_index, "source": source}
    else:
        if token[-1] >= 0.5 and session.flag_count >= rule.k:
            session.status = "done"
            return {"token": None, "raw_flag_prob": raw_prob, "status": "done",
                    "step_index": step_index, "source": source}

    session.emitted.append(token)
    session.flag_probs.append(raw_prob)

    if len(session.emitted) >= cfg.max_seq_len:
        if isinstance(rule, PlaneCountStop) and session.flag_count == rule.k:
            session.status = "done"
        else:
            session.status = "aborted"
    return {"token": token, "raw_flag_prob": raw_prob, "status": session.status,
            "step_index": step_index, "source": source}


def run(session, max_steps=None):
    """Step until the session leaves the running state."""
    steps = 0
    while session.status == "running":
        step(session)
        steps += 1
        if max_steps is not None and steps >= max_steps:
            break
    return session


def rewind(session, to_step):
    """Truncate to the first to_step tokens, drop later edits, resume running."""
    if to_step < 0 or to_step > len(session.emitted):
        raise EditRangeError(f"cannot rewind to step {to_step} with {len(session.emitted)} emitted")
    del session.emitted[to_step:]
    del session.flag_probs[to_step:]
    session.pending = []  # pending edits always target steps after the cut
    session.frozen_upto = min(session.frozen_upto, to_step)
    if len(session.emitted) >= session.model.config.max_seq_len:
        rule = session.stop_rule
        if isinstance(rule, PlaneCountStop) and session.flag_count == rule.k:
            session.status = "done"
        else:
            session.status = "aborted"
    else:
        session.status = "running"
    return session


def transplant(session, donor, donor_steps, at_step):
    """Overwrite/queue donor tokens starting at at_step.

    Steps already emitted are replaced in place; the remainder queue as
    replacements for upcoming steps, so decoding resumes conditioned on
    the transplanted loops.
    """
    if not isinstance(donor, LoopSequence):
        raise InvalidInputError("donor must be a LoopSequence")
    if donor.n_points != session.model.config.n_points:
        raise InvalidInputError("donor point count does not match the model")
    indices = list(donor_steps)
    if not indices:
        raise InvalidInputError("donor_steps is empty")
    if min(indices) < 1 or max(indices) > len(donor):
        raise EditRangeError("donor_steps outside the donor sequence")
    if at_step < 1 or at_step > len(session.emitted) + 1:
        raise EditRangeError(
            f"at_step {at_step} is beyond the emitted length {len(session.emitted)} + 1"
        )
    n = session.model.config.n_points
    for offset, donor_idx in enumerate(indices):
        tok = donor.tokens[donor_idx - 1]
        loop = tok[: 2 * n].reshape(n, 2)
        apply_edit(session, ReplaceLoop(np.array(loop), float(tok[-1]), at_step + offset))
    return session


def to_sequence(session, plane_count=None):
    """Emitted tokens as a validated LoopSequence."""
    if not session.emitted:
        raise EmptyShapeError("session has no emitted tokens")
    if plane_count is None:
        if isinstance(session.stop_rule, PlaneCountStop):
            plane_count = session.stop_rule.k
        else:
            plane_count = session.flag_count
    return LoopSequence(session.tokens_array(), plane_count, session.model.config.n_points)


def sample(model, seed, stop_rule, session_id=None):
    """z ~ N(0, I) from the seed, then run a session to completion."""
    rng = np.random.default_rng(seed) if not isinstance(seed, np.random.Generator) else seed
    z = rng.standard_normal(model.config.latent_dim)
    session = new_session(model, z, stop_rule, session_id)
    return run(session)


def interpolate(z_a, z_b, k):
    """k evenly spaced latent codes from z_a to z_b inclusive."""
    z_a = np.asarray(z_a, dtype=np.float64)
    z_b = np.asarray(z_b, dtype=np.float64)
    if z_a.shape != z_b.shape or z_a.ndim != 1:
        raise ShapeError("z_a and z_b must be 1-D vectors of equal length")
    if k < 2:
        raise InvalidInputError("interpolation needs k >= 2")
    alphas = np.arange(k) / (k - 1)
    return [(1.0 - a) * z_a + a * z_b for a in alphas]
