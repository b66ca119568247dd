"""Embedding data model and the on-disk tensor / manifest formats.

ETS1 binary tensor layout (all integers little-endian):

    bytes 0..3   magic b"ETS1"
    bytes 4..7   u32 ndim
    next         ndim * u32 dims
    rest         prod(dims) * f32 payload, row-major

Values are stored as 32-bit floats; downstream math runs at 64-bit. All
loaded types are immutable after construction and safe to share across
threads.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import (
    CorruptionError,
    FormatError,
    IOFailure,
    SchemaError,
    ValidationError,
)

MAGIC = b"ETS1"
_MAX_NDIM = 8

VALID_METHODS = ("ours", "original", "retrieval", "similarity")


def save_tensor(array: np.ndarray, path: str | Path) -> None:
    """Write `array` to `path` in ETS1 format (f32, row-major, bit-exact round trip)."""
    arr = np.ascontiguousarray(array, dtype="<f4")
    if arr.ndim < 1 or arr.ndim > _MAX_NDIM:
        raise ValidationError(f"tensor rank {arr.ndim} outside supported range 1..{_MAX_NDIM}")
    header = MAGIC + struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(arr.tobytes(order="C"))
    except OSError as exc:
        raise IOFailure(f"cannot write tensor to {path}: {exc}") from exc


def load_tensor(path: str | Path) -> np.ndarray:
    """Read an ETS1 tensor, returning a read-only float32 array.

    Raises FormatError on bad magic, CorruptionError when the payload size
    disagrees with the declared dims, ValidationError on non-finite values.
    """
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise IOFailure(f"cannot read tensor from {path}: {exc}") from exc
    if len(raw) < 8 or raw[:4] != MAGIC:
        raise FormatError(f"{path}: missing ETS1 magic")
    ndim = struct.unpack_from("<I", raw, 4)[0]
    if ndim < 1 or ndim > _MAX_NDIM:
        raise CorruptionError(f"{path}: implausible rank {ndim}")
    header_end = 8 + 4 * ndim
    if len(raw) < header_end:
        raise FormatError(f"{path}: truncated dim header")
    dims = struct.unpack_from(f"<{ndim}I", raw, 8)
    count = math.prod(dims)
    payload = raw[header_end:]
    if len(payload) != 4 * count:
        raise CorruptionError(
            f"{path}: dims {dims} declare {count} elements but payload holds "
            f"{len(payload) // 4}"
        )
    data = np.frombuffer(payload, dtype="<f4").reshape(dims)
    if not np.isfinite(data).all():
        raise ValidationError(f"{path}: tensor contains NaN or Inf")
    data = data.view()
    data.flags.writeable = False
    return data


class TokenRef(tuple):
    """Identity of one visual token: (frame, row, col), all 1-based.

    A plain tuple subclass so refs sort lexicographically by (t, h, w) and
    stay cheap to create in bulk.
    """

    __slots__ = ()

    def __new__(cls, t: int, h: int, w: int):
        return super().__new__(cls, (t, h, w))

    @property
    def t(self) -> int:
        return self[0]

    @property
    def h(self) -> int:
        return self[1]

    @property
    def w(self) -> int:
        return self[2]

    def __repr__(self) -> str:
        return f"TokenRef(t={self[0]}, h={self[1]}, w={self[2]})"


@dataclass(frozen=True)
class FrameTokenGrid:
    """Encoded visual embeddings with shape (frames, rows, cols, dim)."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float32)
        if arr.ndim != 4:
            raise ValidationError(f"frame grid must be rank 4, got rank {arr.ndim}")
        if min(arr.shape) < 1:
            raise ValidationError(f"frame grid dims must all be >= 1, got {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValidationError("frame grid contains NaN or Inf")
        arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def frames(self) -> int:
        return self.data.shape[0]

    @property
    def rows(self) -> int:
        return self.data.shape[1]

    @property
    def cols(self) -> int:
        return self.data.shape[2]

    @property
    def dim(self) -> int:
        return self.data.shape[3]

    @property
    def tokens_per_frame(self) -> int:
        return self.rows * self.cols

    @property
    def total_tokens(self) -> int:
        return self.frames * self.rows * self.cols

    def embedding(self, ref: TokenRef) -> np.ndarray:
        return self.data[ref.t - 1, ref.h - 1, ref.w - 1]

    @classmethod
    def load(cls, path: str | Path) -> "FrameTokenGrid":
        arr = load_tensor(path)
        if arr.ndim != 4:
            raise ValidationError(f"{path}: frame grid must be rank 4, got rank {arr.ndim}")
        return cls(arr)

    def save(self, path: str | Path) -> None:
        save_tensor(self.data, path)


@dataclass(frozen=True)
class Budget:
    """Frame budget and the token budget it implies for a given grid shape."""

    frames: int
    tokens: int

    def __post_init__(self):
        if self.frames < 1:
            raise ValidationError(f"frame budget must be >= 1, got {self.frames}")
        if self.tokens < 1:
            raise ValidationError(f"token budget must be >= 1, got {self.tokens}")

    @classmethod
    def from_frames(cls, frame_budget: int, grid: FrameTokenGrid) -> "Budget":
        if frame_budget < 1:
            raise ValidationError(f"frame budget must be >= 1, got {frame_budget}")
        return cls(frames=frame_budget, tokens=frame_budget * grid.tokens_per_frame)

    def default_space_size(self) -> int:
        """Default candidate count: half the frame budget, at least one."""
        return max(1, self.frames // 2)


@dataclass(frozen=True)
class AttentionContext:
    """Query/instruction hidden features plus Q/K projection weights.

    `wq` and `wk` are stored as (heads * key_dim, hidden_dim) so a row batch
    X of shape (rows, hidden_dim) projects as X @ W.T.
    """

    query: np.ndarray
    wq: np.ndarray
    wk: np.ndarray
    heads: int
    key_dim: int
    instruction: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.heads < 1:
            raise ValidationError(f"head count must be >= 1, got {self.heads}")
        if self.key_dim < 1:
            raise ValidationError(f"key dim must be >= 1, got {self.key_dim}")
        q = self._as_matrix(self.query, "query hidden")
        if q.shape[0] < 1:
            raise ValidationError("query hidden must have at least one row")
        wq = self._as_matrix(self.wq, "wq")
        wk = self._as_matrix(self.wk, "wk")
        out = self.heads * self.key_dim
        if wq.shape[0] != out or wk.shape[0] != out:
            raise ValidationError(
                f"projection output dims {wq.shape[0]}/{wk.shape[0]} must both equal "
                f"heads*key_dim = {out}"
            )
        if wq.shape[1] != wk.shape[1]:
            raise ValidationError(
                f"wq and wk must map the same hidden dim, got {wq.shape[1]} vs {wk.shape[1]}"
            )
        if wq.shape[1] != q.shape[1]:
            raise ValidationError(
                f"wq maps hidden dim {wq.shape[1]} but query rows have dim {q.shape[1]}"
            )
        inst = self.instruction
        if inst is not None:
            inst = self._as_matrix(inst, "instruction hidden")
            if inst.shape[0] == 0:
                inst = None
            elif inst.shape[1] != wk.shape[1]:
                raise ValidationError(
                    f"instruction hidden dim {inst.shape[1]} does not match wk input "
                    f"dim {wk.shape[1]}"
                )
        object.__setattr__(self, "query", q)
        object.__setattr__(self, "wq", wq)
        object.__setattr__(self, "wk", wk)
        object.__setattr__(self, "instruction", inst)

    @staticmethod
    def _as_matrix(arr: np.ndarray, role: str) -> np.ndarray:
        a = np.asarray(arr, dtype=np.float64)
        if a.ndim != 2:
            raise ValidationError(f"{role} must be a rank-2 matrix, got rank {a.ndim}")
        if not np.isfinite(a).all():
            raise ValidationError(f"{role} contains NaN or Inf")
        a = np.ascontiguousarray(a)
        a.flags.writeable = False
        return a

    @property
    def n_query(self) -> int:
        return self.query.shape[0]

    @property
    def n_instruction(self) -> int:
        return 0 if self.instruction is None else self.instruction.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.wk.shape[1]


@dataclass(frozen=True)
class InstanceManifest:
    """Parsed instance manifest: resolved paths plus scalar settings."""

    frames: Path
    query_hidden: Path
    wq: Path
    wk: Path
    heads: int
    key_dim: int
    frame_budget: int
    method: str
    instruction_hidden: Optional[Path] = None
    space_size: Optional[int] = None
    query_embedding: Optional[Path] = None
    visual_hidden: Optional[Path] = None


@dataclass(frozen=True)
class Instance:
    """Fully loaded instance: grid, scorer context, budget and settings."""

    grid: FrameTokenGrid
    context: AttentionContext
    budget: Budget
    method: str
    space_size: int
    query_embedding: Optional[np.ndarray] = None
    visual_hidden_dir: Optional[Path] = None
    warnings: tuple[str, ...] = field(default_factory=tuple)

    @property
    def pass_through(self) -> bool:
        return self.budget.tokens >= self.grid.total_tokens


def _require(obj: dict, key: str, kind, what: str):
    if key not in obj:
        raise SchemaError(f"manifest missing required key '{key}'")
    val = obj[key]
    if kind is int and isinstance(val, bool):
        raise SchemaError(f"manifest key '{key}' must be {what}")
    if not isinstance(val, kind):
        raise SchemaError(f"manifest key '{key}' must be {what}")
    return val


def _optional_path(obj: dict, key: str, base: Path) -> Optional[Path]:
    val = obj.get(key)
    if val is None:
        return None
    if not isinstance(val, str):
        raise SchemaError(f"manifest key '{key}' must be a path string or null")
    return _resolve(val, base)


def _resolve(rel: str, base: Path) -> Path:
    p = Path(rel)
    return p if p.is_absolute() else base / p


def parse_manifest(path: str | Path) -> InstanceManifest:
    """Parse and schema-check a manifest JSON file; referenced paths must exist."""
    path = Path(path)
    try:
        obj = json.loads(path.read_text())
    except OSError as exc:
        raise IOFailure(f"cannot read manifest {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise SchemaError(f"{path}: manifest root must be a JSON object")
    base = path.parent

    method = _require(obj, "method", str, "a method name string")
    if method not in VALID_METHODS:
        raise SchemaError(f"{path}: unknown method '{method}' (expected one of {VALID_METHODS})")
    space_size = obj.get("space_size")
    if space_size is not None and (not isinstance(space_size, int) or isinstance(space_size, bool)):
        raise SchemaError(f"{path}: space_size must be an integer or null")
    if space_size is not None and space_size < 1:
        raise SchemaError(f"{path}: space_size must be >= 1")

    manifest = InstanceManifest(
        frames=_resolve(_require(obj, "frames", str, "a path string"), base),
        query_hidden=_resolve(_require(obj, "query_hidden", str, "a path string"), base),
        wq=_resolve(_require(obj, "wq", str, "a path string"), base),
        wk=_resolve(_require(obj, "wk", str, "a path string"), base),
        heads=_require(obj, "heads", int, "an integer"),
        key_dim=_require(obj, "d_k", int, "an integer"),
        frame_budget=_require(obj, "frame_budget", int, "an integer"),
        method=method,
        instruction_hidden=_optional_path(obj, "instruction_hidden", base),
        space_size=space_size,
        query_embedding=_optional_path(obj, "query_embedding", base),
        visual_hidden=_optional_path(obj, "visual_hidden", base),
    )
    for role, p in (
        ("frames", manifest.frames),
        ("query_hidden", manifest.query_hidden),
        ("wq", manifest.wq),
        ("wk", manifest.wk),
        ("instruction_hidden", manifest.instruction_hidden),
        ("query_embedding", manifest.query_embedding),
        ("visual_hidden", manifest.visual_hidden),
    ):
        if p is not None and not p.exists():
            raise SchemaError(f"{path}: {role} references missing file {p}")
    return manifest


def load_manifest(path: str | Path) -> Instance:
    """Parse a manifest and load everything it references (see load_instance)."""
    return load_instance(parse_manifest(path))


def load_instance(manifest: InstanceManifest | str | Path) -> Instance:
    """Load every tensor a manifest references, checking dims against roles.

    An over-budget instance (token budget exceeding the grid) is flagged with
    a pass-through warning rather than rejected.
    """
    if not isinstance(manifest, InstanceManifest):
        manifest = parse_manifest(manifest)
    grid = FrameTokenGrid.load(manifest.frames)

    instruction = None
    if manifest.instruction_hidden is not None:
        instruction = load_tensor(manifest.instruction_hidden)
        if instruction.ndim != 2:
            raise ValidationError(
                f"{manifest.instruction_hidden}: instruction hidden must be rank 2"
            )
    context = AttentionContext(
        query=load_tensor(manifest.query_hidden),
        wq=load_tensor(manifest.wq),
        wk=load_tensor(manifest.wk),
        heads=manifest.heads,
        key_dim=manifest.key_dim,
        instruction=instruction,
    )

    query_embedding = None
    if manifest.query_embedding is not None:
        query_embedding = load_tensor(manifest.query_embedding)
        if query_embedding.ndim != 1 or query_embedding.shape[0] != grid.dim:
            raise ValidationError(
                f"{manifest.query_embedding}: query embedding must be a length-"
                f"{grid.dim} vector matching the grid dim"
            )

    visual_hidden_dir = None
    if manifest.visual_hidden is not None:
        if not manifest.visual_hidden.is_dir():
            raise SchemaError(f"visual_hidden must point at a directory: {manifest.visual_hidden}")
        visual_hidden_dir = manifest.visual_hidden

    budget = Budget.from_frames(manifest.frame_budget, grid)
    warnings = []
    if budget.tokens > grid.total_tokens:
        warnings.append(
            f"token budget {budget.tokens} exceeds grid tokens {grid.total_tokens}; "
            "compression is a pass-through"
        )
    space_size = manifest.space_size if manifest.space_size is not None else budget.default_space_size()

    return Instance(
        grid=grid,
        context=context,
        budget=budget,
        method=manifest.method,
        space_size=space_size,
        query_embedding=query_embedding,
        visual_hidden_dir=visual_hidden_dir,
        warnings=tuple(warnings),
    )
