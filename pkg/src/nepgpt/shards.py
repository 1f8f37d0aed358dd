"""Binary token shards and deterministic batch serving.

Shard file layout (little-endian):
    magic ``NPSH`` | version u32 | token_count u64 | dtype_code u8 |
    vocab_size u32 | payload (token_count u16 values) |
    checksum u64 over header+payload
"""

import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigInvalid, CorruptShard, FormatVersionMismatch, SplitEmpty, TokenOutOfRange
from .util import checksum64

_MAGIC = b"NPSH"
_VERSION = 1
_DTYPE_U16 = 0
_HEADER_LEN = 4 + 4 + 8 + 1 + 4

DEFAULT_SHARD_TOKENS = 10_000_000


@dataclass
class ShardHeader:
    token_count: int
    vocab_size: int
    dtype_code: int = _DTYPE_U16
    version: int = _VERSION
    checksum: int = 0


def _pack_header(token_count: int, vocab_size: int) -> bytes:
    return _MAGIC + struct.pack("<IQBI", _VERSION, token_count, _DTYPE_U16, vocab_size)


def write_shard(path, tokens: np.ndarray, vocab_size: int) -> None:
    tokens = np.asarray(tokens)
    if tokens.size and (tokens.min() < 0 or tokens.max() >= vocab_size):
        raise TokenOutOfRange(f"token outside [0, {vocab_size})")
    payload = tokens.astype("<u2").tobytes()
    body = _pack_header(len(tokens), vocab_size) + payload
    blob = body + struct.pack("<Q", checksum64(body))
    try:
        with open(path, "wb") as f:
            f.write(blob)
    except OSError:
        # never leave a partial shard behind
        if os.path.exists(path):
            os.unlink(path)
        raise


def write_shards(ids, out_dir, shard_tokens: int = DEFAULT_SHARD_TOKENS,
                 vocab_size: int = 16384) -> list[Path]:
    """Split a token stream into fixed-size shards under out_dir.

    Every shard except the last holds exactly shard_tokens tokens;
    concatenating the shards in filename order reproduces the stream.
    """
    if shard_tokens < 1:
        raise ConfigInvalid("shard_tokens must be >= 1")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    buf: list[int] = []

    def flush():
        path = out_dir / f"shard_{len(paths):05d}.bin"
        write_shard(path, np.array(buf, dtype=np.uint32), vocab_size)
        paths.append(path)
        buf.clear()

    for tok in ids:
        buf.append(int(tok))
        if len(buf) == shard_tokens:
            flush()
    if buf:
        flush()
    if not paths:
        raise SplitEmpty("token stream is empty")
    return paths


def verify_shard(path) -> ShardHeader:
    """Validate magic, version, checksum, and the full token range scan."""
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < _HEADER_LEN + 8:
        raise CorruptShard(f"{path}: truncated file", byte_offset=len(data))
    if data[:4] != _MAGIC:
        raise CorruptShard(f"{path}: bad magic", byte_offset=0)
    version, token_count, dtype_code, vocab_size = struct.unpack("<IQBI", data[4:_HEADER_LEN])
    if version != _VERSION:
        raise FormatVersionMismatch(f"{path}: version {version}, expected {_VERSION}")
    if dtype_code != _DTYPE_U16:
        raise CorruptShard(f"{path}: unknown dtype code {dtype_code}", byte_offset=16)
    expected_len = _HEADER_LEN + 2 * token_count + 8
    if len(data) != expected_len:
        raise CorruptShard(f"{path}: size {len(data)}, expected {expected_len}",
                           byte_offset=len(data))
    body, trailer = data[:-8], data[-8:]
    stored = struct.unpack("<Q", trailer)[0]
    if stored != checksum64(body):
        raise CorruptShard(f"{path}: checksum mismatch", byte_offset=len(body))
    tokens = np.frombuffer(body, dtype="<u2", offset=_HEADER_LEN)
    bad = np.flatnonzero(tokens >= vocab_size)
    if bad.size:
        offset = _HEADER_LEN + 2 * int(bad[0])
        raise CorruptShard(f"{path}: token {int(tokens[bad[0]])} >= vocab_size "
                           f"{vocab_size} at byte {offset}", byte_offset=offset)
    return ShardHeader(token_count=token_count, vocab_size=vocab_size,
                       dtype_code=dtype_code, version=version, checksum=stored)


def read_shard(path) -> np.ndarray:
    header = shard_header(path)
    return np.memmap(path, dtype="<u2", mode="r", offset=_HEADER_LEN,
                     shape=(header.token_count,))


def shard_header(path) -> ShardHeader:
    with open(path, "rb") as f:
        raw = f.read(_HEADER_LEN)
    if len(raw) < _HEADER_LEN or raw[:4] != _MAGIC:
        raise CorruptShard(f"{path}: bad header", byte_offset=0)
    version, token_count, dtype_code, vocab_size = struct.unpack("<IQBI", raw[4:])
    if version != _VERSION:
        raise FormatVersionMismatch(f"{path}: version {version}, expected {_VERSION}")
    return ShardHeader(token_count=token_count, vocab_size=vocab_size,
                       dtype_code=dtype_code, version=version)


@dataclass
class DatasetSplit:
    shard_paths: list
    role: str = "train"
    _maps: list = field(default=None, repr=False, compare=False)
    _offsets: np.ndarray = field(default=None, repr=False, compare=False)

    def _ensure_open(self):
        if self._maps is None:
            if not self.shard_paths:
                raise SplitEmpty(f"{self.role} split has no shards")
            self._maps = [read_shard(p) for p in self.shard_paths]
            sizes = [len(m) for m in self._maps]
            self._offsets = np.concatenate([[0], np.cumsum(sizes)])

    @property
    def total_tokens(self) -> int:
        self._ensure_open()
        return int(self._offsets[-1])

    def window(self, pos: int, n: int) -> np.ndarray:
        """Read n contiguous tokens starting at absolute position pos,
        crossing shard boundaries as needed."""
        self._ensure_open()
        if pos < 0 or pos + n > self.total_tokens:
            raise SplitEmpty(f"window [{pos}, {pos + n}) outside split of "
                             f"{self.total_tokens} tokens")
        out = np.empty(n, dtype=np.uint16)
        filled = 0
        shard = int(np.searchsorted(self._offsets, pos, side="right")) - 1
        local = pos - int(self._offsets[shard])
        while filled < n:
            m = self._maps[shard]
            take = min(n - filled, len(m) - local)
            out[filled:filled + take] = m[local:local + take]
            filled += take
            shard += 1
            local = 0
        return out


def split_shards(shard_dir, val_fraction: float = 0.01):
    """Assign whole shards to train/val; the last shard(s) by filename
    order become validation (minimum one)."""
    paths = sorted(Path(shard_dir).glob("shard_*.bin"))
    if len(paths) < 2:
        raise SplitEmpty(f"{shard_dir}: need at least 2 shards to split, found {len(paths)}")
    n_val = max(1, int(len(paths) * val_fraction))
    return (DatasetSplit(paths[:-n_val], role="train"),
            DatasetSplit(paths[-n_val:], role="val"))


@dataclass
class Batch:
    inputs: np.ndarray   # [micro_batch, seq_len] int32
    targets: np.ndarray  # [micro_batch, seq_len] int32


def next_batch(split: DatasetSplit, cursor: int, micro_batch: int, seq_len: int):
    """Serve micro_batch sequential next-token windows starting at cursor.

    Each row consumes seq_len+1 contiguous tokens (the +1 providing the
    shifted targets) and advances the cursor by seq_len; the cursor wraps
    to 0 when fewer than seq_len+1 tokens remain, dropping the final
    incomplete window of the epoch.
    """
    if seq_len < 1 or micro_batch < 1:
        raise ConfigInvalid("micro_batch and seq_len must be >= 1")
    total = split.total_tokens
    if total < seq_len + 1:
        raise SplitEmpty(f"split of {total} tokens cannot serve seq_len {seq_len}")
    inputs = np.empty((micro_batch, seq_len), dtype=np.int32)
    targets = np.empty((micro_batch, seq_len), dtype=np.int32)
    for row in range(micro_batch):
        if cursor + seq_len + 1 > total:
            cursor = 0
        window = split.window(cursor, seq_len + 1).astype(np.int32)
        inputs[row] = window[:-1]
        targets[row] = window[1:]
        cursor += seq_len
    return Batch(inputs=inputs, targets=targets), cursor


def steps_per_epoch(total_tokens: int, micro_batch: int, grad_accum: int, seq_len: int) -> int:
    return total_tokens // (micro_batch * grad_accum * seq_len)
