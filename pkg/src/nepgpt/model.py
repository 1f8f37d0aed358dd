"""Decoder-only transformer: config, init, forward pass, loss, checkpoints.

Pre-norm residual blocks with learned absolute position embeddings and a
tied output head: x -> x + attn(norm(x)) -> x + mlp(norm(x)), final norm,
then logits through the (shared) token embedding.
"""

import struct
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigInvalid, CorruptFile, FormatVersionMismatch, TokenOutOfRange
from .util import Reader, checksum64, write_str

_MAGIC = b"GPTC"
_VERSION = 1

INIT_STD = 0.02


@dataclass
class GptConfig:
    n_layer: int = 12
    n_head: int = 12
    d_model: int = 768
    vocab_size: int = 16384
    seq_len: int = 1024
    tie_embeddings: bool = True
    dropout: float = 0.0

    def __post_init__(self):
        if self.d_model % self.n_head != 0:
            raise ConfigInvalid(f"d_model {self.d_model} not divisible by n_head {self.n_head}")
        if self.seq_len < 1 or self.n_layer < 1 or self.vocab_size < 1:
            raise ConfigInvalid("n_layer, vocab_size, seq_len must be >= 1")
        if self.dropout != 0.0:
            raise ConfigInvalid("only dropout=0.0 is supported (weight decay is the regularizer)")

    @property
    def d_head(self) -> int:
        return self.d_model // self.n_head

    def to_dict(self) -> dict:
        return {"n_layer": self.n_layer, "n_head": self.n_head, "d_model": self.d_model,
                "vocab_size": self.vocab_size, "seq_len": self.seq_len,
                "tie_embeddings": self.tie_embeddings, "dropout": self.dropout}


@dataclass
class AttnTiling:
    block_rows: int = 64
    block_cols: int = 64

    def __post_init__(self):
        if self.block_rows < 1 or self.block_cols < 1:
            raise ConfigInvalid("tiling blocks must be >= 1")


def param_count(cfg: GptConfig) -> int:
    """Exact scalar parameter count.

    Per layer: 12 d^2 weights (qkv 3d^2, attn proj d^2, mlp 4d^2 + 4d^2)
    and 13 d vectors (qkv bias 3d, proj bias d, mlp biases 5d, two norms 4d);
    plus embeddings and the final norm. An untied head adds one V x d matrix.
    """
    d, L, V, S = cfg.d_model, cfg.n_layer, cfg.vocab_size, cfg.seq_len
    total = V * d + S * d + L * (12 * d * d + 13 * d) + 2 * d
    if not cfg.tie_embeddings:
        total += V * d
    return total


def init_params(cfg: GptConfig, seed: int, dtype=np.float32) -> dict:
    """Normal(0, 0.02) weights, residual-path projections scaled 1/sqrt(2L),
    zero biases, unit norm gains. Deterministic per seed."""
    rng = np.random.default_rng(seed)
    resid_std = INIT_STD / np.sqrt(2 * cfg.n_layer)
    d = cfg.d_model

    def normal(shape, std):
        return T.Tensor(rng.normal(0.0, std, size=shape), requires_grad=True, dtype=dtype)

    def zeros(shape):
        return T.Tensor(np.zeros(shape), requires_grad=True, dtype=dtype)

    def ones(shape):
        return T.Tensor(np.ones(shape), requires_grad=True, dtype=dtype)

    params = {
        "tok_emb": normal((cfg.vocab_size, d), INIT_STD),
        "pos_emb": normal((cfg.seq_len, d), INIT_STD),
    }
    for i in range(cfg.n_layer):
        p = f"h{i}."
        params[p + "ln1.g"] = ones((d,))
        params[p + "ln1.b"] = zeros((d,))
        params[p + "qkv_w"] = normal((d, 3 * d), INIT_STD)
        params[p + "qkv_b"] = zeros((3 * d,))
        params[p + "proj_w"] = normal((d, d), resid_std)
        params[p + "proj_b"] = zeros((d,))
        params[p + "ln2.g"] = ones((d,))
        params[p + "ln2.b"] = zeros((d,))
        params[p + "fc_w"] = normal((d, 4 * d), INIT_STD)
        params[p + "fc_b"] = zeros((4 * d,))
        params[p + "out_w"] = normal((4 * d, d), resid_std)
        params[p + "out_b"] = zeros((d,))
    params["lnf.g"] = ones((d,))
    params["lnf.b"] = zeros((d,))
    if not cfg.tie_embeddings:
        params["head_w"] = normal((cfg.vocab_size, d), INIT_STD)
    return params


def forward(params: dict, cfg: GptConfig, tokens, tiling: AttnTiling = None) -> T.Tensor:
    """Logits [batch, T, vocab] for a batch of token id rows."""
    tiling = tiling or AttnTiling()
    tokens = np.asarray(tokens)
    if tokens.ndim != 2:
        raise ConfigInvalid(f"tokens must be [batch, T], got shape {tokens.shape}")
    batch, t_len = tokens.shape
    if t_len > cfg.seq_len:
        raise TokenOutOfRange(f"sequence length {t_len} exceeds configured {cfg.seq_len}")
    if tokens.min() < 0 or tokens.max() >= cfg.vocab_size:
        raise TokenOutOfRange(f"token id outside [0, {cfg.vocab_size})")

    d, h, dh = cfg.d_model, cfg.n_head, cfg.d_head
    x = T.add(T.embedding(params["tok_emb"], tokens),
              T.embedding(params["pos_emb"], np.arange(t_len)))

    for i in range(cfg.n_layer):
        p = f"h{i}."
        hn = T.layernorm(x, params[p + "ln1.g"], params[p + "ln1.b"])
        qkv = T.add(T.matmul(hn, params[p + "qkv_w"]), params[p + "qkv_b"])

        def heads(t):
            return T.transpose(T.reshape(t, (batch, t_len, h, dh)), (0, 2, 1, 3))

        q = heads(T.slice_last(qkv, 0, d))
        k = heads(T.slice_last(qkv, d, 2 * d))
        v = heads(T.slice_last(qkv, 2 * d, 3 * d))
        a = T.attention(q, k, v, tiling.block_rows, tiling.block_cols, causal=True)
        a = T.reshape(T.transpose(a, (0, 2, 1, 3)), (batch, t_len, d))
        x = T.add(x, T.add(T.matmul(a, params[p + "proj_w"]), params[p + "proj_b"]))

        hn = T.layernorm(x, params[p + "ln2.g"], params[p + "ln2.b"])
        mlp = T.gelu(T.add(T.matmul(hn, params[p + "fc_w"]), params[p + "fc_b"]))
        mlp = T.add(T.matmul(mlp, params[p + "out_w"]), params[p + "out_b"])
        x = T.add(x, mlp)

    x = T.layernorm(x, params["lnf.g"], params["lnf.b"])
    head = params["tok_emb"] if cfg.tie_embeddings else params["head_w"]
    return T.matmul(x, T.transpose(head))


def loss(logits: T.Tensor, targets) -> T.Tensor:
    """Mean natural-log cross-entropy over all batch x T positions."""
    return T.softmax_cross_entropy(logits, targets)


# -- checkpoint container -----------------------------------------------------


def save_checkpoint(path, arrays: dict, meta: dict) -> None:
    """Versioned container: magic, meta key=value blob, named float32 arrays
    (name, shape, little-endian values), trailing 64-bit checksum."""
    buf = bytearray(_MAGIC)
    buf += struct.pack("<I", _VERSION)
    meta_blob = "\n".join(f"{k}={meta[k]}" for k in sorted(meta))
    write_str(buf, meta_blob)
    items = sorted(arrays.items())
    buf += struct.pack("<I", len(items))
    for name, arr in items:
        data = arr.data if isinstance(arr, T.Tensor) else np.asarray(arr)
        data = np.ascontiguousarray(data, dtype="<f4")
        write_str(buf, name)
        buf += struct.pack("<I", data.ndim)
        for dim in data.shape:
            buf += struct.pack("<I", dim)
        buf += data.tobytes()
    buf += struct.pack("<Q", checksum64(bytes(buf)))
    with open(path, "wb") as f:
        f.write(buf)


def load_checkpoint(path):
    """Returns (meta dict, arrays dict of float32 ndarrays); bit-exact
    round trip with save_checkpoint."""
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 16 or data[:4] != _MAGIC:
        raise CorruptFile(f"{path}: not a checkpoint file")
    # version gate first: a future layout may not even place the checksum last
    version = struct.unpack("<I", data[4:8])[0]
    if version != _VERSION:
        raise FormatVersionMismatch(f"{path}: version {version}, expected {_VERSION}")
    body, trailer = data[:-8], data[-8:]
    if struct.unpack("<Q", trailer)[0] != checksum64(body):
        raise CorruptFile(f"{path}: checksum mismatch")
    try:
        r = Reader(body)
        r.take(4)
        version = r.u32()
        if version != _VERSION:
            raise FormatVersionMismatch(f"{path}: version {version}, expected {_VERSION}")
        meta_blob = r.string()
        meta = {}
        for line in meta_blob.split("\n"):
            if line:
                k, _, val = line.partition("=")
                meta[k] = val
        arrays = {}
        count = r.u32()
        for _ in range(count):
            name = r.string()
            ndim = r.u32()
            shape = tuple(r.u32() for _ in range(ndim))
            n = int(np.prod(shape)) if shape else 1
            arrays[name] = np.frombuffer(r.take(4 * n), dtype="<f4").reshape(shape).copy()
        if r.pos != len(body):
            raise CorruptFile(f"{path}: trailing bytes")
    except ValueError as e:
        raise CorruptFile(f"{path}: {e}") from e
    return meta, arrays


def config_from_meta(meta: dict) -> GptConfig:
    return GptConfig(
        n_layer=int(meta["n_layer"]), n_head=int(meta["n_head"]),
        d_model=int(meta["d_model"]), vocab_size=int(meta["vocab_size"]),
        seq_len=int(meta["seq_len"]),
        tie_embeddings=meta.get("tie_embeddings", "True") == "True",
        dropout=float(meta.get("dropout", 0.0)))


def params_from_arrays(arrays: dict) -> dict:
    return {name: T.Tensor(arr, requires_grad=True) for name, arr in arrays.items()}
