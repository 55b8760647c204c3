"""Conditional recurrent language model.

A stacked LSTM over flat token id sequences, with the input embedding
matrix tied to the output projection. The final layer's hidden size equals
the embedding size so tying works when embedding_dim < hidden_dim. Forward,
loss, and gradients are implemented directly in numpy: training runs plain
truncated backpropagation with gradient-norm clipping, which keeps the
whole model checkable against finite differences.

Conditioning is a single flat sequence:

    topic <title> phrase1 <eop> ... <plan> sentence1 <eos> ... <eot>

built by GenerationContext; the planner stops after the phrase section.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .text import EOP_ID, EOS_ID, SEP_PLAN_ID, SEP_TITLE_ID

CHECKPOINT_MAGIC = b"PWRLM1\n"
INIT_SCALE = 0.1
GRAD_CLIP = 1.0

STAGE_PLAN = "plan"
STAGE_WRITE = "write"


class CheckpointError(ValueError):
    """Raised for unreadable or inconsistent checkpoint files."""


@dataclass(frozen=True)
class LMConfig:
    vocab_size: int
    embedding_dim: int = 64
    hidden_dim: int = 128
    num_layers: int = 2
    bptt_window: int = 35
    batch_size: int = 16
    learning_rate: float = 2.5
    epochs: int = 10
    seed: int = 0
    dtype: str = "float32"  # float64 for gradient checking

    def validate(self) -> None:
        for name in (
            "vocab_size",
            "embedding_dim",
            "hidden_dim",
            "num_layers",
            "bptt_window",
            "batch_size",
            "epochs",
        ):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 0:
                raise ValueError(f"{name} must be a non-negative integer")
        if self.vocab_size < 1:
            raise ValueError("vocab_size must be >= 1")
        for name in ("embedding_dim", "hidden_dim", "num_layers", "bptt_window", "batch_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be float32 or float64")

    @property
    def np_dtype(self) -> np.dtype:
        return np.dtype(self.dtype)

    def layer_dims(self) -> list[tuple[int, int]]:
        """(input, output) size per layer; the top layer emits embedding_dim."""
        dims = []
        for layer in range(self.num_layers):
            in_dim = self.embedding_dim if layer == 0 else self.hidden_dim
            out_dim = self.embedding_dim if layer == self.num_layers - 1 else self.hidden_dim
            dims.append((in_dim, out_dim))
        return dims

    def to_dict(self) -> dict:
        return {
            "vocab_size": self.vocab_size,
            "embedding_dim": self.embedding_dim,
            "hidden_dim": self.hidden_dim,
            "num_layers": self.num_layers,
            "bptt_window": self.bptt_window,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "epochs": self.epochs,
            "seed": self.seed,
            "dtype": self.dtype,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LMConfig":
        cfg = cls(**d)
        cfg.validate()
        return cfg


def param_shapes(config: LMConfig) -> dict[str, tuple[int, ...]]:
    """Canonical parameter name -> shape map, in serialization order."""
    shapes: dict[str, tuple[int, ...]] = {
        "emb": (config.vocab_size, config.embedding_dim)
    }
    for layer, (in_dim, out_dim) in enumerate(config.layer_dims()):
        shapes[f"lstm{layer}_W"] = (in_dim + out_dim, 4 * out_dim)
        shapes[f"lstm{layer}_b"] = (4 * out_dim,)
    shapes["out_b"] = (config.vocab_size,)
    return shapes


@dataclass
class ConditionalLM:
    """Trained or trainable model: config plus named parameter arrays."""

    config: LMConfig
    params: dict[str, np.ndarray]
    vocab_hash: str = ""
    kind: str = ""  # planner | title2story | planwrite (informational)

    @property
    def vocab_size(self) -> int:
        return self.config.vocab_size

    def copy(self) -> "ConditionalLM":
        return ConditionalLM(
            config=self.config,
            params={k: v.copy() for k, v in self.params.items()},
            vocab_hash=self.vocab_hash,
            kind=self.kind,
        )


@dataclass
class RecurrentState:
    """Per-layer hidden and cell arrays; batch is the leading axis."""

    h: list[np.ndarray]
    c: list[np.ndarray]

    def copy(self) -> "RecurrentState":
        return RecurrentState(h=[a.copy() for a in self.h], c=[a.copy() for a in self.c])


def zero_state(config: LMConfig, batch_size: int = 1) -> RecurrentState:
    dt = config.np_dtype
    h = [np.zeros((batch_size, out_dim), dtype=dt) for _, out_dim in config.layer_dims()]
    c = [np.zeros((batch_size, out_dim), dtype=dt) for _, out_dim in config.layer_dims()]
    return RecurrentState(h=h, c=c)


@dataclass(frozen=True)
class GenerationContext:
    """Conditioning input assembled as one flat id sequence.

    ``stage`` selects how far the separator scheme goes: the plan stage
    ends inside the phrase section, the write stage ends inside the
    sentence section.
    """

    topic: tuple[int, ...]
    storyline: tuple[tuple[int, ...], ...] = ()
    story: tuple[tuple[int, ...], ...] = ()
    stage: str = STAGE_WRITE

    def __post_init__(self) -> None:
        if self.stage not in (STAGE_PLAN, STAGE_WRITE):
            raise ValueError(f"unknown stage {self.stage!r}")

    def ids(self) -> list[int]:
        out = list(self.topic) + [SEP_TITLE_ID]
        for phrase in self.storyline:
            out.extend(phrase)
            out.append(EOP_ID)
        if self.stage == STAGE_PLAN:
            return out
        out.append(SEP_PLAN_ID)
        for sentence in self.story:
            out.extend(sentence)
            out.append(EOS_ID)
        return out


def init_lm(config: LMConfig, seed: int | None = None) -> ConditionalLM:
    """Initialize parameters uniformly in [-INIT_SCALE, INIT_SCALE], seeded."""
    config.validate()
    rng = np.random.default_rng(config.seed if seed is None else seed)
    dt = config.np_dtype
    params = {
        name: rng.uniform(-INIT_SCALE, INIT_SCALE, size=shape).astype(dt)
        for name, shape in param_shapes(config).items()
    }
    return ConditionalLM(config=config, params=params)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    expx = np.exp(x[~pos])
    out[~pos] = expx / (1.0 + expx)
    return out


def _check_ids(ids: np.ndarray, vocab_size: int) -> None:
    if ids.size == 0:
        raise ValueError("empty id sequence")
    if ids.min() < 0 or ids.max() >= vocab_size:
        raise ValueError(f"id out of range for vocab size {vocab_size}")


def _forward_batch(
    model: ConditionalLM,
    x_ids: np.ndarray,
    state: RecurrentState,
    keep_cache: bool,
) -> tuple[np.ndarray, RecurrentState, list | None]:
    """Run the stack over (B, T) ids. Returns logits (B, T, V)."""
    config = model.config
    _check_ids(x_ids, config.vocab_size)
    emb = model.params["emb"]
    batch, steps = x_ids.shape
    dims = config.layer_dims()
    h = [a.copy() for a in state.h]
    c = [a.copy() for a in state.c]
    h_top = np.empty((batch, steps, config.embedding_dim), dtype=emb.dtype)
    cache: list | None = [] if keep_cache else None

    for t in range(steps):
        inp = emb[x_ids[:, t]]
        step_cache = [] if keep_cache else None
        for layer, (in_dim, out_dim) in enumerate(dims):
            W = model.params[f"lstm{layer}_W"]
            b = model.params[f"lstm{layer}_b"]
            xh = np.concatenate([inp, h[layer]], axis=1)
            z = xh @ W + b
            i = _sigmoid(z[:, :out_dim])
            f = _sigmoid(z[:, out_dim : 2 * out_dim])
            g = np.tanh(z[:, 2 * out_dim : 3 * out_dim])
            o = _sigmoid(z[:, 3 * out_dim :])
            c_new = f * c[layer] + i * g
            tc = np.tanh(c_new)
            h_new = o * tc
            if keep_cache:
                step_cache.append((inp, h[layer], c[layer], i, f, g, o, tc))
            h[layer] = h_new
            c[layer] = c_new
            inp = h_new
        h_top[:, t] = inp
        if keep_cache:
            cache.append(step_cache)

    logits = h_top @ emb.T + model.params["out_b"]
    final = RecurrentState(h=h, c=c)
    if keep_cache:
        return logits, final, [cache, h_top, x_ids]
    return logits, final, None


def forward(
    model: ConditionalLM, ids: Sequence[int], state: RecurrentState | None = None
) -> tuple[np.ndarray, RecurrentState]:
    """Logits for each position of a single sequence, plus the final state."""
    arr = np.asarray(list(ids), dtype=np.int64).reshape(1, -1)
    if state is None:
        state = zero_state(model.config, batch_size=1)
    logits, final, _ = _forward_batch(model, arr, state, keep_cache=False)
    return logits[0], final


def step(
    model: ConditionalLM, token_id: int, state: RecurrentState
) -> tuple[np.ndarray, RecurrentState]:
    """Advance one token; returns next-token logits (V,) and the new state."""
    logits, final = forward(model, [token_id], state)
    return logits[-1], final


def next_distribution(
    model: ConditionalLM,
    context: GenerationContext | Sequence[int],
    temperature: float,
) -> np.ndarray:
    """Temperature softmax over the next token given the full context."""
    ids = context.ids() if isinstance(context, GenerationContext) else list(context)
    logits, _ = forward(model, ids)
    return softmax(logits[-1], temperature)


def softmax(logits: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    z = np.asarray(logits, dtype=np.float64) / temperature
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def log_softmax(logits: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    z = np.asarray(logits, dtype=np.float64) / temperature
    z = z - z.max()
    return z - np.log(np.exp(z).sum())


def loss_and_grads(
    model: ConditionalLM,
    x_ids: np.ndarray,
    y_ids: np.ndarray,
    state: RecurrentState,
) -> tuple[float, dict[str, np.ndarray], RecurrentState]:
    """Mean next-token cross-entropy over a (B, T) window and its gradients.

    Backpropagation runs through the whole window and stops at the incoming
    state (truncated BPTT). The embedding gradient combines the output
    projection term and the input lookup term (tied weights).
    """
    config = model.config
    emb = model.params["emb"]
    logits, final, extra = _forward_batch(model, x_ids, state, keep_cache=True)
    cache, h_top, _ = extra
    batch, steps = x_ids.shape
    n = batch * steps

    # Softmax + cross entropy, numerically stable.
    z = logits - logits.max(axis=2, keepdims=True)
    expz = np.exp(z)
    probs = expz / expz.sum(axis=2, keepdims=True)
    rows = np.arange(batch)[:, None], np.arange(steps)[None, :]
    picked = probs[rows[0], rows[1], y_ids]
    loss = float(-np.log(np.maximum(picked, np.finfo(probs.dtype).tiny)).mean())

    dlogits = probs.copy()
    dlogits[rows[0], rows[1], y_ids] -= 1.0
    dlogits /= n

    grads = {name: np.zeros_like(p) for name, p in model.params.items()}
    grads["out_b"] = dlogits.sum(axis=(0, 1))
    grads["emb"] += np.einsum("btv,bte->ve", dlogits, h_top)
    dh_top = np.einsum("btv,ve->bte", dlogits, emb)

    dims = config.layer_dims()
    dh_next = [np.zeros((batch, out_dim), dtype=emb.dtype) for _, out_dim in dims]
    dc_next = [np.zeros((batch, out_dim), dtype=emb.dtype) for _, out_dim in dims]

    for t in range(steps - 1, -1, -1):
        dx_above: np.ndarray | None = None
        for layer in range(len(dims) - 1, -1, -1):
            in_dim, out_dim = dims[layer]
            inp, h_prev, c_prev, i, f, g, o, tc = cache[t][layer]
            dh = dh_next[layer].copy()
            if layer == len(dims) - 1:
                dh += dh_top[:, t]
            if dx_above is not None:
                dh += dx_above
            do = dh * tc
            dc = dc_next[layer] + dh * o * (1.0 - tc * tc)
            di = dc * g
            dg = dc * i
            df = dc * c_prev
            dc_next[layer] = dc * f
            dz = np.concatenate(
                [
                    di * i * (1.0 - i),
                    df * f * (1.0 - f),
                    dg * (1.0 - g * g),
                    do * o * (1.0 - o),
                ],
                axis=1,
            )
            xh = np.concatenate([inp, h_prev], axis=1)
            grads[f"lstm{layer}_W"] += xh.T @ dz
            grads[f"lstm{layer}_b"] += dz.sum(axis=0)
            dxh = dz @ model.params[f"lstm{layer}_W"].T
            dx_above = dxh[:, :in_dim]
            dh_next[layer] = dxh[:, in_dim:]
        np.add.at(grads["emb"], x_ids[:, t], dx_above)

    return loss, grads, final


def window_loss(
    model: ConditionalLM, x_ids: np.ndarray, y_ids: np.ndarray, state: RecurrentState
) -> tuple[float, RecurrentState]:
    """Mean cross-entropy of a window without gradient bookkeeping."""
    logits, final, _ = _forward_batch(model, x_ids, state, keep_cache=False)
    z = logits - logits.max(axis=2, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=2, keepdims=True))
    batch, steps = x_ids.shape
    picked = logp[np.arange(batch)[:, None], np.arange(steps)[None, :], y_ids]
    return float(-picked.mean()), final


def _clip_grads(grads: dict[str, np.ndarray], max_norm: float) -> None:
    total = np.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if total > max_norm:
        scale = max_norm / total
        for g in grads.values():
            g *= scale


def _batch_stream(
    sequences: Sequence[Sequence[int]], batch_size: int
) -> tuple[np.ndarray, int]:
    stream = np.asarray([t for seq in sequences for t in seq], dtype=np.int64)
    if stream.size == 0:
        raise ValueError("empty training data")
    # Need at least two columns so every row has an input and a target.
    effective = min(batch_size, max(1, stream.size // 2))
    cols = stream.size // effective
    arr = stream[: effective * cols].reshape(effective, cols)
    return arr, effective


def _windows(cols: int, window: int) -> list[tuple[int, int]]:
    spans = []
    t = 0
    while t + 1 < cols:
        end = min(t + window, cols - 1)
        spans.append((t, end))
        t = end
    return spans


def train(
    model: ConditionalLM,
    sequences: Sequence[Sequence[int]],
    config: LMConfig | None = None,
) -> tuple[ConditionalLM, list[float]]:
    """Train in place with windowed backpropagation and SGD.

    Sequences are concatenated into one stream, folded into batch_size
    rows, and scanned in bptt_window chunks with the recurrent state
    carried (but not backpropagated) across chunk boundaries. Gradients
    are clipped to global norm 1.0. Returns the model and a loss history
    whose entry 0 is the pre-training loss over the stream, followed by
    each epoch's mean training loss.
    """
    if config is None:
        config = model.config
    config.validate()
    if not sequences:
        raise ValueError("empty training data")
    arr, batch = _batch_stream(sequences, config.batch_size)
    spans = _windows(arr.shape[1], config.bptt_window)
    if not spans:
        raise ValueError("training stream too short")

    def evaluate() -> float:
        state = zero_state(config, batch)
        total, count = 0.0, 0
        for start, end in spans:
            loss, state = window_loss(model, arr[:, start:end], arr[:, start + 1 : end + 1], state)
            total += loss * (end - start)
            count += end - start
        return total / count

    history = [evaluate()]
    lr = config.learning_rate
    for _ in range(config.epochs):
        state = zero_state(config, batch)
        total, count = 0.0, 0
        for start, end in spans:
            loss, grads, state = loss_and_grads(
                model, arr[:, start:end], arr[:, start + 1 : end + 1], state
            )
            _clip_grads(grads, GRAD_CLIP)
            for name, grad in grads.items():
                model.params[name] -= (lr * grad).astype(model.params[name].dtype, copy=False)
            total += loss * (end - start)
            count += end - start
        history.append(total / count)
    return model, history


def perplexity(model: ConditionalLM, sequences: Sequence[Sequence[int]]) -> float:
    """exp(mean next-token cross-entropy) over all predictable positions."""
    total, count = 0.0, 0
    for seq in sequences:
        ids = list(seq)
        if len(ids) < 2:
            continue
        logits, _ = forward(model, ids[:-1])
        logits = logits.astype(np.float64)
        z = logits - logits.max(axis=1, keepdims=True)
        logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        targets = np.asarray(ids[1:], dtype=np.int64)
        total += float(-logp[np.arange(len(targets)), targets].sum())
        count += len(targets)
    if count == 0:
        raise ValueError("no predictable tokens")
    return float(np.exp(total / count))


def sequence_logprob(
    model: ConditionalLM,
    context_ids: Sequence[int],
    continuation: Sequence[int],
    stop_token: int | None = None,
) -> float:
    """log P(continuation [stop] | context) under the model."""
    ids = list(context_ids) + list(continuation)
    targets = list(continuation)
    if stop_token is not None:
        ids.append(stop_token)
        targets.append(stop_token)
    if not targets:
        return 0.0
    logits, _ = forward(model, ids[:-1])
    tail = logits[len(context_ids) - 1 :]
    z = tail - tail.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return float(logp[np.arange(len(targets)), np.asarray(targets)].sum())


def save_lm(model: ConditionalLM, path: str | Path) -> None:
    """Write the checkpoint container (magic, JSON manifest, raw f32 arrays)."""
    _save_container(
        CHECKPOINT_MAGIC,
        model.config.to_dict(),
        model.vocab_hash,
        model.params,
        path,
        extra={"kind": model.kind},
    )


def load_lm(path: str | Path) -> ConditionalLM:
    manifest, params = _load_container(CHECKPOINT_MAGIC, path)
    config = LMConfig.from_dict(manifest["config"])
    expected = param_shapes(config)
    if set(expected) != set(params):
        raise CheckpointError("parameter names do not match config")
    for name, shape in expected.items():
        if params[name].shape != shape:
            raise CheckpointError(
                f"parameter {name}: manifest shape {params[name].shape} != config shape {shape}"
            )
    dt = config.np_dtype
    params = {k: v.astype(dt) for k, v in params.items()}
    return ConditionalLM(
        config=config,
        params=params,
        vocab_hash=manifest.get("vocab_hash", ""),
        kind=manifest.get("kind", ""),
    )


def _save_container(
    magic: bytes,
    config_dict: dict,
    vocab_hash: str,
    params: dict[str, np.ndarray],
    path: str | Path,
    extra: dict | None = None,
) -> None:
    entries = []
    blobs = []
    offset = 0
    for name, array in params.items():
        raw = np.ascontiguousarray(array, dtype="<f4").tobytes()
        entries.append(
            {"name": name, "shape": list(array.shape), "offset": offset, "nbytes": len(raw)}
        )
        blobs.append(raw)
        offset += len(raw)
    record = {
        "format_version": 1,
        "config": config_dict,
        "vocab_hash": vocab_hash,
        "params": entries,
    }
    if extra:
        record.update(extra)
    manifest = json.dumps(record, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<I", len(manifest)))
        fh.write(manifest)
        for blob in blobs:
            fh.write(blob)


def _load_container(magic: bytes, path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    data = Path(path).read_bytes()
    if not data.startswith(magic):
        raise CheckpointError("bad magic bytes")
    pos = len(magic)
    if len(data) < pos + 4:
        raise CheckpointError("truncated header")
    (mlen,) = struct.unpack_from("<I", data, pos)
    pos += 4
    if len(data) < pos + mlen:
        raise CheckpointError("truncated manifest")
    try:
        manifest = json.loads(data[pos : pos + mlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"unreadable manifest: {exc}") from exc
    if manifest.get("format_version") != 1:
        raise CheckpointError("unsupported format version")
    pos += mlen
    body = data[pos:]
    params: dict[str, np.ndarray] = {}
    for entry in manifest["params"]:
        start, nbytes = entry["offset"], entry["nbytes"]
        shape = tuple(entry["shape"])
        if start + nbytes > len(body):
            raise CheckpointError(f"truncated array {entry['name']!r}")
        count = nbytes // 4
        if count != int(np.prod(shape)):
            raise CheckpointError(f"array {entry['name']!r}: manifest length mismatch")
        params[entry["name"]] = (
            np.frombuffer(body[start : start + nbytes], dtype="<f4").reshape(shape).copy()
        )
    return manifest, params
