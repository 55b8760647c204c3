"""Rerank scorers and mixture-weight fitting.

Two bilinear scorers rate a candidate continuation against its decoding
context: one trained to prefer human-written over machine-generated
sentences ("creativity"), one trained to prefer the true context over a
context swapped in from another story ("relevance"). Both pool token
embeddings by mean and score

    s = tanh(pool(context)^T W pool(candidate) + bias)

so scores stay in (-1, 1). Mixture weights are fit in closed form by least
squares so that gold-minus-generated combined-score gaps regress toward 1.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .lm import (
    ConditionalLM,
    GenerationContext,
    _load_container,
    _save_container,
    sequence_logprob,
)
from .text import EOS_ID, SENTENCES_PER_STORY, StoryRecord, Vocabulary

DISCRIMINATOR_MAGIC = b"PWRD1\n"

KIND_CREATIVITY = "creativity"
KIND_RELEVANCE = "relevance"
KINDS = (KIND_CREATIVITY, KIND_RELEVANCE)

MIN_POSITIVE_EXAMPLES = 10


class DiscriminatorError(ValueError):
    pass


@dataclass
class DiscriminatorModel:
    kind: str
    W: np.ndarray  # (context_dim, candidate_dim)
    bias: float

    def copy(self) -> "DiscriminatorModel":
        return DiscriminatorModel(kind=self.kind, W=self.W.copy(), bias=self.bias)


@dataclass(frozen=True)
class RerankWeights:
    """One mixture weight per attached discriminator."""

    values: tuple[float, ...]
    kinds: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.kinds and len(self.kinds) != len(self.values):
            raise ValueError("kinds and values must align")

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps({"values": list(self.values), "kinds": list(self.kinds)}, sort_keys=True)
            + "\n",
            encoding="utf-8",
        )

    @classmethod
    def load(cls, path: str | Path) -> "RerankWeights":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(values=tuple(data["values"]), kinds=tuple(data.get("kinds", ())))


@dataclass(frozen=True)
class ScoredPair:
    """Gold-vs-generated score gaps for one context, used to fit weights."""

    dlogp: float
    ds: tuple[float, ...]
    context_pooled: tuple[float, ...] | None = None
    gold_pooled: tuple[float, ...] | None = None
    generated_pooled: tuple[float, ...] | None = None

    def to_json(self) -> str:
        record = {"dlogp": self.dlogp, "ds": list(self.ds)}
        if self.context_pooled is not None:
            record["context_pooled"] = list(self.context_pooled)
        if self.gold_pooled is not None:
            record["gold_pooled"] = list(self.gold_pooled)
        if self.generated_pooled is not None:
            record["generated_pooled"] = list(self.generated_pooled)
        return json.dumps(record, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "ScoredPair":
        data = json.loads(line)
        opt = lambda key: tuple(data[key]) if key in data else None
        return cls(
            dlogp=float(data["dlogp"]),
            ds=tuple(float(v) for v in data["ds"]),
            context_pooled=opt("context_pooled"),
            gold_pooled=opt("gold_pooled"),
            generated_pooled=opt("generated_pooled"),
        )


def save_pairs(pairs: Sequence[ScoredPair], path: str | Path) -> None:
    Path(path).write_text("\n".join(p.to_json() for p in pairs) + "\n", encoding="utf-8")


def load_pairs(path: str | Path) -> list[ScoredPair]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [ScoredPair.from_json(line) for line in lines if line.strip()]


def pool(embeddings: np.ndarray, ids: Sequence[int]) -> np.ndarray:
    """Mean of embedding rows; the zero vector for an empty sequence."""
    if len(ids) == 0:
        return np.zeros(embeddings.shape[1], dtype=np.float64)
    return embeddings[np.asarray(list(ids), dtype=np.int64)].mean(axis=0).astype(np.float64)


def score(
    model: DiscriminatorModel,
    context: GenerationContext | Sequence[int],
    candidate: Sequence[int],
    embeddings: np.ndarray,
) -> float:
    """tanh-bounded bilinear score of a candidate against its context."""
    if len(candidate) == 0:
        raise DiscriminatorError("empty candidate")
    ctx_ids = context.ids() if isinstance(context, GenerationContext) else list(context)
    c = pool(embeddings, ctx_ids)
    y = pool(embeddings, candidate)
    return float(np.tanh(c @ model.W @ y + model.bias))


def init_discriminator(
    kind: str, context_dim: int, candidate_dim: int, seed: int = 0
) -> DiscriminatorModel:
    """Zero-initialized scorer: the first training step is then exactly the
    (pos - neg) feature cross-covariance rather than random noise."""
    if kind not in KINDS:
        raise DiscriminatorError(f"unknown discriminator kind {kind!r}")
    return DiscriminatorModel(kind=kind, W=np.zeros((context_dim, candidate_dim)), bias=0.0)


def train_discriminator(
    kind: str,
    corpus: Sequence[StoryRecord],
    negative_source: Callable[[GenerationContext], Sequence[int]] | None,
    epochs: int,
    seed: int,
    *,
    vocab: Vocabulary,
    embeddings: np.ndarray,
    storylines: Sequence[Sequence[Sequence[str]]] | None = None,
    learning_rate: float = 0.1,
) -> tuple[DiscriminatorModel, float]:
    """Train one scorer with a margin ranking objective.

    Positives are (story context, gold next sentence) pairs. Negatives per
    kind: creativity pairs the same context with negative_source's
    generated sentence; relevance pairs the gold sentence with a context
    drawn from a different story. Per-example SGD on
    max(0, 1 - s(pos) + s(neg)), examples shuffled per epoch, all seeded.
    Returns the model and the final epoch's mean loss.
    """
    if kind == KIND_CREATIVITY and negative_source is None:
        raise DiscriminatorError("creativity training needs a generation source")
    contexts: list[list[int]] = []
    positives: list[list[int]] = []
    story_of: list[int] = []
    for story_idx, record in enumerate(corpus):
        storyline = storylines[story_idx] if storylines is not None else ()
        for i, sentence in enumerate(record.sentences):
            ctx = GenerationContext(
                topic=tuple(vocab.encode(record.title)),
                storyline=tuple(tuple(vocab.encode(p)) for p in storyline),
                story=tuple(tuple(vocab.encode(s)) for s in record.sentences[:i]),
            )
            contexts.append(ctx.ids())
            positives.append(vocab.encode(sentence))
            story_of.append(story_idx)
    if len(positives) < MIN_POSITIVE_EXAMPLES:
        raise DiscriminatorError(
            f"insufficient data: {len(positives)} positives < {MIN_POSITIVE_EXAMPLES}"
        )

    rng = np.random.default_rng(seed)
    ctx_pooled = np.stack([pool(embeddings, c) for c in contexts])
    pos_pooled = np.stack([pool(embeddings, p) for p in positives])
    n = ctx_pooled.shape[0]
    story_idx = np.asarray(story_of)

    if kind == KIND_CREATIVITY:
        neg_cand = []
        for idx in range(n):
            generated = list(negative_source(_context_of(corpus, storylines, vocab, idx)))
            neg_cand.append(pool(embeddings, generated))
        neg_cand = np.stack(neg_cand)

        def draw_negatives(epoch_rng):
            return ctx_pooled, neg_cand

    else:
        n_stories = len(corpus)
        if n_stories < 2:
            raise DiscriminatorError("relevance training needs at least two stories")

        def draw_negatives(epoch_rng):
            # a context from a different story (any position), redrawn per epoch
            others = epoch_rng.integers(0, n_stories - 1, size=n)
            others = others + (others >= story_idx)
            positions = epoch_rng.integers(0, SENTENCES_PER_STORY, size=n)
            return ctx_pooled[others * SENTENCES_PER_STORY + positions], pos_pooled

    model = init_discriminator(kind, embeddings.shape[1], embeddings.shape[1], seed=seed)
    final_loss = _margin_epochs(
        model, ctx_pooled, pos_pooled, draw_negatives, epochs, learning_rate, rng
    )
    return model, final_loss


def _context_of(corpus, storylines, vocab, flat_idx: int) -> GenerationContext:
    record = corpus[flat_idx // SENTENCES_PER_STORY]
    i = flat_idx % SENTENCES_PER_STORY
    storyline = storylines[flat_idx // SENTENCES_PER_STORY] if storylines is not None else ()
    return GenerationContext(
        topic=tuple(vocab.encode(record.title)),
        storyline=tuple(tuple(vocab.encode(p)) for p in storyline),
        story=tuple(tuple(vocab.encode(s)) for s in record.sentences[:i]),
    )


def _margin_epochs(
    model: DiscriminatorModel,
    ctx_pos: np.ndarray,
    cand_pos: np.ndarray,
    draw_negatives,
    epochs: int,
    lr: float,
    rng: np.random.Generator,
) -> float:
    """Full-batch gradient descent on the margin objective.

    One epoch is one pass over all pairs with that epoch's negatives; the
    mean gradient over the batch is applied once per epoch, which keeps
    single-pair sampling noise from swamping the small systematic signal
    in the pooled features.
    """
    n = ctx_pos.shape[0]
    final = 0.0
    for _ in range(epochs):
        ctx_neg, cand_neg = draw_negatives(rng)
        up = np.einsum("ni,ij,nj->n", ctx_pos, model.W, cand_pos) + model.bias
        un = np.einsum("ni,ij,nj->n", ctx_neg, model.W, cand_neg) + model.bias
        sp, sn = np.tanh(up), np.tanh(un)
        margin = 1.0 - sp + sn
        active = margin > 0.0
        final = float(np.maximum(margin, 0.0).mean())
        dp = (1.0 - sp * sp) * active
        dn = (1.0 - sn * sn) * active
        grad_w = ((ctx_neg * dn[:, None]).T @ cand_neg - (ctx_pos * dp[:, None]).T @ cand_pos) / n
        grad_b = float(dn.sum() - dp.sum()) / n
        # clip to unit norm so the per-epoch step is lr regardless of the
        # embedding scale; keeps tanh out of its dead zone on any corpus
        norm = float(np.sqrt((grad_w * grad_w).sum() + grad_b * grad_b))
        if norm > 1.0:
            grad_w /= norm
            grad_b /= norm
        model.W -= lr * grad_w
        model.bias -= lr * grad_b
    return final


def fit_lambda(pairs: Sequence[ScoredPair]) -> RerankWeights:
    """Least-squares mixture weights.

    Minimizes sum_i (dlogp_i + lambda . ds_i - 1)^2, i.e. ordinary least
    squares of (1 - dlogp) on ds, taking the minimum-norm solution when the
    system is rank deficient.
    """
    if not pairs:
        raise DiscriminatorError("no pairs to fit")
    A = np.asarray([p.ds for p in pairs], dtype=np.float64)
    b = 1.0 - np.asarray([p.dlogp for p in pairs], dtype=np.float64)
    # rcond cuts off near-zero singular values; together with lstsq's
    # pseudoinverse this realizes the minimum-norm convention without
    # blowing up on nearly constant score-gap columns
    values, *_ = np.linalg.lstsq(A, b, rcond=1e-6)
    return RerankWeights(values=tuple(float(v) for v in values))


def mse(pairs: Sequence[ScoredPair], weights: Sequence[float]) -> float:
    A = np.asarray([p.ds for p in pairs], dtype=np.float64)
    b = np.asarray([p.dlogp for p in pairs], dtype=np.float64)
    resid = b + A @ np.asarray(weights, dtype=np.float64) - 1.0
    return float((resid**2).mean())


class BilinearRescorer:
    """Adapts discriminators to the beam-search rescorer protocol.

    Bound to one decoding context; candidate pools are computed per call.
    An empty candidate pools to the zero vector rather than erroring so
    that an immediate stop expansion can still be ranked.
    """

    def __init__(
        self,
        discriminators: Sequence[DiscriminatorModel],
        weights: RerankWeights,
        embeddings: np.ndarray,
        context: GenerationContext | Sequence[int],
    ) -> None:
        if len(discriminators) != len(weights.values):
            raise ValueError("one weight per discriminator required")
        self.discriminators = list(discriminators)
        self._weights = np.asarray(weights.values, dtype=np.float64)
        self.embeddings = embeddings
        ctx_ids = context.ids() if isinstance(context, GenerationContext) else list(context)
        self._ctx = pool(embeddings, ctx_ids)
        # Precompute c^T W per discriminator: scoring is then a dot product.
        self._cw = [self._ctx @ d.W for d in self.discriminators]
        self._bias = [d.bias for d in self.discriminators]

    @property
    def weights(self) -> np.ndarray:
        return self._weights

    def score_candidates(self, candidates: Sequence[tuple[int, ...]]) -> np.ndarray:
        pooled = np.stack([pool(self.embeddings, c) for c in candidates])
        cols = [np.tanh(pooled @ cw + b) for cw, b in zip(self._cw, self._bias)]
        return np.stack(cols, axis=1)

    def score_sentence(self, candidate: Sequence[int]) -> np.ndarray:
        return self.score_candidates([tuple(candidate)])[0]


def build_scored_pairs(
    corpus: Sequence[StoryRecord],
    lm: ConditionalLM,
    discriminators: Sequence[DiscriminatorModel],
    vocab: Vocabulary,
    generate: Callable[[GenerationContext], Sequence[int]],
    storylines: Sequence[Sequence[Sequence[str]]] | None = None,
    limit: int | None = None,
) -> list[ScoredPair]:
    """Score gold vs generated sentences for weight fitting."""
    embeddings = lm.params["emb"]
    pairs: list[ScoredPair] = []
    for story_idx, record in enumerate(corpus):
        storyline = storylines[story_idx] if storylines is not None else ()
        for i, sentence in enumerate(record.sentences):
            ctx = GenerationContext(
                topic=tuple(vocab.encode(record.title)),
                storyline=tuple(tuple(vocab.encode(p)) for p in storyline),
                story=tuple(tuple(vocab.encode(s)) for s in record.sentences[:i]),
            )
            gold = vocab.encode(sentence)
            generated = list(generate(ctx))
            if not generated:
                continue
            ctx_ids = ctx.ids()
            dlogp = sequence_logprob(lm, ctx_ids, gold, EOS_ID) - sequence_logprob(
                lm, ctx_ids, generated, EOS_ID
            )
            ds = tuple(
                score(d, ctx_ids, gold, embeddings) - score(d, ctx_ids, generated, embeddings)
                for d in discriminators
            )
            pairs.append(ScoredPair(dlogp=dlogp, ds=ds))
            if limit is not None and len(pairs) >= limit:
                return pairs
    return pairs


def save_discriminator(model: DiscriminatorModel, path: str | Path) -> None:
    config = {
        "kind": model.kind,
        "context_dim": int(model.W.shape[0]),
        "candidate_dim": int(model.W.shape[1]),
    }
    params = {"W": model.W, "bias": np.asarray([model.bias], dtype=np.float64)}
    _save_container(DISCRIMINATOR_MAGIC, config, "", params, path)


def load_discriminator(path: str | Path) -> DiscriminatorModel:
    manifest, params = _load_container(DISCRIMINATOR_MAGIC, path)
    config = manifest["config"]
    W = params["W"].astype(np.float64)
    if W.shape != (config["context_dim"], config["candidate_dim"]):
        raise DiscriminatorError("checkpoint shape mismatch")
    return DiscriminatorModel(kind=config["kind"], W=W, bias=float(params["bias"][0]))
