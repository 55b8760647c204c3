"""Sampling and beam-search decoders.

Both decoders work token-by-token against the recurrent model. Beam search
keeps raw (unnormalized) log probabilities and supports an optional
rescorer: after every expansion all candidates are scored and re-ranked by
combined = log P + weights . scores before pruning, so the re-ranked order
is what survives. Phrase bans mask any token whose emission would complete
a banned token sequence as a suffix.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from .lm import (
    ConditionalLM,
    GenerationContext,
    RecurrentState,
    forward,
    log_softmax,
    softmax,
    step,
)

DEFAULT_BEAM_SIZE = 5
DEFAULT_MAX_TOKENS = 20
MAX_PHRASE_TOKENS = 4


class DecodeError(RuntimeError):
    """Raised when decoding cannot proceed or a scorer fails."""


@dataclass(frozen=True)
class DecodeParams:
    beam_size: int = DEFAULT_BEAM_SIZE
    temperature: float | None = None  # beam search is untempered by default
    max_tokens: int = DEFAULT_MAX_TOKENS
    min_tokens: int = 0  # stop token inadmissible before this many tokens
    length_normalize: bool = False  # normalization is not supported; must stay False
    banned_phrases: frozenset[tuple[int, ...]] = frozenset()
    seed: int = 0

    def validate(self) -> None:
        if self.beam_size < 1:
            raise ValueError("beam_size must be >= 1")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")
        if not 0 <= self.min_tokens <= self.max_tokens:
            raise ValueError("min_tokens must lie in [0, max_tokens]")
        if self.temperature is not None and self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.length_normalize:
            raise ValueError("length-normalized beam search is not supported")


@dataclass(frozen=True)
class BeamHypothesis:
    """A decoding candidate: tokens, log P, per-scorer scores, combined score."""

    tokens: tuple[int, ...]
    logp_lm: float
    disc_scores: tuple[float, ...] = ()
    combined: float = 0.0
    finished: bool = False


class Rescorer(Protocol):
    """Scores candidate token sequences against a fixed decoding context."""

    @property
    def weights(self) -> np.ndarray: ...

    def score_candidates(self, candidates: Sequence[tuple[int, ...]]) -> np.ndarray:
        """Return an (n_candidates, n_scorers) score matrix."""
        ...


def banned_next_tokens(
    tokens: tuple[int, ...], banned: frozenset[tuple[int, ...]]
) -> set[int]:
    """Tokens that would complete some banned phrase as a suffix of tokens."""
    out: set[int] = set()
    for phrase in banned:
        if not phrase:
            continue
        prefix = phrase[:-1]
        if len(prefix) == 0 or tokens[len(tokens) - len(prefix) :] == prefix:
            out.add(phrase[-1])
    return out


def sample_sequence(
    lm: ConditionalLM,
    context: GenerationContext | Sequence[int],
    temperature: float,
    stop_token: int,
    params: DecodeParams,
) -> list[int]:
    """Autoregressive temperature sampling until stop_token or max_tokens.

    The returned sequence excludes the stop token. Reproducible for a fixed
    (seed, inputs) pair.
    """
    params.validate()
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    rng = np.random.default_rng(params.seed)
    ids = context.ids() if isinstance(context, GenerationContext) else list(context)
    logits, state = forward(lm, ids)
    logits = logits[-1]
    tokens: list[int] = []
    while True:
        probs = softmax(logits, temperature)
        for tok in banned_next_tokens(tuple(tokens), params.banned_phrases):
            probs[tok] = 0.0
        if len(tokens) < params.min_tokens:
            probs[stop_token] = 0.0
        total = probs.sum()
        if total <= 0.0:
            raise DecodeError("no admissible token")
        probs = probs / total
        draw = rng.random()
        tok = int(np.searchsorted(np.cumsum(probs), draw, side="right"))
        tok = min(tok, len(probs) - 1)
        if tok == stop_token:
            return tokens
        tokens.append(tok)
        if len(tokens) >= params.max_tokens:
            return tokens
        logits, state = step(lm, tok, state)


@dataclass
class _Live:
    tokens: tuple[int, ...]
    logp: float
    state: RecurrentState
    logits: np.ndarray
    combined: float = 0.0
    disc_scores: tuple[float, ...] = ()


def beam_search(
    lm: ConditionalLM,
    context: GenerationContext | Sequence[int],
    params: DecodeParams,
    rescorer: Rescorer | None = None,
    stop_token: int = 0,
) -> BeamHypothesis:
    """Best finished hypothesis under raw combined score.

    Keeps beam_size live hypotheses per step. A hypothesis finishes by
    emitting stop_token (the stop emission's log probability is included in
    logp_lm; the token itself is not part of tokens). If nothing finishes
    within max_tokens the best unfinished hypothesis is returned with
    finished=False. Ties break toward the lexicographically smallest token
    id sequence.
    """
    params.validate()
    ids = context.ids() if isinstance(context, GenerationContext) else list(context)
    logits, state = forward(lm, ids)
    temperature = params.temperature if params.temperature is not None else 1.0
    live: list[_Live] = [_Live(tokens=(), logp=0.0, state=state, logits=logits[-1])]
    finished: list[BeamHypothesis] = []

    for _ in range(params.max_tokens):
        expansions: list[tuple[tuple[int, ...], float, _Live | None, bool]] = []
        for hyp in live:
            logp_tok = log_softmax(hyp.logits, temperature)
            banned = banned_next_tokens(hyp.tokens, params.banned_phrases)
            for tok in range(len(logp_tok)):
                if tok in banned:
                    continue
                logp = hyp.logp + float(logp_tok[tok])
                if tok == stop_token:
                    if len(hyp.tokens) >= params.min_tokens:
                        expansions.append((hyp.tokens, logp, None, True))
                else:
                    expansions.append((hyp.tokens + (tok,), logp, hyp, False))
        if not expansions:
            break

        if rescorer is not None:
            scores = np.asarray(
                rescorer.score_candidates([tokens for tokens, _, _, _ in expansions]),
                dtype=np.float64,
            )
            weights = np.asarray(rescorer.weights, dtype=np.float64)
            combined = np.array([lp for _, lp, _, _ in expansions]) + scores @ weights
        else:
            scores = None
            combined = np.array([lp for _, lp, _, _ in expansions])

        order = sorted(
            range(len(expansions)), key=lambda k: (-combined[k], expansions[k][0])
        )
        next_live: list[_Live] = []
        for k in order:
            tokens, logp, parent, is_stop = expansions[k]
            disc = tuple(float(v) for v in scores[k]) if scores is not None else ()
            if is_stop:
                finished.append(
                    BeamHypothesis(
                        tokens=tokens,
                        logp_lm=logp,
                        disc_scores=disc,
                        combined=float(combined[k]),
                        finished=True,
                    )
                )
            elif len(next_live) < params.beam_size:
                new_logits, new_state = step(lm, tokens[-1], parent.state)
                next_live.append(
                    _Live(
                        tokens=tokens,
                        logp=logp,
                        state=new_state,
                        logits=new_logits,
                        combined=float(combined[k]),
                        disc_scores=disc,
                    )
                )
        finished.sort(key=lambda h: (-h.combined, h.tokens))
        del finished[max(params.beam_size, 1) :]
        live = next_live
        if not live:
            break

    if finished:
        return finished[0]
    best = min(live, key=lambda h: (-h.combined, h.tokens))
    return BeamHypothesis(
        tokens=best.tokens,
        logp_lm=best.logp,
        disc_scores=best.disc_scores,
        combined=best.combined,
        finished=False,
    )


def rerank(
    hypotheses: Sequence[BeamHypothesis],
    scorers: Sequence,
    weights: Sequence[float],
) -> list[BeamHypothesis]:
    """Recompute scores and re-sort (stable, descending combined).

    Each scorer is called with the hypothesis; failures propagate with the
    scorer's index attached.
    """
    if len(scorers) != len(weights):
        raise ValueError("one weight per scorer required")
    rescored = []
    for hyp in hypotheses:
        scores = []
        for idx, scorer in enumerate(scorers):
            try:
                scores.append(float(scorer(hyp)))
            except Exception as exc:
                raise DecodeError(f"scorer {idx} failed: {exc}") from exc
        combined = hyp.logp_lm + float(np.dot(weights, scores)) if scores else hyp.logp_lm
        rescored.append(
            BeamHypothesis(
                tokens=hyp.tokens,
                logp_lm=hyp.logp_lm,
                disc_scores=tuple(scores),
                combined=combined,
                finished=hyp.finished,
            )
        )
    return sorted(rescored, key=lambda h: -h.combined)
