"""Operator command line: data prep, training, fitting, generation, serving.

Artifacts follow a data-directory convention so commands compose:

    <data-dir>/planner.lm        planner checkpoint (+ .vocab sibling)
    <data-dir>/title2story.lm    topic-only writer
    <data-dir>/planwrite.lm      storyline-conditioned writer
    <data-dir>/creativity.disc   rerank scorers
    <data-dir>/relevance.disc
    <data-dir>/lambda.json       rerank mixture weights
    <data-dir>/taxonomy.tsv      optional unknown-word taxonomy
    <data-dir>/sessions/         service event logs

Every subcommand exits 0 on success and nonzero with a stderr message
otherwise; --json switches stdout to machine-readable JSON.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import report
from .decoding import DecodeParams
from .discriminators import (
    KIND_CREATIVITY,
    KIND_RELEVANCE,
    RerankWeights,
    build_scored_pairs,
    fit_lambda,
    load_discriminator,
    load_pairs,
    save_discriminator,
    save_pairs,
    train_discriminator,
)
from .lexicon import DEFAULT_MAX_DISTANCE, load_taxonomy, resolve_oov
from .lm import ConditionalLM, LMConfig, init_lm, load_lm, perplexity, save_lm, train
from .pipeline import (
    DEFAULT_PLAN_TEMPERATURE,
    DiversitySettings,
    ModelChoice,
    build_training_sequences,
    plan_storyline,
    write_story,
)
from .rake import default_stopwords, extract_storyline, load_stopwords, save_storylines, load_storylines
from .text import Vocabulary, build_vocab, detokenize, load_corpus, tokenize

WRITER_KINDS = ("title2story", "planwrite")
LM_KINDS = ("planner",) + WRITER_KINDS


def _fail(message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(1)


def _emit(payload: dict, as_json: bool, human: str) -> None:
    if as_json:
        click.echo(json.dumps(payload, sort_keys=True))
    else:
        click.echo(human)


@click.group()
def main() -> None:
    """Storyline planning, story writing, and the collaboration service."""


@main.command("extract-storylines")
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--stopwords", "stopwords_path", type=click.Path(exists=True), default=None)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--max-phrase-len", type=int, default=3, show_default=True)
@click.option("--json", "as_json", is_flag=True)
def extract_storylines_cmd(corpus_path, stopwords_path, out_path, max_phrase_len, as_json):
    """Extract one storyline phrase per sentence from a story corpus."""
    try:
        records = load_corpus(corpus_path)
        stops = load_stopwords(stopwords_path) if stopwords_path else default_stopwords()
        storylines = [extract_storyline(rec, stops, max_phrase_len) for rec in records]
        save_storylines(storylines, out_path)
    except Exception as exc:
        _fail(str(exc))
    _emit(
        {"records": len(storylines), "out": str(out_path)},
        as_json,
        f"extracted {len(storylines)} storylines -> {out_path}",
    )


def _storyline_vocab(storylines, min_count: int) -> Vocabulary:
    from collections import Counter

    from .text import SPECIAL_TOKENS

    counter: Counter[str] = Counter()
    for rec in storylines:
        counter.update(rec.title)
        for phrase in rec.phrases:
            counter.update(phrase.tokens)
    kept = sorted(
        (t for t, n in counter.items() if n >= min_count and t not in SPECIAL_TOKENS),
        key=lambda t: (-counter[t], t),
    )
    return Vocabulary(token_of=list(SPECIAL_TOKENS) + kept)


@main.command("train-lm")
@click.option("--kind", required=True, type=click.Choice(LM_KINDS))
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--json", "as_json", is_flag=True)
def train_lm_cmd(kind, corpus_path, config_path, out_path, seed, as_json):
    """Train one model; writes checkpoint, vocabulary, loss table and curve.

    The planner trains on a storyline dataset (from extract-storylines);
    writers train on the story corpus, planwrite re-deriving storylines
    internally with the bundled stopword list.
    """
    try:
        raw_config = json.loads(Path(config_path).read_text()) if config_path else {}
        min_count = int(raw_config.pop("min_count", 1))
        raw_config.setdefault("seed", seed)
        if kind == "planner":
            storylines = load_storylines(corpus_path)
            vocab = _storyline_vocab(storylines, min_count)
            sequences = build_training_sequences("planner", vocab, storylines=storylines)
        else:
            stories = load_corpus(corpus_path)
            vocab = build_vocab(stories, min_count=min_count)
            storylines = None
            if kind == "planwrite":
                stops = default_stopwords()
                storylines = [extract_storyline(rec, stops) for rec in stories]
            sequences = build_training_sequences(
                kind, vocab, stories=stories, storylines=storylines
            )
        config = LMConfig(vocab_size=vocab.size, **raw_config)
        config.validate()
        model = init_lm(config)
        model.kind = kind
        model.vocab_hash = vocab.content_hash()
        model, losses = train(model, sequences, config)
        save_lm(model, out_path)
        vocab.save(str(out_path) + ".vocab")
        tsv, png = report.write_training_report(losses, out_path, f"{kind} training loss")
    except Exception as exc:
        _fail(str(exc))
    _emit(
        {
            "kind": kind,
            "out": str(out_path),
            "vocab_size": vocab.size,
            "epochs": len(losses) - 1,
            "initial_loss": losses[0],
            "final_loss": losses[-1],
            "report_tsv": str(tsv),
            "report_png": str(png),
        },
        as_json,
        f"trained {kind}: loss {losses[0]:.3f} -> {losses[-1]:.3f} "
        f"({len(losses) - 1} epochs), checkpoint {out_path}",
    )


@main.command("train-discriminators")
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--lm", "lm_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_paths", required=True, help="comma-separated: creativity,relevance")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--json", "as_json", is_flag=True)
def train_discriminators_cmd(corpus_path, lm_path, out_paths, seed, as_json):
    """Train both rerank scorers against a writer checkpoint.

    Also writes <out1 dir>/pairs.jsonl with gold-vs-generated score gaps
    for fit-lambda.
    """
    try:
        parts = out_paths.split(",")
        if len(parts) != 2:
            raise ValueError("--out needs two comma-separated paths")
        out_creativity, out_relevance = (p.strip() for p in parts)
        lm = load_lm(lm_path)
        vocab = Vocabulary.load(lm_path + ".vocab")
        stories = load_corpus(corpus_path)
        stops = default_stopwords()
        storylines = [
            [p.tokens for p in extract_storyline(rec, stops).phrases] for rec in stories
        ]
        generator = _beam_generator(lm, vocab)
        # Cap generation-backed examples so training stays desk-scale.
        cap = min(len(stories), 80)
        creativity, c_loss = train_discriminator(
            KIND_CREATIVITY,
            stories[:cap],
            generator,
            epochs=300,
            seed=seed,
            vocab=vocab,
            embeddings=lm.params["emb"],
            storylines=storylines[:cap],
        )
        relevance, r_loss = train_discriminator(
            KIND_RELEVANCE,
            stories,
            None,
            epochs=300,
            seed=seed,
            vocab=vocab,
            embeddings=lm.params["emb"],
            storylines=storylines,
        )
        save_discriminator(creativity, out_creativity)
        save_discriminator(relevance, out_relevance)
        pairs = build_scored_pairs(
            stories[:cap],
            lm,
            [creativity, relevance],
            vocab,
            generator,
            storylines=storylines[:cap],
            limit=200,
        )
        pairs_path = Path(out_creativity).parent / "pairs.jsonl"
        save_pairs(pairs, pairs_path)
    except Exception as exc:
        _fail(str(exc))
    _emit(
        {
            "creativity": {"out": out_creativity, "final_loss": c_loss},
            "relevance": {"out": out_relevance, "final_loss": r_loss},
            "pairs": str(pairs_path),
            "n_pairs": len(pairs),
        },
        as_json,
        f"trained discriminators: creativity loss {c_loss:.3f}, relevance loss {r_loss:.3f}; "
        f"{len(pairs)} scored pairs -> {pairs_path}",
    )


def _beam_generator(lm: ConditionalLM, vocab: Vocabulary):
    from .decoding import beam_search
    from .text import EOS_ID

    params = DecodeParams(max_tokens=12, min_tokens=1)

    def generate(context):
        return beam_search(lm, context, params, stop_token=EOS_ID).tokens

    return generate


@main.command("fit-lambda")
@click.option("--pairs", "pairs_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--json", "as_json", is_flag=True)
def fit_lambda_cmd(pairs_path, out_path, as_json):
    """Fit rerank mixture weights from a scored-pair dataset."""
    try:
        pairs = load_pairs(pairs_path)
        weights = fit_lambda(pairs)
        weights = RerankWeights(values=weights.values, kinds=(KIND_CREATIVITY, KIND_RELEVANCE))
        weights.save(out_path)
    except Exception as exc:
        _fail(str(exc))
    _emit(
        {"values": list(weights.values), "out": str(out_path), "n_pairs": len(pairs)},
        as_json,
        f"lambda = {list(weights.values)} ({len(pairs)} pairs) -> {out_path}",
    )


@main.command("generate")
@click.option("--model", "model_label", required=True,
              type=click.Choice([c.value for c in ModelChoice]))
@click.option("--topic", required=True)
@click.option("--plan-temp", type=float, default=DEFAULT_PLAN_TEMPERATURE, show_default=True)
@click.option("--story-temp", type=float, default=None)
@click.option("--beam", "beam_size", type=int, default=5, show_default=True)
@click.option("--max-tokens", type=int, default=20, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--lambda", "lambda_path", type=click.Path(exists=True), default=None)
@click.option("--data-dir", required=True, type=click.Path(exists=True))
@click.option("--json", "as_json", is_flag=True)
def generate_cmd(model_label, topic, plan_temp, story_temp, beam_size, max_tokens, seed,
                 lambda_path, data_dir, as_json):
    """Plan a storyline and write a story with one model."""
    try:
        choice = ModelChoice(model_label)
        data = Path(data_dir)
        discs = weights = None
        if choice is ModelChoice.PLAN_AND_REVISE:
            if lambda_path is None:
                raise ValueError("missing --lambda (required for planrevise)")
            weights = RerankWeights.load(lambda_path)
            discs = [
                load_discriminator(data / "creativity.disc"),
                load_discriminator(data / "relevance.disc"),
            ]
        writer_name = (
            "title2story.lm" if choice is ModelChoice.TITLE_TO_STORY else "planwrite.lm"
        )
        writer_lm = load_lm(data / writer_name)
        writer_vocab = Vocabulary.load(str(data / writer_name) + ".vocab")
        taxonomy = None
        taxonomy_path = data / "taxonomy.tsv"
        if taxonomy_path.exists():
            taxonomy = load_taxonomy(taxonomy_path)
        from .lexicon import resolve_tokens

        topic_tokens = resolve_tokens(tokenize(topic), writer_vocab, taxonomy)
        if not topic_tokens:
            raise ValueError("empty topic")
        diversity = DiversitySettings(plan_temperature=plan_temp, story_temperature=story_temp)
        diversity.validate()
        storyline = None
        if choice is not ModelChoice.TITLE_TO_STORY:
            planner_lm = load_lm(data / "planner.lm")
            planner_vocab = Vocabulary.load(str(data / "planner.lm") + ".vocab")
            storyline = plan_storyline(
                planner_lm, planner_vocab, topic_tokens, diversity, seed=seed
            )
        params = DecodeParams(
            beam_size=beam_size, temperature=story_temp, max_tokens=max_tokens, seed=seed
        )
        story = write_story(
            choice, writer_lm, writer_vocab, topic_tokens, storyline, params, discs, weights
        )
    except Exception as exc:
        _fail(str(exc))
    payload = {
        "model": model_label,
        "seed": seed,
        "topic": {"tokens": topic_tokens, "display": detokenize(topic_tokens)},
        "storyline": (
            None
            if storyline is None
            else [{"tokens": list(p), "display": detokenize(p)} for p in storyline]
        ),
        "story": [{"tokens": list(s), "display": detokenize(s)} for s in story],
    }
    lines = [f"topic: {detokenize(topic_tokens)}"]
    if storyline is not None:
        lines.append("storyline: " + " -> ".join(" ".join(p) for p in storyline))
    lines.extend(detokenize(s) for s in story)
    _emit(payload, as_json, "\n".join(lines))


@main.command("eval-ppl")
@click.option("--lm", "lm_path", required=True, type=click.Path(exists=True))
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--json", "as_json", is_flag=True)
def eval_ppl_cmd(lm_path, corpus_path, as_json):
    """Perplexity of a checkpoint over a corpus, using its own sequence layout."""
    try:
        model = load_lm(lm_path)
        vocab = Vocabulary.load(lm_path + ".vocab")
        kind = model.kind or "title2story"
        if kind == "planner":
            storylines = load_storylines(corpus_path)
            sequences = build_training_sequences("planner", vocab, storylines=storylines)
        else:
            stories = load_corpus(corpus_path)
            storylines = None
            if kind == "planwrite":
                stops = default_stopwords()
                storylines = [extract_storyline(rec, stops) for rec in stories]
            sequences = build_training_sequences(
                kind, vocab, stories=stories, storylines=storylines
            )
        value = perplexity(model, sequences)
    except Exception as exc:
        _fail(str(exc))
    _emit(
        {"perplexity": value, "kind": kind, "sequences": len(sequences)},
        as_json,
        f"perplexity: {value:.4f} ({len(sequences)} sequences, {kind} layout)",
    )


@main.command("resolve")
@click.option("--word", required=True)
@click.option("--data-dir", required=True, type=click.Path(exists=True))
@click.option("--max-distance", type=int, default=DEFAULT_MAX_DISTANCE, show_default=True)
@click.option("--json", "as_json", is_flag=True)
def resolve_cmd(word, data_dir, max_distance, as_json):
    """Spot-check unknown-word resolution against the writer vocabulary."""
    try:
        data = Path(data_dir)
        vocab = Vocabulary.load(data / "planwrite.lm.vocab")
        graph = load_taxonomy(data / "taxonomy.tsv")
        res = resolve_oov(word.lower(), vocab, graph, max_distance)
    except Exception as exc:
        _fail(str(exc))
    _emit(
        {
            "word": word,
            "replacement": res.replacement,
            "distance": res.distance,
            "path_kind": res.path_kind,
        },
        as_json,
        f"{word} -> {res.replacement} (distance={res.distance}, path={res.path_kind})",
    )


@main.command("serve")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--json", "as_json", is_flag=True, help="machine-readable startup line")
def serve_cmd(config_path, as_json):
    """Run the HTTP service."""
    from .service import ServiceConfig, run

    try:
        config = ServiceConfig.from_file(config_path)
    except Exception as exc:
        _fail(str(exc))
    _emit(
        {"host": config.host, "port": config.port, "data_dir": config.data_dir},
        as_json,
        f"serving on {config.host}:{config.port} (data dir {config.data_dir})",
    )
    run(config)


if __name__ == "__main__":
    main()
