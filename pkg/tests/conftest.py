import numpy as np
import pytest

from storyloom.discriminators import RerankWeights, init_discriminator
from storyloom.lm import LMConfig, init_lm
from storyloom.pipeline import Engine
from storyloom.synth import generate_corpus
from storyloom.text import build_vocab


@pytest.fixture(scope="session")
def synthetic_corpus():
    from importlib import resources

    from storyloom.text import load_corpus

    path = resources.files("storyloom.data").joinpath("synthetic_corpus.tsv")
    return load_corpus(str(path))


def make_toy_engine(seed: int = 0, weights=(0.5, 0.5), n_stories: int = 30) -> Engine:
    """Small random-init engine; fast enough for interactive-session tests."""
    records = generate_corpus(n_stories, seed=1)
    vocab = build_vocab(records)
    cfg = LMConfig(
        vocab_size=vocab.size, embedding_dim=12, hidden_dim=16, num_layers=2, seed=seed
    )
    dim = cfg.embedding_dim
    return Engine(
        planner_lm=init_lm(cfg, seed=seed + 1),
        planner_vocab=vocab,
        title_lm=init_lm(cfg, seed=seed + 2),
        planwrite_lm=init_lm(cfg, seed=seed + 3),
        writer_vocab=vocab,
        discriminators=[
            init_discriminator("creativity", dim, dim, seed + 4),
            init_discriminator("relevance", dim, dim, seed + 5),
        ],
        weights=RerankWeights(values=tuple(float(w) for w in weights)),
    )


@pytest.fixture(scope="session")
def toy_engine():
    return make_toy_engine()


@pytest.fixture(scope="session")
def trained_toy_engine():
    """Briefly trained tiny engine: conditioning actually shapes outputs."""
    from storyloom.lm import train
    from storyloom.pipeline import build_training_sequences
    from storyloom.rake import default_stopwords, extract_storyline

    records = generate_corpus(120, seed=1)
    vocab = build_vocab(records)
    stops = default_stopwords()
    storylines = [extract_storyline(r, stops) for r in records]
    config = LMConfig(
        vocab_size=vocab.size,
        embedding_dim=24,
        hidden_dim=32,
        num_layers=2,
        epochs=30,
        batch_size=8,
        bptt_window=40,
        learning_rate=1.5,
        seed=0,
    )
    model = init_lm(config)
    sequences = build_training_sequences(
        "planwrite", vocab, stories=records, storylines=storylines
    )
    model, _ = train(model, sequences, config)
    dim = config.embedding_dim
    return Engine(
        planner_lm=model,
        planner_vocab=vocab,
        title_lm=model,
        planwrite_lm=model,
        writer_vocab=vocab,
        discriminators=[
            init_discriminator("creativity", dim, dim, 1),
            init_discriminator("relevance", dim, dim, 2),
        ],
        weights=RerankWeights(values=(0.0, 0.0)),
    )


@pytest.fixture(scope="session")
def desk_models(synthetic_corpus):
    """One desk-scale training run shared by training-dependent tests.

    Splits the bundled corpus, trains the storyline-conditioned writer,
    and returns everything downstream tests need. Kept session-scoped
    because training dominates suite runtime.
    """
    import time

    from storyloom.lm import train
    from storyloom.pipeline import build_training_sequences
    from storyloom.rake import default_stopwords, extract_storyline

    records = synthetic_corpus
    split = int(len(records) * 0.9)
    train_records, val_records = records[:split], records[split:]
    vocab = build_vocab(records)
    stops = default_stopwords()
    storylines = [extract_storyline(rec, stops) for rec in records]
    config = LMConfig(vocab_size=vocab.size, epochs=8, seed=0)
    sequences = build_training_sequences(
        "planwrite", vocab, stories=train_records, storylines=storylines[:split]
    )
    val_sequences = build_training_sequences(
        "planwrite", vocab, stories=val_records, storylines=storylines[split:]
    )
    model = init_lm(config)
    started = time.monotonic()
    model, losses = train(model, sequences, config)
    train_seconds = time.monotonic() - started
    return {
        "records": records,
        "split": split,
        "train_records": train_records,
        "val_records": val_records,
        "vocab": vocab,
        "storylines": storylines,
        "model": model,
        "losses": losses,
        "train_sequences": sequences,
        "val_sequences": val_sequences,
        "train_seconds": train_seconds,
    }
