"""storyloom: interactive story generation with storyline planning and
discriminator-reranked decoding."""

__version__ = "0.1.0"
