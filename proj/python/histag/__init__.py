"""Character-level lemmatizer and tagger for historical French texts."""

from ._histag import (
    ConfigError,
    InputError,
    Model,
    RuntimeFailure,
    annotate,
    evaluate,
    fractional_ranks,
    join_morph,
    load_model,
    model_from_bytes,
    normalize_roman,
    parse_roman,
    parse_tsv,
    posttreat,
    rank,
    shannon_diversity,
    split,
    split_morph,
    train,
    write_tsv,
)

__all__ = [name for name in dir() if not name.startswith("_")]
