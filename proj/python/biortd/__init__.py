"""Python access to the biortd tokenizer, metrics and schedules."""

from ._core import (
    Encoding,
    Vocabulary,
    encode,
    entity_prf,
    extract_chunks,
    f1,
    layerwise_lrs,
    lr_at,
    mask_count,
    normalize,
    pre_tokenize,
    qa_metrics,
    relation_prf,
    score_table,
    tokenize,
    wordpiece,
)

__all__ = [
    "Encoding",
    "Vocabulary",
    "encode",
    "entity_prf",
    "extract_chunks",
    "f1",
    "layerwise_lrs",
    "lr_at",
    "mask_count",
    "normalize",
    "pre_tokenize",
    "qa_metrics",
    "relation_prf",
    "score_table",
    "tokenize",
    "wordpiece",
]
