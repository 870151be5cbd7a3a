"""Hash tokenizer: lowercase, split on whitespace/punctuation, FNV-1a mod V."""

from __future__ import annotations

import unicodedata

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_U64 = (1 << 64) - 1

# input kind -> prefix prompt, prepended before tokenization
PREFIXES = {
    "job_description": "document: ",
    "member_profile": "profile: ",
    "member_resume": "resume: ",
}


def fnv1a64(token: str) -> int:
    h = FNV_OFFSET
    for byte in token.encode("utf-8"):
        h ^= byte
        h = (h * FNV_PRIME) & _U64
    return h


def _is_separator(ch: str) -> bool:
    return ch.isspace() or unicodedata.category(ch).startswith("P")


def split_tokens(text: str) -> list[str]:
    tokens = []
    current: list[str] = []
    for ch in text.lower():
        if _is_separator(ch):
            if current:
                tokens.append("".join(current))
                current = []
        else:
            current.append(ch)
    if current:
        tokens.append("".join(current))
    return tokens


def tokenize(text: str, vocab_size: int, max_tokens: int | None = None) -> list[int]:
    """Token ids in [0, vocab_size); empty text gives an empty sequence."""
    if vocab_size < 1:
        raise ValueError("vocab_size must be positive")
    tokens = split_tokens(text)
    if max_tokens is not None:
        tokens = tokens[:max_tokens]
    return [fnv1a64(t) % vocab_size for t in tokens]
