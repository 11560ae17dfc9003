"""The embedded 2048-word English wordlist and index lookups.

The list ships as a package data asset (one word per line, index order).
Word number one of a passphrase is mapped through :func:`index_of` to the
numeric channel in [0, 2047]; the whole list doubles as the alphabet for
passphrase generation.
"""

from __future__ import annotations

import hashlib
from functools import lru_cache
from importlib import resources

from .errors import InvalidArgument

WORDLIST_SIZE = 2048

# sha256 of the newline-joined asset, asserted in tests to catch corruption
WORDLIST_SHA256 = "2f5eed53a4727b4bf8880d8f3f199efc90e58503646d9ff8eff3a2ed3b24dbda"


class Wordlist:
    """Immutable word table with O(1) bidirectional lookup."""

    __slots__ = ("words", "_index")

    def __init__(self, words: tuple[str, ...]):
        if len(words) != WORDLIST_SIZE:
            raise InvalidArgument(
                f"wordlist must have {WORDLIST_SIZE} entries, got {len(words)}"
            )
        self.words = words
        self._index = {w: i for i, w in enumerate(words)}
        if len(self._index) != WORDLIST_SIZE:
            raise InvalidArgument("wordlist contains duplicate words")

    def __len__(self) -> int:
        return WORDLIST_SIZE

    def __contains__(self, word: str) -> bool:
        return word in self._index

    def word_at(self, index: int) -> str:
        if not 0 <= index < WORDLIST_SIZE:
            raise InvalidArgument(f"word index {index} out of range")
        return self.words[index]

    def index_of(self, word: str) -> int:
        try:
            return self._index[word]
        except KeyError:
            raise InvalidArgument(f"word {word!r} is not in the wordlist") from None

    def checksum(self) -> str:
        blob = "\n".join(self.words) + "\n"
        return hashlib.sha256(blob.encode("ascii")).hexdigest()


@lru_cache(maxsize=1)
def load_wordlist() -> Wordlist:
    """Load the embedded English wordlist (cached)."""
    text = resources.files("pcp.data").joinpath("wordlist_en.txt").read_text("ascii")
    return Wordlist(tuple(text.split()))
