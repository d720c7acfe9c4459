"""
Word-level Vocabulary
Lowercase word/punctuation tokenizer with reserved PAD/BOS/EOS/[SEG]/UNK slots
"""

import json
import re
from typing import Dict, Iterable, List, Sequence

from shared.constants import SEG_TOKEN, SPECIAL_TOKEN_STRINGS, SpecialToken

WORD_PATTERN = re.compile(r"[a-z0-9_]+|[^\sa-z0-9_]")
CLOSING_PUNCTUATION = set(".,;:!?)]")


def split_words(text: str) -> List[str]:
    """
    Split text into tokens: "[SEG]" literals first, then lowercase words and single
    punctuation marks.

    "It is [SEG]. Liver tumor" -> ["it", "is", "[SEG]", ".", "liver", "tumor"]
    """
    tokens: List[str] = []
    pieces = text.split(SEG_TOKEN)
    for i, piece in enumerate(pieces):
        if i > 0:
            tokens.append(SEG_TOKEN)
        tokens.extend(WORD_PATTERN.findall(piece.lower()))
    return tokens


class Vocabulary:
    """Ordered token list; ids are list positions and specials occupy 0..4"""

    def __init__(self, tokens: Sequence[str]):
        tokens = list(tokens)
        specials = [SPECIAL_TOKEN_STRINGS[t] for t in SpecialToken]
        if tokens[:len(specials)] != specials:
            raise ValueError(f"vocabulary must start with the special tokens {specials}")
        if len(set(tokens)) != len(tokens):
            raise ValueError("vocabulary tokens must be unique")
        self.tokens = tuple(tokens)
        self._ids: Dict[str, int] = {tok: i for i, tok in enumerate(self.tokens)}

    @classmethod
    def build(cls, texts: Iterable[str]) -> "Vocabulary":
        """Vocabulary of every word in texts, specials first then words sorted"""
        words = set()
        for text in texts:
            words.update(split_words(text))
        specials = [SPECIAL_TOKEN_STRINGS[t] for t in SpecialToken]
        return cls(specials + sorted(words - set(specials)))

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._ids

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.tokens == other.tokens

    def id_of(self, token: str) -> int:
        return self._ids.get(token, int(SpecialToken.UNK))

    def token_of(self, token_id: int) -> str:
        return self.tokens[token_id]

    # ==================== PERSISTENCE ====================

    def to_json(self) -> str:
        return json.dumps(list(self.tokens), ensure_ascii=False)

    @classmethod
    def from_json(cls, text: str) -> "Vocabulary":
        return cls(json.loads(text))

    def save(self, path: str) -> str:
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.to_json())
        return path

    @classmethod
    def load(cls, path: str) -> "Vocabulary":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_json(f.read())


def tokenize(text: str, vocab: Vocabulary) -> List[int]:
    """Map text to ids; unknown words become UNK, "[SEG]" always maps to its own id"""
    return [vocab.id_of(tok) for tok in split_words(text)]


def detokenize(ids: Sequence[int], vocab: Vocabulary, skip_special: bool = True) -> str:
    """
    Join tokens with spaces, gluing closing punctuation to the previous token.

    PAD/BOS/EOS are dropped when skip_special is set; [SEG] and UNK are kept.
    """
    hidden = {int(SpecialToken.PAD), int(SpecialToken.BOS), int(SpecialToken.EOS)} if skip_special else set()
    text = ""
    for token_id in ids:
        token_id = int(token_id)
        if token_id in hidden:
            continue
        token = vocab.token_of(token_id)
        if text and token not in CLOSING_PUNCTUATION:
            text += " "
        text += token
    return text
