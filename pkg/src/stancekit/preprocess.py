"""Tweet-aware tokenization.

Text is lowercased; URLs and emoticons are removed; hashtags and
@-mentions survive as single tokens; all other punctuation becomes
standalone tokens.  A retweet is marked with a dedicated first token
``RT_@<account>`` so that retweets of an account and plain mentions of it
stay distinct features.  The marker prefix ``RT_`` is reserved: it never
arises from ordinary text, only from retweet handling, and re-tokenizing
joined output reproduces it unchanged.
"""

import re
from bisect import bisect_right
from importlib import resources

_URL_RE = re.compile(r"^(?:https?://|www\.)", re.IGNORECASE)
_RT_PREFIX_RE = re.compile(r"^\s*rt\s+@(\w+):\s*", re.IGNORECASE)
_TOKEN_RE = re.compile(r"rt_@\w+|#\w+|@\w+|\w+|[^\w\s]")


def _load_emoticons() -> frozenset:
    text = resources.files("stancekit.data").joinpath("ascii_emoticons.txt").read_text("utf-8")
    out = set()
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            out.add(line.lower())
    return frozenset(out)


def _load_emoji_ranges() -> tuple[list, list]:
    text = resources.files("stancekit.data").joinpath("emoji_blocks.txt").read_text("utf-8")
    starts, ends = [], []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        lo, hi = line.split()
        starts.append(int(lo, 16))
        ends.append(int(hi, 16))
    order = sorted(range(len(starts)), key=starts.__getitem__)
    return [starts[i] for i in order], [ends[i] for i in order]


ASCII_EMOTICONS = _load_emoticons()
_EMOJI_STARTS, _EMOJI_ENDS = _load_emoji_ranges()


def _is_emoji(ch: str) -> bool:
    cp = ord(ch)
    i = bisect_right(_EMOJI_STARTS, cp) - 1
    return i >= 0 and cp <= _EMOJI_ENDS[i]


def _strip_emoji(chunk: str) -> str:
    if all(ord(ch) < 0x200D for ch in chunk):
        return chunk
    return "".join(ch for ch in chunk if not _is_emoji(ch))


def tokenize(text: str, retweeted_user: str | None = None) -> list[str]:
    """Split tweet text into lowercase tokens.

    When ``retweeted_user`` is given, the token ``RT_@<account>`` is emitted
    first and a leading literal ``rt @name:`` header is consumed instead of
    being tokenized as a mention.  Without it, a leading ``rt @name:`` header
    still produces the marker token from the named account, so textual
    retweets behave the same whether or not the metadata field was present.

    The output is stable under re-tokenization:
    ``tokenize(" ".join(tokens))`` returns ``tokens`` again.
    """
    tokens: list[str] = []
    if retweeted_user is not None:
        tokens.append("RT_@" + retweeted_user.lower())
        header = _RT_PREFIX_RE.match(text)
        if header:
            text = text[header.end():]
    else:
        header = _RT_PREFIX_RE.match(text)
        if header:
            tokens.append("RT_@" + header.group(1).lower())
            text = text[header.end():]

    for chunk in text.split():
        if _URL_RE.match(chunk):
            continue
        chunk = _strip_emoji(chunk)
        if not chunk or chunk.lower() in ASCII_EMOTICONS:
            continue
        for piece in _TOKEN_RE.findall(chunk.lower()):
            if piece in ASCII_EMOTICONS:
                continue
            if piece.startswith("rt_@"):
                piece = "RT_@" + piece[4:]
            tokens.append(piece)
    return tokens
