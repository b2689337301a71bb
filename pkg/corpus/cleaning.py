import re
import unicodedata

WHITESPACE_RE = re.compile(r"\s+")


def clean_text(raw):
    """
    Lowercase, NFC-normalise and keep letters only.

    Every non-letter (digits, punctuation, symbols, combining marks left over
    after composition) becomes a space, then whitespace runs collapse. No
    stemming and no stopword removal. ``clean_text(clean_text(x)) ==
    clean_text(x)``.
    """
    if not raw:
        return ""
    text = unicodedata.normalize("NFC", raw).lower()
    text = unicodedata.normalize("NFC", text)
    text = "".join(char if char.isalpha() else " " for char in text)
    return WHITESPACE_RE.sub(" ", text).strip()


def tokenize(clean):
    return clean.split()
