"""Tokenizer for .pir source text."""
from __future__ import annotations

import re
from dataclasses import dataclass


class LexError(Exception):
    def __init__(self, msg, line, col, origin="<string>"):
        super().__init__(f"{origin}:{line}:{col}: {msg}")
        self.line = line
        self.col = col


KEYWORDS = {
    "int", "float", "void", "semaphore", "async", "while", "if", "else",
    "for", "return", "set", "wait", "acquire", "release",
}

_PUNCT = [
    "<<=", ">>=", "&&", "||", "==", "!=", "<=", ">=", "<<", ">>", "++", "--",
    "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=",
    "+", "-", "*", "/", "%", "&", "|", "^", "<", ">", "!", "~", "?", ":",
    "=", ";", ",", "(", ")", "[", "]", "{", "}",
]

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\f\v]+)
  | (?P<nl>\n)
  | (?P<comment>//[^\n]*|/\*.*?\*/)
  | (?P<float>(?:\d+\.\d*|\.\d+)(?:[eE][+-]?\d+)?[fF]?|\d+[eE][+-]?\d+[fF]?)
  | (?P<int>0[xX][0-9a-fA-F]+|\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<punct>""" + "|".join(re.escape(p) for p in _PUNCT) + r""")
    """,
    re.VERBOSE | re.DOTALL,
)


@dataclass(frozen=True)
class Token:
    kind: str   # int float ident kw punct eof
    text: str
    line: int
    col: int


def tokenize(text: str, origin: str = "<string>") -> list[Token]:
    toks = []
    pos = 0
    line = 1
    line_start = 0
    n = len(text)
    while pos < n:
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise LexError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1, origin)
        kind = m.lastgroup
        tok = m.group()
        col = pos - line_start + 1
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind == "comment":
            nls = tok.count("\n")
            if nls:
                line += nls
                line_start = pos + tok.rfind("\n") + 1
        elif kind != "ws":
            if kind == "ident" and tok in KEYWORDS:
                kind = "kw"
            toks.append(Token(kind, tok, line, col))
        pos = m.end()
    toks.append(Token("eof", "", line, pos - line_start + 1))
    return toks
