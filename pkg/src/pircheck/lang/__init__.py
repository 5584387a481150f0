"""Front end for the .pir language: lexer, parser, elaborator, pretty-printer."""
from .ast import CoreProgram
from .elaborate import ElabError, elaborate, load_file, load_program
from .lexer import LexError, tokenize
from .parser import ParseError, parse
from .pretty import pretty

__all__ = [
    "CoreProgram", "ElabError", "LexError", "ParseError",
    "elaborate", "load_file", "load_program", "parse", "pretty", "tokenize",
]
