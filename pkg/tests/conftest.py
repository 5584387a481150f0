from pathlib import Path

import pytest

from pircheck.interp import Interpreter
from pircheck.lang import load_file, load_program
from pircheck.symval import SymNode, digest, to_prefix

ROOT = Path(__file__).resolve().parent.parent
CORPUS = ROOT / "corpus"


def corpus(*parts) -> Path:
    return CORPUS.joinpath(*parts)


def run_src(text: str, **kw):
    return Interpreter(load_program(text), **kw).run()


def run_file(path, **kw):
    return Interpreter(load_file(path), **kw).run()


def conc_programs():
    return sorted(corpus("conc").glob("*.pir"))


def sequential_programs():
    """Programs with no async: the async-free kernels."""
    return sorted(p for p in corpus("kernels").glob("*.pir")
                  if "async" not in p.read_text())


@pytest.fixture
def handoff_text():
    return corpus("handoff.pir").read_text()


def mem_text(res) -> str:
    """Final memory with symbolic values as digests (prefix text can be exponential)."""
    return res.memory.serialize(sym=lambda v: digest(v).hex() if type(v) is SymNode else to_prefix(v))
