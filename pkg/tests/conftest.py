from pathlib import Path

import pytest

from miniprisma.parser import parse

ROOT = Path(__file__).resolve().parent.parent
CORPUS = ROOT / "corpus"
GOLDEN = Path(__file__).resolve().parent / "golden"
CORPUS_FILES = sorted(CORPUS.glob("*.mp"))
SELF_APP = CORPUS / "nonterminating" / "self_app.mp"


def load(path: Path):
    return parse(path.read_text())


@pytest.fixture(params=CORPUS_FILES, ids=lambda p: p.stem)
def corpus_program(request):
    return request.param.stem, load(request.param)
