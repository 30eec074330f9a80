import pytest

from miniprisma.ast import Subset, size, validate_subset
from miniprisma.gen import random_closed_term, random_program
from miniprisma.passes import count_awaits


@pytest.mark.parametrize("seed", range(100))
def test_random_programs_within_limits(seed):
    p = random_program(seed)
    assert validate_subset(p, Subset.SOURCE) == []
    assert size(p.main) <= 40
    assert count_awaits(p.main) <= 3


def test_random_programs_deterministic():
    assert random_program(11) == random_program(11)
    assert random_closed_term(11) == random_closed_term(11)


def test_random_programs_cover_await_counts():
    counts = {count_awaits(random_program(s).main) for s in range(100)}
    assert counts == {0, 1, 2, 3}
