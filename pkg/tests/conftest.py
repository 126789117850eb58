import pytest
from hypothesis import settings, strategies as st

from mramoments.rep import Field, IsotypicBlock, Parity, RepresentationSpec
from mramoments.seeding import derive_rng

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@st.composite
def specs(draw, max_blocks=4, max_dim=4, max_mult=4, field=None):
    """Small representation specs, complex or real-conjugation-invariant."""
    if field is None:
        field = draw(st.sampled_from([Field.COMPLEX, Field.REAL]))
    n = draw(st.integers(1, max_blocks))
    blocks = []
    for _ in range(n):
        d = draw(st.integers(1, max_dim))
        r = draw(st.integers(1, max_mult))
        if field is Field.REAL:
            p = draw(st.sampled_from([Parity.EVEN, Parity.ODD]))
        else:
            p = Parity.NONE
        blocks.append(IsotypicBlock(d, r, p))
    return RepresentationSpec(tuple(blocks), field)


seeds = st.integers(0, 2 ** 32 - 1)


@pytest.fixture
def rng():
    return derive_rng(12345, 0, 0)
