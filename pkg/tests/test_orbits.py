"""
Symbol words, and periodic orbits realizing words on a certified saddle construction (slow).
"""
import numpy as np
import pytest

from src.core.exceptions import PreconditionError
from src.construction.regions import symbol_regions
from src.construction.saddle import build_saddle
from src.orbits.periodic import (CLOSURE_TOL, SymbolWord, find_periodic_orbit, orbit_trajectory, system_for,
                                 verify_itinerary)


def test_parse_compact_and_comma_words():
    assert SymbolWord.parse("011", 2).symbols == (0, 1, 1)
    assert SymbolWord.parse("0, 1, 1", 2).symbols == (0, 1, 1)
    assert SymbolWord.parse("10,11", 12).symbols == (10, 11)


def test_word_length_and_text():
    word = SymbolWord.parse("0110", 2)
    assert word.k == 4
    assert str(word) == "0110"
    assert str(SymbolWord((10, 2), 12)) == "10,2"


@pytest.mark.parametrize("text", ["", "02", "0a"])
def test_bad_words(text):
    with pytest.raises(PreconditionError):
        SymbolWord.parse(text, 2)


@pytest.fixture(scope="module")
def certified():
    construction, cert = build_saddle(1.0, 0.25, m=2)
    return construction, cert, system_for(cert)


@pytest.mark.slow
@pytest.mark.parametrize("text", ["0", "1", "01"])
def test_orbit_realizes_word(certified, text):
    """Residual |Phi^k(p) - p| <= 1e-8 and the re-integrated itinerary equals the word."""
    construction, cert, sys = certified
    word = SymbolWord.parse(text, cert.symbol_count)
    result = find_periodic_orbit(sys, cert, word, construction)
    assert result.residual <= 1e-8
    assert result.itinerary == list(word.symbols)
    assert result.closure <= CLOSURE_TOL
    again = verify_itinerary(sys, result.point, word, symbol_regions(construction))
    assert again.passed


@pytest.mark.slow
def test_orbit_trajectory_spans_k_periods(certified):
    construction, cert, sys = certified
    word = SymbolWord.parse("01", cert.symbol_count)
    result = find_periodic_orbit(sys, cert, word, construction)
    rows = orbit_trajectory(sys, result.point, word.k)
    assert rows[0][0] == 0.0
    assert rows[-1][0] == pytest.approx(word.k * (cert.tau1 + cert.tau2))
    assert np.allclose(rows[-1][1:], rows[0][1:], atol=1e-6)


@pytest.mark.slow
def test_word_beyond_certified_symbols(certified):
    construction, cert, sys = certified
    word = SymbolWord((0, cert.symbol_count), cert.symbol_count + 1)
    with pytest.raises(PreconditionError):
        find_periodic_orbit(sys, cert, word, construction)


WORDS_UP_TO_THREE = ["0", "1", "00", "01", "10", "11", "000", "001", "010", "011", "100", "101", "110", "111"]


def _primitive(text: str) -> bool:
    return not any(len(text) % d == 0 and text == text[:d] * (len(text) // d) for d in range(1, len(text)))


@pytest.fixture(scope="module")
def orbits_up_to_three(certified):
    construction, cert, sys = certified
    return {text: find_periodic_orbit(sys, cert, SymbolWord.parse(text, cert.symbol_count), construction)
            for text in WORDS_UP_TO_THREE}


@pytest.mark.slow
@pytest.mark.parametrize("text", WORDS_UP_TO_THREE)
def test_every_short_word_is_realized(orbits_up_to_three, text):
    result = orbits_up_to_three[text]
    assert result.itinerary == [int(c) for c in text]
    assert result.closure <= CLOSURE_TOL


@pytest.mark.slow
def test_distinct_primitive_words_give_distinct_orbits(orbits_up_to_three):
    primitive = [text for text in WORDS_UP_TO_THREE if _primitive(text)]
    points = np.array([orbits_up_to_three[text].point for text in primitive])
    gaps = np.linalg.norm(points[:, None, :] - points[None, :, :], axis=-1)
    np.fill_diagonal(gaps, np.inf)
    assert gaps.min() > 1e-6
