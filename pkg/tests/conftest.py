import pytest

from patvar.fixtures import FixtureAnnotationProvider, fixture_synonyms


@pytest.fixture(scope="session")
def provider():
    return FixtureAnnotationProvider()


@pytest.fixture(scope="session")
def lexicon():
    return fixture_synonyms()
