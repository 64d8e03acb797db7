import pytest

from c2tid.cluster import ClusterParams
from c2tid.evaluation import ExperimentParams, build_index
from c2tid.synth import synth_corpus

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def record(number: int, title: str, passed: bool, detail: str) -> None:
    ACCEPTANCE[number] = (title, passed, detail)
    print(f"criterion {number:>2} [{'PASS' if passed else 'FAIL'}] {title}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:>2} [{'PASS' if passed else 'FAIL'}] {title}: {detail}")


@pytest.fixture(scope="session")
def small_synth():
    """120 documents, deep enough for a three-level tree with k=4, c=10."""
    return synth_corpus(seed=3, n_docs=120, n_topics=4, vocab_size=600, queries_per_doc=3)


@pytest.fixture(scope="session")
def small_params():
    return ExperimentParams(seed=3, dim=64, cluster=ClusterParams(k=4, c=10))


@pytest.fixture(scope="session")
def small_index(small_synth, small_params):
    corpus, _ = small_synth
    return build_index(corpus, small_params)
