import pytest

from chainprofiler import synthetic

_verdicts = []


@pytest.fixture
def verdict():
    """Record one acceptance line; the session summary prints them all."""

    def record(number, ok, detail):
        status = "SKIP" if ok is None else ("PASS" if ok else "FAIL")
        line = f"criterion {number}: {status}  {detail}"
        _verdicts.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _verdicts:
        terminalreporter.section("acceptance criteria")
        for line in _verdicts:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def corpus500():
    return synthetic.generate(500, seed=7)


@pytest.fixture(scope="session")
def corpus500_dir(tmp_path_factory, corpus500):
    d = tmp_path_factory.mktemp("syn500")
    corpus500.write(d)
    return d


@pytest.fixture(scope="session")
def small_corpus():
    return synthetic.generate(120, seed=3, mixer_users=12)
