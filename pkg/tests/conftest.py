import pytest

from sumforge.toy import gen_toy_corpus

# (number, status, description) tuples recorded by the acceptance suite
ACCEPTANCE_RESULTS = []


@pytest.fixture(scope="session")
def toy100(tmp_path_factory):
    """100-pair toy corpus shared across tests; seed 0."""
    out = tmp_path_factory.mktemp("toy100")
    return gen_toy_corpus(100, 0, out)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num, status, desc in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(f"criterion {num:2d} {status}  {desc}")
