import pytest

from cmvba.adversary import Adversary, register

RESULTS = []


def report(criterion, passed, detail):
    line = f"criterion {criterion}: {'PASS' if passed else 'FAIL'} - {detail}"
    RESULTS.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)


class Scripted(Adversary):
    """Test-only adversary whose delays come from a plain function."""

    def __init__(self, config, kit, seed, rule=None, byzantine=()):
        super().__init__(config, kit, seed, byzantine)
        self.rule = rule

    def delay(self, env, default):
        out = self.rule(env, default)
        return default if out is None else out


def scripted(name, rule):
    register(name, lambda config, kit, seed: Scripted(config, kit, seed, rule))
    return name


@pytest.fixture
def report_line():
    return report
