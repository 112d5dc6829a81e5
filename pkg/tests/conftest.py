import sys

import pytest

from greyfiber.harness import build_stack


@pytest.fixture
def stack_factory():
    def make(doc, buyers=("alice", "bob", "carol"), **kw):
        st = build_stack(doc, **kw)
        for b in buyers:
            st.ggc.register_buyer(b)
        return st
    return make


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "VERDICTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
