import pytest

from casper_abft.protocol import Message, MessageStore, Phase, ProtocolParams

# acceptance.py appends "PASS ..." / "FAIL ..." lines here; printed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def p4():
    return ProtocolParams(4, 1)


def votes(*estimates, step=0, senders=None):
    """Step-0 VOTEs, one per estimate, from senders 0, 1, 2, ... unless given."""
    senders = range(len(estimates)) if senders is None else senders
    return [Message(s, step, Phase.VOTE, e, frozenset()) for s, e in zip(senders, estimates)]


def cite(msgs):
    return frozenset(m.id for m in msgs)


def store_of(*groups):
    store = MessageStore()
    for g in groups:
        for m in g:
            store.add(m)
    return store
