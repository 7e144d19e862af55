import pytest

from tcpair.ledger import Ledger, PayloadKind, encode_authors, new_chain


def tag(i: int) -> bytes:
    return bytes([i]) * 16


@pytest.fixture
def authors():
    return [tag(1), tag(2), tag(3)]


@pytest.fixture
def ledger(authors):
    led = Ledger()
    led.install(new_chain("auth", authors[0], encode_authors(authors)))
    return led


def fill(led: Ledger, cid: str, n: int, author: bytes, kind=PayloadKind.AccountingEvent, t0: int = 1):
    return [led.append(cid, kind, f"p{i}".encode(), t0 + i, author) for i in range(n)]


ACCEPTANCE_RESULTS: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)
