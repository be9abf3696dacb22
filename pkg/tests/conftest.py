import asyncio
import os

import pytest

from evpnctl.fleet import start_testbed

ACCEPTANCE_LINES: list[str] = []

SLOW = os.environ.get("EVPN_SLOW") == "1"


def report_criterion(number: int, title: str, passed: bool, detail: str = "") -> None:
    line = f"ACCEPTANCE {number}: {'PASS' if passed else 'FAIL'} - {title}" + (f" ({detail})" if detail else "")
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
async def bed():
    """Two simulated PEs, ten networks and a controller, sessions up."""
    testbed = await start_testbed(pes=2, networks=10)
    yield testbed
    await testbed.stop()


@pytest.fixture
def run():
    """Run a coroutine to completion from synchronous code (hypothesis tests)."""
    def _run(coro, timeout=60):
        return asyncio.run(asyncio.wait_for(coro, timeout))
    return _run


async def until(pred, timeout: float = 10.0, interval: float = 0.005):
    loop = asyncio.get_running_loop()
    deadline = loop.time() + timeout
    while not pred():
        if loop.time() > deadline:
            raise AssertionError("condition not reached")
        await asyncio.sleep(interval)


async def settle(bed):
    """Wait until every UPDATE sent in either direction has been received and handled."""
    ctl = bed.controller
    for _ in range(2):
        await asyncio.gather(*(s.bgp.wait_flushed() for s in bed.sims.values()))
        await until(lambda: all(ctl.sessions[pe].counters.updates_in >= s.bgp.counters.updates_out
                                for pe, s in bed.sims.items()))
        await ctl.quiesce()
        await until(lambda: all(s.bgp.counters.updates_in >= ctl.sessions[pe].counters.updates_out
                                for pe, s in bed.sims.items()))
