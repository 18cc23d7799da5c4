import json
from pathlib import Path

import pytest

from brainmem import Engine, EngineConfig

DATA = Path(__file__).parent / "data"

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def load_turns(name: str) -> list[dict]:
    with open(DATA / f"{name}.jsonl", encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def replay(name: str, config: EngineConfig | None = None, cycle_each: bool = False) -> Engine:
    engine = Engine(config or EngineConfig())
    for turn in load_turns(name):
        engine.ingest_turn(turn)
        if cycle_each:
            engine.run_cycle()
    return engine


@pytest.fixture
def case1() -> Engine:
    return replay("case1")


@pytest.fixture
def case2() -> Engine:
    return replay("case2", cycle_each=True)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
