from __future__ import annotations

import random
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fusionvec.ranks import Rank  # noqa: E402
from fusionvec.store import RankStore  # noqa: E402


@pytest.fixture
def rng() -> random.Random:
    return random.Random(1234)


@pytest.fixture
def hand_store() -> RankStore:
    """Single ranker: tau_q = [q(1.0), a(0.5)], tau_a = [a(1.0), q(0.4)]."""
    ranks = [
        Rank.from_scored("r1", "q", [("q", 1.0), ("a", 0.5)]),
        Rank.from_scored("r1", "a", [("a", 1.0), ("q", 0.4)]),
    ]
    return RankStore.from_ranks(ranks, cutoff=2)


def write_runs(path: Path, runs: dict[tuple[str, str], list[tuple[str, float]]]) -> None:
    """Write ``(ranker, query) -> [(item, score)]`` as run-file lines, positions in list order."""
    with open(path, "w", encoding="utf-8") as fh:
        for (ranker, query), rows in runs.items():
            for pos, (item, score) in enumerate(rows, start=1):
                fh.write(f"{query} {ranker} {item} {pos} {score}\n")


ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """``report(name, ok, detail)`` prints one PASS/FAIL line and keeps it for the session summary."""
    lines = request.config.stash.setdefault(ACCEPTANCE, [])

    def report(name: str, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
        lines.append(line)
        print(line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
