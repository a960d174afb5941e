from dataclasses import replace

import pytest

from sizenet.config import load_config
from sizenet.pipeline import run_evaluate, run_label, run_simulate, run_train

_ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def record():
    """Store one acceptance outcome; the terminal summary prints them in order."""

    def _record(number: int, passed: bool, detail: str) -> bool:
        _ACCEPTANCE[number] = (bool(passed), detail)
        return bool(passed)

    return _record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        passed, detail = _ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")


class PipelineRuns:
    """Default-scale pipeline runs, trained once per (seed, use_weights) and shared across tests."""

    def __init__(self, root):
        self.root = root
        self.cache = {}

    def get(self, seed: int, use_weights: bool = True):
        key = (seed, use_weights)
        if key not in self.cache:
            out = self.root / f"seed{seed}-{'w' if use_weights else 'u'}"
            cfg = load_config(seed=seed, out=out)
            cfg = replace(cfg, train=replace(cfg.train, use_weights=use_weights),
                          evaluate=replace(cfg.evaluate, plots=False))
            # stage seeds derive from the global seed only, so both arms see identical data
            run_simulate(cfg)
            run_label(cfg)
            run_train(cfg)
            self.cache[key] = (cfg, run_evaluate(cfg)["report"])
        return self.cache[key]


@pytest.fixture(scope="session")
def pipeline_runs(tmp_path_factory):
    return PipelineRuns(tmp_path_factory.mktemp("runs"))
