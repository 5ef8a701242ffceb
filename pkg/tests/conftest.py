import sys
import time
from pathlib import Path
from types import SimpleNamespace

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from acmbox.fit import FitConfig, ablation_suite, sweep_eval, train  # noqa: E402

SEEDS = (0, 1, 2)


@pytest.fixture(scope="session")
def fit_cache():
    return {}


@pytest.fixture(scope="session")
def reference_runs(fit_cache):
    """direct and acm-w2 arms on rectangles with the default config, three seeds."""
    start = time.perf_counter()
    runs = {}
    for arm in ("direct", "acm-w2"):
        for seed in SEEDS:
            cfg = FitConfig(arm=arm, seed=seed)
            result = fit_cache.get(cfg) or train(cfg)
            fit_cache[cfg] = result
            runs[arm, seed] = SimpleNamespace(result=result, sweep=sweep_eval(result.model))
    return SimpleNamespace(runs=runs, elapsed=time.perf_counter() - start)


@pytest.fixture(scope="session")
def ablation_report(reference_runs, fit_cache):
    return ablation_suite(SEEDS, cache=fit_cache)


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[number])
