"""Session-scoped training runs shared by the toytrain and acceptance tests.

The full ablation suite and the bootstrap pair are expensive (minutes), so
they run once per session; wall time is captured here so the acceptance
tests can assert the runtime budget of the work itself, not of fixture
caching.
"""

import time
import warnings

import pytest

from charsiu_lite.toytrain import (
    load_fixture,
    run_fc_pair,
    run_fixture_training,
)

SEEDS = (0, 1, 2)

ABLATIONS = (
    ("full", {}),
    ("no_fs", {"no_fs": True}),
    ("no_contrastive", {"no_contrastive": True}),
    ("no_curriculum", {"no_curriculum": True}),
)

# Noise-free variant used for the fast separability checks: small corpus,
# short utterances, nothing dropped by the curriculum.
SIGMA0_OVERRIDES = {
    "sigma": 0,
    "count": 80,
    "heldout_count": 30,
    "len_range": [3, 8],
    "dur_range": [2, 6],
}


def sigma0_fixture(steps_per_chunk: int) -> dict:
    fx = dict(load_fixture())
    fx.update(SIGMA0_OVERRIDES)
    fx["steps_per_chunk"] = steps_per_chunk
    return fx


@pytest.fixture(scope="session")
def training_suite():
    """All 4 configurations over seeds {0, 1, 2} on the committed fixture."""
    runs = {}
    start = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for name, flags in ABLATIONS:
            runs[name] = [run_fixture_training(seed=s, **flags) for s in SEEDS]
    elapsed = time.perf_counter() - start
    return {"runs": runs, "elapsed_s": elapsed}


@pytest.fixture(scope="session")
def fc_pair(training_suite):
    """Frame classifiers trained on pseudo vs ground-truth labels."""
    start = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        pair = run_fc_pair(training_suite["runs"]["full"][0])
    elapsed = time.perf_counter() - start
    return {"pair": pair, "elapsed_s": elapsed}


@pytest.fixture(scope="session")
def sigma0_short():
    """Noise-free fixture trained briefly: enough for a diagonal attention."""
    fx = sigma0_fixture(500)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        run = run_fixture_training(seed=0, fixture=fx)
    return {"run": run, "fixture": fx}


@pytest.fixture(scope="session")
def sigma0_long():
    """Noise-free fixture trained long enough for reliable pseudo-labels."""
    fx = sigma0_fixture(900)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        run = run_fixture_training(seed=0, fixture=fx)
    return {"run": run, "fixture": fx}
