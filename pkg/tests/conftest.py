from __future__ import annotations

from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from umeml.datakit import GeneratorConfig, generate
from umeml.harness import RunConfig, cross_validate

_ACCEPTANCE = pytest.StashKey[list]()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def criterion(request):
    """Record one ``CRITERION n: PASS|FAIL detail`` line, echoed in the terminal summary."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(number: int, passed: bool, detail: str) -> None:
        line = f"CRITERION {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        print(line)
        lines.append(line)

    return record


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# tiny cohort: fast enough for end-to-end plumbing tests
TINY = GeneratorConfig(n_samples=40, d=8, d_g=8, m_min=6, m_max=10, n_groups=3, seed=3)
TINY_RUN = RunConfig(
    n_prototypes=3, n_groups=3, n_registers=1, n_cross=1, n_path_self=1, n_gene_self=1, n_decoder=1, epochs=2
)
TINY_FLAGS = [
    "--prototypes", "3", "--gene-groups", "3", "--registers", "1", "--cross-layers", "1",
    "--path-self-layers", "1", "--gene-self-layers", "1", "--decoder-layers", "1", "--epochs", "2",
]


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    return generate(TINY, tmp_path_factory.mktemp("tiny"))


@pytest.fixture(scope="session")
def default_cv(tmp_path_factory):
    """Cached 5-fold grading runs on default generated cohorts, keyed by (dataset seed, variant)."""
    root = tmp_path_factory.mktemp("default_cv")
    datasets: dict[int, object] = {}
    runs: dict[tuple[int, str], tuple] = {}

    def get(seed: int, variant: str):
        if seed not in datasets:
            datasets[seed] = generate(replace(GeneratorConfig(), seed=seed), root / f"data{seed}")
        key = (seed, variant)
        if key not in runs:
            out = Path(root / f"run{seed}" / variant)
            summary, results = cross_validate(datasets[seed], RunConfig(variant=variant, out_dir=str(out)))
            runs[key] = (summary, results, out)
        return runs[key]

    get.datasets = datasets
    return get
