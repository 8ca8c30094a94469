import pytest

from affectrec.data import Dataset, SynthConfig, synth_videos


@pytest.fixture(scope="session")
def tiny_categorical():
    cfg = SynthConfig.preset("categorical-desk", seed=11, subjects=4, frames_per_video=24, mixture=[1] * 8)
    return Dataset("categorical", synth_videos(cfg))


@pytest.fixture(scope="session")
def tiny_dimensional():
    cfg = SynthConfig.preset("dimensional-desk", seed=12, subjects=3, frames_per_video=32)
    return Dataset("dimensional", synth_videos(cfg))


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
