import numpy as np
import pytest

from topocnn.eeg_io import EegRecording, SyntheticSpec, default_montage, generate_synthetic


@pytest.fixture(scope="session")
def montage():
    return default_montage()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_recordings(montage):
    gains = {"control": {"theta1": 0.5}, "nonexpert": {"theta1": 1.0}, "expert": {"theta1": 2.0}}
    spec = SyntheticSpec(2, 8.0, 5.0, gains, background_gain=1.0)
    return generate_synthetic(spec, montage, seed=11)


def make_recording(data, subject="s01", condition="expert", fs=256.0, channels=None):
    data = np.asarray(data, dtype=float)
    channels = channels or tuple(f"C{i}" for i in range(data.shape[0]))
    return EegRecording(subject, condition, fs, channels, data)


ACCEPTANCE = {}


def record(number, ok, detail):
    """Note one acceptance outcome; all of them are printed at the end of the session."""
    line = f"acceptance {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[number] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])
