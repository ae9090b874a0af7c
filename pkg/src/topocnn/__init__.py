"""EEG band-power scalp images and a lightweight CNN, implemented on numpy.

Stages: :mod:`topocnn.eeg_io` (recordings, montages, synthetic data),
:mod:`topocnn.spectral` (windows, FFT, Welch PSD), :mod:`topocnn.topomap`
(32x32 RGB scalp images), :mod:`topocnn.nn` (layers, training engine) and
:mod:`topocnn.pipeline` (datasets, folds, training runs, benchmarks).
"""

__version__ = "0.1.0"
