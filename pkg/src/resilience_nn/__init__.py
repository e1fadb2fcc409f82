"""Predict resilience curves from covariate time series.

Modules: ``dataset`` (CSV ingestion, normalization, chronological splits),
``cfs`` (correlation-based feature selection), ``mlri`` (interaction
regression baseline), ``neuralnet`` (ANN/RNN/LSTM with manual gradients and
Adam), ``metrics`` (goodness of fit), ``resilience`` (curve reconstruction and
synthetic curves), ``experiment`` (sweeps and reports).
"""
from .dataset import NormalizedDataset, RawTable, SplitSpec, SplitView, load_csv, normalize, split

__version__ = "0.1.0"

__all__ = ["NormalizedDataset", "RawTable", "SplitSpec", "SplitView", "load_csv", "normalize", "split"]
