import numpy as np

from anomflow import TimeSeries


def make_series(values, cadence=300, start=0):
    """Build a valid TimeSeries from bare values on a uniform clock."""
    values = np.asarray(values, dtype=float)
    ts = start + np.arange(len(values), dtype=np.int64) * cadence
    return TimeSeries(ts, values, cadence)
