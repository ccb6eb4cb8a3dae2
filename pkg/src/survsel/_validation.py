"""Input validation shared by the estimators and functional API."""
import numpy as np

from .exceptions import DataError


def check_survival_target(y, num_events=None):
    """Return ``(time, event)`` arrays from any supported target format.

    Accepts a structured array with ``time``/``event`` fields, an ``(n, 2)``
    array, a ``(time, event)`` pair or anything with ``time``/``event``
    attributes (e.g. a dataset).
    """
    if hasattr(y, "time") and hasattr(y, "event") and not isinstance(y, np.ndarray):
        time, event = y.time, y.event
    elif isinstance(y, np.ndarray) and y.dtype.names is not None:
        time, event = y["time"], y["event"]
    elif isinstance(y, tuple) and len(y) == 2:
        time, event = y
    else:
        arr = np.asarray(y)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise DataError("survival target must provide (time, event)")
        time, event = arr[:, 0], arr[:, 1]
    time = np.asarray(time, dtype=float)
    event_f = np.asarray(event, dtype=float)
    if time.shape != event_f.shape or time.ndim != 1:
        raise DataError("time and event must be 1-d arrays of equal length")
    if np.any(~np.isfinite(time)) or np.any(time < 0):
        raise DataError("times must be finite and nonnegative")
    if np.any(event_f != np.round(event_f)) or np.any(event_f < 0):
        raise DataError("event labels must be nonnegative integers")
    event = event_f.astype(np.int64)
    if num_events is not None and event.size and event.max() > num_events:
        raise DataError(f"event label {event.max()} exceeds K={num_events}")
    return time, event


def check_consistent_rows(X, time):
    if X.shape[0] != time.shape[0]:
        raise DataError(f"X has {X.shape[0]} rows but the target has {time.shape[0]}")
