import numpy as np
import pandas as pd
import pytest

from msfx import data as data_mod


def make_raw_frame(start="1990-01", months=240, seed=0, with_exr=True):
    """Plausible positive monthly series for one country."""
    rng = np.random.default_rng(seed)
    t = np.arange(months)
    idx = pd.period_range(start, periods=months, freq="M")
    cols = {
        "cpi": 80.0 * np.exp(0.002 * t + 0.002 * rng.standard_normal(months).cumsum()),
        "ip": 90.0 * np.exp(0.001 * t + 0.004 * rng.standard_normal(months).cumsum()),
        "money": 500.0 * np.exp(0.003 * t + 0.002 * rng.standard_normal(months).cumsum()),
        "rate": np.clip(5.0 + 0.2 * rng.standard_normal(months).cumsum(), 0.05, None),
    }
    if with_exr:
        cols["exr"] = 1.5 * np.exp(0.02 * rng.standard_normal(months).cumsum())
    return pd.DataFrame(cols, index=idx)


def write_raw_csv(path, frame, names=None):
    names = names or {c: c.upper() for c in frame.columns}
    out = pd.DataFrame({"date": [str(p) for p in frame.index]})
    for canon, col in names.items():
        out[col] = frame[canon].to_numpy()
    out.to_csv(path, index=False)
    return {canon: col for canon, col in names.items()}


def make_panel(months=240, seed=0, start="1990-01"):
    home = data_mod.RawSeriesPanel(make_raw_frame(start=start, months=months, seed=seed, with_exr=True))
    foreign = data_mod.RawSeriesPanel(make_raw_frame(start=start, months=months, seed=seed + 1, with_exr=False))
    return data_mod.build_fundamentals(home, foreign)


@pytest.fixture(scope="session")
def panel():
    return make_panel()


@pytest.fixture()
def rng():
    return np.random.default_rng(20240811)
