"""Monthly data ingestion and construction of the fundamentals panel.

Raw inputs are monthly CSVs per country holding the nominal exchange rate,
industrial production, a money aggregate, the 3-month money-market rate (in
percent) and the CPI.  ``build_fundamentals`` applies the standard
transformations (log differences, real exchange rate, HP-filter output gap)
and lag-aligns everything so the return regression can be evaluated row by
row: the predictors stored on row t are dated t-1 relative to the target
return of row t.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.linalg import solveh_banded

__all__ = [
    "HP_LAMBDA_MONTHLY",
    "RAW_SERIES",
    "PREDICTOR_COLUMNS",
    "Z_COLUMNS",
    "TARGET_COLUMN",
    "RawSeriesPanel",
    "FundamentalsPanel",
    "load_panel",
    "hp_filter",
    "build_fundamentals",
]

HP_LAMBDA_MONTHLY = 14400.0

RAW_SERIES = ("exr", "ip", "money", "rate", "cpi")
_LOG_SERIES = ("exr", "ip", "money", "cpi")  # strictly positive: logs are taken

# Predictor layout of the fundamentals panel.  Home-minus-foreign ordering
# follows the regression vector: lagged rates, inflation, output gaps, the
# real exchange rate, money, income, the (log) exchange-rate level, prices,
# and current rates.  The level column is shared by the monetary and
# price-parity regimes.
PREDICTOR_COLUMNS = (
    "i_home_lag",
    "i_foreign_lag",
    "infl_home",
    "infl_foreign",
    "gap_home",
    "gap_foreign",
    "rexr",
    "money_home",
    "money_foreign",
    "income_home",
    "income_foreign",
    "exr",
    "price_home",
    "price_foreign",
    "i_home",
    "i_foreign",
)
Z_COLUMNS = ("z_i_home", "z_i_foreign")
TARGET_COLUMN = "d_exr"


def _parse_periods(values) -> pd.PeriodIndex:
    cleaned = [str(v).strip().replace("M", "-") for v in values]
    try:
        return pd.PeriodIndex(cleaned, freq="M")
    except Exception as exc:
        raise ValueError(f"unparseable monthly date in input: {exc}") from exc


@dataclass(frozen=True)
class RawSeriesPanel:
    """Validated monthly panel of raw series for one country.

    ``frame`` has a monthly PeriodIndex with no gaps and no interior missing
    values; columns are canonical series names (a subset of ``RAW_SERIES`` --
    the US panel, say, carries no exchange rate).
    """

    frame: pd.DataFrame

    @property
    def start(self) -> pd.Period:
        return self.frame.index[0]

    @property
    def end(self) -> pd.Period:
        return self.frame.index[-1]

    def __len__(self) -> int:
        return len(self.frame)


def load_panel(path, schema: dict[str, str]) -> RawSeriesPanel:
    """Load and validate one country's raw series from a CSV file.

    ``schema`` maps canonical series names ('exr', 'ip', 'money', 'rate',
    'cpi') to the column names used in the file; an optional 'date' entry
    names the date column (default 'date', values YYYY-MM).  Leading or
    trailing missing values are trimmed to the maximal window in which every
    requested series is present; interior gaps are a hard error.
    """
    raw = pd.read_csv(path)
    date_col = schema.get("date", "date")
    if date_col not in raw.columns:
        raise ValueError(f"date column {date_col!r} not found in {path}")
    series_map = {k: v for k, v in schema.items() if k != "date"}
    unknown = set(series_map) - set(RAW_SERIES)
    if unknown:
        raise ValueError(f"unknown series keys in schema: {sorted(unknown)}")
    missing = [v for v in series_map.values() if v not in raw.columns]
    if missing:
        raise ValueError(f"columns {missing} not found in {path}")

    idx = _parse_periods(raw[date_col])
    if idx.duplicated().any():
        dup = idx[idx.duplicated()][0]
        raise ValueError(f"duplicate date {dup} in {path}")
    frame = pd.DataFrame(
        {canon: pd.to_numeric(raw[col], errors="coerce").to_numpy() for canon, col in series_map.items()},
        index=idx,
    ).sort_index()
    full = pd.period_range(frame.index[0], frame.index[-1], freq="M")
    if len(full) != len(frame):
        gap = full.difference(frame.index)[0]
        raise ValueError(f"non-monthly gap in {path}: missing {gap}")

    present = frame.notna().all(axis=1).to_numpy()
    if not present.any():
        raise ValueError(f"no complete rows in {path}")
    first, last = np.nonzero(present)[0][[0, -1]]
    frame = frame.iloc[first : last + 1]
    if frame.isna().any().any():
        col = frame.columns[frame.isna().any()][0]
        when = frame.index[frame[col].isna()][0]
        raise ValueError(f"missing interior value for {col!r} at {when} in {path}")

    for canon in _LOG_SERIES:
        if canon in frame.columns and (frame[canon] <= 0).any():
            when = frame.index[frame[canon] <= 0][0]
            raise ValueError(f"non-positive value in log column {canon!r} at {when} in {path}")
    return RawSeriesPanel(frame)


def hp_filter(series, lamb: float = HP_LAMBDA_MONTHLY):
    """Trend/cycle decomposition minimising the squared-fit plus smoothness loss.

    Solves (I + lamb * D'D) trend = series with D the second-difference
    operator, via a symmetric pentadiagonal (banded Cholesky) factorisation in
    O(T).  Returns (trend, gap) with gap = series - trend.
    """
    y = np.asarray(series, dtype=np.float64)
    if y.ndim != 1:
        raise ValueError("hp_filter expects a 1-d series")
    T = y.shape[0]
    if T < 4:
        raise ValueError("hp_filter needs at least 4 observations")
    if lamb <= 0:
        raise ValueError("hp_filter smoothing parameter must be positive")
    main = np.full(T, 6.0)
    main[[0, -1]] = 1.0
    main[[1, -2]] = 5.0
    sub1 = np.full(T - 1, -4.0)
    sub1[[0, -1]] = -2.0
    ab = np.zeros((3, T))
    ab[0] = 1.0 + lamb * main
    ab[1, : T - 1] = lamb * sub1
    ab[2, : T - 2] = lamb
    trend = solveh_banded(ab, y, lower=True, check_finite=False)
    return trend, y - trend


@dataclass(frozen=True)
class FundamentalsPanel:
    """Aligned monthly panel of the return target and lagged fundamentals.

    Row t holds the return between t-1 and t plus predictors dated t-1, so the
    switching regression is evaluable row by row without further shifting.
    The z columns (demeaned lagged rates, home and foreign) drive the
    transition probabilities and are re-demeaned per estimation window by the
    sampler; as stored they are centered on the full panel.
    """

    frame: pd.DataFrame

    def __len__(self) -> int:
        return len(self.frame)

    @property
    def dates(self) -> pd.PeriodIndex:
        return self.frame.index

    def loc_of(self, period) -> int:
        """Positional index of a YYYY-MM period in the panel."""
        p = pd.Period(str(period).replace("M", "-"), freq="M")
        try:
            loc = self.frame.index.get_loc(p)
        except KeyError:
            raise ValueError(f"period {p} is outside the panel ({self.dates[0]}..{self.dates[-1]})") from None
        return int(loc)

    def target_array(self) -> np.ndarray:
        return self.frame[TARGET_COLUMN].to_numpy()

    def predictor_array(self) -> np.ndarray:
        return self.frame[list(PREDICTOR_COLUMNS)].to_numpy()

    def z_array(self) -> np.ndarray:
        return self.frame[list(Z_COLUMNS)].to_numpy()

    def to_csv(self, path) -> None:
        out = self.frame.copy()
        out.insert(0, "date", [str(p) for p in self.frame.index])
        out.to_csv(path, index=False, float_format="%.17g")

    @classmethod
    def from_csv(cls, path) -> "FundamentalsPanel":
        raw = pd.read_csv(path)
        idx = _parse_periods(raw["date"])
        frame = raw.drop(columns=["date"])
        frame.index = idx
        expected = [TARGET_COLUMN, *PREDICTOR_COLUMNS, *Z_COLUMNS]
        missing = [c for c in expected if c not in frame.columns]
        if missing:
            raise ValueError(f"panel file {path} lacks columns {missing}")
        return cls(frame[expected])


def build_fundamentals(home: RawSeriesPanel, foreign: RawSeriesPanel) -> FundamentalsPanel:
    """Assemble the fundamentals panel for a country pair.

    Transformations: target is the one-month log difference of the exchange
    rate; inflation the one-month log difference of CPI; output gaps the
    HP-filter cycle of log industrial production at the monthly smoothing
    value; the real exchange rate is log(EXR) + log(CPI_foreign) - log(CPI);
    money, income (industrial production) and prices enter in logs; interest
    rates stay in percentage points.  Rows lost to differencing and lagging
    are dropped.  Deterministic: no randomness anywhere in the pipeline.
    """
    if "exr" not in home.frame.columns:
        raise ValueError("home panel must include the exchange rate series")
    for name, panel in (("home", home), ("foreign", foreign)):
        for canon in ("ip", "money", "rate", "cpi"):
            if canon not in panel.frame.columns:
                raise ValueError(f"{name} panel lacks required series {canon!r}")

    start = max(home.start, foreign.start)
    end = min(home.end, foreign.end)
    if start > end:
        raise ValueError("home and foreign panels do not overlap")
    h = home.frame.loc[start:end]
    f = foreign.frame.loc[start:end]
    if len(h) < 4:
        raise ValueError("overlap too short to build fundamentals")

    e = np.log(h["exr"].to_numpy())
    p_home = np.log(h["cpi"].to_numpy())
    p_for = np.log(f["cpi"].to_numpy())
    m_home = np.log(h["money"].to_numpy())
    m_for = np.log(f["money"].to_numpy())
    y_home = np.log(h["ip"].to_numpy())
    y_for = np.log(f["ip"].to_numpy())
    i_home = h["rate"].to_numpy()
    i_for = f["rate"].to_numpy()

    _, gap_home = hp_filter(y_home, HP_LAMBDA_MONTHLY)
    _, gap_for = hp_filter(y_for, HP_LAMBDA_MONTHLY)
    d_exr = np.diff(e)  # dated t, starting at the second month
    infl_home = np.diff(p_home)
    infl_for = np.diff(p_for)
    rexr = e + p_for - p_home

    idx = h.index
    T = len(idx)

    def lag1(x):  # value dated t-1 placed on row t
        return x[1:-1]

    # rows start at the third month: one month lost to differencing, one to lagging
    rows = idx[2:]
    data = {
        TARGET_COLUMN: d_exr[1:],
        "i_home_lag": i_home[:-2],
        "i_foreign_lag": i_for[:-2],
        "infl_home": infl_home[:-1],
        "infl_foreign": infl_for[:-1],
        "gap_home": lag1(gap_home),
        "gap_foreign": lag1(gap_for),
        "rexr": lag1(rexr),
        "money_home": lag1(m_home),
        "money_foreign": lag1(m_for),
        "income_home": lag1(y_home),
        "income_foreign": lag1(y_for),
        "exr": lag1(e),
        "price_home": lag1(p_home),
        "price_foreign": lag1(p_for),
        "i_home": lag1(i_home),
        "i_foreign": lag1(i_for),
    }
    frame = pd.DataFrame(data, index=rows)
    frame["z_i_home"] = frame["i_home"] - frame["i_home"].mean()
    frame["z_i_foreign"] = frame["i_foreign"] - frame["i_foreign"].mean()
    if frame.isna().any().any():
        raise ValueError("fundamentals panel contains missing values")
    assert T - 2 == len(frame)
    return FundamentalsPanel(frame[[TARGET_COLUMN, *PREDICTOR_COLUMNS, *Z_COLUMNS]])
