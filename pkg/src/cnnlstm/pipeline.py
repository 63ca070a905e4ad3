"""OHLCV ingestion and the full preprocessing chain.

Stages, in the order ``prepare_dataset`` runs them: CSV load, three-sigma
outlier removal, mean imputation, moving averages and one-day yield,
warm-up cut, correlation-based feature selection, min-max scaling, PCA,
supervised windowing, and the 7:2:1 split.

Cleaning and imputation are data-repair steps and use the full series;
correlation, scaler, and PCA statistics are model-fitting steps and use
only rows covered by training windows, so no evaluation data leaks into
them.
"""

import csv
import math
import warnings
from dataclasses import dataclass, field, replace
from datetime import date as _date

import numpy as np

from .errors import (
    CheckpointFormatError,
    CompatibilityError,
    ConfigError,
    DataError,
    PipelineError,
)
from .textio import LineReader, array_lines, fmt_vector, parse_kv

OHLCV_COLUMNS = ("open", "high", "low", "close", "volume")
CSV_HEADER = ("Date", "Open", "High", "Low", "Close", "Volume")
SMA_WINDOWS = (10, 50, 100)


@dataclass
class OhlcvSeries:
    """Date-ordered raw rows; NaN marks a missing cell."""

    dates: list
    columns: dict  # name -> float64 array, NaN = missing

    def __post_init__(self):
        n = len(self.dates)
        for name, col in self.columns.items():
            if col.shape != (n,):
                raise DataError(f"column {name} has {col.shape[0]} rows, expected {n}")

    def __len__(self):
        return len(self.dates)


@dataclass
class FeatureFrame:
    """Date-aligned named feature columns; the target column is ``close``."""

    dates: list
    columns: dict  # insertion-ordered name -> float64 array

    def __post_init__(self):
        n = len(self.dates)
        for name, col in self.columns.items():
            if col.shape != (n,):
                raise DataError(f"column {name} has {col.shape[0]} rows, expected {n}")

    def __len__(self):
        return len(self.dates)

    def matrix(self, names) -> np.ndarray:
        missing = [n for n in names if n not in self.columns]
        if missing:
            raise CompatibilityError(f"frame is missing columns: {', '.join(missing)}")
        return np.stack([self.columns[n] for n in names], axis=1)


def load_ohlcv(path) -> OhlcvSeries:
    """Parse the documented CSV format, sorting rows by ascending date.

    Header must be exactly ``Date,Open,High,Low,Close,Volume``; dates are
    ISO-8601; an empty numeric cell becomes a missing marker. Errors name
    the offending line.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        rows = list(reader)
    if not rows:
        raise DataError(f"{path}: empty file")
    if tuple(c.strip() for c in rows[0]) != CSV_HEADER:
        raise DataError(
            f"{path}, line 1: expected header {','.join(CSV_HEADER)!r}, "
            f"got {','.join(rows[0])!r}"
        )
    parsed = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 6:
            raise DataError(f"{path}, line {lineno}: expected 6 cells, got {len(row)}")
        try:
            day = _date.fromisoformat(row[0].strip())
        except ValueError:
            raise DataError(
                f"{path}, line {lineno}: unparseable date {row[0]!r}"
            ) from None
        values = []
        for name, cell in zip(OHLCV_COLUMNS, row[1:]):
            cell = cell.strip()
            if cell == "":
                values.append(math.nan)
                continue
            try:
                values.append(float(cell))
            except ValueError:
                raise DataError(
                    f"{path}, line {lineno}: unparseable number {cell!r} in column {name}"
                ) from None
        parsed.append((day, lineno, values))

    seen = {}
    for day, lineno, _ in parsed:
        if day in seen:
            raise DataError(
                f"{path}, line {lineno}: duplicate date {day.isoformat()} "
                f"(first seen on line {seen[day]})"
            )
        seen[day] = lineno
    parsed.sort(key=lambda item: item[0])
    dates = [item[0] for item in parsed]
    data = np.array([item[2] for item in parsed], dtype=np.float64)
    if data.size == 0:
        raise DataError(f"{path}: no data rows")
    columns = {name: np.ascontiguousarray(data[:, j]) for j, name in enumerate(OHLCV_COLUMNS)}
    if not np.isfinite(columns["close"]).any():
        raise DataError(f"{path}: close column has no observed values")
    return OhlcvSeries(dates=dates, columns=columns)


def clean_three_sigma(series: OhlcvSeries) -> OhlcvSeries:
    """Mark cells farther than three sample standard deviations as missing.

    Single pass: statistics come from the incoming values, rows are kept so
    the date axis never changes.
    """
    out = {}
    for name, col in series.columns.items():
        observed = col[np.isfinite(col)]
        if observed.size == 0:
            raise PipelineError(f"column {name} has no observed values")
        if observed.size < 2:
            raise PipelineError(f"column {name} needs >= 2 observed values, has 1")
        mu = np.mean(observed)
        s = np.std(observed, ddof=1)
        cleaned = col.copy()
        with np.errstate(invalid="ignore"):
            cleaned[np.abs(col - mu) > 3.0 * s] = math.nan
        out[name] = cleaned
    return OhlcvSeries(dates=list(series.dates), columns=out)


def impute_mean(series: OhlcvSeries) -> OhlcvSeries:
    """Replace every missing cell with its column's mean over observed cells."""
    out = {}
    for name, col in series.columns.items():
        mask = np.isfinite(col)
        if not mask.any():
            raise PipelineError(f"column {name} has no observed values to impute from")
        filled = col.copy()
        filled[~mask] = np.mean(col[mask])
        out[name] = filled
    return OhlcvSeries(dates=list(series.dates), columns=out)


def frame_from_series(series: OhlcvSeries) -> FeatureFrame:
    return FeatureFrame(
        dates=list(series.dates),
        columns={name: col.copy() for name, col in series.columns.items()},
    )


def add_moving_averages(frame: FeatureFrame, windows=SMA_WINDOWS) -> FeatureFrame:
    """Append sma_<w> columns: trailing means of close, NaN during warm-up."""
    close = frame.columns.get("close")
    if close is None or not np.isfinite(close).all():
        raise PipelineError("moving averages need a complete close column")
    longest = max(windows)
    if len(frame) < longest:
        raise PipelineError(
            f"series too short for sma_{longest}: need at least {longest} rows, "
            f"got {len(frame)}"
        )
    columns = dict(frame.columns)
    for w in windows:
        col = np.full(len(frame), math.nan)
        col[w - 1 :] = np.lib.stride_tricks.sliding_window_view(close, w).mean(axis=1)
        columns[f"sma_{w}"] = col
    return FeatureFrame(dates=list(frame.dates), columns=columns)


def add_yield(frame: FeatureFrame) -> FeatureFrame:
    """Append the one-day relative return of close; first row is missing."""
    close = frame.columns.get("close")
    if close is None or not np.isfinite(close).all():
        raise PipelineError("yield needs a complete close column")
    prev = close[:-1]
    zero = np.nonzero(prev == 0.0)[0]
    if zero.size:
        raise PipelineError(
            f"cannot compute yield: close is zero on {frame.dates[zero[0]].isoformat()}"
        )
    col = np.full(len(frame), math.nan)
    col[1:] = (close[1:] - prev) / prev
    columns = dict(frame.columns)
    columns["yield"] = col
    return FeatureFrame(dates=list(frame.dates), columns=columns)


def drop_rows(frame: FeatureFrame, head: int) -> FeatureFrame:
    return FeatureFrame(
        dates=list(frame.dates[head:]),
        columns={n: c[head:].copy() for n, c in frame.columns.items()},
    )


def restrict(frame: FeatureFrame, names) -> FeatureFrame:
    missing = [n for n in names if n not in frame.columns]
    if missing:
        raise CompatibilityError(f"frame is missing columns: {', '.join(missing)}")
    return FeatureFrame(
        dates=list(frame.dates), columns={n: frame.columns[n].copy() for n in names}
    )


def correlations(frame: FeatureFrame, rows=None, target="close") -> dict:
    """Pearson r of every non-target column against the target.

    Constant columns map to NaN. ``rows`` restricts the statistics (the
    orchestrator passes training rows).
    """
    if target not in frame.columns:
        raise PipelineError(f"target column {target!r} not in frame")
    idx = np.arange(len(frame)) if rows is None else np.asarray(rows)
    if idx.size < 2:
        raise PipelineError("correlation needs at least 2 rows")
    y = frame.columns[target][idx]
    yc = y - y.mean()
    ss_y = float(yc @ yc)
    if ss_y == 0.0:
        raise PipelineError("target column has zero variance")
    out = {}
    for name, col in frame.columns.items():
        if name == target:
            continue
        x = col[idx]
        xc = x - x.mean()
        ss_x = float(xc @ xc)
        if ss_x == 0.0:
            out[name] = math.nan
        else:
            out[name] = float(xc @ yc) / math.sqrt(ss_x * ss_y)
    return out


def select_by_correlation(frame: FeatureFrame, threshold: float, rows=None, target="close"):
    """Keep features with |pearson r| >= threshold against the target.

    The target never competes against itself; constant features are dropped
    with a warning. Returns names in frame column order.
    """
    rs = correlations(frame, rows=rows, target=target)
    selected = []
    for name, r in rs.items():
        if math.isnan(r):
            warnings.warn(f"dropping constant feature {name!r}", stacklevel=2)
            continue
        if abs(r) >= threshold:
            selected.append(name)
    return selected


@dataclass
class ScalerState:
    """Per-column min/max from the fit rows."""

    columns: tuple
    mins: np.ndarray
    maxs: np.ndarray


def fit_minmax(frame: FeatureFrame, rows, columns) -> ScalerState:
    idx = np.asarray(rows)
    if idx.size == 0:
        raise PipelineError("min-max fit segment is empty")
    mat = frame.matrix(columns)[idx]
    return ScalerState(
        columns=tuple(columns), mins=mat.min(axis=0), maxs=mat.max(axis=0)
    )


def apply_minmax(frame: FeatureFrame, state: ScalerState) -> FeatureFrame:
    """x' = (x - min)/(max - min) per fitted column; constant columns -> 0.

    Values outside the fit range extrapolate beyond [0,1]; no clipping.
    Columns the scaler was not fitted on pass through untouched.
    """
    columns = {}
    lookup = {name: j for j, name in enumerate(state.columns)}
    for name, col in frame.columns.items():
        j = lookup.get(name)
        if j is None:
            columns[name] = col.copy()
            continue
        span = state.maxs[j] - state.mins[j]
        if span == 0.0:
            columns[name] = np.zeros_like(col)
        else:
            columns[name] = (col - state.mins[j]) / span
    return FeatureFrame(dates=list(frame.dates), columns=columns)


def invert_minmax(values: np.ndarray, state: ScalerState, column: str) -> np.ndarray:
    if column not in state.columns:
        raise CompatibilityError(f"scaler has no column {column!r}")
    j = state.columns.index(column)
    return np.asarray(values, dtype=np.float64) * (state.maxs[j] - state.mins[j]) + state.mins[j]


@dataclass
class PcaState:
    """Standardization stats and the orthonormal projection basis."""

    columns: tuple
    mean: np.ndarray  # [d]
    std: np.ndarray  # [d], ddof=1
    eigenvalues: np.ndarray  # [d], descending
    basis: np.ndarray  # [k, d], rows orthonormal
    n_components: int
    explained_share: float


def pca_fit(frame: FeatureFrame, rows, variance_target: float, columns) -> PcaState:
    """Eigendecompose the covariance of the standardized fit rows.

    Retains the smallest component count whose cumulative eigenvalue share
    reaches ``variance_target`` (a 1e-12 slack absorbs cumsum round-off).
    Sign convention: each basis row's largest-magnitude entry is positive.
    """
    if not 0.0 < variance_target <= 1.0:
        raise ConfigError(f"variance target must be in (0,1], got {variance_target}")
    idx = np.asarray(rows)
    columns = tuple(columns)
    d = len(columns)
    if idx.size < d:
        raise PipelineError(
            f"PCA needs at least as many fit rows as features: {idx.size} rows, {d} features"
        )
    x = frame.matrix(columns)[idx]
    mean = x.mean(axis=0)
    std = x.std(axis=0, ddof=1)
    if (std == 0.0).any():
        bad = columns[int(np.nonzero(std == 0.0)[0][0])]
        raise PipelineError(f"PCA cannot standardize constant column {bad!r}")
    z = (x - mean) / std
    cov = z.T @ z / (idx.size - 1)
    if not np.isfinite(cov).all():
        raise PipelineError("non-finite covariance matrix")
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(-evals, kind="stable")
    evals = evals[order]
    evecs = evecs[:, order]
    total = float(np.clip(evals, 0.0, None).sum())
    shares = np.cumsum(np.clip(evals, 0.0, None)) / total
    hit = np.nonzero(shares >= variance_target - 1e-12)[0]
    k = int(hit[0]) + 1 if hit.size else d
    basis = np.ascontiguousarray(evecs[:, :k].T)
    for row in basis:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    return PcaState(
        columns=columns,
        mean=mean,
        std=std,
        eigenvalues=evals,
        basis=basis,
        n_components=k,
        explained_share=float(shares[k - 1]),
    )


def pca_transform(frame: FeatureFrame, state: PcaState) -> FeatureFrame:
    """Project standardized rows onto the basis; other columns pass through."""
    z = (frame.matrix(state.columns) - state.mean) / state.std
    comps = z @ state.basis.T
    columns = {f"pc_{j + 1}": np.ascontiguousarray(comps[:, j]) for j in range(state.n_components)}
    for name, col in frame.columns.items():
        if name not in state.columns:
            columns[name] = col.copy()
    return FeatureFrame(dates=list(frame.dates), columns=columns)


@dataclass
class WindowedDataset:
    """Supervised samples: input windows [N,T,F] and scalar targets [N]."""

    inputs: np.ndarray
    targets: np.ndarray
    target_dates: list
    feature_names: tuple
    lookback: int
    horizon: int
    train_idx: np.ndarray = None
    val_idx: np.ndarray = None
    test_idx: np.ndarray = None

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    def indices(self, split: str) -> np.ndarray:
        idx = {"train": self.train_idx, "val": self.val_idx, "test": self.test_idx}[split]
        if idx is None:
            raise PipelineError(f"dataset has no {split!r} split")
        return idx


def make_windows(frame: FeatureFrame, lookback: int, horizon: int = 1, target="close") -> WindowedDataset:
    """Build sample i from input rows [i, i+T) and the target at i+T+horizon-1."""
    if lookback < 1 or horizon < 1:
        raise ConfigError(f"lookback and horizon must be >= 1, got {lookback}, {horizon}")
    length = len(frame)
    if length < lookback + horizon:
        raise PipelineError(
            f"frame too short to window: need at least {lookback + horizon} rows, got {length}"
        )
    features = tuple(n for n in frame.columns if n != target)
    if not features:
        raise PipelineError("no feature columns besides the target")
    if target not in frame.columns:
        raise PipelineError(f"target column {target!r} not in frame")
    x = frame.matrix(features)  # [L, F]
    n = length - lookback - horizon + 1
    windows = np.lib.stride_tricks.sliding_window_view(x, lookback, axis=0)
    inputs = np.ascontiguousarray(windows[:n].transpose(0, 2, 1))  # [N, T, F]
    t0 = lookback + horizon - 1
    targets = frame.columns[target][t0 : t0 + n].copy()
    return WindowedDataset(
        inputs=inputs,
        targets=targets,
        target_dates=list(frame.dates[t0 : t0 + n]),
        feature_names=features,
        lookback=lookback,
        horizon=horizon,
    )


def split_indices(n: int, ratios=(0.7, 0.2, 0.1), mode="chronological", seed=0):
    """Index sets sized floor(r0*n)/floor(r1*n)/remainder, each sorted ascending."""
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError(f"split ratios must sum to 1, got {ratios}")
    if mode not in ("chronological", "random"):
        raise ConfigError(f"split mode must be chronological or random, got {mode!r}")
    n_train = int(math.floor(ratios[0] * n))
    n_val = int(math.floor(ratios[1] * n))
    if mode == "chronological":
        order = np.arange(n)
    else:
        order = np.random.default_rng(seed).permutation(n)
    train = np.sort(order[:n_train])
    val = np.sort(order[n_train : n_train + n_val])
    test = np.sort(order[n_train + n_val :])
    return train, val, test


def split(dataset: WindowedDataset, ratios=(0.7, 0.2, 0.1), mode="chronological", seed=0) -> WindowedDataset:
    train, val, test = split_indices(dataset.n, ratios, mode, seed)
    return replace(dataset, train_idx=train, val_idx=val, test_idx=test)


@dataclass
class PreprocessState:
    """Frozen fit-time state a checkpoint needs for exact inference replay."""

    selected: tuple
    scaler: ScalerState
    pca: PcaState
    horizon: int


@dataclass
class PrepareConfig:
    lookback: int = 64
    horizon: int = 1
    corr_threshold: float = 0.5
    pca: bool = True
    pca_variance: float = 0.95
    ratios: tuple = (0.7, 0.2, 0.1)
    split_mode: str = "chronological"
    seed: int = 42
    sma_windows: tuple = SMA_WINDOWS

    def validate(self):
        if self.lookback < 1 or self.horizon < 1:
            raise ConfigError("lookback and horizon must be >= 1")
        if not 0.0 <= self.corr_threshold <= 1.0:
            raise ConfigError(f"corr_threshold must be in [0,1], got {self.corr_threshold}")
        if abs(sum(self.ratios) - 1.0) > 1e-9:
            raise ConfigError(f"split ratios must sum to 1, got {self.ratios}")
        if self.split_mode not in ("chronological", "random"):
            raise ConfigError(f"split mode must be chronological or random, got {self.split_mode!r}")
        return self


@dataclass
class PrepareSummary:
    rows_loaded: int
    outlier_cells: int
    imputed_cells: int
    rows_after_warmup: int
    correlations: dict
    selected: tuple
    dropped_constant: tuple
    pca_components: int
    pca_explained: float
    n_windows: int
    lookback: int
    horizon: int
    split_sizes: tuple

    def format(self) -> str:
        lines = [
            f"rows loaded             {self.rows_loaded}",
            f"outlier cells replaced  {self.outlier_cells}",
            f"cells imputed           {self.imputed_cells}",
            f"rows after warm-up cut  {self.rows_after_warmup}",
            "feature correlations with close:",
        ]
        for name, r in self.correlations.items():
            if math.isnan(r):
                lines.append(f"  {name:<8} constant   dropped")
            else:
                verdict = "kept" if name in self.selected else "dropped"
                lines.append(f"  {name:<8} |r|={abs(r):.4f} {verdict}")
        lines.append(f"selected features       {','.join(self.selected)}")
        if self.pca_components:
            lines.append(
                f"pca                     {self.pca_components} components "
                f"(explained share {self.pca_explained:.4f})"
            )
        else:
            lines.append("pca                     off")
        lines.append(
            f"window samples          {self.n_windows} "
            f"(lookback {self.lookback}, horizon {self.horizon})"
        )
        tr, va, te = self.split_sizes
        lines.append(f"split sizes             train={tr} val={va} test={te}")
        return "\n".join(lines)


@dataclass
class PreparedData:
    dataset: WindowedDataset
    preprocess: PreprocessState
    summary: PrepareSummary
    frame: FeatureFrame = None  # transformed feature frame the windows came from


def training_rows(length: int, train_idx, lookback: int, horizon: int) -> np.ndarray:
    """Frame rows covered by training windows (inputs and targets)."""
    mask = np.zeros(length, dtype=bool)
    for i in train_idx:
        mask[i : i + lookback] = True
        mask[i + lookback + horizon - 1] = True
    return np.nonzero(mask)[0]


def prepare_dataset(series: OhlcvSeries, cfg: PrepareConfig) -> PreparedData:
    """Run the whole preprocessing chain on a raw series."""
    cfg.validate()
    missing_before = sum(int((~np.isfinite(c)).sum()) for c in series.columns.values())
    cleaned = clean_three_sigma(series)
    missing_after_clean = sum(int((~np.isfinite(c)).sum()) for c in cleaned.columns.values())
    imputed = impute_mean(cleaned)

    frame = frame_from_series(imputed)
    frame = add_moving_averages(frame, cfg.sma_windows)
    frame = add_yield(frame)
    warmup = max(cfg.sma_windows)
    frame = drop_rows(frame, warmup)

    length = len(frame)
    if length < cfg.lookback + cfg.horizon:
        raise PipelineError(
            f"series too short: {length} rows remain after the {warmup}-row warm-up "
            f"cut, need at least {cfg.lookback + cfg.horizon}"
        )
    n_windows = length - cfg.lookback - cfg.horizon + 1
    train_idx, val_idx, test_idx = split_indices(
        n_windows, cfg.ratios, cfg.split_mode, cfg.seed
    )
    fit_rows = training_rows(length, train_idx, cfg.lookback, cfg.horizon)

    rs = correlations(frame, rows=fit_rows, target="close")
    selected = tuple(select_by_correlation(frame, cfg.corr_threshold, rows=fit_rows))
    dropped_constant = tuple(n for n, r in rs.items() if math.isnan(r))
    if not selected:
        raise PipelineError(
            f"no feature passes the correlation threshold {cfg.corr_threshold}"
        )

    narrowed = restrict(frame, list(selected) + ["close"])
    scaler = fit_minmax(narrowed, fit_rows, narrowed.columns.keys())
    scaled = apply_minmax(narrowed, scaler)

    if cfg.pca:
        pca_state = pca_fit(scaled, fit_rows, cfg.pca_variance, selected)
        modeled = pca_transform(scaled, pca_state)
    else:
        pca_state = None
        modeled = scaled

    dataset = make_windows(modeled, cfg.lookback, cfg.horizon)
    dataset = replace(dataset, train_idx=train_idx, val_idx=val_idx, test_idx=test_idx)

    summary = PrepareSummary(
        rows_loaded=len(series),
        outlier_cells=missing_after_clean - missing_before,
        imputed_cells=missing_after_clean,
        rows_after_warmup=length,
        correlations=rs,
        selected=selected,
        dropped_constant=dropped_constant,
        pca_components=pca_state.n_components if pca_state else 0,
        pca_explained=pca_state.explained_share if pca_state else 0.0,
        n_windows=n_windows,
        lookback=cfg.lookback,
        horizon=cfg.horizon,
        split_sizes=(train_idx.size, val_idx.size, test_idx.size),
    )
    preprocess = PreprocessState(
        selected=selected, scaler=scaler, pca=pca_state, horizon=cfg.horizon
    )
    return PreparedData(
        dataset=dataset, preprocess=preprocess, summary=summary, frame=modeled
    )


# --- preprocessing-state text block (shared by checkpoints and data caches) ---


def preprocess_lines(state: PreprocessState) -> list:
    lines = ["[preprocessing]"]
    lines.append(f"horizon={state.horizon}")
    lines.append(f"selected={','.join(state.selected)}")
    lines.append(f"scaler_columns={','.join(state.scaler.columns)}")
    lines.append("scaler_min " + fmt_vector(state.scaler.mins))
    lines.append("scaler_max " + fmt_vector(state.scaler.maxs))
    if state.pca is None:
        lines.append("pca=off")
    else:
        p = state.pca
        lines.append("pca=on")
        lines.append(f"pca_columns={','.join(p.columns)}")
        lines.append("pca_mean " + fmt_vector(p.mean))
        lines.append("pca_std " + fmt_vector(p.std))
        lines.append("pca_eigenvalues " + fmt_vector(p.eigenvalues))
        lines.append(f"pca_components={p.n_components}")
        lines.append(f"pca_explained={p.explained_share:.17g}")
        lines.append(f"pca_basis {p.n_components} {len(p.columns)}")
        lines.extend(array_lines(p.basis))
    return lines


def _expect_kv(reader: LineReader, key: str) -> str:
    got, value = parse_kv(reader.next(), reader)
    if got != key:
        raise reader.error(f"expected key {key!r}, got {got!r}")
    return value


def _expect_vector(reader: LineReader, key: str, count: int) -> np.ndarray:
    line = reader.next()
    name, _, rest = line.partition(" ")
    if name != key:
        raise reader.error(f"expected {key!r} values, got {line!r}")
    parts = rest.split()
    if len(parts) != count:
        raise reader.error(f"{key}: expected {count} values, got {len(parts)}")
    try:
        return np.array([float(p) for p in parts], dtype=np.float64)
    except ValueError:
        raise reader.error(f"{key}: unparseable value") from None


def read_preprocess_block(reader: LineReader) -> PreprocessState:
    if reader.next() != "[preprocessing]":
        raise reader.error("expected [preprocessing] section")
    horizon = int(_expect_kv(reader, "horizon"))
    selected = tuple(_expect_kv(reader, "selected").split(","))
    scaler_cols = tuple(_expect_kv(reader, "scaler_columns").split(","))
    mins = _expect_vector(reader, "scaler_min", len(scaler_cols))
    maxs = _expect_vector(reader, "scaler_max", len(scaler_cols))
    scaler = ScalerState(columns=scaler_cols, mins=mins, maxs=maxs)
    pca_flag = _expect_kv(reader, "pca")
    if pca_flag == "off":
        pca_state = None
    elif pca_flag == "on":
        cols = tuple(_expect_kv(reader, "pca_columns").split(","))
        d = len(cols)
        mean = _expect_vector(reader, "pca_mean", d)
        std = _expect_vector(reader, "pca_std", d)
        evals = _expect_vector(reader, "pca_eigenvalues", d)
        k = int(_expect_kv(reader, "pca_components"))
        explained = float(_expect_kv(reader, "pca_explained"))
        header = reader.next().split()
        if header[:1] != ["pca_basis"] or len(header) != 3:
            raise reader.error("expected pca_basis <k> <d>")
        bk, bd = int(header[1]), int(header[2])
        if bk != k or bd != d:
            raise reader.error(f"pca_basis dims {bk}x{bd} disagree with {k}x{d}")
        basis = reader.read_floats(k * d).reshape(k, d)
        pca_state = PcaState(
            columns=cols,
            mean=mean,
            std=std,
            eigenvalues=evals,
            basis=basis,
            n_components=k,
            explained_share=explained,
        )
    else:
        raise reader.error(f"pca must be on or off, got {pca_flag!r}")
    return PreprocessState(selected=selected, scaler=scaler, pca=pca_state, horizon=horizon)


# --- prepared-dataset cache file ---

DATA_MAGIC = "CNNLSTM-DATA"
DATA_VERSION = "v1"


def save_dataset(prepared: PreparedData, cfg: PrepareConfig, path):
    """Write the transformed frame, split, and preprocessing state as text.

    The windows themselves are not stored; loading rebuilds them from the
    frame with the echoed lookback/horizon, which is bit-exact.
    """
    ds = prepared.dataset
    frame = prepared.frame
    if frame is None:
        raise PipelineError("prepared data lacks the transformed frame")
    lines = [f"{DATA_MAGIC} {DATA_VERSION}"]
    lines.append(f"lookback={cfg.lookback}")
    lines.append(f"horizon={cfg.horizon}")
    lines.append(f"corr_threshold={cfg.corr_threshold:.17g}")
    lines.append(f"pca={'on' if cfg.pca else 'off'}")
    lines.append(f"pca_variance={cfg.pca_variance:.17g}")
    lines.append(f"split_ratios={','.join(format(r, '.17g') for r in cfg.ratios)}")
    lines.append(f"split_mode={cfg.split_mode}")
    lines.append(f"seed={cfg.seed}")
    lines.extend(preprocess_lines(prepared.preprocess))
    lines.append("[frame]")
    lines.append(f"rows={len(frame)}")
    lines.append(f"columns={','.join(frame.columns)}")
    lines.append("dates")
    lines.extend(
        " ".join(d.isoformat() for d in frame.dates[i : i + 8])
        for i in range(0, len(frame.dates), 8)
    )
    for name, col in frame.columns.items():
        lines.append(f"column {name}")
        lines.extend(array_lines(col))
    lines.append("[split]")
    for name, idx in (("train", ds.train_idx), ("val", ds.val_idx), ("test", ds.test_idx)):
        lines.append(f"{name} {idx.size}")
        lines.extend(
            " ".join(str(int(v)) for v in idx[i : i + 16]) for i in range(0, idx.size, 16)
        )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_dataset(path):
    """Read a dataset cache; returns ``(PreparedData, PrepareConfig)``.

    The loaded PreparedData carries no summary (that belongs to prepare time).
    """
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read dataset {path}: {exc}") from None
    reader = LineReader(text, str(path))
    head = reader.next().split()
    if not head or head[0] != DATA_MAGIC:
        raise CheckpointFormatError(f"{path}: not a dataset cache file")
    if head[1:] != [DATA_VERSION]:
        from .errors import CheckpointVersionError

        raise CheckpointVersionError(
            f"{path}: unsupported dataset version {' '.join(head[1:])!r}"
        )
    cfg = PrepareConfig(
        lookback=int(_expect_kv(reader, "lookback")),
        horizon=int(_expect_kv(reader, "horizon")),
        corr_threshold=float(_expect_kv(reader, "corr_threshold")),
        pca=_expect_kv(reader, "pca") == "on",
        pca_variance=float(_expect_kv(reader, "pca_variance")),
        ratios=tuple(float(r) for r in _expect_kv(reader, "split_ratios").split(",")),
        split_mode=_expect_kv(reader, "split_mode"),
        seed=int(_expect_kv(reader, "seed")),
    )
    preprocess = read_preprocess_block(reader)
    if reader.next() != "[frame]":
        raise reader.error("expected [frame] section")
    rows = int(_expect_kv(reader, "rows"))
    names = _expect_kv(reader, "columns").split(",")
    if reader.next() != "dates":
        raise reader.error("expected dates block")
    dates = []
    while len(dates) < rows:
        for token in reader.next().split():
            try:
                dates.append(_date.fromisoformat(token))
            except ValueError:
                raise reader.error(f"unparseable date {token!r}") from None
    if len(dates) != rows:
        raise reader.error(f"expected {rows} dates, got {len(dates)}")
    columns = {}
    for name in names:
        header = reader.next().split()
        if header != ["column", name]:
            raise reader.error(f"expected 'column {name}', got {' '.join(header)!r}")
        columns[name] = reader.read_floats(rows)
    frame = FeatureFrame(dates=dates, columns=columns)
    if reader.next() != "[split]":
        raise reader.error("expected [split] section")
    split_sets = {}
    for name in ("train", "val", "test"):
        header = reader.next().split()
        if len(header) != 2 or header[0] != name:
            raise reader.error(f"expected '{name} <count>'")
        split_sets[name] = reader.read_ints(int(header[1]))
    dataset = make_windows(frame, cfg.lookback, cfg.horizon)
    dataset = replace(
        dataset,
        train_idx=split_sets["train"],
        val_idx=split_sets["val"],
        test_idx=split_sets["test"],
    )
    prepared = PreparedData(
        dataset=dataset, preprocess=preprocess, summary=None, frame=frame
    )
    return prepared, cfg
