"""Country-year panel: rating conversion, CSV ingestion, summary statistics,
standardization, fold assignment and a synthetic stand-in generator."""

from __future__ import annotations

import csv
import hashlib
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptySubset, InvalidK, MissingValue, ParseError, UnknownSymbol

N_CLASSES = 17
COMBINED_LABEL = "C_combined"

# Moody's symbol -> numeric class; everything from Caa1 down is pooled into class 1.
_SYMBOL_TO_NUMERIC = {
    "Aaa": 17, "Aa1": 16, "Aa2": 15, "Aa3": 14,
    "A1": 13, "A2": 12, "A3": 11,
    "Baa1": 10, "Baa2": 9, "Baa3": 8,
    "Ba1": 7, "Ba2": 6, "Ba3": 5,
    "B1": 4, "B2": 3, "B3": 2,
    "Caa1": 1, "Caa2": 1, "Caa3": 1, "Ca": 1, "C": 1,
}
_NUMERIC_TO_SYMBOL = {v: k for k, v in _SYMBOL_TO_NUMERIC.items() if v > 1}
_NUMERIC_TO_SYMBOL[1] = COMBINED_LABEL
# representative symbol written to CSV for rows that only carry a numeric class
_WRITABLE_SYMBOL = {**_NUMERIC_TO_SYMBOL, 1: "Caa1"}


@dataclass(frozen=True)
class Rating:
    symbol: str
    numeric: int

    @property
    def canonical(self) -> str:
        return _NUMERIC_TO_SYMBOL[self.numeric]


def rating_from_symbol(symbol: str) -> Rating:
    """Convert a case-exact Moody's symbol such as ``"Baa2"`` to a :class:`Rating`."""
    try:
        return Rating(symbol, _SYMBOL_TO_NUMERIC[symbol])
    except (KeyError, TypeError):
        raise UnknownSymbol(f"unknown Moody's rating symbol {symbol!r}") from None


def rating_from_numeric(numeric: int) -> Rating:
    if numeric not in _NUMERIC_TO_SYMBOL:
        raise UnknownSymbol(f"numeric rating {numeric!r} outside 1..{N_CLASSES}")
    return Rating(_NUMERIC_TO_SYMBOL[numeric], int(numeric))


def symbol_for_numeric(numeric: int) -> str:
    return rating_from_numeric(numeric).symbol


def _writable_symbol(numeric: int) -> str:
    rating_from_numeric(numeric)
    return _WRITABLE_SYMBOL[numeric]


@dataclass(frozen=True)
class Feature:
    name: str
    unit: str
    sign: int
    label: str


@dataclass(frozen=True)
class FeatureSchema:
    features: tuple[Feature, ...]

    @property
    def names(self) -> list[str]:
        return [f.name for f in self.features]

    def __len__(self) -> int:
        return len(self.features)

    def index(self, name: str) -> int:
        return self.names.index(name)

    def digest(self) -> str:
        """Short hash of the ordered feature names, stored alongside saved models."""
        return hashlib.sha256(",".join(self.names).encode()).hexdigest()[:16]


DEFAULT_SCHEMA = FeatureSchema((
    Feature("gdp_growth", "%", +1, "GDP growth (%)"),
    Feature("inflation", "%", -1, "Inflation (%)"),
    Feature("unemployment", "%", -1, "Unemployment rate (%)"),
    Feature("current_account", "% of GDP", +1, "Current acc. (% of GDP)"),
    Feature("gov_balance", "% of GDP", +1, "Gov. balance (% of GDP)"),
    Feature("gov_debt", "% of GDP", -1, "Gov. debt (% of GDP)"),
    Feature("political_stability", "index", +1, "Political stability"),
    Feature("regulatory_quality", "index", +1, "Regulatory quality"),
    Feature("gdp_per_capita", "thousand $", +1, "GDP per capita (1000$)"),
))

CSV_HEADER = ["country", "year", *DEFAULT_SCHEMA.names, "rating"]


@dataclass(frozen=True)
class Observation:
    country: str
    year: int
    features: tuple[float, ...]
    rating: Rating


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable design matrix ``X`` (n x 9) with numeric labels ``y`` in 1..17."""

    schema: FeatureSchema
    X: np.ndarray
    y: np.ndarray
    countries: tuple[str, ...]
    years: np.ndarray
    symbols: tuple[str, ...] = field(default=())

    def __post_init__(self):
        X = np.array(self.X, dtype=float)
        y = np.array(self.y, dtype=np.int64)
        years = np.array(self.years, dtype=np.int64)
        if X.ndim != 2 or X.shape[1] != len(self.schema):
            raise ParseError(f"design matrix must be n x {len(self.schema)}, got {X.shape}")
        if not (len(y) == len(X) == len(years) == len(self.countries)):
            raise ParseError("row count mismatch between features, labels and identifiers")
        symbols = self.symbols or tuple(_writable_symbol(int(v)) for v in y)
        for arr in (X, y, years):
            arr.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "years", years)
        object.__setattr__(self, "symbols", tuple(symbols))

    def __len__(self) -> int:
        return len(self.y)

    @property
    def rows(self) -> list[Observation]:
        return [self[i] for i in range(len(self))]

    def __getitem__(self, i: int) -> Observation:
        return Observation(
            self.countries[i], int(self.years[i]), tuple(float(v) for v in self.X[i]),
            Rating(self.symbols[i], int(self.y[i])),
        )

    def subset(self, idx: Sequence[int] | np.ndarray) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(
            self.schema, self.X[idx], self.y[idx],
            tuple(self.countries[i] for i in idx), self.years[idx],
            tuple(self.symbols[i] for i in idx),
        )

    def with_features(self, X: np.ndarray) -> "Dataset":
        return Dataset(self.schema, X, self.y, self.countries, self.years, self.symbols)


_MISSING_TOKENS = {"", "na", "nan", "n/a", "null", "none", "."}


def load_dataset(path: str | Path, schema: FeatureSchema = DEFAULT_SCHEMA) -> Dataset:
    """Read the panel CSV. Rows with any gap are rejected with their line number."""
    expected = ["country", "year", *schema.names, "rating"]
    path = Path(path)
    with path.open(newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file (no header)", line=1) from None
        header = [h.strip() for h in header]
        missing = [c for c in expected if c not in header]
        if missing:
            raise ParseError(f"header lacks columns {missing}", line=1)
        col = {name: header.index(name) for name in expected}

        countries, years, feats, labels, symbols = [], [], [], [], []
        for record in reader:
            line = reader.line_num
            if not record or all(not c.strip() for c in record):
                continue
            if len(record) != len(header):
                raise ParseError(f"expected {len(header)} fields, found {len(record)}", line=line)
            cells = {name: record[j].strip() for name, j in col.items()}
            for name, raw in cells.items():
                if raw.lower() in _MISSING_TOKENS:
                    raise MissingValue(f"missing value in column {name!r}", line=line)
            try:
                year = int(cells["year"])
            except ValueError:
                raise ParseError(f"year {cells['year']!r} is not an integer", line=line) from None
            row = []
            for name in schema.names:
                try:
                    value = float(cells[name])
                except ValueError:
                    raise ParseError(f"{name} value {cells[name]!r} is not a number", line=line) from None
                if not math.isfinite(value):
                    raise MissingValue(f"non-finite value in column {name!r}", line=line)
                row.append(value)
            try:
                rating = rating_from_symbol(cells["rating"])
            except UnknownSymbol as exc:
                raise UnknownSymbol(f"line {line}: {exc}") from None
            countries.append(cells["country"])
            years.append(year)
            feats.append(row)
            labels.append(rating.numeric)
            symbols.append(rating.symbol)

    if not labels:
        raise ParseError("no rows")
    return Dataset(schema, np.array(feats, dtype=float), np.array(labels),
                   tuple(countries), np.array(years), tuple(symbols))


def write_dataset(d: Dataset, path: str | Path) -> None:
    """Write ``d`` in the input CSV format; floats use shortest round-trip repr."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["country", "year", *d.schema.names, "rating"])
    for i in range(len(d)):
        writer.writerow([d.countries[i], int(d.years[i]),
                         *(repr(float(v)) for v in d.X[i]), d.symbols[i]])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


# ---------------------------------------------------------------------------
# descriptive statistics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FeatureStats:
    name: str
    median: float
    mean: float
    std: float
    p1: float
    p99: float


@dataclass(frozen=True)
class StatsTable:
    rows: tuple[FeatureStats, ...]

    def __getitem__(self, name: str) -> FeatureStats:
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["feature", "median", "mean", "std", "p1", "p99"])
        for r in self.rows:
            w.writerow([r.name, *(f"{v:.6g}" for v in (r.median, r.mean, r.std, r.p1, r.p99))])
        return buf.getvalue()

    def to_text(self) -> str:
        lines = [f"{'Variable':<22}{'Med.':>9}{'Mean':>9}{'Std':>9}{'1%':>9}{'99%':>9}"]
        for r in self.rows:
            lines.append(f"{r.name:<22}" + "".join(
                f"{v:>9.1f}" for v in (r.median, r.mean, r.std, r.p1, r.p99)))
        return "\n".join(lines) + "\n"


def descriptive_stats(d: Dataset) -> StatsTable:
    """Median, mean, sample std (n-1) and 1%/99% percentiles per feature.

    Percentiles interpolate linearly between closest ranks (numpy's default
    ``"linear"`` method).
    """
    if len(d) == 0:
        raise EmptySubset("descriptive statistics need at least one row")
    X = d.X
    std = X.std(axis=0, ddof=1) if len(d) > 1 else np.zeros(X.shape[1])
    p1, p99 = np.percentile(X, [1.0, 99.0], axis=0, method="linear")
    med = np.median(X, axis=0)
    mean = X.mean(axis=0)
    return StatsTable(tuple(
        FeatureStats(name, float(med[j]), float(mean[j]), float(std[j]), float(p1[j]), float(p99[j]))
        for j, name in enumerate(d.schema.names)
    ))


# ---------------------------------------------------------------------------
# standardization
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Standardizer:
    """Per-feature ``(x - mean) / std`` with population std; constant columns pass through."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float)
        std = np.array(self.std, dtype=float)
        mean.setflags(write=False)
        std.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    @classmethod
    def fit(cls, X: np.ndarray) -> "Standardizer":
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or len(X) == 0:
            raise EmptySubset("cannot fit a standardizer on zero rows")
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        constant = ~(std > 1e-12 * np.maximum(1.0, np.abs(mean)))
        # constant columns: identity transform
        mean = np.where(constant, 0.0, mean)
        std = np.where(constant, 1.0, std)
        return cls(mean, std)

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.mean) / self.std

    def inverse_transform(self, Z: np.ndarray) -> np.ndarray:
        return np.asarray(Z, dtype=float) * self.std + self.mean


def fit_standardizer(d: Dataset, rows: Iterable[int] | np.ndarray | None = None) -> Standardizer:
    idx = np.arange(len(d)) if rows is None else np.fromiter(rows, dtype=np.int64)
    if idx.size == 0:
        raise EmptySubset("standardizer fit subset is empty")
    return Standardizer.fit(d.X[idx])


def apply_standardizer(s: Standardizer, d: Dataset) -> Dataset:
    return d.with_features(s.transform(d.X))


# ---------------------------------------------------------------------------
# folds and seeds
# ---------------------------------------------------------------------------

def derive_seed(master_seed: int, *keys: int) -> int:
    """Mix ``master_seed`` with integer keys into an independent 32-bit seed.

    Uses numpy's SeedSequence hashing, so ``derive_seed(m, r)`` never depends
    on how many other keys are derived.
    """
    ss = np.random.SeedSequence([int(master_seed) & 0xFFFFFFFFFFFFFFFF, *(int(k) for k in keys)])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


@dataclass(frozen=True, eq=False)
class FoldAssignment:
    k: int
    assignment: np.ndarray
    seed: int

    def test_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignment != fold)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.k)


def make_folds(n: int, k: int, seed: int) -> FoldAssignment:
    """Random partition of ``range(n)`` into ``k`` folds whose sizes differ by at most one."""
    if not (2 <= k <= n):
        raise InvalidK(f"k must satisfy 2 <= k <= n (k={k}, n={n})")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    assignment = np.empty(n, dtype=np.int64)
    assignment[perm] = np.arange(n) % k
    assignment.setflags(write=False)
    return FoldAssignment(k, assignment, seed)


# ---------------------------------------------------------------------------
# synthetic panel
# ---------------------------------------------------------------------------

_CA_CENTER = -0.4
_CA_SCALE = 5.0
YEARS_PER_COUNTRY = 19


def _features_from_normals(Z: np.ndarray) -> np.ndarray:
    """Map standard-normal draws (n x 9) to features with Table-1-like ranges."""
    z = Z.T
    gdp_growth = np.clip(3.2 + 3.0 * z[0], -12.0, 15.0)
    inflation = np.exp(np.log(3.5) + 0.7 * z[1]) - 0.8
    unemployment = np.exp(np.log(6.9) + 0.5 * z[2])
    # heavy tails via a cubic stretch of the normal draw
    current_account = _CA_CENTER + _CA_SCALE * (z[3] + 0.15 * z[3] ** 3)
    gov_balance = -2.2 + 4.0 * z[4]
    gov_debt = np.exp(np.log(47.0) + 0.55 * z[5])
    political_stability = np.clip(0.3 + 0.9 * z[6], -2.5, 2.5)
    regulatory_quality = np.clip(0.7 + 0.8 * (0.45 * z[6] + np.sqrt(1 - 0.45 ** 2) * z[7]), -2.5, 2.5)
    gdp_per_capita = np.exp(np.log(13.5) + 1.0 * (0.5 * z[7] + np.sqrt(0.75) * z[8]))
    return np.column_stack([
        gdp_growth, inflation, unemployment, current_account, gov_balance,
        gov_debt, political_stability, regulatory_quality, gdp_per_capita,
    ])


def _panel_normals(n: int, rng: np.random.Generator, within: float, persistence: float) -> np.ndarray:
    """Country-year normals: a fixed country level plus an AR(1) yearly deviation."""
    n_countries = -(-n // YEARS_PER_COUNTRY)
    level = rng.standard_normal((n_countries, 9))
    dev = np.empty((n_countries, YEARS_PER_COUNTRY, 9))
    dev[:, 0] = rng.standard_normal((n_countries, 9))
    shock = np.sqrt(1.0 - persistence ** 2)
    for t in range(1, YEARS_PER_COUNTRY):
        dev[:, t] = persistence * dev[:, t - 1] + shock * rng.standard_normal((n_countries, 9))
    Z = np.sqrt(1.0 - within ** 2) * level[:, None, :] + within * dev
    return Z.reshape(-1, 9)[:n]


def latent_score(X: np.ndarray, scenario: str = "linear") -> np.ndarray:
    """The fixed creditworthiness function behind :func:`synthesize_dataset`."""
    X = np.asarray(X, dtype=float)
    growth, infl, unemp, ca, bal, debt, pol, reg, gdppc = X.T
    log_income = (np.log(gdppc) - np.log(13.5)) / 1.0
    reg_z = (reg - 0.7) / 0.8
    base = (
        1.0 * reg_z
        + 0.8 * log_income
        - 0.5 * (np.log(unemp) - np.log(6.9)) / 0.5
        - 0.4 * (np.log(debt) - np.log(47.0)) / 0.55
        + 0.3 * (pol - 0.3) / 0.9
        + 0.2 * (bal + 2.2) / 4.0
        + 0.1 * (growth - 3.2) / 3.0
        - 0.1 * (np.log(infl + 1.0) - np.log(3.5)) / 0.7
    )
    if scenario == "linear":
        return base + 0.2 * (ca - _CA_CENTER) / _CA_SCALE
    if scenario == "nonlinear":
        u_shape = np.minimum(np.abs(ca - _CA_CENTER) / _CA_SCALE, 3.0)
        return base + 1.5 * u_shape + 1.2 * reg_z * log_income
    raise ValueError(f"unknown scenario {scenario!r} (expected 'linear' or 'nonlinear')")


def synthesize_dataset(n: int, seed: int, scenario: str = "linear", *,
                       noise: float = 0.1, within: float = 0.3, persistence: float = 0.8,
                       schema: FeatureSchema = DEFAULT_SCHEMA) -> Dataset:
    """Synthetic country-year panel labelled by quantile bins of :func:`latent_score`.

    Countries contribute 19 consecutive years each. ``within`` is the share of
    feature variation (in normal-score units) that moves from year to year and
    ``persistence`` its AR(1) coefficient, so rows of one country stay close
    together, as in a real rating panel.
    """
    if n < 50:
        raise ValueError("synthetic panels need n >= 50")
    rng = np.random.default_rng(seed)
    X = _features_from_normals(_panel_normals(n, rng, within, persistence))
    score = latent_score(X, scenario) + noise * rng.standard_normal(n)
    cuts = np.quantile(score, np.arange(1, N_CLASSES) / N_CLASSES)
    y = np.searchsorted(cuts, score, side="right") + 1
    countries = tuple(f"SYN{i // YEARS_PER_COUNTRY:03d}" for i in range(n))
    years = np.array([2000 + i % YEARS_PER_COUNTRY for i in range(n)])
    return Dataset(schema, X, y, countries, years)
