"""Citizen-month records, 3-month window aggregation, monthly chunks and
information-level feature projection.

Records are held column-wise in a :class:`pandas.DataFrame` whose columns are
exactly :data:`CSV_COLUMNS` plus a derived ``month_index``.  One row is one
:class:`CitizenMonthRecord`; :func:`to_records` gives the row view.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
import pandas as pd

TIME_SLOTS = ("day", "evening", "night", "weekday", "weekend")
SERVICES = (
    "generic", "emergency", "dementia", "reoccurring", "dental",
    "palliative", "personal", "practical", "rehab", "sick",
)
PROVIDERS = ("public", "private")
FEEDBACK = ("home", "not_home", "hospitalized", "other")
GENDERS = ("F", "M")
LIVING_TYPES = ("own_residence", "senior_housing", "assigned_residence")
DEFAULT_CIVIL_STATUSES = ("divorced", "married", "single", "widowed")

TIME_COLUMNS = tuple(f"hours_{s}" for s in TIME_SLOTS)
SERVICE_COLUMNS = tuple(f"hc_{s}" for s in SERVICES)
PROVIDER_COLUMNS = tuple(f"prov_{p}" for p in PROVIDERS)
FEEDBACK_COLUMNS = tuple(f"fb_{f}" for f in FEEDBACK)
DEMOGRAPHIC_COLUMNS = ("gender", "age", "zipcode", "civil_status", "living_type")
AMOUNT_COLUMNS = (
    ("hours_total",) + TIME_COLUMNS + SERVICE_COLUMNS + PROVIDER_COLUMNS
    + FEEDBACK_COLUMNS + ("cost",)
)
CSV_COLUMNS = ("citizen_id", "year", "month") + DEMOGRAPHIC_COLUMNS + AMOUNT_COLUMNS
CSV_HEADER = ",".join(CSV_COLUMNS)

DEFAULT_THRESHOLD_HOURS = 6.0


class CohortDataError(ValueError):
    """Raised for malformed or invalid cohort input."""


# ---------------------------------------------------------------------------
# month arithmetic

def month_index(year: int, month: int) -> int:
    """Linear calendar-month coordinate ``year*12 + month - 1``."""
    return int(year) * 12 + int(month) - 1


def year_month(index: int) -> tuple[int, int]:
    return int(index) // 12, int(index) % 12 + 1


def parse_year_month(text: str) -> int:
    """``"2013-04"`` -> month index."""
    year, month = text.strip().split("-")
    if not 1 <= int(month) <= 12:
        raise ValueError(f"month out of range in {text!r}")
    return month_index(int(year), int(month))


def format_year_month(index: int) -> str:
    y, m = year_month(index)
    return f"{y:04d}-{m:02d}"


# ---------------------------------------------------------------------------
# records

@dataclass(frozen=True)
class CitizenMonthRecord:
    citizen_id: str
    year: int
    month: int
    gender: str
    age: int
    zipcode: str
    civil_status: str
    living_type: str
    hours_total: float
    hours_by_time: dict[str, float]
    hours_by_service: dict[str, float]
    hours_by_provider: dict[str, float]
    feedback_counts: dict[str, int]
    cost: float

    @property
    def month_index(self) -> int:
        return month_index(self.year, self.month)

    def to_row(self) -> dict:
        row = {
            "citizen_id": self.citizen_id, "year": self.year, "month": self.month,
            "gender": self.gender, "age": self.age, "zipcode": self.zipcode,
            "civil_status": self.civil_status, "living_type": self.living_type,
            "hours_total": self.hours_total,
        }
        row.update({f"hours_{k}": self.hours_by_time[k] for k in TIME_SLOTS})
        row.update({f"hc_{k}": self.hours_by_service[k] for k in SERVICES})
        row.update({f"prov_{k}": self.hours_by_provider[k] for k in PROVIDERS})
        row.update({f"fb_{k}": self.feedback_counts[k] for k in FEEDBACK})
        row["cost"] = self.cost
        return row

    @classmethod
    def from_row(cls, row) -> "CitizenMonthRecord":
        return cls(
            citizen_id=str(row["citizen_id"]),
            year=int(row["year"]),
            month=int(row["month"]),
            gender=str(row["gender"]),
            age=int(row["age"]),
            zipcode=str(row["zipcode"]),
            civil_status=str(row["civil_status"]),
            living_type=str(row["living_type"]),
            hours_total=float(row["hours_total"]),
            hours_by_time={k: float(row[f"hours_{k}"]) for k in TIME_SLOTS},
            hours_by_service={k: float(row[f"hc_{k}"]) for k in SERVICES},
            hours_by_provider={k: float(row[f"prov_{k}"]) for k in PROVIDERS},
            feedback_counts={k: int(row[f"fb_{k}"]) for k in FEEDBACK},
            cost=float(row["cost"]),
        )


_INT_COLUMNS = ("year", "month", "age") + FEEDBACK_COLUMNS
_STR_COLUMNS = ("citizen_id",) + tuple(c for c in DEMOGRAPHIC_COLUMNS if c != "age")


def to_records(frame: pd.DataFrame) -> list[CitizenMonthRecord]:
    return [CitizenMonthRecord.from_row(row) for row in frame.to_dict("records")]


def from_records(records: Sequence[CitizenMonthRecord]) -> pd.DataFrame:
    """Build a validated record frame from record objects."""
    rows = [r.to_row() for r in records]
    frame = pd.DataFrame(rows, columns=list(CSV_COLUMNS))
    return validate_frame(frame)


def _empty_frame() -> pd.DataFrame:
    frame = pd.DataFrame({c: pd.Series(dtype=object) for c in CSV_COLUMNS})
    return _coerce_types(frame)


def _coerce_types(frame: pd.DataFrame) -> pd.DataFrame:
    for col in _STR_COLUMNS:
        frame[col] = frame[col].astype(str)
    for col in _INT_COLUMNS:
        frame[col] = frame[col].astype(np.int64)
    for col in AMOUNT_COLUMNS:
        if col not in FEEDBACK_COLUMNS:
            frame[col] = frame[col].astype(np.float64)
    return frame


def validate_frame(frame: pd.DataFrame) -> pd.DataFrame:
    """Check invariants, sort by (citizen_id, month) and add ``month_index``.

    Row numbers in error messages are 1-based data rows (line number minus one).
    """
    missing = [c for c in CSV_COLUMNS if c not in frame.columns]
    if missing:
        raise CohortDataError(f"missing columns: {', '.join(missing)}")
    frame = frame.loc[:, list(CSV_COLUMNS)].copy()
    if len(frame) == 0:
        out = _empty_frame()
        out["month_index"] = pd.Series(dtype=np.int64)
        return out

    for col in _INT_COLUMNS + tuple(c for c in AMOUNT_COLUMNS if c not in _INT_COLUMNS):
        values = pd.to_numeric(frame[col], errors="coerce")
        bad = values.isna() | ~np.isfinite(values.astype(float))
        if col in _INT_COLUMNS:
            bad |= values.fillna(0) != np.floor(values.fillna(0))
        if bad.any():
            row = int(np.flatnonzero(bad.to_numpy())[0])
            raise CohortDataError(
                f"row {row + 1}, column {col!r}: cannot parse {frame[col].iloc[row]!r}")
        frame[col] = values
    for col in _STR_COLUMNS:
        empty = frame[col].isna() | (frame[col].astype(str).str.len() == 0)
        if empty.any():
            row = int(np.flatnonzero(empty.to_numpy())[0])
            raise CohortDataError(f"row {row + 1}, column {col!r}: empty value")
    frame = _coerce_types(frame)

    def fail(mask, col, what):
        row = int(np.flatnonzero(np.asarray(mask))[0])
        raise CohortDataError(f"row {row + 1}, column {col!r}: {what}")

    month_bad = (frame["month"] < 1) | (frame["month"] > 12)
    if month_bad.any():
        fail(month_bad, "month", "month must be in 1..12")
    if (frame["age"] < 0).any():
        fail(frame["age"] < 0, "age", "negative age")
    for col in AMOUNT_COLUMNS:
        neg = frame[col] < 0
        if neg.any():
            fail(neg, col, "negative value")
    gender_bad = ~frame["gender"].isin(GENDERS)
    if gender_bad.any():
        fail(gender_bad, "gender", f"expected one of {GENDERS}")
    living_bad = ~frame["living_type"].isin(LIVING_TYPES)
    if living_bad.any():
        fail(living_bad, "living_type", f"expected one of {LIVING_TYPES}")
    provider_sum = frame["prov_public"] + frame["prov_private"]
    mismatch = (provider_sum - frame["hours_total"]).abs() > 1e-6
    if mismatch.any():
        fail(mismatch, "prov_public", "provider hours do not sum to hours_total")

    frame["month_index"] = frame["year"] * 12 + frame["month"] - 1
    dup = frame.duplicated(["citizen_id", "month_index"], keep="first")
    if dup.any():
        row = int(np.flatnonzero(dup.to_numpy())[0])
        raise CohortDataError(
            f"row {row + 1}: duplicate record for citizen {frame['citizen_id'].iloc[row]!r}"
            f" in {frame['year'].iloc[row]}-{frame['month'].iloc[row]:02d}")
    frame = frame.sort_values(["citizen_id", "month_index"], kind="mergesort")
    return frame.reset_index(drop=True)


def ingest_csv(path: str | Path) -> pd.DataFrame:
    """Read and validate a cohort CSV (header required)."""
    path = Path(path)
    try:
        raw = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except pd.errors.EmptyDataError as exc:
        raise CohortDataError(f"{path}: no header line") from exc
    except OSError as exc:
        raise CohortDataError(f"{path}: {exc}") from exc
    unknown = [c for c in raw.columns if c not in CSV_COLUMNS]
    if unknown:
        raise CohortDataError(f"{path}: unknown columns: {', '.join(unknown)}")
    try:
        return validate_frame(raw)
    except CohortDataError as exc:
        raise CohortDataError(f"{path}: {exc}") from None


def emit_csv(frame: pd.DataFrame, path: str | Path) -> None:
    """Write records in the cohort CSV schema.  Floats are written in
    shortest round-trip form so ``ingest_csv`` reproduces them exactly."""
    path = Path(path)
    out = frame.loc[:, list(CSV_COLUMNS)]
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        out.to_csv(path, index=False, lineterminator="\n", encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write cohort CSV to {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# timelines and events

def expand_timelines(frame: pd.DataFrame) -> pd.DataFrame:
    """Zero-filled contiguous monthly timelines for every citizen.

    Unobserved interior months get zero amounts; demographics carry forward from
    the most recent observed month.  Adds boolean column ``observed``.
    """
    if len(frame) == 0:
        out = frame.copy()
        out["observed"] = pd.Series(dtype=bool)
        return out
    cid = frame["citizen_id"].to_numpy()
    midx = frame["month_index"].to_numpy()
    starts = np.flatnonzero(np.r_[True, cid[1:] != cid[:-1]])
    ends = np.r_[starts[1:], len(cid)] - 1
    first, last = midx[starts], midx[ends]
    lengths = last - first + 1
    offsets = np.r_[0, np.cumsum(lengths)[:-1]]
    total = int(lengths.sum())

    owner = np.repeat(np.arange(len(starts)), lengths)
    within = np.arange(total) - offsets[owner]
    row_owner = np.repeat(np.arange(len(starts)), ends - starts + 1)
    pos = offsets[row_owner] + (midx - first[row_owner])

    out = {}
    out["citizen_id"] = np.repeat(cid[starts], lengths)
    tl_month = first[owner] + within
    out["year"] = tl_month // 12
    out["month"] = tl_month % 12 + 1
    # forward-fill: index of latest observed row at or before each position
    src = np.full(total, -1, dtype=np.int64)
    src[pos] = np.arange(len(frame))
    src = np.maximum.accumulate(src)
    for col in DEMOGRAPHIC_COLUMNS:
        out[col] = frame[col].to_numpy()[src]
    for col in AMOUNT_COLUMNS:
        values = frame[col].to_numpy()
        filled = np.zeros(total, dtype=values.dtype)
        filled[pos] = values
        out[col] = filled
    observed = np.zeros(total, dtype=bool)
    observed[pos] = True
    result = pd.DataFrame(out, columns=list(CSV_COLUMNS))
    result["month_index"] = tl_month
    result["observed"] = observed
    return result


def monthly_timeline(frame: pd.DataFrame, citizen_id: str) -> list[CitizenMonthRecord]:
    sub = frame[frame["citizen_id"] == str(citizen_id)]
    if len(sub) == 0:
        return []
    return to_records(expand_timelines(sub))


def increase_events(timeline: Sequence[CitizenMonthRecord],
                    threshold_hours: float = DEFAULT_THRESHOLD_HOURS) -> list[int]:
    """Month indices where hours rose by at least ``threshold_hours`` over the
    previous timeline month."""
    if threshold_hours <= 0:
        raise ValueError("threshold_hours must be positive")
    return [cur.month_index for prev, cur in zip(timeline, timeline[1:])
            if cur.hours_total - prev.hours_total >= threshold_hours]


# ---------------------------------------------------------------------------
# feature schema and information levels

class InformationLevel(str, enum.Enum):
    IL1 = "IL1"
    IL2a = "IL2a"
    IL2b = "IL2b"
    IL3 = "IL3"
    IL4 = "IL4"

    def __str__(self) -> str:
        return self.value


LEVELS = tuple(InformationLevel)


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    category: str   # Table-1 category: basic, living, length, time, type, health, feedback, financial
    encoding: str   # numeric, indicator, one_hot, distribution, count


@dataclass(frozen=True)
class FeatureSchema:
    """Master (IL4) layout plus, per level, the columns read and which of them
    are reduced to any-activity indicators."""
    features: tuple[FeatureSpec, ...]
    masks: dict[InformationLevel, tuple[int, ...]]
    binary: dict[InformationLevel, frozenset[int]]
    zipcodes: tuple[str, ...]
    civil_statuses: tuple[str, ...]

    @property
    def dim(self) -> int:
        return len(self.features)

    @property
    def names(self) -> list[str]:
        return [f.name for f in self.features]

    def index(self, name: str) -> int:
        return self.names.index(name)

    def level_names(self, level) -> list[str]:
        level = InformationLevel(level)
        names = []
        for j in self.masks[level]:
            name = self.features[j].name
            names.append(f"{name}_any" if j in self.binary[level] else name)
        return names

    def level_dim(self, level) -> int:
        return len(self.masks[InformationLevel(level)])

    def to_dict(self) -> dict:
        return {"zipcodes": list(self.zipcodes), "civil_statuses": list(self.civil_statuses)}

    @classmethod
    def from_dict(cls, data: dict) -> "FeatureSchema":
        return build_feature_schema(data["zipcodes"], data["civil_statuses"])


def build_feature_schema(zipcodes: Sequence[str] = (),
                         civil_statuses: Sequence[str] = DEFAULT_CIVIL_STATUSES) -> FeatureSchema:
    """Deterministic master layout.  Zipcode and civil-status vocabularies are
    sorted; values outside them encode as all zeros."""
    zipcodes = tuple(sorted({str(z) for z in zipcodes}))
    civil_statuses = tuple(sorted({str(c) for c in civil_statuses}))
    specs: list[FeatureSpec] = [
        FeatureSpec("gender_M", "basic", "indicator"),
        FeatureSpec("age", "basic", "numeric"),
    ]
    specs += [FeatureSpec(f"zip={z}", "basic", "one_hot") for z in zipcodes]
    specs += [FeatureSpec(f"civil={c}", "basic", "one_hot") for c in civil_statuses]
    specs += [FeatureSpec(f"month={m:02d}", "basic", "one_hot") for m in range(1, 13)]
    specs += [FeatureSpec(f"living={t}", "living", "one_hot") for t in LIVING_TYPES]
    specs += [
        FeatureSpec("hours_total", "length", "numeric"),
        FeatureSpec("n_large_increases", "length", "count"),
    ]
    specs += [FeatureSpec(c, "time", "distribution") for c in TIME_COLUMNS]
    specs += [FeatureSpec(c, "type", "distribution") for c in PROVIDER_COLUMNS]
    specs += [FeatureSpec(c, "health", "distribution") for c in SERVICE_COLUMNS]
    specs += [FeatureSpec(c, "feedback", "count") for c in FEEDBACK_COLUMNS]
    specs.append(FeatureSpec("cost", "financial", "numeric"))

    def cols(*cats):
        return {i for i, s in enumerate(specs) if s.category in cats}

    base = cols("basic", "length", "living")
    time, kind, health = cols("time"), cols("type"), cols("health")
    extra = cols("feedback", "financial")
    L = InformationLevel
    sets = {
        L.IL1: (base, set()),
        L.IL2a: (base | time, time),
        L.IL2b: (base | health | kind, health | kind),
        L.IL3: (base | time | health | kind, time | health | kind),
        L.IL4: (base | time | health | kind | extra, kind),
    }
    return FeatureSchema(
        features=tuple(specs),
        masks={lv: tuple(sorted(idx)) for lv, (idx, _) in sets.items()},
        binary={lv: frozenset(b) for lv, (_, b) in sets.items()},
        zipcodes=zipcodes,
        civil_statuses=civil_statuses,
    )


def schema_for_records(frame: pd.DataFrame) -> FeatureSchema:
    civil = set(DEFAULT_CIVIL_STATUSES) | set(frame["civil_status"].unique())
    return build_feature_schema(frame["zipcode"].unique(), civil)


def project_matrix(features: np.ndarray, level, schema: FeatureSchema) -> np.ndarray:
    """Project master feature rows onto an information level."""
    level = InformationLevel(level)
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != schema.dim:
        raise ValueError(f"expected (n, {schema.dim}) master features, got {features.shape}")
    mask = schema.masks[level]
    out = features[:, mask]
    binary = [k for k, j in enumerate(mask) if j in schema.binary[level]]
    if binary:
        out[:, binary] = (out[:, binary] > 0).astype(np.float64)
    return out


def project(instance: "AggregatedInstance", level, schema: FeatureSchema) -> np.ndarray:
    return project_matrix(instance.features[None, :], level, schema)[0]


# ---------------------------------------------------------------------------
# aggregation

@dataclass(frozen=True)
class AggregatedInstance:
    citizen_id: str
    window_end: int
    features: np.ndarray
    label: int
    label_defined: bool


@dataclass
class MonthChunk:
    """All window instances ending at month ``t`` (column-wise).

    ``year_ago_increases`` counts large increases in months t-11..t-9 and only
    feeds the 12-month baseline; it is not a model feature.
    """
    t: int
    citizen_ids: np.ndarray
    features: np.ndarray
    labels: np.ndarray
    label_defined: np.ndarray
    year_ago_increases: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return len(self.citizen_ids)

    @property
    def instances(self) -> list[AggregatedInstance]:
        return list(self)

    def __iter__(self) -> Iterator[AggregatedInstance]:
        for i in range(len(self)):
            yield AggregatedInstance(
                str(self.citizen_ids[i]), self.t, self.features[i],
                int(self.labels[i]), bool(self.label_defined[i]))

    def labeled(self) -> "MonthChunk":
        """The sub-chunk of instances with a defined label."""
        keep = self.label_defined
        return MonthChunk(self.t, self.citizen_ids[keep], self.features[keep],
                          self.labels[keep], self.label_defined[keep],
                          self.year_ago_increases[keep])

    @property
    def n_defined(self) -> int:
        return int(self.label_defined.sum())

    @property
    def n_pos(self) -> int:
        return int((self.labels[self.label_defined] == 1).sum())


def _window_sum(values: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Sum of values[lo..hi] (inclusive, clipped to valid range) per row."""
    cs = np.concatenate([np.zeros((1,) + values.shape[1:]), np.cumsum(values, axis=0)])
    lo = np.clip(lo, 0, len(values))
    hi = np.clip(hi + 1, 0, len(values))
    hi = np.maximum(hi, lo)
    return cs[hi] - cs[lo]


def aggregate_windows(frame: pd.DataFrame, window_months: int = 3, horizon_months: int = 3,
                      threshold_hours: float = DEFAULT_THRESHOLD_HOURS,
                      schema: FeatureSchema | None = None) -> list[MonthChunk]:
    """Slide a ``window_months`` window over each citizen's timeline (step 1),
    label it by whether a large increase occurs in the following
    ``horizon_months`` months, and group instances by window end."""
    if window_months < 1 or horizon_months < 1:
        raise ValueError("window_months and horizon_months must be >= 1")
    if threshold_hours <= 0:
        raise ValueError("threshold_hours must be positive")
    if schema is None:
        schema = schema_for_records(frame) if len(frame) else build_feature_schema()
    tl = expand_timelines(frame)
    if len(tl) == 0:
        return []

    cid = tl["citizen_id"].to_numpy()
    new_citizen = np.r_[True, cid[1:] != cid[:-1]]
    starts = np.flatnonzero(new_citizen)
    lengths = np.diff(np.r_[starts, len(cid)])
    owner = np.repeat(np.arange(len(starts)), lengths)
    start_of = starts[owner]
    end_of = start_of + lengths[owner] - 1
    pos = np.arange(len(cid))

    hours = tl["hours_total"].to_numpy()
    rise = np.r_[0.0, np.diff(hours)]
    events = ((rise >= threshold_hours) & ~new_citizen).astype(np.float64)

    valid = pos - start_of >= window_months - 1
    if not valid.any():
        return []
    ends = pos[valid]
    lo = ends - window_months + 1

    amount_cols = [c for c in AMOUNT_COLUMNS]
    amounts = tl[amount_cols].to_numpy(dtype=np.float64)
    sums = _window_sum(amounts, lo, ends)
    n_incr = _window_sum(events, lo, ends)
    fut_hi = np.minimum(ends + horizon_months, end_of[valid])
    label_defined = ends + horizon_months <= end_of[valid]
    fut = _window_sum(events, ends + 1, fut_hi)
    labels = np.where(fut > 0, 1, -1).astype(np.int8)
    ya_lo = np.maximum(ends - 11, start_of[valid])
    ya_hi = ends - 9
    year_ago = np.where(ya_hi >= ya_lo, _window_sum(events, ya_lo, ya_hi), 0.0)

    col = {name: k for k, name in enumerate(amount_cols)}
    X = np.zeros((len(ends), schema.dim))
    names = {n: j for j, n in enumerate(schema.names)}
    X[:, names["gender_M"]] = tl["gender"].to_numpy()[ends] == "M"
    X[:, names["age"]] = tl["age"].to_numpy()[ends]
    for value_col, prefix, vocab in (
        ("zipcode", "zip", schema.zipcodes),
        ("civil_status", "civil", schema.civil_statuses),
        ("living_type", "living", LIVING_TYPES),
    ):
        values = tl[value_col].to_numpy()[ends]
        for v in vocab:
            X[:, names[f"{prefix}={v}"]] = values == v
    moy = tl["month"].to_numpy()[ends]
    for m in range(1, 13):
        X[:, names[f"month={m:02d}"]] = moy == m
    X[:, names["n_large_increases"]] = n_incr
    for name in ("hours_total",) + TIME_COLUMNS + PROVIDER_COLUMNS + SERVICE_COLUMNS \
            + FEEDBACK_COLUMNS + ("cost",):
        X[:, names[name]] = sums[:, col[name]]

    t_all = tl["month_index"].to_numpy()[ends]
    order = np.argsort(t_all, kind="stable")
    bounds = np.flatnonzero(np.r_[True, np.diff(t_all[order]) != 0, True])
    chunks = []
    for a, b in zip(bounds[:-1], bounds[1:]):
        sel = order[a:b]
        chunks.append(MonthChunk(
            t=int(t_all[sel[0]]),
            citizen_ids=cid[ends[sel]],
            features=X[sel],
            labels=labels[sel],
            label_defined=label_defined[sel],
            year_ago_increases=year_ago[sel],
        ))
    return chunks


def chunk_map(chunks: Sequence[MonthChunk]) -> dict[int, MonthChunk]:
    return {c.t: c for c in chunks}


def positive_rate(chunks: Sequence[MonthChunk]) -> float:
    n = sum(c.n_defined for c in chunks)
    return sum(c.n_pos for c in chunks) / n if n else math.nan
