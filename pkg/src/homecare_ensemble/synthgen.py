"""Seeded synthetic home-care cohorts.

Each citizen gets monthly hours that drift slowly, occasionally drop, and jump
by at least 7 hours when a "large increase" event fires.  The monthly event
probability is a logistic hazard over the previous month's state::

    logit p = logit(base_event_rate)
              + c_recent * (#events in the previous 3 months)
              + c_hosp * hospitalised + c_sick * sick_care
              + c_weekend * weekend_care + c_age * (age - 80) / 8

Drift noise never exceeds 1 hour, so every event and only events show up as
increases of at least 6 hours in the generated data.
"""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .cohort import (
    CSV_COLUMNS, DEFAULT_CIVIL_STATUSES, FEEDBACK, LIVING_TYPES, PROVIDERS, SERVICES,
    emit_csv, format_year_month, parse_year_month, validate_frame,
)

DEFAULT_COEFFICIENTS = {
    "recent_increases": 1.6,
    "hospitalized": 0.9,
    "sick_care": 0.7,
    "weekend_care": 0.6,
    "age": 0.25,
}

_CIVIL_WEIGHTS = {"divorced": 0.1, "married": 0.35, "single": 0.2, "widowed": 0.35}
_LIVING_WEIGHTS = (0.7, 0.2, 0.1)
_RATE_PUBLIC, _RATE_PRIVATE = 420.0, 380.0


class ConfigError(ValueError):
    pass


@dataclass
class SyntheticConfig:
    n_citizens: int = 5000
    start_month: int = parse_year_month("2013-04")
    end_month: int = parse_year_month("2017-04")
    seed: int = 0
    base_event_rate: float | None = None
    coefficients: dict = field(default_factory=lambda: dict(DEFAULT_COEFFICIENTS))
    target_positive_rate: float = 0.12
    censor_fraction: float = 0.10
    late_entry_fraction: float = 0.30
    n_zipcodes: int = 8

    def __post_init__(self):
        if self.n_citizens <= 0:
            raise ConfigError("n_citizens must be positive")
        if self.start_month >= self.end_month:
            raise ConfigError("start_month must precede end_month")
        for name in ("target_positive_rate", "censor_fraction", "late_entry_fraction"):
            if not 0 <= getattr(self, name) <= 1:
                raise ConfigError(f"{name} must be in [0, 1]")
        if self.base_event_rate is not None and not 0 <= self.base_event_rate <= 1:
            raise ConfigError("base_event_rate must be in [0, 1]")
        unknown = set(self.coefficients) - set(DEFAULT_COEFFICIENTS)
        if unknown:
            raise ConfigError(f"unknown hazard coefficients: {', '.join(sorted(unknown))}")
        self.coefficients = {**DEFAULT_COEFFICIENTS, **self.coefficients}
        if self.n_zipcodes < 1:
            raise ConfigError("n_zipcodes must be positive")

    @property
    def n_months(self) -> int:
        return self.end_month - self.start_month + 1

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["start_month"] = format_year_month(self.start_month)
        out["end_month"] = format_year_month(self.end_month)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "SyntheticConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known - {"schema_version"})
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        data = dict(data)
        data.pop("schema_version", None)
        for key in ("start_month", "end_month"):
            if isinstance(data.get(key), str):
                data[key] = parse_year_month(data[key])
        return cls(**data)

    @classmethod
    def load(cls, path) -> "SyntheticConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _logit(p: float) -> float:
    if p <= 0:
        return -math.inf
    if p >= 1:
        return math.inf
    return math.log(p / (1 - p))


# per-citizen, per-month uniform draws (column order is part of the format)
_U_EVENT, _U_JUMP, _U_NOISE, _U_DROP, _U_DROPSIZE, _U_SICK, _U_HOSP, _U_WEEKEND, \
    _U_EMERG, _U_DENTAL, _U_WSHARE, _U_VISITS, _U_FB = range(13)
_N_MONTHLY = 13
_N_STATIC = 18


def _citizen_draws(seed: int, n_citizens: int, n_months: int):
    static = np.empty((n_citizens, _N_STATIC))
    monthly = np.empty((n_citizens, n_months, _N_MONTHLY))
    shares = np.empty((n_citizens, n_months, len(SERVICES) + 3))
    for i in range(n_citizens):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), i]))
        static[i] = rng.random(_N_STATIC)
        monthly[i] = rng.random((n_months, _N_MONTHLY))
        shares[i] = rng.standard_exponential((n_months, len(SERVICES) + 3))
    return static, monthly, shares


def _simulate(config: SyntheticConfig, intercept: float, draws=None):
    n, T = config.n_citizens, config.n_months
    static, U, shares = draws if draws is not None else _citizen_draws(config.seed, n, T)
    c = config.coefficients

    gender = np.where(static[:, 0] < 0.62, "F", "M")
    age0 = 65 + np.floor(static[:, 1] * 31).astype(int)
    birth_offset = np.floor(static[:, 2] * 12).astype(int)
    zip_idx = np.minimum((static[:, 3] * config.n_zipcodes).astype(int), config.n_zipcodes - 1)
    civil_names = list(DEFAULT_CIVIL_STATUSES)
    cw = np.cumsum([_CIVIL_WEIGHTS[k] for k in civil_names])
    civil = np.array(civil_names)[np.minimum(np.searchsorted(cw, static[:, 4]), 3)]
    living = np.array(LIVING_TYPES)[np.minimum(
        np.searchsorted(np.cumsum(_LIVING_WEIGHTS), static[:, 5]), 2)]
    personal = static[:, 6] < 0.35
    late = static[:, 7] < config.late_entry_fraction
    entry = np.where(late, 1 + np.floor(static[:, 8] * (T - 1)).astype(int), 0)
    censored = static[:, 9] < config.censor_fraction
    span = T - entry
    exit_ = np.where(censored, entry + np.floor(static[:, 10] * span).astype(int), T - 1)
    exit_ = np.minimum(exit_, T - 1)
    base_hours = 4.0 + 30.0 * static[:, 11] ** 2
    # persistent service profile
    has = {
        "dementia": static[:, 12] < 0.10,
        "reoccurring": static[:, 13] < 0.40,
        "generic": static[:, 14] < 0.30,
        "palliative": static[:, 15] < 0.02,
    }
    private_share = np.where(static[:, 16] < 0.2, 0.3 + 0.7 * static[:, 17], 0.0)

    hours = np.zeros((n, T))
    events = np.zeros((n, T), dtype=bool)
    sick = np.zeros((n, T), dtype=bool)
    hosp = np.zeros((n, T), dtype=bool)
    weekend = np.zeros((n, T), dtype=bool)

    for m in range(T):
        alive = (m >= entry) & (m <= exit_)
        first = m == entry
        prev = max(m - 1, 0)
        sick_m = np.where(first | (m == 0), U[:, m, _U_SICK] < 0.23,
                          np.where(sick[:, prev], U[:, m, _U_SICK] < 0.8, U[:, m, _U_SICK] < 0.06))
        hosp_m = U[:, m, _U_HOSP] < 0.02 + 0.10 * sick_m
        weekend_m = U[:, m, _U_WEEKEND] < np.where(personal, 0.9, 0.1)

        recent = events[:, max(m - 3, 0):m].sum(axis=1)
        age = age0 + (m + birth_offset) // 12
        z = (intercept + c["recent_increases"] * recent
             + c["hospitalized"] * hosp[:, prev] + c["sick_care"] * sick[:, prev]
             + c["weekend_care"] * weekend[:, prev] + c["age"] * (age - 80) / 8.0)
        p = 1.0 / (1.0 + np.exp(-z))
        ev = alive & ~first & (U[:, m, _U_EVENT] < p)

        jump = 7.0 - 4.0 * np.log1p(-U[:, m, _U_JUMP] * 0.999)
        noise = 2.0 * U[:, m, _U_NOISE] - 1.0
        drop = U[:, m, _U_DROP] < 0.05
        h_prev = hours[:, prev]
        drifted = np.where(drop, h_prev * (0.6 + 0.3 * U[:, m, _U_DROPSIZE]), h_prev + noise)
        h = np.where(ev, h_prev + jump, np.maximum(drifted, 0.5))
        h = np.where(first, base_hours, h)
        hours[:, m] = np.where(alive, np.round(h, 2), 0.0)
        events[:, m] = ev
        sick[:, m] = sick_m & alive
        hosp[:, m] = hosp_m & alive
        weekend[:, m] = weekend_m & alive

    return dict(gender=gender, age0=age0, birth_offset=birth_offset, zip_idx=zip_idx,
                civil=civil, living=living, personal=personal, entry=entry, exit=exit_,
                hours=hours, events=events, sick=sick, hosp=hosp, weekend=weekend,
                has=has, private_share=private_share, U=U, shares=shares)


def _to_frame(config: SyntheticConfig, sim: dict) -> pd.DataFrame:
    n, T = config.n_citizens, config.n_months
    entry, exit_ = sim["entry"], sim["exit"]
    ci, mi = np.nonzero((np.arange(T)[None, :] >= entry[:, None])
                        & (np.arange(T)[None, :] <= exit_[:, None]))
    U, shares = sim["U"][ci, mi], sim["shares"][ci, mi]
    h = sim["hours"][ci, mi]
    month_idx = config.start_month + mi
    width = max(6, len(str(n)))
    out = {
        "citizen_id": np.char.add("C", np.char.zfill(ci.astype(str), width)),
        "year": month_idx // 12,
        "month": month_idx % 12 + 1,
        "gender": sim["gender"][ci],
        "age": sim["age0"][ci] + (mi + sim["birth_offset"][ci]) // 12,
        "zipcode": np.array([f"2{k:02d}0" for k in range(config.n_zipcodes)])[sim["zip_idx"][ci]],
        "civil_status": sim["civil"][ci],
        "living_type": sim["living"][ci],
        "hours_total": h,
    }
    # time of day: day/evening/night shares; weekend share only with weekend care
    tod = shares[:, -3:] * np.array([3.0, 1.0, 0.2])
    tod /= tod.sum(axis=1, keepdims=True)
    day = np.round(h * tod[:, 0], 2)
    evening = np.round(h * tod[:, 1], 2)
    out["hours_day"] = day
    out["hours_evening"] = evening
    out["hours_night"] = np.round(np.maximum(h - day - evening, 0.0), 2)
    wk_share = np.where(sim["weekend"][ci, mi], 0.15 + 0.2 * U[:, _U_WSHARE], 0.0)
    weekend_h = np.round(h * wk_share, 2)
    out["hours_weekday"] = np.round(h - weekend_h, 2)
    out["hours_weekend"] = weekend_h

    active = np.zeros((len(ci), len(SERVICES)), dtype=bool)
    col = {s: k for k, s in enumerate(SERVICES)}
    active[:, col["practical"]] = True
    active[:, col["personal"]] = sim["personal"][ci]
    active[:, col["sick"]] = sim["sick"][ci, mi]
    active[:, col["emergency"]] = sim["hosp"][ci, mi] & (U[:, _U_EMERG] < 0.5)
    active[:, col["dental"]] = U[:, _U_DENTAL] < 0.05
    for name in ("dementia", "reoccurring", "generic", "palliative"):
        active[:, col[name]] = sim["has"][name][ci]
    ev = sim["events"]
    recent_event = np.zeros_like(ev)
    for lag in range(3):
        recent_event[:, lag:] |= ev[:, :T - lag]
    active[:, col["rehab"]] = recent_event[ci, mi]
    w = np.where(active, shares[:, :len(SERVICES)] + 0.1, 0.0)
    w /= w.sum(axis=1, keepdims=True)
    service_hours = np.round(h[:, None] * w, 2)
    for s in SERVICES:
        out[f"hc_{s}"] = service_hours[:, col[s]]

    public = np.round(h * (1.0 - sim["private_share"][ci]), 2)
    out["prov_public"] = public
    out["prov_private"] = np.round(h - public, 2)

    visits = 1 + np.floor(h / 1.5 * (0.8 + 0.4 * U[:, _U_VISITS])).astype(np.int64)
    hospitalized = np.where(sim["hosp"][ci, mi], 1 + np.floor(3 * U[:, _U_FB]), 0).astype(np.int64)
    not_home = np.floor(visits * 0.06 * U[:, _U_FB]).astype(np.int64)
    other = np.floor(visits * 0.04 * U[:, _U_VISITS]).astype(np.int64)
    out["fb_home"] = np.maximum(visits - not_home - other - hospitalized, 0)
    out["fb_not_home"] = not_home
    out["fb_hospitalized"] = hospitalized
    out["fb_other"] = other
    out["cost"] = np.round(out["prov_public"] * _RATE_PUBLIC
                           + out["prov_private"] * _RATE_PRIVATE, 2)
    frame = pd.DataFrame(out, columns=list(CSV_COLUMNS))
    return validate_frame(frame)


def _label_rate(sim: dict, horizon: int = 3, window: int = 3) -> float:
    """Positive fraction among defined window labels (matches aggregation)."""
    ev = sim["events"]
    entry, exit_ = sim["entry"], sim["exit"]
    T = ev.shape[1]
    cs = np.concatenate([np.zeros((len(ev), 1)), np.cumsum(ev, axis=1)], axis=1)
    pos = tot = 0
    for e in range(T):
        ok = (e - window + 1 >= entry) & (e + horizon <= exit_)
        if not ok.any():
            continue
        fut = cs[ok, e + horizon + 1] - cs[ok, e + 1]
        pos += int((fut > 0).sum())
        tot += int(ok.sum())
    return pos / tot if tot else math.nan


def calibrate_base_rate(config: SyntheticConfig, pilot_citizens: int = 2000) -> float:
    """Base monthly event rate whose pilot cohort (same seed) hits
    ``target_positive_rate``; bisection on the logit intercept."""
    pilot = dataclasses.replace(config, n_citizens=min(config.n_citizens, pilot_citizens),
                                base_event_rate=0.0)
    draws = _citizen_draws(pilot.seed, pilot.n_citizens, pilot.n_months)
    lo, hi = -12.0, 2.0
    for _ in range(40):
        mid = (lo + hi) / 2
        rate = _label_rate(_simulate(pilot, mid, draws))
        if rate < config.target_positive_rate:
            lo = mid
        else:
            hi = mid
    return 1.0 / (1.0 + math.exp(-(lo + hi) / 2))


def generate_cohort(config: SyntheticConfig | None = None) -> pd.DataFrame:
    """Validated record frame for a synthetic cohort; deterministic in ``config``."""
    config = config or SyntheticConfig()
    rate = config.base_event_rate
    if rate is None:
        rate = calibrate_base_rate(config)
    return _to_frame(config, _simulate(config, _logit(rate)))


def write_cohort(config: SyntheticConfig, path) -> pd.DataFrame:
    """Generate, write the CSV and a ``<name>.meta.json`` sidecar echoing the config."""
    frame = generate_cohort(config)
    path = Path(path)
    emit_csv(frame, path)
    meta = {"seed": config.seed, "config": config.to_dict(), "n_records": len(frame),
            "n_citizens": int(frame["citizen_id"].nunique())}
    path.with_name(path.stem + ".meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    return frame
