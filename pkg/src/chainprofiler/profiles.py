"""Quasi-identifier profiles: time-of-day activity and normalized gas price.

Both profiles are ``[mean, median, std] + normalized histogram`` vectors.
Standard deviation is the population one, so a single observation gives 0.
"""
from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass
from datetime import date, datetime, timezone
from fractions import Fraction
from typing import Dict, Iterable, List, Mapping, Sequence

import numpy as np

from .errors import EmptyInput, MissingDay
from .ingest import Transaction

SECONDS_PER_DAY = 86400
KINDS = ("timeofday", "gasprice", "embedding", "concat")


@dataclass(frozen=True)
class FeatureConfig:
    b_hour: int = 6
    b_gas: int = 50
    gas_clip: float = 5.0

    def __post_init__(self):
        if not 1 <= self.b_hour <= 24:
            raise ValueError("b_hour must be in [1, 24]")
        if self.b_gas < 1:
            raise ValueError("b_gas must be >= 1")
        if not self.gas_clip > 0:
            raise ValueError("gas_clip must be positive")


@dataclass
class FeatureVector:
    address: str
    kind: str
    values: np.ndarray

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown feature kind {self.kind!r}")
        self.values = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(self.values)):
            raise ValueError(f"non-finite feature value for {self.address}")

    def __len__(self):
        return len(self.values)


def utc_day(timestamp: int) -> date:
    return datetime.fromtimestamp(timestamp, tz=timezone.utc).date()


def _stats(x: np.ndarray) -> List[float]:
    return [float(np.mean(x)), float(np.median(x)), float(np.std(x))]


def _histogram(x, bins, upper):
    if len(x) == 0:
        return np.zeros(bins)
    idx = np.minimum((np.asarray(x) * bins / upper).astype(int), bins - 1)
    counts = np.bincount(idx, minlength=bins).astype(float)
    return counts / counts.sum()


def time_of_day_features(txs: Sequence[Transaction], cfg: FeatureConfig = FeatureConfig(),
                         address: str = "") -> FeatureVector:
    """Profile of the UTC hour-of-day at which ``txs`` happened."""
    if len(txs) == 0:
        raise EmptyInput("time-of-day profile needs at least one transaction")
    ts = np.array([tx.timestamp for tx in txs], dtype=np.int64)
    hours = (ts % SECONDS_PER_DAY) / 3600.0
    values = _stats(hours) + list(_histogram(hours, cfg.b_hour, 24.0))
    return FeatureVector(address, "timeofday", values)


def daily_average_gas_price(corpus: Iterable[Transaction]) -> Dict[date, Fraction]:
    """Exact per-UTC-day mean gas price over non-internal, non-zero-price transactions."""
    totals = defaultdict(int)
    counts = defaultdict(int)
    for tx in corpus:
        if tx.is_internal or tx.gas_price == 0:
            continue
        day = utc_day(tx.timestamp)
        totals[day] += tx.gas_price
        counts[day] += 1
    return {d: Fraction(totals[d], counts[d]) for d in sorted(totals)}


def gas_ratios(txs: Iterable[Transaction], series: Mapping[date, Fraction]) -> np.ndarray:
    """gas_price / day average for each sent, non-internal, non-zero-price tx."""
    out = []
    for tx in txs:
        if tx.is_internal or tx.gas_price == 0:
            continue
        day = utc_day(tx.timestamp)
        if day not in series:
            raise MissingDay(day)
        out.append(float(Fraction(tx.gas_price) / series[day]))
    return np.array(out, dtype=float)


def normalized_gas_features(txs: Sequence[Transaction], series: Mapping[date, Fraction],
                            cfg: FeatureConfig = FeatureConfig(), address: str = "") -> FeatureVector:
    """Gas-price profile relative to the daily average.

    Ratios above ``cfg.gas_clip`` still count toward mean/median/std but are
    left out of the histogram.
    """
    ratios = gas_ratios(txs, series)
    if len(ratios) == 0:
        raise EmptyInput("gas profile needs at least one priced, sent transaction")
    kept = ratios[ratios <= cfg.gas_clip]
    values = _stats(ratios) + list(_histogram(kept, cfg.b_gas, cfg.gas_clip))
    return FeatureVector(address, "gasprice", values)


def concat_features(*vectors: FeatureVector) -> FeatureVector:
    addresses = {v.address for v in vectors}
    if len(addresses) != 1:
        raise ValueError("can only concatenate features of one address")
    return FeatureVector(vectors[0].address, "concat", np.concatenate([v.values for v in vectors]))


def build_profiles(corpus: Sequence[Transaction], addresses: Iterable[str],
                   cfg: FeatureConfig = FeatureConfig(), series=None):
    """Time-of-day and gas features for every address in ``addresses``.

    Time-of-day uses every transaction the address sent or received; gas
    features use the sent ones. Addresses without usable gas data are
    absent from the gas map.
    """
    addresses = list(addresses)
    wanted = set(addresses)
    involved = defaultdict(list)
    sent = defaultdict(list)
    for tx in corpus:
        if tx.from_address in wanted:
            involved[tx.from_address].append(tx)
            if not tx.is_internal:
                sent[tx.from_address].append(tx)
        if tx.to_address in wanted and tx.to_address != tx.from_address:
            involved[tx.to_address].append(tx)
    if series is None:
        series = daily_average_gas_price(corpus)
    tod, gas = {}, {}
    for a in addresses:
        if involved[a]:
            tod[a] = time_of_day_features(involved[a], cfg, a)
        try:
            gas[a] = normalized_gas_features(sent[a], series, cfg, a)
        except EmptyInput:
            pass
    return tod, gas


# --------------------------------------------------------------------------
# files

def write_features(path, features: Iterable[FeatureVector]) -> None:
    features = sorted(features, key=lambda f: (f.kind, f.address))
    width = max((len(f) for f in features), default=0)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["address", "kind"] + [f"v{i}" for i in range(width)])
        for f in features:
            w.writerow([f.address, f.kind] + [repr(float(v)) for v in f.values])


def read_features(path, kind: str = None) -> Dict[str, FeatureVector]:
    out = {}
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r, None)
        if not header or header[:2] != ["address", "kind"]:
            raise ValueError(f"{path}: header must start with address,kind")
        for row in r:
            if not row:
                continue
            if kind is not None and row[1] != kind:
                continue
            vals = [float(v) for v in row[2:] if v != ""]
            out[row[0]] = FeatureVector(row[0], row[1], vals)
    return out


def read_daily_gas(path) -> Dict[date, Fraction]:
    out = {}
    with open(path, newline="") as fh:
        r = csv.DictReader(fh)
        if r.fieldnames != ["date", "avg_gas_price_wei"]:
            raise ValueError(f"{path}: header must be date,avg_gas_price_wei")
        for row in r:
            avg = Fraction(row["avg_gas_price_wei"])
            if avg <= 0:
                raise ValueError(f"{path}: non-positive average on {row['date']}")
            out[date.fromisoformat(row["date"])] = avg
    return out


def write_daily_gas(path, series: Mapping[date, Fraction]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "avg_gas_price_wei"])
        for d in sorted(series):
            v = series[d]
            w.writerow([d.isoformat(), str(v.numerator) if v.denominator == 1 else f"{v.numerator}/{v.denominator}"])
