"""Balance fingerprinting: low-order balance digits as a tracking tag.

A fingerprint is ``balance mod 10**d``. A transaction changes the fingerprint
of an account exactly when its balance delta is not a multiple of ``10**d``,
which lets change rates be measured from deltas even when the absolute
balance history is incomplete.
"""
from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
from scipy import integrate

from .errors import DegenerateSample, EmptyInput, EmptyLedger, NonConvergent
from .ingest import Transaction

TAIL_TOLERANCE = 1e-12


def fingerprint(balance: int, d: int = 9) -> int:
    if not 1 <= d <= 18:
        raise ValueError("digits must be in [1, 18]")
    return int(balance) % 10**d


@dataclass(frozen=True)
class LedgerEntry:
    tx_hash: str
    timestamp: int
    delta: int
    balance: int
    sent: bool


@dataclass
class BalanceLedger:
    entries: Dict[str, List[LedgerEntry]] = field(default_factory=dict)
    approximate: bool = False

    def __len__(self):
        return len(self.entries)

    def sent_counts(self) -> Dict[str, int]:
        return {a: sum(e.sent for e in es) for a, es in self.entries.items()}

    def tx_counts(self) -> Dict[str, int]:
        return {a: len(es) for a, es in self.entries.items()}

    def final_balances(self) -> Dict[str, int]:
        return {a: es[-1].balance for a, es in self.entries.items() if es}


def replay_balances(corpus: Iterable[Transaction], initial: Optional[Dict[str, int]] = None) -> BalanceLedger:
    """Replay value transfers and sender fees into per-address balance trajectories.

    Balances start from ``initial`` (0 when unknown). A corpus that does not
    hold an account's full history can drive a balance negative; the ledger
    is then flagged approximate.
    """
    balance = defaultdict(int, initial or {})
    entries = defaultdict(list)
    for tx in sorted(corpus, key=Transaction.sort_key):
        moves = defaultdict(int)
        moves[tx.from_address] -= tx.value + tx.fee
        if tx.to_address is not None:
            moves[tx.to_address] += tx.value
        for addr, delta in moves.items():
            balance[addr] += delta
            sent = addr == tx.from_address and not tx.is_internal
            entries[addr].append(LedgerEntry(tx.tx_hash, tx.timestamp, delta, balance[addr], sent))
    approximate = any(b < 0 for es in entries.values() for b in (e.balance for e in es))
    return BalanceLedger(dict(entries), approximate)


@dataclass
class ChangeRate:
    p: float
    addresses: int
    tx_count: int
    fingerprinting_tx_count: int
    avg_sent: float


def fingerprint_change_rate(ledger: BalanceLedger, d: int = 9, cutoff: Optional[int] = None) -> ChangeRate:
    """Share of sent transactions that alter the sender's fingerprint.

    Only addresses with between 1 and ``cutoff`` sent transactions count
    (no upper limit when ``cutoff`` is None).
    """
    if len(ledger) == 0:
        raise EmptyLedger("ledger has no addresses")
    mod = 10**d
    addresses = txs = changing = 0
    for es in ledger.entries.values():
        sent = [e for e in es if e.sent]
        if not sent or (cutoff is not None and len(sent) > cutoff):
            continue
        addresses += 1
        txs += len(sent)
        changing += sum(1 for e in sent if e.delta % mod != 0)
    if txs == 0:
        raise EmptyLedger("no sent transactions within the cutoff")
    return ChangeRate(changing / txs, addresses, txs, changing, txs / addresses)


def fit_power_law(counts: Sequence[float], x_min: float = 1.0) -> float:
    """Hill maximum-likelihood exponent ``k`` of a ``x**-k`` tail above ``x_min``."""
    x = np.asarray(counts, dtype=float)
    if np.any(x < x_min):
        raise ValueError("counts below x_min")
    if np.count_nonzero(x > x_min) < 10:
        raise DegenerateSample("need at least 10 samples above x_min")
    logs = np.log(x / x_min).sum()
    return 1.0 + len(x) / logs


def survival_probability_integral(p: float, k: float, normalized: bool = False) -> float:
    """Integral over x in [1, inf) of ``x**-k * (1-p)**x``.

    With ``normalized=True`` the result is multiplied by ``k - 1`` so that
    the power-law weight integrates to one.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must be in [0, 1]")
    if normalized and k <= 1:
        raise NonConvergent("normalized variant needs k > 1")
    scale = (k - 1) if normalized else 1.0
    if p == 1.0:
        return 0.0
    if p == 0.0:
        if k <= 1:
            raise NonConvergent("integral diverges for p = 0 and k <= 1")
        return scale / (k - 1)
    lam = -math.log1p(-p)

    def tail(X):
        bound = X ** -k * math.exp(-lam * X) / lam
        if k > 1:
            bound = min(bound, X ** (1 - k) / (k - 1) * math.exp(-lam * X))
        return bound

    X = 2.0
    while tail(X) >= TAIL_TOLERANCE:
        X *= 2.0
    f = lambda x: math.exp(-k * math.log(x) - lam * x)
    total = 0.0
    a = 1.0
    while a < X:
        b = a * 2.0
        val, _ = integrate.quad(f, a, b, epsabs=0.0, epsrel=1e-13, limit=200)
        total += val
        a = b
    return scale * total


def survival_probability_point(p: float, avg_x: float) -> float:
    """Survival chance ``(1-p)**avg_x`` of an account with ``avg_x`` transactions."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must be in [0, 1]")
    if not avg_x > 0:
        raise ValueError("avg_x must be positive")
    return (1.0 - p) ** avg_x


def fingerprint_entropy(balances: Iterable[int], d: int = 8, bins: int = 256):
    """Entropy (bits) of the fingerprint histogram on ``bins`` equal cells, and the gain
    ``log2(bins) - entropy``."""
    mod = 10**d
    idx = [fingerprint(b, d) * bins // mod for b in balances]
    if not idx:
        raise EmptyInput("no balances")
    counts = np.bincount(idx, minlength=bins).astype(float)
    q = counts[counts > 0] / counts.sum()
    h = float(-(q * np.log2(q)).sum())
    return h, math.log2(bins) - h


def fingerprint_report(ledger: BalanceLedger, d: int = 9, cutoffs: Sequence[Optional[int]] = (50, 100, 500, None),
                       k: Optional[float] = None) -> Dict[str, dict]:
    """Per-cutoff statistics with both survival estimators.

    ``k`` defaults to the Hill fit of per-address transaction counts; the
    integral estimate is None when that fit is impossible.
    """
    if k is None:
        try:
            k = fit_power_law(list(ledger.tx_counts().values()))
        except DegenerateSample:
            k = None
    report = {}
    for c in cutoffs:
        rate = fingerprint_change_rate(ledger, d, c)
        row = {
            "addresses": rate.addresses,
            "txs": rate.tx_count,
            "fingerprinting_txs": rate.fingerprinting_tx_count,
            "avg_sent": rate.avg_sent,
            "p": rate.p,
        }
        row["survival_point"] = survival_probability_point(rate.p, rate.avg_sent)
        row["survival_integral"] = survival_probability_integral(rate.p, k) if k is not None else None
        row["k"] = k
        report["all" if c is None else str(c)] = row
    return report


def write_report(path, report: Dict[str, dict], metadata: Optional[dict] = None) -> None:
    payload = {"cutoffs": report}
    if metadata:
        payload["metadata"] = metadata
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
