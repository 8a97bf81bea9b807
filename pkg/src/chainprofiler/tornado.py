"""Mixer deposit/withdraw linking and anonymity-set statistics.

Events arrive pre-extracted, one row per deposit or withdraw. For relayed
withdraws the event address is the recipient; the relayer never appears.

Linking heuristics, always within one mixer pool:

1. the same address both deposited and withdrew;
2. a deposit and a later withdraw share a manually set gas price (not a
   whole number of gwei) that occurs on no other deposit or withdraw;
3. the deposit and withdraw addresses transacted with each other directly.
"""
from __future__ import annotations

import csv
from collections import Counter, defaultdict
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

import numpy as np

from .ingest import GroundTruthPair, Transaction, normalize_address

GWEI = 10**9
DAY = 86_400
WEEK = 7 * DAY
WINDOWS = {"day": DAY, "week": WEEK, "past": None}
MIXERS = ("0.1", "1", "10", "100")
_MIXER_BY_VALUE = {Decimal(m): m for m in MIXERS}

EVENT_COLUMNS = ["mixer", "kind", "address", "timestamp", "gas_price_wei", "tx_hash"]
LINK_COLUMNS = ["mixer", "heuristic", "deposit_tx", "withdraw_tx", "deposit_addr", "withdraw_addr",
                "elapsed_seconds"]


def normalize_mixer(value) -> str:
    try:
        m = _MIXER_BY_VALUE.get(Decimal(str(value).strip()))
    except InvalidOperation:
        m = None
    if m is None:
        raise ValueError(f"unknown mixer pool {value!r}; expected one of {MIXERS}")
    return m


@dataclass(frozen=True)
class TornadoEvent:
    mixer: str
    kind: str  # "deposit" | "withdraw"
    address: str
    timestamp: int
    gas_price: int
    tx_hash: str

    def __post_init__(self):
        if self.kind not in ("deposit", "withdraw"):
            raise ValueError(f"event kind must be deposit or withdraw, not {self.kind!r}")
        if self.timestamp <= 0:
            raise ValueError("timestamp must be positive")

    @property
    def key(self):
        return (self.kind, self.address, self.tx_hash)


@dataclass(frozen=True)
class Link:
    deposit: TornadoEvent
    withdraw: TornadoEvent
    heuristic: int

    @property
    def mixer(self):
        return self.deposit.mixer

    @property
    def elapsed(self) -> int:
        return self.withdraw.timestamp - self.deposit.timestamp

    @property
    def pair_key(self):
        return (self.deposit.tx_hash, self.withdraw.tx_hash)


def _by_mixer(events: Iterable[TornadoEvent]):
    pools = defaultdict(lambda: ([], []))
    for e in events:
        pools[e.mixer][0 if e.kind == "deposit" else 1].append(e)
    return {m: pools[m] for m in sorted(pools)}


def _sorted_links(links):
    return sorted(links, key=lambda l: (l.mixer, l.heuristic, l.withdraw.timestamp, l.withdraw.tx_hash,
                                        l.deposit.timestamp, l.deposit.tx_hash))


def is_manual_gas_price(gas_price: int) -> bool:
    return gas_price % GWEI != 0


def heuristic1(events: Iterable[TornadoEvent]) -> List[Link]:
    """Deposit and withdraw from the same address in the same pool."""
    links = []
    for deposits, withdraws in _by_mixer(events).values():
        by_addr = defaultdict(list)
        for w in withdraws:
            by_addr[w.address].append(w)
        for d in deposits:
            for w in by_addr.get(d.address, ()):
                links.append(Link(d, w, 1))
    return _sorted_links(links)


def heuristic2(events: Iterable[TornadoEvent], scope: str = "pool") -> List[Link]:
    """Unique manual gas price shared by one deposit and one later withdraw.

    ``scope="global"`` requires the price to be unique across all pools
    rather than within the pool; links still stay inside one pool.
    """
    if scope not in ("pool", "global"):
        raise ValueError("scope must be 'pool' or 'global'")
    events = list(events)
    manual = [e for e in events if is_manual_gas_price(e.gas_price)]
    count = Counter(
        (e.mixer if scope == "pool" else None, e.kind, e.gas_price) for e in manual
    )
    links = []
    pools = _by_mixer(manual)
    for mixer, (deposits, withdraws) in pools.items():
        scope_key = mixer if scope == "pool" else None
        w_by_price = {w.gas_price: w for w in withdraws}
        for d in deposits:
            g = d.gas_price
            if count[(scope_key, "deposit", g)] != 1 or count[(scope_key, "withdraw", g)] != 1:
                continue
            w = w_by_price.get(g)
            if w is not None and d.timestamp < w.timestamp:
                links.append(Link(d, w, 2))
    return _sorted_links(links)


def interaction_pairs(corpus: Iterable[Transaction], exclude: Iterable[str] = ()) -> Set[Tuple[str, str]]:
    """Unordered address pairs with at least one transaction between them."""
    exclude = set(exclude)
    pairs = set()
    for tx in corpus:
        a, b = tx.from_address, tx.to_address
        if b is None or a == b or a in exclude or b in exclude:
            continue
        pairs.add((a, b) if a < b else (b, a))
    return pairs


def heuristic3(events: Iterable[TornadoEvent], corpus: Iterable[Transaction],
               mixer_addresses: Iterable[str] = ()) -> List[Link]:
    """Deposit and withdraw addresses that transacted with each other directly."""
    neighbors = defaultdict(set)
    for a, b in interaction_pairs(corpus, mixer_addresses):
        neighbors[a].add(b)
        neighbors[b].add(a)
    links = []
    for deposits, withdraws in _by_mixer(events).values():
        by_addr = defaultdict(list)
        for w in withdraws:
            by_addr[w.address].append(w)
        for d in deposits:
            for other in sorted(neighbors.get(d.address, ())):
                for w in by_addr.get(other, ()):
                    links.append(Link(d, w, 3))
    return _sorted_links(links)


def all_links(events, corpus, mixer_addresses=(), h2_scope="pool") -> List[Link]:
    events = list(events)
    return _sorted_links(
        heuristic1(events) + heuristic2(events, h2_scope) + heuristic3(events, corpus, mixer_addresses)
    )


def heuristic_table(events: Sequence[TornadoEvent], links: Sequence[Link]) -> Dict[str, Dict[str, int]]:
    """Per pool: distinct withdraws linked by each heuristic, their union, and all withdraws."""
    table = {}
    pools = _by_mixer(events)
    for mixer, (_, withdraws) in pools.items():
        mine = [l for l in links if l.mixer == mixer]
        row = {f"h{h}": len({l.withdraw.tx_hash for l in mine if l.heuristic == h}) for h in (1, 2, 3)}
        row["total"] = len({l.withdraw.tx_hash for l in mine})
        row["withdraws"] = len({w.tx_hash for w in withdraws})
        table[mixer] = row
    return table


def _in_window(link: Link, window: str) -> bool:
    if window not in WINDOWS:
        raise ValueError(f"window must be one of {list(WINDOWS)}")
    limit = WINDOWS[window]
    if limit is None:
        return True
    return 0 <= link.elapsed <= limit


def ground_truth_links(links: Iterable[Link], window: str = "past") -> List[Link]:
    """Heuristic 2-3 links inside ``window``, one per deposit/withdraw event pair."""
    seen = {}
    for l in links:
        if l.heuristic == 1 or l.deposit.address == l.withdraw.address:
            continue
        if not _in_window(l, window):
            continue
        seen.setdefault(l.pair_key, l)
    return _sorted_links(seen.values())


def build_ground_truth(links: Iterable[Link], window: str = "past") -> List[GroundTruthPair]:
    """Deposit/withdraw address pairs for evaluation; ``label`` is the pool."""
    out = {}
    for l in ground_truth_links(links, window):
        p = GroundTruthPair(l.deposit.address, l.withdraw.address, "tornado-heuristic", l.mixer)
        out[(p.id_a, p.id_b, p.label)] = p
    return [out[k] for k in sorted(out)]


@dataclass
class WithdrawTask:
    """One withdraw to deanonymize: its address, true depositor and the deposit candidates."""

    mixer: str
    withdraw: TornadoEvent
    truth: str
    candidates: Tuple[str, ...]


def withdraw_tasks(events: Sequence[TornadoEvent], links: Iterable[Link], window: str = "past") -> List[WithdrawTask]:
    """Candidate deposit addresses for every ground-truth withdraw.

    Candidates are the pool's depositors no later than the withdraw (and not
    earlier than the window allows). When several ground-truth deposits
    match one withdraw, the most recent one is the truth.
    """
    limit = WINDOWS[window]
    truth_of = {}
    for l in ground_truth_links(links, window):
        if l.elapsed < 0:
            continue
        best = truth_of.get(l.withdraw.tx_hash)
        if best is None or l.elapsed < best.elapsed:
            truth_of[l.withdraw.tx_hash] = l
    pools = _by_mixer(events)
    tasks = []
    for wtx in sorted(truth_of, key=lambda h: (truth_of[h].mixer, truth_of[h].withdraw.timestamp, h)):
        l = truth_of[wtx]
        w = l.withdraw
        deposits = pools[l.mixer][0]
        cands = {
            d.address
            for d in deposits
            if d.timestamp <= w.timestamp and (limit is None or w.timestamp - d.timestamp <= limit)
        }
        cands.discard(w.address)
        if l.deposit.address in cands:
            tasks.append(WithdrawTask(l.mixer, w, l.deposit.address, tuple(sorted(cands))))
    return tasks


def anonymity_series(events: Iterable[TornadoEvent], links: Iterable[Link]) -> Dict[str, List[Tuple[int, int, int]]]:
    """Per pool, at each distinct event time: (t, cumulative deposits, reduced).

    ``reduced`` subtracts deposits already linked by some heuristic, a link
    counting from the moment both of its events have happened.
    """
    known_at = {}
    for l in links:
        t = max(l.deposit.timestamp, l.withdraw.timestamp)
        key = (l.mixer, l.deposit.tx_hash)
        known_at[key] = min(known_at.get(key, t), t)
    series = {}
    for mixer, (deposits, withdraws) in _by_mixer(events).items():
        times = sorted({e.timestamp for e in deposits + withdraws})
        dep_times = np.sort([d.timestamp for d in {d.tx_hash: d for d in deposits}.values()])
        link_times = np.sort([t for (m, _), t in known_at.items() if m == mixer])
        rows = []
        for t in times:
            cum = int(np.searchsorted(dep_times, t, side="right"))
            linked = int(np.searchsorted(link_times, t, side="right"))
            rows.append((t, cum, cum - linked))
        series[mixer] = rows
    return series


def reuse_histogram(events: Iterable[TornadoEvent], mixer: Optional[str] = None) -> Dict[int, int]:
    """Number of addresses by how many withdraws they received within a pool."""
    per_addr = Counter(
        (e.mixer, e.address) for e in events if e.kind == "withdraw" and (mixer is None or e.mixer == mixer)
    )
    return dict(sorted(Counter(per_addr.values()).items()))


def mixing_delay_distribution(links: Iterable[Link]) -> np.ndarray:
    """Counts of linked pairs per whole elapsed day (bin 0 is under 24h)."""
    days = [l.elapsed // DAY for l in links if l.elapsed >= 0]
    if not days:
        return np.zeros(0, dtype=int)
    return np.bincount(days)


# --------------------------------------------------------------------------
# files

def load_events(path) -> List[TornadoEvent]:
    events = []
    seen = set()
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r, None)
        if header is None or [h.strip() for h in header] != EVENT_COLUMNS:
            raise ValueError(f"{path}: header must be {','.join(EVENT_COLUMNS)}")
        for line, row in enumerate(r, start=2):
            if not row:
                continue
            try:
                rec = dict(zip(EVENT_COLUMNS, row))
                e = TornadoEvent(
                    mixer=normalize_mixer(rec["mixer"]),
                    kind=rec["kind"].strip(),
                    address=normalize_address(rec["address"]),
                    timestamp=int(rec["timestamp"]),
                    gas_price=int(rec["gas_price_wei"]),
                    tx_hash=rec["tx_hash"].strip().lower(),
                )
            except (ValueError, KeyError) as exc:
                raise ValueError(f"{path}:{line}: {exc}") from None
            if e.key in seen:
                raise ValueError(f"{path}:{line}: duplicate event {e.key}")
            seen.add(e.key)
            events.append(e)
    events.sort(key=lambda e: (e.timestamp, e.tx_hash, e.kind))
    return events


def write_events(path, events: Iterable[TornadoEvent]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EVENT_COLUMNS)
        for e in sorted(events, key=lambda e: (e.timestamp, e.tx_hash, e.kind)):
            w.writerow([e.mixer, e.kind, e.address, e.timestamp, e.gas_price, e.tx_hash])


def write_links(path, links: Iterable[Link]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LINK_COLUMNS)
        for l in _sorted_links(links):
            w.writerow([l.mixer, l.heuristic, l.deposit.tx_hash, l.withdraw.tx_hash,
                        l.deposit.address, l.withdraw.address, l.elapsed])


def write_series(path, series: Mapping[str, Sequence[Tuple[int, int, int]]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["mixer", "t", "cumulative_deposits", "reduced"])
        for mixer in sorted(series):
            for t, cum, red in series[mixer]:
                w.writerow([mixer, t, cum, red])
