"""Synthetic Ethereum-like corpora with planted same-owner structure.

Users own one or two addresses, keep a habitual active hour and gas-price
level, and mostly talk to a personal circle of services and peers. Users
with two addresses get an ENS name, and some of them route funds through
mixer pools in the ways the linking heuristics look for.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List

import numpy as np

from .ingest import Transaction, write_transactions
from .tornado import GWEI, MIXERS, TornadoEvent, write_events

ETHER = 10**18
START = 1_577_836_800  # 2020-01-01 UTC
CATEGORIES = ("exchange", "gambling", "defi", "gaming", "mining")


def _hex(tag: str, n: int) -> str:
    h = hashlib.sha256(tag.encode()).hexdigest()
    while len(h) < n:
        h += hashlib.sha256(h.encode()).hexdigest()
    return "0x" + h[:n]


@dataclass
class SyntheticData:
    transactions: List[Transaction]
    ens: List[tuple]  # (name, address)
    labels: Dict[str, tuple]  # address -> (service, category)
    events: List[TornadoEvent]
    mixer_addresses: Dict[str, str] = field(default_factory=dict)

    def write(self, directory) -> Dict[str, Path]:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        paths = {
            "transactions": d / "transactions.csv",
            "ens": d / "ens_pairs.csv",
            "labels": d / "labels.csv",
            "events": d / "tornado_events.csv",
        }
        write_transactions(paths["transactions"], self.transactions)
        with open(paths["ens"], "w") as fh:
            fh.write("ens_name,address\n")
            for name, addr in self.ens:
                fh.write(f"{name},{addr}\n")
        with open(paths["labels"], "w") as fh:
            fh.write("address,service_name,category\n")
            for addr in sorted(self.labels):
                s, c = self.labels[addr]
                fh.write(f"{addr},{s},{c}\n")
        write_events(paths["events"], self.events)
        return paths


def generate(n_addresses: int = 500, seed: int = 0, days: int = 60, n_services: int = 30,
             pair_fraction: float = 0.4, mixer_users: int = 40) -> SyntheticData:
    """Build a corpus of about ``n_addresses`` user addresses plus services."""
    rng = np.random.default_rng(seed)
    counter = iter(range(10**9))
    tag = f"synthetic-{seed}"

    services = [_hex(f"{tag}-svc-{i}", 40) for i in range(n_services)]
    labels = {a: (f"service{i}", CATEGORIES[i % len(CATEGORIES)]) for i, a in enumerate(services)}
    mixer_addr = {m: _hex(f"{tag}-mixer-{m}", 40) for m in MIXERS}

    # users: one or two addresses each
    users = []
    made = 0
    while made < n_addresses:
        k = 2 if rng.random() < pair_fraction and made + 2 <= n_addresses else 1
        addrs = [_hex(f"{tag}-user-{len(users)}-{j}", 40) for j in range(k)]
        users.append(
            {
                "addrs": addrs,
                "hour": rng.uniform(0, 24),
                "spread": rng.uniform(1.0, 3.0),
                "gas_levels": rng.dirichlet([1.0, 1.0, 0.3]),
                "manual": rng.random() < 0.15,
                "circle": rng.choice(n_services, size=4, replace=False),
            }
        )
        made += k
    all_user_addrs = [a for u in users for a in u["addrs"]]
    owner = {a: i for i, u in enumerate(users) for a in u["addrs"]}
    # peers: a small friend circle shared by all addresses of a user
    for u in users:
        u["peers"] = list(rng.choice(len(all_user_addrs), size=3, replace=False))

    daily_base = rng.integers(8, 40, size=days) * GWEI
    block0 = 9_000_000

    def tx_hash():
        return _hex(f"{tag}-tx-{next(counter)}", 64)

    def gas_price(u, day):
        level = rng.choice([0.5, 1.0, 2.0], p=u["gas_levels"])
        g = int(daily_base[day] * level)
        if u["manual"]:
            return g + int(rng.integers(1, GWEI))
        return (g // GWEI) * GWEI or GWEI

    def timestamp(u):
        day = int(rng.integers(days))
        hour = (rng.normal(u["hour"], u["spread"])) % 24
        return START + day * 86400 + int(hour * 3600), day

    def value():
        if rng.random() < 0.6:
            return int(rng.integers(1, 500)) * 10**16
        return int(rng.integers(1, 5 * ETHER))

    txs = []

    def emit(frm, to, u, ts=None, val=None):
        if ts is None:
            ts, day = timestamp(u)
        else:
            day = min(max((ts - START) // 86400, 0), days - 1)
        txs.append(
            Transaction(
                tx_hash=tx_hash(),
                block_number=block0 + (ts - START) // 13,
                timestamp=ts,
                from_address=frm,
                to_address=to,
                value=value() if val is None else val,
                gas_price=gas_price(u, day),
                gas_used=21000,
            )
        )

    for ui, u in enumerate(users):
        for a in u["addrs"]:
            for _ in range(int(rng.integers(3, 25))):
                r = rng.random()
                if r < 0.55:
                    to = services[int(rng.choice(u["circle"]))]
                elif r < 0.85:
                    to = all_user_addrs[int(rng.choice(u["peers"]))]
                else:
                    to = all_user_addrs[int(rng.integers(len(all_user_addrs)))]
                if to != a:
                    emit(a, to, u)
            # inbound traffic from services (exchanges paying out)
            for _ in range(int(rng.integers(0, 4))):
                svc = services[int(rng.choice(u["circle"]))]
                emit(svc, a, u)
        if len(u["addrs"]) == 2 and rng.random() < 0.3:
            emit(u["addrs"][0], u["addrs"][1], u)

    # services also trade among themselves, keeping the graph connected
    for i, s in enumerate(services):
        emit(s, services[(i + 1) % n_services], users[0])

    # mixer usage
    events = []
    pairs = [u for u in users if len(u["addrs"]) == 2]
    rng.shuffle(pairs)
    for j, u in enumerate(pairs[:mixer_users]):
        mixer = MIXERS[int(rng.choice(4, p=[0.55, 0.25, 0.15, 0.05]))]
        dep, wd = u["addrs"]
        style = j % 4
        if style == 0:
            wd = dep  # same-address reuse
        ts_d, _ = timestamp(u)
        delay = int(rng.choice([3600 * rng.uniform(1, 20), 86400 * rng.uniform(1, 6), 86400 * rng.uniform(8, 30)],
                                 p=[0.6, 0.25, 0.15]))
        ts_w = ts_d + delay
        g_d = gas_price(u, 0)
        g_w = g_d
        if style == 1:
            g_d = g_w = int(daily_base[0]) + 1 + j * 7919  # manual, unique
        events.append(TornadoEvent(mixer, "deposit", dep, ts_d, g_d, tx_hash()))
        events.append(TornadoEvent(mixer, "withdraw", wd, ts_w, g_w, tx_hash()))
        if style == 2 and dep != wd:
            emit(dep, wd, u, ts=ts_w + 600, val=10**16)
    # unlinked background usage
    for _ in range(4 * mixer_users):
        u = users[int(rng.integers(len(users)))]
        mixer = MIXERS[int(rng.choice(4, p=[0.55, 0.25, 0.15, 0.05]))]
        a = u["addrs"][0]
        ts, _ = timestamp(u)
        kind = "deposit" if rng.random() < 0.5 else "withdraw"
        events.append(TornadoEvent(mixer, kind, a, ts, (int(daily_base[0]) // GWEI) * GWEI, tx_hash()))
    # events with the mixer contract as counterparty
    for e in events:
        if e.kind == "deposit":
            txs.append(Transaction(e.tx_hash, block0 + (e.timestamp - START) // 13, e.timestamp, e.address,
                                   mixer_addr[e.mixer], int(float(e.mixer) * ETHER), e.gas_price, 900_000))
    ens = []
    for i, u in enumerate(users):
        if len(u["addrs"]) == 2:
            for a in u["addrs"]:
                ens.append((f"user{i}.eth", a))
    events.sort(key=lambda e: (e.timestamp, e.tx_hash, e.kind))
    return SyntheticData(txs, ens, labels, events, mixer_addr)
