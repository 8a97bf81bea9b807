"""Loading, validation and normalization of transaction corpora.

Files use the CSV layouts below (JSON-lines with the same field names is
accepted for transactions):

* ``transactions.csv``: tx_hash,block_number,timestamp,from_address,to_address,
  value_wei,gas_price_wei,gas_used,is_internal
* ``ens_pairs.csv``: ens_name,address
* ``labels.csv``: address,service_name,category

Wei amounts are kept as Python integers end to end.
"""
from __future__ import annotations

import csv
import json
import logging
import os
import re
import tempfile
import threading
import time
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import requests

from .errors import (
    ApiError,
    DuplicateTxHash,
    EmptyFile,
    HttpError,
    MalformedRow,
    RateLimited,
)

logger = logging.getLogger(__name__)

TX_COLUMNS = [
    "tx_hash",
    "block_number",
    "timestamp",
    "from_address",
    "to_address",
    "value_wei",
    "gas_price_wei",
    "gas_used",
    "is_internal",
]
ENS_COLUMNS = ["ens_name", "address"]
LABEL_COLUMNS = ["address", "service_name", "category"]
SOURCES = ("twitter", "tornado", "humanitydao", "other")

UINT256_MAX = 2**256 - 1

_ADDRESS_RE = re.compile(r"^0x[0-9a-fA-F]{40}$")
_HASH_RE = re.compile(r"^0x[0-9a-fA-F]{64}$")
_UINT_RE = re.compile(r"^[0-9]+$")
_TRUE = {"1", "true", "True", "TRUE"}
_FALSE = {"0", "false", "False", "FALSE"}


@dataclass(frozen=True)
class Transaction:
    tx_hash: str
    block_number: int
    timestamp: int
    from_address: str
    to_address: Optional[str]  # None for contract creation
    value: int
    gas_price: int
    gas_used: int
    is_internal: bool = False

    def sort_key(self):
        return (
            self.block_number,
            self.tx_hash,
            self.is_internal,
            self.from_address,
            self.to_address or "",
            self.value,
        )

    @property
    def fee(self) -> int:
        """Wei paid by the sender; internal calls pay nothing themselves."""
        return 0 if self.is_internal else self.gas_used * self.gas_price


@dataclass
class AddressSet:
    """Lexicographically ordered unique addresses with a source tag each."""

    addresses: Tuple[str, ...]
    sources: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        self.addresses = tuple(sorted(set(self.addresses)))
        self.sources = {a: self.sources.get(a, "other") for a in self.addresses}
        unknown = set(self.sources.values()) - set(SOURCES)
        if unknown:
            raise ValueError(f"unknown address source(s): {sorted(unknown)}")

    def __len__(self):
        return len(self.addresses)

    def __iter__(self):
        return iter(self.addresses)

    def __contains__(self, address):
        return address in self.sources


@dataclass(frozen=True)
class GroundTruthPair:
    id_a: str
    id_b: str
    origin: str  # "ens" or "tornado-heuristic"
    label: Optional[str] = None

    def __post_init__(self):
        if self.id_a == self.id_b:
            raise ValueError("ground-truth pair needs two distinct addresses")
        if self.id_a > self.id_b:
            a, b = self.id_b, self.id_a
            object.__setattr__(self, "id_a", a)
            object.__setattr__(self, "id_b", b)


@dataclass(frozen=True)
class ServiceLabel:
    service: str
    category: str


@dataclass
class ServiceLabelMap:
    labels: Dict[str, ServiceLabel]
    categories: frozenset

    def __post_init__(self):
        bad = {l.category for l in self.labels.values()} - set(self.categories)
        if bad:
            raise ValueError(f"categories outside the declared set: {sorted(bad)}")

    def __len__(self):
        return len(self.labels)

    def get(self, address):
        return self.labels.get(address)


# --------------------------------------------------------------------------
# field parsing

def normalize_address(value: str) -> str:
    """Lowercase a 20-byte hex address; EIP-55 checksums are dropped."""
    value = value.strip()
    if not _ADDRESS_RE.match(value):
        raise ValueError(f"invalid address {value!r}")
    return value.lower()


def _parse_uint(value, name, limit=UINT256_MAX):
    s = str(value).strip()
    if not _UINT_RE.match(s):
        raise ValueError(f"{name} is not a non-negative integer: {value!r}")
    n = int(s)
    if n > limit:
        raise ValueError(f"{name} exceeds 256 bits")
    return n


def _parse_bool(value, name):
    s = str(value).strip()
    if s in _TRUE:
        return True
    if s in _FALSE:
        return False
    raise ValueError(f"{name} is not a boolean: {value!r}")


def transaction_from_record(rec: Mapping[str, object]) -> Transaction:
    """Build a validated Transaction from a mapping keyed by TX_COLUMNS."""
    missing = [c for c in TX_COLUMNS if c not in rec]
    if missing:
        raise ValueError(f"missing field(s) {missing}")
    tx_hash = str(rec["tx_hash"]).strip()
    if not _HASH_RE.match(tx_hash):
        raise ValueError(f"invalid tx_hash {tx_hash!r}")
    timestamp = _parse_uint(rec["timestamp"], "timestamp")
    if timestamp <= 0:
        raise ValueError("timestamp must be positive")
    to_raw = rec["to_address"]
    to_address = None if to_raw in (None, "") else normalize_address(str(to_raw))
    return Transaction(
        tx_hash=tx_hash.lower(),
        block_number=_parse_uint(rec["block_number"], "block_number"),
        timestamp=timestamp,
        from_address=normalize_address(str(rec["from_address"])),
        to_address=to_address,
        value=_parse_uint(rec["value_wei"], "value_wei"),
        gas_price=_parse_uint(rec["gas_price_wei"], "gas_price_wei"),
        gas_used=_parse_uint(rec["gas_used"], "gas_used"),
        is_internal=_parse_bool(rec["is_internal"], "is_internal"),
    )


def transaction_to_record(tx: Transaction) -> Dict[str, str]:
    return {
        "tx_hash": tx.tx_hash,
        "block_number": str(tx.block_number),
        "timestamp": str(tx.timestamp),
        "from_address": tx.from_address,
        "to_address": tx.to_address or "",
        "value_wei": str(tx.value),
        "gas_price_wei": str(tx.gas_price),
        "gas_used": str(tx.gas_used),
        "is_internal": "true" if tx.is_internal else "false",
    }


def _dedupe_and_sort(rows: Iterable[Tuple[int, Transaction]]) -> List[Transaction]:
    # Internal calls legitimately share the parent's hash; only exact
    # repeats of those are rejected.
    seen_external = {}
    seen_internal = set()
    out = []
    for line, tx in rows:
        if tx.is_internal:
            key = tx.sort_key()
            if key in seen_internal:
                raise DuplicateTxHash(f"line {line}: duplicate internal transaction {tx.tx_hash}")
            seen_internal.add(key)
        else:
            if tx.tx_hash in seen_external:
                raise DuplicateTxHash(
                    f"line {line}: tx_hash {tx.tx_hash} already seen on line {seen_external[tx.tx_hash]}"
                )
            seen_external[tx.tx_hash] = line
        out.append(tx)
    out.sort(key=Transaction.sort_key)
    return out


def load_transactions(path) -> List[Transaction]:
    """Read a transactions file (CSV, or JSON-lines for ``.jsonl``/``.ndjson``).

    Returns transactions sorted by ``(block_number, tx_hash)``. Raises
    MalformedRow for the first invalid row, DuplicateTxHash for a repeated
    hash and EmptyFile when there are no data rows.
    """
    path = Path(path)
    if path.suffix in (".jsonl", ".ndjson"):
        rows = _read_jsonl(path)
    else:
        rows = _read_csv(path)
    if not rows:
        raise EmptyFile(f"{path}: no transactions")
    return _dedupe_and_sort(rows)


def _read_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyFile(f"{path}: empty file") from None
        if [h.strip() for h in header] != TX_COLUMNS:
            raise MalformedRow(1, f"header must be {','.join(TX_COLUMNS)}")
        rows = []
        for line, values in enumerate(reader, start=2):
            if not values:
                continue
            if len(values) != len(TX_COLUMNS):
                raise MalformedRow(line, f"expected {len(TX_COLUMNS)} fields, got {len(values)}")
            try:
                rows.append((line, transaction_from_record(dict(zip(TX_COLUMNS, values)))))
            except ValueError as exc:
                raise MalformedRow(line, str(exc)) from None
    return rows


def _read_jsonl(path):
    rows = []
    with open(path) as fh:
        for line, text in enumerate(fh, start=1):
            if not text.strip():
                continue
            try:
                rec = json.loads(text)
                if not isinstance(rec, dict):
                    raise ValueError("row is not an object")
                rows.append((line, transaction_from_record(rec)))
            except ValueError as exc:
                raise MalformedRow(line, str(exc)) from None
    return rows


def write_transactions(path, txs: Sequence[Transaction]) -> None:
    """Write transactions in canonical CSV form (sorted, lowercase, true/false)."""
    txs = sorted(txs, key=Transaction.sort_key)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=TX_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for tx in txs:
            writer.writerow(transaction_to_record(tx))


def load_ens_pairs(path) -> List[GroundTruthPair]:
    """Same-owner address pairs from ENS names with exactly two addresses.

    Addresses registered under more than one name are dropped before pairing.
    """
    by_name = defaultdict(set)
    names_of = defaultdict(set)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise EmptyFile(f"{path}: empty file")
        if [h.strip() for h in header] != ENS_COLUMNS:
            raise MalformedRow(1, f"header must be {','.join(ENS_COLUMNS)}")
        for line, values in enumerate(reader, start=2):
            if not values:
                continue
            if len(values) != 2:
                raise MalformedRow(line, "expected 2 fields")
            name = values[0].strip()
            try:
                addr = normalize_address(values[1])
            except ValueError as exc:
                raise MalformedRow(line, str(exc)) from None
            by_name[name].add(addr)
            names_of[addr].add(name)
    shared = {a for a, names in names_of.items() if len(names) > 1}
    pairs = []
    for name in sorted(by_name):
        if by_name[name] & shared:
            continue
        addrs = sorted(by_name[name])
        if len(addrs) == 2:
            pairs.append(GroundTruthPair(addrs[0], addrs[1], "ens", name))
    return pairs


def load_labels(path, categories: Optional[Iterable[str]] = None) -> ServiceLabelMap:
    """Read service labels; ``categories`` declares the closed category set."""
    labels = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise EmptyFile(f"{path}: empty file")
        if [h.strip() for h in header] != LABEL_COLUMNS:
            raise MalformedRow(1, f"header must be {','.join(LABEL_COLUMNS)}")
        for line, values in enumerate(reader, start=2):
            if not values:
                continue
            if len(values) != 3:
                raise MalformedRow(line, "expected 3 fields")
            try:
                addr = normalize_address(values[0])
            except ValueError as exc:
                raise MalformedRow(line, str(exc)) from None
            labels[addr] = ServiceLabel(values[1].strip(), values[2].strip())
    if categories is None:
        categories = {l.category for l in labels.values()}
    return ServiceLabelMap(labels, frozenset(categories))


# --------------------------------------------------------------------------
# corpus queries

def filter_active_addresses(
    txs: Iterable[Transaction], min_sent: int, sources: Optional[Mapping[str, str]] = None
) -> AddressSet:
    """Addresses that sent at least ``min_sent`` non-internal transactions."""
    if min_sent < 1:
        raise ValueError("min_sent must be >= 1")
    sent = Counter(tx.from_address for tx in txs if not tx.is_internal)
    keep = [a for a, n in sent.items() if n >= min_sent]
    tags = {a: (sources or {}).get(a, "other") for a in keep}
    return AddressSet(tuple(keep), tags)


def service_exposure(
    addresses: Iterable[str], labels: ServiceLabelMap, txs: Iterable[Transaction]
) -> Dict[str, float]:
    """Fraction of ``addresses`` with at least one transaction per service category."""
    if len(labels) == 0:
        raise ValueError("service label map is empty")
    addresses = set(addresses)
    touched = defaultdict(set)
    for tx in txs:
        ends = (tx.from_address, tx.to_address)
        for me, other in (ends, ends[::-1]):
            if me in addresses and other is not None:
                label = labels.get(other)
                if label is not None:
                    touched[label.category].add(me)
    n = len(addresses)
    return {c: (len(touched[c]) / n if n else 0.0) for c in sorted(labels.categories)}


# --------------------------------------------------------------------------
# explorer API client

@dataclass
class ApiConfig:
    url: str
    api_key: str
    cache_dir: Path
    max_rps: float = 5.0
    page_size: int = 10000
    max_retries: int = 5
    backoff: float = 0.5
    timeout: float = 30.0

    @classmethod
    def from_env(cls, environ: Optional[Mapping[str, str]] = None, **overrides) -> "ApiConfig":
        env = os.environ if environ is None else environ
        missing = [
            k for k in ("CHAINPROFILER_API_URL", "CHAINPROFILER_API_KEY") if not env.get(k)
        ]
        if missing:
            raise ValueError(f"missing environment variable(s): {', '.join(missing)}")
        cache = env.get("CHAINPROFILER_CACHE_DIR") or os.path.join(
            os.path.expanduser("~"), ".cache", "chainprofiler"
        )
        return cls(
            url=env["CHAINPROFILER_API_URL"],
            api_key=env["CHAINPROFILER_API_KEY"],
            cache_dir=Path(cache),
            **overrides,
        )


class ApiClient:
    """Etherscan-compatible account API client with rate limit and file cache.

    Requests are serialized through one lock so the configured ceiling holds
    across threads. HTTP 429 and explorer "rate limit" replies are retried
    with exponential backoff; after ``max_retries`` RateLimited is raised.
    """

    def __init__(self, config: ApiConfig, session: Optional[requests.Session] = None, sleep=time.sleep):
        if not config.api_key:
            raise ValueError("API key not configured")
        self.config = config
        self.session = session or requests.Session()
        self.request_count = 0
        self._sleep = sleep
        self._lock = threading.Lock()
        self._last = 0.0

    # cache ---------------------------------------------------------------
    def _cache_path(self, address):
        return Path(self.config.cache_dir) / f"{address}.json"

    def _read_cache(self, address):
        path = self._cache_path(address)
        if not path.exists():
            return None
        with open(path) as fh:
            records = json.load(fh)
        return [transaction_from_record(r) for r in records]

    def _write_cache(self, address, txs):
        directory = Path(self.config.cache_dir)
        directory.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=directory, prefix=f".{address}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "w") as fh:
                json.dump([transaction_to_record(t) for t in txs], fh)
            os.replace(tmp, self._cache_path(address))
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    # http ----------------------------------------------------------------
    def _throttle(self):
        interval = 1.0 / self.config.max_rps
        wait = self._last + interval - time.monotonic()
        if wait > 0:
            self._sleep(wait)
        self._last = time.monotonic()

    def _get(self, params):
        params = dict(params, apikey=self.config.api_key)
        for attempt in range(self.config.max_retries + 1):
            with self._lock:
                self._throttle()
                self.request_count += 1
                resp = self.session.get(self.config.url, params=params, timeout=self.config.timeout)
            limited = resp.status_code == 429
            if not limited and resp.status_code != 200:
                raise HttpError(resp.status_code, resp.reason or "")
            if not limited:
                payload = resp.json()
                status = str(payload.get("status", "1"))
                result = payload.get("result")
                if status == "1":
                    return result or []
                message = str(payload.get("message", ""))
                if isinstance(result, list) and not result and "no transactions" in message.lower():
                    return []
                text = f"{message}: {result}" if isinstance(result, str) else message
                if "rate limit" not in text.lower():
                    raise ApiError(text)
            delay = self.config.backoff * 2**attempt
            logger.warning("rate limited, retrying in %.2fs", delay)
            self._sleep(delay)
        raise RateLimited(f"gave up after {self.config.max_retries} retries")

    def _paged(self, action, address):
        out = []
        page = 1
        while True:
            rows = self._get(
                {
                    "module": "account",
                    "action": action,
                    "address": address,
                    "startblock": 0,
                    "endblock": 99999999,
                    "page": page,
                    "offset": self.config.page_size,
                    "sort": "asc",
                }
            )
            out.extend(rows)
            if len(rows) < self.config.page_size:
                return out
            page += 1

    def address_history(self, address: str) -> List[Transaction]:
        address = normalize_address(address)
        cached = self._read_cache(address)
        if cached is not None:
            return cached
        normal = self._paged("txlist", address)
        internal = self._paged("txlistinternal", address)
        txs = _explorer_rows_to_transactions(normal, internal)
        self._write_cache(address, txs)
        return txs


def _explorer_rows_to_transactions(normal, internal) -> List[Transaction]:
    seen = set()
    out = []
    gas_price_of = {}
    for row in normal:
        key = (row["hash"].lower(), None)
        if key in seen:
            continue
        seen.add(key)
        tx = transaction_from_record(
            {
                "tx_hash": row["hash"],
                "block_number": row["blockNumber"],
                "timestamp": row["timeStamp"],
                "from_address": row["from"],
                "to_address": row.get("to") or "",
                "value_wei": row["value"],
                "gas_price_wei": row.get("gasPrice", "0"),
                "gas_used": row.get("gasUsed", "0"),
                "is_internal": "false",
            }
        )
        gas_price_of[tx.tx_hash] = tx.gas_price
        out.append(tx)
    position = Counter()
    for row in internal:
        h = row["hash"].lower()
        trace = row.get("traceId")
        if not trace:
            trace = str(position[h])
        position[h] += 1
        key = (h, trace)
        if key in seen:
            continue
        seen.add(key)
        out.append(
            transaction_from_record(
                {
                    "tx_hash": h,
                    "block_number": row["blockNumber"],
                    "timestamp": row["timeStamp"],
                    "from_address": row["from"],
                    "to_address": row.get("to") or "",
                    "value_wei": row["value"],
                    "gas_price_wei": gas_price_of.get(h, 0),
                    "gas_used": row.get("gasUsed", "0") or "0",
                    "is_internal": "true",
                }
            )
        )
    out.sort(key=Transaction.sort_key)
    return out


def fetch_address_history(client, address: str) -> List[Transaction]:
    """Normal and internal transactions of ``address``, served from cache when present.

    ``client`` is an ApiClient or an ApiConfig (a fresh client is built).
    """
    if isinstance(client, ApiConfig):
        client = ApiClient(client)
    return client.address_history(address)
