"""Domain types, the on-disk dataset layout, and follower-snapshot differencing.

Dataset layout (UTF-8, line-delimited JSON unless noted)::

    accounts.jsonl              one AccountDossier per line
    merchants.jsonl             one Merchant per line
    snapshots/<account_id>.jsonl  one {"ts", "follower_ids"} per line
    labels.csv                  account_id,label  (suspicious | legitimate)
    lexicons/spam_words.txt     optional, one entry per line, '#' comments
    lexicons/url_blacklist.txt  optional, same format
    meta.json                   optional, {"observed_at", "window_start"}
"""
from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import dataclass, field
from datetime import date, datetime, timezone
from pathlib import Path
from typing import Iterable, Mapping, Sequence

SUSPICIOUS = "suspicious"
LEGITIMATE = "legitimate"
LABELS = (SUSPICIOUS, LEGITIMATE)


class InsufficientDataError(ValueError):
    """Raised when an operation gets fewer observations than it needs."""


class DatasetError(ValueError):
    """Raised by :meth:`Dataset.raise_for_errors` when parsing found problems."""

    def __init__(self, issues: Sequence["Issue"]):
        self.issues = tuple(issues)
        head = "; ".join(str(i) for i in self.issues[:5])
        more = f" (+{len(self.issues) - 5} more)" if len(self.issues) > 5 else ""
        super().__init__(f"{len(self.issues)} dataset error(s): {head}{more}")


@dataclass(frozen=True)
class Issue:
    file: str
    line: int
    reason: str

    def __str__(self) -> str:
        return f"{self.file}:{self.line}: {self.reason}"


# -- timestamps ---------------------------------------------------------------

def parse_ts(value: str) -> datetime:
    if not isinstance(value, str):
        raise ValueError(f"timestamp must be a string, got {type(value).__name__}")
    text = value.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def format_ts(ts: datetime) -> str:
    ts = ts.astimezone(timezone.utc)
    if ts.microsecond:
        return ts.strftime("%Y-%m-%dT%H:%M:%S.%fZ")
    return ts.strftime("%Y-%m-%dT%H:%M:%SZ")


# -- domain types ---------------------------------------------------------------

@dataclass(frozen=True)
class TweetRecord:
    timestamp: datetime
    text: str = ""
    hashtags: tuple[str, ...] = ()
    mentions: tuple[str, ...] = ()
    is_retweet: bool = False
    retweeted_of: str | None = None
    languages: frozenset[str] = frozenset()

    def __post_init__(self):
        if self.is_retweet and not self.retweeted_of:
            raise ValueError("retweet without retweeted_of")


@dataclass(frozen=True)
class AccountDossier:
    account_id: str
    created_at: datetime
    bio: str | None = None
    bio_urls: tuple[str, ...] = ()
    post_count: int = 0
    listed: bool = False
    verified: bool = False
    follower_count: int = 0
    friend_count: int = 0
    follower_ids: frozenset[str] = frozenset()
    friend_ids: frozenset[str] = frozenset()
    tweets: tuple[TweetRecord, ...] = ()
    reputation_score: float | None = None

    def __post_init__(self):
        if self.follower_count < 0 or self.friend_count < 0 or self.post_count < 0:
            raise ValueError("negative count")
        if self.reputation_score is not None and not 0.0 <= self.reputation_score <= 100.0:
            raise ValueError(f"reputation_score {self.reputation_score} outside [0, 100]")
        for a, b in zip(self.tweets, self.tweets[1:]):
            if b.timestamp < a.timestamp:
                raise ValueError("tweets not ordered by timestamp")


@dataclass(frozen=True)
class SnapshotSeries:
    subject_id: str
    snapshots: tuple[tuple[datetime, frozenset[str]], ...]

    def __post_init__(self):
        for (a, _), (b, _) in zip(self.snapshots, self.snapshots[1:]):
            if b <= a:
                raise ValueError("snapshot timestamps not strictly increasing")

    @property
    def timestamps(self) -> list[datetime]:
        return [ts for ts, _ in self.snapshots]

    def follower_counts(self) -> list[int]:
        return [len(ids) for _, ids in self.snapshots]


@dataclass(frozen=True)
class FollowDelta:
    interval: tuple[datetime | None, datetime | None]
    gained: frozenset[str]
    lost: frozenset[str]


@dataclass(frozen=True)
class Promise:
    promise_id: str
    expect: float
    unit: str = ""


@dataclass(frozen=True)
class Merchant:
    merchant_id: str
    schemes: frozenset[str]
    promises: tuple[Promise, ...] = ()
    performances: tuple[tuple[str, float], ...] = ()
    traffic_rank: int = 1
    promo_tweet_count: int = 0
    has_twitter_profile: bool = False
    # observed customers (freemium merchants list them publicly)
    customer_ids: tuple[str, ...] = ()
    # our own subscribed account, whose follower snapshots track retention
    dummy_account_id: str | None = None

    def __post_init__(self):
        if not self.schemes <= {"freemium", "premium"}:
            raise ValueError(f"unknown scheme in {sorted(self.schemes)}")
        if self.traffic_rank < 1:
            raise ValueError("traffic_rank must be >= 1")
        if self.promo_tweet_count < 0:
            raise ValueError("promo_tweet_count must be >= 0")
        known = {p.promise_id for p in self.promises}
        for pid, _ in self.performances:
            if pid not in known:
                raise ValueError(f"performance for unknown promise {pid!r}")


@dataclass(frozen=True)
class Dataset:
    accounts: Mapping[str, AccountDossier] = field(default_factory=dict)
    merchants: Mapping[str, Merchant] = field(default_factory=dict)
    series: Mapping[str, SnapshotSeries] = field(default_factory=dict)
    labels: Mapping[str, str] = field(default_factory=dict)
    spam_words: frozenset[str] = frozenset()
    url_blacklist: frozenset[str] = frozenset()
    observed_at: datetime | None = None
    window_start: datetime | None = None
    errors: tuple[Issue, ...] = ()

    def raise_for_errors(self) -> "Dataset":
        if self.errors:
            raise DatasetError(self.errors)
        return self

    def reference_time(self) -> datetime:
        """Experiment time used for time-since-last-tweet."""
        if self.observed_at is not None:
            return self.observed_at
        stamps = [s.snapshots[-1][0] for s in self.series.values() if s.snapshots]
        stamps += [t.timestamp for a in self.accounts.values() for t in a.tweets[-1:]]
        if not stamps:
            raise InsufficientDataError("dataset has no timestamps to anchor 'now'")
        return max(stamps)

    def window_seconds(self) -> float:
        start = self.window_start
        if start is None:
            firsts = [s.snapshots[0][0] for s in self.series.values() if s.snapshots]
            if not firsts:
                return 0.0
            start = min(firsts)
        return max((self.reference_time() - start).total_seconds(), 0.0)


# -- snapshot differencing ------------------------------------------------------

def diff_snapshots(prev: Iterable[str], next_: Iterable[str],
                   interval: tuple[datetime | None, datetime | None] = (None, None)) -> FollowDelta:
    prev, next_ = frozenset(prev), frozenset(next_)
    return FollowDelta(interval=interval, gained=next_ - prev, lost=prev - next_)


def _day_index(ts: datetime, origin: date) -> int:
    return (ts.astimezone(timezone.utc).date() - origin).days


def daily_unfollow_counts(series: SnapshotSeries) -> list[tuple[int, int]]:
    """Per-UTC-day count of followers lost between consecutive snapshots.

    Each diff is charged to the calendar day of its later snapshot. Days are
    indexed from the first snapshot's day; every day in the observed span is
    present, including those without losses.
    """
    snaps = series.snapshots
    if len(snaps) < 2:
        raise InsufficientDataError(
            f"{series.subject_id}: need >= 2 snapshots, got {len(snaps)}")
    origin = snaps[0][0].astimezone(timezone.utc).date()
    n_days = _day_index(snaps[-1][0], origin) + 1
    counts = [0] * n_days
    for (t0, a), (t1, b) in zip(snaps, snaps[1:]):
        counts[_day_index(t1, origin)] += len(a - b)
    return list(enumerate(counts))


# -- parsing --------------------------------------------------------------------

def load_lexicon(path: str | os.PathLike) -> frozenset[str]:
    """One entry per line; blank lines and '#' comments ignored; case-folded."""
    words = set()
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if line:
                words.add(line.casefold())
    return frozenset(words)


def _tweet_from_json(d: dict) -> TweetRecord:
    return TweetRecord(
        timestamp=parse_ts(d["ts"]),
        text=d.get("text") or "",
        hashtags=tuple(d.get("hashtags") or ()),
        mentions=tuple(d.get("mentions") or ()),
        is_retweet=bool(d.get("is_retweet", False)),
        retweeted_of=d.get("retweeted_of"),
        languages=frozenset(d.get("languages") or ()),
    )


def account_from_json(d: dict) -> AccountDossier:
    rep = d.get("reputation_score")
    return AccountDossier(
        account_id=str(d["account_id"]),
        created_at=parse_ts(d["created_at"]),
        bio=d.get("bio"),
        bio_urls=tuple(d.get("bio_urls") or ()),
        post_count=int(d.get("post_count", 0)),
        listed=bool(d.get("listed", False)),
        verified=bool(d.get("verified", False)),
        follower_count=int(d.get("follower_count", 0)),
        friend_count=int(d.get("friend_count", 0)),
        follower_ids=frozenset(d.get("follower_ids") or ()),
        friend_ids=frozenset(d.get("friend_ids") or ()),
        tweets=tuple(_tweet_from_json(t) for t in d.get("tweets") or ()),
        reputation_score=None if rep is None else float(rep),
    )


def merchant_from_json(d: dict) -> Merchant:
    return Merchant(
        merchant_id=str(d["merchant_id"]),
        schemes=frozenset(d.get("schemes") or ()),
        promises=tuple(Promise(str(p["promise_id"]), float(p["expect"]), p.get("unit", ""))
                       for p in d.get("promises") or ()),
        performances=tuple((str(p["promise_id"]), float(p["perform"]))
                           for p in d.get("performances") or ()),
        traffic_rank=int(d.get("traffic_rank", 1)),
        promo_tweet_count=int(d.get("promo_tweet_count", 0)),
        has_twitter_profile=bool(d.get("has_twitter_profile", False)),
        customer_ids=tuple(d.get("customer_ids") or ()),
        dummy_account_id=d.get("dummy_account_id"),
    )


def _read_jsonl(path: Path, root: Path, issues: list[Issue]):
    rel = str(path.relative_to(root))
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                issues.append(Issue(rel, lineno, f"malformed JSON: {exc.msg}"))
                continue
            if not isinstance(obj, dict):
                issues.append(Issue(rel, lineno, "expected a JSON object"))
                continue
            yield rel, lineno, obj


def parse_series(path: Path, root: Path, subject_id: str,
                 issues: list[Issue]) -> SnapshotSeries | None:
    snaps = []
    ok = True
    for rel, lineno, obj in _read_jsonl(path, root, issues):
        try:
            ts = parse_ts(obj["ts"])
            ids = frozenset(str(i) for i in obj["follower_ids"])
        except (KeyError, TypeError, ValueError) as exc:
            issues.append(Issue(rel, lineno, f"bad snapshot: {exc}"))
            ok = False
            continue
        if snaps and ts <= snaps[-1][0]:
            issues.append(Issue(rel, lineno, "snapshot timestamp not increasing"))
            ok = False
            continue
        snaps.append((ts, ids))
    return SnapshotSeries(subject_id, tuple(snaps)) if ok else None


def parse_dataset(path: str | os.PathLike) -> Dataset:
    """Read a dataset directory. Problems are collected in ``Dataset.errors``."""
    root = Path(path)
    issues: list[Issue] = []
    accounts: dict[str, AccountDossier] = {}
    merchants: dict[str, Merchant] = {}
    series: dict[str, SnapshotSeries] = {}
    labels: dict[str, str] = {}

    if not root.is_dir():
        return Dataset(errors=(Issue(str(root), 0, "not a directory"),))

    p = root / "accounts.jsonl"
    if p.exists():
        for rel, lineno, obj in _read_jsonl(p, root, issues):
            try:
                acc = account_from_json(obj)
            except (KeyError, TypeError, ValueError) as exc:
                issues.append(Issue(rel, lineno, f"bad account: {exc}"))
                continue
            if acc.account_id in accounts:
                issues.append(Issue(rel, lineno, f"duplicate account_id {acc.account_id!r}"))
                continue
            accounts[acc.account_id] = acc

    p = root / "merchants.jsonl"
    if p.exists():
        for rel, lineno, obj in _read_jsonl(p, root, issues):
            try:
                m = merchant_from_json(obj)
            except (KeyError, TypeError, ValueError) as exc:
                issues.append(Issue(rel, lineno, f"bad merchant: {exc}"))
                continue
            if m.merchant_id in merchants:
                issues.append(Issue(rel, lineno, f"duplicate merchant_id {m.merchant_id!r}"))
                continue
            merchants[m.merchant_id] = m

    snapdir = root / "snapshots"
    if snapdir.is_dir():
        for f in sorted(snapdir.glob("*.jsonl")):
            s = parse_series(f, root, f.stem, issues)
            if s is not None:
                series[s.subject_id] = s

    p = root / "labels.csv"
    if p.exists():
        with open(p, encoding="utf-8", newline="") as fh:
            for lineno, row in enumerate(csv.reader(fh), 1):
                if not row or (lineno == 1 and row[0].strip() == "account_id"):
                    continue
                if len(row) != 2:
                    issues.append(Issue("labels.csv", lineno, "expected account_id,label"))
                    continue
                acc_id, label = row[0].strip(), row[1].strip()
                if label not in LABELS:
                    issues.append(Issue("labels.csv", lineno, f"unknown label {label!r}"))
                elif acc_id in labels:
                    issues.append(Issue("labels.csv", lineno, f"duplicate label for {acc_id!r}"))
                else:
                    labels[acc_id] = label

    lex = root / "lexicons"
    spam = load_lexicon(lex / "spam_words.txt") if (lex / "spam_words.txt").exists() else frozenset()
    black = (load_lexicon(lex / "url_blacklist.txt")
             if (lex / "url_blacklist.txt").exists() else frozenset())

    observed_at = window_start = None
    p = root / "meta.json"
    if p.exists():
        try:
            meta = json.loads(p.read_text(encoding="utf-8"))
            if meta.get("observed_at"):
                observed_at = parse_ts(meta["observed_at"])
            if meta.get("window_start"):
                window_start = parse_ts(meta["window_start"])
        except (json.JSONDecodeError, ValueError, AttributeError) as exc:
            issues.append(Issue("meta.json", 1, f"bad metadata: {exc}"))

    return Dataset(accounts=accounts, merchants=merchants, series=series, labels=labels,
                   spam_words=spam, url_blacklist=black, observed_at=observed_at,
                   window_start=window_start, errors=tuple(issues))


# -- serialization --------------------------------------------------------------

def _dumps(obj) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def tweet_to_json(t: TweetRecord) -> dict:
    return {
        "ts": format_ts(t.timestamp), "text": t.text, "hashtags": list(t.hashtags),
        "mentions": list(t.mentions), "is_retweet": t.is_retweet,
        "retweeted_of": t.retweeted_of, "languages": sorted(t.languages),
    }


def account_to_json(a: AccountDossier) -> dict:
    return {
        "account_id": a.account_id, "created_at": format_ts(a.created_at), "bio": a.bio,
        "bio_urls": list(a.bio_urls), "post_count": a.post_count, "listed": a.listed,
        "verified": a.verified, "follower_count": a.follower_count,
        "friend_count": a.friend_count, "follower_ids": sorted(a.follower_ids),
        "friend_ids": sorted(a.friend_ids), "tweets": [tweet_to_json(t) for t in a.tweets],
        "reputation_score": a.reputation_score,
    }


def merchant_to_json(m: Merchant) -> dict:
    d = {
        "merchant_id": m.merchant_id, "schemes": sorted(m.schemes),
        "promises": [{"promise_id": p.promise_id, "expect": p.expect, "unit": p.unit}
                     for p in m.promises],
        "performances": [{"promise_id": pid, "perform": v} for pid, v in m.performances],
        "traffic_rank": m.traffic_rank, "promo_tweet_count": m.promo_tweet_count,
        "has_twitter_profile": m.has_twitter_profile,
    }
    if m.customer_ids:
        d["customer_ids"] = list(m.customer_ids)
    if m.dummy_account_id is not None:
        d["dummy_account_id"] = m.dummy_account_id
    return d


def write_series(series: SnapshotSeries, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for ts, ids in series.snapshots:
            fh.write(_dumps({"ts": format_ts(ts), "follower_ids": sorted(ids)}) + "\n")


def write_dataset(ds: Dataset, path: str | os.PathLike) -> None:
    """Write ``ds`` in the directory layout read by :func:`parse_dataset`."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    with open(root / "accounts.jsonl", "w", encoding="utf-8", newline="\n") as fh:
        for acc_id in sorted(ds.accounts):
            fh.write(_dumps(account_to_json(ds.accounts[acc_id])) + "\n")
    with open(root / "merchants.jsonl", "w", encoding="utf-8", newline="\n") as fh:
        for mid in sorted(ds.merchants):
            fh.write(_dumps(merchant_to_json(ds.merchants[mid])) + "\n")
    snapdir = root / "snapshots"
    snapdir.mkdir(exist_ok=True)
    for sid in sorted(ds.series):
        write_series(ds.series[sid], snapdir / f"{sid}.jsonl")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["account_id", "label"])
    for acc_id in sorted(ds.labels):
        w.writerow([acc_id, ds.labels[acc_id]])
    (root / "labels.csv").write_text(buf.getvalue(), encoding="utf-8")
    if ds.spam_words or ds.url_blacklist:
        (root / "lexicons").mkdir(exist_ok=True)
        for name, words in (("spam_words.txt", ds.spam_words),
                            ("url_blacklist.txt", ds.url_blacklist)):
            (root / "lexicons" / name).write_text(
                "".join(w + "\n" for w in sorted(words)), encoding="utf-8")
    if ds.observed_at is not None or ds.window_start is not None:
        meta = {"observed_at": format_ts(ds.observed_at) if ds.observed_at else None,
                "window_start": format_ts(ds.window_start) if ds.window_start else None}
        (root / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n",
                                        encoding="utf-8")
