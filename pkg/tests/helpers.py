from datetime import datetime, timedelta, timezone

from shadowmarket.model import AccountDossier, SnapshotSeries, TweetRecord

T0 = datetime(2014, 7, 18, tzinfo=timezone.utc)


def hours(h: float) -> datetime:
    return T0 + timedelta(hours=h)


def account(aid="a", **kw) -> AccountDossier:
    kw.setdefault("created_at", T0 - timedelta(days=100))
    return AccountDossier(account_id=aid, **kw)


def tweet(h=0.0, **kw) -> TweetRecord:
    return TweetRecord(timestamp=hours(h), **kw)


def series(sid, sets, step_hours=1.0) -> SnapshotSeries:
    return SnapshotSeries(sid, tuple((hours(i * step_hours), frozenset(s))
                                     for i, s in enumerate(sets)))
