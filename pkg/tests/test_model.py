import json
from datetime import timedelta

import pytest

from shadowmarket.model import (Dataset, DatasetError, InsufficientDataError, Merchant,
                                Promise, SnapshotSeries, daily_unfollow_counts, diff_snapshots,
                                format_ts, parse_dataset, parse_ts, write_dataset)

from helpers import T0, account, hours, series, tweet


def test_timestamps_round_trip():
    s = "2014-07-18T05:30:00Z"
    assert format_ts(parse_ts(s)) == s
    assert parse_ts("2014-07-18T07:30:00+02:00") == parse_ts(s)


def test_naive_timestamp_read_as_utc():
    assert parse_ts("2014-07-18T05:30:00") == parse_ts("2014-07-18T05:30:00Z")
    with pytest.raises(ValueError):
        parse_ts("yesterday")


@pytest.mark.parametrize("prev,nxt,gained,lost", [
    ({"a", "b"}, {"a", "b"}, set(), set()),
    ({"a", "b"}, {"b", "c"}, {"c"}, {"a"}),
    (set(), {"x"}, {"x"}, set()),
])
def test_diff_snapshots(prev, nxt, gained, lost):
    d = diff_snapshots(prev, nxt)
    assert d.gained == gained and d.lost == lost


def test_daily_counts_constant_set():
    s = series("s", [{"a", "b"}] * (15 * 6), step_hours=4)
    counts = daily_unfollow_counts(s)
    assert len(counts) == 15
    assert all(c == 0 for _, c in counts)


def test_daily_counts_single_loss_day_three():
    sets = [{"a", "b"}] * (15 * 24)
    loss = 3 * 24 + 5
    sets = [s if i < loss else {"b"} for i, s in enumerate(sets)]
    counts = dict(daily_unfollow_counts(series("s", sets)))
    assert counts[3] == 1
    assert sum(counts.values()) == 1


def test_lost_and_regained_same_day_counts_once():
    sets = [{"a", "b"}] * 48
    sets[30] = {"b"}  # gone for one hour on day 1
    counts = dict(daily_unfollow_counts(series("s", sets)))
    assert counts == {0: 0, 1: 1}


def test_daily_counts_need_two_snapshots():
    with pytest.raises(InsufficientDataError):
        daily_unfollow_counts(series("s", [{"a"}]))


def test_series_requires_increasing_timestamps():
    with pytest.raises(ValueError):
        SnapshotSeries("s", ((hours(1), frozenset()), (hours(0), frozenset())))


def test_account_validation():
    with pytest.raises(ValueError):
        account(follower_count=-1)
    with pytest.raises(ValueError):
        account(reputation_score=120.0)
    with pytest.raises(ValueError):
        account(tweets=(tweet(2), tweet(1)))
    with pytest.raises(ValueError):
        tweet(is_retweet=True)


def test_empty_directory(tmp_path):
    ds = parse_dataset(tmp_path)
    assert len(ds.accounts) == 0 and ds.errors == ()


def test_one_account(tmp_path):
    (tmp_path / "accounts.jsonl").write_text(
        json.dumps({"account_id": "a1", "created_at": "2014-01-01T00:00:00Z"}) + "\n")
    ds = parse_dataset(tmp_path)
    assert list(ds.accounts) == ["a1"] and not ds.errors


def test_decreasing_snapshot_names_line(tmp_path):
    (tmp_path / "snapshots").mkdir()
    (tmp_path / "snapshots" / "s1.jsonl").write_text(
        '{"ts":"2014-07-18T02:00:00Z","follower_ids":["a"]}\n'
        '{"ts":"2014-07-18T01:00:00Z","follower_ids":["a"]}\n')
    ds = parse_dataset(tmp_path)
    assert len(ds.errors) == 1
    err = ds.errors[0]
    assert err.file.endswith("s1.jsonl") and err.line == 2
    assert "not increasing" in err.reason
    with pytest.raises(DatasetError):
        ds.raise_for_errors()


def test_malformed_and_duplicate_lines(tmp_path):
    good = json.dumps({"account_id": "a1", "created_at": "2014-01-01T00:00:00Z"})
    (tmp_path / "accounts.jsonl").write_text(f"{good}\n{{oops\n{good}\n")
    (tmp_path / "labels.csv").write_text("account_id,label\na1,spammy\n")
    ds = parse_dataset(tmp_path)
    lines = sorted((e.file, e.line) for e in ds.errors)
    assert lines == [("accounts.jsonl", 2), ("accounts.jsonl", 3), ("labels.csv", 2)]


def test_write_parse_round_trip(tmp_path):
    acc = account("a1", bio="hi", follower_count=3, friend_count=4,
                  follower_ids=frozenset({"x"}), tweets=(tweet(1, text="yo", hashtags=("t",)),),
                  reputation_score=12.5)
    m = Merchant("m1", frozenset({"premium"}), (Promise("p", 1000.0),), (("p", 738.0),),
                 traffic_rank=10, promo_tweet_count=5, customer_ids=("a1",))
    ds = Dataset(accounts={"a1": acc}, merchants={"m1": m},
                 series={"a1": series("a1", [{"x"}, {"x", "y"}])},
                 labels={"a1": "suspicious"}, spam_words=frozenset({"free"}),
                 observed_at=T0 + timedelta(days=15), window_start=T0)
    write_dataset(ds, tmp_path)
    back = parse_dataset(tmp_path)
    assert not back.errors
    assert back.accounts["a1"] == acc
    assert back.merchants["m1"] == m
    assert back.series["a1"] == ds.series["a1"]
    assert back.labels == ds.labels and back.spam_words == ds.spam_words
    assert back.observed_at == ds.observed_at and back.window_seconds() == 15 * 86400
