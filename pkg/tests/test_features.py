import math
from datetime import timedelta

import numpy as np
import pytest

from shadowmarket.detection import features as F
from shadowmarket.model import Dataset

from helpers import T0, account, hours, series, tweet


def test_feature_table_shape():
    assert [len(F.FEATURE_SETS[s]) for s in "ABCD"] == [4, 2, 6, 6]
    assert len(F.FEATURE_NAMES) == 18 and len(set(F.FEATURE_NAMES)) == 18
    assert F.schedule_for("ABCD") == ("A", "AB", "ABC", "ABCD")
    assert F.parse_mask("dba") == "ABD"
    with pytest.raises(ValueError):
        F.parse_mask("AZ")


def _subject(**kw):
    return account("s", bio="music http://x.example", post_count=9, follower_count=10,
                   friend_count=40, friend_ids=frozenset({"f1", "f2"}),
                   follower_ids=frozenset({"f3"}), reputation_score=12.0, **kw)


def test_mask_a_is_four_dimensional():
    fv = F.extract_features(_subject(), None, set(), hours(100), "A")
    assert len(fv.values) == 4
    assert fv.as_dict() == {"has_bio": 1.0, "has_bio_url": 1.0, "num_posts": 9.0,
                            "social_reputation": 12.0}


def test_full_mask_values():
    tw = (tweet(0, text="free win", hashtags=("a",), languages=frozenset({"es"})),
          tweet(24, text="rt", is_retweet=True, retweeted_of="f1", mentions=("f2",),
                languages=frozenset({"en"})))
    subj = _subject(tweets=tw)
    sets = [{"a", "b"}] * 24 + [{"b"}] * 24  # one unfollow, on day 1 of 2
    peers = {"f1": frozenset({"es"}), "f2": frozenset({"ja"}), "f3": frozenset()}
    fv = F.extract_features(subj, series("s", sets), {"free"}, hours(72), "ABCD",
                            window_seconds=3 * 86400, peer_languages=peers)
    d = fv.as_dict()
    assert len(fv.values) == 18
    assert d["follower_friend_ratio"] == 0.25
    assert d["unfollow_entropy"] == 0.0
    assert d["hashtags_per_tweet"] == 0.5 and d["spam_words_per_tweet"] == 0.5
    assert d["num_languages"] == 2 and d["rts_per_tweet"] == 0.5
    assert d["rt_engagement"] == pytest.approx(0.5 * 1.0)
    assert d["mention_engagement"] == pytest.approx(0.5 * 1.0)
    assert d["language_overlap"] == 0.5  # f3 has no languages and is skipped
    assert d["time_since_last_tweet"] == 48 * 3600
    assert d["tweets_per_day"] == pytest.approx(2 / 3)


def test_no_tweets_gives_zero_rates_and_window():
    fv = F.extract_features(account("q"), series("q", [{"a"}, {"a"}]), set(), hours(10),
                            "CD", window_seconds=999.0)
    d = fv.as_dict()
    assert all(d[n] == 0.0 for n in F.FEATURE_SETS["C"])
    assert d["time_since_last_tweet"] == 999.0


def test_infinite_ratio_flagged():
    fv = F.extract_features(account("q", follower_count=7), None, set(), hours(1), "B")
    assert fv.ratio_infinite and fv.values[0] == 7.0
    assert all(math.isfinite(v) for v in fv.values)


def test_set_d_needs_series():
    with pytest.raises(F.MissingSeriesError):
        F.extract_features(account("q"), None, set(), hours(1), "D")


def test_missing_reputation_uses_proxy():
    fv = F.extract_features(account("q", follower_count=100), None, set(), hours(1), "A")
    assert 0.0 < fv.as_dict()["social_reputation"] < 100.0


def test_feature_matrix_rejects_mixed_masks():
    a = F.extract_features(account("q"), None, set(), hours(1), "A")
    b = F.extract_features(account("q"), None, set(), hours(1), "B")
    with pytest.raises(ValueError):
        F.feature_matrix([a, b])
    X, flags = F.feature_matrix([a, a])
    assert X.shape == (2, 4) and not flags.any()
