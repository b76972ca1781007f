"""The 18 detection features, grouped into the incremental sets A-D."""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from datetime import datetime
from typing import Iterable, Mapping

import numpy as np

from .. import metrics
from ..market import reputation_proxy
from ..model import AccountDossier, Dataset, SnapshotSeries, daily_unfollow_counts

FEATURE_SETS: dict[str, tuple[str, ...]] = {
    "A": ("has_bio", "has_bio_url", "num_posts", "social_reputation"),
    "B": ("follower_friend_ratio", "num_followers"),
    "C": ("hashtags_per_tweet", "spam_words_per_tweet", "tweet_length", "num_languages",
          "rts_per_tweet", "mentions_per_tweet"),
    "D": ("unfollow_entropy", "rt_engagement", "mention_engagement", "language_overlap",
          "time_since_last_tweet", "tweets_per_day"),
}
FEATURE_NAMES: tuple[str, ...] = tuple(n for s in "ABCD" for n in FEATURE_SETS[s])
DEFAULT_SCHEDULE = ("A", "AB", "ABC", "ABCD")

_URL_IN_TEXT = re.compile(r"(?:https?://|www\.)\S+", re.IGNORECASE)


class MissingSeriesError(ValueError):
    pass


def parse_mask(mask: str | Iterable[str]) -> str:
    """Normalise a set mask to canonical order, e.g. 'dba' -> 'ABD'."""
    letters = {c.upper() for c in (mask if isinstance(mask, str) else "".join(mask))}
    unknown = letters - set(FEATURE_SETS)
    if unknown or not letters:
        raise ValueError(f"bad feature-set mask {mask!r}")
    return "".join(s for s in "ABCD" if s in letters)


def mask_columns(mask: str) -> list[int]:
    mask = parse_mask(mask)
    return [i for i, name in enumerate(FEATURE_NAMES)
            if any(name in FEATURE_SETS[s] for s in mask)]


def mask_names(mask: str) -> tuple[str, ...]:
    return tuple(FEATURE_NAMES[i] for i in mask_columns(mask))


def schedule_for(sets: str) -> tuple[str, ...]:
    """Incremental prefixes ending at ``sets``: 'ABC' -> ('A', 'AB', 'ABC')."""
    sets = parse_mask(sets)
    return tuple(sets[:i] for i in range(1, len(sets) + 1))


@dataclass(frozen=True)
class FeatureVector:
    account_id: str
    values: tuple[float, ...]
    set_mask: str
    # friend_count == 0 with followers > 0; ``values`` then holds follower_count
    # until the training-time cap is applied
    ratio_infinite: bool = False

    @property
    def names(self) -> tuple[str, ...]:
        return mask_names(self.set_mask)

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.names, self.values))


def account_languages(acc: AccountDossier) -> frozenset[str]:
    return frozenset().union(*(t.languages for t in acc.tweets)) if acc.tweets else frozenset()


def extract_features(subject: AccountDossier, series: SnapshotSeries | None,
                     spam_lexicon: Iterable[str], now: datetime, mask: str = "ABCD", *,
                     window_seconds: float = 0.0,
                     peer_languages: Mapping[str, frozenset[str]] | None = None
                     ) -> FeatureVector:
    """Compute the masked feature vector for one account.

    ``peer_languages`` maps account ids to the languages they tweet in; the
    language-overlap feature uses the subject's friends and followers found
    there (peers without observed languages are skipped). A missing
    reputation score is replaced by the logistic proxy so the vector stays
    finite.
    """
    mask = parse_mask(mask)
    vals: dict[str, float] = {}
    infinite = False
    if "A" in mask:
        rep = subject.reputation_score
        vals.update(
            has_bio=float(bool(subject.bio and subject.bio.strip())),
            has_bio_url=float(bool(subject.bio_urls) or bool(
                subject.bio and _URL_IN_TEXT.search(subject.bio))),
            num_posts=float(subject.post_count),
            social_reputation=float(rep if rep is not None else reputation_proxy(subject)),
        )
    if "B" in mask:
        ratio = metrics.follower_friend_ratio(subject)
        if math.isinf(ratio):
            infinite = True
            ratio = float(subject.follower_count)
        vals.update(follower_friend_ratio=ratio, num_followers=float(subject.follower_count))
    if "C" in mask or "D" in mask:
        cs = metrics.content_stats(subject, spam_lexicon, now, window_seconds)
    if "C" in mask:
        vals.update(
            hashtags_per_tweet=cs.hashtags_per_tweet,
            spam_words_per_tweet=cs.spam_words_per_tweet,
            tweet_length=cs.mean_tweet_length,
            num_languages=float(cs.num_languages),
            rts_per_tweet=cs.rt_fraction,
            mentions_per_tweet=cs.mentions_per_tweet,
        )
    if "D" in mask:
        if series is None:
            raise MissingSeriesError(f"{subject.account_id}: set D needs a snapshot series")
        peers = peer_languages or {}
        langs = [peers[p] for p in sorted(subject.friend_ids | subject.follower_ids)
                 if peers.get(p)]
        vals.update(
            unfollow_entropy=metrics.unfollow_entropy(daily_unfollow_counts(series)),
            rt_engagement=metrics.retweet_engagement(subject).value,
            mention_engagement=metrics.mention_engagement(subject).value,
            language_overlap=metrics.language_overlap(account_languages(subject), langs),
            time_since_last_tweet=cs.seconds_since_last_tweet,
            tweets_per_day=cs.tweets_per_day,
        )
    values = tuple(vals[n] for n in mask_names(mask))
    return FeatureVector(subject.account_id, values, mask, infinite)


def extract_dataset(ds: Dataset, account_ids: Iterable[str], mask: str = "ABCD"
                    ) -> list[FeatureVector]:
    """Feature vectors for ``account_ids`` using the dataset's lexicon and clock."""
    mask = parse_mask(mask)
    now = ds.reference_time()
    window = ds.window_seconds()
    peers = {aid: account_languages(a) for aid, a in ds.accounts.items()} if "D" in mask else None
    out = []
    for aid in account_ids:
        acc = ds.accounts[aid]
        series = ds.series.get(aid)
        out.append(extract_features(acc, series, ds.spam_words, now, mask,
                                    window_seconds=window, peer_languages=peers))
    return out


def feature_matrix(vectors: list[FeatureVector]) -> tuple[np.ndarray, np.ndarray]:
    """Stack vectors into (values, infinite-ratio flags)."""
    if not vectors:
        return np.zeros((0, 0)), np.zeros(0, dtype=bool)
    masks = {v.set_mask for v in vectors}
    if len(masks) != 1:
        raise ValueError(f"mixed set masks {sorted(masks)}")
    X = np.array([v.values for v in vectors], dtype=float)
    flags = np.array([v.ratio_infinite for v in vectors], dtype=bool)
    return X, flags
