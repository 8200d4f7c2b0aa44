"""Tweet corpus loading and per-user grouping.

A corpus groups tweets for one topic by author.  Topical tweets are the
ones matched by the topic's collection filter; timeline tweets are extra
tweets by the same authors, merged in separately and kept apart so that
downstream stages can decide whether to use them.
"""

import json
import logging
from dataclasses import dataclass, field, replace

log = logging.getLogger(__name__)

REQUIRED_TWEET_KEYS = ("id", "user_id", "text")


class CorpusFormatError(ValueError):
    """Raised for malformed tweet or label files, naming the offending line."""


@dataclass(frozen=True)
class Tweet:
    id: str
    user_id: str
    text: str
    topic: str
    retweeted_user: str | None = None
    timestamp: str | None = None


@dataclass(frozen=True)
class UserRecord:
    user_id: str
    topical_tweets: tuple[Tweet, ...]
    timeline_tweets: tuple[Tweet, ...] = ()
    gold_label: int | None = None

    def tweets(self, use_timeline: bool = False) -> tuple[Tweet, ...]:
        """Topical tweets, optionally extended with timeline tweets."""
        if use_timeline:
            return self.topical_tweets + self.timeline_tweets
        return self.topical_tweets


@dataclass(frozen=True)
class UserCorpus:
    topic: str
    users: dict[str, UserRecord] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.users)

    def sorted_user_ids(self) -> list[str]:
        return sorted(self.users)


def _parse_tweet_line(line: str, lineno: int, topic: str) -> Tweet:
    try:
        raw = json.loads(line)
    except json.JSONDecodeError as exc:
        raise CorpusFormatError(f"line {lineno}: invalid JSON ({exc.msg})") from None
    if not isinstance(raw, dict):
        raise CorpusFormatError(f"line {lineno}: expected a JSON object")
    for key in REQUIRED_TWEET_KEYS:
        if key not in raw:
            raise CorpusFormatError(f"line {lineno}: missing required key {key!r}")
        if not isinstance(raw[key], str):
            raise CorpusFormatError(f"line {lineno}: key {key!r} must be a string")
    if not raw["id"] or not raw["user_id"]:
        raise CorpusFormatError(f"line {lineno}: empty id or user_id")
    retweeted = raw.get("retweeted_user")
    if retweeted is not None and (not isinstance(retweeted, str) or not retweeted):
        raise CorpusFormatError(f"line {lineno}: retweeted_user must be a non-empty string")
    timestamp = raw.get("timestamp")
    if timestamp is not None and not isinstance(timestamp, str):
        raise CorpusFormatError(f"line {lineno}: timestamp must be a string")
    return Tweet(
        id=raw["id"],
        user_id=raw["user_id"],
        text=raw["text"],
        topic=topic,
        retweeted_user=retweeted,
        timestamp=timestamp,
    )


def _read_tweet_file(path, topic: str) -> dict[str, Tweet]:
    """Read a JSONL tweet file into an id-keyed dict, deduplicating exact repeats.

    Blank lines are ignored.  Two records with the same id must be identical;
    a conflicting duplicate is an error.
    """
    by_id: dict[str, Tweet] = {}
    first_line: dict[str, int] = {}
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            tweet = _parse_tweet_line(line, lineno, topic)
            seen = by_id.get(tweet.id)
            if seen is None:
                by_id[tweet.id] = tweet
                first_line[tweet.id] = lineno
            elif seen != tweet:
                raise CorpusFormatError(
                    f"line {lineno}: tweet id {tweet.id!r} conflicts with line "
                    f"{first_line[tweet.id]} (same id, different content)"
                )
    return by_id


def load_corpus(path, topic: str) -> UserCorpus:
    """Load a JSONL tweet file and group tweets by author.

    Each line is one JSON object with keys ``id``, ``user_id``, ``text`` and
    optional ``retweeted_user`` / ``timestamp``.  The result is independent of
    line order: users and their tweets are sorted by id.
    """
    by_id = _read_tweet_file(path, topic)
    grouped: dict[str, list[Tweet]] = {}
    for tweet in by_id.values():
        grouped.setdefault(tweet.user_id, []).append(tweet)
    users = {
        uid: UserRecord(uid, tuple(sorted(tweets, key=lambda t: t.id)))
        for uid, tweets in sorted(grouped.items())
    }
    return UserCorpus(topic=topic, users=users)


def merge_timeline(corpus: UserCorpus, timeline_path) -> UserCorpus:
    """Attach timeline tweets from a JSONL file to the users they belong to.

    Tweets for user ids absent from the corpus are skipped (counted in a
    warning).  Tweets whose id already appears in the user's topical or
    timeline set are dropped, so merging is idempotent.
    """
    by_id = _read_tweet_file(timeline_path, corpus.topic)
    incoming: dict[str, list[Tweet]] = {}
    skipped = 0
    for tweet in by_id.values():
        if tweet.user_id in corpus.users:
            incoming.setdefault(tweet.user_id, []).append(tweet)
        else:
            skipped += 1
    if skipped:
        log.warning("merge_timeline: skipped %d tweets from unknown users", skipped)
    users = {}
    for uid, record in corpus.users.items():
        extra = incoming.get(uid)
        if not extra:
            users[uid] = record
            continue
        known = {t.id for t in record.topical_tweets} | {t.id for t in record.timeline_tweets}
        fresh = [t for t in extra if t.id not in known]
        merged = tuple(sorted(record.timeline_tweets + tuple(fresh), key=lambda t: t.id))
        users[uid] = replace(record, timeline_tweets=merged)
    return UserCorpus(topic=corpus.topic, users=users)


def select_active_users(corpus: UserCorpus, n: int, min_tweets: int = 1) -> UserCorpus:
    """Keep the n users with the most topical tweets.

    Users with fewer than min_tweets topical tweets never qualify.  Ties in
    tweet count break by ascending user_id, so selection is deterministic.
    May return fewer than n users.
    """
    if n < 0:
        raise ValueError(f"n must be non-negative, got {n}")
    qualified = [r for r in corpus.users.values() if len(r.topical_tweets) >= min_tweets]
    qualified.sort(key=lambda r: (-len(r.topical_tweets), r.user_id))
    picked = qualified[:n]
    return UserCorpus(topic=corpus.topic, users={r.user_id: r for r in sorted(picked, key=lambda r: r.user_id)})


def with_labels(corpus: UserCorpus, labels: dict[str, int]) -> UserCorpus:
    """Return a copy of the corpus with gold labels attached where known."""
    users = {
        uid: replace(record, gold_label=labels[uid]) if uid in labels else record
        for uid, record in corpus.users.items()
    }
    return UserCorpus(topic=corpus.topic, users=users)


def write_tweets_jsonl(tweets, path) -> None:
    """Write tweets as one JSON object per line (the load_corpus format)."""
    with open(path, "w", encoding="utf-8") as handle:
        for tweet in tweets:
            raw = {"id": tweet.id, "user_id": tweet.user_id, "text": tweet.text}
            if tweet.retweeted_user is not None:
                raw["retweeted_user"] = tweet.retweeted_user
            if tweet.timestamp is not None:
                raw["timestamp"] = tweet.timestamp
            handle.write(json.dumps(raw, ensure_ascii=False) + "\n")


def load_gold_labels(path) -> dict[str, int]:
    """Read a user_id<TAB>label file; labels must be 0 or 1."""
    labels: dict[str, int] = {}
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 2:
                raise CorpusFormatError(f"line {lineno}: expected user_id<TAB>label")
            uid, raw_label = parts
            if raw_label not in ("0", "1"):
                raise CorpusFormatError(f"line {lineno}: label must be 0 or 1, got {raw_label!r}")
            label = int(raw_label)
            if uid in labels and labels[uid] != label:
                raise CorpusFormatError(f"line {lineno}: conflicting label for user {uid!r}")
            labels[uid] = label
    return labels


def save_gold_labels(labels: dict[str, int], path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for uid in sorted(labels):
            handle.write(f"{uid}\t{labels[uid]}\n")
